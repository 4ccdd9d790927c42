//! End-to-end scenario pipeline: configuration to audited artifacts.
//!
//! Everything the library can do is also reachable through a declarative
//! TOML scenario: the runner samples the ensemble, evolves it at each
//! dissipation rate, certifies no-return rings and the phase cylinder,
//! extrapolates the vanishing-dissipation limit, and writes a deterministic
//! artifact tree (`meta.json`, `audits.json`, `certificates.json`, per-rate
//! CSV records and snapshots, `sweep.csv`). A separate auditor reopens that
//! tree from disk alone and re-verifies the books — the same checks the
//! `phaseflow audit` subcommand runs.
//!
//! Run with `cargo run --release --example scenario_pipeline`.

use phaseflow::config::ScenarioConfig;
use phaseflow::runner::{audit_run_dir, sweep_scenario, RunnerOptions};
use std::error::Error;

const SCENARIO: &str = r#"
name = "pipeline-demo"
dimension = 1

[potential]
family = "harmonic"
k2 = 1.0

[initial]
family = "gaussian"
particles = 200
seed = 23
sigma = 0.05
alpha0 = 0.4

[flow]
eps_list = [0.4, 0.2, 0.1]
horizon = 4.0
steps_list = [32, 64]

[probes]
alphas = [0.05]
bumps = [{ center = [0.0, 0.0], radius = 0.5 }]
window = { start = 1.0, end = 3.0, ramp = 0.75 }
cylinder_radius = 1.0

[output]
directory = "unused"
"#;

fn main() -> Result<(), Box<dyn Error>> {
    let cfg = ScenarioConfig::from_toml(SCENARIO)?;
    let out = std::env::temp_dir().join("phaseflow-pipeline-demo");
    if out.exists() {
        std::fs::remove_dir_all(&out)?;
    }

    // Full sweep: runs every rate, certificates, extrapolation, refinement.
    let opts = RunnerOptions {
        seed: None,
        out_dir: Some(out.clone()),
    };
    let report = sweep_scenario(&cfg, &opts)?;
    println!("{}", report.render());
    assert!(report.all_passed(), "a live audit failed");

    // Reopen the artifact tree cold and re-verify everything from disk.
    let audit = audit_run_dir(&out)?;
    println!("--- cold re-audit of {} ---", out.display());
    for line in &audit.audits {
        println!(
            "  {} {}",
            if line.passed { "ok  " } else { "FAIL" },
            line.name
        );
    }
    assert!(audit.all_passed(), "artifact audit failed");

    println!("\nartifacts:");
    let mut names: Vec<_> = std::fs::read_dir(&out)?
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    for name in names {
        println!("  {}", name.to_string_lossy());
    }
    Ok(())
}
