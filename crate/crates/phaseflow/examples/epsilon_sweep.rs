//! Vanishing-dissipation sweep with Richardson extrapolation.
//!
//! The dissipation removes mass at rate `eps |v|` along every trajectory, so
//! as `eps` shrinks the evolved measures climb back toward conservative
//! transport. For small `eps` the mass deficit is linear in the rate up to
//! `O(eps^2)` terms, which makes the halving sequence ideal for Richardson
//! extrapolation: the limit estimate from the last two rates cancels the
//! leading term. In a harmonic trap nothing escapes, so the true limit mass
//! is exactly 1 at every time — a known answer the extrapolation can be
//! scored against.
//!
//! Run with `cargo run --release --example epsilon_sweep`.

use phaseflow::convergence::{epsilon_sweep, limit_mass_monotonicity, SweepPlan};
use phaseflow::sampler::{sample_initial_measure, EnsembleShape, SamplerSpec};
use phaseflow::{ExternalPotential, HamiltonianModel};
use std::error::Error;

fn main() -> Result<(), Box<dyn Error>> {
    let model = HamiltonianModel::without_interaction(1, ExternalPotential::harmonic(1.0));
    let spec = SamplerSpec {
        dim: 1,
        particles: 400,
        shape: EnsembleShape::Gaussian { sigma: 0.05 },
        momentum_offset: vec![],
        position_offset: vec![],
        alpha0: 0.4,
    };
    let mu0 = sample_initial_measure(&spec, 23)?;

    let plan = SweepPlan::new(vec![0.4, 0.2, 0.1, 0.05], vec![64], 10.0);
    let report = epsilon_sweep(&plan, &mu0, &model)?;

    // Mass matrix at a handful of probe times.
    println!("mass by dissipation rate (harmonic trap, nothing escapes):");
    print!("{:>8}", "time");
    for eps in &report.eps {
        print!(" {:>12}", format!("rate {eps}"));
    }
    println!(" {:>12} {:>12}", "limit", "error est.");
    let stride = report.probe_times.len() / 8;
    for (j, t) in report.probe_times.iter().enumerate() {
        if j % stride != stride - 1 {
            continue;
        }
        print!("{t:>8.3}");
        for row in &report.masses {
            print!(" {:>12.8}", row[j]);
        }
        println!(
            " {:>12.8} {:>12.2e}",
            report.extrapolated[j], report.error_estimate[j]
        );
    }

    // Scoring against the exact limit.
    let worst = report
        .extrapolated
        .iter()
        .map(|m| (m - 1.0).abs())
        .fold(0.0_f64, f64::max);
    println!("\nworst |extrapolated - 1| over all probe times: {worst:.2e}");
    assert!(
        worst < 2e-3,
        "extrapolation should land within 2e-3 of the exact limit"
    );

    // Structural audits: each run's mass is nonincreasing in time, and the
    // limit curve inherits monotonicity up to the error estimate.
    assert!(report.monotone_in_time.iter().all(|&ok| ok));
    let audit = limit_mass_monotonicity(&report);
    let tightest = audit.slacks.iter().cloned().fold(f64::INFINITY, f64::min);
    println!(
        "limit curve monotone within error: {} (tightest slack {tightest:.2e})",
        audit.ok
    );
    assert!(audit.ok);

    // The successive-difference columns quantify the linear-in-rate regime.
    println!("\nsuccessive |mass(eps_k) - mass(eps_k+1)| at the horizon:");
    let j = report.probe_times.len() - 1;
    for (k, diffs) in report.successive_diffs.iter().enumerate() {
        println!(
            "  {} -> {}: {:.6e}",
            report.eps[k],
            report.eps[k + 1],
            diffs[j]
        );
    }
    Ok(())
}
