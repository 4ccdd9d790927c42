//! Resolution refinement: trajectory deviations and weak residuals.
//!
//! The scheme freezes the mean field on each of `n` equal intervals, so its
//! splitting error is O(1/n) for trajectories that stay in a bounded region.
//! Two independent diagnostics verify that the implementation actually
//! converges at that order as `n` doubles:
//!
//! * pathwise: the sup deviation between the same particle run at `n` and
//!   `2n` steps, over the cohort that stays inside a phase ball — halving
//!   steps should roughly halve the deviation;
//! * weak form: the time-integrated residual of the evolution equation
//!   against smooth windowed test functions, which sees the measure as a
//!   whole rather than any single path.
//!
//! Run with `cargo run --release --example scheme_refinement`.

use phaseflow::convergence::{trajectory_closeness, weak_residual};
use phaseflow::flow::{evolve, FlowConfig};
use phaseflow::sampler::{sample_initial_measure, EnsembleShape, SamplerSpec};
use phaseflow::testfn::{Bump, TimeWindow};
use phaseflow::{ExternalPotential, HamiltonianModel, InteractionKernel};
use std::error::Error;

fn main() -> Result<(), Box<dyn Error>> {
    let dim = 2;
    let model = HamiltonianModel::with_interaction(
        dim,
        InteractionKernel::new(1.0, 0.25)?,
        ExternalPotential::polynomial(0.5, -0.05, 4.0)?,
    );
    let spec = SamplerSpec {
        dim,
        particles: 300,
        shape: EnsembleShape::Gaussian { sigma: 0.3 },
        momentum_offset: vec![],
        position_offset: vec![],
        alpha0: 0.4,
    };
    let mu0 = sample_initial_measure(&spec, 51)?;
    let base = FlowConfig::new(0.1, 3.0, 32);

    // Pathwise study across three doublings.
    println!("pathwise deviation between n and 2n steps (cohort inside |x| <= 6):");
    let mut previous = f64::INFINITY;
    for n in [16usize, 32, 64] {
        let report = trajectory_closeness(&model, &mu0, &base, n, 2 * n, 6.0, base.horizon)?;
        let ratio = previous / report.deviation;
        println!(
            "  n = {:>3} vs {:>3}: deviation {:.6e} over {} particles{}",
            n,
            2 * n,
            report.deviation,
            report.cohort,
            if previous.is_finite() {
                format!(", ratio {ratio:.2}")
            } else {
                String::new()
            }
        );
        assert!(!report.empty_cohort && report.deviation < previous);
        previous = report.deviation;
    }

    // Weak-form study: residual against a battery of bumps under one smooth
    // time window, at two resolutions.
    let window = TimeWindow::new(0.5, 2.5, 0.5)?;
    let bumps = [
        Bump::new(vec![0.0, 0.0, 0.0, 0.0], 3.0)?,
        Bump::new(vec![0.3, 0.0, 0.3, 0.0], 2.5)?,
        Bump::new(vec![0.0, -0.3, 0.0, 0.3], 2.5)?,
    ];

    println!("\nweak residual, max over {} test bumps:", bumps.len());
    let mut residuals = Vec::new();
    for steps in [64usize, 128] {
        let record = evolve(
            &mu0,
            &model,
            &FlowConfig {
                steps,
                ..base.clone()
            },
        )?;
        assert!(record.is_complete());
        let worst = bumps
            .iter()
            .map(|b| weak_residual(&record, &model, b, &window, base.eps).abs())
            .fold(0.0_f64, f64::max);
        println!("  n = {steps:>3}: residual {worst:.6e}");
        residuals.push(worst);
    }
    let ratio = residuals[0] / residuals[1];
    println!("  halving the interval shrank the residual by {ratio:.2}x");
    assert!(ratio > 1.5, "first-order decay expected");
    Ok(())
}
