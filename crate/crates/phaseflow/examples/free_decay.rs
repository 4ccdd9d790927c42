//! Pure-transport decay law.
//!
//! With no forces every particle moves at constant speed, so the path length
//! grows linearly and each weight decays as `exp(-eps |p| t)`. For a
//! unit-speed ensemble the total mass must therefore equal `exp(-eps t)` at
//! every time — with no discretization error at all, because the scheme
//! integrates straight lines exactly. This example checks that law at two
//! dissipation rates and prints the worst deviation.
//!
//! Run with `cargo run --release --example free_decay`.

use phaseflow::flow::{evolve, FlowConfig};
use phaseflow::{
    ExternalPotential, HamiltonianModel, ParticleMeasure, PhasePoint, WeightedParticle,
};
use std::error::Error;

fn main() -> Result<(), Box<dyn Error>> {
    let n = 500;
    let model = HamiltonianModel::without_interaction(1, ExternalPotential::zero());

    // A line of unit-momentum particles; weights sum to one.
    let particles: Vec<WeightedParticle> = (0..n)
        .map(|i| {
            let q = -0.5 + i as f64 / (n - 1) as f64;
            WeightedParticle::new(PhasePoint::new(&[1.0], &[q]), 1.0 / n as f64)
        })
        .collect();
    let mu0 = ParticleMeasure::new(1, particles);

    println!("free transport, {n} unit-speed particles, horizon 2");
    println!(
        "{:>6} {:>8} {:>22} {:>22} {:>10}",
        "rate", "time", "measured mass", "exp(-rate t)", "error"
    );

    for eps in [0.5, 0.1] {
        let cfg = FlowConfig::new(eps, 2.0, 8);
        let record = evolve(&mu0, &model, &cfg)?;
        assert!(record.is_complete());

        let mut worst = 0.0_f64;
        for row in &record.rows {
            let exact = (-eps * row.time).exp();
            let err = (row.mass - exact).abs();
            worst = worst.max(err);
            if (row.time * 2.0).fract() == 0.0 {
                println!(
                    "{:>6} {:>8.3} {:>22.16} {:>22.16} {:>10.2e}",
                    eps, row.time, row.mass, exact, err
                );
            }
        }
        println!("  worst deviation over the whole grid: {worst:.2e}");
        assert!(worst < 1e-12, "decay law violated");
    }

    println!("mass follows exp(-rate t) to machine precision");
    Ok(())
}
