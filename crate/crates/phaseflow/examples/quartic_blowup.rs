//! Finite-time escape under a repulsive quartic potential.
//!
//! `Phi(q) = -|q|^4` pushes everything outward and the acceleration grows
//! like `|q|^3`, so trajectories reach any finite radius in finite time (the
//! travel time to infinity converges). The integrator tracks each particle
//! until its adaptive step collapses at the domain edge, classifies the exit,
//! and refines the crossing time of the escape radius. This example times one
//! particle's escape against the energy-conservation prediction, then evolves
//! a small cloud and watches the alive count and total mass drain away.
//!
//! Run with `cargo run --release --example quartic_blowup`.

use phaseflow::flow::{escape_time, evolve, EscapeOutcome, FlowConfig};
use phaseflow::sampler::{sample_initial_measure, EnsembleShape, SamplerSpec};
use phaseflow::{ExternalPotential, HamiltonianModel, ParticleMeasure, PhasePoint};
use std::error::Error;

/// Travel time from rest at `q0` to the phase-space sphere `|p|^2 + |q|^2 =
/// x_max^2` under `r'' = 4 r^3` (escapes are declared on the phase norm, not
/// the position alone). The conserved energy `0.5 r'^2 - r^4 = -q0^4` gives
/// the speed at every radius, so the stopping position solves
/// `2 (q*^4 - q0^4) + q*^2 = x_max^2` in closed form and the time is a fine
/// Simpson rule on `int dr / sqrt(2 (r^4 - q0^4))`, with a square-root
/// substitution absorbing the singular left endpoint.
fn rest_escape_reference(q0: f64, x_max: f64) -> f64 {
    let c = x_max * x_max + 2.0 * q0.powi(4);
    let q_star = ((-1.0 + (1.0 + 8.0 * c).sqrt()) / 4.0).sqrt();
    let speed2 = |r: f64| 2.0 * (r.powi(4) - q0.powi(4));
    // r = q0 + s^2, dr = 2 s ds: the integrand 2 s / sqrt(speed2) is finite
    // at s = 0 because speed2 ~ 8 q0^3 s^2 there.
    let s_max = (q_star - q0).sqrt();
    let g = |s: f64| {
        if s == 0.0 {
            2.0 / (8.0 * q0.powi(3)).sqrt()
        } else {
            2.0 * s / speed2(q0 + s * s).sqrt()
        }
    };
    let n = 200_000;
    let h = s_max / n as f64;
    let mut acc = g(0.0) + g(s_max);
    for k in 1..n {
        acc += g(k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    acc * h / 3.0
}

fn main() -> Result<(), Box<dyn Error>> {
    let model =
        HamiltonianModel::without_interaction(1, ExternalPotential::polynomial(0.0, -1.0, 4.0)?);
    let empty = ParticleMeasure::new(1, Vec::new());

    let mut cfg = FlowConfig::new(0.0, 6.0, 1);
    cfg.x_max = 30.0;

    // One particle released from rest at q = 1.
    let x0 = PhasePoint::new(&[0.0], &[1.0]);
    let reference = rest_escape_reference(1.0, cfg.x_max);
    match escape_time(&x0, &model, &empty, &cfg)? {
        EscapeOutcome::Escaped(t) => {
            let gap = (t - reference).abs() / reference;
            println!("single particle from rest at q = 1:");
            println!(
                "  escape time {t:.6}, energy-method reference {reference:.6}, rel. gap {gap:.2e}"
            );
            assert!(gap < 1e-2, "escape time disagrees with the energy method");
        }
        EscapeOutcome::BoundedThrough(t) => panic!("expected an escape, but bounded through {t}"),
    }

    // A confined contrast case: the same release in a harmonic well stays put.
    let well = HamiltonianModel::without_interaction(1, ExternalPotential::harmonic(1.0));
    match escape_time(&x0, &well, &empty, &cfg)? {
        EscapeOutcome::BoundedThrough(t) => {
            println!("  same state in a harmonic well: bounded through t = {t}")
        }
        EscapeOutcome::Escaped(t) => {
            panic!("harmonic well cannot lose particles, got escape at {t}")
        }
    }

    // Now a cloud: uniform ball of radius 1.2, every weight decays along its
    // path until the particle leaves the domain and its contribution drops to
    // zero for good.
    let spec = SamplerSpec {
        dim: 1,
        particles: 300,
        shape: EnsembleShape::UniformBall { radius: 1.2 },
        momentum_offset: vec![],
        position_offset: vec![],
        alpha0: 1.0,
    };
    let mu0 = sample_initial_measure(&spec, 37)?;
    let record = evolve(
        &mu0,
        &model,
        &FlowConfig {
            eps: 0.1,
            steps: 60,
            ..cfg
        },
    )?;
    assert!(record.is_complete());

    println!("\ncloud of 300, rate 0.1, domain radius {}:", cfg.x_max);
    println!("{:>8} {:>10} {:>22}", "time", "escaped", "remaining mass");
    for row in record.rows.iter().step_by(10) {
        println!("{:>8.2} {:>10} {:>22.16}", row.time, row.escaped, row.mass);
    }
    let last = record.rows.last().unwrap();
    println!(
        "final: {} of 300 escaped, mass {:.3e}",
        last.escaped, last.mass
    );
    Ok(())
}
