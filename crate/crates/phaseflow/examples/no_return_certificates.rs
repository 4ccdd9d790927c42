//! Dynamical no-return certificates for escaping trajectories.
//!
//! When the external potential drives particles to infinity, the claim that
//! an escaped particle never comes back — so dropping its mass for good is
//! sound bookkeeping — can be certified rather than assumed. The chain has
//! four links:
//!
//! 1. a radial profile `u(r) = b r + 0.5 k2 r^2 + k4 r^gamma` whose slope
//!    dominates the worst-case force at every radius (`u' >= b + Phi'`),
//! 2. star rings of `u`: radii whose profile value strictly exceeds
//!    everything farther out, so a crossing with positive radial speed can
//!    never be undone by the comparison dynamics,
//! 3. per-trajectory monitors: after the refined ring crossing the radial
//!    speed never drops below its crossing value, the auxiliary energy
//!    `0.5 <p, q/|q|>^2 + u(|q|)` never decreases, and the radius never dips
//!    back inside,
//! 4. a travel-time bound: any trajectory exiting the outermost ring reaches
//!    the escape radius within a computable worst case `tau`.
//!
//! A phase-cylinder audit closes the loop: particles that start inside
//! `|q| <= L*` may only leave through the position face, never by exceeding
//! the momentum bound `L* + (a* + eta) t`.
//!
//! Run with `cargo run --release --example no_return_certificates`.

use phaseflow::flow::{evolve, FlowConfig};
use phaseflow::no_return::{
    cylinder_containment_audit, escape_bound_tau, find_star_rings, momentum_growth_rate,
    no_return_monitor, validate_bounding_potential, BoundingPotential, PhaseCylinder,
};
use phaseflow::sampler::{sample_initial_measure, EnsembleShape, SamplerSpec};
use phaseflow::{ExternalPotential, HamiltonianModel};
use std::error::Error;

fn main() -> Result<(), Box<dyn Error>> {
    let model =
        HamiltonianModel::without_interaction(1, ExternalPotential::polynomial(0.0, -1.0, 4.0)?);

    let spec = SamplerSpec {
        dim: 1,
        particles: 300,
        shape: EnsembleShape::UniformBall { radius: 1.2 },
        momentum_offset: vec![],
        position_offset: vec![],
        alpha0: 1.0,
    };
    let mu0 = sample_initial_measure(&spec, 37)?;

    // Link 1: the tight profile for this model and a domination check on a
    // dense radius grid. Without interaction the slope offset b is zero and
    // the profile simply copies the potential's radial coefficients.
    let profile = BoundingPotential::tight(&model, mu0.total_mass(0.0))?;
    let report = validate_bounding_potential(&profile, &model.potential, profile.b, 40.0, 4096);
    println!(
        "bounding profile: b = {:.3}, u(1) = {:.3}, u(10) = {:.3}",
        profile.b,
        profile.value(1.0),
        profile.value(10.0)
    );
    println!(
        "  slope dominates force on [0, 40]: {} (worst margin {:.2e} at r = {:.3})",
        report.ok, report.worst_margin, report.worst_radius
    );
    assert!(report.ok);

    // Link 2: star rings. The profile decreases beyond its hump, so every
    // scanned radius past the hump qualifies; keep three spread-out ones.
    let rings = find_star_rings(|r| profile.value(r), 20.0, 2048, 2048);
    let picks = [
        rings[rings.len() / 4],
        rings[rings.len() / 2],
        rings[3 * rings.len() / 4],
    ];
    println!(
        "\nstar rings kept: {:?}",
        picks.iter().map(|r| r.radius).collect::<Vec<_>>()
    );

    // Evolve the cloud; nearly everything escapes under the quartic push.
    // The default domain radius (1e6 in phase norm) leaves plenty of room
    // for trajectories to march through every ring before they exit.
    let cfg = FlowConfig::new(0.1, 6.0, 120);
    let record = evolve(&mu0, &model, &cfg)?;
    let escaped = record.final_measure().escaped_count();
    println!(
        "evolved 300 particles to t = {}: {} escaped",
        cfg.horizon, escaped
    );

    // Link 3: monitor every trajectory at every kept ring.
    println!(
        "\n{:>10} {:>10} {:>12} {:>12} {:>10}",
        "ring", "crossings", "speed drops", "energy dips", "reentries"
    );
    for ring in &picks {
        let mut crossings = 0;
        let mut speed_drops = 0;
        let mut energy_dips = 0;
        let mut reentries = 0;
        for i in 0..300 {
            let traj = record.particle_trajectory(i);
            if traj.live_samples() < 2 {
                continue;
            }
            let cert = no_return_monitor(&traj, ring, Some(&profile))?;
            if cert.crossed {
                crossings += 1;
                if !cert.monotone_ok {
                    speed_drops += 1;
                }
                if cert.h_tilde_ok == Some(false) {
                    energy_dips += 1;
                }
                if cert.reentered {
                    reentries += 1;
                }
            }
        }
        println!(
            "{:>10.4} {:>10} {:>12} {:>12} {:>10}",
            ring.radius, crossings, speed_drops, energy_dips, reentries
        );
        assert_eq!(
            (speed_drops, energy_dips, reentries),
            (0, 0, 0),
            "a certificate failed"
        );
    }

    // Link 4: worst-case travel times from each ring to the escape radius,
    // each anchored at the certified ring nearest half its radius (a
    // trajectory exiting at L must have carried enough energy to clear the
    // profile all the way from L/2). Farther rings are closer to the edge,
    // so the bounds must come out ordered.
    println!(
        "\ntravel-time bounds to |q| = {} (converged vs doubled radius):",
        cfg.x_max
    );
    let mut last = f64::INFINITY;
    for ring in &picks {
        let target = 0.5 * ring.radius;
        let inner = rings
            .iter()
            .filter(|c| c.radius < ring.radius)
            .min_by(|a, b| {
                (a.radius - target)
                    .abs()
                    .partial_cmp(&(b.radius - target).abs())
                    .unwrap()
            })
            .expect("the scan keeps rings well inside every pick");
        let tau = escape_bound_tau(&profile, ring, inner, cfg.x_max)?;
        println!(
            "  from r = {:.4} (inner {:.4}): tau = {:.6} (exit speed >= {:.3}, converged: {})",
            ring.radius, inner.radius, tau.tau, tau.exit_speed, tau.converged
        );
        assert!(tau.converged && tau.tau < last);
        last = tau.tau;
    }

    // Cylinder audit: position-face exits only.
    let l_star = 1.5;
    let a_star = momentum_growth_rate(&model, l_star, mu0.total_mass(0.0));
    let audit = cylinder_containment_audit(&record, &PhaseCylinder::new(l_star, a_star));
    println!(
        "\ncylinder |q| <= {l_star}, momentum bound {l_star} + {:.3} t: {} audited, {} position exits, {} momentum violations",
        a_star + 0.05 * a_star,
        audit.audited,
        audit.exits.len(),
        audit.violations.len()
    );
    assert!(audit.ok());
    println!("all certificates hold");
    Ok(())
}
