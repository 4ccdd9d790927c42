//! Dynamical certificates: once a trajectory leaves certain regions moving
//! outward, it can never come back.
//!
//! Everything here is built on a radial comparison argument. A *bounding
//! profile* `u` dominates the radial force: `u'(r) >= B + max_{|q|=r}
//! <grad Phi(q), q/|q|>`, where `B` bounds the interaction force. Along any
//! trajectory, `d^2|q|/dt^2 >= -u'(|q|)`, so the true radius outruns the
//! one-dimensional comparison system `r'' = -u'(r)` on the way out. Radii
//! where `u` strictly dominates all larger radii ("rings") are spheres of no
//! return: crossing one outward with positive radial speed freezes a lower
//! bound on `d|q|/dt` forever after. The same comparison yields worst-case
//! escape times to the numerical-infinity radius, and a cylinder
//! `|p| <= L* + (a* + eta) t, |q| <= L*` that trajectories can only exit
//! through the position face.
//!
//! All certificate operations are pure functions of immutable trajectories
//! and run records; they never re-integrate the dynamics except to refine a
//! bracketed crossing.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::Serialize;
use thiserror::Error;

use crate::flow::{RunRecord, Trajectory};
use crate::model::{pow_radial, ExternalPotential, HamiltonianModel};
use crate::phase::{self, PhasePoint};

/// Failures of certificate construction.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum NoReturnError {
    /// The trajectory has too few samples to bracket a ring crossing.
    #[error("trajectory too sparse to bracket a ring crossing (need at least 2 live samples)")]
    InsufficientSampling,

    /// A radius claimed as a ring fails the strict-decrease-beyond test.
    #[error("radius {radius} is not a ring: u({failing_radius}) >= u({radius})")]
    NoRing { radius: f64, failing_radius: f64 },

    /// The inner ring must lie strictly inside the outer one.
    #[error(
        "inner ring must lie strictly inside the outer ring, got inner = {inner}, outer = {outer}"
    )]
    InvalidRings { inner: f64, outer: f64 },

    /// The escape radius leaves no room for the travel-time quadrature.
    #[error("escape radius {x_max} must exceed twice the ring radius {ring_radius}")]
    HorizonTooSmall { x_max: f64, ring_radius: f64 },

    /// Bad profile parameters.
    #[error("invalid bounding profile: {0}")]
    InvalidProfile(String),
}

/// A radial profile `u(r) = b r + 0.5 k2 r^2 + k4 r^gamma` whose slope is
/// meant to dominate `B + max_{|q|=r} <grad Phi, q/|q|>`.
///
/// [`BoundingPotential::tight`] builds the exact-equality profile for a
/// model: `b` equal to the interaction bound times the initial mass, and the
/// polynomial part copied from the external potential, so the domination
/// condition holds with margin zero. [`validate_bounding_potential`] checks
/// any profile against any potential.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundingPotential {
    /// Constant slope offset dominating the interaction force.
    pub b: f64,
    k2: f64,
    k4: f64,
    gamma: f64,
}

impl BoundingPotential {
    /// Builds `u(r) = b r + 0.5 k2 r^2 + k4 r^gamma`; requires `b >= 0` and,
    /// when `k4 != 0`, a finite `gamma >= 2`.
    pub fn radial_poly(b: f64, k2: f64, k4: f64, gamma: f64) -> Result<Self, NoReturnError> {
        if !b.is_finite() || b < 0.0 {
            return Err(NoReturnError::InvalidProfile(format!(
                "slope offset must be finite and nonnegative, got {b}"
            )));
        }
        if !k2.is_finite() || !k4.is_finite() {
            return Err(NoReturnError::InvalidProfile(format!(
                "coefficients must be finite, got k2 = {k2}, k4 = {k4}"
            )));
        }
        if k4 != 0.0 && (!gamma.is_finite() || gamma < 2.0) {
            return Err(NoReturnError::InvalidProfile(format!(
                "exponent must be finite and at least 2, got {gamma}"
            )));
        }
        Ok(Self { b, k2, k4, gamma })
    }

    /// The margin-zero profile for a model: interaction bound times initial
    /// mass as the slope offset, potential coefficients copied verbatim.
    pub fn tight(model: &HamiltonianModel, mu0_mass: f64) -> Result<Self, NoReturnError> {
        if !mu0_mass.is_finite() || mu0_mass < 0.0 {
            return Err(NoReturnError::InvalidProfile(format!(
                "initial mass must be finite and nonnegative, got {mu0_mass}"
            )));
        }
        let (k2, k4, gamma) = model.potential.coefficients();
        Self::radial_poly(model.interaction_bound() * mu0_mass, k2, k4, gamma)
    }

    /// `u(r)`.
    pub fn value(&self, r: f64) -> f64 {
        let tail = if self.k4 == 0.0 {
            0.0
        } else {
            self.k4 * pow_radial(r, self.gamma)
        };
        self.b * r + 0.5 * self.k2 * r * r + tail
    }

    /// `u'(r)`.
    pub fn slope(&self, r: f64) -> f64 {
        let tail = if self.k4 == 0.0 {
            0.0
        } else {
            self.k4 * self.gamma * pow_radial(r, self.gamma - 1.0)
        };
        self.b + self.k2 * r + tail
    }
}

/// Outcome of checking a bounding profile against a potential.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundingReport {
    /// True when the domination margin is nonnegative at every grid radius,
    /// within a slack proportional to the magnitudes entering the
    /// difference: the tight profile satisfies the bound with exact-zero
    /// margin, which rounds to a few ulp of the slope terms.
    pub ok: bool,
    /// Smallest margin `u'(r) - b - max_{|q|=r}<grad Phi, q/|q|>` seen.
    pub worst_margin: f64,
    /// Radius where the smallest margin occurred.
    pub worst_radius: f64,
}

/// Checks `u'(r) >= b + max_{|q|=r} <grad Phi(q), q/|q|>` on a uniform grid
/// over `[0, r_max]`.
///
/// The sphere maximum is computed exactly: the potential family is radially
/// symmetric, so the directional derivative is the same in every direction.
/// For non-radial fields see [`sphere_directional_max`].
pub fn validate_bounding_potential(
    u: &BoundingPotential,
    potential: &ExternalPotential,
    b: f64,
    r_max: f64,
    samples: usize,
) -> BoundingReport {
    assert!(samples >= 1, "need at least one grid radius");
    let mut ok = true;
    let mut worst_margin = f64::INFINITY;
    let mut worst_radius = 0.0;
    for k in 0..=samples {
        let r = r_max * k as f64 / samples as f64;
        let u_slope = u.slope(r);
        let phi_slope = potential.radial_slope(r);
        let margin = u_slope - b - phi_slope;
        if margin < worst_margin {
            worst_margin = margin;
            worst_radius = r;
        }
        if margin < -1e-12 * (1.0 + u_slope.abs() + b.abs() + phi_slope.abs()) {
            ok = false;
        }
    }
    BoundingReport {
        ok,
        worst_margin,
        worst_radius,
    }
}

/// Conservative maximum of a directional quantity over the sphere `|q| = radius`:
/// evaluates `f` at `samples` deterministic pseudo-random directions and
/// inflates the maximum by `safety` (toward larger values, so the result
/// upper-bounds the sampled max whatever its sign). In dimension 1 the two
/// directions are evaluated exactly.
pub fn sphere_directional_max(
    mut f: impl FnMut(&[f64]) -> f64,
    dim: usize,
    radius: f64,
    samples: usize,
    safety: f64,
) -> f64 {
    assert!(dim >= 1 && samples >= 1 && safety >= 1.0);
    let inflate = |m: f64| if m >= 0.0 { m * safety } else { m / safety };
    if dim == 1 {
        return inflate(f(&[-radius]).max(f(&[radius])));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x7355_8d2e);
    let mut gauss = move || {
        // Box-Muller from two uniforms in (0, 1].
        let u1 = ((rng.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
        let u2 = ((rng.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    };
    let mut q = vec![0.0; dim];
    let mut best = f64::NEG_INFINITY;
    for _ in 0..samples {
        loop {
            for c in q.iter_mut() {
                *c = gauss();
            }
            let n = phase::norm(&q);
            if n > 1e-12 {
                for c in q.iter_mut() {
                    *c *= radius / n;
                }
                break;
            }
        }
        best = best.max(f(&q));
    }
    inflate(best)
}

/// A certified sphere of no return: `u(s) < u(radius)` for every sampled
/// `s > radius` out to the certification horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StarRing {
    /// Ring radius.
    pub radius: f64,
    /// 1-based position in the increasing ring sequence it was found in.
    pub index: usize,
}

/// Scans a uniform radius grid over `(0, r_max]` for up to `count` ring radii:
/// grid points whose profile value strictly exceeds the value at every later
/// grid point. Each candidate is re-certified on a 10x finer grid before being
/// accepted, and the result is strictly increasing in radius. Returns an empty
/// list when the profile is not eventually decreasing on the grid.
pub fn find_star_rings(
    u: impl Fn(f64) -> f64,
    r_max: f64,
    samples: usize,
    count: usize,
) -> Vec<StarRing> {
    assert!(count >= 1, "count must be at least 1");
    assert!(samples >= 2 && r_max > 0.0);
    let vals: Vec<f64> = (1..=samples)
        .map(|i| u(r_max * i as f64 / samples as f64))
        .collect();
    let mut suffix = vec![f64::NEG_INFINITY; samples];
    for i in (0..samples - 1).rev() {
        suffix[i] = suffix[i + 1].max(vals[i + 1]);
    }
    let fine_step = r_max / (samples as f64 * 10.0);
    let mut rings = Vec::new();
    for i in 0..samples - 1 {
        if rings.len() == count {
            break;
        }
        let r = r_max * (i + 1) as f64 / samples as f64;
        if vals[i] > suffix[i] && fine_recheck(&u, r, vals[i], r_max, fine_step) {
            rings.push(StarRing {
                radius: r,
                index: rings.len() + 1,
            });
        }
    }
    rings
}

fn fine_recheck(u: &impl Fn(f64) -> f64, rho: f64, u_rho: f64, r_max: f64, step: f64) -> bool {
    let mut s = rho + step;
    while s <= r_max {
        if u(s) >= u_rho {
            return false;
        }
        s += step;
    }
    true
}

/// Verifies the ring property of `radius` on a fresh uniform grid over
/// `(radius, out_to]`.
fn certify_ring(
    u: &impl Fn(f64) -> f64,
    radius: f64,
    out_to: f64,
    samples: usize,
) -> Result<(), NoReturnError> {
    let u_r = u(radius);
    for k in 1..=samples {
        let s = radius + (out_to - radius) * k as f64 / samples as f64;
        if u(s) >= u_r {
            return Err(NoReturnError::NoRing {
                radius,
                failing_radius: s,
            });
        }
    }
    Ok(())
}

/// What the crossing monitor certifies about one trajectory and one ring.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonitorCertificate {
    /// Whether an inside-to-outside ring crossing with positive radial speed
    /// was found.
    pub crossed: bool,
    /// Refined crossing time (when crossed).
    pub t_star: Option<f64>,
    /// Radial speed at the refined crossing (when crossed).
    pub v_star: Option<f64>,
    /// Exact radial speed `<p, q/|q|>` at every live sample.
    pub radial_speeds: Vec<f64>,
    /// True when every post-crossing sample keeps `d|q|/dt >= v* - tol`,
    /// `tol = 1e-6 (1 + |v*|)`; vacuously true without a crossing.
    pub monotone_ok: bool,
    /// Whether the auxiliary energy `0.5 <p, q/|q|>^2 + u(|q|)` is
    /// nondecreasing after the crossing, within a slack scaled to the size of
    /// its kinetic and profile terms; `None` when no profile was supplied or
    /// nothing crossed.
    pub h_tilde_ok: Option<bool>,
    /// True when some post-crossing sample re-entered `|q| < radius`.
    pub reentered: bool,
}

/// Checks the no-return property of one ring along one sampled trajectory.
///
/// The first time `|q|` crosses the ring radius from inside with positive
/// radial speed is located by bisection on the cubic interpolant through the
/// bracketing samples (values `|q|`, slopes `<p, q/|q|>` — both exact at the
/// nodes, no finite differencing). After that crossing the radial speed must
/// never drop below its crossing value (minus a tiny tolerance), the radius
/// must never dip back inside, and — when `profile` is given — the auxiliary
/// energy `0.5 <p, q/|q|>^2 + u(|q|)` must be nondecreasing.
///
/// Only live samples participate: samples frozen after an escape carry no
/// dynamics.
pub fn no_return_monitor(
    traj: &Trajectory,
    ring: &StarRing,
    profile: Option<&BoundingPotential>,
) -> Result<MonitorCertificate, NoReturnError> {
    let m = traj.live_samples();
    if m < 2 {
        return Err(NoReturnError::InsufficientSampling);
    }
    let rho = ring.radius;
    let radii: Vec<f64> = traj.states[..m].iter().map(PhasePoint::q_norm).collect();
    let radial_speeds: Vec<f64> = traj.states[..m]
        .iter()
        .map(PhasePoint::radial_speed)
        .collect();

    let mut crossing: Option<(usize, f64, f64)> = None;
    for k in 0..m - 1 {
        if radii[k] <= rho && radii[k + 1] > rho {
            let dt = traj.times[k + 1] - traj.times[k];
            let (s_star, v_star) = refine_radius_crossing(
                radii[k],
                radial_speeds[k],
                radii[k + 1],
                radial_speeds[k + 1],
                dt,
                rho,
            );
            if v_star > 0.0 {
                crossing = Some((k, traj.times[k] + s_star * dt, v_star));
                break;
            }
        }
    }

    let Some((k_cross, t_star, v_star)) = crossing else {
        return Ok(MonitorCertificate {
            crossed: false,
            t_star: None,
            v_star: None,
            radial_speeds,
            monotone_ok: true,
            h_tilde_ok: None,
            reentered: false,
        });
    };

    let tol = 1e-6 * (1.0 + v_star.abs());
    let mut monotone_ok = true;
    let mut reentered = false;
    for j in k_cross + 1..m {
        if radial_speeds[j] < v_star - tol {
            monotone_ok = false;
        }
        if radii[j] < rho {
            reentered = true;
        }
    }

    // The chain starts at the first sample after the crossing: sample values
    // are exact while the crossing state is interpolated, and mixing the two
    // would let interpolation error masquerade as an energy drop. The slack
    // scales with the kinetic and profile terms separately — near blow-up the
    // auxiliary energy is a small difference of enormous terms, and only a
    // term-sized slack is numerically meaningful there.
    let h_tilde_ok = profile.map(|u| {
        let mut prev = f64::NEG_INFINITY;
        let mut prev_scale = 0.0_f64;
        for j in k_cross + 1..m {
            let kinetic = 0.5 * radial_speeds[j] * radial_speeds[j];
            let depth = u.value(radii[j]);
            let h = kinetic + depth;
            let scale = 1.0 + kinetic + depth.abs();
            if h < prev - 1e-6 * prev_scale.max(scale) {
                return false;
            }
            prev = h;
            prev_scale = scale;
        }
        true
    });

    Ok(MonitorCertificate {
        crossed: true,
        t_star: Some(t_star),
        v_star: Some(v_star),
        radial_speeds,
        monotone_ok,
        h_tilde_ok,
        reentered,
    })
}

/// Bisects `H(s) = rho` on the cubic Hermite interpolant of the radius over
/// one bracketing interval; returns `(s, dH/dt at s)` with `s` in `[0, 1]`.
fn refine_radius_crossing(r0: f64, v0: f64, r1: f64, v1: f64, dt: f64, rho: f64) -> (f64, f64) {
    let eval = |s: f64| -> (f64, f64) {
        let s2 = s * s;
        let s3 = s2 * s;
        let value = (2.0 * s3 - 3.0 * s2 + 1.0) * r0
            + (s3 - 2.0 * s2 + s) * dt * v0
            + (-2.0 * s3 + 3.0 * s2) * r1
            + (s3 - s2) * dt * v1;
        let deriv = ((6.0 * s2 - 6.0 * s) * r0
            + (3.0 * s2 - 4.0 * s + 1.0) * dt * v0
            + (-6.0 * s2 + 6.0 * s) * r1
            + (3.0 * s2 - 2.0 * s) * dt * v1)
            / dt;
        (value, deriv)
    };
    let mut lo = 0.0;
    let mut hi = 1.0;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if eval(mid).0 >= rho {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let s = 0.5 * (lo + hi);
    (s, eval(s).1)
}

/// The momentum growth rate `a* = sup_{|q| <= L*} |grad Phi| + B * mass`:
/// no force inside the position ball `B_{L*}` can push `|p|` faster than this.
pub fn momentum_growth_rate(model: &HamiltonianModel, l_star: f64, mu0_mass: f64) -> f64 {
    assert!(l_star > 0.0, "cylinder radius must be positive");
    model.potential.grad_sup_in_ball(l_star) + model.interaction_bound() * mu0_mass
}

/// The growing phase-space region `|p| <= L* + (a* + eta) t`, `|q| <= L*`,
/// which trajectories can only leave through the position face.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhaseCylinder {
    /// Position radius `L*`.
    pub l_star: f64,
    /// Momentum growth rate `a*`.
    pub a_star: f64,
    /// Slack added to the growth rate; positive whenever `a* > 0`.
    pub eta: f64,
}

impl PhaseCylinder {
    /// A cylinder with the default slack `eta = 0.05 a*`.
    pub fn new(l_star: f64, a_star: f64) -> Self {
        Self {
            l_star,
            a_star,
            eta: 0.05 * a_star,
        }
    }

    /// A cylinder with explicit slack.
    pub fn with_eta(l_star: f64, a_star: f64, eta: f64) -> Self {
        Self {
            l_star,
            a_star,
            eta,
        }
    }

    /// The momentum-face radius `L* + (a* + eta) t` at time `t`.
    pub fn momentum_bound(&self, t: f64) -> f64 {
        self.l_star + (self.a_star + self.eta) * t
    }

    /// Membership at time `t`.
    pub fn contains(&self, x: &PhasePoint, t: f64) -> bool {
        x.q_norm() <= self.l_star && x.p_norm() <= self.momentum_bound(t)
    }
}

/// A particle that left the cylinder through the position face.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PositionExit {
    /// Particle index.
    pub particle: usize,
    /// First sample time found outside the position ball.
    pub time: f64,
    /// Radial speed at that sample (positive for a legitimate outward exit).
    pub radial_speed: f64,
}

/// A sample where a particle exceeded the momentum face while still inside
/// the position ball — the event the containment result forbids.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CylinderViolation {
    /// Particle index.
    pub particle: usize,
    /// Sample time of the violation.
    pub time: f64,
    /// Momentum norm at the sample.
    pub p_norm: f64,
    /// The momentum-face radius it should have respected.
    pub momentum_bound: f64,
    /// Position norm at the sample (inside the ball by definition).
    pub q_norm: f64,
}

/// Outcome of auditing a whole run against one cylinder.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CylinderAuditReport {
    /// Number of particles that started inside the cylinder.
    pub audited: usize,
    /// Position-face exits (legitimate escape route).
    pub exits: Vec<PositionExit>,
    /// Momentum-face violations (forbidden).
    pub violations: Vec<CylinderViolation>,
}

impl CylinderAuditReport {
    /// True when no particle left through the momentum face.
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Audits every particle of a run against the cylinder: particles starting
/// inside must, at each live sample, either still be inside or have
/// previously left through the position face. Samples beyond a position-face
/// exit are unconstrained (the cylinder says nothing about returners), and
/// samples frozen after an escape are skipped.
pub fn cylinder_containment_audit(
    record: &RunRecord,
    cylinder: &PhaseCylinder,
) -> CylinderAuditReport {
    let particles = record.snapshots.first().map_or(0, |s| s.particles.len());
    let mut report = CylinderAuditReport {
        audited: 0,
        exits: Vec::new(),
        violations: Vec::new(),
    };
    for i in 0..particles {
        let traj = record.particle_trajectory(i);
        let m = traj.live_samples();
        if m == 0 || !cylinder.contains(&traj.states[0], traj.times[0]) {
            continue;
        }
        report.audited += 1;
        for j in 1..m {
            let x = &traj.states[j];
            let t = traj.times[j];
            if x.q_norm() > cylinder.l_star {
                report.exits.push(PositionExit {
                    particle: i,
                    time: t,
                    radial_speed: x.radial_speed(),
                });
                break;
            }
            let bound = cylinder.momentum_bound(t);
            if x.p_norm() > bound {
                report.violations.push(CylinderViolation {
                    particle: i,
                    time: t,
                    p_norm: x.p_norm(),
                    momentum_bound: bound,
                    q_norm: x.q_norm(),
                });
            }
        }
    }
    report
}

/// A worst-case travel-time bound from a ring to the escape radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TauEstimate {
    /// Supremum of travel times to `x_max` over the admissible boundary
    /// states.
    pub tau: f64,
    /// The same supremum integrated only to `x_max / 2`.
    pub tau_at_half_radius: f64,
    /// True when doubling the escape radius changes the bound by less than
    /// 2.5% — the bound has effectively converged to its infinite-radius value.
    pub converged: bool,
    /// Escape radius used.
    pub x_max: f64,
    /// Slowest admissible exit speed at the ring.
    pub exit_speed: f64,
}

/// Bounds the time a comparison trajectory that exits the ring `ring`
/// (having previously visited the inner ring) can take to reach `x_max`.
///
/// The radial comparison system `r'' = -u'(r)` conserves
/// `e = 0.5 r'^2 + u(r)`; a trajectory that visited radius `ell` and later
/// exits at radius `L` carries at least `e = max_{[ell, L]} u`, so its exit
/// speed is at least `sqrt(2 (e - u(L)))`. The travel time
/// `int_L^{x_max} dr / sqrt(2 (e - u(r)))` is maximized at that slowest
/// admissible state; a brute-force supremum over an exit-speed grid confirms
/// it. Both rings are re-certified out to `x_max` before any integration.
pub fn escape_bound_tau(
    u: &BoundingPotential,
    ring: &StarRing,
    inner: &StarRing,
    x_max: f64,
) -> Result<TauEstimate, NoReturnError> {
    if !(inner.radius > 0.0) || inner.radius >= ring.radius {
        return Err(NoReturnError::InvalidRings {
            inner: inner.radius,
            outer: ring.radius,
        });
    }
    if x_max <= 2.0 * ring.radius {
        return Err(NoReturnError::HorizonTooSmall {
            x_max,
            ring_radius: ring.radius,
        });
    }
    let profile = |r: f64| u.value(r);
    certify_ring(&profile, ring.radius, x_max, 8192)?;
    certify_ring(&profile, inner.radius, x_max, 8192)?;

    let l = ring.radius;
    let u_l = profile(l);
    // Minimal admissible energy: the conserved energy must clear the profile
    // everywhere between the rings.
    let mut e_min = f64::NEG_INFINITY;
    for k in 0..=2048 {
        let r = inner.radius + (l - inner.radius) * k as f64 / 2048.0;
        e_min = e_min.max(profile(r));
    }
    let v_min = (2.0 * (e_min - u_l)).max(0.0).sqrt();

    // Brute-force supremum over exit speeds; the travel time is decreasing in
    // the exit speed, so the supremum sits at the slowest admissible state.
    let mut tau = 0.0_f64;
    let mut exit_speed = v_min;
    for j in 0..8 {
        let v = v_min + j as f64 * 0.25 * (1.0 + v_min);
        let e = 0.5 * v * v + u_l;
        let t = travel_time(&profile, e, l, x_max);
        if t > tau {
            tau = t;
            exit_speed = v;
        }
    }
    let e_sup = 0.5 * exit_speed * exit_speed + u_l;
    let tau_at_half_radius = travel_time(&profile, e_sup, l, 0.5 * x_max);
    let converged = tau.is_finite() && tau > 0.0 && (tau - tau_at_half_radius) <= 0.025 * tau;
    Ok(TauEstimate {
        tau,
        tau_at_half_radius,
        converged,
        x_max,
        exit_speed,
    })
}

/// Travel time of the radial comparison system at energy `e` from `from` to
/// `to`: `int dr / sqrt(2 (e - u(r)))`, integrated over dyadic segments with
/// an adaptive rule. The first segment is integrated in `s = sqrt(r - from)`,
/// which absorbs the `1/sqrt` endpoint singularity of a zero-speed start.
/// Returns infinity when the energy fails to clear the profile somewhere.
fn travel_time(u: &impl Fn(f64) -> f64, e: f64, from: f64, to: f64) -> f64 {
    let mut total = 0.0;
    let mut a = from;
    let mut first = true;
    while a < to {
        let b = (2.0 * a).min(to);
        let seg = if first {
            let s_end = (b - a).sqrt();
            adaptive_simpson(
                &|s: f64| {
                    let denom = 2.0 * (e - u(a + s * s));
                    if denom <= 0.0 {
                        return f64::INFINITY;
                    }
                    2.0 * s / denom.sqrt()
                },
                1e-9 * s_end,
                s_end,
                1e-10,
                28,
            )
        } else {
            adaptive_simpson(
                &|r: f64| {
                    let denom = 2.0 * (e - u(r));
                    if denom <= 0.0 {
                        return f64::INFINITY;
                    }
                    1.0 / denom.sqrt()
                },
                a,
                b,
                1e-10,
                28,
            )
        };
        total += seg;
        if !total.is_finite() {
            return f64::INFINITY;
        }
        a = b;
        first = false;
    }
    total
}

/// Recursive adaptive Simpson quadrature with Richardson correction.
fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let fa = f(a);
    let fm = f(m);
    let fb = f(b);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_recurse(f, a, b, fa, fm, fb, whole, tol, depth)
}

#[allow(clippy::too_many_arguments)]
fn simpson_recurse(
    f: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    if !left.is_finite() || !right.is_finite() || !whole.is_finite() {
        return f64::INFINITY;
    }
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}
