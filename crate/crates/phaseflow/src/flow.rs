//! Time-discretized evolution of a weighted particle ensemble.
//!
//! The scheme splits the horizon `[0, T]` into `n` equal intervals and, on
//! each one, freezes the interaction field at the ensemble snapshot from the
//! interval's left endpoint. Every alive particle then follows the augmented
//! ODE
//!
//! ```text
//! dp/dt = -grad Phi(q) - (grad W * mu_k)(q)
//! dq/dt = p
//! dS/dt = |(dp/dt, dq/dt)|
//! ```
//!
//! with an embedded Runge-Kutta pair. Initial weights are never mutated:
//! dissipation enters only through the accumulated path length `S`, so the
//! effective weight `w0 * exp(-eps * S)` can only shrink.
//!
//! A particle is declared escaped — excluded from every functional from then
//! on — only when the evidence for finite-time blow-up is unambiguous: it has
//! crossed the large radius `x_max`, the adaptive step has collapsed below
//! `h_min`, and its speed has kept growing since the crossing. The escape
//! time reported is the (refined) first crossing of `x_max`. A step collapse
//! anywhere inside the domain is an error, never silent mass loss.

use rayon::prelude::*;
use thiserror::Error;

use crate::measure::{MomentValue, ParticleMeasure, ParticleStatus, WeightedParticle};
use crate::model::{ExternalPotential, HamiltonianModel, InteractionField};
use crate::ode::{DriveOutcome, OdeError, StepControl, Stepper};
use crate::phase::{self, PhasePoint};

/// Tolerance on `|total initial mass - 1|` accepted by [`evolve`].
pub const MASS_NORMALIZATION_TOL: f64 = 1e-9;

/// Everything that can go wrong while evolving an ensemble.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum FlowError {
    /// The configuration failed validation.
    #[error("invalid flow configuration: {0}")]
    InvalidConfig(String),

    /// The initial ensemble does not carry unit mass.
    #[error("initial mass must be 1 within 1e-9, got {mass}")]
    UnnormalizedInput { mass: f64 },

    /// A field evaluation produced a non-finite value.
    #[error("non-finite field evaluation for particle {particle} at t = {time}")]
    NonFinite { particle: usize, time: f64 },

    /// The adaptive step collapsed while the particle was still inside the
    /// domain, so the collapse cannot be attributed to blow-up.
    #[error(
        "integrator step collapsed for particle {particle} at t = {time} \
         inside the domain (|x| = {radius}); refine tolerances or shrink h_min"
    )]
    StepCollapse {
        particle: usize,
        time: f64,
        radius: f64,
    },

    /// The integrator exceeded its attempt budget.
    #[error("integrator stalled for particle {particle} at t = {time}")]
    Stalled { particle: usize, time: f64 },
}

/// Discretization parameters for one evolution run.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowConfig {
    /// Dissipation rate `eps >= 0`.
    pub eps: f64,
    /// Time horizon `T > 0`.
    pub horizon: f64,
    /// Number of equal scheme intervals `n >= 1`.
    pub steps: usize,
    /// Local error tolerance of the adaptive integrator.
    pub ode_tol: f64,
    /// Radius of the numerical domain; escapes are only ever declared beyond
    /// it.
    pub x_max: f64,
    /// Step size below which the adaptive integrator is considered collapsed.
    pub h_min: f64,
    /// Exponents of the `exp(alpha |x|)` moments reported at each grid time.
    pub alphas: Vec<f64>,
}

impl FlowConfig {
    /// A configuration with default numerics: `ode_tol = 1e-8`,
    /// `x_max = 1e6`, `h_min = 1e-12 * horizon`, no moment exponents.
    pub fn new(eps: f64, horizon: f64, steps: usize) -> Self {
        Self {
            eps,
            horizon,
            steps,
            ode_tol: 1e-8,
            x_max: 1e6,
            h_min: 1e-12 * horizon,
            alphas: Vec::new(),
        }
    }

    /// Width `T / n` of one scheme interval.
    pub fn grid_step(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    /// The `n + 1` grid times `t_k = T k / n`, exact at both ends.
    pub fn grid_times(&self) -> Vec<f64> {
        (0..=self.steps)
            .map(|k| self.horizon * k as f64 / self.steps as f64)
            .collect()
    }

    /// Checks every parameter, reporting all problems at once.
    pub fn validate(&self) -> Result<(), FlowError> {
        let mut problems = Vec::new();
        if !self.eps.is_finite() || self.eps < 0.0 {
            problems.push(format!(
                "eps must be finite and nonnegative, got {}",
                self.eps
            ));
        }
        if !self.horizon.is_finite() || !(self.horizon > 0.0) {
            problems.push(format!(
                "horizon must be finite and positive, got {}",
                self.horizon
            ));
        }
        if self.steps == 0 {
            problems.push("steps must be at least 1".to_string());
        }
        if !self.ode_tol.is_finite() || !(self.ode_tol > 0.0) || self.ode_tol >= 1.0 {
            problems.push(format!("ode_tol must lie in (0, 1), got {}", self.ode_tol));
        }
        if !self.x_max.is_finite() || !(self.x_max > 0.0) {
            problems.push(format!(
                "x_max must be finite and positive, got {}",
                self.x_max
            ));
        }
        if !self.h_min.is_finite() || !(self.h_min > 0.0) || self.h_min >= self.horizon {
            problems.push(format!(
                "h_min must be positive and below the horizon, got {}",
                self.h_min
            ));
        }
        if let Some(a) = self.alphas.iter().find(|a| !a.is_finite() || **a < 0.0) {
            problems.push(format!(
                "moment exponents must be finite and nonnegative, got {a}"
            ));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(FlowError::InvalidConfig(problems.join("; ")))
        }
    }
}

/// The velocity field of one scheme interval: external force plus the kernel
/// convolution frozen on a fixed ensemble snapshot.
pub struct FrozenField<'a> {
    potential: &'a ExternalPotential,
    interaction: InteractionField<'a>,
    dim: usize,
}

impl<'a> FrozenField<'a> {
    /// Freezes the interaction field of `model` on `snapshot` with weights
    /// decayed at rate `eps`.
    pub fn new(model: &'a HamiltonianModel, snapshot: &ParticleMeasure, eps: f64) -> Self {
        Self {
            potential: &model.potential,
            interaction: InteractionField::build(model, snapshot, eps),
            dim: model.dim,
        }
    }

    /// Spatial dimension `d`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Right-hand side on the augmented flat state `y = [p..., q..., S]`:
    /// writes `[force..., p..., |v|]` into `dy` and returns whether the
    /// result is finite.
    pub fn rhs(&self, y: &[f64], dy: &mut [f64]) -> bool {
        let d = self.dim;
        self.interaction
            .force(self.potential, &y[d..2 * d], &mut dy[..d]);
        dy[d..2 * d].copy_from_slice(&y[..d]);
        let speed = phase::norm(&dy[..2 * d]);
        dy[2 * d] = speed;
        speed.is_finite()
    }

    /// Speed `|v|` at an augmented state (infinite or NaN when the field is
    /// not finite there).
    pub fn speed_at(&self, y: &[f64]) -> f64 {
        let mut dy = vec![0.0; y.len()];
        self.rhs(y, &mut dy);
        dy[2 * self.dim]
    }
}

/// First crossing of the domain radius by a particle that has not yet been
/// declared escaped: crossing time (refined by bisection to relative accuracy
/// `1e-3`) and speed at the crossing, kept for the growth comparison at a
/// later step collapse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryCrossing {
    /// Time of the first crossing of `x_max`.
    pub time: f64,
    /// Speed `|v|` at the crossing.
    pub speed: f64,
}

/// Result of advancing one particle over one scheme interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AdvanceOutcome {
    /// Reached the interval end; the particle stays alive.
    Completed,
    /// Escape declared; `time` is the refined first crossing of `x_max`.
    Escaped { time: f64 },
}

/// Per-particle failure, before the particle index is attached.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum AdvanceError {
    /// A field evaluation produced a non-finite value.
    #[error("non-finite field evaluation at t = {time}")]
    NonFinite { time: f64 },
    /// Step collapse inside the domain.
    #[error("step collapse at t = {time} with |x| = {radius}")]
    StepCollapse { time: f64, radius: f64 },
    /// Attempt budget exceeded.
    #[error("integrator stalled at t = {time}")]
    Stalled { time: f64 },
}

impl AdvanceError {
    fn from_ode(err: OdeError) -> Self {
        match err {
            OdeError::NonFinite { t } => AdvanceError::NonFinite { time: t },
            OdeError::Stalled { t } => AdvanceError::Stalled { time: t },
        }
    }

    /// Attaches the particle index for ensemble-level reporting.
    pub fn for_particle(self, particle: usize) -> FlowError {
        match self {
            AdvanceError::NonFinite { time } => FlowError::NonFinite { particle, time },
            AdvanceError::StepCollapse { time, radius } => FlowError::StepCollapse {
                particle,
                time,
                radius,
            },
            AdvanceError::Stalled { time } => FlowError::Stalled { particle, time },
        }
    }
}

/// Advances one particle from `t0` to `t1` under a frozen field, updating its
/// state and path length in place.
///
/// `crossing` carries the particle's first `x_max` crossing across intervals;
/// `h` warm-starts the adaptive step between consecutive calls. The path
/// length is clamped nondecreasing after every accepted step (the embedded
/// pair can nudge it down by `O(tol)` when the speed is tiny).
///
/// Escape is declared only on the conjunction: step collapse beyond `x_max`
/// with speed above the crossing speed. A collapse inside the domain is an
/// [`AdvanceError::StepCollapse`].
#[allow(clippy::too_many_arguments)]
pub fn advance_particle(
    field: &FrozenField,
    cfg: &FlowConfig,
    t0: f64,
    t1: f64,
    x: &mut PhasePoint,
    path_len: &mut f64,
    crossing: &mut Option<BoundaryCrossing>,
    stepper: &mut Stepper,
    h: &mut f64,
) -> Result<AdvanceOutcome, AdvanceError> {
    let d = field.dim();
    let mut y = vec![0.0; 2 * d + 1];
    x.write_flat(&mut y[..2 * d]);
    y[2 * d] = *path_len;

    if crossing.is_none() && phase::norm(&y[..2 * d]) >= cfg.x_max {
        *crossing = Some(BoundaryCrossing {
            time: t0,
            speed: field.speed_at(&y),
        });
    }
    let already_crossed = crossing.is_some();

    let ctrl = StepControl {
        tol: cfg.ode_tol,
        h_min: cfg.h_min,
    };
    let mut bracket: Option<(f64, Vec<f64>, f64)> = None;
    let mut prev_t = t0;
    let mut prev_y = y.clone();
    let outcome = stepper.drive(
        |_, y, dy| field.rhs(y, dy),
        t0,
        t1,
        &mut y,
        &ctrl,
        h,
        |t, ys| {
            if ys[2 * d] < prev_y[2 * d] {
                ys[2 * d] = prev_y[2 * d];
            }
            if !already_crossed && bracket.is_none() && phase::norm(&ys[..2 * d]) >= cfg.x_max {
                bracket = Some((prev_t, prev_y.clone(), t));
            }
            prev_t = t;
            prev_y.copy_from_slice(ys);
        },
    );

    // The integrator mutates `y` only on accepted steps, so the state below
    // is the last accepted one even on the error paths.
    x.p.copy_from_slice(&y[..d]);
    x.q.copy_from_slice(&y[d..2 * d]);
    *path_len = y[2 * d];

    let outcome = outcome.map_err(AdvanceError::from_ode)?;
    if let Some((lo_t, lo_y, hi_t)) = bracket.take() {
        *crossing = Some(refine_crossing(field, cfg, lo_t, &lo_y, hi_t, stepper)?);
    }

    match outcome {
        DriveOutcome::Completed => Ok(AdvanceOutcome::Completed),
        DriveOutcome::Collapsed { t } => {
            let radius = phase::norm(&y[..2 * d]);
            if radius >= cfg.x_max {
                if let Some(c) = crossing {
                    if field.speed_at(&y) > c.speed {
                        return Ok(AdvanceOutcome::Escaped { time: c.time });
                    }
                }
            }
            Err(AdvanceError::StepCollapse { time: t, radius })
        }
    }
}

/// Bisects the first `x_max` crossing inside one accepted step by
/// re-integrating from the step's start state, narrowing until the window is
/// below `1e-3` of the crossing time.
fn refine_crossing(
    field: &FrozenField,
    cfg: &FlowConfig,
    t_lo: f64,
    y_lo: &[f64],
    mut hi: f64,
    stepper: &mut Stepper,
) -> Result<BoundaryCrossing, AdvanceError> {
    let d = field.dim();
    let ctrl = StepControl {
        tol: cfg.ode_tol,
        h_min: cfg.h_min,
    };
    let mut lo = t_lo;
    let mut y_probe = y_lo.to_vec();
    for _ in 0..64 {
        if hi - lo <= 1e-3 * hi.abs().max(cfg.h_min) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        y_probe.copy_from_slice(y_lo);
        let mut h = 0.0;
        let out = stepper
            .drive(
                |_, y, dy| field.rhs(y, dy),
                t_lo,
                mid,
                &mut y_probe,
                &ctrl,
                &mut h,
                |_, _| {},
            )
            .map_err(AdvanceError::from_ode)?;
        match out {
            DriveOutcome::Completed => {
                if phase::norm(&y_probe[..2 * d]) >= cfg.x_max {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            // Blow-up inside the bracket: the crossing cannot be later than
            // the collapse point.
            DriveOutcome::Collapsed { t } => {
                if phase::norm(&y_probe[..2 * d]) >= cfg.x_max {
                    hi = t.min(mid);
                } else {
                    break;
                }
            }
        }
    }
    y_probe.copy_from_slice(y_lo);
    let mut h = 0.0;
    stepper
        .drive(
            |_, y, dy| field.rhs(y, dy),
            t_lo,
            hi,
            &mut y_probe,
            &ctrl,
            &mut h,
            |_, _| {},
        )
        .map_err(AdvanceError::from_ode)?;
    Ok(BoundaryCrossing {
        time: hi,
        speed: field.speed_at(&y_probe),
    })
}

/// One frozen-field step `mu_k -> mu_{k+1}` over interval `k`, with fresh
/// per-particle bookkeeping.
///
/// Weights are never mutated — only path lengths grow — so the total mass at
/// any fixed `eps` cannot increase. Escaped particles pass through untouched.
/// Prefer [`evolve`] for multi-interval runs: it keeps crossing records and
/// warm-start steps alive between intervals.
pub fn step_scheme(
    mu: &ParticleMeasure,
    model: &HamiltonianModel,
    cfg: &FlowConfig,
    k: usize,
) -> Result<ParticleMeasure, FlowError> {
    let mut crossings = vec![None; mu.particles.len()];
    let mut warm = vec![0.0; mu.particles.len()];
    step_scheme_state(mu, model, cfg, k, &mut crossings, &mut warm)
}

/// [`step_scheme`] with caller-owned crossing records and warm-start steps,
/// one slot per particle.
pub fn step_scheme_state(
    mu: &ParticleMeasure,
    model: &HamiltonianModel,
    cfg: &FlowConfig,
    k: usize,
    crossings: &mut [Option<BoundaryCrossing>],
    warm_steps: &mut [f64],
) -> Result<ParticleMeasure, FlowError> {
    assert_eq!(crossings.len(), mu.particles.len());
    assert_eq!(warm_steps.len(), mu.particles.len());
    let field = FrozenField::new(model, mu, cfg.eps);
    let t0 = cfg.horizon * k as f64 / cfg.steps as f64;
    let t1 = cfg.horizon * (k + 1) as f64 / cfg.steps as f64;

    // Particles are independent within one interval, so the parallel map is
    // deterministic: each result lands at its own index.
    let results: Vec<Result<WeightedParticle, FlowError>> = mu
        .particles
        .par_iter()
        .zip(crossings.par_iter_mut().zip(warm_steps.par_iter_mut()))
        .enumerate()
        .map_init(
            || Stepper::new(2 * mu.dim + 1),
            |stepper, (i, (part, (crossing, h)))| {
                if !part.is_alive() {
                    return Ok(part.clone());
                }
                let mut next = part.clone();
                match advance_particle(
                    &field,
                    cfg,
                    t0,
                    t1,
                    &mut next.x,
                    &mut next.path_len,
                    crossing,
                    stepper,
                    h,
                ) {
                    Ok(AdvanceOutcome::Completed) => Ok(next),
                    Ok(AdvanceOutcome::Escaped { time }) => {
                        next.status = ParticleStatus::Escaped { time };
                        Ok(next)
                    }
                    Err(e) => Err(e.for_particle(i)),
                }
            },
        )
        .collect();

    let mut particles = Vec::with_capacity(results.len());
    for r in results {
        particles.push(r?);
    }
    Ok(ParticleMeasure::new(mu.dim, particles))
}

/// Ensemble diagnostics at one grid time.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagRow {
    /// Grid time.
    pub time: f64,
    /// Total mass at the run's dissipation rate.
    pub mass: f64,
    /// Total energy (kinetic + interaction + external).
    pub energy: f64,
    /// One `exp(alpha |x|)` moment per configured exponent.
    pub moments: Vec<MomentValue>,
    /// Number of escaped particles so far.
    pub escaped: usize,
    /// Largest momentum norm over alive particles.
    pub max_p: f64,
    /// Largest position norm over alive particles.
    pub max_q: f64,
}

/// Full output of one evolution run: diagnostics and ensemble snapshots at
/// every grid time, plus the failure (if any) that truncated the run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    /// The configuration the run used.
    pub config: FlowConfig,
    /// One diagnostics row per recorded grid time.
    pub rows: Vec<DiagRow>,
    /// The ensemble at each recorded grid time (index-aligned with `rows`).
    pub snapshots: Vec<ParticleMeasure>,
    /// Failure that aborted the run, if any; the rows and snapshots before
    /// the failing interval are retained.
    pub failure: Option<FlowError>,
}

impl RunRecord {
    /// The recorded grid times.
    pub fn times(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.time).collect()
    }

    /// The last recorded ensemble.
    pub fn final_measure(&self) -> &ParticleMeasure {
        self.snapshots
            .last()
            .expect("a run record always holds the initial snapshot")
    }

    /// True when the run reached its horizon.
    pub fn is_complete(&self) -> bool {
        self.failure.is_none() && self.rows.len() == self.config.steps + 1
    }

    /// The sampled path of one particle across the recorded grid times.
    ///
    /// Once a particle escapes its stored state is frozen, so later samples
    /// repeat the detection state; the trajectory's status records the escape
    /// time.
    pub fn particle_trajectory(&self, index: usize) -> Trajectory {
        let mut times = Vec::with_capacity(self.snapshots.len());
        let mut states = Vec::with_capacity(self.snapshots.len());
        let mut path_len = Vec::with_capacity(self.snapshots.len());
        let mut status = ParticleStatus::Alive;
        for (row, snap) in self.rows.iter().zip(&self.snapshots) {
            let pt = &snap.particles[index];
            times.push(row.time);
            states.push(pt.x.clone());
            path_len.push(pt.path_len);
            if !pt.is_alive() {
                status = pt.status;
            }
        }
        Trajectory {
            times,
            states,
            path_len,
            status,
        }
    }
}

fn diag_row(mu: &ParticleMeasure, model: &HamiltonianModel, cfg: &FlowConfig, t: f64) -> DiagRow {
    DiagRow {
        time: t,
        mass: mu.total_mass(cfg.eps),
        energy: model.hamiltonian_energy(mu, cfg.eps),
        moments: cfg
            .alphas
            .iter()
            .map(|&a| mu.exp_moment(a, cfg.eps))
            .collect(),
        escaped: mu.escaped_count(),
        max_p: mu.max_p_norm(),
        max_q: mu.max_q_norm(),
    }
}

/// Runs the full scheme from `mu0` over the configured horizon.
///
/// The initial ensemble must carry unit mass within
/// [`MASS_NORMALIZATION_TOL`] and have finite states. Mid-run failures do not
/// discard the work done: the returned record holds everything up to the
/// failing interval together with the failure itself.
pub fn evolve(
    mu0: &ParticleMeasure,
    model: &HamiltonianModel,
    cfg: &FlowConfig,
) -> Result<RunRecord, FlowError> {
    cfg.validate()?;
    if mu0.dim != model.dim {
        return Err(FlowError::InvalidConfig(format!(
            "ensemble dimension {} does not match model dimension {}",
            mu0.dim, model.dim
        )));
    }
    if let Some(i) = mu0
        .particles
        .iter()
        .position(|pt| !pt.x.is_finite() || !pt.w0.is_finite())
    {
        return Err(FlowError::InvalidConfig(format!(
            "particle {i} has a non-finite state"
        )));
    }
    let mass = mu0.total_mass(0.0);
    if (mass - 1.0).abs() > MASS_NORMALIZATION_TOL {
        return Err(FlowError::UnnormalizedInput { mass });
    }

    let mut record = RunRecord {
        config: cfg.clone(),
        rows: vec![diag_row(mu0, model, cfg, 0.0)],
        snapshots: vec![mu0.clone()],
        failure: None,
    };
    let mut mu = mu0.clone();
    let mut crossings = vec![None; mu.particles.len()];
    let mut warm = vec![0.0; mu.particles.len()];
    for k in 0..cfg.steps {
        match step_scheme_state(&mu, model, cfg, k, &mut crossings, &mut warm) {
            Ok(next) => mu = next,
            Err(e) => {
                record.failure = Some(e);
                return Ok(record);
            }
        }
        let t = cfg.horizon * (k + 1) as f64 / cfg.steps as f64;
        record.rows.push(diag_row(&mu, model, cfg, t));
        record.snapshots.push(mu.clone());
    }
    Ok(record)
}

/// A sampled single-particle path.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// Sample times.
    pub times: Vec<f64>,
    /// Phase states at the sample times.
    pub states: Vec<PhasePoint>,
    /// Accumulated path length at the sample times; nondecreasing.
    pub path_len: Vec<f64>,
    /// Final status (samples after an escape repeat the frozen state).
    pub status: ParticleStatus,
}

impl Trajectory {
    /// Number of samples.
    pub fn len(&self) -> usize {
        self.times.len()
    }

    /// True when no samples were recorded.
    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Samples taken strictly before the escape time (all of them for a
    /// bounded path). The returned count `m` means indices `0..m` are
    /// meaningful dynamics, the rest repeat the frozen detection state.
    pub fn live_samples(&self) -> usize {
        match self.status {
            ParticleStatus::Alive => self.times.len(),
            ParticleStatus::Escaped { time } => {
                self.times.iter().take_while(|&&t| t < time).count()
            }
        }
    }
}

/// The radial profile of the phase-space retraction used by
/// [`truncated_flow`]: identity up to `b`, a `C^2` ramp on `[b, b + 2]` that
/// stays within the ball of radius `b + 1`, and `0` from `b + 2` on.
pub fn retraction_radius(r: f64, b: f64) -> f64 {
    if r <= b {
        return r;
    }
    if r >= b + 2.0 {
        return 0.0;
    }
    // Quintic ramp in u = (r - b)/2: matches value/slope of the identity at
    // u = 0 (with zero curvature) and flattens to zero value, slope and
    // curvature at u = 1. The max guards against cancellation noise at the
    // outer triple root; a negative radius would flip points through the
    // origin.
    let u = 0.5 * (r - b);
    let rho = b + u
        * (2.0 + u * u * ((-10.0 * b - 12.0) + u * ((15.0 * b + 16.0) + u * (-6.0 * b - 6.0))));
    rho.max(0.0)
}

/// Integrates one particle under the truncated velocity `v(phi_b(x))`, where
/// `phi_b` is the radial phase-space retraction with profile
/// [`retraction_radius`]: the dynamics agree with the plain flow while
/// `|x| <= b`, and the truncated velocity is globally bounded, so the path
/// exists for all time. States are sampled at the configured grid times. The
/// interaction field stays frozen on `snapshot` throughout.
pub fn truncated_flow(
    x0: &PhasePoint,
    b: f64,
    model: &HamiltonianModel,
    snapshot: &ParticleMeasure,
    cfg: &FlowConfig,
) -> Result<Trajectory, FlowError> {
    cfg.validate()?;
    if !b.is_finite() || !(b > 0.0) {
        return Err(FlowError::InvalidConfig(format!(
            "truncation radius must be finite and positive, got {b}"
        )));
    }
    if x0.dim() != model.dim || snapshot.dim != model.dim {
        return Err(FlowError::InvalidConfig(format!(
            "dimension mismatch: state {}, snapshot {}, model {}",
            x0.dim(),
            snapshot.dim,
            model.dim
        )));
    }

    let field = FrozenField::new(model, snapshot, cfg.eps);
    let d = model.dim;
    let mut y = vec![0.0; 2 * d + 1];
    x0.write_flat(&mut y[..2 * d]);

    let mut retracted = vec![0.0; 2 * d + 1];
    let mut rhs = |_t: f64, y: &[f64], dy: &mut [f64]| {
        let r = phase::norm(&y[..2 * d]);
        let scale = if r > 0.0 {
            retraction_radius(r, b) / r
        } else {
            1.0
        };
        for k in 0..2 * d {
            retracted[k] = scale * y[k];
        }
        retracted[2 * d] = y[2 * d];
        field.rhs(&retracted, dy)
    };

    let ctrl = StepControl {
        tol: cfg.ode_tol,
        h_min: cfg.h_min,
    };
    let mut stepper = Stepper::new(2 * d + 1);
    let mut h = 0.0;
    let mut times = vec![0.0];
    let mut states = vec![x0.clone()];
    let mut path_len = vec![0.0];
    let mut s_floor = 0.0;
    for k in 0..cfg.steps {
        let ta = cfg.horizon * k as f64 / cfg.steps as f64;
        let tb = cfg.horizon * (k + 1) as f64 / cfg.steps as f64;
        let out = stepper
            .drive(&mut rhs, ta, tb, &mut y, &ctrl, &mut h, |_, ys| {
                if ys[2 * d] < s_floor {
                    ys[2 * d] = s_floor;
                }
                s_floor = ys[2 * d];
            })
            .map_err(|e| AdvanceError::from_ode(e).for_particle(0))?;
        if let DriveOutcome::Collapsed { t } = out {
            // The truncated velocity is bounded, so a collapse is a numerics
            // failure, not blow-up.
            return Err(FlowError::StepCollapse {
                particle: 0,
                time: t,
                radius: phase::norm(&y[..2 * d]),
            });
        }
        times.push(tb);
        states.push(PhasePoint::from_flat(&y[..2 * d], d));
        path_len.push(y[2 * d]);
    }
    Ok(Trajectory {
        times,
        states,
        path_len,
        status: ParticleStatus::Alive,
    })
}

/// Whether a single trajectory left the domain within the horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EscapeOutcome {
    /// Escape declared; the refined first crossing of `x_max`.
    Escaped(f64),
    /// The trajectory stayed numerically tractable through the horizon.
    BoundedThrough(f64),
}

/// Integrates one particle under the field frozen on `snapshot` and reports
/// its escape time (refined to relative accuracy `1e-3`), or that it stayed
/// bounded through the horizon. Pass an empty snapshot for potential-only
/// dynamics.
pub fn escape_time(
    x0: &PhasePoint,
    model: &HamiltonianModel,
    snapshot: &ParticleMeasure,
    cfg: &FlowConfig,
) -> Result<EscapeOutcome, FlowError> {
    cfg.validate()?;
    if x0.dim() != model.dim || snapshot.dim != model.dim {
        return Err(FlowError::InvalidConfig(format!(
            "dimension mismatch: state {}, snapshot {}, model {}",
            x0.dim(),
            snapshot.dim,
            model.dim
        )));
    }
    let field = FrozenField::new(model, snapshot, cfg.eps);
    let mut x = x0.clone();
    let mut path_len = 0.0;
    let mut crossing = None;
    let mut stepper = Stepper::new(2 * model.dim + 1);
    let mut h = 0.0;
    match advance_particle(
        &field,
        cfg,
        0.0,
        cfg.horizon,
        &mut x,
        &mut path_len,
        &mut crossing,
        &mut stepper,
        &mut h,
    ) {
        Ok(AdvanceOutcome::Completed) => Ok(EscapeOutcome::BoundedThrough(cfg.horizon)),
        Ok(AdvanceOutcome::Escaped { time }) => Ok(EscapeOutcome::Escaped(time)),
        Err(e) => Err(e.for_particle(0)),
    }
}
