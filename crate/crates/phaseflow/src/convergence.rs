//! The vanishing-dissipation and scheme-refinement verification harness.
//!
//! Everything a run claims can be cross-checked from its record:
//!
//! * [`representation_check`] — the ensemble at time `t` must be exactly the
//!   time-0 particle list pushed forward and reweighted by `exp(-eps S)`;
//!   a second mode re-integrates the trajectories at a tighter tolerance to
//!   bound the true integration error rather than the bookkeeping;
//! * [`weak_residual`] — the evolution must satisfy the deficient continuity
//!   equation against space-time test functions: transport plus a mass sink
//!   of density `eps |v|`;
//! * [`trajectory_closeness`] — refining the scheme grid must move bounded
//!   trajectories less and less (common initial data across runs);
//! * [`epsilon_sweep`] / [`limit_mass_monotonicity`] — total mass curves for a
//!   decreasing dissipation sequence, extrapolated to the vanishing-dissipation
//!   limit, with monotonicity audits on the limit curve.
//!
//! Sweeps run their member evolutions as parallel whole jobs; every report is
//! assembled single-threaded in a fixed order, so repeated sweeps of the same
//! plan are bitwise identical.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::flow::{advance_particle, evolve, FlowConfig, FlowError, FrozenField, RunRecord};
use crate::measure::{pairwise_sum, ParticleMeasure, ParticleStatus};
use crate::model::HamiltonianModel;
use crate::ode::Stepper;
use crate::testfn::{Bump, TimeWindow};

/// Failures of harness construction or of the runs a harness launches.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConvergenceError {
    /// A sweep plan violated its own invariants.
    #[error("invalid sweep plan: {0}")]
    InvalidPlan(String),

    /// A member run failed; carries the dissipation rate of the offender.
    #[error("run at dissipation rate {eps} failed: {source}")]
    RunFailed {
        eps: f64,
        #[source]
        source: FlowError,
    },
}

/// Maximum over probe times and test functions of the discrepancy between
/// the push-forward representation and the measure-side integral:
/// `|sum_i w0_i exp(-eps S_i(t)) phi(X_i(t)) - integral of phi against mu_t|`.
///
/// The first sum walks the time-0 particle list in order (escaped particles
/// contribute zero); the integral walks the recorded snapshot through its own
/// pairwise reduction. The two traverse the same data, so any discrepancy
/// beyond summation reordering (about `1e-12` relative) is a bookkeeping bug.
pub fn representation_check(
    record: &RunRecord,
    mu0: &ParticleMeasure,
    battery: &[Bump],
    eps: f64,
) -> f64 {
    let mut worst = 0.0_f64;
    for snapshot in &record.snapshots {
        for bump in battery {
            let mut direct = 0.0;
            for i in 0..mu0.particles.len() {
                let particle = &snapshot.particles[i];
                if particle.is_alive() {
                    direct += mu0.particles[i].w0
                        * (-eps * particle.path_len).exp()
                        * bump.eval(&particle.x);
                }
            }
            let integral = snapshot.integrate(eps, |x| bump.eval(x));
            worst = worst.max((direct - integral).abs());
        }
    }
    worst
}

/// [`representation_check`] in re-integration mode: every trajectory is
/// re-integrated through the recorded frozen fields at a 100x tighter
/// tolerance, and the push-forward sums built from the re-integrated states
/// are compared against the recorded snapshots. The result bounds the actual
/// integration error of the run as seen through the test battery (target:
/// `10 * ode_tol * ||phi||_C1 * T` for well-conditioned flows).
///
/// Particles whose re-integration escapes or collapses propagate the failure;
/// particles the run itself marked escaped contribute zero on both sides from
/// their escape onward.
pub fn representation_check_reintegrated(
    record: &RunRecord,
    mu0: &ParticleMeasure,
    model: &HamiltonianModel,
    battery: &[Bump],
    eps: f64,
) -> Result<f64, FlowError> {
    let cfg = &record.config;
    let mut tight = cfg.clone();
    tight.ode_tol = cfg.ode_tol * 1e-2;
    let times = record.times();

    let dim = mu0.dim;
    let mut states: Vec<_> = mu0.particles.iter().map(|p| p.x.clone()).collect();
    let mut paths: Vec<f64> = mu0.particles.iter().map(|p| p.path_len).collect();
    let mut alive: Vec<bool> = vec![true; mu0.particles.len()];
    let mut crossings = vec![None; mu0.particles.len()];
    let mut warm = vec![0.0; mu0.particles.len()];
    let mut stepper = Stepper::new(2 * dim + 1);

    let mut worst = 0.0_f64;
    let compare = |snapshot: &ParticleMeasure,
                   states: &[crate::phase::PhasePoint],
                   paths: &[f64],
                   alive: &[bool],
                   worst: &mut f64| {
        for bump in battery {
            let mut direct = 0.0;
            for i in 0..states.len() {
                if alive[i] && snapshot.particles[i].is_alive() {
                    direct += mu0.particles[i].w0 * (-eps * paths[i]).exp() * bump.eval(&states[i]);
                }
            }
            let integral = snapshot.integrate(eps, |x| bump.eval(x));
            *worst = worst.max((direct - integral).abs());
        }
    };

    compare(&record.snapshots[0], &states, &paths, &alive, &mut worst);
    for k in 0..times.len() - 1 {
        let field = FrozenField::new(model, &record.snapshots[k], eps);
        for i in 0..states.len() {
            if !alive[i] {
                continue;
            }
            match advance_particle(
                &field,
                &tight,
                times[k],
                times[k + 1],
                &mut states[i],
                &mut paths[i],
                &mut crossings[i],
                &mut stepper,
                &mut warm[i],
            ) {
                Ok(crate::flow::AdvanceOutcome::Completed) => {}
                Ok(crate::flow::AdvanceOutcome::Escaped { .. }) => alive[i] = false,
                Err(e) => return Err(e.for_particle(i)),
            }
        }
        compare(
            &record.snapshots[k + 1],
            &states,
            &paths,
            &alive,
            &mut worst,
        );
    }
    Ok(worst)
}

/// Space-time weak-form residual of a run against one bump and one time
/// window: the quadrature of
///
/// ```text
/// int int ( phi w'(t) + <grad phi, v> w(t) - eps |v| phi w(t) ) dmu_t dt ,
/// ```
///
/// which vanishes for exact deficient transport whenever the window vanishes
/// at both ends of the run. The time-derivative term is assembled by exact
/// differencing of the window (`sum (A_k + A_{k+1})/2 (w_{k+1} - w_k)` with
/// `A_k` the bump mass at grid time `k`), so a stationary ensemble telescopes
/// to zero instead of accumulating quadrature error; the transport and sink
/// terms use the trapezoid rule on the grid. The velocity at each snapshot is
/// the self-consistent field of that snapshot.
///
/// Requires at least 20 grid times strictly inside the window support.
pub fn weak_residual(
    record: &RunRecord,
    model: &HamiltonianModel,
    bump: &Bump,
    window: &TimeWindow,
    eps: f64,
) -> f64 {
    let times = record.times();
    let inside = times.iter().filter(|&&t| window.eval(t) > 0.0).count();
    assert!(
        inside >= 20,
        "need at least 20 grid times inside the window support, found {inside}"
    );

    let dim = record.snapshots[0].dim;
    let mut flat = vec![0.0; 2 * dim];
    let mut grad = vec![0.0; 2 * dim];
    let mut velocity = vec![0.0; 2 * dim + 1];

    // A_k: bump mass; C_k: transport minus sink, already multiplied by w(t_k).
    let mut bump_mass = Vec::with_capacity(times.len());
    let mut flux = Vec::with_capacity(times.len());
    for (k, snapshot) in record.snapshots.iter().enumerate() {
        bump_mass.push(snapshot.integrate(eps, |x| bump.eval(x)));

        let w = window.eval(times[k]);
        if w == 0.0 {
            flux.push(0.0);
            continue;
        }
        let field = FrozenField::new(model, snapshot, eps);
        let mut terms = Vec::with_capacity(snapshot.particles.len());
        for particle in &snapshot.particles {
            if !particle.is_alive() {
                continue;
            }
            particle.x.write_flat(&mut flat);
            let mut y = vec![0.0; 2 * dim + 1];
            y[..2 * dim].copy_from_slice(&flat);
            field.rhs(&y, &mut velocity);
            bump.grad_flat(&flat, &mut grad);
            let transport = crate::phase::dot(&grad, &velocity[..2 * dim]);
            let sink = eps * velocity[2 * dim] * bump.eval_flat(&flat);
            terms.push(particle.weight(eps) * (transport - sink));
        }
        flux.push(w * pairwise_sum(&terms));
    }

    let mut residual = 0.0;
    for k in 0..times.len() - 1 {
        let dw = window.eval(times[k + 1]) - window.eval(times[k]);
        residual += 0.5 * (bump_mass[k] + bump_mass[k + 1]) * dw;
        residual += 0.5 * (flux[k] + flux[k + 1]) * (times[k + 1] - times[k]);
    }
    residual.abs()
}

/// Result of comparing paired trajectories across two scheme resolutions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClosenessReport {
    /// Max over the cohort and the shared grid times of the phase distance
    /// between the paired states.
    pub deviation: f64,
    /// Number of particles in the cohort.
    pub cohort: usize,
    /// True when no particle qualified; the deviation is then a vacuous 0.
    pub empty_cohort: bool,
}

/// Runs the same initial ensemble at two scheme resolutions `n1 < n2`
/// (everything else shared) and reports the sup deviation over the cohort of
/// particles whose *fine* trajectory stays inside the phase-space ball of
/// radius `l` up to time `t`. States are compared at the coarse grid times,
/// which requires `n2` to be a multiple of `n1`.
pub fn trajectory_closeness(
    model: &HamiltonianModel,
    mu0: &ParticleMeasure,
    base: &FlowConfig,
    n1: usize,
    n2: usize,
    l: f64,
    t: f64,
) -> Result<ClosenessReport, ConvergenceError> {
    assert!(
        n1 >= 1 && n1 < n2 && n2.is_multiple_of(n1),
        "need n1 < n2 with n2 a multiple of n1"
    );
    assert!(
        t <= base.horizon * (1.0 + 1e-12),
        "comparison time beyond the horizon"
    );
    let mut coarse_cfg = base.clone();
    coarse_cfg.steps = n1;
    let mut fine_cfg = base.clone();
    fine_cfg.steps = n2;

    let coarse = complete_run(mu0, model, &coarse_cfg)?;
    let fine = complete_run(mu0, model, &fine_cfg)?;

    let stride = n2 / n1;
    let coarse_times = coarse.times();
    let mut deviation = 0.0_f64;
    let mut cohort = 0;
    for i in 0..mu0.particles.len() {
        let fine_traj = fine.particle_trajectory(i);
        if let ParticleStatus::Escaped { time } = fine_traj.status {
            if time <= t {
                continue;
            }
        }
        let in_ball = fine_traj
            .times
            .iter()
            .zip(&fine_traj.states)
            .take_while(|(&s, _)| s <= t * (1.0 + 1e-12))
            .all(|(_, x)| x.norm() <= l);
        if !in_ball {
            continue;
        }
        cohort += 1;
        let coarse_traj = coarse.particle_trajectory(i);
        for (k, &s) in coarse_times.iter().enumerate() {
            if s > t * (1.0 + 1e-12) {
                break;
            }
            deviation =
                deviation.max(coarse_traj.states[k].distance(&fine_traj.states[k * stride]));
        }
    }
    Ok(ClosenessReport {
        deviation,
        cohort,
        empty_cohort: cohort == 0,
    })
}

fn complete_run(
    mu0: &ParticleMeasure,
    model: &HamiltonianModel,
    cfg: &FlowConfig,
) -> Result<RunRecord, ConvergenceError> {
    let record = evolve(mu0, model, cfg).map_err(|source| ConvergenceError::RunFailed {
        eps: cfg.eps,
        source,
    })?;
    if let Some(source) = record.failure.clone() {
        return Err(ConvergenceError::RunFailed {
            eps: cfg.eps,
            source,
        });
    }
    Ok(record)
}

/// A family of runs sharing everything but the dissipation rate, plus the
/// scheme resolutions at which refinement comparisons are made.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPlan {
    /// Dissipation rates, strictly decreasing (e.g. geometric).
    pub eps: Vec<f64>,
    /// Scheme resolutions, strictly increasing; mass runs use the largest.
    pub steps: Vec<usize>,
    /// Shared time horizon.
    pub horizon: f64,
    /// Shared integrator tolerance.
    pub ode_tol: f64,
    /// Shared numerical-domain radius.
    pub x_max: f64,
}

impl SweepPlan {
    /// A plan with the default numerics of [`FlowConfig::new`].
    pub fn new(eps: Vec<f64>, steps: Vec<usize>, horizon: f64) -> Self {
        let defaults = FlowConfig::new(0.0, horizon, 1);
        Self {
            eps,
            steps,
            horizon,
            ode_tol: defaults.ode_tol,
            x_max: defaults.x_max,
        }
    }

    /// Checks the plan invariants, reporting every problem at once.
    pub fn validate(&self) -> Result<(), ConvergenceError> {
        let mut problems = Vec::new();
        if self.eps.len() < 2 {
            problems.push("need at least 2 dissipation rates to extrapolate".to_string());
        }
        if !self.eps.iter().all(|e| e.is_finite() && *e >= 0.0) {
            problems.push("dissipation rates must be finite and nonnegative".to_string());
        }
        if !self.eps.windows(2).all(|w| w[0] > w[1]) {
            problems.push("dissipation rates must be strictly decreasing".to_string());
        }
        if self.steps.is_empty() {
            problems.push("need at least one scheme resolution".to_string());
        }
        if self.steps.contains(&0) {
            problems.push("scheme resolutions must be positive".to_string());
        }
        if !self.steps.windows(2).all(|w| w[0] < w[1]) {
            problems.push("scheme resolutions must be strictly increasing".to_string());
        }
        if let (Some(&eps), Some(_)) = (self.eps.first(), self.steps.last()) {
            if let Err(e) = self.config_for(eps).validate() {
                problems.push(e.to_string());
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(ConvergenceError::InvalidPlan(problems.join("; ")))
        }
    }

    /// The run configuration for one dissipation rate: the largest resolution
    /// of the plan with the shared numerics.
    pub fn config_for(&self, eps: f64) -> FlowConfig {
        let mut cfg = FlowConfig::new(eps, self.horizon, *self.steps.last().unwrap_or(&1));
        cfg.ode_tol = self.ode_tol;
        cfg.x_max = self.x_max;
        cfg
    }
}

/// Mass curves of a dissipation sweep and their extrapolation to the
/// vanishing-dissipation limit.
///
/// Probe times exclude `t = 0` (where every mass is the initial mass by
/// definition); rows of `masses` follow the order of `eps`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MassReport {
    /// Dissipation rates, strictly decreasing.
    pub eps: Vec<f64>,
    /// Probe times (the shared run grid without `t = 0`).
    pub probe_times: Vec<f64>,
    /// `masses[k][j]`: total mass at `eps[k]`, `probe_times[j]`.
    pub masses: Vec<Vec<f64>>,
    /// `successive_diffs[k][j] = |masses[k][j] - masses[k+1][j]|`.
    pub successive_diffs: Vec<Vec<f64>>,
    /// Per-time limit from Richardson extrapolation on the last two rates.
    pub extrapolated: Vec<f64>,
    /// Per-time error estimate: the last successive difference.
    pub error_estimate: Vec<f64>,
    /// Per-rate flag: mass nonincreasing in time (must always hold).
    pub monotone_in_time: Vec<bool>,
    /// Per-time flag: successive differences shrink monotonically down the
    /// rate sequence. Failures are reported, not fatal: the limit curve is
    /// only guaranteed at its continuity points.
    pub diffs_shrink: Vec<bool>,
}

/// Runs the plan's dissipation sequence (parallel whole jobs, fixed largest
/// resolution) and assembles the [`MassReport`].
pub fn epsilon_sweep(
    plan: &SweepPlan,
    mu0: &ParticleMeasure,
    model: &HamiltonianModel,
) -> Result<MassReport, ConvergenceError> {
    plan.validate()?;
    let records: Vec<RunRecord> = plan
        .eps
        .par_iter()
        .map(|&eps| complete_run(mu0, model, &plan.config_for(eps)))
        .collect::<Result<_, _>>()?;
    let refs: Vec<&RunRecord> = records.iter().collect();
    Ok(mass_report_from_records(&plan.eps, &refs))
}

/// Assembles the [`MassReport`] for records that already ran: one record per
/// dissipation rate, same order as `eps` (strictly decreasing, length at
/// least 2), all sharing one time grid.
pub fn mass_report_from_records(eps: &[f64], records: &[&RunRecord]) -> MassReport {
    assert!(
        eps.len() >= 2 && eps.len() == records.len(),
        "need one record per rate, 2+ rates"
    );
    assert!(
        eps.windows(2).all(|w| w[0] > w[1]),
        "rates must be strictly decreasing"
    );

    let mut masses = Vec::with_capacity(eps.len());
    let mut monotone_in_time = Vec::with_capacity(eps.len());
    let probe_times: Vec<f64> = records[0].times()[1..].to_vec();
    for record in records {
        let row: Vec<f64> = record.rows[1..].iter().map(|r| r.mass).collect();
        assert!(
            row.len() == probe_times.len(),
            "records must share one time grid"
        );
        monotone_in_time.push(record.rows.windows(2).all(|w| w[1].mass <= w[0].mass));
        masses.push(row);
    }

    let m = eps.len();
    let count = probe_times.len();
    let successive_diffs: Vec<Vec<f64>> = (0..m - 1)
        .map(|k| {
            (0..count)
                .map(|j| (masses[k][j] - masses[k + 1][j]).abs())
                .collect()
        })
        .collect();
    let (e_prev, e_last) = (eps[m - 2], eps[m - 1]);
    let shrink = e_last / (e_prev - e_last);
    let extrapolated: Vec<f64> = (0..count)
        .map(|j| masses[m - 1][j] + (masses[m - 1][j] - masses[m - 2][j]) * shrink)
        .collect();
    let error_estimate: Vec<f64> = (0..count).map(|j| successive_diffs[m - 2][j]).collect();
    let diffs_shrink: Vec<bool> = (0..count)
        .map(|j| successive_diffs.windows(2).all(|w| w[1][j] <= w[0][j]))
        .collect();

    MassReport {
        eps: eps.to_vec(),
        probe_times,
        masses,
        successive_diffs,
        extrapolated,
        error_estimate,
        monotone_in_time,
        diffs_shrink,
    }
}

/// Outcome of auditing the extrapolated limit curve for monotonicity.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotonicityAudit {
    /// True when every interval respects the slack.
    pub ok: bool,
    /// Per-interval slack `allowed - uptick`; negative entries are
    /// violations.
    pub slacks: Vec<f64>,
    /// The worst interval `(t_j, t_{j+1})` when a violation exists.
    pub worst_interval: Option<(f64, f64)>,
}

/// Audits the extrapolated limit curve: it must be nonincreasing in time
/// within twice the extrapolation error estimate of each interval's
/// endpoints. Requires at least 3 probe times.
pub fn limit_mass_monotonicity(report: &MassReport) -> MonotonicityAudit {
    assert!(
        report.probe_times.len() >= 3,
        "need at least 3 probe times to audit a curve"
    );
    let mut slacks = Vec::with_capacity(report.extrapolated.len() - 1);
    let mut worst: Option<(usize, f64)> = None;
    for j in 0..report.extrapolated.len() - 1 {
        let uptick = report.extrapolated[j + 1] - report.extrapolated[j];
        let allowed = 2.0 * report.error_estimate[j].max(report.error_estimate[j + 1]);
        let slack = allowed - uptick;
        if slack < 0.0 && worst.is_none_or(|(_, s)| slack < s) {
            worst = Some((j, slack));
        }
        slacks.push(slack);
    }
    let worst_interval = worst.map(|(j, _)| (report.probe_times[j], report.probe_times[j + 1]));
    MonotonicityAudit {
        ok: worst_interval.is_none(),
        slacks,
        worst_interval,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::WeightedParticle;
    use crate::model::{ExternalPotential, InteractionKernel};
    use crate::phase::PhasePoint;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn line_ensemble(speeds: &[f64], positions: &[f64]) -> ParticleMeasure {
        let w0 = 1.0 / speeds.len() as f64;
        let particles = speeds
            .iter()
            .zip(positions)
            .map(|(&p, &q)| WeightedParticle::new(PhasePoint::new(&[p], &[q]), w0))
            .collect();
        ParticleMeasure::new(1, particles)
    }

    fn harmonic_run(eps: f64, steps: usize) -> (ParticleMeasure, HamiltonianModel, RunRecord) {
        let model = HamiltonianModel::without_interaction(1, ExternalPotential::harmonic(1.0));
        let mu0 = line_ensemble(&[0.3, -0.2, 0.0, 0.4], &[-0.5, 0.1, 0.7, -0.9]);
        let cfg = FlowConfig::new(eps, 3.0, steps);
        let record = evolve(&mu0, &model, &cfg).unwrap();
        (mu0, model, record)
    }

    #[test]
    fn bookkeeping_representation_is_an_identity() {
        let (mu0, _, record) = harmonic_run(0.2, 24);
        let battery = vec![
            Bump::new(vec![0.0, 0.0], 1.5).unwrap(),
            Bump::new(vec![0.3, -0.4], 0.8).unwrap(),
        ];
        let gap = representation_check(&record, &mu0, &battery, 0.2);
        assert!(gap <= 1e-12, "bookkeeping gap {gap}");
    }

    #[test]
    fn representation_of_an_unsupported_bump_is_exactly_zero() {
        let (mu0, _, record) = harmonic_run(0.1, 12);
        let battery = vec![Bump::new(vec![50.0, 50.0], 1.0).unwrap()];
        assert_eq!(representation_check(&record, &mu0, &battery, 0.1), 0.0);
    }

    #[test]
    fn reintegrated_representation_matches_on_free_streaming() {
        // No force at all: trajectories are straight lines, which both the
        // run and the re-integration reproduce to rounding.
        let model = HamiltonianModel::without_interaction(1, ExternalPotential::zero());
        let mu0 = line_ensemble(&[1.0, -0.5, 0.25], &[0.0, 0.3, -0.2]);
        let cfg = FlowConfig::new(0.5, 2.0, 16);
        let record = evolve(&mu0, &model, &cfg).unwrap();
        let battery = vec![Bump::new(vec![0.5, 0.5], 2.5).unwrap()];
        let gap = representation_check_reintegrated(&record, &mu0, &model, &battery, 0.5).unwrap();
        assert!(gap <= 1e-10, "re-integration gap {gap}");
    }

    #[test]
    fn reintegrated_representation_bounds_ode_error_on_the_harmonic_run() {
        let (mu0, model, record) = harmonic_run(0.15, 24);
        let battery = vec![Bump::new(vec![0.0, 0.0], 2.0).unwrap()];
        let gap = representation_check_reintegrated(&record, &mu0, &model, &battery, 0.15).unwrap();
        // ||phi||_C1 for the unit-height bump of radius 2 is below 2, and
        // T = 3, so the contract bound is 10 * tol * 2 * 3.
        let bound = 10.0 * record.config.ode_tol * 2.0 * 3.0;
        assert!(gap <= bound, "gap {gap} exceeds contract bound {bound}");
    }

    #[test]
    fn weak_residual_of_an_unsupported_bump_is_exactly_zero() {
        let (_, model, record) = harmonic_run(0.1, 32);
        let bump = Bump::new(vec![40.0, 40.0], 1.0).unwrap();
        let window = TimeWindow::new(0.5, 2.5, 0.5).unwrap();
        assert_eq!(weak_residual(&record, &model, &bump, &window, 0.1), 0.0);
    }

    #[test]
    fn weak_residual_telescopes_on_a_stationary_ensemble() {
        // Particles at rest at the potential minimum: v = 0 kills the
        // transport and sink terms pointwise, and the time term telescopes.
        let model = HamiltonianModel::without_interaction(1, ExternalPotential::harmonic(2.0));
        let mu0 = line_ensemble(&[0.0, 0.0], &[0.0, 0.0]);
        let cfg = FlowConfig::new(0.3, 3.0, 32);
        let record = evolve(&mu0, &model, &cfg).unwrap();
        let bump = Bump::new(vec![0.0, 0.0], 1.0).unwrap();
        let window = TimeWindow::new(0.5, 2.5, 0.5).unwrap();
        let residual = weak_residual(&record, &model, &bump, &window, 0.3);
        assert!(residual <= 1e-13, "stationary residual {residual}");
    }

    #[test]
    fn weak_residual_shrinks_under_grid_refinement() {
        let (_, model, coarse) = harmonic_run(0.1, 64);
        let (_, _, fine) = harmonic_run(0.1, 128);
        let bump = Bump::new(vec![0.0, 0.0], 2.0).unwrap();
        let window = TimeWindow::new(0.5, 2.5, 0.5).unwrap();
        let r_coarse = weak_residual(&coarse, &model, &bump, &window, 0.1);
        let r_fine = weak_residual(&fine, &model, &bump, &window, 0.1);
        assert!(r_fine > 0.0);
        let ratio = r_coarse / r_fine;
        assert!(
            ratio >= 1.8,
            "refinement ratio {ratio} below 1.8 ({r_coarse} vs {r_fine})"
        );
    }

    #[test]
    fn closeness_without_interaction_is_integrator_noise() {
        // The frozen field does not depend on the grid when there is no
        // interaction, so both resolutions integrate the same ODE.
        let model = HamiltonianModel::without_interaction(1, ExternalPotential::harmonic(1.0));
        let mu0 = line_ensemble(&[0.2, -0.3, 0.1], &[0.4, -0.1, 0.8]);
        let cfg = FlowConfig::new(0.1, 2.0, 1);
        let report = trajectory_closeness(&model, &mu0, &cfg, 16, 32, 10.0, 2.0).unwrap();
        assert_eq!(report.cohort, 3);
        assert!(!report.empty_cohort);
        assert!(
            report.deviation <= 2.0 * cfg.ode_tol * cfg.horizon,
            "deviation {} above integrator noise",
            report.deviation
        );
    }

    #[test]
    fn closeness_decreases_strictly_under_refinement() {
        // With interaction the frozen field genuinely depends on the grid,
        // and halving the interval must tighten the agreement.
        let kernel = InteractionKernel::new(2.0, 0.5).unwrap();
        let model = HamiltonianModel::with_interaction(1, kernel, ExternalPotential::harmonic(0.5));
        let speeds: Vec<f64> = (0..12)
            .map(|i| 0.3 * ((i * 7 % 12) as f64 / 11.0 - 0.5))
            .collect();
        let positions: Vec<f64> = (0..12).map(|i| -1.0 + 2.0 * i as f64 / 11.0).collect();
        let mu0 = line_ensemble(&speeds, &positions);
        let cfg = FlowConfig::new(0.1, 1.5, 1);
        let d12 = trajectory_closeness(&model, &mu0, &cfg, 8, 16, 10.0, 1.5).unwrap();
        let d23 = trajectory_closeness(&model, &mu0, &cfg, 16, 32, 10.0, 1.5).unwrap();
        assert_eq!(d12.cohort, 12);
        assert!(
            d23.deviation < d12.deviation,
            "refinement did not tighten: {} -> {}",
            d12.deviation,
            d23.deviation
        );
    }

    #[test]
    fn closeness_flags_an_empty_cohort() {
        let model = HamiltonianModel::without_interaction(1, ExternalPotential::harmonic(1.0));
        let mu0 = line_ensemble(&[0.2, -0.3], &[0.4, -0.1]);
        let cfg = FlowConfig::new(0.0, 1.0, 1);
        let report = trajectory_closeness(&model, &mu0, &cfg, 4, 8, 0.01, 1.0).unwrap();
        assert!(report.empty_cohort);
        assert_eq!(report.cohort, 0);
        assert_eq!(report.deviation, 0.0);
    }

    #[test]
    fn plan_validation_collects_every_problem() {
        let plan = SweepPlan::new(vec![0.1, 0.2], vec![8, 4, 0], -1.0);
        let err = plan.validate().unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("strictly decreasing"), "{msg}");
        assert!(msg.contains("strictly increasing"), "{msg}");
        assert!(msg.contains("positive"), "{msg}");

        assert!(SweepPlan::new(vec![0.4, 0.2, 0.1], vec![8, 16], 2.0)
            .validate()
            .is_ok());
    }

    #[test]
    fn sweep_of_resting_particles_keeps_unit_mass() {
        let model = HamiltonianModel::without_interaction(1, ExternalPotential::zero());
        let mu0 = line_ensemble(&[0.0, 0.0, 0.0], &[-0.3, 0.0, 0.4]);
        let plan = SweepPlan::new(vec![0.4, 0.2, 0.1], vec![8], 2.0);
        let report = epsilon_sweep(&plan, &mu0, &model).unwrap();
        for row in &report.masses {
            assert!(
                row.iter().all(|&m| m == 1.0),
                "rest masses must stay exactly 1"
            );
        }
        assert!(report.extrapolated.iter().all(|&m| m == 1.0));
        assert!(report.monotone_in_time.iter().all(|&f| f));
    }

    #[test]
    fn sweep_of_unit_speed_streams_matches_the_exact_decay() {
        // Phi = 0, |p| = 1 everywhere: S_t = t exactly, so the mass curve is
        // exp(-eps t) and the extrapolation error is the second-order term
        // eps_last * eps_prev * t^2 / 2 of the exponential.
        let model = HamiltonianModel::without_interaction(1, ExternalPotential::zero());
        let mu0 = line_ensemble(&[1.0, 1.0, -1.0, -1.0], &[-0.6, -0.2, 0.2, 0.6]);
        let plan = SweepPlan::new(vec![0.4, 0.2, 0.1, 0.05], vec![10], 1.0);
        let report = epsilon_sweep(&plan, &mu0, &model).unwrap();

        for (k, &eps) in report.eps.iter().enumerate() {
            for (j, &t) in report.probe_times.iter().enumerate() {
                assert_relative_eq!(report.masses[k][j], (-eps * t).exp(), max_relative = 1e-9);
            }
        }
        for (j, &t) in report.probe_times.iter().enumerate() {
            let gap = 1.0 - report.extrapolated[j];
            assert!(gap > 0.0, "extrapolation must stay below the limit");
            assert!(
                gap <= 0.05 * 0.1 * t * t,
                "extrapolation gap {gap} at t = {t} beyond the second-order term"
            );
            assert!(report.diffs_shrink[j], "differences must shrink at t = {t}");
        }
        // Pathwise dissipation is monotone in the rate: for the shared
        // trajectories, smaller eps can only keep more mass — exactly.
        for k in 0..report.eps.len() - 1 {
            for j in 0..report.probe_times.len() {
                assert!(report.masses[k + 1][j] >= report.masses[k][j]);
            }
        }
    }

    #[test]
    fn monotonicity_audit_accepts_real_curves_and_rejects_upticks() {
        let model = HamiltonianModel::without_interaction(1, ExternalPotential::zero());
        let mu0 = line_ensemble(&[1.0, -1.0], &[-0.1, 0.1]);
        let plan = SweepPlan::new(vec![0.2, 0.1, 0.05], vec![6], 1.5);
        let report = epsilon_sweep(&plan, &mu0, &model).unwrap();
        let audit = limit_mass_monotonicity(&report);
        assert!(audit.ok);
        assert!(audit.worst_interval.is_none());
        assert_eq!(audit.slacks.len(), report.probe_times.len() - 1);

        // Corrupt one point upward by far more than the error estimate.
        let mut corrupted = report.clone();
        corrupted.extrapolated[3] += 0.5;
        let audit = limit_mass_monotonicity(&corrupted);
        assert!(!audit.ok);
        let (from, to) = audit.worst_interval.unwrap();
        // The jump into index 3 is the worst interval.
        assert_eq!(from, corrupted.probe_times[2]);
        assert_eq!(to, corrupted.probe_times[3]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        // Masses live in [0, 1] and never increase in time, whatever the
        // ensemble and rate.
        #[test]
        fn prop_sweep_masses_are_unit_interval_and_monotone(
            coords in proptest::collection::vec((-1.5f64..1.5, -1.5f64..1.5), 2..8),
            eps_base in 0.05f64..0.8,
        ) {
            let speeds: Vec<f64> = coords.iter().map(|c| c.0).collect();
            let positions: Vec<f64> = coords.iter().map(|c| c.1).collect();
            let mu0 = line_ensemble(&speeds, &positions);
            let model =
                HamiltonianModel::without_interaction(1, ExternalPotential::harmonic(1.0));
            let plan = SweepPlan::new(vec![eps_base, 0.5 * eps_base], vec![5], 1.0);
            let report = epsilon_sweep(&plan, &mu0, &model).unwrap();
            for (k, row) in report.masses.iter().enumerate() {
                prop_assert!(report.monotone_in_time[k]);
                for &m in row {
                    prop_assert!((0.0..=1.0).contains(&m));
                }
            }
        }
    }
}
