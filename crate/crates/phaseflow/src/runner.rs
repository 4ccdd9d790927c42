//! Scenario orchestration: samples the initial ensemble, executes the
//! configured runs, writes artifacts, and audits the results.
//!
//! Every artifact is plain text with deterministic bytes: floats print in
//! shortest round-trip form, no document carries a timestamp, and no value
//! depends on thread scheduling. Repeating an invocation with the same
//! configuration and seed therefore reproduces every file byte for byte.
//!
//! Layout under the output directory:
//!
//! ```text
//! meta.json              inventory: seed, rates, resolutions, config echo
//! audits.json            every audit line with its outcome
//! certificates.json      no-return certificates, bookkeeping, residuals
//! sweep.csv              mass matrix over dissipation rates (sweep mode)
//! refinement.csv         resolution-doubling study (sweep mode)
//! run-eps-<rate>/
//!   record.csv           one diagnostics row per grid time
//!   snapshots/t<k>.csv   full ensemble at grid time k (optional)
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::ScenarioConfig;
use crate::convergence::{
    limit_mass_monotonicity, mass_report_from_records, representation_check, trajectory_closeness,
    weak_residual, ConvergenceError, MassReport,
};
use crate::flow::{evolve, FlowError, RunRecord};
use crate::measure::{MomentValue, ParticleMeasure, ParticleStatus, WeightedParticle};
use crate::model::HamiltonianModel;
use crate::no_return::{
    cylinder_containment_audit, escape_bound_tau, find_star_rings, momentum_growth_rate,
    no_return_monitor, validate_bounding_potential, BoundingPotential, BoundingReport,
    PhaseCylinder, StarRing,
};
use crate::phase::PhasePoint;
use crate::sampler::{sample_initial_measure, SamplerError};

/// Failures outside of audit findings: filesystem problems, malformed
/// artifacts, and runs that cannot start at all.
#[derive(Debug, Error)]
pub enum RunnerError {
    /// Reading or writing an artifact failed.
    #[error("io error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    /// The evolution could not start.
    #[error("run at rate {eps} could not start: {source}")]
    Run {
        eps: f64,
        #[source]
        source: FlowError,
    },
    /// The initial ensemble could not be sampled.
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    /// An artifact exists but does not parse.
    #[error("malformed artifact {path}: {reason}")]
    Artifact { path: String, reason: String },
}

fn io_err(path: &Path, source: std::io::Error) -> RunnerError {
    RunnerError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn artifact_err(path: &Path, reason: impl Into<String>) -> RunnerError {
    RunnerError::Artifact {
        path: path.display().to_string(),
        reason: reason.into(),
    }
}

/// Overrides applied on top of a scenario configuration.
#[derive(Debug, Clone, Default)]
pub struct RunnerOptions {
    /// Replaces the configured sampling seed.
    pub seed: Option<u64>,
    /// Replaces the configured output directory.
    pub out_dir: Option<PathBuf>,
}

/// One named check with its outcome.
#[derive(Debug, Clone, Serialize)]
pub struct AuditLine {
    /// Stable audit name.
    pub name: String,
    /// Outcome.
    pub passed: bool,
    /// Human-readable evidence (worst value, counts, ...).
    pub detail: String,
}

impl AuditLine {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

/// Everything a scenario execution or artifact audit produced.
#[derive(Debug)]
pub struct ScenarioReport {
    /// Scenario name.
    pub name: String,
    /// Directory holding the artifacts.
    pub out_dir: PathBuf,
    /// One-screen summary lines.
    pub summary: Vec<String>,
    /// Every audit with its outcome.
    pub audits: Vec<AuditLine>,
}

impl ScenarioReport {
    /// True when every audit passed.
    pub fn all_passed(&self) -> bool {
        self.audits.iter().all(|a| a.passed)
    }

    /// The summary plus a verdict per audit, failures expanded.
    pub fn render(&self) -> String {
        let mut s = String::new();
        for line in &self.summary {
            let _ = writeln!(s, "{line}");
        }
        if !self.audits.is_empty() {
            let passed = self.audits.iter().filter(|a| a.passed).count();
            let _ = writeln!(s, "audits: {passed}/{} passed", self.audits.len());
            for a in &self.audits {
                if a.passed {
                    let _ = writeln!(s, "  ok   {}", a.name);
                } else {
                    let _ = writeln!(s, "  FAIL {} -- {}", a.name, a.detail);
                }
            }
        }
        s
    }
}

/// Inventory written next to the artifacts; everything an audit needs to
/// re-read them without guessing.
#[derive(Debug, Serialize, Deserialize)]
struct MetaDoc {
    name: String,
    dimension: usize,
    seed: u64,
    eps: Vec<f64>,
    steps: usize,
    alphas: Vec<f64>,
    snapshots: String,
    sweep: bool,
    refinement_steps: Vec<usize>,
    runs: Vec<RunEntry>,
    config: ScenarioConfig,
}

#[derive(Debug, Serialize, Deserialize)]
struct RunEntry {
    eps: f64,
    dir: String,
    rows: usize,
    escaped_final: usize,
    completed: bool,
}

#[derive(Debug, Serialize)]
struct CertificatesDoc {
    bounding: Option<BoundingSection>,
    rings: Vec<StarRing>,
    escape_bounds: Vec<EscapeBoundLine>,
    runs: Vec<RunCertificates>,
}

#[derive(Debug, Serialize)]
struct BoundingSection {
    profile: BoundingPotential,
    report: BoundingReport,
}

#[derive(Debug, Serialize)]
struct EscapeBoundLine {
    ring_radius: f64,
    inner_radius: f64,
    tau: Option<f64>,
    converged: Option<bool>,
    exit_speed: Option<f64>,
    note: String,
}

#[derive(Debug, Serialize)]
struct RunCertificates {
    eps: f64,
    completed: bool,
    final_mass: f64,
    monitors: Vec<RingMonitorSummary>,
    cylinder: Option<CylinderSummary>,
    bookkeeping_deviation: Option<f64>,
    weak_residuals: Vec<f64>,
    tail_maxima: Vec<TailLine>,
}

#[derive(Debug, Serialize)]
struct RingMonitorSummary {
    ring_radius: f64,
    crossings: usize,
    speed_violations: usize,
    energy_violations: usize,
    reentries: usize,
    undersampled: usize,
}

#[derive(Debug, Serialize)]
struct CylinderSummary {
    l_star: f64,
    a_star: f64,
    eta: f64,
    audited: usize,
    position_exits: usize,
    momentum_violations: usize,
}

#[derive(Debug, Serialize)]
struct TailLine {
    radius: f64,
    max_value: f64,
}

/// Executes every configured run at the finest resolution, writes the
/// artifacts, and audits the results. The exit gate is
/// [`ScenarioReport::all_passed`].
pub fn run_scenario(
    cfg: &ScenarioConfig,
    opts: &RunnerOptions,
) -> Result<ScenarioReport, RunnerError> {
    execute(cfg, opts, false)
}

/// Like [`run_scenario`], plus the dissipation-rate mass matrix with its
/// extrapolated limit (`sweep.csv`) and the resolution-doubling study
/// (`refinement.csv`) when the configuration lists several resolutions.
pub fn sweep_scenario(
    cfg: &ScenarioConfig,
    opts: &RunnerOptions,
) -> Result<ScenarioReport, RunnerError> {
    execute(cfg, opts, true)
}

fn execute(
    cfg: &ScenarioConfig,
    opts: &RunnerOptions,
    sweep: bool,
) -> Result<ScenarioReport, RunnerError> {
    let model = cfg.build_model();
    let seed = opts.seed.unwrap_or(cfg.initial.seed);
    let mu0 = sample_initial_measure(&cfg.build_sampler_spec(), seed)?;
    let out_dir = opts
        .out_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from(&cfg.output.directory));
    fs::create_dir_all(&out_dir).map_err(|e| io_err(&out_dir, e))?;

    let eps_list = cfg.eps_values();
    let steps = *cfg
        .steps_values()
        .last()
        .expect("a validated flow lists a resolution");
    let alphas = cfg.probes.alphas.clone();

    let mut audits = Vec::new();
    let mut summary = vec![format!("scenario {} -> {}", cfg.name, out_dir.display())];
    summary.push(format!(
        "{} particles, dimension {}, seed {}, {} steps to horizon {}",
        mu0.particles.len(),
        cfg.dimension,
        seed,
        steps,
        cfg.flow.horizon
    ));

    // One run per dissipation rate at the finest configured resolution.
    let mut records = Vec::with_capacity(eps_list.len());
    for &eps in &eps_list {
        let flow = cfg.build_flow(eps, steps);
        let record =
            evolve(&mu0, &model, &flow).map_err(|source| RunnerError::Run { eps, source })?;
        records.push(record);
    }

    let mut run_entries = Vec::with_capacity(records.len());
    for (&eps, record) in eps_list.iter().zip(&records) {
        let dir_name = format!("run-eps-{eps}");
        let run_dir = out_dir.join(&dir_name);
        fs::create_dir_all(&run_dir).map_err(|e| io_err(&run_dir, e))?;
        write_text(&run_dir.join("record.csv"), &record_csv(record, &alphas))?;
        if cfg.output.snapshots == "csv" {
            let snap_dir = run_dir.join("snapshots");
            fs::create_dir_all(&snap_dir).map_err(|e| io_err(&snap_dir, e))?;
            for (k, snapshot) in record.snapshots.iter().enumerate() {
                write_text(
                    &snap_dir.join(format!("t{k:05}.csv")),
                    &snapshot_csv(snapshot),
                )?;
            }
        }
        audits.extend(core_run_audits(eps, record, &alphas));
        let last = record
            .rows
            .last()
            .expect("a record always holds the initial row");
        summary.push(format!(
            "rate {eps}: final mass {}, escaped {}, {} rows{}",
            last.mass,
            last.escaped,
            record.rows.len(),
            if record.failure.is_some() {
                " (aborted)"
            } else {
                ""
            },
        ));
        run_entries.push(RunEntry {
            eps,
            dir: dir_name,
            rows: record.rows.len(),
            escaped_final: last.escaped,
            completed: record.failure.is_none(),
        });
    }

    if let Some(doc) = build_certificates(
        cfg,
        &model,
        &mu0,
        &eps_list,
        &records,
        &mut audits,
        &mut summary,
    ) {
        write_json(&out_dir.join("certificates.json"), &doc)?;
    }

    let mut refinement_steps = Vec::new();
    if sweep {
        if eps_list.len() >= 2 {
            let refs: Vec<&RunRecord> = records.iter().collect();
            let report = mass_report_from_records(&eps_list, &refs);
            write_text(&out_dir.join("sweep.csv"), &sweep_csv(&report))?;
            sweep_audits(&report, &mut audits, &mut summary);
        }
        let all_steps = cfg.steps_values();
        if all_steps.len() >= 2 {
            match refinement_study(cfg, &model, &mu0, eps_list[0], &all_steps, &mut audits) {
                Ok(rows) => {
                    refinement_steps = all_steps;
                    write_text(&out_dir.join("refinement.csv"), &refinement_csv(&rows))?;
                }
                Err(e) => audits.push(AuditLine::new(
                    "refinement runs complete",
                    false,
                    e.to_string(),
                )),
            }
        }
    }

    let meta = MetaDoc {
        name: cfg.name.clone(),
        dimension: cfg.dimension,
        seed,
        eps: eps_list,
        steps,
        alphas,
        snapshots: cfg.output.snapshots.clone(),
        sweep,
        refinement_steps,
        runs: run_entries,
        config: cfg.clone(),
    };
    write_json(&out_dir.join("meta.json"), &meta)?;
    write_json(&out_dir.join("audits.json"), &audits)?;

    Ok(ScenarioReport {
        name: cfg.name.clone(),
        out_dir,
        summary,
        audits,
    })
}

/// Checks that need nothing beyond the diagnostics rows.
fn core_run_audits(eps: f64, record: &RunRecord, alphas: &[f64]) -> Vec<AuditLine> {
    let mut lines = Vec::new();
    lines.push(AuditLine::new(
        format!("run completed (rate {eps})"),
        record.failure.is_none(),
        match &record.failure {
            None => format!("{} grid rows", record.rows.len()),
            Some(e) => e.to_string(),
        },
    ));

    let masses: Vec<f64> = record.rows.iter().map(|r| r.mass).collect();
    let monotone = masses.windows(2).all(|w| w[1] <= w[0]);
    lines.push(AuditLine::new(
        format!("mass monotone (rate {eps})"),
        monotone,
        format!("mass {} -> {}", masses[0], masses[masses.len() - 1]),
    ));
    let cap = masses[0] * (1.0 + 1e-12);
    let in_range = masses.iter().all(|&m| m >= 0.0 && m <= cap);
    lines.push(AuditLine::new(
        format!("mass within [0, initial] (rate {eps})"),
        in_range,
        format!("initial {}", masses[0]),
    ));

    let esc_ok = record.rows.windows(2).all(|w| w[1].escaped >= w[0].escaped);
    lines.push(AuditLine::new(
        format!("escape count monotone (rate {eps})"),
        esc_ok,
        format!(
            "final count {}",
            record.rows.last().map_or(0, |r| r.escaped)
        ),
    ));

    // Exponential moments with exponent at most the dissipation rate cannot
    // grow; saturated entries carry no comparable value and are skipped.
    for (i, &alpha) in alphas.iter().enumerate() {
        if alpha > eps * (1.0 + 1e-12) {
            continue;
        }
        let mut ok = true;
        let mut worst = 0.0_f64;
        for w in record.rows.windows(2) {
            if let (MomentValue::Finite(a), MomentValue::Finite(b)) =
                (w[0].moments[i], w[1].moments[i])
            {
                let uptick = (b - a) / a.max(f64::MIN_POSITIVE);
                if uptick > 1e-6 {
                    ok = false;
                    worst = worst.max(uptick);
                }
            }
        }
        lines.push(AuditLine::new(
            format!("moment nonincreasing (alpha {alpha}, rate {eps})"),
            ok,
            if ok {
                "within 1e-6 relative".to_string()
            } else {
                format!("worst relative uptick {worst}")
            },
        ));
    }
    lines
}

/// No-return machinery, bookkeeping, weak-form residuals, and interaction
/// tails — everything gated on the probe configuration.
#[allow(clippy::too_many_arguments)]
fn build_certificates(
    cfg: &ScenarioConfig,
    model: &HamiltonianModel,
    mu0: &ParticleMeasure,
    eps_list: &[f64],
    records: &[RunRecord],
    audits: &mut Vec<AuditLine>,
    summary: &mut Vec<String>,
) -> Option<CertificatesDoc> {
    let probes = &cfg.probes;
    let wants_rings = probes.ring_search_radius.is_some();
    let wants_cylinder = probes.cylinder_radius.is_some();
    let wants_bumps = !probes.bumps.is_empty();
    let wants_tails = !probes.tail_radii.is_empty();
    if !(wants_rings || wants_cylinder || wants_bumps || wants_tails) {
        return None;
    }

    let mass0 = mu0.total_mass(0.0);
    let bumps = cfg.build_bumps();
    let window = cfg.build_window();

    let mut bounding = None;
    let mut rings = Vec::new();
    let mut escape_bounds = Vec::new();
    let mut profile_opt: Option<BoundingPotential> = None;
    if wants_rings {
        let profile = cfg.build_bounding(model, mass0);
        let r_search = probes.ring_search_radius.expect("gated above");
        let report =
            validate_bounding_potential(&profile, &model.potential, profile.b, r_search, 4096);
        audits.push(AuditLine::new(
            "bounding profile dominates",
            report.ok,
            format!(
                "worst margin {} at radius {}",
                report.worst_margin, report.worst_radius
            ),
        ));
        // Collect every certified ring radius on the grid, then keep
        // `ring_count` of them spread across the range: for profiles that
        // decrease over most of the search radius the smallest candidates sit
        // inside the initial cloud, where a monitor can never fire.
        let candidates = find_star_rings(|r| profile.value(r), r_search, 2048, 2048);
        let count = probes.ring_count.max(1);
        rings = if candidates.len() <= count {
            candidates
        } else {
            (1..=count)
                .map(|i| candidates[i * candidates.len() / (count + 1)])
                .collect()
        };
        audits.push(AuditLine::new(
            "star rings found",
            !rings.is_empty(),
            format!(
                "{} of {} requested within radius {r_search}",
                rings.len(),
                probes.ring_count
            ),
        ));
        let x_max = records[0].config.x_max;
        for ring in &rings {
            let inner = StarRing {
                radius: probes.inner_ring_rule * ring.radius,
                index: 0,
            };
            match escape_bound_tau(&profile, ring, &inner, x_max) {
                Ok(est) => escape_bounds.push(EscapeBoundLine {
                    ring_radius: ring.radius,
                    inner_radius: inner.radius,
                    tau: Some(est.tau),
                    converged: Some(est.converged),
                    exit_speed: Some(est.exit_speed),
                    note: String::new(),
                }),
                Err(e) => escape_bounds.push(EscapeBoundLine {
                    ring_radius: ring.radius,
                    inner_radius: inner.radius,
                    tau: None,
                    converged: None,
                    exit_speed: None,
                    note: e.to_string(),
                }),
            }
        }
        let taus: Vec<f64> = escape_bounds.iter().filter_map(|l| l.tau).collect();
        if taus.len() >= 2 {
            let ordered = taus.windows(2).all(|w| w[0] > w[1]);
            audits.push(AuditLine::new(
                "escape bounds ordered",
                ordered,
                format!("{taus:?} against increasing ring radii"),
            ));
        }
        if !rings.is_empty() {
            summary.push(format!(
                "rings at {:?}, escape bounds {taus:?}",
                rings.iter().map(|r| r.radius).collect::<Vec<_>>()
            ));
        }
        bounding = Some(BoundingSection {
            profile: profile.clone(),
            report,
        });
        profile_opt = Some(profile);
    }

    let cylinder = probes
        .cylinder_radius
        .map(|l_star| PhaseCylinder::new(l_star, momentum_growth_rate(model, l_star, mass0)));

    let mut runs = Vec::with_capacity(records.len());
    for (&eps, record) in eps_list.iter().zip(records) {
        let mut monitors = Vec::new();
        if let Some(profile) = &profile_opt {
            for ring in &rings {
                let mut m = RingMonitorSummary {
                    ring_radius: ring.radius,
                    crossings: 0,
                    speed_violations: 0,
                    energy_violations: 0,
                    reentries: 0,
                    undersampled: 0,
                };
                for i in 0..record.snapshots[0].particles.len() {
                    let traj = record.particle_trajectory(i);
                    match no_return_monitor(&traj, ring, Some(profile)) {
                        Ok(cert) if cert.crossed => {
                            m.crossings += 1;
                            if !cert.monotone_ok {
                                m.speed_violations += 1;
                            }
                            if cert.h_tilde_ok == Some(false) {
                                m.energy_violations += 1;
                            }
                            if cert.reentered {
                                m.reentries += 1;
                            }
                        }
                        Ok(_) => {}
                        Err(_) => m.undersampled += 1,
                    }
                }
                monitors.push(m);
            }
            let clean = monitors
                .iter()
                .all(|m| m.speed_violations == 0 && m.energy_violations == 0 && m.reentries == 0);
            let crossings: usize = monitors.iter().map(|m| m.crossings).sum();
            audits.push(AuditLine::new(
                format!("ring monitors clean (rate {eps})"),
                clean,
                format!(
                    "{crossings} outward crossings over {} rings",
                    monitors.len()
                ),
            ));
        }

        let cylinder_summary = cylinder.as_ref().map(|cyl| {
            let report = cylinder_containment_audit(record, cyl);
            audits.push(AuditLine::new(
                format!("cylinder momentum face clean (rate {eps})"),
                report.ok(),
                format!(
                    "{} audited, {} position exits, {} momentum violations",
                    report.audited,
                    report.exits.len(),
                    report.violations.len()
                ),
            ));
            CylinderSummary {
                l_star: cyl.l_star,
                a_star: cyl.a_star,
                eta: cyl.eta,
                audited: report.audited,
                position_exits: report.exits.len(),
                momentum_violations: report.violations.len(),
            }
        });

        let bookkeeping_deviation = wants_bumps.then(|| {
            let dev = representation_check(record, mu0, &bumps, eps);
            audits.push(AuditLine::new(
                format!("bookkeeping representation (rate {eps})"),
                dev <= 1e-12,
                format!("worst deviation {dev}"),
            ));
            dev
        });

        let mut weak_residuals = Vec::new();
        if wants_bumps {
            if let Some(window) = &window {
                let inside = record
                    .rows
                    .iter()
                    .filter(|r| window.eval(r.time) > 0.0)
                    .count();
                if inside >= 20 {
                    for bump in &bumps {
                        weak_residuals.push(weak_residual(record, model, bump, window, eps));
                    }
                    let max = weak_residuals.iter().cloned().fold(0.0_f64, f64::max);
                    audits.push(AuditLine::new(
                        format!("weak residuals finite (rate {eps})"),
                        weak_residuals.iter().all(|r| r.is_finite()),
                        format!("max residual {max} over {} test functions", bumps.len()),
                    ));
                } else {
                    audits.push(AuditLine::new(
                        format!("weak residuals finite (rate {eps})"),
                        true,
                        format!("skipped: only {inside} grid times in the window support"),
                    ));
                }
            }
        }

        let mut tail_maxima = Vec::new();
        if wants_tails {
            let q_ref: Vec<f64> = probes
                .tail_center
                .clone()
                .unwrap_or_else(|| vec![0.0; cfg.dimension]);
            let kernel = model.kernel.as_ref();
            let mut order: Vec<usize> = (0..probes.tail_radii.len()).collect();
            order.sort_by(|&a, &b| {
                probes.tail_radii[a]
                    .partial_cmp(&probes.tail_radii[b])
                    .expect("finite radii")
            });
            for &radius in &probes.tail_radii {
                tail_maxima.push(TailLine {
                    radius,
                    max_value: 0.0,
                });
            }
            let mut ok = true;
            let mut worst_uptick = 0.0_f64;
            for snapshot in &record.snapshots {
                let values: Vec<f64> = probes
                    .tail_radii
                    .iter()
                    .map(|&r| {
                        snapshot
                            .momentum_tail_interaction(r, &q_ref, kernel, eps)
                            .expect("validated radii and reference point")
                    })
                    .collect();
                for (j, &v) in values.iter().enumerate() {
                    if v > tail_maxima[j].max_value {
                        tail_maxima[j].max_value = v;
                    }
                }
                for w in order.windows(2) {
                    let (lo, hi) = (values[w[0]], values[w[1]]);
                    if hi > lo + 1e-12 * (1.0 + lo.abs()) {
                        ok = false;
                        worst_uptick = worst_uptick.max(hi - lo);
                    }
                }
            }
            audits.push(AuditLine::new(
                format!("interaction tail nonincreasing in radius (rate {eps})"),
                ok,
                if ok {
                    format!(
                        "maxima {:?}",
                        tail_maxima.iter().map(|t| t.max_value).collect::<Vec<_>>()
                    )
                } else {
                    format!("worst uptick {worst_uptick}")
                },
            ));
        }

        runs.push(RunCertificates {
            eps,
            completed: record.failure.is_none(),
            final_mass: record.rows.last().expect("initial row always present").mass,
            monitors,
            cylinder: cylinder_summary,
            bookkeeping_deviation,
            weak_residuals,
            tail_maxima,
        });
    }

    Some(CertificatesDoc {
        bounding,
        rings,
        escape_bounds,
        runs,
    })
}

fn sweep_audits(report: &MassReport, audits: &mut Vec<AuditLine>, summary: &mut Vec<String>) {
    let all_monotone = report.monotone_in_time.iter().all(|&b| b);
    audits.push(AuditLine::new(
        "sweep masses monotone in time",
        all_monotone,
        format!("{} rates", report.eps.len()),
    ));
    if report.probe_times.len() >= 3 {
        let audit = limit_mass_monotonicity(report);
        audits.push(AuditLine::new(
            "limit curve monotone",
            audit.ok,
            match audit.worst_interval {
                None => "within twice the extrapolation error".to_string(),
                Some((a, b)) => format!("violated on ({a}, {b})"),
            },
        ));
    }
    let last = report.probe_times.len() - 1;
    summary.push(format!(
        "sweep: limit mass at horizon {} (error estimate {})",
        report.extrapolated[last], report.error_estimate[last]
    ));
}

struct RefinementRow {
    n_coarse: usize,
    n_fine: usize,
    deviation: f64,
    cohort: usize,
    residual_coarse: Option<f64>,
    residual_fine: Option<f64>,
}

/// Doubles the resolution along the configured list, comparing retained
/// trajectories at shared grid times and (when the probes define test
/// functions and a window) the weak-form residual per level.
fn refinement_study(
    cfg: &ScenarioConfig,
    model: &HamiltonianModel,
    mu0: &ParticleMeasure,
    eps: f64,
    steps: &[usize],
    audits: &mut Vec<AuditLine>,
) -> Result<Vec<RefinementRow>, ConvergenceError> {
    let base = cfg.build_flow(eps, *steps.last().expect("nonempty list"));
    let bumps = cfg.build_bumps();
    let window = cfg.build_window();

    let mut residuals: Vec<Option<f64>> = vec![None; steps.len()];
    if let (false, Some(window)) = (bumps.is_empty(), &window) {
        for (idx, &n) in steps.iter().enumerate() {
            let flow = cfg.build_flow(eps, n);
            let inside = flow
                .grid_times()
                .iter()
                .filter(|&&t| window.eval(t) > 0.0)
                .count();
            if inside < 20 {
                continue;
            }
            let record = evolve(mu0, model, &flow)
                .map_err(|source| ConvergenceError::RunFailed { eps, source })?;
            if record.failure.is_some() {
                continue;
            }
            let worst = bumps
                .iter()
                .map(|b| weak_residual(&record, model, b, window, eps))
                .fold(0.0_f64, f64::max);
            residuals[idx] = Some(worst);
        }
    }

    let mut rows = Vec::new();
    for w in 0..steps.len() - 1 {
        let (n1, n2) = (steps[w], steps[w + 1]);
        if n2 % n1 != 0 {
            continue;
        }
        let report = trajectory_closeness(model, mu0, &base, n1, n2, base.x_max, base.horizon)?;
        rows.push(RefinementRow {
            n_coarse: n1,
            n_fine: n2,
            deviation: report.deviation,
            cohort: report.cohort,
            residual_coarse: residuals[w],
            residual_fine: residuals[w + 1],
        });
    }

    if rows.len() >= 2 {
        let devs: Vec<f64> = rows.iter().map(|r| r.deviation).collect();
        let decreasing = devs.windows(2).all(|p| p[1] < p[0]);
        audits.push(AuditLine::new(
            "refinement deviations decrease",
            decreasing,
            format!("{devs:?}"),
        ));
    }
    let level_residuals: Vec<f64> = residuals.iter().flatten().copied().collect();
    if level_residuals.len() >= 2 {
        let decreasing = level_residuals.windows(2).all(|p| p[1] < p[0]);
        audits.push(AuditLine::new(
            "weak residual shrinks with refinement",
            decreasing,
            format!("{level_residuals:?}"),
        ));
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Artifact writers.
// ---------------------------------------------------------------------------

fn write_text(path: &Path, text: &str) -> Result<(), RunnerError> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), RunnerError> {
    let mut text = serde_json::to_string_pretty(value).expect("artifact types serialize");
    text.push('\n');
    write_text(path, &text)
}

fn record_csv(record: &RunRecord, alphas: &[f64]) -> String {
    let mut s = String::from("t,mass,energy");
    for a in alphas {
        let _ = write!(s, ",M_{a}");
    }
    s.push_str(",n_escaped,max_p,max_q\n");
    for row in &record.rows {
        let _ = write!(s, "{},{},{}", row.time, row.mass, row.energy);
        for m in &row.moments {
            match m {
                MomentValue::Finite(v) => {
                    let _ = write!(s, ",{v}");
                }
                MomentValue::Saturated => s.push_str(",saturated"),
            }
        }
        let _ = writeln!(s, ",{},{},{}", row.escaped, row.max_p, row.max_q);
    }
    s
}

fn snapshot_csv(mu: &ParticleMeasure) -> String {
    let d = mu.dim;
    let mut s = String::new();
    for i in 0..d {
        let _ = write!(s, "p{i},");
    }
    for i in 0..d {
        let _ = write!(s, "q{i},");
    }
    s.push_str("w0,S,status\n");
    for part in &mu.particles {
        for v in &part.x.p {
            let _ = write!(s, "{v},");
        }
        for v in &part.x.q {
            let _ = write!(s, "{v},");
        }
        let _ = write!(s, "{},{},", part.w0, part.path_len);
        match part.status {
            ParticleStatus::Alive => s.push_str("alive\n"),
            ParticleStatus::Escaped { time } => {
                let _ = writeln!(s, "escaped:{time}");
            }
        }
    }
    s
}

fn sweep_csv(report: &MassReport) -> String {
    let mut s = String::from("t");
    for e in &report.eps {
        let _ = write!(s, ",eps_{e}");
    }
    s.push_str(",limit,error\n");
    for j in 0..report.probe_times.len() {
        let _ = write!(s, "{}", report.probe_times[j]);
        for k in 0..report.eps.len() {
            let _ = write!(s, ",{}", report.masses[k][j]);
        }
        let _ = writeln!(
            s,
            ",{},{}",
            report.extrapolated[j], report.error_estimate[j]
        );
    }
    s
}

fn refinement_csv(rows: &[RefinementRow]) -> String {
    let mut s = String::from("n_coarse,n_fine,deviation,cohort,residual_coarse,residual_fine\n");
    for r in rows {
        let _ = write!(
            s,
            "{},{},{},{}",
            r.n_coarse, r.n_fine, r.deviation, r.cohort
        );
        for cell in [r.residual_coarse, r.residual_fine] {
            match cell {
                Some(v) => {
                    let _ = write!(s, ",{v}");
                }
                None => s.push(','),
            }
        }
        s.push('\n');
    }
    s
}

// ---------------------------------------------------------------------------
// Artifact audit: re-reads a finished output directory and re-checks every
// property derivable from the files alone.
// ---------------------------------------------------------------------------

struct RecordTable {
    alphas: Vec<f64>,
    masses: Vec<f64>,
    moments: Vec<Vec<Option<f64>>>,
    escaped: Vec<usize>,
}

fn parse_cell_f64(cell: &str, path: &Path) -> Result<f64, RunnerError> {
    cell.parse::<f64>()
        .map_err(|_| artifact_err(path, format!("bad number {cell:?}")))
}

fn parse_record_csv(text: &str, path: &Path) -> Result<RecordTable, RunnerError> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| artifact_err(path, "empty file"))?;
    let cols: Vec<&str> = header.split(',').collect();
    let n = cols.len();
    if n < 6
        || cols[0] != "t"
        || cols[1] != "mass"
        || cols[2] != "energy"
        || cols[n - 3] != "n_escaped"
        || cols[n - 2] != "max_p"
        || cols[n - 1] != "max_q"
    {
        return Err(artifact_err(path, format!("unexpected header {header:?}")));
    }
    let alphas: Vec<f64> = cols[3..n - 3]
        .iter()
        .map(|c| {
            c.strip_prefix("M_")
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| artifact_err(path, format!("bad moment column {c:?}")))
        })
        .collect::<Result<_, _>>()?;

    let mut table = RecordTable {
        alphas,
        masses: Vec::new(),
        moments: Vec::new(),
        escaped: Vec::new(),
    };
    for line in lines {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != n {
            return Err(artifact_err(
                path,
                format!("row has {} cells, want {n}", cells.len()),
            ));
        }
        table.masses.push(parse_cell_f64(cells[1], path)?);
        let mut row_moments = Vec::with_capacity(table.alphas.len());
        for cell in &cells[3..n - 3] {
            if *cell == "saturated" {
                row_moments.push(None);
            } else {
                row_moments.push(Some(parse_cell_f64(cell, path)?));
            }
        }
        table.moments.push(row_moments);
        table.escaped.push(
            cells[n - 3]
                .parse::<usize>()
                .map_err(|_| artifact_err(path, format!("bad count {:?}", cells[n - 3])))?,
        );
    }
    if table.masses.is_empty() {
        return Err(artifact_err(path, "no data rows"));
    }
    Ok(table)
}

fn parse_snapshot_csv(text: &str, path: &Path) -> Result<ParticleMeasure, RunnerError> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| artifact_err(path, "empty file"))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 5 || !(cols.len() - 3).is_multiple_of(2) {
        return Err(artifact_err(path, format!("unexpected header {header:?}")));
    }
    let d = (cols.len() - 3) / 2;
    let mut particles = Vec::new();
    for line in lines {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != cols.len() {
            return Err(artifact_err(path, "row width differs from header"));
        }
        let mut p = Vec::with_capacity(d);
        let mut q = Vec::with_capacity(d);
        for cell in &cells[..d] {
            p.push(parse_cell_f64(cell, path)?);
        }
        for cell in &cells[d..2 * d] {
            q.push(parse_cell_f64(cell, path)?);
        }
        let w0 = parse_cell_f64(cells[2 * d], path)?;
        let path_len = parse_cell_f64(cells[2 * d + 1], path)?;
        let status = match cells[2 * d + 2] {
            "alive" => ParticleStatus::Alive,
            other => match other.strip_prefix("escaped:") {
                Some(t) => ParticleStatus::Escaped {
                    time: parse_cell_f64(t, path)?,
                },
                None => return Err(artifact_err(path, format!("bad status {other:?}"))),
            },
        };
        particles.push(WeightedParticle {
            x: PhasePoint::new(&p, &q),
            w0,
            path_len,
            status,
        });
    }
    Ok(ParticleMeasure { dim: d, particles })
}

/// Re-reads a finished output directory and audits everything the artifacts
/// can support on their own: inventory consistency, per-run diagnostics
/// invariants, snapshot-derived masses against the recorded rows, the
/// certificate violation counts, and the sweep matrix.
pub fn audit_run_dir(dir: &Path) -> Result<ScenarioReport, RunnerError> {
    let meta_path = dir.join("meta.json");
    let meta_text = fs::read_to_string(&meta_path).map_err(|e| io_err(&meta_path, e))?;
    let meta: MetaDoc =
        serde_json::from_str(&meta_text).map_err(|e| artifact_err(&meta_path, e.to_string()))?;

    let mut audits = Vec::new();
    let mut summary = vec![format!("auditing {} at {}", meta.name, dir.display())];

    let config_ok = meta.name == meta.config.name
        && meta.dimension == meta.config.dimension
        && meta.eps == meta.config.eps_values()
        && meta.steps == *meta.config.steps_values().last().unwrap_or(&0);
    audits.push(AuditLine::new(
        "inventory matches configuration",
        config_ok,
        format!("{} runs listed", meta.runs.len()),
    ));

    for entry in &meta.runs {
        let eps = entry.eps;
        let run_dir = dir.join(&entry.dir);
        let rec_path = run_dir.join("record.csv");
        let text = fs::read_to_string(&rec_path).map_err(|e| io_err(&rec_path, e))?;
        let table = parse_record_csv(&text, &rec_path)?;

        audits.push(AuditLine::new(
            format!("artifact rows (rate {eps})"),
            table.masses.len() == entry.rows,
            format!("{} rows, inventory says {}", table.masses.len(), entry.rows),
        ));
        audits.push(AuditLine::new(
            format!("artifact mass monotone (rate {eps})"),
            table.masses.windows(2).all(|w| w[1] <= w[0]),
            format!(
                "mass {} -> {}",
                table.masses[0],
                table.masses[table.masses.len() - 1]
            ),
        ));
        let cap = table.masses[0] * (1.0 + 1e-12);
        audits.push(AuditLine::new(
            format!("artifact mass within [0, initial] (rate {eps})"),
            table.masses.iter().all(|&m| m >= 0.0 && m <= cap),
            format!("initial {}", table.masses[0]),
        ));
        audits.push(AuditLine::new(
            format!("artifact escape count monotone (rate {eps})"),
            table.escaped.windows(2).all(|w| w[1] >= w[0]),
            format!("final count {}", table.escaped[table.escaped.len() - 1]),
        ));
        for (i, &alpha) in table.alphas.iter().enumerate() {
            if alpha > eps * (1.0 + 1e-12) {
                continue;
            }
            let mut ok = true;
            for w in table.moments.windows(2) {
                if let (Some(a), Some(b)) = (w[0][i], w[1][i]) {
                    if (b - a) / a.max(f64::MIN_POSITIVE) > 1e-6 {
                        ok = false;
                    }
                }
            }
            audits.push(AuditLine::new(
                format!("artifact moment nonincreasing (alpha {alpha}, rate {eps})"),
                ok,
                "within 1e-6 relative".to_string(),
            ));
        }

        if meta.snapshots == "csv" {
            let mut worst = 0.0_f64;
            let mut counts_ok = true;
            for k in 0..entry.rows {
                let snap_path = run_dir.join("snapshots").join(format!("t{k:05}.csv"));
                let text = fs::read_to_string(&snap_path).map_err(|e| io_err(&snap_path, e))?;
                let mu = parse_snapshot_csv(&text, &snap_path)?;
                worst = worst.max((mu.total_mass(eps) - table.masses[k]).abs());
                let escaped = mu.particles.iter().filter(|p| !p.status.is_alive()).count();
                if escaped != table.escaped[k] {
                    counts_ok = false;
                }
            }
            audits.push(AuditLine::new(
                format!("snapshots reproduce record (rate {eps})"),
                worst <= 1e-12 && counts_ok,
                format!("worst mass deviation {worst}"),
            ));
        }
    }

    audit_certificates_file(dir, &meta, &mut audits)?;
    audit_sweep_file(dir, &meta, &mut audits)?;

    summary.push(format!("{} audit lines", audits.len()));
    Ok(ScenarioReport {
        name: meta.name,
        out_dir: dir.to_path_buf(),
        summary,
        audits,
    })
}

fn audit_certificates_file(
    dir: &Path,
    meta: &MetaDoc,
    audits: &mut Vec<AuditLine>,
) -> Result<(), RunnerError> {
    let probes = &meta.config.probes;
    let expected = probes.ring_search_radius.is_some()
        || probes.cylinder_radius.is_some()
        || !probes.bumps.is_empty()
        || !probes.tail_radii.is_empty();
    if !expected {
        return Ok(());
    }
    let path = dir.join("certificates.json");
    let text = match fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            audits.push(AuditLine::new(
                "certificates present",
                false,
                "probes configured but certificates.json missing".to_string(),
            ));
            return Ok(());
        }
        Err(e) => return Err(io_err(&path, e)),
    };
    let doc: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| artifact_err(&path, e.to_string()))?;

    let mut clean = true;
    let mut detail = Vec::new();
    if let Some(report) = doc.pointer("/bounding/report") {
        if report["ok"] != serde_json::Value::Bool(true) {
            clean = false;
            detail.push("bounding profile fails to dominate".to_string());
        }
    }
    for run in doc["runs"].as_array().into_iter().flatten() {
        let eps = &run["eps"];
        for m in run["monitors"].as_array().into_iter().flatten() {
            for key in ["speed_violations", "energy_violations", "reentries"] {
                if m[key].as_u64().unwrap_or(1) != 0 {
                    clean = false;
                    detail.push(format!("{key} at rate {eps}"));
                }
            }
        }
        if run["cylinder"].is_object()
            && run["cylinder"]["momentum_violations"].as_u64().unwrap_or(1) != 0
        {
            clean = false;
            detail.push(format!("momentum violations at rate {eps}"));
        }
    }
    audits.push(AuditLine::new(
        "certificates clean",
        clean,
        if clean {
            "no violations recorded".to_string()
        } else {
            detail.join("; ")
        },
    ));
    Ok(())
}

fn audit_sweep_file(
    dir: &Path,
    meta: &MetaDoc,
    audits: &mut Vec<AuditLine>,
) -> Result<(), RunnerError> {
    if !meta.sweep || meta.eps.len() < 2 {
        return Ok(());
    }
    let path = dir.join("sweep.csv");
    let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| artifact_err(&path, "empty file"))?;
    let cols: Vec<&str> = header.split(',').collect();
    let rates = meta.eps.len();
    if cols.len() != rates + 3 || cols[0] != "t" || cols[rates + 1] != "limit" {
        return Err(artifact_err(&path, format!("unexpected header {header:?}")));
    }
    let mut masses: Vec<Vec<f64>> = vec![Vec::new(); rates];
    let mut limit = Vec::new();
    let mut error = Vec::new();
    for line in lines {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != cols.len() {
            return Err(artifact_err(&path, "row width differs from header"));
        }
        for k in 0..rates {
            masses[k].push(parse_cell_f64(cells[k + 1], &path)?);
        }
        limit.push(parse_cell_f64(cells[rates + 1], &path)?);
        error.push(parse_cell_f64(cells[rates + 2], &path)?);
    }

    let monotone = masses
        .iter()
        .all(|col| col.windows(2).all(|w| w[1] <= w[0]));
    audits.push(AuditLine::new(
        "sweep columns monotone in time",
        monotone,
        format!("{rates} rates, {} probe times", limit.len()),
    ));
    let mut limit_ok = true;
    for j in 0..limit.len().saturating_sub(1) {
        let allowed = 2.0 * error[j].max(error[j + 1]);
        if limit[j + 1] - limit[j] > allowed {
            limit_ok = false;
        }
    }
    audits.push(AuditLine::new(
        "sweep limit monotone within error",
        limit_ok,
        "uptick allowance is twice the local extrapolation error".to_string(),
    ));
    Ok(())
}
