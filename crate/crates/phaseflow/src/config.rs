//! Scenario files: a TOML schema describing a model, an initial ensemble, a
//! flow (or a dissipation sweep), probes, and output wiring.
//!
//! A scenario is fully self-contained: loading the same file always produces
//! the same model, the same sampled ensemble (the sampler seed lives in the
//! file), and the same run plan. [`load_config`] parses and then validates
//! *exhaustively* — every problem is reported at once, each prefixed with the
//! field path that caused it, so a config can be fixed in one pass.
//!
//! ```toml
//! name = "harmonic-confined"
//! dimension = 1
//!
//! [potential]
//! family = "harmonic"
//! k2 = 1.0
//!
//! [initial]
//! family = "gaussian"
//! particles = 400
//! seed = 7
//! sigma = 0.2
//!
//! [flow]
//! eps_list = [0.2, 0.1, 0.05]
//! horizon = 10.0
//! steps = 200
//!
//! [output]
//! directory = "runs/harmonic"
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flow::FlowConfig;
use crate::model::{ExternalPotential, HamiltonianModel, InteractionKernel};
use crate::no_return::BoundingPotential;
use crate::sampler::{EnsembleShape, SamplerSpec};
use crate::testfn::{Bump, TimeWindow};

/// Failures of loading or validating a scenario file.
#[derive(Debug, Error)]
pub enum ConfigError {
    /// The file could not be read.
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// The file is not valid TOML for the schema; the message carries the
    /// location.
    #[error("parse error: {0}")]
    Parse(#[from] toml::de::Error),

    /// The file parsed but violates scenario invariants; one entry per
    /// problem, each prefixed with its field path.
    #[error("invalid scenario: {}", problems.join("; "))]
    Validation { problems: Vec<String> },
}

/// Compactly supported interaction kernel section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    /// Support radius `a`.
    pub support_radius: f64,
    /// Amplitude `c` of `c (1 - |q|^2/a^2)^3`.
    pub amplitude: f64,
}

/// External potential section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialConfig {
    /// `"zero"`, `"harmonic"`, or `"polynomial"`.
    pub family: String,
    /// Quadratic coefficient (harmonic and polynomial families).
    #[serde(default)]
    pub k2: f64,
    /// Higher-order coefficient (polynomial family).
    #[serde(default)]
    pub k4: f64,
    /// Higher-order exponent, at least 2 (polynomial family).
    #[serde(default = "default_gamma")]
    pub gamma: f64,
}

fn default_gamma() -> f64 {
    4.0
}

/// Radial bounding-profile section; omitted fields fall back to the tight
/// profile derived from the model and the initial mass.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundingConfig {
    /// Constant slope offset; default: interaction bound times initial mass.
    #[serde(default)]
    pub slope_offset: Option<f64>,
    /// Quadratic coefficient; default: copied from the potential.
    #[serde(default)]
    pub k2: Option<f64>,
    /// Higher-order coefficient; default: copied from the potential.
    #[serde(default)]
    pub k4: Option<f64>,
    /// Higher-order exponent; default: copied from the potential.
    #[serde(default)]
    pub gamma: Option<f64>,
}

/// Initial-ensemble sampler section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    /// `"gaussian"`, `"uniform-ball"`, or `"lattice"`.
    pub family: String,
    /// Ensemble size `N >= 1`; every particle gets weight `1/N`.
    pub particles: usize,
    /// Sampler seed; identical seeds give bitwise-identical ensembles.
    pub seed: u64,
    /// Standard deviation per coordinate (gaussian family).
    #[serde(default)]
    pub sigma: Option<f64>,
    /// Phase-ball radius (uniform-ball family).
    #[serde(default)]
    pub radius: Option<f64>,
    /// Position half-extent per axis (lattice family).
    #[serde(default)]
    pub extent: Option<f64>,
    /// Momentum offset added to every sample; length `d` (default zero).
    #[serde(default)]
    pub momentum_offset: Vec<f64>,
    /// Position offset added to every sample; length `d` (default zero).
    #[serde(default)]
    pub position_offset: Vec<f64>,
    /// Exponential-moment exponent the sampled ensemble must support.
    #[serde(default = "default_alpha0")]
    pub alpha0: f64,
}

fn default_alpha0() -> f64 {
    1.0
}

/// Flow section: either a single run (`eps`, `steps`) or sweep material
/// (`eps_list`, `steps_list`). Exactly one of each pair must be present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSection {
    /// Single dissipation rate.
    #[serde(default)]
    pub eps: Option<f64>,
    /// Strictly decreasing dissipation rates for sweeps.
    #[serde(default)]
    pub eps_list: Option<Vec<f64>>,
    /// Time horizon `T > 0`.
    pub horizon: f64,
    /// Single scheme resolution.
    #[serde(default)]
    pub steps: Option<usize>,
    /// Strictly increasing scheme resolutions for refinement studies.
    #[serde(default)]
    pub steps_list: Option<Vec<usize>>,
    /// Integrator tolerance; default `1e-8`.
    #[serde(default)]
    pub ode_tol: Option<f64>,
    /// Numerical-domain radius; default `1e6`.
    #[serde(default)]
    pub x_max: Option<f64>,
    /// Collapse threshold; default `1e-12 * horizon`.
    #[serde(default)]
    pub h_min: Option<f64>,
}

/// One bump of the test battery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BumpConfig {
    /// Phase-space center, flat `[p..., q...]` of length `2 d`.
    pub center: Vec<f64>,
    /// Support radius.
    pub radius: f64,
}

/// Time-window section for weak-form residuals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowConfig {
    /// Support start.
    pub start: f64,
    /// Support end.
    pub end: f64,
    /// Ramp length at each end.
    pub ramp: f64,
}

/// Probe section: what gets measured beyond the per-row diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbesConfig {
    /// Report times; empty means a geometric interior grid ending at the
    /// horizon (mass jumps cluster early, and `t = 0` is trivial).
    #[serde(default)]
    pub times: Vec<f64>,
    /// Exponents of the `exp(alpha |x|)` moment columns.
    #[serde(default)]
    pub alphas: Vec<f64>,
    /// Bump battery for representation checks and weak residuals.
    #[serde(default)]
    pub bumps: Vec<BumpConfig>,
    /// Time window for weak residuals.
    #[serde(default)]
    pub window: Option<WindowConfig>,
    /// How many no-return rings to search for.
    #[serde(default = "default_ring_count")]
    pub ring_count: usize,
    /// Ring search horizon; default: half the numerical-domain radius.
    #[serde(default)]
    pub ring_search_radius: Option<f64>,
    /// Inner-ring rule: the escape bound for ring `L` pairs it with the ring
    /// nearest `rule * L` from inside. In `(0, 1)`.
    #[serde(default = "default_inner_ring_rule")]
    pub inner_ring_rule: f64,
    /// Position radius `L*` of the containment cylinder, when audited.
    #[serde(default)]
    pub cylinder_radius: Option<f64>,
    /// Momentum-tail cutoffs `r > 1` for the interaction-tightness probe.
    #[serde(default)]
    pub tail_radii: Vec<f64>,
    /// Tightness reference position; default: the origin.
    #[serde(default)]
    pub tail_center: Option<Vec<f64>>,
}

fn default_ring_count() -> usize {
    3
}

fn default_inner_ring_rule() -> f64 {
    0.5
}

impl Default for ProbesConfig {
    fn default() -> Self {
        Self {
            times: Vec::new(),
            alphas: Vec::new(),
            bumps: Vec::new(),
            window: None,
            ring_count: default_ring_count(),
            ring_search_radius: None,
            inner_ring_rule: default_inner_ring_rule(),
            cylinder_radius: None,
            tail_radii: Vec::new(),
            tail_center: None,
        }
    }
}

/// Output section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Artifact directory; created if missing.
    pub directory: String,
    /// `"csv"` to dump per-time ensemble snapshots, `"none"` to skip them.
    #[serde(default = "default_snapshots")]
    pub snapshots: String,
}

fn default_snapshots() -> String {
    "csv".to_string()
}

/// A fully described scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Scenario name, used in summaries and artifact metadata.
    pub name: String,
    /// Spatial dimension `d`.
    pub dimension: usize,
    /// Interaction kernel; absent means no interaction.
    #[serde(default)]
    pub kernel: Option<KernelConfig>,
    /// External potential.
    pub potential: PotentialConfig,
    /// Bounding-profile overrides; absent means the tight profile.
    #[serde(default)]
    pub bounding: Option<BoundingConfig>,
    /// Initial-ensemble sampler.
    pub initial: InitialConfig,
    /// Flow parameters.
    pub flow: FlowSection,
    /// Probes.
    #[serde(default)]
    pub probes: ProbesConfig,
    /// Output wiring.
    pub output: OutputConfig,
}

/// Reads, parses, and exhaustively validates a scenario file.
pub fn load_config(path: impl AsRef<Path>) -> Result<ScenarioConfig, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let config: ScenarioConfig = toml::from_str(&text)?;
    config.validate()?;
    Ok(config)
}

impl ScenarioConfig {
    /// Parses a scenario from TOML text (no validation).
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    /// Checks every scenario invariant, collecting all problems.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut problems = Vec::new();
        let d = self.dimension;
        if self.name.is_empty() {
            problems.push("name: must not be empty".to_string());
        }
        if d == 0 {
            problems.push("dimension: must be at least 1".to_string());
        }

        if let Some(kernel) = &self.kernel {
            if !(kernel.support_radius > 0.0) || !kernel.support_radius.is_finite() {
                problems.push(format!(
                    "kernel.support_radius: must be positive and finite, got {}",
                    kernel.support_radius
                ));
            }
            if !kernel.amplitude.is_finite() {
                problems.push(format!(
                    "kernel.amplitude: must be finite, got {}",
                    kernel.amplitude
                ));
            }
        }

        match self.potential.family.as_str() {
            "zero" | "harmonic" => {}
            "polynomial" => {
                if !(self.potential.gamma >= 2.0) || !self.potential.gamma.is_finite() {
                    problems.push(format!(
                        "potential.gamma: must be finite and at least 2, got {}",
                        self.potential.gamma
                    ));
                }
            }
            other => {
                problems.push(format!(
                    "potential.family: unknown family {other:?} (expected \"zero\", \
                     \"harmonic\", or \"polynomial\")"
                ));
            }
        }
        if !self.potential.k2.is_finite() || !self.potential.k4.is_finite() {
            problems.push("potential: coefficients must be finite".to_string());
        }

        if let Some(bounding) = &self.bounding {
            if let Some(b) = bounding.slope_offset {
                if !b.is_finite() || b < 0.0 {
                    problems.push(format!(
                        "bounding.slope_offset: must be finite and nonnegative, got {b}"
                    ));
                }
            }
            if let (Some(k4), Some(gamma)) = (bounding.k4, bounding.gamma) {
                if k4 != 0.0 && (!gamma.is_finite() || gamma < 2.0) {
                    problems.push(format!(
                        "bounding.gamma: must be finite and at least 2 with a nonzero k4, got {gamma}"
                    ));
                }
            }
        }

        self.validate_initial(&mut problems);
        self.validate_flow(&mut problems);
        self.validate_probes(&mut problems);

        if self.output.directory.is_empty() {
            problems.push("output.directory: must not be empty".to_string());
        }
        if !matches!(self.output.snapshots.as_str(), "csv" | "none") {
            problems.push(format!(
                "output.snapshots: expected \"csv\" or \"none\", got {:?}",
                self.output.snapshots
            ));
        }

        if problems.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Validation { problems })
        }
    }

    fn validate_initial(&self, problems: &mut Vec<String>) {
        let init = &self.initial;
        if init.particles == 0 {
            problems.push("initial.particles: must be at least 1".to_string());
        }
        match init.family.as_str() {
            "gaussian" => match init.sigma {
                Some(s) if s > 0.0 && s.is_finite() => {}
                Some(s) => problems.push(format!(
                    "initial.sigma: must be positive and finite, got {s}"
                )),
                None => {
                    problems.push("initial.sigma: required by family = \"gaussian\"".to_string())
                }
            },
            "uniform-ball" => match init.radius {
                Some(r) if r > 0.0 && r.is_finite() => {}
                Some(r) => problems.push(format!(
                    "initial.radius: must be positive and finite, got {r}"
                )),
                None => problems
                    .push("initial.radius: required by family = \"uniform-ball\"".to_string()),
            },
            "lattice" => match init.extent {
                Some(e) if e > 0.0 && e.is_finite() => {}
                Some(e) => problems.push(format!(
                    "initial.extent: must be positive and finite, got {e}"
                )),
                None => {
                    problems.push("initial.extent: required by family = \"lattice\"".to_string())
                }
            },
            other => problems.push(format!(
                "initial.family: unknown family {other:?} (expected \"gaussian\", \
                 \"uniform-ball\", or \"lattice\")"
            )),
        }
        for (field, offset) in [
            ("momentum_offset", &init.momentum_offset),
            ("position_offset", &init.position_offset),
        ] {
            if !offset.is_empty() && offset.len() != self.dimension {
                problems.push(format!(
                    "initial.{field}: length {} does not match dimension {}",
                    offset.len(),
                    self.dimension
                ));
            }
        }
        if !(init.alpha0 >= 0.0) || !init.alpha0.is_finite() {
            problems.push(format!(
                "initial.alpha0: must be finite and nonnegative, got {}",
                init.alpha0
            ));
        }
    }

    fn validate_flow(&self, problems: &mut Vec<String>) {
        let flow = &self.flow;
        if !(flow.horizon > 0.0) || !flow.horizon.is_finite() {
            problems.push(format!(
                "flow.horizon: must be positive and finite, got {}",
                flow.horizon
            ));
        }
        match (&flow.eps, &flow.eps_list) {
            (None, None) => {
                problems.push("flow.eps: either eps or eps_list is required".to_string())
            }
            (Some(_), Some(_)) => {
                problems.push("flow.eps: eps and eps_list are mutually exclusive".to_string())
            }
            (Some(e), None) => {
                if !e.is_finite() || *e < 0.0 {
                    problems.push(format!("flow.eps: must be finite and nonnegative, got {e}"));
                }
            }
            (None, Some(list)) => {
                if list.is_empty() {
                    problems.push("flow.eps_list: must not be empty".to_string());
                }
                if !list.iter().all(|e| e.is_finite() && *e >= 0.0) {
                    problems
                        .push("flow.eps_list: entries must be finite and nonnegative".to_string());
                }
                if !list.windows(2).all(|w| w[0] > w[1]) {
                    problems.push("flow.eps_list: must be strictly decreasing".to_string());
                }
            }
        }
        match (&flow.steps, &flow.steps_list) {
            (None, None) => {
                problems.push("flow.steps: either steps or steps_list is required".to_string())
            }
            (Some(_), Some(_)) => {
                problems.push("flow.steps: steps and steps_list are mutually exclusive".to_string())
            }
            (Some(0), None) => problems.push("flow.steps: must be at least 1, got 0".to_string()),
            (Some(_), None) => {}
            (None, Some(list)) => {
                if list.is_empty() {
                    problems.push("flow.steps_list: must not be empty".to_string());
                }
                if list.contains(&0) {
                    problems.push("flow.steps_list: entries must be at least 1".to_string());
                }
                if !list.windows(2).all(|w| w[0] < w[1]) {
                    problems.push("flow.steps_list: must be strictly increasing".to_string());
                }
            }
        }
        if let Some(tol) = flow.ode_tol {
            if !(tol > 0.0) || !tol.is_finite() {
                problems.push(format!(
                    "flow.ode_tol: must be positive and finite, got {tol}"
                ));
            }
        }
        if let Some(x_max) = flow.x_max {
            if !(x_max > 0.0) {
                problems.push(format!("flow.x_max: must be positive, got {x_max}"));
            }
        }
        if let Some(h_min) = flow.h_min {
            if !(h_min > 0.0) || h_min >= flow.horizon {
                problems.push(format!(
                    "flow.h_min: must lie strictly between 0 and the horizon, got {h_min}"
                ));
            }
        }
    }

    fn validate_probes(&self, problems: &mut Vec<String>) {
        let probes = &self.probes;
        let horizon = self.flow.horizon;
        if !probes.times.windows(2).all(|w| w[0] < w[1]) {
            problems.push("probes.times: must be strictly increasing".to_string());
        }
        if probes
            .times
            .iter()
            .any(|&t| !(t > 0.0) || t > horizon * (1.0 + 1e-12))
        {
            problems.push("probes.times: entries must lie in (0, horizon]".to_string());
        }
        if probes.alphas.iter().any(|a| !a.is_finite() || *a < 0.0) {
            problems.push("probes.alphas: entries must be finite and nonnegative".to_string());
        }
        for (i, bump) in probes.bumps.iter().enumerate() {
            if bump.center.len() != 2 * self.dimension {
                problems.push(format!(
                    "probes.bumps[{i}].center: length {} does not match phase dimension {}",
                    bump.center.len(),
                    2 * self.dimension
                ));
            }
            if !(bump.radius > 0.0) {
                problems.push(format!(
                    "probes.bumps[{i}].radius: must be positive, got {}",
                    bump.radius
                ));
            }
        }
        if let Some(w) = &probes.window {
            if TimeWindow::new(w.start, w.end, w.ramp).is_err() || w.end > horizon {
                problems.push(format!(
                    "probes.window: need 0 <= start < end <= horizon with 2 ramp <= end - start, \
                     got start {}, end {}, ramp {}",
                    w.start, w.end, w.ramp
                ));
            }
        }
        if probes.ring_count == 0 {
            problems.push("probes.ring_count: must be at least 1".to_string());
        }
        if !(probes.inner_ring_rule > 0.0 && probes.inner_ring_rule < 1.0) {
            problems.push(format!(
                "probes.inner_ring_rule: must lie strictly between 0 and 1, got {}",
                probes.inner_ring_rule
            ));
        }
        let x_max = self.flow.x_max.unwrap_or(1e6);
        if let Some(r) = probes.ring_search_radius {
            if !(r > 0.0) || r >= x_max {
                problems.push(format!(
                    "probes.ring_search_radius: must lie strictly between 0 and flow.x_max, got {r}"
                ));
            }
        }
        if let Some(l) = probes.cylinder_radius {
            if !(l > 0.0) || l >= x_max {
                problems.push(format!(
                    "probes.cylinder_radius: must lie strictly between 0 and flow.x_max, got {l}"
                ));
            }
        }
        if probes.tail_radii.iter().any(|&r| !(r > 1.0)) {
            problems.push("probes.tail_radii: entries must exceed 1".to_string());
        }
        if let Some(center) = &probes.tail_center {
            if center.len() != self.dimension {
                problems.push(format!(
                    "probes.tail_center: length {} does not match dimension {}",
                    center.len(),
                    self.dimension
                ));
            }
        }
    }

    /// The model this scenario describes. Call only on a validated config.
    pub fn build_model(&self) -> HamiltonianModel {
        let potential = match self.potential.family.as_str() {
            "zero" => ExternalPotential::zero(),
            "harmonic" => ExternalPotential::harmonic(self.potential.k2),
            "polynomial" => ExternalPotential::polynomial(
                self.potential.k2,
                self.potential.k4,
                self.potential.gamma,
            )
            .expect("validated config"),
            other => unreachable!("validated config admitted potential family {other:?}"),
        };
        match &self.kernel {
            Some(k) => HamiltonianModel::with_interaction(
                self.dimension,
                InteractionKernel::new(k.support_radius, k.amplitude).expect("validated config"),
                potential,
            ),
            None => HamiltonianModel::without_interaction(self.dimension, potential),
        }
    }

    /// The dissipation rates this scenario runs, scalar or list.
    pub fn eps_values(&self) -> Vec<f64> {
        match (&self.flow.eps, &self.flow.eps_list) {
            (Some(e), _) => vec![*e],
            (None, Some(list)) => list.clone(),
            (None, None) => Vec::new(),
        }
    }

    /// The scheme resolutions this scenario runs, scalar or list.
    pub fn steps_values(&self) -> Vec<usize> {
        match (&self.flow.steps, &self.flow.steps_list) {
            (Some(n), _) => vec![*n],
            (None, Some(list)) => list.clone(),
            (None, None) => Vec::new(),
        }
    }

    /// The flow configuration for one `(eps, steps)` member of the scenario.
    pub fn build_flow(&self, eps: f64, steps: usize) -> FlowConfig {
        let mut cfg = FlowConfig::new(eps, self.flow.horizon, steps);
        if let Some(tol) = self.flow.ode_tol {
            cfg.ode_tol = tol;
        }
        if let Some(x_max) = self.flow.x_max {
            cfg.x_max = x_max;
        }
        if let Some(h_min) = self.flow.h_min {
            cfg.h_min = h_min;
        }
        cfg.alphas = self.probes.alphas.clone();
        cfg
    }

    /// The bounding profile: configured overrides on top of the tight
    /// profile for the given initial mass. Call only on a validated config.
    pub fn build_bounding(&self, model: &HamiltonianModel, mu0_mass: f64) -> BoundingPotential {
        let tight = BoundingPotential::tight(model, mu0_mass).expect("validated config");
        let section = self.bounding.clone().unwrap_or_default();
        let (k2, k4, gamma) = model.potential.coefficients();
        BoundingPotential::radial_poly(
            section.slope_offset.unwrap_or(tight.b),
            section.k2.unwrap_or(k2),
            section.k4.unwrap_or(k4),
            section.gamma.unwrap_or(gamma),
        )
        .expect("validated config")
    }

    /// The bump battery of the probe section. Call only on a validated
    /// config.
    pub fn build_bumps(&self) -> Vec<Bump> {
        self.probes
            .bumps
            .iter()
            .map(|b| Bump::new(b.center.clone(), b.radius).expect("validated config"))
            .collect()
    }

    /// The weak-residual window, if configured. Call only on a validated
    /// config.
    pub fn build_window(&self) -> Option<TimeWindow> {
        self.probes
            .window
            .as_ref()
            .map(|w| TimeWindow::new(w.start, w.end, w.ramp).expect("validated config"))
    }

    /// The sampling request of the initial section. Call only on a validated
    /// config.
    pub fn build_sampler_spec(&self) -> SamplerSpec {
        let shape = match self.initial.family.as_str() {
            "gaussian" => EnsembleShape::Gaussian {
                sigma: self.initial.sigma.expect("validated config"),
            },
            "uniform-ball" => EnsembleShape::UniformBall {
                radius: self.initial.radius.expect("validated config"),
            },
            "lattice" => EnsembleShape::Lattice {
                extent: self.initial.extent.expect("validated config"),
            },
            other => unreachable!("validated config admitted sampler family {other:?}"),
        };
        SamplerSpec {
            dim: self.dimension,
            particles: self.initial.particles,
            shape,
            momentum_offset: self.initial.momentum_offset.clone(),
            position_offset: self.initial.position_offset.clone(),
            alpha0: self.initial.alpha0,
        }
    }

    /// Report times: the configured list, or a geometric interior grid
    /// `T/2^7, ..., T/2, T` when none was given.
    pub fn probe_times(&self) -> Vec<f64> {
        if !self.probes.times.is_empty() {
            return self.probes.times.clone();
        }
        (0..8)
            .map(|j| self.flow.horizon / f64::from(1 << (7 - j)))
            .collect()
    }
}
