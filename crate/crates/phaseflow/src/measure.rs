//! Weighted particle ensembles and the functionals defined on them.
//!
//! An ensemble approximates a finite nonnegative measure on phase space by
//! `N` particles. Each particle carries its initial weight `w0` and the
//! phase-space path length `S` it has accumulated so far; its *effective*
//! weight at dissipation rate `eps` is `w0 * exp(-eps * S)`. Storing `(w0, S)`
//! instead of a pre-multiplied weight keeps the decay exact, monotone, and
//! re-evaluable at any `eps` after the fact (the trajectories of a
//! kernel-free model do not depend on `eps` at all).
//!
//! Particles whose trajectory has left the numerical domain are marked
//! [`ParticleStatus::Escaped`] and contribute to no functional: their mass has
//! left every compact set, which is exactly what the dissipation limit
//! bookkeeping needs.
//!
//! All reductions go through [`pairwise_sum`], a fixed-shape pairwise tree, so
//! results are bitwise reproducible for a fixed particle order regardless of
//! thread count.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::InteractionKernel;
use crate::phase::PhasePoint;
use crate::testfn::MomentumCutoff;

/// Moments above this magnitude are reported as saturated rather than as raw
/// floating-point overflow.
pub const SATURATION_LIMIT: f64 = 1e300;

/// Errors from ensemble functionals.
#[derive(Debug, Error)]
pub enum MeasureError {
    /// The momentum-tail functional needs cutoff radius `r > 1` so the ramp
    /// `[r - 1, r]` stays in the positive half-line.
    #[error("momentum cutoff radius must exceed 1, got {radius}")]
    CutoffRadius { radius: f64 },
    /// A probe point's dimension does not match the ensemble's.
    #[error("dimension mismatch: ensemble is {expected}-dimensional, probe is {got}-dimensional")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Whether a particle is still being transported or has left the domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ParticleStatus {
    /// Still inside the numerical domain.
    Alive,
    /// Left the domain (finite-time blow-up) at the recorded time; the stored
    /// state is frozen at the moment of detection.
    Escaped { time: f64 },
}

impl ParticleStatus {
    /// True for [`ParticleStatus::Alive`].
    pub fn is_alive(&self) -> bool {
        matches!(self, ParticleStatus::Alive)
    }
}

/// One weighted particle: state, initial weight, accumulated path length,
/// and escape status.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedParticle {
    /// Current phase-space state (frozen at detection time once escaped).
    pub x: PhasePoint,
    /// Initial weight, constant along the evolution.
    pub w0: f64,
    /// Accumulated phase-space path length `S_t`; nondecreasing in time.
    pub path_len: f64,
    /// Alive or escaped.
    pub status: ParticleStatus,
}

impl WeightedParticle {
    /// A fresh particle of weight `w0` at state `x`.
    pub fn new(x: PhasePoint, w0: f64) -> Self {
        Self {
            x,
            w0,
            path_len: 0.0,
            status: ParticleStatus::Alive,
        }
    }

    /// Effective weight `w0 * exp(-eps * S)` at dissipation rate `eps`.
    pub fn weight(&self, eps: f64) -> f64 {
        self.w0 * (-eps * self.path_len).exp()
    }

    /// True while the particle is transported.
    pub fn is_alive(&self) -> bool {
        self.status.is_alive()
    }
}

/// A finite weighted particle ensemble on phase space `R^d x R^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleMeasure {
    /// Spatial dimension `d`.
    pub dim: usize,
    /// The particles, in a fixed order that all reductions respect.
    pub particles: Vec<WeightedParticle>,
}

/// An exponential moment: either a finite value or a saturation marker for
/// sums that exceed [`SATURATION_LIMIT`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MomentValue {
    /// The moment evaluated to this finite value.
    Finite(f64),
    /// Some term or the total exceeded the saturation limit.
    Saturated,
}

impl MomentValue {
    /// The finite value, if any.
    pub fn finite(self) -> Option<f64> {
        match self {
            MomentValue::Finite(v) => Some(v),
            MomentValue::Saturated => None,
        }
    }

    /// True for the saturation marker.
    pub fn is_saturated(self) -> bool {
        matches!(self, MomentValue::Saturated)
    }
}

impl ParticleMeasure {
    /// Builds an ensemble from particles, checking dimensions agree.
    pub fn new(dim: usize, particles: Vec<WeightedParticle>) -> Self {
        debug_assert!(particles.iter().all(|pt| pt.x.dim() == dim));
        Self { dim, particles }
    }

    /// Number of alive particles.
    pub fn alive_count(&self) -> usize {
        self.particles.iter().filter(|pt| pt.is_alive()).count()
    }

    /// Number of escaped particles.
    pub fn escaped_count(&self) -> usize {
        self.particles.len() - self.alive_count()
    }

    /// Total mass `sum_i w0_i exp(-eps S_i)` over alive particles.
    pub fn total_mass(&self, eps: f64) -> f64 {
        self.sum_over_alive(|pt| pt.weight(eps))
    }

    /// Integral of `f` against the ensemble at dissipation rate `eps`:
    /// `sum_i w0_i exp(-eps S_i) f(x_i)` over alive particles.
    pub fn integrate(&self, eps: f64, f: impl Fn(&PhasePoint) -> f64) -> f64 {
        self.sum_over_alive(|pt| pt.weight(eps) * f(&pt.x))
    }

    /// Exponential moment `sum_i w0_i exp(alpha |x_i| - eps S_i)`.
    ///
    /// The two exponentials are fused into one exponent: near-escape states
    /// have `alpha |x|` and `eps S` both astronomically large with a small
    /// (often tiny) difference, and evaluating them separately would overflow
    /// even though the term itself is negligible. Saturation is reported when
    /// a term or the total exceeds [`SATURATION_LIMIT`].
    pub fn exp_moment(&self, alpha: f64, eps: f64) -> MomentValue {
        let mut terms = Vec::with_capacity(self.particles.len());
        for pt in &self.particles {
            if !pt.is_alive() {
                continue;
            }
            let term = pt.w0 * (alpha * pt.x.norm() - eps * pt.path_len).exp();
            if !term.is_finite() || term > SATURATION_LIMIT {
                return MomentValue::Saturated;
            }
            terms.push(term);
        }
        let total = pairwise_sum(&terms);
        if total > SATURATION_LIMIT {
            MomentValue::Saturated
        } else {
            MomentValue::Finite(total)
        }
    }

    /// Momentum-tail interaction functional
    /// `C_r = sum_i w_i theta_r(|p_i|) |grad W(q_ref - q_i)|`,
    /// where `theta_r` ramps from 0 to 1 on `[r - 1, r]`. This measures how
    /// much kernel force fast-moving mass can exert at `q_ref`; a missing
    /// kernel contributes nothing.
    pub fn momentum_tail_interaction(
        &self,
        r: f64,
        q_ref: &[f64],
        kernel: Option<&InteractionKernel>,
        eps: f64,
    ) -> Result<f64, MeasureError> {
        if !(r > 1.0) {
            return Err(MeasureError::CutoffRadius { radius: r });
        }
        if q_ref.len() != self.dim {
            return Err(MeasureError::DimensionMismatch {
                expected: self.dim,
                got: q_ref.len(),
            });
        }
        let kernel = match kernel {
            Some(k) => k,
            None => return Ok(0.0),
        };
        let cutoff = MomentumCutoff::new(r).expect("radius checked above");
        let mut dq = vec![0.0; self.dim];
        let mut grad = vec![0.0; self.dim];
        let total = self.sum_over_alive(|pt| {
            let theta = cutoff.eval(pt.x.p_norm());
            if theta == 0.0 {
                return 0.0;
            }
            for (k, d) in dq.iter_mut().enumerate() {
                *d = q_ref[k] - pt.x.q[k];
            }
            kernel.grad_w(&dq, &mut grad);
            pt.weight(eps) * theta * crate::phase::norm(&grad)
        });
        Ok(total)
    }

    /// Mass carried by alive particles inside the phase ball `|x| <= radius`.
    pub fn mass_in_ball(&self, eps: f64, radius: f64) -> f64 {
        self.sum_over_alive(|pt| {
            if pt.x.norm() <= radius {
                pt.weight(eps)
            } else {
                0.0
            }
        })
    }

    /// Largest momentum norm over alive particles (0 for an empty set).
    pub fn max_p_norm(&self) -> f64 {
        self.particles
            .iter()
            .filter(|pt| pt.is_alive())
            .map(|pt| pt.x.p_norm())
            .fold(0.0, f64::max)
    }

    /// Largest position norm over alive particles (0 for an empty set).
    pub fn max_q_norm(&self) -> f64 {
        self.particles
            .iter()
            .filter(|pt| pt.is_alive())
            .map(|pt| pt.x.q_norm())
            .fold(0.0, f64::max)
    }

    /// Pairwise-tree sum of a per-particle term over alive particles.
    ///
    /// The closure may capture mutable scratch space, hence `FnMut`.
    fn sum_over_alive(&self, mut term: impl FnMut(&WeightedParticle) -> f64) -> f64 {
        let terms: Vec<f64> = self
            .particles
            .iter()
            .map(|pt| if pt.is_alive() { term(pt) } else { 0.0 })
            .collect();
        pairwise_sum(&terms)
    }
}

/// Sums a slice by a fixed-shape pairwise tree (split at the midpoint,
/// sequential below 32 elements).
///
/// The tree shape depends only on the slice length, so the result is bitwise
/// identical no matter how the work is scheduled, and the rounding error
/// grows like `O(log N)` instead of `O(N)`.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= 32 {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}
