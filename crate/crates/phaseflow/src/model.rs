//! Interaction kernels, external potentials, and the mean-field model.
//!
//! The force on a particle at `(p, q)` is `-grad Phi(q) - (grad W * mu)(q)`:
//! an external potential plus the convolution of an even, compactly
//! supported interaction kernel with the current (decayed) ensemble. The
//! convolution is the only `O(N^2)` temptation in the crate; `InteractionField`
//! precomputes a cell grid per ensemble snapshot so each evaluation touches
//! only particles within kernel range, and [`convolve_direct`] keeps the
//! plain all-pairs sum around as the reference the fast path is tested
//! against.

use thiserror::Error;

use crate::celllist::CellGrid;
use crate::measure::{pairwise_sum, ParticleMeasure};
use crate::phase::{self, PhasePoint};

/// Errors from model construction.
#[derive(Debug, Error)]
pub enum ModelError {
    /// Kernel support radius must be positive and finite.
    #[error("kernel support radius must be positive, got {radius}")]
    KernelRadius { radius: f64 },
    /// Potential exponent must give at least a `C^1` force field.
    #[error("potential exponent must be >= 2, got {gamma}")]
    PotentialExponent { gamma: f64 },
}

/// `|q|^gamma` with fast paths for the integer exponents scenarios use.
pub(crate) fn pow_radial(r: f64, gamma: f64) -> f64 {
    if gamma == 2.0 {
        r * r
    } else if gamma == 3.0 {
        r * r * r
    } else if gamma == 4.0 {
        let r2 = r * r;
        r2 * r2
    } else if gamma == 6.0 {
        let r2 = r * r;
        r2 * r2 * r2
    } else {
        r.powf(gamma)
    }
}

/// An even, `C^2`, compactly supported interaction kernel
/// `W(q) = amplitude * (1 - |q|^2 / a^2)^3` for `|q| <= a`, zero outside.
///
/// Value, gradient, and Hessian vanish at the support boundary, so the force
/// field is `C^2` across it. `bound()` dominates both `|W|` and `|grad W|`
/// everywhere.
#[derive(Debug, Clone)]
pub struct InteractionKernel {
    support_radius: f64,
    amplitude: f64,
    bound: f64,
}

impl InteractionKernel {
    /// Builds the kernel; `support_radius` must be positive.
    pub fn new(support_radius: f64, amplitude: f64) -> Result<Self, ModelError> {
        if !(support_radius > 0.0) || !support_radius.is_finite() || !amplitude.is_finite() {
            return Err(ModelError::KernelRadius {
                radius: support_radius,
            });
        }
        // sup |W| = |amplitude| at the origin; sup |grad W| is attained at
        // r = a / sqrt(5) and equals 96 |amplitude| / (25 sqrt(5) a).
        let grad_sup = 96.0 * amplitude.abs() / (25.0 * 5.0f64.sqrt() * support_radius);
        let bound = amplitude.abs().max(grad_sup);
        Ok(Self {
            support_radius,
            amplitude,
            bound,
        })
    }

    /// Support radius `a`.
    pub fn support_radius(&self) -> f64 {
        self.support_radius
    }

    /// Peak value `W(0)`.
    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    /// A constant dominating both `sup |W|` and `sup |grad W|`.
    pub fn bound(&self) -> f64 {
        self.bound
    }

    /// Kernel value at displacement `dq`.
    pub fn w(&self, dq: &[f64]) -> f64 {
        let a2 = self.support_radius * self.support_radius;
        let s = 1.0 - phase::sq_norm(dq) / a2;
        if s <= 0.0 {
            0.0
        } else {
            self.amplitude * s * s * s
        }
    }

    /// Kernel gradient at displacement `dq`, written into `out`.
    pub fn grad_w(&self, dq: &[f64], out: &mut [f64]) {
        let a2 = self.support_radius * self.support_radius;
        let s = 1.0 - phase::sq_norm(dq) / a2;
        if s <= 0.0 {
            out.fill(0.0);
            return;
        }
        let scale = -6.0 * self.amplitude * s * s / a2;
        for (k, o) in out.iter_mut().enumerate() {
            *o = scale * dq[k];
        }
    }

    /// Kernel Hessian at displacement `dq`, written row-major into `out`
    /// (length `d * d`).
    pub fn hessian_w(&self, dq: &[f64], out: &mut [f64]) {
        let d = dq.len();
        let a2 = self.support_radius * self.support_radius;
        let s = 1.0 - phase::sq_norm(dq) / a2;
        if s <= 0.0 {
            out.fill(0.0);
            return;
        }
        let diag = -6.0 * self.amplitude * s * s / a2;
        let outer = 24.0 * self.amplitude * s / (a2 * a2);
        for i in 0..d {
            for j in 0..d {
                out[i * d + j] = outer * dq[i] * dq[j] + if i == j { diag } else { 0.0 };
            }
        }
    }
}

/// Which functional form the external potential takes.
#[derive(Debug, Clone)]
enum PotentialKind {
    /// Identically zero.
    Zero,
    /// `Phi(q) = 0.5 k2 |q|^2 + k4 |q|^gamma`. A negative `k4` with
    /// `gamma > 2` produces a confining well with a finite barrier beyond
    /// which trajectories blow up in finite time.
    Polynomial { k2: f64, k4: f64, gamma: f64 },
}

/// A radially symmetric external potential with exact gradient and exact
/// radial slope `<grad Phi, q/|q|>`.
#[derive(Debug, Clone)]
pub struct ExternalPotential {
    kind: PotentialKind,
    /// Polynomial growth constants: `|Phi(q)| <= b1 |q|^b2` for `|q| >= 1`.
    pub b1: f64,
    pub b2: f64,
}

impl ExternalPotential {
    /// The zero potential.
    pub fn zero() -> Self {
        Self {
            kind: PotentialKind::Zero,
            b1: 0.0,
            b2: 0.0,
        }
    }

    /// Pure harmonic well `Phi(q) = 0.5 k2 |q|^2`.
    pub fn harmonic(k2: f64) -> Self {
        Self {
            kind: PotentialKind::Polynomial {
                k2,
                k4: 0.0,
                gamma: 4.0,
            },
            b1: k2.abs() / 2.0,
            b2: 2.0,
        }
    }

    /// `Phi(q) = 0.5 k2 |q|^2 + k4 |q|^gamma`; requires `gamma >= 2`.
    pub fn polynomial(k2: f64, k4: f64, gamma: f64) -> Result<Self, ModelError> {
        if !(gamma >= 2.0) || !gamma.is_finite() {
            return Err(ModelError::PotentialExponent { gamma });
        }
        let b1 = k2.abs() / 2.0 + k4.abs();
        let b2 = if k4 == 0.0 { 2.0 } else { gamma.max(2.0) };
        Ok(Self {
            kind: PotentialKind::Polynomial { k2, k4, gamma },
            b1,
            b2,
        })
    }

    /// Potential value at position `q`.
    pub fn phi(&self, q: &[f64]) -> f64 {
        match self.kind {
            PotentialKind::Zero => 0.0,
            PotentialKind::Polynomial { k2, k4, gamma } => {
                let r2 = phase::sq_norm(q);
                let quartic = if k4 == 0.0 {
                    0.0
                } else {
                    k4 * pow_radial(r2.sqrt(), gamma)
                };
                0.5 * k2 * r2 + quartic
            }
        }
    }

    /// Gradient at position `q`, written into `out`.
    pub fn grad_phi(&self, q: &[f64], out: &mut [f64]) {
        match self.kind {
            PotentialKind::Zero => out.fill(0.0),
            PotentialKind::Polynomial { k2, k4, gamma } => {
                let r = phase::norm(q);
                // grad = (k2 + k4 gamma r^{gamma-2}) q; the radial factor is
                // continuous at 0 for gamma >= 2.
                let coeff = if k4 == 0.0 || r == 0.0 {
                    k2
                } else {
                    k2 + k4 * gamma * pow_radial(r, gamma - 2.0)
                };
                for (k, o) in out.iter_mut().enumerate() {
                    *o = coeff * q[k];
                }
            }
        }
    }

    /// Exact radial slope `d Phi / dr` at radius `r` (the potential is
    /// radially symmetric, so this is `max_{|q| = r} <grad Phi, q/|q|>`).
    pub fn radial_slope(&self, r: f64) -> f64 {
        match self.kind {
            PotentialKind::Zero => 0.0,
            PotentialKind::Polynomial { k2, k4, gamma } => {
                let quartic = if k4 == 0.0 {
                    0.0
                } else {
                    k4 * gamma * pow_radial(r, gamma - 1.0)
                };
                k2 * r + quartic
            }
        }
    }

    /// The `(k2, k4, gamma)` coefficients of the radial family
    /// `0.5 k2 r^2 + k4 r^gamma`; the zero potential reports `(0, 0, 2)`.
    pub fn coefficients(&self) -> (f64, f64, f64) {
        match self.kind {
            PotentialKind::Zero => (0.0, 0.0, 2.0),
            PotentialKind::Polynomial { k2, k4, gamma } => (k2, k4, gamma),
        }
    }

    /// Largest gradient norm over the closed ball `|q| <= radius`, computed
    /// on a dense radial grid (exact up to grid resolution because the
    /// potential is radial; endpoints are included).
    pub fn grad_sup_in_ball(&self, radius: f64) -> f64 {
        let samples = 4096;
        let mut sup: f64 = 0.0;
        for k in 0..=samples {
            let r = radius * k as f64 / samples as f64;
            sup = sup.max(self.radial_slope(r).abs());
        }
        sup
    }
}

/// The full mean-field model: spatial dimension, optional interaction
/// kernel, external potential.
#[derive(Debug, Clone)]
pub struct HamiltonianModel {
    /// Spatial dimension `d`.
    pub dim: usize,
    /// Interaction kernel; `None` means no particle-particle forces.
    pub kernel: Option<InteractionKernel>,
    /// External potential.
    pub potential: ExternalPotential,
}

impl HamiltonianModel {
    /// A model without interaction.
    pub fn without_interaction(dim: usize, potential: ExternalPotential) -> Self {
        Self {
            dim,
            kernel: None,
            potential,
        }
    }

    /// A model with interaction.
    pub fn with_interaction(
        dim: usize,
        kernel: InteractionKernel,
        potential: ExternalPotential,
    ) -> Self {
        Self {
            dim,
            kernel: Some(kernel),
            potential,
        }
    }

    /// The kernel bound `B` (0 without a kernel).
    pub fn interaction_bound(&self) -> f64 {
        self.kernel.as_ref().map_or(0.0, |k| k.bound())
    }

    /// Convolution field of the kernel with `mu` at probe position `q_ref`:
    /// returns `(W * mu)(q_ref)` and writes `(grad W * mu)(q_ref)` into
    /// `grad_out`. One-shot convenience; build an [`InteractionField`] to
    /// evaluate at many probes.
    pub fn interaction_field(
        &self,
        mu: &ParticleMeasure,
        q_ref: &[f64],
        eps: f64,
        grad_out: &mut [f64],
    ) -> f64 {
        InteractionField::build(self, mu, eps).eval(q_ref, grad_out)
    }

    /// The transport velocity at `x` under the mean field of `mu`:
    /// `(dp, dq) = (-grad Phi(q) - (grad W * mu)(q), p)`.
    pub fn velocity(&self, mu: &ParticleMeasure, x: &PhasePoint, eps: f64) -> PhasePoint {
        let field = InteractionField::build(self, mu, eps);
        let mut dp = vec![0.0; self.dim];
        field.force(&self.potential, &x.q, &mut dp);
        PhasePoint {
            p: dp,
            q: x.p.clone(),
        }
    }

    /// Total energy of the ensemble:
    /// `0.5 ∫|p|^2 dmu + 0.5 ∫ (W * mu) dmu + ∫ Phi dmu`.
    pub fn hamiltonian_energy(&self, mu: &ParticleMeasure, eps: f64) -> f64 {
        let field = InteractionField::build(self, mu, eps);
        let mut scratch = vec![0.0; self.dim];
        let terms: Vec<f64> = mu
            .particles
            .iter()
            .map(|pt| {
                if !pt.is_alive() {
                    return 0.0;
                }
                let w = pt.weight(eps);
                let kinetic = 0.5 * phase::sq_norm(&pt.x.p);
                let interaction = 0.5 * field.eval(&pt.x.q, &mut scratch);
                let external = self.potential.phi(&pt.x.q);
                w * (kinetic + interaction + external)
            })
            .collect();
        pairwise_sum(&terms)
    }
}

/// All-pairs reference convolution: `(W * mu)(q_ref)` and its gradient by a
/// direct sum over every alive particle. This is the correctness oracle for
/// [`InteractionField`]; use the latter anywhere performance matters.
pub fn convolve_direct(
    kernel: &InteractionKernel,
    mu: &ParticleMeasure,
    q_ref: &[f64],
    eps: f64,
    grad_out: &mut [f64],
) -> f64 {
    let d = mu.dim;
    let mut dq = vec![0.0; d];
    let mut g = vec![0.0; d];
    let mut value_terms = Vec::with_capacity(mu.particles.len());
    let mut grad_terms: Vec<Vec<f64>> = (0..d)
        .map(|_| Vec::with_capacity(mu.particles.len()))
        .collect();
    for pt in &mu.particles {
        if !pt.is_alive() {
            continue;
        }
        let w = pt.weight(eps);
        for k in 0..d {
            dq[k] = q_ref[k] - pt.x.q[k];
        }
        value_terms.push(w * kernel.w(&dq));
        kernel.grad_w(&dq, &mut g);
        for k in 0..d {
            grad_terms[k].push(w * g[k]);
        }
    }
    for k in 0..d {
        grad_out[k] = pairwise_sum(&grad_terms[k]);
    }
    pairwise_sum(&value_terms)
}

/// A kernel convolution field frozen on one ensemble snapshot, with
/// cell-grid neighbor pruning.
pub struct InteractionField<'a> {
    kernel: Option<&'a InteractionKernel>,
    dim: usize,
    /// Flat positions of alive particles (dim-strided).
    positions: Vec<f64>,
    /// Decayed weights of alive particles, aligned with `positions`.
    weights: Vec<f64>,
    grid: Option<CellGrid>,
}

impl<'a> InteractionField<'a> {
    /// Snapshots the alive particles of `mu` (weights decayed at `eps`) and
    /// builds the cell grid. Without a kernel the field is identically zero
    /// and no grid is built.
    pub fn build(model: &'a HamiltonianModel, mu: &ParticleMeasure, eps: f64) -> Self {
        let kernel = model.kernel.as_ref();
        let dim = model.dim;
        if kernel.is_none() {
            return Self {
                kernel: None,
                dim,
                positions: Vec::new(),
                weights: Vec::new(),
                grid: None,
            };
        }
        let mut positions = Vec::with_capacity(mu.alive_count() * dim);
        let mut weights = Vec::with_capacity(mu.alive_count());
        for pt in &mu.particles {
            if pt.is_alive() {
                positions.extend_from_slice(&pt.x.q);
                weights.push(pt.weight(eps));
            }
        }
        let grid = kernel.map(|k| CellGrid::build(dim, k.support_radius(), &positions));
        Self {
            kernel,
            dim,
            positions,
            weights,
            grid,
        }
    }

    /// Evaluates `(W * mu)(q_ref)`, writing the gradient into `grad_out`.
    pub fn eval(&self, q_ref: &[f64], grad_out: &mut [f64]) -> f64 {
        grad_out.fill(0.0);
        let (kernel, grid) = match (self.kernel, &self.grid) {
            (Some(k), Some(g)) => (k, g),
            _ => return 0.0,
        };
        let a2 = kernel.support_radius() * kernel.support_radius();
        let amplitude = kernel.amplitude();
        let mut value = 0.0;
        grid.for_each_candidate(q_ref, |i| {
            let i = i as usize;
            let q = &self.positions[i * self.dim..(i + 1) * self.dim];
            let mut d2 = 0.0;
            for k in 0..self.dim {
                let dk = q_ref[k] - q[k];
                d2 += dk * dk;
            }
            let s = 1.0 - d2 / a2;
            if s <= 0.0 {
                return;
            }
            let w = self.weights[i];
            value += w * amplitude * s * s * s;
            let scale = -6.0 * amplitude * s * s / a2 * w;
            for k in 0..self.dim {
                grad_out[k] += scale * (q_ref[k] - q[k]);
            }
        });
        value
    }

    /// Total force `-grad Phi(q) - (grad W * mu)(q)`, written into `out`.
    pub fn force(&self, potential: &ExternalPotential, q: &[f64], out: &mut [f64]) {
        potential.grad_phi(q, out);
        for o in out.iter_mut() {
            *o = -*o;
        }
        if self.kernel.is_none() {
            return;
        }
        let mut grad = vec![0.0; self.dim];
        self.eval(q, &mut grad);
        for (o, g) in out.iter_mut().zip(&grad) {
            *o -= g;
        }
    }
}
