//! Particle ensembles on phase space with motion-driven mass dissipation.
//!
//! The objects of study are finite weighted particle ensembles on phase space
//! `R^d x R^d` (momentum `p`, position `q`) transported by a mean-field
//! Hamiltonian velocity field
//!
//! ```text
//! v(x) = ( -grad Phi(q) - (grad W * mu)(q),  p )
//! ```
//!
//! while every particle's carried mass decays with the phase-space distance it
//! travels: a particle of initial weight `w0` that has accumulated path length
//! `S_t` contributes `w0 * exp(-eps * S_t)` at dissipation rate `eps >= 0`.
//! Mass therefore leaks in two ways: continuously through motion, and
//! terminally when a trajectory blows up in finite time and leaves the
//! numerical domain ("escapes").
//!
//! The crate provides:
//!
//! * [`measure`] — weighted ensembles, masses, exponential moments, integrals
//!   against test functions, and momentum-tail interaction functionals;
//! * [`model`] — compactly supported interaction kernels, external potentials,
//!   cell-list accelerated convolution fields, velocities, and total energy;
//! * [`flow`] — the time-frozen-field evolution scheme built on an adaptive
//!   embedded Runge–Kutta 5(4) integrator with escape detection, plus
//!   truncated (retracted) flows and single-trajectory escape times;
//! * [`no_return`] — radial bounding profiles, no-return radii, outward
//!   crossing monitors, phase-cylinder containment audits, and worst-case
//!   escape-time bounds;
//! * [`convergence`] — representation bookkeeping, weak-form residuals,
//!   scheme-refinement comparisons, dissipation sweeps with extrapolation to
//!   the vanishing-dissipation limit, and mass-monotonicity audits;
//! * [`config`], [`sampler`], [`runner`] — scenario files, deterministic
//!   ensemble sampling, and the artifact-producing pipeline behind the
//!   `phaseflow` binary (`validate`, `run`, `sweep`, `audit`).
//!
//! Every capability has a runnable program under `examples/`; start there.
//! Determinism is a design constraint throughout: reductions use a fixed
//! pairwise tree, sampling uses a counter-based generator, and repeated runs
//! of a scenario produce byte-identical artifacts.

// Guards are written `!(x > 0.0)` on purpose: the negation rejects NaN along
// with the out-of-range values, which `x <= 0.0` would silently accept.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod convergence;
pub mod flow;
pub mod measure;
pub mod model;
pub mod no_return;
pub mod ode;
pub mod phase;
pub mod runner;
pub mod sampler;
pub mod testfn;

mod celllist;

pub use measure::{MomentValue, ParticleMeasure, ParticleStatus, WeightedParticle};
pub use model::{ExternalPotential, HamiltonianModel, InteractionKernel};
pub use phase::PhasePoint;
