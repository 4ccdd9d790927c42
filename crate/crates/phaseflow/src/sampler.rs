//! Deterministic initial ensembles.
//!
//! Sampling is a pure function of `(spec, seed)`: the generator is a fixed
//! counter-based stream cipher (ChaCha8) consumed in a fixed per-particle,
//! per-coordinate order, and every transformation from raw draws to phase
//! points is explicit arithmetic — so identical inputs give bitwise-identical
//! ensembles on every platform. Every particle receives weight `1/N`, making
//! the ensemble a probability measure by construction.
//!
//! After sampling, the ensemble must prove it carries the exponential moment
//! the scenario demands: `exp_moment(alpha0)` must be finite, otherwise the
//! sample is rejected outright.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use thiserror::Error;

use crate::measure::{MomentValue, ParticleMeasure, WeightedParticle};
use crate::phase::PhasePoint;

/// Failures of ensemble sampling.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SamplerError {
    /// The sampled ensemble cannot support the requested exponential moment.
    #[error("exponential moment with exponent {alpha0} saturated on the sampled ensemble")]
    SaturatedMoment { alpha0: f64 },
}

/// The geometric family of an initial ensemble.
#[derive(Debug, Clone, PartialEq)]
pub enum EnsembleShape {
    /// Independent centered gaussian per phase coordinate.
    Gaussian {
        /// Standard deviation of every coordinate.
        sigma: f64,
    },
    /// Uniform on the phase-space ball `|x| <= radius`.
    UniformBall {
        /// Ball radius.
        radius: f64,
    },
    /// Deterministic position grid with zero momentum: `ceil(N^(1/d))`
    /// points per axis on `[-extent, extent]`, first `N` kept in
    /// lexicographic order.
    Lattice {
        /// Position half-extent per axis.
        extent: f64,
    },
}

/// A complete sampling request.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplerSpec {
    /// Spatial dimension `d`.
    pub dim: usize,
    /// Ensemble size `N >= 1`.
    pub particles: usize,
    /// Geometric family.
    pub shape: EnsembleShape,
    /// Added to every sampled momentum; empty means zero.
    pub momentum_offset: Vec<f64>,
    /// Added to every sampled position; empty means zero.
    pub position_offset: Vec<f64>,
    /// Exponential-moment exponent the ensemble must support.
    pub alpha0: f64,
}

/// One standard gaussian draw: Box-Muller on two uniforms in `(0, 1]`,
/// cosine branch only (the sine branch is discarded to keep the consumption
/// pattern trivially fixed).
fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    let u1 = ((rng.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
    let u2 = ((rng.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// One uniform draw in `(0, 1]`.
fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    ((rng.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Samples the ensemble for `(spec, seed)`; `N` particles of weight `1/N`.
pub fn sample_initial_measure(
    spec: &SamplerSpec,
    seed: u64,
) -> Result<ParticleMeasure, SamplerError> {
    assert!(
        spec.dim >= 1 && spec.particles >= 1,
        "dimension and size must be positive"
    );
    assert!(
        spec.momentum_offset.is_empty() || spec.momentum_offset.len() == spec.dim,
        "momentum offset length must match the dimension"
    );
    assert!(
        spec.position_offset.is_empty() || spec.position_offset.len() == spec.dim,
        "position offset length must match the dimension"
    );

    let d = spec.dim;
    let n = spec.particles;
    let w0 = 1.0 / n as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut particles = Vec::with_capacity(n);
    let mut flat = vec![0.0; 2 * d];
    for index in 0..n {
        match &spec.shape {
            EnsembleShape::Gaussian { sigma } => {
                for c in flat.iter_mut() {
                    *c = sigma * gauss(&mut rng);
                }
            }
            EnsembleShape::UniformBall { radius } => {
                // Gaussian direction, radius by the inverse-volume law.
                loop {
                    for c in flat.iter_mut() {
                        *c = gauss(&mut rng);
                    }
                    let norm = crate::phase::norm(&flat);
                    if norm > 1e-12 {
                        let r = radius * uniform(&mut rng).powf(1.0 / (2 * d) as f64);
                        for c in flat.iter_mut() {
                            *c *= r / norm;
                        }
                        break;
                    }
                }
            }
            EnsembleShape::Lattice { extent } => {
                let per_axis = (n as f64).powf(1.0 / d as f64).ceil() as usize;
                flat[..d].fill(0.0);
                let mut rest = index;
                for k in 0..d {
                    let j = rest % per_axis;
                    rest /= per_axis;
                    flat[d + k] = if per_axis == 1 {
                        0.0
                    } else {
                        -extent + 2.0 * extent * j as f64 / (per_axis - 1) as f64
                    };
                }
            }
        }
        for (k, &off) in spec.momentum_offset.iter().enumerate() {
            flat[k] += off;
        }
        for (k, &off) in spec.position_offset.iter().enumerate() {
            flat[d + k] += off;
        }
        particles.push(WeightedParticle::new(PhasePoint::from_flat(&flat, d), w0));
    }

    let mu0 = ParticleMeasure::new(d, particles);
    match mu0.exp_moment(spec.alpha0, 0.0) {
        MomentValue::Finite(_) => Ok(mu0),
        MomentValue::Saturated => Err(SamplerError::SaturatedMoment {
            alpha0: spec.alpha0,
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(dim: usize, particles: usize, shape: EnsembleShape) -> SamplerSpec {
        SamplerSpec {
            dim,
            particles,
            shape,
            momentum_offset: Vec::new(),
            position_offset: Vec::new(),
            alpha0: 1.0,
        }
    }

    #[test]
    fn lattice_of_four_in_one_dimension() {
        let mu0 =
            sample_initial_measure(&spec(1, 4, EnsembleShape::Lattice { extent: 1.0 }), 7).unwrap();
        assert_eq!(mu0.particles.len(), 4);
        let expected: Vec<f64> = (0..4).map(|j| -1.0 + 2.0 * j as f64 / 3.0).collect();
        for (pt, q) in mu0.particles.iter().zip(expected) {
            assert_eq!(pt.w0, 0.25);
            assert_eq!(pt.x.p[0], 0.0);
            assert_eq!(pt.x.q[0], q);
        }
        assert_eq!(mu0.total_mass(0.0), 1.0);
    }

    #[test]
    fn lattice_covers_higher_dimensions_lexicographically() {
        let mu0 =
            sample_initial_measure(&spec(2, 5, EnsembleShape::Lattice { extent: 2.0 }), 0).unwrap();
        // 5 particles in d = 2 need a 3x3 grid; the first five cells walk the
        // first axis fastest.
        let qs: Vec<(f64, f64)> = mu0.particles.iter().map(|p| (p.x.q[0], p.x.q[1])).collect();
        assert_eq!(
            qs,
            vec![
                (-2.0, -2.0),
                (0.0, -2.0),
                (2.0, -2.0),
                (-2.0, 0.0),
                (0.0, 0.0)
            ]
        );
    }

    #[test]
    fn identical_seeds_are_bitwise_identical() {
        let s = spec(2, 64, EnsembleShape::Gaussian { sigma: 0.7 });
        let a = sample_initial_measure(&s, 42).unwrap();
        let b = sample_initial_measure(&s, 42).unwrap();
        assert_eq!(a, b);
        let c = sample_initial_measure(&s, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn gaussian_supports_a_unit_exponential_moment() {
        let mut s = spec(1, 500, EnsembleShape::Gaussian { sigma: 1.0 });
        s.alpha0 = 1.0;
        let mu0 = sample_initial_measure(&s, 3).unwrap();
        assert!(!mu0.exp_moment(1.0, 0.0).is_saturated());
    }

    #[test]
    fn absurd_moment_exponents_are_rejected() {
        let mut s = spec(1, 50, EnsembleShape::Gaussian { sigma: 1.0 });
        s.alpha0 = 1e306;
        assert_eq!(
            sample_initial_measure(&s, 3).unwrap_err(),
            SamplerError::SaturatedMoment { alpha0: 1e306 }
        );
    }

    #[test]
    fn uniform_ball_stays_inside_and_fills_its_radius() {
        let mu0 =
            sample_initial_measure(&spec(1, 400, EnsembleShape::UniformBall { radius: 2.0 }), 9)
                .unwrap();
        let norms: Vec<f64> = mu0.particles.iter().map(|p| p.x.norm()).collect();
        assert!(norms.iter().all(|&r| r <= 2.0 + 1e-12));
        let max = norms.iter().cloned().fold(0.0, f64::max);
        assert!(
            max > 1.6,
            "400 samples should reach past 80% of the radius, max {max}"
        );
    }

    #[test]
    fn offsets_shift_every_sample() {
        let mut s = spec(1, 3, EnsembleShape::Lattice { extent: 0.5 });
        s.momentum_offset = vec![1.25];
        s.position_offset = vec![-2.0];
        let mu0 = sample_initial_measure(&s, 0).unwrap();
        for pt in &mu0.particles {
            assert_eq!(pt.x.p[0], 1.25);
            assert!((pt.x.q[0] + 2.0).abs() <= 0.5);
        }
    }
}
