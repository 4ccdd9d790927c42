//! Points of phase space `R^d x R^d` and small vector helpers.
//!
//! A phase point is a pair `x = (p, q)` of momentum and position, each in
//! `R^d`. Throughout the crate `|x|` means the Euclidean norm of the full
//! `2d`-dimensional vector; `|p|` and `|q|` are the marginal norms. The
//! spatial dimension is runtime data, so coordinates are stored as plain
//! vectors.

use serde::{Deserialize, Serialize};

/// A point `(p, q)` of phase space; `p` and `q` must have equal length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    /// Momentum coordinates.
    pub p: Vec<f64>,
    /// Position coordinates.
    pub q: Vec<f64>,
}

impl PhasePoint {
    /// Builds a point from momentum and position slices of equal length.
    pub fn new(p: &[f64], q: &[f64]) -> Self {
        assert_eq!(p.len(), q.len(), "momentum/position dimension mismatch");
        Self {
            p: p.to_vec(),
            q: q.to_vec(),
        }
    }

    /// The origin of phase space in dimension `dim`.
    pub fn zero(dim: usize) -> Self {
        Self {
            p: vec![0.0; dim],
            q: vec![0.0; dim],
        }
    }

    /// Spatial dimension `d`.
    pub fn dim(&self) -> usize {
        self.p.len()
    }

    /// Euclidean norm of the full `(p, q)` vector.
    pub fn norm(&self) -> f64 {
        (sq_norm(&self.p) + sq_norm(&self.q)).sqrt()
    }

    /// Euclidean norm of the momentum marginal.
    pub fn p_norm(&self) -> f64 {
        sq_norm(&self.p).sqrt()
    }

    /// Euclidean norm of the position marginal.
    pub fn q_norm(&self) -> f64 {
        sq_norm(&self.q).sqrt()
    }

    /// Euclidean distance to another phase point.
    pub fn distance(&self, other: &Self) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.p.len() {
            acc += (self.p[i] - other.p[i]).powi(2) + (self.q[i] - other.q[i]).powi(2);
        }
        acc.sqrt()
    }

    /// True when every coordinate is finite.
    pub fn is_finite(&self) -> bool {
        self.p.iter().all(|c| c.is_finite()) && self.q.iter().all(|c| c.is_finite())
    }

    /// Radial component of the momentum, `<p, q/|q|>`, the exact value of
    /// `d|q|/dt` along any trajectory with `dq/dt = p`. Zero at `q = 0` by
    /// convention (no distinguished direction there).
    pub fn radial_speed(&self) -> f64 {
        let qn = self.q_norm();
        if qn == 0.0 {
            return 0.0;
        }
        dot(&self.p, &self.q) / qn
    }

    /// Serializes into a flat state vector `[p..., q...]` of length `2d`.
    pub fn write_flat(&self, out: &mut [f64]) {
        let d = self.dim();
        out[..d].copy_from_slice(&self.p);
        out[d..2 * d].copy_from_slice(&self.q);
    }

    /// Reads a point back from a flat `[p..., q...]` state vector.
    pub fn from_flat(flat: &[f64], dim: usize) -> Self {
        Self {
            p: flat[..dim].to_vec(),
            q: flat[dim..2 * dim].to_vec(),
        }
    }
}

/// Squared Euclidean norm of a coordinate slice.
pub fn sq_norm(v: &[f64]) -> f64 {
    v.iter().map(|c| c * c).sum()
}

/// Euclidean norm of a coordinate slice.
pub fn norm(v: &[f64]) -> f64 {
    sq_norm(v).sqrt()
}

/// Dot product of two coordinate slices of equal length.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Euclidean distance between two coordinate slices.
pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn norms_split_into_marginals() {
        let x = PhasePoint::new(&[3.0], &[4.0]);
        assert_relative_eq!(x.norm(), 5.0);
        assert_relative_eq!(x.p_norm(), 3.0);
        assert_relative_eq!(x.q_norm(), 4.0);
    }

    #[test]
    fn radial_speed_is_signed_projection() {
        // Moving straight away from the origin: d|q|/dt = |p|.
        let out = PhasePoint::new(&[2.0, 0.0], &[5.0, 0.0]);
        assert_relative_eq!(out.radial_speed(), 2.0);
        // Moving inward: negative.
        let inw = PhasePoint::new(&[-2.0, 0.0], &[5.0, 0.0]);
        assert_relative_eq!(inw.radial_speed(), -2.0);
        // Tangential motion: zero.
        let tan = PhasePoint::new(&[0.0, 1.0], &[5.0, 0.0]);
        assert_relative_eq!(tan.radial_speed(), 0.0);
        // Convention at the origin.
        assert_eq!(PhasePoint::zero(2).radial_speed(), 0.0);
    }

    #[test]
    fn flat_round_trip() {
        let x = PhasePoint::new(&[1.0, -2.0], &[0.5, 8.0]);
        let mut flat = [0.0; 4];
        x.write_flat(&mut flat);
        assert_eq!(flat, [1.0, -2.0, 0.5, 8.0]);
        assert_eq!(PhasePoint::from_flat(&flat, 2), x);
    }
}
