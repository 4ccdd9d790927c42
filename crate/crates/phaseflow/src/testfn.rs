//! Smooth cutoffs, bumps, and time windows used as test functions.
//!
//! Three shapes cover every smoothing need in the crate:
//!
//! * [`MomentumCutoff`] — a scalar ramp `theta_r` that is 0 below `r - 1` and
//!   1 above `r`, used to select the fast-momentum tail of an ensemble;
//! * [`Bump`] — a `C^2` compactly supported bump on phase space with values
//!   in `[0, 1]` and an exact gradient, used for weak-form residuals and
//!   representation checks;
//! * [`TimeWindow`] — a `C^2` window in time vanishing at both ends of its
//!   support, used to localize space-time test functions away from `t = 0`
//!   and `t = T`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::phase::PhasePoint;

/// Errors from constructing test functions.
#[derive(Debug, Error)]
pub enum TestFnError {
    /// `theta_r` ramps on `[r - 1, r]`, which requires `r > 1`.
    #[error("momentum cutoff radius must exceed 1, got {radius}")]
    CutoffRadius { radius: f64 },
    /// Bump radius must be positive.
    #[error("bump radius must be positive, got {radius}")]
    BumpRadius { radius: f64 },
    /// Window bounds must satisfy `0 <= start < end` with positive ramps that
    /// fit inside the support.
    #[error("invalid time window: start {start}, end {end}, ramp {ramp}")]
    Window { start: f64, end: f64, ramp: f64 },
}

/// Cubic smoothstep: 0 at 0, 1 at 1, zero slope at both ends (`C^1`).
fn smoothstep3(u: f64) -> f64 {
    if u <= 0.0 {
        0.0
    } else if u >= 1.0 {
        1.0
    } else {
        u * u * (3.0 - 2.0 * u)
    }
}

/// Quintic smoothstep: 0 at 0, 1 at 1, zero slope *and curvature* at both
/// ends (`C^2`).
fn smoothstep5(u: f64) -> f64 {
    if u <= 0.0 {
        0.0
    } else if u >= 1.0 {
        1.0
    } else {
        u * u * u * (10.0 + u * (-15.0 + 6.0 * u))
    }
}

/// Derivative of [`smoothstep5`].
fn smoothstep5_deriv(u: f64) -> f64 {
    if u <= 0.0 || u >= 1.0 {
        0.0
    } else {
        30.0 * u * u * (1.0 - u) * (1.0 - u)
    }
}

/// The ramp `theta_r`: 0 for `s <= r - 1`, 1 for `s >= r`, a monotone cubic
/// in between. Values lie in `[0, 1]`.
#[derive(Debug, Clone, Copy)]
pub struct MomentumCutoff {
    radius: f64,
}

impl MomentumCutoff {
    /// Builds `theta_r`; requires `r > 1` so the ramp stays in `s > 0`.
    pub fn new(radius: f64) -> Result<Self, TestFnError> {
        if radius > 1.0 {
            Ok(Self { radius })
        } else {
            Err(TestFnError::CutoffRadius { radius })
        }
    }

    /// The cutoff radius `r`.
    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Evaluates `theta_r(s)`.
    pub fn eval(&self, s: f64) -> f64 {
        smoothstep3(s - (self.radius - 1.0))
    }
}

/// A `C^2` compactly supported bump on phase space:
/// `phi(x) = (1 - |x - c|^2 / R^2)^3` inside the ball of radius `R` around
/// the center, 0 outside. Values lie in `[0, 1]` with maximum 1 at the
/// center; value, gradient, and Hessian all vanish at the support boundary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Bump {
    /// Center, as a flat `[p..., q...]` phase-space vector of length `2d`.
    pub center: Vec<f64>,
    /// Support radius `R`.
    pub radius: f64,
}

impl Bump {
    /// Builds a bump with the given phase-space center and radius.
    pub fn new(center: Vec<f64>, radius: f64) -> Result<Self, TestFnError> {
        if radius > 0.0 {
            Ok(Self { center, radius })
        } else {
            Err(TestFnError::BumpRadius { radius })
        }
    }

    /// Spatial dimension `d` implied by the center vector.
    pub fn dim(&self) -> usize {
        self.center.len() / 2
    }

    /// Squared distance from the center, on flat coordinates.
    fn sq_dist(&self, flat: &[f64]) -> f64 {
        flat.iter()
            .zip(&self.center)
            .map(|(a, c)| (a - c) * (a - c))
            .sum()
    }

    /// Evaluates the bump at a phase point.
    pub fn eval(&self, x: &PhasePoint) -> f64 {
        let mut flat = vec![0.0; self.center.len()];
        x.write_flat(&mut flat);
        self.eval_flat(&flat)
    }

    /// Evaluates the bump on flat `[p..., q...]` coordinates.
    pub fn eval_flat(&self, flat: &[f64]) -> f64 {
        let s = 1.0 - self.sq_dist(flat) / (self.radius * self.radius);
        if s <= 0.0 {
            0.0
        } else {
            s * s * s
        }
    }

    /// Gradient with respect to the full phase-space variable, on flat
    /// coordinates: `-(6 / R^2) s^2 (x - c)` inside the support, 0 outside.
    pub fn grad_flat(&self, flat: &[f64], out: &mut [f64]) {
        let r2 = self.radius * self.radius;
        let s = 1.0 - self.sq_dist(flat) / r2;
        if s <= 0.0 {
            out.fill(0.0);
            return;
        }
        let scale = -6.0 * s * s / r2;
        for (k, o) in out.iter_mut().enumerate() {
            *o = scale * (flat[k] - self.center[k]);
        }
    }
}

/// A `C^2` time window: 0 outside `[start, end]`, 1 on the plateau
/// `[start + ramp, end - ramp]`, quintic ramps in between.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TimeWindow {
    /// Support start.
    pub start: f64,
    /// Support end.
    pub end: f64,
    /// Ramp length at each end.
    pub ramp: f64,
}

impl TimeWindow {
    /// Builds a window; ramps must be positive and fit: `2 ramp <= end - start`.
    pub fn new(start: f64, end: f64, ramp: f64) -> Result<Self, TestFnError> {
        if start >= 0.0 && end > start && ramp > 0.0 && 2.0 * ramp <= end - start {
            Ok(Self { start, end, ramp })
        } else {
            Err(TestFnError::Window { start, end, ramp })
        }
    }

    /// Evaluates `w(t)`.
    pub fn eval(&self, t: f64) -> f64 {
        smoothstep5((t - self.start) / self.ramp) * smoothstep5((self.end - t) / self.ramp)
    }

    /// Evaluates `w'(t)` exactly.
    pub fn deriv(&self, t: f64) -> f64 {
        let up = (t - self.start) / self.ramp;
        let down = (self.end - t) / self.ramp;
        (smoothstep5_deriv(up) * smoothstep5(down) - smoothstep5(up) * smoothstep5_deriv(down))
            / self.ramp
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    #[test]
    fn cutoff_requires_radius_above_one() {
        assert!(MomentumCutoff::new(1.0).is_err());
        assert!(MomentumCutoff::new(5.0).is_ok());
    }

    #[test]
    fn cutoff_ramps_between_r_minus_one_and_r() {
        let theta = MomentumCutoff::new(5.0).unwrap();
        assert_eq!(theta.eval(0.0), 0.0);
        assert_eq!(theta.eval(4.0), 0.0);
        assert_relative_eq!(theta.eval(4.5), 0.5);
        assert_eq!(theta.eval(5.0), 1.0);
        assert_eq!(theta.eval(100.0), 1.0);
        // Monotone, in [0, 1].
        let mut prev = -1.0;
        for k in 0..=100 {
            let v = theta.eval(3.5 + 2.0 * k as f64 / 100.0);
            assert!((0.0..=1.0).contains(&v));
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn bump_peaks_at_center_and_vanishes_outside() {
        let bump = Bump::new(vec![0.0, 1.0], 0.5).unwrap();
        assert_eq!(bump.eval(&PhasePoint::new(&[0.0], &[1.0])), 1.0);
        assert_eq!(bump.eval(&PhasePoint::new(&[0.0], &[1.6])), 0.0);
        // Values in [0, 1] on a sweep through the support.
        for k in 0..=50 {
            let q = 0.4 + 1.2 * k as f64 / 50.0;
            let v = bump.eval(&PhasePoint::new(&[0.0], &[q]));
            assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn bump_gradient_matches_finite_differences() {
        let bump = Bump::new(vec![0.1, -0.2, 0.3, 0.0], 1.3).unwrap();
        let probes = [
            [0.2, 0.0, 0.1, 0.4],
            [0.1, -0.2, 0.3, 0.0],
            [-0.4, 0.3, 0.9, -0.5],
        ];
        let h = 1e-6;
        for flat in probes {
            let mut grad = [0.0; 4];
            bump.grad_flat(&flat, &mut grad);
            for k in 0..4 {
                let mut hi = flat;
                let mut lo = flat;
                hi[k] += h;
                lo[k] -= h;
                let fd = (bump.eval_flat(&hi) - bump.eval_flat(&lo)) / (2.0 * h);
                assert_abs_diff_eq!(grad[k], fd, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn bump_gradient_vanishes_at_support_boundary() {
        let bump = Bump::new(vec![0.0, 0.0], 1.0).unwrap();
        let mut grad = [0.0; 2];
        bump.grad_flat(&[0.0, 1.0 - 1e-9], &mut grad);
        assert!(crate::phase::norm(&grad) < 1e-15);
    }

    #[test]
    fn window_plateau_and_support() {
        let w = TimeWindow::new(1.0, 9.0, 1.0).unwrap();
        assert_eq!(w.eval(0.0), 0.0);
        assert_eq!(w.eval(1.0), 0.0);
        assert_eq!(w.eval(2.0), 1.0);
        assert_eq!(w.eval(5.0), 1.0);
        assert_eq!(w.eval(9.0), 0.0);
        assert_eq!(w.eval(10.0), 0.0);
    }

    #[test]
    fn window_derivative_matches_finite_differences() {
        let w = TimeWindow::new(0.5, 3.5, 0.8).unwrap();
        let h = 1e-6;
        for k in 0..=70 {
            let t = 0.3 + 3.4 * k as f64 / 70.0;
            let fd = (w.eval(t + h) - w.eval(t - h)) / (2.0 * h);
            assert_abs_diff_eq!(w.deriv(t), fd, epsilon = 1e-7);
        }
    }

    #[test]
    fn window_derivative_integrates_to_zero() {
        // The window returns to zero, so its derivative telescopes away.
        let w = TimeWindow::new(1.0, 7.0, 1.5).unwrap();
        let n = 20_000;
        let dt = 8.0 / n as f64;
        let integral: f64 = (0..=n)
            .map(|k| {
                let t = k as f64 * dt;
                let scale = if k == 0 || k == n { 0.5 } else { 1.0 };
                scale * w.deriv(t) * dt
            })
            .sum();
        assert_abs_diff_eq!(integral, 0.0, epsilon = 1e-10);
    }
}
