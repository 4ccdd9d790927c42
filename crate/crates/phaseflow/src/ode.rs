//! Adaptive embedded Runge–Kutta 4(5) integration (Dormand–Prince pair).
//!
//! One fifth-order solution with an embedded fourth-order error estimate,
//! standard proportional step control. Two behaviors matter to callers
//! beyond accuracy:
//!
//! * a right-hand side may report a non-finite derivative, which aborts the
//!   drive with [`OdeError::NonFinite`];
//! * when the controller's step shrinks below `h_min` the drive stops and
//!   reports [`DriveOutcome::Collapsed`] *as data, not as an error* — for
//!   super-quadratic potentials this is precisely the numerical signature of
//!   finite-time blow-up, and the flow layer turns it into escape handling.

use thiserror::Error;

/// Hard cap on attempted steps per drive; prevents silent infinite loops on
/// pathological inputs (smooth fields collapse long before reaching it).
const MAX_ATTEMPTS: u64 = 50_000_000;

/// Integration failures.
#[derive(Debug, Clone, Error)]
pub enum OdeError {
    /// The right-hand side produced a non-finite derivative at time `t`.
    #[error("non-finite derivative at t = {t}")]
    NonFinite { t: f64 },
    /// The step cap was exhausted before reaching the end time.
    #[error("integration stalled near t = {t}")]
    Stalled { t: f64 },
}

/// How a drive ended.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DriveOutcome {
    /// Reached the requested end time.
    Completed,
    /// The controller step fell below `h_min` at time `t`; the state vector
    /// holds the last accepted state.
    Collapsed { t: f64 },
}

/// Step-control parameters.
#[derive(Debug, Clone, Copy)]
pub struct StepControl {
    /// Mixed absolute/relative tolerance per step.
    pub tol: f64,
    /// Controller floor: shrinking below this reports a collapse.
    pub h_min: f64,
}

/// Dormand–Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
/// Fifth-order weights (same as the last stage row).
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
/// Embedded fourth-order weights.
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Reusable stepper workspace for a fixed state dimension.
pub struct Stepper {
    n: usize,
    k: Vec<Vec<f64>>,
    y_stage: Vec<f64>,
    y_next: Vec<f64>,
}

impl Stepper {
    /// Allocates workspace for state vectors of length `n`.
    pub fn new(n: usize) -> Self {
        Self {
            n,
            k: (0..7).map(|_| vec![0.0; n]).collect(),
            y_stage: vec![0.0; n],
            y_next: vec![0.0; n],
        }
    }

    /// Integrates `y` from `t0` to `t1`.
    ///
    /// `h` carries the controller step across calls (pass 0 to start fresh);
    /// on return it holds the controller's current step, so consecutive
    /// drives over adjacent intervals warm-start each other. `observe` is
    /// called after every accepted step with `(t, y)` and may project the
    /// state (e.g. clamp a component); the next step restarts from the
    /// observed state.
    ///
    /// The right-hand side receives `(t, y)`, writes the derivative into its
    /// third argument, and returns `false` to signal a non-finite evaluation.
    #[allow(clippy::too_many_arguments)]
    pub fn drive(
        &mut self,
        mut rhs: impl FnMut(f64, &[f64], &mut [f64]) -> bool,
        t0: f64,
        t1: f64,
        y: &mut [f64],
        ctrl: &StepControl,
        h: &mut f64,
        mut observe: impl FnMut(f64, &mut [f64]),
    ) -> Result<DriveOutcome, OdeError> {
        assert_eq!(y.len(), self.n);
        let span = t1 - t0;
        if span <= 0.0 {
            return Ok(DriveOutcome::Completed);
        }
        if !(*h > 0.0) || !h.is_finite() {
            *h = span;
        }
        let mut t = t0;
        let mut attempts: u64 = 0;
        while t < t1 {
            attempts += 1;
            if attempts > MAX_ATTEMPTS {
                return Err(OdeError::Stalled { t });
            }
            if *h < ctrl.h_min {
                return Ok(DriveOutcome::Collapsed { t });
            }
            let h_step = h.min(t1 - t);

            // Stage evaluations.
            let mut finite = rhs(t, y, &mut self.k[0]);
            for stage in 1..7 {
                if !finite {
                    return Err(OdeError::NonFinite { t });
                }
                for i in 0..self.n {
                    let mut acc = 0.0;
                    for (j, kj) in self.k.iter().enumerate().take(stage) {
                        let a = A[stage][j];
                        if a != 0.0 {
                            acc += a * kj[i];
                        }
                    }
                    self.y_stage[i] = y[i] + h_step * acc;
                }
                let (_, rest) = self.k.split_at_mut(stage);
                finite = rhs(t + C[stage] * h_step, &self.y_stage, &mut rest[0]);
            }
            if !finite {
                return Err(OdeError::NonFinite { t });
            }

            // Fifth-order proposal and embedded error estimate.
            let mut err_sq = 0.0;
            let mut proposal_finite = true;
            #[allow(clippy::needless_range_loop)]
            for i in 0..self.n {
                let mut s5 = 0.0;
                let mut s4 = 0.0;
                for j in 0..7 {
                    if B5[j] != 0.0 {
                        s5 += B5[j] * self.k[j][i];
                    }
                    if B4[j] != 0.0 {
                        s4 += B4[j] * self.k[j][i];
                    }
                }
                let y5 = y[i] + h_step * s5;
                let y4 = y[i] + h_step * s4;
                if !y5.is_finite() {
                    proposal_finite = false;
                    break;
                }
                let scale = ctrl.tol * (1.0 + y[i].abs().max(y5.abs()));
                let e = (y5 - y4) / scale;
                err_sq += e * e;
                self.y_next[i] = y5;
            }

            if !proposal_finite {
                // Treat like a wildly failed step: shrink hard and retry.
                *h = h_step * 0.2;
                continue;
            }

            let err = (err_sq / self.n as f64).sqrt();
            if err <= 1.0 {
                y.copy_from_slice(&self.y_next);
                t += h_step;
                observe(t, y);
                // A step truncated to land on the interval end says nothing
                // about accuracy headroom, so it must not shrink the
                // controller's memory (a warm-started follow-up drive would
                // otherwise see a spuriously collapsed step).
                if h_step >= *h {
                    let grow = if err == 0.0 {
                        5.0
                    } else {
                        (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
                    };
                    *h = h_step * grow;
                }
            } else {
                *h = h_step * (0.9 * err.powf(-0.2)).clamp(0.2, 0.9);
            }
        }
        Ok(DriveOutcome::Completed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn drive_simple(
        rhs: impl FnMut(f64, &[f64], &mut [f64]) -> bool,
        y: &mut [f64],
        t1: f64,
        tol: f64,
    ) -> Result<DriveOutcome, OdeError> {
        let mut stepper = Stepper::new(y.len());
        let ctrl = StepControl {
            tol,
            h_min: 1e-12 * t1.max(1.0),
        };
        let mut h = 0.0;
        stepper.drive(rhs, 0.0, t1, y, &ctrl, &mut h, |_, _| {})
    }

    #[test]
    fn constant_derivative_is_exact() {
        let mut y = [1.0, -2.0];
        let out = drive_simple(
            |_, _, dy| {
                dy[0] = 3.0;
                dy[1] = 0.5;
                true
            },
            &mut y,
            2.0,
            1e-8,
        )
        .unwrap();
        assert_eq!(out, DriveOutcome::Completed);
        assert_relative_eq!(y[0], 7.0, max_relative = 1e-14);
        assert_relative_eq!(y[1], -1.0, max_relative = 1e-14);
    }

    #[test]
    fn harmonic_quarter_period() {
        // (p, q) from (0, 1): exact state at pi/2 is (-1, 0).
        let mut y = [0.0, 1.0];
        drive_simple(
            |_, y, dy| {
                dy[0] = -y[1];
                dy[1] = y[0];
                true
            },
            &mut y,
            std::f64::consts::FRAC_PI_2,
            1e-10,
        )
        .unwrap();
        assert_abs_diff_eq!(y[0], -1.0, epsilon = 1e-8);
        assert_abs_diff_eq!(y[1], 0.0, epsilon = 1e-8);
    }

    #[test]
    fn time_dependent_rhs_uses_stage_times() {
        // dy/dt = 3 t^2 integrates exactly to t^3 only if the stage times
        // t + c_s h are honored.
        let mut y = [0.0];
        drive_simple(
            |t, _, dy| {
                dy[0] = 3.0 * t * t;
                true
            },
            &mut y,
            2.0,
            1e-10,
        )
        .unwrap();
        assert_relative_eq!(y[0], 8.0, max_relative = 1e-12);
    }

    #[test]
    fn exponential_growth_meets_tolerance() {
        let mut y = [1.0];
        drive_simple(
            |_, y, dy| {
                dy[0] = y[0];
                true
            },
            &mut y,
            1.0,
            1e-10,
        )
        .unwrap();
        assert_relative_eq!(y[0], std::f64::consts::E, max_relative = 1e-9);
    }

    #[test]
    fn blow_up_collapses_near_singularity() {
        // dy/dt = y^2 from y(0) = 1 blows up at t = 1.
        let mut y = [1.0];
        let mut stepper = Stepper::new(1);
        let ctrl = StepControl {
            tol: 1e-8,
            h_min: 1e-13,
        };
        let mut h = 0.0;
        let out = stepper
            .drive(
                |_, y, dy| {
                    dy[0] = y[0] * y[0];
                    true
                },
                0.0,
                2.0,
                &mut y,
                &ctrl,
                &mut h,
                |_, _| {},
            )
            .unwrap();
        match out {
            DriveOutcome::Collapsed { t } => assert_abs_diff_eq!(t, 1.0, epsilon = 1e-6),
            other => panic!("expected collapse, got {other:?}"),
        }
        assert!(y[0] > 1e6, "state should have grown enormous, got {}", y[0]);
    }

    #[test]
    fn non_finite_rhs_is_an_error() {
        let mut y = [1.0];
        let err = drive_simple(|_, _, _| false, &mut y, 1.0, 1e-8).unwrap_err();
        assert!(matches!(err, OdeError::NonFinite { .. }));
    }

    #[test]
    fn tiny_interval_does_not_erode_warm_start() {
        // A drive whose whole span is one truncated sliver must leave the
        // controller step alone; otherwise the next drive would start from a
        // microscopic step and report a spurious collapse.
        let rhs = |_: f64, y: &[f64], dy: &mut [f64]| {
            dy[0] = -y[0];
            true
        };
        let ctrl = StepControl {
            tol: 1e-8,
            h_min: 1e-10,
        };
        let mut y = [1.0];
        let mut stepper = Stepper::new(1);
        let mut h = 0.0;
        stepper
            .drive(rhs, 0.0, 1.0, &mut y, &ctrl, &mut h, |_, _| {})
            .unwrap();
        let h_before = h;
        stepper
            .drive(rhs, 1.0, 1.0 + 1e-12, &mut y, &ctrl, &mut h, |_, _| {})
            .unwrap();
        assert_eq!(h, h_before);
        let out = stepper
            .drive(rhs, 1.0 + 1e-12, 2.0, &mut y, &ctrl, &mut h, |_, _| {})
            .unwrap();
        assert_eq!(out, DriveOutcome::Completed);
        assert_relative_eq!(y[0], (-2.0f64).exp(), max_relative = 1e-7);
    }

    #[test]
    fn observer_projection_feeds_next_step() {
        // The observer may project the accepted state; the projected value is
        // what the following step starts from.
        let rhs = |_: f64, _: &[f64], dy: &mut [f64]| {
            dy[0] = -1.0;
            true
        };
        let mut y = [0.5];
        let mut stepper = Stepper::new(1);
        let ctrl = StepControl {
            tol: 1e-8,
            h_min: 1e-13,
        };
        let mut h = 0.0;
        stepper
            .drive(rhs, 0.0, 2.0, &mut y, &ctrl, &mut h, |_, y| {
                if y[0] < 0.0 {
                    y[0] = 0.0;
                }
            })
            .unwrap();
        assert_eq!(y[0], 0.0);
    }

    #[test]
    fn warm_started_segments_match_single_drive() {
        // Integrating [0, 1] in four warm-started segments should land within
        // tolerance of the one-shot result.
        let rhs = |_: f64, y: &[f64], dy: &mut [f64]| {
            dy[0] = (2.0 * y[0]).sin() + 1.0;
            true
        };
        let ctrl = StepControl {
            tol: 1e-10,
            h_min: 1e-13,
        };

        let mut y_once = [0.3];
        let mut h = 0.0;
        Stepper::new(1)
            .drive(rhs, 0.0, 1.0, &mut y_once, &ctrl, &mut h, |_, _| {})
            .unwrap();

        let mut y_seg = [0.3];
        let mut stepper = Stepper::new(1);
        let mut h = 0.0;
        for k in 0..4 {
            let t0 = k as f64 * 0.25;
            stepper
                .drive(rhs, t0, t0 + 0.25, &mut y_seg, &ctrl, &mut h, |_, _| {})
                .unwrap();
        }
        assert_abs_diff_eq!(y_once[0], y_seg[0], epsilon = 1e-9);
    }
}
