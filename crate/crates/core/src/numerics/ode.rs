//! Adaptive explicit Runge-Kutta integration.
//!
//! Dormand-Prince 5(4) with the classical fourth-order continuous extension
//! and a proportional-integral step controller. The dense steps are kept so
//! that callers can interpolate the solution anywhere in the covered span,
//! locate sphere crossings by root finding, and resample trajectories for
//! export without re-integrating.

use nalgebra::DVector;

use crate::error::{Error, Result};

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

// Difference between the 5th-order weights and the embedded 4th-order ones.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

// Coefficients of the continuous extension.
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// One accepted step together with its interpolation polynomial.
#[derive(Debug, Clone)]
pub struct DenseStep {
    pub t0: f64,
    pub h: f64,
    cont: [DVector<f64>; 5],
}

impl DenseStep {
    /// Evaluate the interpolant at `t` inside [t0, t0 + h].
    pub fn eval(&self, t: f64) -> DVector<f64> {
        let s = (t - self.t0) / self.h;
        let s1 = 1.0 - s;
        &self.cont[0]
            + s * (&self.cont[1] + s1 * (&self.cont[2] + s * (&self.cont[3] + s1 * &self.cont[4])))
    }

    pub fn t_end(&self) -> f64 {
        self.t0 + self.h
    }
}

#[derive(Debug, Clone)]
pub struct OdeOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_steps: usize,
    pub h_max: f64,
    pub h_init: Option<f64>,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions {
            rel_tol: 1e-12,
            abs_tol: 1e-12,
            max_steps: 4_000_000,
            h_max: f64::INFINITY,
            h_init: None,
        }
    }
}

impl OdeOptions {
    pub fn with_tol(tol: f64) -> Self {
        OdeOptions {
            rel_tol: tol,
            abs_tol: tol,
            ..Default::default()
        }
    }
}

/// Why the driver stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    ReachedEnd,
    Condition,
}

#[derive(Debug, Clone)]
pub struct OdeRun {
    pub steps: Vec<DenseStep>,
    pub t_final: f64,
    pub y_final: DVector<f64>,
    pub accepted: usize,
    pub rejected: usize,
    pub stop: StopReason,
}

impl OdeRun {
    /// Interpolated state at any time inside the covered span.
    pub fn eval(&self, t: f64) -> DVector<f64> {
        debug_assert!(!self.steps.is_empty());
        let first = &self.steps[0];
        if t <= first.t0 {
            return first.eval(first.t0);
        }
        if t >= self.t_final {
            return self.y_final.clone();
        }
        // Binary search for the step containing t (steps are ordered in t).
        let mut lo = 0usize;
        let mut hi = self.steps.len() - 1;
        while lo < hi {
            let mid = (lo + hi) / 2;
            if self.steps[mid].t_end() < t {
                lo = mid + 1;
            } else {
                hi = mid;
            }
        }
        self.steps[lo].eval(t)
    }
}

/// Integrate dy/dt = f(t, y) from `t0` to `t_end` (forward in time).
pub fn integrate<F>(f: F, t0: f64, y0: &DVector<f64>, t_end: f64, opts: &OdeOptions) -> Result<OdeRun>
where
    F: FnMut(f64, &DVector<f64>, &mut DVector<f64>),
{
    integrate_until(f, t0, y0, t_end, opts, |_, _| false)
}

/// Integrate until `t_max` or until `stop(t, y)` holds at an accepted step
/// endpoint, whichever comes first.
pub fn integrate_until<F, S>(
    mut f: F,
    t0: f64,
    y0: &DVector<f64>,
    t_max: f64,
    opts: &OdeOptions,
    stop: S,
) -> Result<OdeRun>
where
    F: FnMut(f64, &DVector<f64>, &mut DVector<f64>),
    S: Fn(f64, &DVector<f64>) -> bool,
{
    if !(t_max > t0) {
        return Err(Error::invalid_input(format!(
            "integration span is empty: t0 = {t0}, t_max = {t_max}"
        )));
    }
    let n = y0.len();
    let mut y = y0.clone();
    let mut t = t0;

    let mut k1 = DVector::zeros(n);
    let mut k2 = DVector::zeros(n);
    let mut k3 = DVector::zeros(n);
    let mut k4 = DVector::zeros(n);
    let mut k5 = DVector::zeros(n);
    let mut k6 = DVector::zeros(n);
    let mut k7 = DVector::zeros(n);
    let mut y_stage = DVector::zeros(n);

    f(t, &y, &mut k1);

    // Initial step: crude curvature-free guess, refined by the controller.
    let mut h = match opts.h_init {
        Some(h0) => h0,
        None => {
            let ynorm = y.norm().max(1e-8);
            let fnorm = k1.norm();
            let scale = if fnorm > 1e-300 {
                0.01 * ynorm / fnorm
            } else {
                (t_max - t0) * 1e-3
            };
            scale.min((t_max - t0) * 0.1)
        }
    };
    h = h.min(opts.h_max).max(1e-300);

    let mut steps: Vec<DenseStep> = Vec::new();
    let mut accepted = 0usize;
    let mut rejected = 0usize;
    let mut err_old: f64 = 1e-4;

    let order_inv = 1.0 / 5.0;
    let safety = 0.9;

    while t < t_max {
        if accepted + rejected > opts.max_steps {
            return Err(Error::numerical(format!(
                "step budget exhausted at t = {t:e} (limit {})",
                opts.max_steps
            )));
        }
        let mut last = false;
        if t + h >= t_max {
            h = t_max - t;
            last = true;
        }
        if h <= t.abs() * f64::EPSILON * 4.0 {
            return Err(Error::numerical(format!(
                "step size underflow at t = {t:e} (h = {h:e})"
            )));
        }

        y_stage.copy_from(&y);
        y_stage.axpy(h * A21, &k1, 1.0);
        f(t + C2 * h, &y_stage, &mut k2);

        y_stage.copy_from(&y);
        y_stage.axpy(h * A31, &k1, 1.0);
        y_stage.axpy(h * A32, &k2, 1.0);
        f(t + C3 * h, &y_stage, &mut k3);

        y_stage.copy_from(&y);
        y_stage.axpy(h * A41, &k1, 1.0);
        y_stage.axpy(h * A42, &k2, 1.0);
        y_stage.axpy(h * A43, &k3, 1.0);
        f(t + C4 * h, &y_stage, &mut k4);

        y_stage.copy_from(&y);
        y_stage.axpy(h * A51, &k1, 1.0);
        y_stage.axpy(h * A52, &k2, 1.0);
        y_stage.axpy(h * A53, &k3, 1.0);
        y_stage.axpy(h * A54, &k4, 1.0);
        f(t + C5 * h, &y_stage, &mut k5);

        y_stage.copy_from(&y);
        y_stage.axpy(h * A61, &k1, 1.0);
        y_stage.axpy(h * A62, &k2, 1.0);
        y_stage.axpy(h * A63, &k3, 1.0);
        y_stage.axpy(h * A64, &k4, 1.0);
        y_stage.axpy(h * A65, &k5, 1.0);
        f(t + h, &y_stage, &mut k6);

        // 5th-order solution (k7 is its derivative: FSAL).
        let mut y_new = y.clone();
        y_new.axpy(h * A71, &k1, 1.0);
        y_new.axpy(h * A73, &k3, 1.0);
        y_new.axpy(h * A74, &k4, 1.0);
        y_new.axpy(h * A75, &k5, 1.0);
        y_new.axpy(h * A76, &k6, 1.0);
        f(t + h, &y_new, &mut k7);

        // Weighted RMS error estimate.
        let mut err: f64 = 0.0;
        for i in 0..n {
            let e = h
                * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = opts.abs_tol + opts.rel_tol * y[i].abs().max(y_new[i].abs());
            err += (e / sc) * (e / sc);
        }
        err = (err / n as f64).sqrt();

        if err <= 1.0 {
            // Accept: build the continuous extension.
            let ydiff = &y_new - &y;
            let bspl = h * &k1 - &ydiff;
            let cont0 = y.clone();
            let cont1 = ydiff.clone();
            let cont2 = bspl.clone();
            let cont3 = -h * &k7 + &ydiff - bspl;
            let cont4 = h
                * (D1 * &k1 + D3 * &k3 + D4 * &k4 + D5 * &k5 + D6 * &k6 + D7 * &k7);
            steps.push(DenseStep {
                t0: t,
                h,
                cont: [cont0, cont1, cont2, cont3, cont4],
            });
            accepted += 1;

            t += h;
            y.copy_from(&y_new);
            std::mem::swap(&mut k1, &mut k7);

            let should_stop = stop(t, &y);

            // PI controller (Hairer beta = 0.08).
            let err_clamped = err.max(1e-32);
            let fac = safety * err_clamped.powf(-0.7 * order_inv) * err_old.powf(0.4 * order_inv);
            let fac = fac.clamp(0.2, 10.0);
            h = (h * fac).min(opts.h_max);
            err_old = err_clamped;

            if should_stop {
                return Ok(OdeRun {
                    steps,
                    t_final: t,
                    y_final: y,
                    accepted,
                    rejected,
                    stop: StopReason::Condition,
                });
            }
            if last {
                break;
            }
        } else {
            rejected += 1;
            let fac = (safety * err.powf(-order_inv)).clamp(0.1, 1.0);
            h *= fac;
        }
    }

    Ok(OdeRun {
        steps,
        t_final: t,
        y_final: y,
        accepted,
        rejected,
        stop: StopReason::ReachedEnd,
    })
}
