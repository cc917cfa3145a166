//! Monotone cubic Hermite interpolation.
//!
//! Node slopes come from the derivative of the local cubic through four
//! neighboring points (third-order accurate), then pass through the
//! Fritsch-Carlson limiter so the interpolant cannot overshoot monotone
//! data. On smooth monotone samples the limiter is inactive and the
//! interpolant converges at fourth order.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct MonotoneCubic {
    xs: Vec<f64>,
    ys: Vec<f64>,
    ds: Vec<f64>,
}

/// Derivative at `x` of the Newton interpolating polynomial through the
/// given points (up to four of them).
fn local_poly_derivative(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let m = xs.len();
    debug_assert!((2..=4).contains(&m));
    // Divided differences.
    let mut dd = ys.to_vec();
    for order in 1..m {
        for i in (order..m).rev() {
            dd[i] = (dd[i] - dd[i - 1]) / (xs[i] - xs[i - order]);
        }
    }
    // d/dx of c0 + c1(x-x0) + c2(x-x0)(x-x1) + c3(x-x0)(x-x1)(x-x2).
    let mut deriv = dd[1];
    if m >= 3 {
        deriv += dd[2] * ((x - xs[0]) + (x - xs[1]));
    }
    if m >= 4 {
        let (a, b, c) = (x - xs[0], x - xs[1], x - xs[2]);
        deriv += dd[3] * (a * b + a * c + b * c);
    }
    deriv
}

impl MonotoneCubic {
    pub fn fit(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        let n = xs.len();
        if n != ys.len() || n < 2 {
            return Err(Error::invalid_input(
                "interpolation needs at least two nodes with matching values",
            ));
        }
        for w in xs.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::invalid_input(
                    "interpolation abscissae must be strictly increasing",
                ));
            }
        }

        let mut ds = vec![0.0; n];
        for i in 0..n {
            let lo = if n <= 4 {
                0
            } else {
                i.saturating_sub(1).min(n - 4)
            };
            let hi = (lo + 4).min(n);
            ds[i] = local_poly_derivative(&xs[lo..hi], &ys[lo..hi], xs[i]);
        }

        // Fritsch-Carlson limiter against the secant slopes.
        let secant = |i: usize| (ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i]);
        for i in 0..n {
            let (left, right) = (
                if i > 0 { Some(secant(i - 1)) } else { None },
                if i + 1 < n { Some(secant(i)) } else { None },
            );
            match (left, right) {
                (Some(a), Some(b)) => {
                    if a * b <= 0.0 {
                        ds[i] = 0.0;
                    } else {
                        let cap = 3.0 * a.abs().min(b.abs());
                        if ds[i] * a <= 0.0 {
                            ds[i] = 0.0;
                        } else if ds[i].abs() > cap {
                            ds[i] = ds[i].signum() * cap;
                        }
                    }
                }
                (None, Some(b)) | (Some(b), None) => {
                    if ds[i] * b <= 0.0 {
                        ds[i] = 0.0;
                    } else if ds[i].abs() > 3.0 * b.abs() {
                        ds[i] = ds[i].signum() * 3.0 * b.abs();
                    }
                }
                (None, None) => unreachable!(),
            }
        }

        Ok(MonotoneCubic { xs, ys, ds })
    }

    fn segment(&self, x: f64) -> usize {
        let n = self.xs.len();
        match self
            .xs
            .binary_search_by(|v| v.partial_cmp(&x).expect("finite abscissa"))
        {
            Ok(i) => i.min(n - 2),
            Err(i) => i.clamp(1, n - 1) - 1,
        }
    }

    /// Interpolated value; clamped linear extension outside the node range.
    pub fn value(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return self.ys[0] + self.ds[0] * (x - self.xs[0]);
        }
        if x >= self.xs[n - 1] {
            return self.ys[n - 1] + self.ds[n - 1] * (x - self.xs[n - 1]);
        }
        let i = self.segment(x);
        let h = self.xs[i + 1] - self.xs[i];
        let s = (x - self.xs[i]) / h;
        let (y0, y1, d0, d1) = (self.ys[i], self.ys[i + 1], self.ds[i], self.ds[i + 1]);
        let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
        let h10 = s * (1.0 - s) * (1.0 - s);
        let h01 = s * s * (3.0 - 2.0 * s);
        let h11 = s * s * (s - 1.0);
        h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return self.ds[0];
        }
        if x >= self.xs[n - 1] {
            return self.ds[n - 1];
        }
        let i = self.segment(x);
        let h = self.xs[i + 1] - self.xs[i];
        let s = (x - self.xs[i]) / h;
        let (y0, y1, d0, d1) = (self.ys[i], self.ys[i + 1], self.ds[i], self.ds[i + 1]);
        let dh00 = 6.0 * s * (s - 1.0);
        let dh10 = (1.0 - s) * (1.0 - 3.0 * s);
        let dh01 = -dh00;
        let dh11 = s * (3.0 * s - 2.0);
        (dh00 * y0 + dh01 * y1) / h + dh10 * d0 + dh11 * d1
    }

    pub fn x_min(&self) -> f64 {
        self.xs[0]
    }

    pub fn x_max(&self) -> f64 {
        *self.xs.last().unwrap()
    }

    pub fn nodes(&self) -> (&[f64], &[f64]) {
        (&self.xs, &self.ys)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn reproduces_cubic_exactly() {
        let f = |x: f64| 2.0 + x + 0.5 * x * x + 0.25 * x * x * x;
        let xs: Vec<f64> = (0..20).map(|i| i as f64 * 0.3).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
        let c = MonotoneCubic::fit(xs, ys).unwrap();
        for k in 0..100 {
            let x = 0.05 + 5.5 * (k as f64) / 99.0;
            assert_relative_eq!(c.value(x), f(x), max_relative = 1e-12);
        }
    }

    #[test]
    fn monotone_data_gives_monotone_interpolant() {
        let xs = vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0];
        let ys = vec![0.0, 0.1, 0.11, 3.0, 3.01, 4.0];
        let c = MonotoneCubic::fit(xs, ys).unwrap();
        let mut prev = c.value(0.0);
        for k in 1..=500 {
            let x = 5.0 * (k as f64) / 500.0;
            let v = c.value(x);
            assert!(v >= prev - 1e-12, "not monotone at x = {x}");
            prev = v;
        }
    }

    #[test]
    fn fourth_order_convergence_on_smooth_data() {
        // Interpolation error on exp(x) should shrink ~16x when h halves.
        let err_for = |n: usize| {
            let xs: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).collect();
            let ys: Vec<f64> = xs.iter().map(|&x| x.exp()).collect();
            let c = MonotoneCubic::fit(xs, ys).unwrap();
            let mut worst: f64 = 0.0;
            for k in 0..1000 {
                let x = (k as f64 + 0.5) / 1000.0;
                worst = worst.max((c.value(x) - x.exp()).abs());
            }
            worst
        };
        let e1 = err_for(16);
        let e2 = err_for(32);
        let ratio = e1 / e2;
        assert!(
            (8.0..40.0).contains(&ratio),
            "expected ~16x error reduction, got {ratio}"
        );
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let xs: Vec<f64> = (0..30).map(|i| i as f64 * 0.2).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| (x * 0.7).sin()).collect();
        let c = MonotoneCubic::fit(xs, ys).unwrap();
        let h = 1e-6;
        for k in 1..50 {
            let x = 0.11 * k as f64;
            let fd = (c.value(x + h) - c.value(x - h)) / (2.0 * h);
            assert_relative_eq!(c.derivative(x), fd, epsilon = 1e-6);
        }
    }
}
