//! Bracketed root finding.

use crate::error::{Error, Result};

/// Bisection on a bracketing interval, to a relative width tolerance.
/// Signs at the endpoints must differ (zero values count as roots).
pub fn bisect<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, rel_tol: f64) -> Result<f64> {
    let mut fa = f(a);
    let fb = f(b);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::numerical(format!(
            "bisection bracket does not straddle a root: f({a:e}) = {fa:e}, f({b:e}) = {fb:e}"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if (b - a).abs() <= rel_tol * mid.abs().max(f64::MIN_POSITIVE) {
            return Ok(mid);
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == fa.signum() {
            a = mid;
            fa = fm;
        } else {
            b = mid;
        }
    }
    Ok(0.5 * (a + b))
}

/// Largest root of `f` in (lo, hi]: march down from `hi` until the sign
/// changes, halving the march step on each full pass that finds nothing,
/// then bisect. `f(hi)` is expected to be >= 0 (the function is positive
/// above its largest root).
pub fn largest_root_downward<F: Fn(f64) -> f64>(
    f: F,
    lo: f64,
    hi: f64,
    rel_tol: f64,
) -> Result<f64> {
    if !(hi > lo) {
        return Err(Error::invalid_input(format!(
            "largest-root bracket is empty: lo = {lo:e}, hi = {hi:e}"
        )));
    }
    let f_hi = f(hi);
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if f_hi < 0.0 {
        return Err(Error::numerical(format!(
            "largest-root search: f is negative at the upper bound ({hi:e})"
        )));
    }

    let mut substeps = 64usize;
    for _ in 0..8 {
        let mut prev_x = hi;
        let mut found: Option<(f64, f64)> = None;
        for k in 1..=substeps {
            let x = hi - (hi - lo) * (k as f64) / (substeps as f64);
            if f(x) <= 0.0 {
                found = Some((x, prev_x));
                break;
            }
            prev_x = x;
        }
        if let Some((a, b)) = found {
            return bisect(&f, a, b, rel_tol);
        }
        substeps *= 4;
    }
    Err(Error::numerical(
        "no sign change found while marching down to the lower bound",
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn finds_sqrt_two() {
        let r = bisect(|x| x * x - 2.0, 0.0, 2.0, 1e-14).unwrap();
        assert_relative_eq!(r, 2.0_f64.sqrt(), max_relative = 1e-13);
    }

    #[test]
    fn largest_of_two_roots() {
        // (x - 1)(x - 3) has roots 1, 3; downward march from 10 finds 3.
        let r = largest_root_downward(|x| (x - 1.0) * (x - 3.0), 0.0, 10.0, 1e-14).unwrap();
        assert_relative_eq!(r, 3.0, max_relative = 1e-12);
    }

    #[test]
    fn narrow_dip_found_by_step_halving() {
        // Positive except for a narrow dip around x = 2.
        let f = |x: f64| (x - 2.0) * (x - 2.0) - 1e-6;
        let r = largest_root_downward(f, 0.0, 100.0, 1e-14).unwrap();
        assert_relative_eq!(r, 2.001, max_relative = 1e-10);
    }
}
