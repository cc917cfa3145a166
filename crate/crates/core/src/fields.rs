//! Electromagnetic field models.
//!
//! A model bundles a scalar potential `V`, an antisymmetric magnetic
//! matrix `B`, analytic derivative evaluators for both, and declared
//! short-range decay bounds `|d^j V| <= beta_|j| (1+|x|)^(-alpha-|j|)`,
//! `|d^j B_ik| <= beta_(|j|+1) (1+|x|)^(-alpha-1-|j|)`. The built-in
//! models are radial potentials (optionally paired with a compactly
//! supported magnetic bump), so every derivative is exact and cheap;
//! finite differences appear only in the structure checks.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Declared decay constants of a short-range pair `(V, B)`.
///
/// `beta[k]` bounds the weighted k-th derivatives as above; `lambda`
/// bounds the full short-range norm.
#[derive(Debug, Clone, Copy)]
pub struct ShortRangeBounds {
    pub alpha: f64,
    pub beta: [f64; 3],
    pub lambda: f64,
}

impl ShortRangeBounds {
    pub fn new(alpha: f64, beta: [f64; 3], lambda: f64) -> Result<Self> {
        if !(alpha > 1.0) {
            return Err(Error::invalid_input(format!(
                "short-range decay exponent must satisfy alpha > 1, got {alpha}"
            )));
        }
        if beta.iter().any(|b| !(*b >= 0.0)) || !(lambda >= 0.0) {
            return Err(Error::invalid_input(
                "short-range bound constants must be nonnegative",
            ));
        }
        Ok(ShortRangeBounds {
            alpha,
            beta,
            lambda,
        })
    }
}

/// Smoothed radius used by the inverse-power profile: equals `r` for
/// r >= 1/2 and is an even C^2 polynomial below, so `W(m(|x|))` is C^2
/// on all of R^n while the profile is untouched on its validity range.
fn smoothed_radius(r: f64) -> f64 {
    if r >= 0.5 {
        r
    } else {
        let r2 = r * r;
        3.0 / 16.0 + 1.5 * r2 - r2 * r2
    }
}

fn smoothed_radius_d1(r: f64) -> f64 {
    if r >= 0.5 {
        1.0
    } else {
        3.0 * r - 4.0 * r * r * r
    }
}

fn smoothed_radius_d2(r: f64) -> f64 {
    if r >= 0.5 {
        0.0
    } else {
        3.0 - 12.0 * r * r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProfileShape {
    /// `W(r) = A (1 + r)^(-alpha)`, smoothed below r = 1/2.
    InversePower,
    /// `W(r) = A (1 + r^2)^(-alpha/2)`, smooth everywhere.
    Plummer,
    Zero,
}

/// Scalar radial profile `W(r)` with derivative evaluators, valid on
/// `(inner_radius, +inf)` and extended smoothly inward for whole-space use.
#[derive(Debug, Clone, Copy)]
pub struct RadialProfile {
    pub shape: ProfileShape,
    pub amplitude: f64,
    pub alpha: f64,
    /// Inner validity radius R of the radial data.
    pub inner_radius: f64,
    /// sup (1+r)^alpha |W| on (R, inf).
    pub beta0: f64,
    /// sup (1+r)^(alpha+1) |W'| on (R, inf).
    pub beta1: f64,
}

impl RadialProfile {
    pub fn zero() -> Self {
        RadialProfile {
            shape: ProfileShape::Zero,
            amplitude: 0.0,
            alpha: 2.0,
            inner_radius: 0.0,
            beta0: 0.0,
            beta1: 0.0,
        }
    }

    /// `W(r) = A (1+r)^(-alpha)` with inner radius R.
    pub fn inverse_power(amplitude: f64, alpha: f64, inner_radius: f64) -> Result<Self> {
        if !(alpha > 1.0) || !(amplitude.is_finite()) || !(inner_radius >= 0.0) {
            return Err(Error::invalid_input(
                "inverse-power profile needs alpha > 1, finite amplitude, R >= 0",
            ));
        }
        let a = amplitude.abs();
        Ok(RadialProfile {
            shape: ProfileShape::InversePower,
            amplitude,
            alpha,
            inner_radius,
            beta0: a,
            beta1: a * alpha,
        })
    }

    /// The standard test profile `W(r) = (1+r)^(-2)` with R = 1.
    pub fn standard() -> Self {
        RadialProfile::inverse_power(1.0, 2.0, 1.0).unwrap()
    }

    /// `W(r) = A (1+r^2)^(-alpha/2)` with inner radius R.
    pub fn plummer(amplitude: f64, alpha: f64, inner_radius: f64) -> Result<Self> {
        if !(alpha > 1.0) || !(amplitude.is_finite()) || !(inner_radius >= 0.0) {
            return Err(Error::invalid_input(
                "plummer profile needs alpha > 1, finite amplitude, R >= 0",
            ));
        }
        let a = amplitude.abs();
        Ok(RadialProfile {
            shape: ProfileShape::Plummer,
            amplitude,
            alpha,
            inner_radius,
            beta0: a * 2f64.powf(alpha / 2.0),
            beta1: a * alpha * 2f64.powf((alpha + 1.0) / 2.0),
        })
    }

    pub fn w(&self, r: f64) -> f64 {
        match self.shape {
            ProfileShape::Zero => 0.0,
            ProfileShape::InversePower => {
                self.amplitude * (1.0 + smoothed_radius(r)).powf(-self.alpha)
            }
            ProfileShape::Plummer => self.amplitude * (1.0 + r * r).powf(-self.alpha / 2.0),
        }
    }

    pub fn w_prime(&self, r: f64) -> f64 {
        match self.shape {
            ProfileShape::Zero => 0.0,
            ProfileShape::InversePower => {
                let m = smoothed_radius(r);
                -self.amplitude * self.alpha * (1.0 + m).powf(-self.alpha - 1.0)
                    * smoothed_radius_d1(r)
            }
            ProfileShape::Plummer => {
                -self.amplitude * self.alpha * r * (1.0 + r * r).powf(-self.alpha / 2.0 - 1.0)
            }
        }
    }

    pub fn w_second(&self, r: f64) -> f64 {
        match self.shape {
            ProfileShape::Zero => 0.0,
            ProfileShape::InversePower => {
                let m = smoothed_radius(r);
                let m1 = smoothed_radius_d1(r);
                let m2 = smoothed_radius_d2(r);
                let a = self.alpha;
                self.amplitude
                    * (a * (a + 1.0) * (1.0 + m).powf(-a - 2.0) * m1 * m1
                        - a * (1.0 + m).powf(-a - 1.0) * m2)
            }
            ProfileShape::Plummer => {
                let a = self.alpha;
                let u = 1.0 + r * r;
                -self.amplitude * a * u.powf(-a / 2.0 - 2.0) * (u - (a + 2.0) * r * r)
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.shape, ProfileShape::Zero) || self.amplitude == 0.0
    }

    /// Declared Hessian-level bound constant for whole-space use.
    fn beta2(&self) -> f64 {
        let a = self.amplitude.abs();
        match self.shape {
            ProfileShape::Zero => 0.0,
            ProfileShape::InversePower => {
                a * self.alpha * (self.alpha + 4.0) * 1.5f64.powf(self.alpha + 2.0)
            }
            ProfileShape::Plummer => {
                a * self.alpha * (self.alpha + 3.0) * 2f64.powf(self.alpha / 2.0 + 1.0)
            }
        }
    }
}

/// Compactly supported magnetic models with analytic first derivatives.
#[derive(Debug, Clone, Copy)]
pub enum MagneticModel {
    None,
    /// n = 2: `B_12(x) = b0 (1 - |x|^2/R^2)^3` inside `|x| < R`, zero outside.
    PlanarBump { b0: f64, radius: f64 },
    /// n = 3: `B = dA` with `A = b0 (1 - |x|^2/R^2)^4 (-x2, x1, 0)` inside.
    AxialBump { b0: f64, radius: f64 },
}

impl MagneticModel {
    pub fn is_none(&self) -> bool {
        matches!(self, MagneticModel::None)
    }

    pub fn support_radius(&self) -> f64 {
        match self {
            MagneticModel::None => 0.0,
            MagneticModel::PlanarBump { radius, .. } | MagneticModel::AxialBump { radius, .. } => {
                *radius
            }
        }
    }

    fn expected_dim(&self) -> Option<usize> {
        match self {
            MagneticModel::None => None,
            MagneticModel::PlanarBump { .. } => Some(2),
            MagneticModel::AxialBump { .. } => Some(3),
        }
    }

    /// Full antisymmetric matrix B(x).
    pub fn matrix(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let n = x.len();
        let mut b = DMatrix::zeros(n, n);
        match *self {
            MagneticModel::None => {}
            MagneticModel::PlanarBump { b0, radius } => {
                let s = x.norm_squared();
                let u = 1.0 - s / (radius * radius);
                if u > 0.0 {
                    let val = b0 * u * u * u;
                    b[(0, 1)] = val;
                    b[(1, 0)] = -val;
                }
            }
            MagneticModel::AxialBump { b0, radius } => {
                let s = x.norm_squared();
                let u = 1.0 - s / (radius * radius);
                if u > 0.0 {
                    let f = u.powi(4);
                    let fp = -4.0 / (radius * radius) * u.powi(3);
                    let rho2 = x[0] * x[0] + x[1] * x[1];
                    let b12 = 2.0 * b0 * (fp * rho2 + f);
                    let b13 = 2.0 * b0 * fp * x[1] * x[2];
                    let b23 = -2.0 * b0 * fp * x[0] * x[2];
                    b[(0, 1)] = b12;
                    b[(1, 0)] = -b12;
                    b[(0, 2)] = b13;
                    b[(2, 0)] = -b13;
                    b[(1, 2)] = b23;
                    b[(2, 1)] = -b23;
                }
            }
        }
        b
    }

    /// Matrix of partial derivatives `d B / d x_l`.
    pub fn matrix_deriv(&self, x: &DVector<f64>, l: usize) -> DMatrix<f64> {
        let n = x.len();
        let mut db = DMatrix::zeros(n, n);
        match *self {
            MagneticModel::None => {}
            MagneticModel::PlanarBump { b0, radius } => {
                let s = x.norm_squared();
                let r2 = radius * radius;
                let u = 1.0 - s / r2;
                if u > 0.0 {
                    let val = -6.0 * b0 * u * u * x[l] / r2;
                    db[(0, 1)] = val;
                    db[(1, 0)] = -val;
                }
            }
            MagneticModel::AxialBump { b0, radius } => {
                let s = x.norm_squared();
                let r2 = radius * radius;
                let u = 1.0 - s / r2;
                if u > 0.0 {
                    let f1 = -4.0 / r2 * u.powi(3);
                    let f2 = 12.0 / (r2 * r2) * u * u;
                    let rho2 = x[0] * x[0] + x[1] * x[1];
                    let drho2 = if l < 2 { 2.0 * x[l] } else { 0.0 };
                    let d12 = 2.0 * b0 * (f2 * 2.0 * x[l] * rho2 + f1 * (drho2 + 2.0 * x[l]));
                    let d13 = 2.0
                        * b0
                        * (f2 * 2.0 * x[l] * x[1] * x[2]
                            + f1 * (if l == 1 { x[2] } else { 0.0 }
                                + if l == 2 { x[1] } else { 0.0 }));
                    let d23 = -2.0
                        * b0
                        * (f2 * 2.0 * x[l] * x[0] * x[2]
                            + f1 * (if l == 0 { x[2] } else { 0.0 }
                                + if l == 2 { x[0] } else { 0.0 }));
                    db[(0, 1)] = d12;
                    db[(1, 0)] = -d12;
                    db[(0, 2)] = d13;
                    db[(2, 0)] = -d13;
                    db[(1, 2)] = d23;
                    db[(2, 1)] = -d23;
                }
            }
        }
        db
    }

    /// In-place `out += B(x) v`, cheap path for the force evaluation.
    fn apply_into(&self, x: &DVector<f64>, v: &DVector<f64>, scale: f64, out: &mut DVector<f64>) {
        match *self {
            MagneticModel::None => {}
            MagneticModel::PlanarBump { b0, radius } => {
                let s = x.norm_squared();
                let u = 1.0 - s / (radius * radius);
                if u > 0.0 {
                    let val = scale * b0 * u * u * u;
                    out[0] += val * v[1];
                    out[1] -= val * v[0];
                }
            }
            MagneticModel::AxialBump { .. } => {
                let s = x.norm_squared();
                if s < self.support_radius() * self.support_radius() {
                    let b = self.matrix(x);
                    let bv = b * v;
                    out.axpy(scale, &bv, 1.0);
                }
            }
        }
    }

    /// Numeric sup of `(1+|x|)^(alpha+1) |B_ik|` over a dense radial grid,
    /// slightly inflated; stored once as the declared bound.
    fn entry_bound(&self, alpha: f64) -> f64 {
        match *self {
            MagneticModel::None => 0.0,
            MagneticModel::PlanarBump { b0, radius } => {
                let mut sup: f64 = 0.0;
                for k in 0..=4000 {
                    let r = radius * (k as f64) / 4000.0;
                    let u = 1.0 - (r / radius) * (r / radius);
                    sup = sup.max((1.0 + r).powf(alpha + 1.0) * b0.abs() * u.powi(3));
                }
                sup * 1.001
            }
            MagneticModel::AxialBump { b0, radius } => {
                let mut sup: f64 = 0.0;
                for k in 0..=4000 {
                    let r = radius * (k as f64) / 4000.0;
                    let u = 1.0 - (r / radius) * (r / radius);
                    let f = u.powi(4);
                    let fp = 4.0 / (radius * radius) * u.powi(3);
                    let envelope = 2.0 * b0.abs() * (fp * r * r + f);
                    sup = sup.max((1.0 + r).powf(alpha + 1.0) * envelope);
                }
                sup * 1.001
            }
        }
    }

    /// Same for `(1+|x|)^(alpha+2) |dB_ik|`.
    fn deriv_bound(&self, alpha: f64) -> f64 {
        match *self {
            MagneticModel::None => 0.0,
            MagneticModel::PlanarBump { b0, radius } => {
                let r2 = radius * radius;
                let mut sup: f64 = 0.0;
                for k in 0..=4000 {
                    let r = radius * (k as f64) / 4000.0;
                    let u = 1.0 - (r / radius) * (r / radius);
                    sup = sup.max((1.0 + r).powf(alpha + 2.0) * 6.0 * b0.abs() * u * u * r / r2);
                }
                sup * 1.001
            }
            MagneticModel::AxialBump { b0, radius } => {
                let r2 = radius * radius;
                let mut sup: f64 = 0.0;
                for k in 0..=4000 {
                    let r = radius * (k as f64) / 4000.0;
                    let u = 1.0 - (r / radius) * (r / radius);
                    let f1 = 4.0 / r2 * u.powi(3);
                    let f2 = 12.0 / (r2 * r2) * u * u;
                    let envelope = 2.0 * b0.abs() * (2.0 * f2 * r * r * r + 4.0 * f1 * r);
                    sup = sup.max((1.0 + r).powf(alpha + 2.0) * envelope);
                }
                sup * 1.001
            }
        }
    }
}

/// An evaluable electromagnetic pair `(V, B)` with derivative data and
/// declared short-range bounds. `V(x) = W(|x|)` for the bundled radial
/// profile; B is one of the compactly supported bump models.
#[derive(Debug, Clone)]
pub struct FieldModel {
    dim: usize,
    potential: RadialProfile,
    magnetic: MagneticModel,
    bounds: ShortRangeBounds,
    /// Radius beyond which B vanishes and V is spherically symmetric.
    radial_radius: Option<f64>,
}

impl FieldModel {
    pub fn new(dim: usize, potential: RadialProfile, magnetic: MagneticModel) -> Result<Self> {
        if dim < 2 {
            return Err(Error::invalid_input(format!(
                "field dimension must be >= 2, got {dim}"
            )));
        }
        if let Some(expected) = magnetic.expected_dim() {
            if expected != dim {
                return Err(Error::invalid_input(format!(
                    "magnetic model expects dimension {expected}, model has {dim}"
                )));
            }
        }
        let alpha = potential.alpha;
        let beta0 = potential.beta0;
        let beta1 = potential.beta1.max(magnetic.entry_bound(alpha));
        let beta2 = potential.beta2().max(magnetic.deriv_bound(alpha));
        let v_part = beta0.max(beta1).max(beta2);
        let b_part = if magnetic.is_none() {
            0.0
        } else {
            magnetic.entry_bound(alpha).max(magnetic.deriv_bound(alpha))
        };
        let bounds = ShortRangeBounds::new(
            alpha,
            [beta0.max(1e-300), beta1.max(1e-300), beta2.max(1e-300)],
            (v_part + b_part).max(1e-300),
        )?;
        let radial_radius = Some(
            potential
                .inner_radius
                .max(magnetic.support_radius()),
        );
        Ok(FieldModel {
            dim,
            potential,
            magnetic,
            bounds,
            radial_radius,
        })
    }

    pub fn free(dim: usize) -> Self {
        FieldModel::new(dim, RadialProfile::zero(), MagneticModel::None).unwrap()
    }

    pub fn from_profile(dim: usize, profile: RadialProfile) -> Result<Self> {
        FieldModel::new(dim, profile, MagneticModel::None)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bounds(&self) -> &ShortRangeBounds {
        &self.bounds
    }

    /// Override the declared bounds (user models declare, the audit verifies).
    pub fn with_declared_bounds(mut self, bounds: ShortRangeBounds) -> Self {
        self.bounds = bounds;
        self
    }

    pub fn radial_radius(&self) -> Option<f64> {
        self.radial_radius
    }

    pub fn potential(&self) -> &RadialProfile {
        &self.potential
    }

    pub fn magnetic(&self) -> &MagneticModel {
        &self.magnetic
    }

    pub fn is_free(&self) -> bool {
        self.potential.is_zero() && self.magnetic.is_none()
    }

    pub fn v_at(&self, x: &DVector<f64>) -> f64 {
        self.potential.w(x.norm())
    }

    pub fn grad_v(&self, x: &DVector<f64>, out: &mut DVector<f64>) {
        let r = x.norm();
        if self.potential.is_zero() {
            out.fill(0.0);
            return;
        }
        if r < 1e-12 {
            // Radial profiles are smoothed so that W'(0) = 0.
            out.fill(0.0);
            return;
        }
        let wp = self.potential.w_prime(r);
        out.copy_from(x);
        *out *= wp / r;
    }

    /// Hessian of V, using d^2 V = W'' P + (W'/r)(I - P), P = x x^T / r^2.
    pub fn hess_v(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let n = self.dim;
        let r = x.norm();
        if self.potential.is_zero() {
            return DMatrix::zeros(n, n);
        }
        if r < 1e-8 {
            return DMatrix::identity(n, n) * self.potential.w_second(0.0);
        }
        let wp = self.potential.w_prime(r);
        let wpp = self.potential.w_second(r);
        let mut h = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let p = x[i] * x[j] / (r * r);
                h[(i, j)] = wpp * p + wp / r * (if i == j { 1.0 } else { 0.0 } - p);
            }
        }
        h
    }

    pub fn b_matrix(&self, x: &DVector<f64>) -> DMatrix<f64> {
        self.magnetic.matrix(x)
    }

    pub fn b_matrix_deriv(&self, x: &DVector<f64>, l: usize) -> DMatrix<f64> {
        self.magnetic.matrix_deriv(x, l)
    }

    /// `out = -grad V(x) + B(x) v` — the right-hand side of the
    /// nonrelativistic equation of motion.
    pub fn force_into(&self, x: &DVector<f64>, v: &DVector<f64>, out: &mut DVector<f64>) {
        self.grad_v(x, out);
        *out *= -1.0;
        self.magnetic.apply_into(x, v, 1.0, out);
    }

    /// `out = -grad V(x) + B(x) v / c` — the relativistic right-hand side
    /// (same evaluators, the 1/c enters the magnetic term only).
    pub fn force_rel_into(&self, x: &DVector<f64>, v: &DVector<f64>, c: f64, out: &mut DVector<f64>) {
        self.grad_v(x, out);
        *out *= -1.0;
        self.magnetic.apply_into(x, v, 1.0 / c, out);
    }

    pub fn force(&self, x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim);
        self.force_into(x, v, &mut out);
        out
    }
}

/// Force evaluation with the input validation of the public operation.
pub fn eval_force(model: &FieldModel, x: &DVector<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
    if x.len() != model.dim() || v.len() != model.dim() {
        return Err(Error::invalid_input(format!(
            "position/velocity must have dimension {}, got {}/{}",
            model.dim(),
            x.len(),
            v.len()
        )));
    }
    if x.iter().any(|c| !c.is_finite()) || v.iter().any(|c| !c.is_finite()) {
        return Err(Error::invalid_input(
            "force evaluation requires finite position and velocity",
        ));
    }
    Ok(model.force(x, v))
}

/// Deterministic point cloud: radial shells times quasi-uniform directions.
#[derive(Debug, Clone)]
pub struct SampleSpec {
    pub radii: Vec<f64>,
    pub directions: usize,
    pub seed: u64,
}

impl SampleSpec {
    /// The default audit cloud: 16 log-spaced radii in [0, 1e3],
    /// 64 directions per shell.
    pub fn default_cloud() -> Self {
        let mut radii = vec![0.0];
        let (lo, hi) = (0.05_f64, 1.0e3_f64);
        for k in 0..15 {
            radii.push(lo * (hi / lo).powf(k as f64 / 14.0));
        }
        SampleSpec {
            radii,
            directions: 64,
            seed: 0x5ca77e2,
        }
    }

    pub fn with_density(mut self, radii_mult: usize, dir_mult: usize) -> Self {
        if radii_mult > 1 {
            let mut refined = Vec::new();
            for w in self.radii.windows(2) {
                refined.push(w[0]);
                for j in 1..radii_mult {
                    refined.push(w[0] + (w[1] - w[0]) * j as f64 / radii_mult as f64);
                }
            }
            refined.push(*self.radii.last().unwrap());
            self.radii = refined;
        }
        self.directions *= dir_mult.max(1);
        self
    }

    pub fn points(&self, dim: usize) -> Vec<DVector<f64>> {
        let dirs = directions(dim, self.directions, self.seed);
        let mut pts = Vec::with_capacity(self.radii.len() * dirs.len());
        for &r in &self.radii {
            if r == 0.0 {
                pts.push(DVector::zeros(dim));
                continue;
            }
            for d in &dirs {
                pts.push(d * r);
            }
        }
        pts
    }
}

/// Quasi-uniform unit directions; deterministic for a given seed.
pub fn directions(dim: usize, count: usize, seed: u64) -> Vec<DVector<f64>> {
    let mut out = Vec::with_capacity(count);
    match dim {
        2 => {
            for k in 0..count {
                let theta = 2.0 * std::f64::consts::PI * (k as f64 + 0.5) / count as f64;
                out.push(DVector::from_vec(vec![theta.cos(), theta.sin()]));
            }
        }
        3 => {
            // Fibonacci sphere.
            let golden = (1.0 + 5.0_f64.sqrt()) / 2.0;
            for k in 0..count {
                let z = 1.0 - 2.0 * (k as f64 + 0.5) / count as f64;
                let rho = (1.0 - z * z).sqrt();
                let phi = 2.0 * std::f64::consts::PI * (k as f64) / golden;
                out.push(DVector::from_vec(vec![
                    rho * phi.cos(),
                    rho * phi.sin(),
                    z,
                ]));
            }
        }
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            while out.len() < count {
                let mut v = DVector::zeros(dim);
                for i in 0..dim {
                    // Box-Muller from uniform draws keeps us off the
                    // rand_distr dependency.
                    let u1: f64 = rng.gen_range(1e-12..1.0);
                    let u2: f64 = rng.gen_range(0.0..1.0);
                    v[i] = (-2.0 * u1.ln()).sqrt()
                        * (2.0 * std::f64::consts::PI * u2).cos();
                }
                let norm = v.norm();
                if norm > 1e-6 {
                    out.push(v / norm);
                }
            }
        }
    }
    out
}

/// Discrete approximation of the short-range norm: the weighted sup of V
/// and its derivatives up to order two plus the weighted sup of B and its
/// first derivatives, over the sample cloud.
pub fn shortrange_norm(model: &FieldModel, spec: &SampleSpec) -> Result<f64> {
    let pts = spec.points(model.dim());
    if pts.is_empty() {
        return Err(Error::invalid_input("short-range norm needs a nonempty sample"));
    }
    let alpha = model.bounds().alpha;
    let n = model.dim();

    let mut sup_v: f64 = 0.0;
    let mut sup_b: f64 = 0.0;
    let mut grad = DVector::zeros(n);
    for x in &pts {
        let r = x.norm();
        let w0 = (1.0 + r).powf(alpha);
        sup_v = sup_v.max(w0 * model.v_at(x).abs());

        model.grad_v(x, &mut grad);
        let w1 = (1.0 + r).powf(alpha + 1.0);
        for i in 0..n {
            sup_v = sup_v.max(w1 * grad[i].abs());
        }

        let hess = model.hess_v(x);
        let w2 = (1.0 + r).powf(alpha + 2.0);
        for i in 0..n {
            for j in 0..n {
                sup_v = sup_v.max(w2 * hess[(i, j)].abs());
            }
        }

        if !model.magnetic.is_none() {
            let b = model.b_matrix(x);
            for i in 0..n {
                for j in 0..n {
                    sup_b = sup_b.max(w1 * b[(i, j)].abs());
                }
            }
            for l in 0..n {
                let db = model.b_matrix_deriv(x, l);
                for i in 0..n {
                    for j in 0..n {
                        sup_b = sup_b.max(w2 * db[(i, j)].abs());
                    }
                }
            }
        }

        if !sup_v.is_finite() || !sup_b.is_finite() {
            return Err(Error::numerical(
                "non-finite field evaluation while sampling the norm",
            ));
        }
    }
    Ok(sup_v + sup_b)
}

/// Max cyclic-sum residual `|d_l B_ik + d_k B_li + d_i B_kl|` over the
/// given points and all index triples, with central finite differences of
/// step `h`.
pub fn check_closedness(model: &FieldModel, points: &[DVector<f64>], h: f64) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::invalid_input("finite-difference step must be positive"));
    }
    let n = model.dim();
    let mut worst: f64 = 0.0;

    let db_entry = |x: &DVector<f64>, l: usize, i: usize, k: usize| -> f64 {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[l] += h;
        xm[l] -= h;
        (model.b_matrix(&xp)[(i, k)] - model.b_matrix(&xm)[(i, k)]) / (2.0 * h)
    };

    for x in points {
        for l in 0..n {
            for i in 0..n {
                for k in 0..n {
                    let resid = db_entry(x, l, i, k) + db_entry(x, k, l, i) + db_entry(x, i, k, l);
                    if !resid.is_finite() {
                        return Err(Error::numerical(
                            "non-finite magnetic evaluation in closedness check",
                        ));
                    }
                    worst = worst.max(resid.abs());
                }
            }
        }
    }
    Ok(worst)
}

/// Result of auditing declared bounds on a point cloud: the worst ratio of
/// observed weighted derivative to its declared constant (<= 1 means the
/// declaration holds on the cloud).
#[derive(Debug, Clone, Copy)]
pub struct BoundsAudit {
    pub worst_v_ratio: f64,
    pub worst_b_ratio: f64,
}

pub fn audit_bounds(model: &FieldModel, spec: &SampleSpec) -> Result<BoundsAudit> {
    let pts = spec.points(model.dim());
    let b = model.bounds();
    let n = model.dim();
    let mut worst_v: f64 = 0.0;
    let mut worst_b: f64 = 0.0;
    let mut grad = DVector::zeros(n);

    for x in &pts {
        let r = x.norm();
        worst_v = worst_v.max((1.0 + r).powf(b.alpha) * model.v_at(x).abs() / b.beta[0]);
        model.grad_v(x, &mut grad);
        let w1 = (1.0 + r).powf(b.alpha + 1.0);
        for i in 0..n {
            worst_v = worst_v.max(w1 * grad[i].abs() / b.beta[1]);
        }
        let hess = model.hess_v(x);
        let w2 = (1.0 + r).powf(b.alpha + 2.0);
        for i in 0..n {
            for j in 0..n {
                worst_v = worst_v.max(w2 * hess[(i, j)].abs() / b.beta[2]);
            }
        }
        if !model.magnetic.is_none() {
            let bm = model.b_matrix(x);
            for i in 0..n {
                for j in 0..n {
                    worst_b = worst_b.max(w1 * bm[(i, j)].abs() / b.beta[1]);
                }
            }
            for l in 0..n {
                let db = model.b_matrix_deriv(x, l);
                for i in 0..n {
                    for j in 0..n {
                        worst_b = worst_b.max(w2 * db[(i, j)].abs() / b.beta[2]);
                    }
                }
            }
        }
    }
    Ok(BoundsAudit {
        worst_v_ratio: worst_v,
        worst_b_ratio: worst_b,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn vec2(a: f64, b: f64) -> DVector<f64> {
        DVector::from_vec(vec![a, b])
    }

    #[test]
    fn free_field_force_is_zero() {
        let model = FieldModel::free(2);
        let f = eval_force(&model, &vec2(1.3, -0.4), &vec2(0.5, 2.0)).unwrap();
        assert_eq!(f[0], 0.0);
        assert_eq!(f[1], 0.0);
    }

    #[test]
    fn plummer_force_at_origin_vanishes() {
        let model =
            FieldModel::from_profile(2, RadialProfile::plummer(1.0, 2.0, 0.0).unwrap()).unwrap();
        let f = eval_force(&model, &vec2(0.0, 0.0), &vec2(0.0, 0.0)).unwrap();
        assert!(f.norm() < 1e-15);
    }

    #[test]
    fn plummer_force_matches_hand_derivative() {
        // V = (1+|x|^2)^(-1), x = (1, 0): -grad V = 2x/(1+|x|^2)^2 = (0.5, 0).
        let model =
            FieldModel::from_profile(2, RadialProfile::plummer(1.0, 2.0, 0.0).unwrap()).unwrap();
        let f = eval_force(&model, &vec2(1.0, 0.0), &vec2(0.0, 0.0)).unwrap();
        assert_relative_eq!(f[0], 0.5, max_relative = 1e-12);
        assert!(f[1].abs() < 1e-15);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let model =
            FieldModel::from_profile(3, RadialProfile::plummer(0.7, 2.5, 0.0).unwrap()).unwrap();
        let x = DVector::from_vec(vec![0.8, -1.1, 0.4]);
        let h = 1e-5;
        let mut grad = DVector::zeros(3);
        model.grad_v(&x, &mut grad);
        for i in 0..3 {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            let fd = (model.v_at(&xp) - model.v_at(&xm)) / (2.0 * h);
            assert_relative_eq!(grad[i], fd, epsilon = 1e-9);
        }
    }

    #[test]
    fn hessian_matches_central_differences() {
        let model = FieldModel::from_profile(
            2,
            RadialProfile::inverse_power(1.0, 2.0, 1.0).unwrap(),
        )
        .unwrap();
        let x = vec2(1.4, 0.9);
        let h = 1e-4;
        let hess = model.hess_v(&x);
        let mut g = DVector::zeros(2);
        for i in 0..2 {
            for j in 0..2 {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[j] += h;
                xm[j] -= h;
                model.grad_v(&xp, &mut g);
                let gp = g[i];
                model.grad_v(&xm, &mut g);
                let gm = g[i];
                let fd = (gp - gm) / (2.0 * h);
                assert_relative_eq!(hess[(i, j)], fd, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn rejects_non_finite_input() {
        let model = FieldModel::free(2);
        assert!(eval_force(&model, &vec2(f64::NAN, 0.0), &vec2(0.0, 0.0)).is_err());
    }

    #[test]
    fn norm_of_free_field_is_zero() {
        let model = FieldModel::free(2);
        let n = shortrange_norm(&model, &SampleSpec::default_cloud()).unwrap();
        assert_eq!(n, 0.0);
    }

    #[test]
    fn norm_of_standard_profile_at_least_one() {
        // The order-zero band alone contributes (1+r)^2 (1+r)^(-2) = 1 at
        // every exact-profile radius.
        let model = FieldModel::from_profile(2, RadialProfile::standard()).unwrap();
        let n = shortrange_norm(&model, &SampleSpec::default_cloud()).unwrap();
        assert!(n >= 1.0, "norm {n}");
    }

    #[test]
    fn norm_monotone_under_densification() {
        let model = FieldModel::from_profile(2, RadialProfile::standard()).unwrap();
        let coarse = shortrange_norm(&model, &SampleSpec::default_cloud()).unwrap();
        let fine =
            shortrange_norm(&model, &SampleSpec::default_cloud().with_density(2, 2)).unwrap();
        assert!(fine >= coarse);
    }

    #[test]
    fn closedness_zero_field() {
        let model = FieldModel::free(3);
        let pts = SampleSpec::default_cloud().points(3);
        let resid = check_closedness(&model, &pts[..40], 1e-4).unwrap();
        assert_eq!(resid, 0.0);
    }

    #[test]
    fn closedness_automatic_in_two_dimensions() {
        // With n = 2 the cyclic sum always repeats an index, so antisymmetry
        // alone forces the identity; only FD noise remains.
        let model = FieldModel::new(
            2,
            RadialProfile::zero(),
            MagneticModel::PlanarBump {
                b0: 1.0,
                radius: 2.0,
            },
        )
        .unwrap();
        let pts: Vec<_> = directions(2, 12, 7)
            .into_iter()
            .map(|d| d * 0.9)
            .collect();
        let resid = check_closedness(&model, &pts, 1e-5).unwrap();
        assert!(resid < 1e-9, "residual {resid}");
    }

    #[test]
    fn closedness_second_order_for_axial_bump() {
        let model = FieldModel::new(
            3,
            RadialProfile::zero(),
            MagneticModel::AxialBump {
                b0: 0.8,
                radius: 2.0,
            },
        )
        .unwrap();
        let pts: Vec<_> = directions(3, 10, 3)
            .into_iter()
            .map(|d| d * 1.1)
            .collect();
        let r1 = check_closedness(&model, &pts, 1e-3).unwrap();
        let r2 = check_closedness(&model, &pts, 5e-4).unwrap();
        // Identity holds exactly; the residual is pure FD error, O(h^2).
        assert!(r1 < 1e-4, "residual {r1}");
        assert!(r2 < r1 * 0.5 || r2 < 1e-12, "r1 {r1}, r2 {r2}");
    }

    #[test]
    fn b_derivative_matches_finite_differences() {
        let model = FieldModel::new(
            3,
            RadialProfile::zero(),
            MagneticModel::AxialBump {
                b0: 0.8,
                radius: 2.0,
            },
        )
        .unwrap();
        let x = DVector::from_vec(vec![0.5, -0.3, 0.7]);
        let h = 1e-6;
        for l in 0..3 {
            let analytic = model.b_matrix_deriv(&x, l);
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[l] += h;
            xm[l] -= h;
            let fd = (model.b_matrix(&xp) - model.b_matrix(&xm)) / (2.0 * h);
            for i in 0..3 {
                for j in 0..3 {
                    assert_relative_eq!(analytic[(i, j)], fd[(i, j)], epsilon = 1e-7);
                }
            }
        }
    }

    #[test]
    fn antisymmetry_on_cloud() {
        let model = FieldModel::new(
            3,
            RadialProfile::plummer(0.5, 2.0, 0.0).unwrap(),
            MagneticModel::AxialBump {
                b0: 1.0,
                radius: 1.5,
            },
        )
        .unwrap();
        for x in SampleSpec::default_cloud().points(3).iter().take(100) {
            let b = model.b_matrix(x);
            for i in 0..3 {
                for j in 0..3 {
                    assert!((b[(i, j)] + b[(j, i)]).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn built_in_bounds_hold_on_cloud() {
        let models = vec![
            FieldModel::from_profile(2, RadialProfile::standard()).unwrap(),
            FieldModel::from_profile(3, RadialProfile::plummer(1.0, 2.0, 0.0).unwrap()).unwrap(),
            FieldModel::new(
                2,
                RadialProfile::plummer(1.0, 2.0, 0.0).unwrap(),
                MagneticModel::PlanarBump {
                    b0: 0.5,
                    radius: 1.0,
                },
            )
            .unwrap(),
            FieldModel::new(
                3,
                RadialProfile::plummer(1.0, 2.0, 0.0).unwrap(),
                MagneticModel::AxialBump {
                    b0: 0.5,
                    radius: 1.0,
                },
            )
            .unwrap(),
        ];
        for model in &models {
            let audit = audit_bounds(model, &SampleSpec::default_cloud()).unwrap();
            assert!(
                audit.worst_v_ratio <= 1.0 + 1e-12,
                "V bound violated: ratio {}",
                audit.worst_v_ratio
            );
            assert!(
                audit.worst_b_ratio <= 1.0 + 1e-12,
                "B bound violated: ratio {}",
                audit.worst_b_ratio
            );
        }
    }

    #[test]
    fn radial_outside_r_and_b_vanishes() {
        let model = FieldModel::new(
            3,
            RadialProfile::plummer(1.0, 2.0, 0.0).unwrap(),
            MagneticModel::AxialBump {
                b0: 1.0,
                radius: 1.5,
            },
        )
        .unwrap();
        let r_out = model.radial_radius().unwrap() + 0.25;
        // Rotating a point does not change V; B is identically zero outside.
        for d in directions(3, 16, 11) {
            let x = d * r_out;
            assert_relative_eq!(
                model.v_at(&x),
                model.potential().w(r_out),
                max_relative = 1e-13
            );
            assert_eq!(model.b_matrix(&x).norm(), 0.0);
        }
    }
}
