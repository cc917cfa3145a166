//! Shared numerical machinery: quadrature, ODE integration, interpolation,
//! and root finding.

pub mod interp;
pub mod ode;
pub mod quad;
pub mod roots;
