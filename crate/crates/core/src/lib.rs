//! Classical and relativistic scattering of a charged particle in a
//! short-range electromagnetic field at fixed energy, and the inverse
//! problem: reconstructing a radially symmetric potential near infinity
//! from scattering-angle data by Abel inversion in the style of Firsov
//! and Keller-Kay-Shmoys.
//!
//! The crate is organized around the forward/inverse round trip:
//!
//! * [`fields`] — evaluable field models `(V, B)` with analytic
//!   derivatives, short-range norms and structure checks;
//! * [`dynamics`] — trajectory integration for the nonrelativistic and
//!   relativistic Newton equations, free-asymptote extraction, the
//!   scattering map at fixed energy, and nontrapping constants;
//! * [`radial`] — perihelion radii, admissible impact parameters, and the
//!   deflection function `g(q)` by singular quadrature and by an
//!   independent ODE route;
//! * [`inversion`] — the Abel integral `H`, recovery of the inverse
//!   perihelion `chi`, and reconstruction of the radial potential `W`;
//! * [`scatmap`] — boundary data on a sphere and extraction of `g` from
//!   the first component of the scattering map;
//! * [`io`] — the CSV/JSON interchange formats shared with the CLI.
//!
//! All quantities are in natural units (`m = e = 1`).

pub mod error;
pub mod numerics;

pub mod dynamics;
pub mod fields;
pub mod inversion;
pub mod io;
pub mod radial;
pub mod scatmap;

pub use error::{Error, Result};
