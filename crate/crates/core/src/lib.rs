//! Numerical and symbolic toolkit for harmonic functions in slit domains.

// `!(a < b)` is used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acceptance;
pub mod error;
pub mod expansion;
pub mod freeboundary;
pub mod geometry;
pub mod neumann;
pub mod poly;
pub mod scalar;
pub mod solver;
pub mod whitney;
pub mod xrpoly;

pub use error::{Error, Result};

pub use geometry::{closest_point_frame, gamma_jet, Frame, GammaJet, GeometrySpec, SlitGeometry};
pub use poly::{MultiIndex, Poly};
pub use scalar::{rat, Rat, Scalar};
pub use xrpoly::{laplacian_monomial, laplacian_of_product, solve_approximating, LaplacianResult, XRPolynomial, XrPoly};

/// Library version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
