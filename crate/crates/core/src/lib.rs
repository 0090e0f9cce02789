//! Heat kernels, harmonic functions and survival asymptotics for Brownian
//! motion killed on the boundary of cones and multicone domains.
//!
//! The Brownian motion has generator `½Δ`, so the free transition density is
//! `(2πt)^{-n/2} exp(−|x−y|²/2t)`. Modified Bessel functions of the first
//! kind are written `I_ν` throughout.

pub mod asymptotics;
pub mod bessel;
pub mod cli;
pub mod cone;
pub mod error;
pub mod geometry;
pub mod mc;
pub mod quadrature;
pub mod spectral;

pub use error::{AnalyticError, Error, GeometryError, NumericError, SimError, SpectralError};
pub use geometry::{
    Ball, BoundaryPiece, Location, MulticoneDomain, Opening, Point, PointLocation,
    TruncatedCone, Violation,
};
