//! Reconstruction of an unknown boundary flux on the inner boundary of an
//! annulus from noisy Dirichlet data on the outer boundary.
//!
//! The pipeline is: [`mesh`] generation, the P1 forward model in [`fem`], the
//! boundary spectral calculus in [`spectral`], Tikhonov inversion in
//! [`tikhonov`], and the empirical studies in [`vsc`], [`stability`] and
//! [`rates`].

pub mod config;
pub mod error;
pub mod fem;
pub mod mesh;
pub mod rates;
pub mod sparse;
pub mod spectral;
pub mod stability;
pub mod tikhonov;
pub mod vsc;

pub use error::{Error, Result};
