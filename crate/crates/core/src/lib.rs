//! Spectral-Galerkin computation of the Paneitz operator on closed model
//! 4-manifolds.
//!
//! The crate is organised bottom-up:
//!
//! | Module | Purpose |
//! |--------|---------|
//! | [`geometry`] | quadrature, Laplace eigenbases and curvature on S⁴, T⁴, S²×S² |
//! | [`operator`] | Paneitz energy form, weighted mass matrix, pointwise identities |
//! | [`eigen`] | generalized symmetric eigenproblem, clustering, Rayleigh quotients |
//! | [`conformal`] | volume normalization, conformal curvature, Möbius balancing |
//! | [`extremal`] | one-sided eigenvalue derivatives, extremality certificates, ascent |
//! | [`maps`] | Paneitz maps into round spheres and the metrics they induce |
//! | [`export`] | CSV/JSON helpers shared by the CLI |
//!
//! Throughout, `g_w = e^{2w} g` and the Paneitz operator of `g_w` is
//! `e^{-4w} P_g`, so the energy matrix never depends on `w` and all of the
//! conformal dependence lives in the mass matrix.

pub mod conformal;
pub mod eigen;
pub mod error;
pub mod export;
pub mod extremal;
pub mod geometry;
pub mod maps;
pub mod operator;

pub use error::{Error, Result};
pub use geometry::{BackendDescriptor, BackendKind, ConformalFactor, ManifoldBackend};
