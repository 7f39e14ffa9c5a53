//! Numerical laboratory for the parabolic Anderson model
//! `∂u/∂t = ½Δu + u Ẇ`, `u(0, ·) = 1`, driven by Gaussian noise that is white
//! in time with Riesz spatial covariance `|x − y|^{-β}`.

// `!(x > 0.0)` guards reject NaN along with out-of-range values; index loops mirror the formulas
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod averaging;
pub mod dump;
pub mod error;
pub mod fft;
pub mod kernels;
pub mod lemma_lab;
pub mod noise;
pub mod qmc;
pub mod quadrature;
pub mod rng;
pub mod solver;
pub mod spectral;
pub mod stats;

pub use error::{Error, Result};
