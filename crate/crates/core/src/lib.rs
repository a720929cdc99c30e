//! Robust M-estimation under f-separable Bregman distortion measures.
//!
//! The objective `L_f(θ) = (1/n) Σ f(d_φ(x_i, θ))` combines a Bregman
//! divergence `d_φ` with a monotone weight function `f`. The crate provides
//! the divergences and weights, the matching parametric models (elliptical,
//! Itakura-Saito, continuous Bregman), a reweighting estimator, numerical
//! checks of the integral conditions under which the estimating equation is
//! unbiased, sandwich asymptotics and contamination experiments.

// Guards are written `!(x > 0.0)` on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod asymptotics;
pub mod dataset;
pub mod divergences;
pub mod error;
pub mod estimator;
mod expectation;
pub mod experiments;
pub mod models;
pub mod numerics;
pub mod weights;

pub use error::{Error, Result};
