//! Shared numerical kernels: quadrature, inverse-CDF tables, sphere sampling
//! and seeded random streams.

mod quadrature;
mod rng;
mod sampling;

pub use quadrature::{integrate, integrate_finite, integrate_semi_infinite, Quadrature, QuadratureConfig, Span};
pub use rng::RngSeed;
pub use sampling::{inverse_cdf_sample, sample_unit_sphere, InverseCdf};
