use super::GeneratorFunction;
use crate::dataset::Dataset;
use crate::divergences::itakura_saito;
use crate::error::{Error, Result};
use crate::numerics::{integrate_semi_infinite, InverseCdf, Quadrature, QuadratureConfig, RngSeed, Span};

/// Scale family `p(x|θ) = g(d_IS(x, θ)) / (C x)` on (0, ∞).
///
/// `C = ∫₀^∞ g(d_IS(t, 1)) / t dt` does not depend on θ, and `X = θ Z` with
/// `Z ~ p(·|1)`.
#[derive(Debug, Clone)]
pub struct ISModel {
    g: GeneratorFunction,
    constant: f64,
    unit: InverseCdf,
}

impl ISModel {
    pub fn new(g: GeneratorFunction, cfg: &QuadratureConfig) -> Result<Self> {
        let gg = g.clone();
        let unit = InverseCdf::build(move |z: f64| gg.eval(itakura_saito(z, 1.0)) / z, Span::semi_infinite(), cfg)
            .map_err(|e| match e {
                Error::NotIntegrable(_) => Error::NotIntegrable(format!("normalization of the IS model with g = {g} diverges")),
                other => other,
            })?;
        Ok(ISModel { constant: unit.total_mass(), g, unit })
    }

    pub fn generator(&self) -> &GeneratorFunction {
        &self.g
    }

    pub fn normalization_constant(&self) -> f64 {
        self.constant
    }

    /// `∫₀^∞ g(d_IS(x, 1)) dx`, which equals `C` whenever `g ∈ L¹(ℝ₊)`.
    pub fn normalization_constant_alt(&self, cfg: &QuadratureConfig) -> Result<Quadrature> {
        integrate_semi_infinite(|x| self.g.eval(itakura_saito(x, 1.0)), cfg)
    }

    pub fn check_theta(theta: f64) -> Result<()> {
        if theta > 0.0 && theta.is_finite() {
            Ok(())
        } else {
            Err(Error::Domain(format!("IS scale parameter must be positive, got {theta}")))
        }
    }

    /// Zero outside the support.
    pub fn density(&self, x: f64, theta: f64) -> Result<f64> {
        Self::check_theta(theta)?;
        if !(x > 0.0) || !x.is_finite() {
            return Ok(0.0);
        }
        Ok(self.g.eval(itakura_saito(x, theta)) / (self.constant * x))
    }

    pub fn sample(&self, theta: f64, n: usize, seed: RngSeed) -> Result<Dataset> {
        Self::check_theta(theta)?;
        Ok(Dataset::from_scalars(self.unit.sample(n, seed).into_iter().map(|z| theta * z).collect()))
    }
}
