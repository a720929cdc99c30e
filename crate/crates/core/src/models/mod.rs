//! Parametric families built from a generator `g` and a Bregman divergence:
//! elliptical (Mahalanobis), Itakura-Saito and continuous Bregman models.

mod cbregman;
mod elliptical;
mod generator;
mod itakura_saito;

pub use cbregman::{ContinuousBregmanModel, EndpointLimits};
pub use elliptical::EllipticalModel;
pub use generator::GeneratorFunction;
pub use itakura_saito::ISModel;

use serde::Serialize;

use crate::dataset::Dataset;
use crate::divergences::BregmanDivergence;
use crate::error::{Error, Result};
use crate::numerics::{integrate, integrate_semi_infinite, QuadratureConfig, RngSeed, Span};

/// Any of the supported model families.
#[derive(Debug, Clone)]
pub enum ModelFamily {
    Elliptical(EllipticalModel),
    ItakuraSaito(ISModel),
    ContinuousBregman(ContinuousBregmanModel),
}

impl From<EllipticalModel> for ModelFamily {
    fn from(m: EllipticalModel) -> Self {
        ModelFamily::Elliptical(m)
    }
}

impl From<ISModel> for ModelFamily {
    fn from(m: ISModel) -> Self {
        ModelFamily::ItakuraSaito(m)
    }
}

impl From<ContinuousBregmanModel> for ModelFamily {
    fn from(m: ContinuousBregmanModel) -> Self {
        ModelFamily::ContinuousBregman(m)
    }
}

impl ModelFamily {
    pub fn dim(&self) -> usize {
        match self {
            ModelFamily::Elliptical(m) => m.dim(),
            _ => 1,
        }
    }

    pub fn generator(&self) -> &GeneratorFunction {
        match self {
            ModelFamily::Elliptical(m) => m.generator(),
            ModelFamily::ItakuraSaito(m) => m.generator(),
            ModelFamily::ContinuousBregman(m) => m.generator(),
        }
    }

    /// The divergence the model is written in.
    pub fn matching_divergence(&self) -> BregmanDivergence {
        match self {
            ModelFamily::Elliptical(m) => BregmanDivergence::Mahalanobis(m.shape().clone()),
            ModelFamily::ItakuraSaito(_) => BregmanDivergence::ItakuraSaito,
            ModelFamily::ContinuousBregman(m) => m.divergence(),
        }
    }

    /// Support of a scalar model.
    pub fn scalar_support(&self) -> (f64, f64) {
        match self {
            ModelFamily::Elliptical(_) => (f64::NEG_INFINITY, f64::INFINITY),
            ModelFamily::ItakuraSaito(_) => (0.0, f64::INFINITY),
            ModelFamily::ContinuousBregman(m) => m.domain(),
        }
    }

    pub fn check_theta(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.dim() {
            return Err(Error::Domain(format!(
                "parameter has dimension {}, model has {}",
                theta.len(),
                self.dim()
            )));
        }
        match self {
            ModelFamily::Elliptical(_) => {
                if theta.iter().all(|t| t.is_finite()) {
                    Ok(())
                } else {
                    Err(Error::Domain("parameter must be finite".into()))
                }
            }
            ModelFamily::ItakuraSaito(_) => ISModel::check_theta(theta[0]),
            ModelFamily::ContinuousBregman(m) => m.check_theta(theta[0]),
        }
    }

    pub fn density(&self, x: &[f64], theta: &[f64]) -> Result<f64> {
        self.check_theta(theta)?;
        match self {
            ModelFamily::Elliptical(m) => m.density(x, theta),
            ModelFamily::ItakuraSaito(m) => m.density(scalar(x)?, theta[0]),
            ModelFamily::ContinuousBregman(m) => m.density(scalar(x)?, theta[0]),
        }
    }

    /// A density evaluator with any θ-dependent normalization precomputed.
    #[allow(clippy::type_complexity)]
    pub fn density_fn(&self, theta: &[f64]) -> Result<Box<dyn Fn(&[f64]) -> f64 + Send + Sync + '_>> {
        self.check_theta(theta)?;
        let theta = theta.to_vec();
        Ok(match self {
            ModelFamily::Elliptical(m) => {
                let c = m.normalization_constant();
                Box::new(move |x: &[f64]| m.generator().eval(m.mahalanobis(x, &theta)) / c)
            }
            ModelFamily::ItakuraSaito(m) => Box::new(move |x: &[f64]| m.density(x[0], theta[0]).unwrap_or(0.0)),
            ModelFamily::ContinuousBregman(m) => {
                let c = m.normalization_constant(theta[0])?;
                Box::new(move |x: &[f64]| m.density_with_constant(x[0], theta[0], c))
            }
        })
    }

    pub fn sample(&self, theta: &[f64], n: usize, seed: RngSeed) -> Result<Dataset> {
        self.check_theta(theta)?;
        match self {
            ModelFamily::Elliptical(m) => m.sample(theta, n, seed),
            ModelFamily::ItakuraSaito(m) => m.sample(theta[0], n, seed),
            ModelFamily::ContinuousBregman(m) => m.sample(theta[0], n, seed),
        }
    }
}

fn scalar(x: &[f64]) -> Result<f64> {
    match x {
        [v] => Ok(*v),
        _ => Err(Error::Domain(format!("scalar model evaluated at a point of dimension {}", x.len()))),
    }
}

/// Outcome of [`check_expectation_identity`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExpectationIdentity {
    /// `∫₀^∞ g < ∞` by quadrature.
    pub g_in_l1: bool,
    pub expectation_equals_theta: bool,
    /// `E[X]` when the quadrature converged.
    pub expectation: Option<f64>,
}

/// For scalar IS and continuous Bregman models, `E[X]` exists (and equals θ)
/// exactly when `g ∈ L¹(ℝ₊)`.
pub fn check_expectation_identity(model: &ModelFamily, theta: f64, cfg: &QuadratureConfig) -> Result<ExpectationIdentity> {
    if let ModelFamily::Elliptical(_) = model {
        return Err(Error::InvalidParameter(
            "expectation identity applies to IS and continuous Bregman models".into(),
        ));
    }
    model.check_theta(&[theta])?;
    let g = model.generator();
    let g_in_l1 = integrate_semi_infinite(|z| g.eval(z), cfg)?.converged;
    let density = model.density_fn(&[theta])?;
    let (a, b) = model.scalar_support();
    let q = integrate(|x| x * density(&[x]), Span::new(a, b).anchor(theta), cfg)?;
    let expectation = q.converged.then_some(q.value);
    let expectation_equals_theta =
        expectation.is_some_and(|e| (e - theta).abs() <= 1e-8 * theta.abs().max(1.0));
    Ok(ExpectationIdentity { g_in_l1, expectation_equals_theta, expectation })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::divergences::ScalarConvex;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;
    use statrs::function::gamma::{gamma, ln_gamma};
    use std::f64::consts::{E, PI};

    fn cfg() -> QuadratureConfig {
        QuadratureConfig::default()
    }

    fn gamma_density(x: f64, theta: f64, k: f64) -> f64 {
        ((k * (k / theta).ln()) - ln_gamma(k) + (k - 1.0) * x.ln() - k * x / theta).exp()
    }

    fn is_model(k: f64) -> ISModel {
        ISModel::new(GeneratorFunction::exponential(k).unwrap(), &cfg()).unwrap()
    }

    #[test]
    fn is_normalization_with_unit_shape_is_e() {
        assert_relative_eq!(is_model(1.0).normalization_constant(), E, max_relative = 1e-10);
    }

    #[test]
    fn is_normalization_matches_gamma_closed_form() {
        for k in [0.5, 2.0] {
            let c = is_model(k).normalization_constant();
            assert_relative_eq!(c, (E / k).powf(k) * gamma(k), max_relative = 1e-8);
        }
    }

    #[test]
    fn is_normalization_alternatives_agree() {
        for g in [GeneratorFunction::exponential(1.5).unwrap(), GeneratorFunction::exponential(0.7).unwrap()] {
            let m = ISModel::new(g, &cfg()).unwrap();
            let alt = m.normalization_constant_alt(&cfg()).unwrap();
            assert!(alt.converged);
            assert_relative_eq!(alt.value, m.normalization_constant(), max_relative = 1e-8);
        }
    }

    #[test]
    fn is_density_values() {
        let m = is_model(1.0);
        assert_relative_eq!(m.density(1.0, 1.0).unwrap(), (-1.0f64).exp(), max_relative = 1e-10);
        assert_eq!(m.density(-1.0, 1.0).unwrap(), 0.0);
        // k = 1 is the unit exponential law.
        assert_relative_eq!(m.density(1e-300, 1.0).unwrap(), 1.0, max_relative = 1e-10);
        assert!(m.density(1e4, 1.0).unwrap() < 1e-300);
        assert!(m.density(1.0, 0.0).is_err());
    }

    #[test]
    fn is_density_is_gamma() {
        for k in [0.5, 1.0, 3.0] {
            let m = is_model(k);
            for &(x, t) in &[(0.2, 1.0), (1.0, 2.0), (7.5, 3.0), (0.01, 0.5)] {
                assert_relative_eq!(m.density(x, t).unwrap(), gamma_density(x, t, k), max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn gaussian_elliptical_constants() {
        let m = EllipticalModel::new(GeneratorFunction::GaussianShape, DMatrix::identity(1, 1), &cfg()).unwrap();
        assert_relative_eq!(m.normalization_constant(), (2.0 * PI).sqrt(), max_relative = 1e-10);
        assert_relative_eq!(m.density(&[0.0], &[0.0]).unwrap(), 1.0 / (2.0 * PI).sqrt(), max_relative = 1e-10);
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let det = 2.0 - 0.25;
        let m2 = EllipticalModel::new(GeneratorFunction::GaussianShape, a, &cfg()).unwrap();
        assert_relative_eq!(m2.normalization_constant(), 2.0 * PI / f64::sqrt(det), max_relative = 1e-10);
    }

    #[test]
    fn elliptical_density_integrates_to_one() {
        let m = EllipticalModel::new(GeneratorFunction::student(4.0, 1).unwrap(), DMatrix::from_element(1, 1, 0.5), &cfg()).unwrap();
        let q = integrate(|x| m.density(&[x], &[1.0]).unwrap(), Span::new(f64::NEG_INFINITY, f64::INFINITY).anchor(1.0), &cfg()).unwrap();
        assert!(q.converged);
        assert_relative_eq!(q.value, 1.0, max_relative = 1e-9);
    }

    #[test]
    fn elliptical_rejects_ill_conditioned_shape() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1e-13]);
        assert!(EllipticalModel::new(GeneratorFunction::GaussianShape, a, &cfg()).is_err());
        let neg = DMatrix::from_row_slice(1, 1, &[-1.0]);
        assert!(EllipticalModel::new(GeneratorFunction::GaussianShape, neg, &cfg()).is_err());
    }

    #[test]
    fn elliptical_sampling_variance() {
        let m = EllipticalModel::new(GeneratorFunction::GaussianShape, DMatrix::identity(2, 2), &cfg()).unwrap();
        let n = 100_000;
        let data = m.sample(&[0.0, 0.0], n, RngSeed(11)).unwrap();
        assert_eq!(data.len(), n);
        for j in 0..2 {
            let var = data.rows().map(|r| r[j] * r[j]).sum::<f64>() / n as f64;
            assert!((var - 1.0).abs() < 0.03, "coordinate {j} variance {var}");
        }
        assert!(m.sample(&[0.0, 0.0], 0, RngSeed(1)).unwrap().is_empty());
    }

    #[test]
    fn elliptical_sampling_respects_shape() {
        // Mahalanobis radius of each sample is R, so E[R²] = d for the Gaussian shape.
        let a = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 2.0]);
        let m = EllipticalModel::new(GeneratorFunction::GaussianShape, a, &cfg()).unwrap();
        let n = 50_000;
        let data = m.sample(&[1.0, -1.0], n, RngSeed(12)).unwrap();
        let mean_r2 = data.rows().map(|r| m.mahalanobis(r, &[1.0, -1.0])).sum::<f64>() / n as f64;
        assert!((mean_r2 - 2.0).abs() < 0.05, "{mean_r2}");
    }

    #[test]
    fn is_sampling_mean() {
        let n = 100_000;
        let data = is_model(1.0).sample(2.0, n, RngSeed(13)).unwrap();
        let mean = data.mean().unwrap()[0];
        assert!((mean - 2.0).abs() < 3.0 * 2.0 / (n as f64).sqrt(), "{mean}");
        assert!(is_model(1.0).sample(2.0, 0, RngSeed(13)).unwrap().is_empty());
    }

    #[test]
    fn is_sampling_is_deterministic() {
        let m = is_model(2.0);
        assert_eq!(m.sample(1.0, 100, RngSeed(3)).unwrap(), m.sample(1.0, 100, RngSeed(3)).unwrap());
    }

    #[test]
    fn expectation_identity_exponential() {
        for k in [1.0, 2.0] {
            let m = ModelFamily::from(is_model(k));
            let r = check_expectation_identity(&m, 1.5, &cfg()).unwrap();
            assert!(r.g_in_l1 && r.expectation_equals_theta);
            assert_relative_eq!(r.expectation.unwrap(), 1.5, max_relative = 1e-8);
        }
        let m = ModelFamily::from(is_model(1.0));
        let e1 = check_expectation_identity(&m, 1.0, &cfg()).unwrap().expectation.unwrap();
        let e3 = check_expectation_identity(&m, 3.0, &cfg()).unwrap().expectation.unwrap();
        assert_relative_eq!(e3, 3.0 * e1, max_relative = 1e-8);
    }

    #[test]
    fn cbregman_reduces_to_gaussian_and_is() {
        let sq = ContinuousBregmanModel::new(ScalarConvex::squared(), GeneratorFunction::GaussianShape, &cfg()).unwrap();
        let ell = EllipticalModel::new(GeneratorFunction::GaussianShape, DMatrix::identity(1, 1), &cfg()).unwrap();
        for &(x, t) in &[(0.0, 0.0), (1.3, -0.2), (-4.0, 2.0)] {
            assert_relative_eq!(sq.density(x, t).unwrap(), ell.density(&[x], &[t]).unwrap(), max_relative = 1e-10);
        }
        let nl = ContinuousBregmanModel::new(ScalarConvex::neg_log(), GeneratorFunction::exponential(2.0).unwrap(), &cfg()).unwrap();
        let is = is_model(2.0);
        for &(x, t) in &[(0.5, 1.0), (3.0, 2.0), (0.05, 0.3)] {
            assert_relative_eq!(nl.density(x, t).unwrap(), is.density(x, t).unwrap(), max_relative = 1e-10);
        }
    }

    #[test]
    fn cbregman_endpoint_condition() {
        let sq = ContinuousBregmanModel::new(ScalarConvex::squared(), GeneratorFunction::GaussianShape, &cfg()).unwrap();
        let limits = sq.verify_endpoint_condition().unwrap();
        assert!(limits.iter().all(|l| l.zeta().is_none()));
        let nl = ContinuousBregmanModel::new(ScalarConvex::neg_log(), GeneratorFunction::GaussianShape, &cfg()).unwrap();
        assert!(nl.verify_endpoint_condition().is_ok());

        let unit = ContinuousBregmanModel::new(
            ScalarConvex::squared_on(0.0, 1.0).unwrap(),
            GeneratorFunction::GaussianShape,
            &cfg(),
        )
        .unwrap();
        let err = unit.endpoint_limits(0.3).unwrap_err();
        assert!(matches!(err, Error::EndpointCondition(_)));
        assert!(err.to_string().contains("upper endpoint"), "{err}");
        // θ = 1/2 is the symmetric exception with equal finite limits.
        let half = unit.endpoint_limits(0.5).unwrap();
        assert_relative_eq!(half.zeta().unwrap(), 0.25, max_relative = 1e-6);
        assert!(unit.verify_endpoint_condition().is_err());
    }

    #[test]
    fn cbregman_expectation_identity_and_sampling() {
        let nl = ModelFamily::from(
            ContinuousBregmanModel::new(ScalarConvex::neg_log(), GeneratorFunction::exponential(1.0).unwrap(), &cfg()).unwrap(),
        );
        let r = check_expectation_identity(&nl, 2.0, &cfg()).unwrap();
        assert!(r.g_in_l1 && r.expectation_equals_theta);
        let n = 20_000;
        let data = nl.sample(&[2.0], n, RngSeed(5)).unwrap();
        let mean = data.mean().unwrap()[0];
        assert!((mean - 2.0).abs() < 4.0 * 2.0 / (n as f64).sqrt());
    }

    #[test]
    fn scale_family_and_symmetry() {
        let m = is_model(1.7);
        for &(x, t) in &[(0.3, 2.0), (4.0, 0.5), (1.0, 9.0)] {
            assert_relative_eq!(m.density(x, t).unwrap(), m.density(x / t, 1.0).unwrap() / t, max_relative = 1e-12);
        }
        let e = EllipticalModel::new(GeneratorFunction::student(3.0, 2).unwrap(), DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 3.0]), &cfg()).unwrap();
        let t = [0.5, -1.0];
        let v = [0.7, 0.3];
        let plus = [t[0] + v[0], t[1] + v[1]];
        let minus = [t[0] - v[0], t[1] - v[1]];
        assert_relative_eq!(e.density(&plus, &t).unwrap(), e.density(&minus, &t).unwrap(), max_relative = 1e-14);
    }
}
