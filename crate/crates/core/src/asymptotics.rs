//! Sandwich covariance `Σ = J⁻¹ I J⁻ᵀ` of the estimator and efficiency
//! comparisons on the gamma model.
//!
//! The estimating function is used in its factored form
//! `ψ(x, θ) = f'(d_φ(x, θ)) (x − θ)`, so
//! `I = E[f'(d)² (x−θ)(x−θ)ᵀ]` and `J = E[∂ψ/∂θ]`.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;
use statrs::function::factorial::factorial;
use statrs::function::gamma::{gamma, ln_gamma};

use crate::divergences::BregmanDivergence;
use crate::error::{Error, Result};
use crate::expectation::expect;
use crate::models::ModelFamily;
use crate::numerics::{integrate, QuadratureConfig, RngSeed, Span};
use crate::weights::WeightFunction;

/// Relative step of the finite-difference Jacobian (before extrapolation).
const FD_STEP: f64 = 1e-2;
const FD_SEED: RngSeed = RngSeed(0x5a4d_7769_6368);

#[derive(Debug, Clone, PartialEq)]
pub struct SandwichResult {
    pub i: DMatrix<f64>,
    pub j: DMatrix<f64>,
    pub sigma: DMatrix<f64>,
    /// `J` recomputed by Richardson-extrapolated central differences of
    /// `θ' ↦ E_θ[ψ(X, θ')]`.
    pub j_finite_difference: DMatrix<f64>,
}

impl SandwichResult {
    /// Largest entrywise relative deviation between analytic and
    /// finite-difference `J`.
    pub fn j_discrepancy(&self) -> f64 {
        let scale = self.j.abs().max().max(f64::MIN_POSITIVE);
        (&self.j - &self.j_finite_difference).abs().max() / scale
    }
}

fn param_scale(theta: &[f64]) -> f64 {
    theta.iter().map(|t| t.abs()).fold(0.0, f64::max).max(1.0)
}

pub fn sandwich_variance(
    model: &ModelFamily,
    w: &WeightFunction,
    div: &BregmanDivergence,
    theta: &[f64],
    cfg: &QuadratureConfig,
) -> Result<SandwichResult> {
    model.check_theta(theta)?;
    div.check_point(theta)?;
    let d = model.dim();
    if div.dim().is_some_and(|dd| dd != d) {
        return Err(Error::InvalidParameter("divergence and model dimensions differ".into()));
    }
    let region = (d == 1).then(|| div.scalar_domain());
    let dd = d * d;

    // Components 0..d² hold I (row-major), d²..2d² hold J.
    let m = expect(
        model,
        theta,
        region,
        2 * dd,
        |x, c| {
            let Ok(z) = div.eval(x, theta) else { return f64::NAN };
            let (a, b) = ((c % dd) / d, c % d);
            let ra = x[a] - theta[a];
            if c < dd {
                let Ok(f1) = w.deriv(z) else { return f64::NAN };
                f1 * f1 * ra * (x[b] - theta[b])
            } else {
                let (Ok(f1), Ok(f2), Ok(grad)) = (w.deriv(z), w.second_deriv(z), div.grad_theta(x, theta)) else {
                    return f64::NAN;
                };
                let delta = if a == b { f1 } else { 0.0 };
                f2 * ra * grad[b] - delta
            }
        },
        cfg,
        FD_SEED,
    )?;
    let i = DMatrix::from_row_slice(d, d, &m.values[..dd]);
    let i = (&i + i.transpose()) * 0.5;
    let j = DMatrix::from_row_slice(d, d, &m.values[dd..]);

    let j_finite_difference = fd_jacobian(model, w, div, theta, region, cfg)?;

    let svd = j.clone().svd(false, false);
    let (smin, smax) = (svd.singular_values.min(), svd.singular_values.max());
    if !(smin > 1e-12 * smax.max(1.0)) {
        return Err(Error::SingularJacobian { smallest_singular_value: smin });
    }
    let j_inv = j.clone().try_inverse().ok_or(Error::SingularJacobian { smallest_singular_value: smin })?;
    let sigma = &j_inv * &i * j_inv.transpose();
    let sigma = (&sigma + sigma.transpose()) * 0.5;
    Ok(SandwichResult { i, j, sigma, j_finite_difference })
}

fn fd_jacobian(
    model: &ModelFamily,
    w: &WeightFunction,
    div: &BregmanDivergence,
    theta: &[f64],
    region: Option<(f64, f64)>,
    cfg: &QuadratureConfig,
) -> Result<DMatrix<f64>> {
    let d = theta.len();
    let mean_psi = |shifted: &[f64]| -> Result<Vec<f64>> {
        div.check_point(shifted)?;
        Ok(expect(
            model,
            theta,
            region,
            d,
            |x, c| match div.eval(x, shifted).map(|z| w.deriv(z)) {
                Ok(Ok(f1)) => f1 * (x[c] - shifted[c]),
                _ => f64::NAN,
            },
            cfg,
            FD_SEED,
        )?
        .values)
    };
    let mut out = DMatrix::zeros(d, d);
    let h = FD_STEP * param_scale(theta);
    for b in 0..d {
        let central = |step: f64| -> Result<Vec<f64>> {
            let mut plus = theta.to_vec();
            let mut minus = theta.to_vec();
            plus[b] += step;
            minus[b] -= step;
            let (p, m) = (mean_psi(&plus)?, mean_psi(&minus)?);
            Ok(p.iter().zip(&m).map(|(p, m)| (p - m) / (2.0 * step)).collect())
        };
        let coarse = central(h)?;
        let fine = central(h / 2.0)?;
        for a in 0..d {
            out[(a, b)] = (4.0 * fine[a] - coarse[a]) / 3.0;
        }
    }
    Ok(out)
}

fn check_gamma_tuning(alpha: f64, k: f64) -> Result<()> {
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::InvalidParameter(format!("shape k must be positive, got {k}")));
    }
    if !(alpha > -0.5 * k) || !alpha.is_finite() {
        return Err(Error::Domain(format!("asymptotic variance requires α > −k/2 = {}, got α = {alpha}", -0.5 * k)));
    }
    Ok(())
}

/// `Γ(x)`, exact for positive integers (where the series approximation is a
/// few ulp off).
fn gamma_fn(x: f64) -> f64 {
    if x.fract() == 0.0 && (1.0..=170.0).contains(&x) {
        factorial(x as u64 - 1)
    } else {
        gamma(x)
    }
}

/// `Γ(a)/Γ(b)`, through log-gamma once either argument is large.
fn gamma_ratio(a: f64, b: f64) -> f64 {
    if a.max(b) < 150.0 {
        gamma_fn(a) / gamma_fn(b)
    } else {
        (ln_gamma(a) - ln_gamma(b)).exp()
    }
}

/// Asymptotic variance of the estimator on the gamma model with shape `k`,
/// `LogSumExp(α)` weights and IS divergence:
///
/// `V = Γ(2α+k)Γ(k)/Γ(α+k)² · (α+k)^{2(α+1+k)} / (2α+k)^{2α+1+k} · θ*²/k^{2+k}`.
///
/// Evaluated in a rearranged form whose factors are exactly 1 at α = 0.
pub fn gamma_variance_closed_form(alpha: f64, k: f64, theta_star: f64) -> Result<f64> {
    check_gamma_tuning(alpha, k)?;
    if !(theta_star > 0.0 && theta_star.is_finite()) {
        return Err(Error::Domain(format!("θ* must be positive, got {theta_star}")));
    }
    Ok(unit_variance_factor(alpha, k) * theta_star * theta_star / k)
}

/// `V(α, k, θ*) · k / θ*²`.
fn unit_variance_factor(alpha: f64, k: f64) -> f64 {
    let gammas = gamma_ratio(2.0 * alpha + k, alpha + k) * gamma_ratio(k, alpha + k);
    let p1 = ((alpha + k) / (2.0 * alpha + k)).powf(2.0 * alpha + 1.0 + k);
    let p2 = ((alpha + k) / k).powf(1.0 + k);
    gammas * p1 * p2
}

/// Asymptotic relative efficiency `V_MLE / V` on the gamma model.
pub fn are(alpha: f64, k: f64) -> Result<f64> {
    check_gamma_tuning(alpha, k)?;
    Ok(1.0 / unit_variance_factor(alpha, k))
}

/// Same as [`are`]; θ* cancels and is only validated.
pub fn are_at(alpha: f64, k: f64, theta_star: f64) -> Result<f64> {
    if !(theta_star > 0.0 && theta_star.is_finite()) {
        return Err(Error::Domain(format!("θ* must be positive, got {theta_star}")));
    }
    are(alpha, k)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BaselineKind {
    BetaDiv,
    GammaDiv,
}

/// Estimating function of a β- or γ-divergence estimator on the exponential
/// model `p(x|θ) = e^{−x/θ}/θ`, with score `s(x, θ) = (x − θ)/θ²`:
///
/// * β: `ψ = p^β s − ∫ p^{1+β} s`
/// * γ: `ψ = p^γ (s − ∫ p^{1+γ} s / ∫ p^{1+γ})`
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselinePsi {
    pub kind: BaselineKind,
    pub tuning: f64,
    pub theta: f64,
    /// The subtracted constant (β) or the centering of `s` (γ).
    pub centering: f64,
}

fn exp_density(x: f64, theta: f64) -> f64 {
    if x < 0.0 { 0.0 } else { (-x / theta).exp() / theta }
}

fn score(x: f64, theta: f64) -> f64 {
    (x - theta) / (theta * theta)
}

fn exp_expect(h: impl Fn(f64) -> f64, theta: f64, cfg: &QuadratureConfig) -> Result<f64> {
    let q = integrate(|x| exp_density(x, theta) * h(x), Span::semi_infinite().anchor(theta), cfg)?;
    if !q.converged {
        return Err(Error::Quadrature(format!("baseline expectation did not converge (partial value {})", q.value)));
    }
    Ok(q.value)
}

impl BaselinePsi {
    pub fn new(kind: BaselineKind, tuning: f64, theta: f64, cfg: &QuadratureConfig) -> Result<Self> {
        if !(tuning > 0.0 && tuning.is_finite()) {
            return Err(Error::InvalidParameter(format!("baseline tuning must be positive, got {tuning}")));
        }
        if !(theta > 0.0 && theta.is_finite()) {
            return Err(Error::Domain(format!("exponential mean must be positive, got {theta}")));
        }
        let m1 = exp_expect(|x| exp_density(x, theta).powf(tuning) * score(x, theta), theta, cfg)?;
        let centering = match kind {
            BaselineKind::BetaDiv => m1,
            BaselineKind::GammaDiv => m1 / exp_expect(|x| exp_density(x, theta).powf(tuning), theta, cfg)?,
        };
        Ok(BaselinePsi { kind, tuning, theta, centering })
    }

    pub fn eval(&self, x: f64) -> f64 {
        let pw = exp_density(x, self.theta).powf(self.tuning);
        let s = score(x, self.theta);
        match self.kind {
            BaselineKind::BetaDiv => pw * s - self.centering,
            BaselineKind::GammaDiv => pw * (s - self.centering),
        }
    }
}

/// Sandwich variance `E[ψ²] / E[ψ s]²` of a baseline estimator at θ, using
/// `E[∂ψ/∂θ] = −E[ψ s]`.
pub fn baseline_variance(kind: BaselineKind, tuning: f64, theta: f64, cfg: &QuadratureConfig) -> Result<f64> {
    let psi = BaselinePsi::new(kind, tuning, theta, cfg)?;
    let i = exp_expect(|x| psi.eval(x).powi(2), theta, cfg)?;
    let j = -exp_expect(|x| psi.eval(x) * score(x, theta), theta, cfg)?;
    if !(j.abs() > 0.0) {
        return Err(Error::SingularJacobian { smallest_singular_value: j.abs() });
    }
    Ok(i / (j * j))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AreRow {
    pub alpha: f64,
    pub are_fsep: f64,
    pub are_beta: Option<f64>,
    pub are_gamma: Option<f64>,
}

/// ARE of the f-separable estimator over `alpha_grid`, optionally alongside
/// the β- and γ-divergence estimators with the same tuning value (k = 1 only).
/// Baseline columns are left empty for negative α.
pub fn are_curve(k: f64, alpha_grid: &[f64], include_baselines: bool, cfg: &QuadratureConfig) -> Result<Vec<AreRow>> {
    if include_baselines && k != 1.0 {
        return Err(Error::InvalidParameter(format!("baselines are defined for the exponential model (k = 1), got k = {k}")));
    }
    alpha_grid
        .par_iter()
        .map(|&alpha| {
            let are_fsep = are(alpha, k)?;
            let baseline = |kind| -> Result<Option<f64>> {
                if !include_baselines || alpha < 0.0 {
                    Ok(None)
                } else if alpha == 0.0 {
                    Ok(Some(1.0))
                } else {
                    Ok(Some(1.0 / baseline_variance(kind, alpha, 1.0, cfg)?))
                }
            };
            Ok(AreRow {
                alpha,
                are_fsep,
                are_beta: baseline(BaselineKind::BetaDiv)?,
                are_gamma: baseline(BaselineKind::GammaDiv)?,
            })
        })
        .collect()
}

/// Writes rows under the header `alpha,are_fsep,are_beta,are_gamma`.
pub fn write_are_csv<W: std::io::Write>(rows: &[AreRow], writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(["alpha", "are_fsep", "are_beta", "are_gamma"])?;
    let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
    for r in rows {
        out.write_record([r.alpha.to_string(), r.are_fsep.to_string(), opt(r.are_beta), opt(r.are_gamma)])?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{EllipticalModel, GeneratorFunction, ISModel};
    use approx::assert_relative_eq;

    fn cfg() -> QuadratureConfig {
        QuadratureConfig::default()
    }

    fn gamma_model(k: f64) -> ModelFamily {
        ISModel::new(GeneratorFunction::exponential(k).unwrap(), &cfg()).unwrap().into()
    }

    fn lse(a: f64) -> WeightFunction {
        WeightFunction::log_sum_exp(a).unwrap()
    }

    #[test]
    fn closed_form_anchors() {
        assert_eq!(gamma_variance_closed_form(0.0, 1.0, 1.0).unwrap(), 1.0);
        assert_eq!(gamma_variance_closed_form(0.0, 2.0, 3.0).unwrap(), 4.5);
        assert_relative_eq!(gamma_variance_closed_form(1.0, 1.0, 1.0).unwrap(), 128.0 / 81.0, max_relative = 2.0 * f64::EPSILON);
        assert!(gamma_variance_closed_form(-0.5, 1.0, 1.0).is_err());
        assert!(gamma_variance_closed_form(0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn are_examples() {
        for k in [0.5, 1.0, 3.0] {
            assert_eq!(are(0.0, k).unwrap(), 1.0);
        }
        assert_relative_eq!(are(1.0, 1.0).unwrap(), 81.0 / 128.0, max_relative = 2.0 * f64::EPSILON);
        assert_eq!(are_at(0.7, 1.3, 1.0).unwrap(), are_at(0.7, 1.3, 7.0).unwrap());
        assert!(are(-0.6, 1.0).is_err());
    }

    #[test]
    fn large_shape_uses_log_gamma() {
        let v = gamma_variance_closed_form(0.0, 400.0, 2.0).unwrap();
        assert_relative_eq!(v, 4.0 / 400.0, max_relative = 1e-10);
        assert!(gamma_variance_closed_form(1.0, 400.0, 1.0).unwrap().is_finite());
    }

    #[test]
    fn sandwich_matches_mle_and_closed_form() {
        let s = sandwich_variance(&gamma_model(1.0), &lse(0.0), &BregmanDivergence::ItakuraSaito, &[1.0], &cfg()).unwrap();
        assert_relative_eq!(s.sigma[(0, 0)], 1.0, max_relative = 1e-8);
        let s = sandwich_variance(&gamma_model(1.0), &lse(1.0), &BregmanDivergence::ItakuraSaito, &[1.0], &cfg()).unwrap();
        assert_relative_eq!(s.sigma[(0, 0)], 128.0 / 81.0, max_relative = 1e-7);
        assert!(s.j_discrepancy() < 1e-6, "{}", s.j_discrepancy());
    }

    #[test]
    fn sandwich_scales_with_theta_squared() {
        let m = gamma_model(2.0);
        let s1 = sandwich_variance(&m, &lse(0.5), &BregmanDivergence::ItakuraSaito, &[1.0], &cfg()).unwrap();
        let s4 = sandwich_variance(&m, &lse(0.5), &BregmanDivergence::ItakuraSaito, &[4.0], &cfg()).unwrap();
        assert_relative_eq!(s4.sigma[(0, 0)], 16.0 * s1.sigma[(0, 0)], max_relative = 1e-7);
    }

    #[test]
    fn gaussian_sample_mean_variance() {
        // g(z) = e^{−z/2} with A = 1/4 is N(θ, 4).
        let a = DMatrix::from_element(1, 1, 0.25);
        let m: ModelFamily = EllipticalModel::new(GeneratorFunction::GaussianShape, a, &cfg()).unwrap().into();
        let s = sandwich_variance(&m, &WeightFunction::Linear, &BregmanDivergence::SquaredEuclidean, &[0.5], &cfg()).unwrap();
        assert_relative_eq!(s.sigma[(0, 0)], 4.0, max_relative = 1e-8);
    }

    #[test]
    fn sandwich_in_two_dimensions() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.5]);
        let m: ModelFamily = EllipticalModel::new(GeneratorFunction::GaussianShape, a.clone(), &cfg()).unwrap().into();
        let div = BregmanDivergence::mahalanobis(a.clone()).unwrap();
        let s = sandwich_variance(&m, &WeightFunction::Linear, &div, &[0.0, 0.0], &cfg()).unwrap();
        let cov = a.try_inverse().unwrap();
        assert!((&s.sigma - &cov).abs().max() < 1e-7, "{}", s.sigma);
        assert!(s.j_discrepancy() < 1e-6);
    }

    #[test]
    fn beta_centering_matches_closed_form() {
        for (beta, theta) in [(0.5, 1.0), (1.5, 3.0)] {
            let psi = BaselinePsi::new(BaselineKind::BetaDiv, beta, theta, &cfg()).unwrap();
            let exact = -theta.powf(-(1.0 + beta)) * beta / (1.0f64 + beta).powi(2);
            assert_relative_eq!(psi.centering, exact, max_relative = 1e-9);
        }
    }

    #[test]
    fn baselines_approach_mle() {
        for kind in [BaselineKind::BetaDiv, BaselineKind::GammaDiv] {
            let v = baseline_variance(kind, 1e-4, 2.0, &cfg()).unwrap();
            assert_relative_eq!(v, 4.0, max_relative = 1e-2);
        }
        assert!(baseline_variance(BaselineKind::BetaDiv, 0.0, 1.0, &cfg()).is_err());
    }

    #[test]
    fn baseline_jacobian_identity() {
        // E_θ[∂ψ/∂θ] by differencing against −E[ψ s].
        let c = cfg();
        for kind in [BaselineKind::BetaDiv, BaselineKind::GammaDiv] {
            let theta = 1.3;
            let h = 1e-4;
            let at = |t: f64| {
                let psi = BaselinePsi::new(kind, 0.7, t, &c).unwrap();
                exp_expect(|x| psi.eval(x), theta, &c).unwrap()
            };
            let fd = (at(theta + h) - at(theta - h)) / (2.0 * h);
            let psi = BaselinePsi::new(kind, 0.7, theta, &c).unwrap();
            let j = -exp_expect(|x| psi.eval(x) * score(x, theta), theta, &c).unwrap();
            assert_relative_eq!(fd, j, max_relative = 1e-6);
        }
    }

    #[test]
    fn curve_rows_and_csv() {
        let rows = are_curve(1.0, &[0.0, 0.5, 1.0], true, &cfg()).unwrap();
        assert_eq!((rows[0].are_fsep, rows[0].are_beta, rows[0].are_gamma), (1.0, Some(1.0), Some(1.0)));
        let mut buf = Vec::new();
        write_are_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("alpha,are_fsep,are_beta,are_gamma\n0,1,1,1\n"), "{text}");
        let plain = are_curve(2.0, &[0.0, -0.5], false, &cfg()).unwrap();
        let mut buf = Vec::new();
        write_are_csv(&plain, &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().contains("\n-0.5,"));
        assert!(are_curve(2.0, &[0.5], true, &cfg()).is_err());
        assert!(are_curve(1.0, &[-0.6], false, &cfg()).is_err());
    }
}
