//! Numerical checks of when the estimating equation is unbiased.
//!
//! For an elliptical model in dimension `d` the bias term vanishes when
//! `∫₀^∞ g(t) f'(t) t^{(d−1)/2} dt < ∞`; for IS and continuous Bregman models
//! the condition is `∫₀^∞ g(t) f'(t) dt < ∞`. The verdicts are numerical:
//! see [`crate::numerics::integrate`] for how divergence is detected.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Serialize, Serializer};

use crate::divergences::BregmanDivergence;
use crate::error::{Error, Result};
use crate::expectation::expect;
use crate::models::{ContinuousBregmanModel, EndpointLimits, GeneratorFunction, ModelFamily};
use crate::numerics::{integrate_semi_infinite, QuadratureConfig, RngSeed};
use crate::weights::WeightFunction;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Theorem {
    Mahalanobis { dim: usize },
    ItakuraSaito,
    ContinuousBregman,
}

impl fmt::Display for Theorem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Theorem::Mahalanobis { dim } => write!(f, "mahalanobis(d={dim})"),
            Theorem::ItakuraSaito => f.write_str("itakura_saito"),
            Theorem::ContinuousBregman => f.write_str("continuous_bregman"),
        }
    }
}

impl Serialize for Theorem {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// Result of a condition check. Serializes as
/// `{theorem, params, finite, value, diagnostics}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionVerdict {
    pub theorem: Theorem,
    pub params: BTreeMap<String, String>,
    pub finite: bool,
    /// Only present when `finite`.
    #[serde(rename = "value")]
    pub integral_value: Option<f64>,
    pub diagnostics: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub endpoint_limits: Option<Vec<EndpointLimits>>,
}

fn verdict<I>(theorem: Theorem, params: BTreeMap<String, String>, integrand: I, cfg: &QuadratureConfig) -> Result<ConditionVerdict>
where
    I: Fn(f64) -> f64,
{
    let (finite, integral_value, diagnostics) = match integrate_semi_infinite(integrand, cfg) {
        Ok(q) if q.converged => (
            true,
            Some(q.value),
            format!("truncations stabilized; error estimate {:.3e}, {} evaluations", q.error_estimate, q.evaluations),
        ),
        Ok(q) => (
            false,
            None,
            format!(
                "truncated integrals did not stabilize (last partial value {:.6e}, {} evaluations)",
                q.value, q.evaluations
            ),
        ),
        // An integrand that overflows toward an endpoint is divergent there.
        Err(Error::NonFiniteIntegrand { abscissa, value }) if value == f64::INFINITY => {
            (false, None, format!("integrand overflows at t = {abscissa:e}"))
        }
        Err(e) => return Err(e),
    };
    Ok(ConditionVerdict { theorem, params, finite, integral_value, diagnostics, endpoint_limits: None })
}

fn params(g: &GeneratorFunction, w: &WeightFunction) -> BTreeMap<String, String> {
    BTreeMap::from([("g".to_string(), g.to_string()), ("f".to_string(), w.to_string())])
}

/// `f'` inside an integrand: failures become NaN and are reported by the
/// quadrature with their abscissa.
fn weight(w: &WeightFunction, t: f64) -> f64 {
    w.deriv(t).unwrap_or(f64::NAN)
}

/// `g(t) f'(t) t^p` through logarithms, so that `g` underflowing while `f'`
/// overflows does not produce `0 · ∞`.
fn condition_integrand<'a>(g: &'a GeneratorFunction, w: &'a WeightFunction, power: f64) -> impl Fn(f64) -> f64 + 'a {
    move |t| match w.ln_deriv(t) {
        Ok(lw) => {
            let lp = if power == 0.0 { 0.0 } else { power * t.ln() };
            (g.ln_eval(t) + lw + lp).exp()
        }
        Err(_) => f64::NAN,
    }
}

/// Elliptical models: checks `∫₀^∞ g(t) f'(t) t^{(d−1)/2} dt < ∞`.
pub fn check_theorem1(g: &GeneratorFunction, w: &WeightFunction, d: usize, cfg: &QuadratureConfig) -> Result<ConditionVerdict> {
    if d == 0 {
        return Err(Error::InvalidParameter("dimension must be >= 1".into()));
    }
    let mut p = params(g, w);
    p.insert("d".into(), d.to_string());
    let power = (d as f64 - 1.0) / 2.0;
    verdict(Theorem::Mahalanobis { dim: d }, p, condition_integrand(g, w, power), cfg)
}

/// IS models: checks `∫₀^∞ g(t) f'(t) dt < ∞`.
pub fn check_theorem2(g: &GeneratorFunction, w: &WeightFunction, cfg: &QuadratureConfig) -> Result<ConditionVerdict> {
    verdict(Theorem::ItakuraSaito, params(g, w), condition_integrand(g, w, 0.0), cfg)
}

/// Continuous Bregman models: the endpoint condition must hold, then the
/// same integral as for IS models is checked.
pub fn check_theorem4(model: &ContinuousBregmanModel, w: &WeightFunction, cfg: &QuadratureConfig) -> Result<ConditionVerdict> {
    let limits = model.verify_endpoint_condition()?;
    let g = model.generator();
    let mut p = params(g, w);
    p.insert("phi".into(), model.phi().name().to_string());
    let mut v = verdict(Theorem::ContinuousBregman, p, condition_integrand(g, w, 0.0), cfg)?;
    let zeta = limits[0].zeta().map_or("infinite".to_string(), |z| z.to_string());
    v.diagnostics = format!("endpoint condition holds (common limit {zeta}); {}", v.diagnostics);
    v.endpoint_limits = Some(limits);
    Ok(v)
}

/// `E_{p(·|θ)}[f'(d_φ(X, θ)) (X − θ)]` componentwise.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BiasResidual {
    pub value: Vec<f64>,
    /// Monte Carlo standard errors (dimension ≥ 3 only).
    pub std_error: Option<Vec<f64>>,
}

impl BiasResidual {
    pub fn norm(&self) -> f64 {
        self.value.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Evaluates the bias residual. For scalar models the expectation is taken
/// over the model support intersected with the divergence domain, which lets
/// a mismatched divergence be probed on the part of the support it accepts.
pub fn bias_residual(
    model: &ModelFamily,
    w: &WeightFunction,
    div: &BregmanDivergence,
    theta: &[f64],
    cfg: &QuadratureConfig,
) -> Result<BiasResidual> {
    model.check_theta(theta)?;
    if let Some(d) = div.dim() {
        if d != model.dim() {
            return Err(Error::InvalidParameter(format!("divergence dimension {d} does not match model dimension {}", model.dim())));
        }
    }
    div.check_point(theta)?;
    let region = (model.dim() == 1).then(|| div.scalar_domain());
    let m = expect(
        model,
        theta,
        region,
        model.dim(),
        |x, c| match div.eval(x, theta) {
            Ok(z) => weight(w, z) * (x[c] - theta[c]),
            Err(_) => f64::NAN,
        },
        cfg,
        RngSeed(0x5eed_b1a5),
    )?;
    Ok(BiasResidual { value: m.values, std_error: m.std_error })
}
