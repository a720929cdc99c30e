//! Expectations `E_{p(·|θ)}[h(X)]` under a model, restricted to a region.
//!
//! Scalar and bivariate models use (nested) quadrature; higher dimensions
//! fall back to Monte Carlo with a reported standard error.

use std::cell::Cell;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::models::ModelFamily;
use crate::numerics::{integrate, QuadratureConfig, RngSeed, Span};

/// Monte Carlo sample size used above two dimensions.
pub(crate) const MC_SAMPLES: usize = 200_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Moments {
    pub values: Vec<f64>,
    /// Present for Monte Carlo estimates.
    pub std_error: Option<Vec<f64>>,
}

/// Region of integration for scalar models; `None` means the model support.
pub(crate) type Interval = Option<(f64, f64)>;

fn quad_scale(model: &ModelFamily, theta: &[f64], coord: usize) -> f64 {
    match model {
        ModelFamily::Elliptical(m) => m
            .shape()
            .clone()
            .try_inverse()
            .map(|inv| inv[(coord, coord)].sqrt())
            .filter(|s| s.is_finite() && *s > 0.0)
            .unwrap_or(1.0),
        ModelFamily::ItakuraSaito(_) => theta[0],
        ModelFamily::ContinuousBregman(_) => theta[0].abs().max(1.0),
    }
}

/// `E[h_c(X)]` for `c in 0..components`, with `X ~ p(·|θ)` restricted to
/// `region` (scalar models) or the whole space.
pub(crate) fn expect<H>(
    model: &ModelFamily,
    theta: &[f64],
    region: Interval,
    components: usize,
    h: H,
    cfg: &QuadratureConfig,
    seed: RngSeed,
) -> Result<Moments>
where
    H: Fn(&[f64], usize) -> f64,
{
    let density = model.density_fn(theta)?;
    match model.dim() {
        1 => {
            let (s_lo, s_hi) = model.scalar_support();
            let (lo, hi) = match region {
                Some((a, b)) => (a.max(s_lo), b.min(s_hi)),
                None => (s_lo, s_hi),
            };
            if !(lo < theta[0] && theta[0] < hi) {
                return Err(Error::Domain(format!("parameter {} outside the integration region ({lo}, {hi})", theta[0])));
            }
            let span = Span::new(lo, hi).anchor(theta[0]).scale(quad_scale(model, theta, 0));
            let mut values = Vec::with_capacity(components);
            for c in 0..components {
                let q = integrate(
                    |x| {
                        let p = density(&[x]);
                        if p == 0.0 { 0.0 } else { p * h(&[x], c) }
                    },
                    span,
                    cfg,
                )?;
                if !q.converged {
                    return Err(Error::Quadrature(format!("expectation component {c} did not converge (partial value {})", q.value)));
                }
                values.push(q.value);
            }
            Ok(Moments { values, std_error: None })
        }
        2 => {
            let outer_span = Span::new(f64::NEG_INFINITY, f64::INFINITY).anchor(theta[0]).scale(quad_scale(model, theta, 0));
            let inner_span = Span::new(f64::NEG_INFINITY, f64::INFINITY).anchor(theta[1]).scale(quad_scale(model, theta, 1));
            let mut values = Vec::with_capacity(components);
            for c in 0..components {
                let inner_ok = Cell::new(true);
                let inner_err = Cell::new(None);
                let q = integrate(
                    |x0| {
                        match integrate(
                            |x1| {
                                let x = [x0, x1];
                                let p = density(&x);
                                if p == 0.0 { 0.0 } else { p * h(&x, c) }
                            },
                            inner_span,
                            cfg,
                        ) {
                            Ok(q) => {
                                if !q.converged {
                                    inner_ok.set(false);
                                }
                                q.value
                            }
                            Err(e) => {
                                inner_err.set(Some(e));
                                0.0
                            }
                        }
                    },
                    outer_span,
                    cfg,
                )?;
                if let Some(e) = inner_err.take() {
                    return Err(e);
                }
                if !q.converged || !inner_ok.get() {
                    return Err(Error::Quadrature(format!("nested expectation component {c} did not converge")));
                }
                values.push(q.value);
            }
            Ok(Moments { values, std_error: None })
        }
        d => {
            let sample = model.sample(theta, MC_SAMPLES, seed)?;
            let n = sample.len() as f64;
            let mut sum = vec![0.0; components];
            let mut sum_sq = vec![0.0; components];
            for row in sample.rows() {
                for c in 0..components {
                    let v = h(row, c);
                    if !v.is_finite() {
                        return Err(Error::NonFiniteIntegrand { abscissa: row[0], value: v });
                    }
                    sum[c] += v;
                    sum_sq[c] += v * v;
                }
            }
            let values: Vec<f64> = sum.iter().map(|s| s / n).collect();
            let std_error = values
                .iter()
                .zip(&sum_sq)
                .map(|(m, s2)| ((s2 / n - m * m).max(0.0) / (n - 1.0)).sqrt())
                .collect();
            debug_assert!(d >= 3);
            Ok(Moments { values, std_error: Some(std_error) })
        }
    }
}
