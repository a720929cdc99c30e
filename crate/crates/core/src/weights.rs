//! Weight functions `f` and their derivatives.
//!
//! `f'` plays the role of the observation weight in the reweighting
//! estimator: a point at divergence `z` from the current estimate enters the
//! weighted mean with weight `f'(z)`. Concave `f` (α > 0, β < 1) downweights
//! distant observations.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Monotone increasing `f: ℝ₊ → ℝ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightFunction {
    /// `f(z) = (1 - e^{-αz})/α`, `f'(z) = e^{-αz}`; linear at α = 0.
    LogSumExp { alpha: f64 },
    /// `f(z) = ((z + a)^β - 1)/β`, `f'(z) = (z + a)^{β-1}`; `ln(z + a)` at β = 0.
    PowerMean { beta: f64, a: f64 },
    /// `f(z) = z`.
    Linear,
}

impl WeightFunction {
    pub fn log_sum_exp(alpha: f64) -> Result<Self> {
        if !alpha.is_finite() {
            return Err(Error::InvalidParameter(format!("alpha must be finite, got {alpha}")));
        }
        Ok(WeightFunction::LogSumExp { alpha })
    }

    pub fn power_mean(beta: f64, a: f64) -> Result<Self> {
        if !beta.is_finite() {
            return Err(Error::InvalidParameter(format!("beta must be finite, got {beta}")));
        }
        if !(a >= 0.0) || !a.is_finite() {
            return Err(Error::InvalidParameter(format!("power-mean offset a must be >= 0, got {a}")));
        }
        Ok(WeightFunction::PowerMean { beta, a })
    }

    /// Tuning parameter used to label sweep rows (α, β, or 0 for linear).
    pub fn tuning(&self) -> f64 {
        match *self {
            WeightFunction::LogSumExp { alpha } => alpha,
            WeightFunction::PowerMean { beta, .. } => beta,
            WeightFunction::Linear => 0.0,
        }
    }

    fn check(&self, z: f64, order: u8) -> Result<()> {
        if !(z >= 0.0) {
            return Err(Error::Domain(format!("weight argument must be >= 0, got {z}")));
        }
        if let WeightFunction::PowerMean { beta, a } = *self {
            // f singular for β ≤ 0, f' for β < 1, f'' for β < 2 (β ≠ 1).
            let singular = match order {
                0 => beta <= 0.0,
                1 => beta < 1.0,
                _ => beta < 2.0 && beta != 1.0,
            };
            if a == 0.0 && z == 0.0 && singular {
                return Err(Error::Singularity(format!(
                    "power mean with a = 0, beta = {beta} is singular at z = 0"
                )));
            }
        }
        Ok(())
    }

    /// `f(z)`.
    pub fn value(&self, z: f64) -> Result<f64> {
        self.check(z, 0)?;
        Ok(match *self {
            WeightFunction::LogSumExp { alpha } => {
                if alpha == 0.0 {
                    z
                } else {
                    -(-alpha * z).exp_m1() / alpha
                }
            }
            WeightFunction::PowerMean { beta, a } => {
                let l = (z + a).ln();
                if beta == 0.0 {
                    l
                } else if (beta * l).abs() < 0.5 {
                    (beta * l).exp_m1() / beta
                } else {
                    ((z + a).powf(beta) - 1.0) / beta
                }
            }
            WeightFunction::Linear => z,
        })
    }

    /// `f'(z)`, the observation weight.
    pub fn deriv(&self, z: f64) -> Result<f64> {
        self.check(z, 1)?;
        Ok(match *self {
            WeightFunction::LogSumExp { alpha } => (-alpha * z).exp(),
            WeightFunction::PowerMean { beta, a } => (z + a).powf(beta - 1.0),
            WeightFunction::Linear => 1.0,
        })
    }

    /// `ln f'(z)`, finite where `f'(z)` overflows or underflows.
    pub fn ln_deriv(&self, z: f64) -> Result<f64> {
        self.check(z, 1)?;
        Ok(match *self {
            WeightFunction::LogSumExp { alpha } => -alpha * z,
            WeightFunction::PowerMean { beta, a } => (beta - 1.0) * (z + a).ln(),
            WeightFunction::Linear => 0.0,
        })
    }

    /// `f''(z)`, needed for the analytic sandwich Jacobian.
    pub fn second_deriv(&self, z: f64) -> Result<f64> {
        self.check(z, 2)?;
        Ok(match *self {
            WeightFunction::LogSumExp { alpha } => -alpha * (-alpha * z).exp(),
            WeightFunction::PowerMean { beta, a } => {
                if beta == 1.0 {
                    0.0
                } else {
                    (beta - 1.0) * (z + a).powf(beta - 2.0)
                }
            }
            WeightFunction::Linear => 0.0,
        })
    }

    /// Constant shift of `f` that is bounded and vanishes at infinity.
    ///
    /// Only log-sum-exp with α > 0 qualifies among the built-in families.
    pub fn shifted_vanishing(&self) -> Result<ShiftedWeight> {
        match *self {
            WeightFunction::LogSumExp { alpha } if alpha > 0.0 => Ok(ShiftedWeight { alpha }),
            other => Err(Error::Unsupported(format!(
                "{other} is not bounded with a finite limit at infinity"
            ))),
        }
    }
}

/// `f̃(z) = -e^{-αz}/α`, i.e. log-sum-exp `f` minus its limit `1/α`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShiftedWeight {
    alpha: f64,
}

impl ShiftedWeight {
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn value(&self, z: f64) -> Result<f64> {
        if !(z >= 0.0) {
            return Err(Error::Domain(format!("weight argument must be >= 0, got {z}")));
        }
        Ok(-(-self.alpha * z).exp() / self.alpha)
    }

    pub fn deriv(&self, z: f64) -> Result<f64> {
        if !(z >= 0.0) {
            return Err(Error::Domain(format!("weight argument must be >= 0, got {z}")));
        }
        Ok((-self.alpha * z).exp())
    }
}

impl fmt::Display for WeightFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            WeightFunction::LogSumExp { alpha } => write!(f, "lse:{alpha}"),
            WeightFunction::PowerMean { beta, a } => write!(f, "pow:{beta},{a}"),
            WeightFunction::Linear => write!(f, "linear"),
        }
    }
}

/// Parses `lse:ALPHA`, `pow:BETA[,A]` or `linear`.
impl FromStr for WeightFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = |what: &str| Error::Parse(format!("invalid weight function '{s}': {what}"));
        if s == "linear" {
            return Ok(WeightFunction::Linear);
        }
        let (kind, rest) = s.split_once(':').ok_or_else(|| bad("expected lse:ALPHA, pow:BETA[,A] or linear"))?;
        let num = |t: &str| t.trim().parse::<f64>().map_err(|_| bad("not a number"));
        match kind {
            "lse" => WeightFunction::log_sum_exp(num(rest)?),
            "pow" => {
                let (beta, a) = match rest.split_once(',') {
                    Some((b, a)) => (num(b)?, num(a)?),
                    None => (num(rest)?, 0.0),
                };
                WeightFunction::power_mean(beta, a)
            }
            _ => Err(bad("unknown family")),
        }
    }
}
