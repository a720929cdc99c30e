use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Density shape `g: ℝ₊ → ℝ₊` applied to a divergence.
#[derive(Clone)]
pub enum GeneratorFunction {
    /// `g(z) = e^{-kz}`; gamma shape `k` under the Itakura-Saito model.
    Exponential { k: f64 },
    /// `g(z) = e^{-z/2}`.
    GaussianShape,
    /// `g(z) = (1 + z/ν)^{-(ν+d)/2}`.
    StudentShape { nu: f64, dim: usize },
    Custom { name: String, g: Arc<dyn Fn(f64) -> f64 + Send + Sync> },
}

impl GeneratorFunction {
    pub fn exponential(k: f64) -> Result<Self> {
        if !(k > 0.0) || !k.is_finite() {
            return Err(Error::InvalidParameter(format!("exponential generator needs k > 0, got {k}")));
        }
        Ok(GeneratorFunction::Exponential { k })
    }

    pub fn student(nu: f64, dim: usize) -> Result<Self> {
        if !(nu > 0.0) || !nu.is_finite() || dim == 0 {
            return Err(Error::InvalidParameter(format!(
                "Student generator needs nu > 0 and dim >= 1, got nu={nu}, dim={dim}"
            )));
        }
        Ok(GeneratorFunction::StudentShape { nu, dim })
    }

    pub fn custom(name: impl Into<String>, g: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        GeneratorFunction::Custom { name: name.into(), g: Arc::new(g) }
    }

    #[inline]
    pub fn eval(&self, z: f64) -> f64 {
        match self {
            GeneratorFunction::Exponential { k } => (-k * z).exp(),
            GeneratorFunction::GaussianShape => (-0.5 * z).exp(),
            GeneratorFunction::StudentShape { nu, dim } => (1.0 + z / nu).powf(-(nu + *dim as f64) / 2.0),
            GeneratorFunction::Custom { g, .. } => g(z),
        }
    }

    /// `ln g(z)`, finite where `g(z)` underflows.
    pub fn ln_eval(&self, z: f64) -> f64 {
        match self {
            GeneratorFunction::Exponential { k } => -k * z,
            GeneratorFunction::GaussianShape => -0.5 * z,
            GeneratorFunction::StudentShape { nu, dim } => -(nu + *dim as f64) / 2.0 * (z / nu).ln_1p(),
            GeneratorFunction::Custom { g, .. } => g(z).ln(),
        }
    }
}

impl fmt::Debug for GeneratorFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "GeneratorFunction({self})")
    }
}

impl fmt::Display for GeneratorFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GeneratorFunction::Exponential { k } => write!(f, "exp:{k}"),
            GeneratorFunction::GaussianShape => write!(f, "gauss"),
            GeneratorFunction::StudentShape { nu, dim } => write!(f, "student:{nu},{dim}"),
            GeneratorFunction::Custom { name, .. } => write!(f, "custom:{name}"),
        }
    }
}

/// Parses `exp:K`, `gauss` or `student:NU[,D]` (D defaults to 1).
impl FromStr for GeneratorFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = |what: &str| Error::Parse(format!("invalid generator '{s}': {what}"));
        if s == "gauss" {
            return Ok(GeneratorFunction::GaussianShape);
        }
        let (kind, rest) = s.split_once(':').ok_or_else(|| bad("expected exp:K, gauss or student:NU"))?;
        match kind {
            "exp" => GeneratorFunction::exponential(rest.trim().parse().map_err(|_| bad("K is not a number"))?),
            "student" => {
                let (nu, dim) = match rest.split_once(',') {
                    Some((nu, d)) => (nu, d.trim().parse().map_err(|_| bad("D is not an integer"))?),
                    None => (rest, 1),
                };
                GeneratorFunction::student(nu.trim().parse().map_err(|_| bad("NU is not a number"))?, dim)
            }
            _ => Err(bad("unknown family")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn values() {
        assert_eq!(GeneratorFunction::exponential(2.0).unwrap().eval(0.5), (-1.0f64).exp());
        assert_eq!(GeneratorFunction::GaussianShape.eval(2.0), (-1.0f64).exp());
        assert_eq!(GeneratorFunction::student(1.0, 1).unwrap().eval(1.0), 0.5);
    }

    #[test]
    fn parsing() {
        assert!(matches!("exp:1.5".parse::<GeneratorFunction>().unwrap(), GeneratorFunction::Exponential { k } if k == 1.5));
        assert!(matches!("student:3".parse::<GeneratorFunction>().unwrap(), GeneratorFunction::StudentShape { nu, dim: 1 } if nu == 3.0));
        assert!(matches!("student:3,2".parse::<GeneratorFunction>().unwrap(), GeneratorFunction::StudentShape { dim: 2, .. }));
        assert!("exp:-1".parse::<GeneratorFunction>().is_err());
        assert!("laplace".parse::<GeneratorFunction>().is_err());
    }
}
