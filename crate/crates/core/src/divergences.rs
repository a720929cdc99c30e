//! Bregman divergences `d_φ(x, θ) = φ(x) − φ(θ) − ⟨x − θ, ∇φ(θ)⟩`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A strictly convex scalar function with its first two derivatives on an
/// open interval `(lower, upper)`.
#[derive(Clone)]
pub struct ScalarConvex {
    name: String,
    phi: ScalarFn,
    dphi: ScalarFn,
    d2phi: ScalarFn,
    lower: f64,
    upper: f64,
}

impl ScalarConvex {
    pub fn new(
        name: impl Into<String>,
        phi: impl Fn(f64) -> f64 + Send + Sync + 'static,
        dphi: impl Fn(f64) -> f64 + Send + Sync + 'static,
        d2phi: impl Fn(f64) -> f64 + Send + Sync + 'static,
        lower: f64,
        upper: f64,
    ) -> Result<Self> {
        if !(lower < upper) {
            return Err(Error::InvalidParameter(format!("empty domain ({lower}, {upper})")));
        }
        Ok(ScalarConvex {
            name: name.into(),
            phi: Arc::new(phi),
            dphi: Arc::new(dphi),
            d2phi: Arc::new(d2phi),
            lower,
            upper,
        })
    }

    /// `φ(x) = x²` on ℝ.
    pub fn squared() -> Self {
        Self::squared_on(f64::NEG_INFINITY, f64::INFINITY).expect("valid domain")
    }

    /// `φ(x) = x²` restricted to `(lower, upper)`.
    pub fn squared_on(lower: f64, upper: f64) -> Result<Self> {
        ScalarConvex::new("sq", |x| x * x, |x| 2.0 * x, |_| 2.0, lower, upper)
    }

    /// `φ(x) = −ln x` on (0, ∞); generates the Itakura-Saito distance.
    pub fn neg_log() -> Self {
        ScalarConvex::new("neglog", |x: f64| -x.ln(), |x| -1.0 / x, |x| 1.0 / (x * x), 0.0, f64::INFINITY)
            .expect("valid domain")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.lower, self.upper)
    }

    pub fn contains(&self, x: f64) -> bool {
        x > self.lower && x < self.upper
    }

    pub fn phi(&self, x: f64) -> f64 {
        (self.phi)(x)
    }

    pub fn dphi(&self, x: f64) -> f64 {
        (self.dphi)(x)
    }

    pub fn d2phi(&self, x: f64) -> f64 {
        (self.d2phi)(x)
    }

    /// `(φ'(x) − φ'(θ))/(x − θ)`, with the `x → θ` limit handled by the
    /// second derivative at the midpoint.
    pub fn secant_slope(&self, x: f64, theta: f64) -> f64 {
        let h = x - theta;
        if h.abs() <= 1e-6 * (1.0 + theta.abs()) {
            self.d2phi(0.5 * (x + theta))
        } else {
            (self.dphi(x) - self.dphi(theta)) / h
        }
    }

    fn divergence(&self, x: f64, theta: f64) -> f64 {
        (self.phi(x) - self.phi(theta) - (x - theta) * self.dphi(theta)).max(0.0)
    }
}

impl fmt::Debug for ScalarConvex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarConvex")
            .field("name", &self.name)
            .field("domain", &(self.lower, self.upper))
            .finish()
    }
}

/// Bregman divergence families.
#[derive(Debug, Clone)]
pub enum BregmanDivergence {
    /// `φ(x) = ‖x‖²`, so `d = ‖x − θ‖²`.
    SquaredEuclidean,
    /// `φ(x) = xᵀAx`, so `d = (x − θ)ᵀA(x − θ)` and the Hessian is `2A`.
    Mahalanobis(DMatrix<f64>),
    /// `φ(x) = −ln x` on (0, ∞): `d = x/θ − ln(x/θ) − 1`.
    ItakuraSaito,
    CustomScalar(ScalarConvex),
}

impl BregmanDivergence {
    pub fn mahalanobis(a: DMatrix<f64>) -> Result<Self> {
        if a.nrows() != a.ncols() || a.nrows() == 0 {
            return Err(Error::InvalidParameter(format!(
                "Mahalanobis matrix must be square and non-empty, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        let asym = (&a - a.transpose()).abs().max();
        if asym > 1e-12 * a.abs().max().max(1.0) {
            return Err(Error::InvalidParameter("Mahalanobis matrix must be symmetric".into()));
        }
        let eig = a.clone().symmetric_eigen();
        if eig.eigenvalues.min() <= 0.0 {
            return Err(Error::InvalidParameter("Mahalanobis matrix must be positive definite".into()));
        }
        Ok(BregmanDivergence::Mahalanobis(a))
    }

    /// Fixed dimension of the divergence, if any.
    pub fn dim(&self) -> Option<usize> {
        match self {
            BregmanDivergence::SquaredEuclidean => None,
            BregmanDivergence::Mahalanobis(a) => Some(a.nrows()),
            BregmanDivergence::ItakuraSaito | BregmanDivergence::CustomScalar(_) => Some(1),
        }
    }

    /// Scalar domain `(lower, upper)`; ℝ for the quadratic families.
    pub fn scalar_domain(&self) -> (f64, f64) {
        match self {
            BregmanDivergence::SquaredEuclidean | BregmanDivergence::Mahalanobis(_) => {
                (f64::NEG_INFINITY, f64::INFINITY)
            }
            BregmanDivergence::ItakuraSaito => (0.0, f64::INFINITY),
            BregmanDivergence::CustomScalar(c) => c.domain(),
        }
    }

    /// Validates that `x` is a point of the domain.
    pub fn check_point(&self, x: &[f64]) -> Result<()> {
        if let Some(d) = self.dim() {
            if x.len() != d {
                return Err(Error::Domain(format!("expected a point of dimension {d}, got {}", x.len())));
            }
        }
        if x.is_empty() {
            return Err(Error::Domain("empty point".into()));
        }
        if let Some(bad) = x.iter().find(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite coordinate {bad}")));
        }
        match self {
            BregmanDivergence::ItakuraSaito if x[0] <= 0.0 => Err(Error::Domain(format!(
                "Itakura-Saito divergence requires positive values, got {}",
                x[0]
            ))),
            BregmanDivergence::CustomScalar(c) if !c.contains(x[0]) => {
                let (lo, hi) = c.domain();
                Err(Error::Domain(format!("{} outside the domain ({lo}, {hi}) of φ = {}", x[0], c.name())))
            }
            _ => Ok(()),
        }
    }

    fn check_pair(&self, x: &[f64], theta: &[f64]) -> Result<()> {
        if x.len() != theta.len() {
            return Err(Error::Domain(format!(
                "dimension mismatch: point has {} coordinates, parameter has {}",
                x.len(),
                theta.len()
            )));
        }
        self.check_point(x)?;
        self.check_point(theta)
    }

    /// `d_φ(x, θ)`.
    pub fn eval(&self, x: &[f64], theta: &[f64]) -> Result<f64> {
        self.check_pair(x, theta)?;
        Ok(self.eval_unchecked(x, theta))
    }

    /// `d_φ(x, θ)` for points already known to be in the domain.
    pub(crate) fn eval_unchecked(&self, x: &[f64], theta: &[f64]) -> f64 {
        match self {
            BregmanDivergence::SquaredEuclidean => x.iter().zip(theta).map(|(a, b)| (a - b) * (a - b)).sum(),
            BregmanDivergence::Mahalanobis(a) => quadratic_form(a, x, theta),
            BregmanDivergence::ItakuraSaito => itakura_saito(x[0], theta[0]),
            BregmanDivergence::CustomScalar(c) => c.divergence(x[0], theta[0]),
        }
    }

    /// `∂d_φ(x, θ)/∂θ = −∇∇φ(θ)(x − θ)`.
    pub fn grad_theta(&self, x: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
        self.check_pair(x, theta)?;
        Ok(match self {
            BregmanDivergence::SquaredEuclidean => x.iter().zip(theta).map(|(a, b)| -2.0 * (a - b)).collect(),
            BregmanDivergence::Mahalanobis(a) => {
                let diff = DVector::from_iterator(x.len(), x.iter().zip(theta).map(|(a, b)| a - b));
                (a * diff * -2.0).iter().copied().collect()
            }
            BregmanDivergence::ItakuraSaito => vec![(theta[0] - x[0]) / (theta[0] * theta[0])],
            BregmanDivergence::CustomScalar(c) => vec![-c.d2phi(theta[0]) * (x[0] - theta[0])],
        })
    }

    /// `∇φ(θ)`.
    pub fn grad_phi(&self, theta: &[f64]) -> Result<Vec<f64>> {
        self.check_point(theta)?;
        Ok(match self {
            BregmanDivergence::SquaredEuclidean => theta.iter().map(|t| 2.0 * t).collect(),
            BregmanDivergence::Mahalanobis(a) => {
                let t = DVector::from_column_slice(theta);
                (a * t * 2.0).iter().copied().collect()
            }
            BregmanDivergence::ItakuraSaito => vec![-1.0 / theta[0]],
            BregmanDivergence::CustomScalar(c) => vec![c.dphi(theta[0])],
        })
    }

    /// `∇∇φ(θ)`.
    pub fn hessian(&self, theta: &[f64]) -> Result<DMatrix<f64>> {
        self.check_point(theta)?;
        Ok(match self {
            BregmanDivergence::SquaredEuclidean => DMatrix::identity(theta.len(), theta.len()) * 2.0,
            BregmanDivergence::Mahalanobis(a) => a * 2.0,
            BregmanDivergence::ItakuraSaito => DMatrix::from_element(1, 1, 1.0 / (theta[0] * theta[0])),
            BregmanDivergence::CustomScalar(c) => DMatrix::from_element(1, 1, c.d2phi(theta[0])),
        })
    }

    pub fn name(&self) -> String {
        match self {
            BregmanDivergence::SquaredEuclidean => "sq".into(),
            BregmanDivergence::Mahalanobis(_) => "mahalanobis".into(),
            BregmanDivergence::ItakuraSaito => "is".into(),
            BregmanDivergence::CustomScalar(c) => format!("custom:{}", c.name()),
        }
    }
}

/// `x/θ − ln(x/θ) − 1`, clamped at zero against rounding.
pub fn itakura_saito(x: f64, theta: f64) -> f64 {
    let r = x / theta;
    (r - r.ln() - 1.0).max(0.0)
}

fn quadratic_form(a: &DMatrix<f64>, x: &[f64], theta: &[f64]) -> f64 {
    let d = x.len();
    let mut acc = 0.0;
    for i in 0..d {
        let di = x[i] - theta[i];
        let mut row = 0.0;
        for j in 0..d {
            row += a[(i, j)] * (x[j] - theta[j]);
        }
        acc += di * row;
    }
    acc.max(0.0)
}
