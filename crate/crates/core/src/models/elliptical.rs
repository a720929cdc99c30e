use nalgebra::{DMatrix, DVector};
use statrs::function::gamma::ln_gamma;

use super::GeneratorFunction;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::numerics::{sample_unit_sphere, InverseCdf, QuadratureConfig, RngSeed, Span};

/// Largest accepted condition number of the shape matrix `A`.
const MAX_CONDITION: f64 = 1e12;

/// `p(x|θ) = g((x−θ)ᵀA(x−θ)) / C` on ℝ^d.
#[derive(Debug, Clone)]
pub struct EllipticalModel {
    g: GeneratorFunction,
    a: DMatrix<f64>,
    inv_sqrt_a: DMatrix<f64>,
    constant: f64,
    radial: InverseCdf,
}

impl EllipticalModel {
    /// Builds the model, computing `C` through the radial integral
    /// `C = det(A)^{-1/2} |S^{d-1}| ∫₀^∞ g(r²) r^{d-1} dr`.
    pub fn new(g: GeneratorFunction, a: DMatrix<f64>, cfg: &QuadratureConfig) -> Result<Self> {
        let d = a.nrows();
        if d == 0 || a.ncols() != d {
            return Err(Error::InvalidParameter(format!("shape matrix must be square, got {}x{}", a.nrows(), a.ncols())));
        }
        if (&a - a.transpose()).abs().max() > 1e-12 * a.abs().max().max(1.0) {
            return Err(Error::InvalidParameter("shape matrix must be symmetric".into()));
        }
        let eig = a.clone().symmetric_eigen();
        let (lo, hi) = (eig.eigenvalues.min(), eig.eigenvalues.max());
        if lo <= 0.0 {
            return Err(Error::InvalidParameter("shape matrix must be positive definite".into()));
        }
        if hi / lo > MAX_CONDITION {
            return Err(Error::InvalidParameter(format!(
                "shape matrix condition number {:e} exceeds {MAX_CONDITION:e}",
                hi / lo
            )));
        }
        let inv_sqrt = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()));
        let inv_sqrt_a = &eig.eigenvectors * inv_sqrt * eig.eigenvectors.transpose();
        let log_det: f64 = eig.eigenvalues.iter().map(|l| l.ln()).sum();

        let dm1 = (d - 1) as i32;
        let gg = g.clone();
        let radial = InverseCdf::build(move |r: f64| gg.eval(r * r) * r.powi(dm1), Span::semi_infinite(), cfg)
            .map_err(|e| match e {
                Error::NotIntegrable(_) => Error::NotIntegrable(format!("radial density g(r²) r^{dm1} of {g} diverges")),
                other => other,
            })?;
        let half_d = d as f64 / 2.0;
        let log_sphere = std::f64::consts::LN_2 + half_d * std::f64::consts::PI.ln() - ln_gamma(half_d);
        let constant = (log_sphere - 0.5 * log_det).exp() * radial.total_mass();
        Ok(EllipticalModel { g, a, inv_sqrt_a, constant, radial })
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn generator(&self) -> &GeneratorFunction {
        &self.g
    }

    pub fn shape(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn normalization_constant(&self) -> f64 {
        self.constant
    }

    pub fn mahalanobis(&self, x: &[f64], theta: &[f64]) -> f64 {
        let d = self.dim();
        let mut acc = 0.0;
        for i in 0..d {
            let mut row = 0.0;
            for j in 0..d {
                row += self.a[(i, j)] * (x[j] - theta[j]);
            }
            acc += (x[i] - theta[i]) * row;
        }
        acc.max(0.0)
    }

    pub fn density(&self, x: &[f64], theta: &[f64]) -> Result<f64> {
        self.check(x, theta)?;
        Ok(self.g.eval(self.mahalanobis(x, theta)) / self.constant)
    }

    fn check(&self, x: &[f64], theta: &[f64]) -> Result<()> {
        let d = self.dim();
        if theta.len() != d || theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::Domain(format!("parameter must be a finite point of dimension {d}")));
        }
        if x.len() != d {
            return Err(Error::Domain(format!("point must have dimension {d}, got {}", x.len())));
        }
        Ok(())
    }

    /// `x = θ + R A^{-1/2} U` with `U` uniform on the sphere and `R` from the
    /// radial density `∝ g(r²) r^{d-1}`, so `(x−θ)ᵀA(x−θ) = R²`.
    pub fn sample(&self, theta: &[f64], n: usize, seed: RngSeed) -> Result<Dataset> {
        let d = self.dim();
        if theta.len() != d || theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::Domain(format!("parameter must be a finite point of dimension {d}")));
        }
        let radii = self.radial.sample(n, seed.derive(0));
        let dirs = sample_unit_sphere(d, n, seed.derive(1))?;
        let mut values = Vec::with_capacity(n * d);
        for (r, u) in radii.into_iter().zip(dirs) {
            let y = &self.inv_sqrt_a * DVector::from_vec(u) * r;
            values.extend(theta.iter().zip(y.iter()).map(|(t, v)| t + v));
        }
        Dataset::new(d, values)
    }
}
