use serde::Serialize;

use super::GeneratorFunction;
use crate::dataset::Dataset;
use crate::divergences::{BregmanDivergence, ScalarConvex};
use crate::error::{Error, Result};
use crate::numerics::{integrate, InverseCdf, QuadratureConfig, RngSeed, Span};

/// Relative agreement required between the two endpoint limits.
const LIMIT_TOLERANCE: f64 = 1e-6;

/// `p(x|θ) = [(φ'(x) − φ'(θ))/(x − θ)] g(d_φ(x, θ)) / C(θ)` on the domain of φ.
#[derive(Debug, Clone)]
pub struct ContinuousBregmanModel {
    phi: ScalarConvex,
    g: GeneratorFunction,
    cfg: QuadratureConfig,
}

/// Limits of `d_φ(x, θ)` at the two domain endpoints (`None` = +∞).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EndpointLimits {
    pub theta: f64,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

impl EndpointLimits {
    /// The common limit ζ (`None` when both diverge).
    pub fn zeta(&self) -> Option<f64> {
        self.lower
    }
}

impl ContinuousBregmanModel {
    pub fn new(phi: ScalarConvex, g: GeneratorFunction, cfg: &QuadratureConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(ContinuousBregmanModel { phi, g, cfg: *cfg })
    }

    pub fn phi(&self) -> &ScalarConvex {
        &self.phi
    }

    pub fn generator(&self) -> &GeneratorFunction {
        &self.g
    }

    pub fn divergence(&self) -> BregmanDivergence {
        BregmanDivergence::CustomScalar(self.phi.clone())
    }

    pub fn domain(&self) -> (f64, f64) {
        self.phi.domain()
    }

    pub fn check_theta(&self, theta: f64) -> Result<()> {
        if self.phi.contains(theta) {
            Ok(())
        } else {
            let (a, b) = self.domain();
            Err(Error::Domain(format!("parameter {theta} outside the domain ({a}, {b})")))
        }
    }

    fn d(&self, x: f64, theta: f64) -> f64 {
        (self.phi.phi(x) - self.phi.phi(theta) - (x - theta) * self.phi.dphi(theta)).max(0.0)
    }

    fn unnormalized(&self, x: f64, theta: f64) -> f64 {
        self.phi.secant_slope(x, theta) * self.g.eval(self.d(x, theta))
    }

    fn span(&self, theta: f64) -> Span {
        let (a, b) = self.domain();
        Span::new(a, b).anchor(theta)
    }

    /// `C(θ)`.
    pub fn normalization_constant(&self, theta: f64) -> Result<f64> {
        self.check_theta(theta)?;
        let q = integrate(|x| self.unnormalized(x, theta), self.span(theta), &self.cfg)?;
        if !q.converged || !(q.value > 0.0) {
            return Err(Error::NotIntegrable(format!(
                "normalization C({theta}) of the continuous Bregman model with φ = {}, g = {} diverges",
                self.phi.name(),
                self.g
            )));
        }
        Ok(q.value)
    }

    /// Zero outside the domain.
    pub fn density(&self, x: f64, theta: f64) -> Result<f64> {
        let c = self.normalization_constant(theta)?;
        Ok(self.density_with_constant(x, theta, c))
    }

    pub(crate) fn density_with_constant(&self, x: f64, theta: f64, constant: f64) -> f64 {
        if !self.phi.contains(x) {
            return 0.0;
        }
        self.unnormalized(x, theta) / constant
    }

    /// Checks that `d_φ(x, θ)` has the same limit (finite or infinite) at both endpoints.
    pub fn endpoint_limits(&self, theta: f64) -> Result<EndpointLimits> {
        self.check_theta(theta)?;
        let (a, b) = self.domain();
        let lower = self.tail_limit(theta, a)?;
        let upper = self.tail_limit(theta, b)?;
        let limits = EndpointLimits { theta, lower, upper };
        match (lower, upper) {
            (None, None) => Ok(limits),
            (Some(l), Some(u)) if (l - u).abs() <= LIMIT_TOLERANCE * l.abs().max(u.abs()).max(f64::MIN_POSITIVE) => Ok(limits),
            (Some(l), Some(u)) => Err(Error::EndpointCondition(format!(
                "at θ = {theta}: limit {u} at upper endpoint b = {b} differs from limit {l} at lower endpoint a = {a}"
            ))),
            (Some(l), None) => Err(Error::EndpointCondition(format!(
                "at θ = {theta}: lower endpoint a = {a} has finite limit {l} while d_φ diverges at b = {b}"
            ))),
            (None, Some(u)) => Err(Error::EndpointCondition(format!(
                "at θ = {theta}: upper endpoint b = {b} has finite limit {u} while d_φ diverges at a = {a}"
            ))),
        }
    }

    /// Runs [`Self::endpoint_limits`] at several interior parameters.
    pub fn verify_endpoint_condition(&self) -> Result<Vec<EndpointLimits>> {
        self.probe_thetas().into_iter().map(|t| self.endpoint_limits(t)).collect()
    }

    fn probe_thetas(&self) -> Vec<f64> {
        let (a, b) = self.domain();
        match (a.is_finite(), b.is_finite()) {
            (true, true) => [0.25, 0.5, 0.7].iter().map(|s| a + s * (b - a)).collect(),
            (true, false) => [0.5, 1.0, 2.5].iter().map(|s| a + s).collect(),
            (false, true) => [0.5, 1.0, 2.5].iter().map(|s| b - s).collect(),
            (false, false) => vec![-1.0, 0.0, 1.5],
        }
    }

    /// Limit of `d_φ(x, θ)` as `x` approaches `end` along a geometric sequence:
    /// `Some(value)` when it stabilizes, `None` when it keeps increasing.
    fn tail_limit(&self, theta: f64, end: f64) -> Result<Option<f64>> {
        let scale = theta.abs().max(1.0);
        let steps = if end.is_finite() { 50 } else { 60 };
        let mut seq = Vec::with_capacity(steps);
        for m in 1..=steps {
            let x = if end.is_infinite() {
                theta + end.signum() * scale * (m as f64).exp2()
            } else {
                end + (theta - end) * (-(m as f64)).exp2()
            };
            if !self.phi.contains(x) {
                break;
            }
            let d = self.d(x, theta);
            if d.is_infinite() {
                return Ok(None);
            }
            if d.is_nan() {
                return Err(Error::EndpointCondition(format!("d_φ undefined near endpoint {end} (x = {x})")));
            }
            seq.push(d);
        }
        let n = seq.len();
        if n < 6 {
            return Err(Error::EndpointCondition(format!("cannot approach endpoint {end} from θ = {theta}")));
        }
        let (last, earlier) = (seq[n - 1], seq[n - 6]);
        if (last - earlier).abs() <= LIMIT_TOLERANCE * last.abs().max(f64::MIN_POSITIVE) {
            Ok(Some(last))
        } else if last > earlier {
            Ok(None)
        } else {
            Err(Error::EndpointCondition(format!("d_φ has no monotone limit at endpoint {end}")))
        }
    }

    pub fn sample(&self, theta: f64, n: usize, seed: RngSeed) -> Result<Dataset> {
        self.check_theta(theta)?;
        if n == 0 {
            return Ok(Dataset::from_scalars(Vec::new()));
        }
        let table = InverseCdf::build(|x| self.unnormalized(x, theta), self.span(theta), &self.cfg)?;
        Ok(Dataset::from_scalars(table.sample(n, seed)))
    }
}
