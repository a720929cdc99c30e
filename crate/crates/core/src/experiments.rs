//! Contamination experiments: data drawn from `(1−ε) p(x|θ*) + ε c(x)`.
//!
//! The latent bias `θ̃ − θ*` is approximated by averaging estimates over
//! seeded replications; [`population_fixed_point`] solves the population
//! estimating equation by quadrature as a cross-check.

use rand::RngExt;
use rayon::prelude::*;
use serde::Serialize;

use crate::analysis::{check_theorem1, check_theorem2, check_theorem4};
use crate::dataset::Dataset;
use crate::divergences::BregmanDivergence;
use crate::error::{Error, Result};
use crate::estimator::{estimate, EstimatorConfig};
use crate::expectation::expect;
use crate::models::{GeneratorFunction, ISModel, ModelFamily};
use crate::numerics::{QuadratureConfig, RngSeed};
use crate::weights::WeightFunction;

#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
pub enum Contaminant {
    Model { model: ModelFamily, theta: Vec<f64> },
    PointMass(Vec<f64>),
}

#[derive(Debug, Clone)]
pub struct ContaminationSpec {
    epsilon: f64,
    target: ModelFamily,
    theta_star: Vec<f64>,
    contaminant: Contaminant,
}

const INDICATOR_STREAM: u64 = 0;
const CONTAMINANT_STREAM: u64 = 1;

impl ContaminationSpec {
    /// Validates ε ∈ [0, 1], the parameters, and that every contaminant point
    /// lies in the target support.
    pub fn new(epsilon: f64, target: ModelFamily, theta_star: Vec<f64>, contaminant: Contaminant) -> Result<Self> {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::InvalidParameter(format!("ε must lie in [0, 1], got {epsilon}")));
        }
        target.check_theta(&theta_star)?;
        let d = target.dim();
        match &contaminant {
            Contaminant::PointMass(x) => {
                if x.len() != d || x.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidParameter(format!("point mass must be a finite point of dimension {d}")));
                }
                if d == 1 {
                    let (a, b) = target.scalar_support();
                    if !(a < x[0] && x[0] < b) {
                        return Err(Error::Domain(format!("contaminant point {} lies outside the target support ({a}, {b})", x[0])));
                    }
                }
            }
            Contaminant::Model { model, theta } => {
                if model.dim() != d {
                    return Err(Error::InvalidParameter("contaminant and target dimensions differ".into()));
                }
                model.check_theta(theta)?;
                if d == 1 {
                    let (a, b) = target.scalar_support();
                    let (ca, cb) = model.scalar_support();
                    if ca < a || cb > b {
                        return Err(Error::Domain(format!(
                            "contaminant support ({ca}, {cb}) is not inside the target support ({a}, {b})"
                        )));
                    }
                }
            }
        }
        Ok(ContaminationSpec { epsilon, target, theta_star, contaminant })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn target(&self) -> &ModelFamily {
        &self.target
    }

    pub fn theta_star(&self) -> &[f64] {
        &self.theta_star
    }

    pub fn contaminant(&self) -> &Contaminant {
        &self.contaminant
    }
}

/// Each point comes from the contaminant with probability ε, else from the
/// target. The target stream uses `seed` itself, so ε = 0 reproduces plain
/// target sampling.
pub fn sample_contaminated(spec: &ContaminationSpec, n: usize, seed: RngSeed) -> Result<Dataset> {
    let d = spec.target.dim();
    let mut rng = seed.derive(INDICATOR_STREAM).rng();
    let from_contaminant: Vec<bool> = (0..n).map(|_| rng.random::<f64>() < spec.epsilon).collect();
    let n_c = from_contaminant.iter().filter(|c| **c).count();
    let target = spec.target.sample(&spec.theta_star, n - n_c, seed)?;
    let contaminated = match &spec.contaminant {
        Contaminant::Model { model, theta } => model.sample(theta, n_c, seed.derive(CONTAMINANT_STREAM))?,
        Contaminant::PointMass(x) => Dataset::new(d, x.repeat(n_c))?,
    };
    let (mut t, mut c) = (target.rows(), contaminated.rows());
    let mut values = Vec::with_capacity(n * d);
    for flag in from_contaminant {
        let row = if flag { c.next() } else { t.next() };
        values.extend_from_slice(row.expect("stream sizes match indicators"));
    }
    Dataset::new(d, values)
}

/// `E_c[f̃(d_φ(X, θ*))]` with the shifted weight `f̃` that vanishes at infinity.
pub fn nu_f(spec: &ContaminationSpec, w: &WeightFunction, div: &BregmanDivergence, cfg: &QuadratureConfig) -> Result<f64> {
    let shifted = w.shifted_vanishing()?;
    let theta_star = &spec.theta_star;
    match &spec.contaminant {
        Contaminant::PointMass(x) => shifted.value(div.eval(x, theta_star)?),
        Contaminant::Model { model, theta } => {
            let region = (model.dim() == 1).then(|| div.scalar_domain());
            let m = expect(
                model,
                theta,
                region,
                1,
                |x, _| match div.eval(x, theta_star).map(|z| shifted.value(z)) {
                    Ok(Ok(v)) => v,
                    _ => f64::NAN,
                },
                cfg,
                RngSeed(0x6e75_665f),
            )?;
            Ok(m.values[0])
        }
    }
}

/// `(E_c[p(X|θ*)^{γ₀}])^{1/γ₀}`; a point mass gives `p(x₀|θ*)` directly.
pub fn nu_p(spec: &ContaminationSpec, gamma0: f64, cfg: &QuadratureConfig) -> Result<f64> {
    if !(gamma0 > 0.0 && gamma0.is_finite()) {
        return Err(Error::InvalidParameter(format!("γ₀ must be positive, got {gamma0}")));
    }
    match &spec.contaminant {
        Contaminant::PointMass(x) => spec.target.density(x, &spec.theta_star),
        Contaminant::Model { model, theta } => {
            let target = spec.target.density_fn(&spec.theta_star)?;
            let m = expect(model, theta, None, 1, |x, _| target(x).powf(gamma0), cfg, RngSeed(0x6e75_705f))?;
            Ok(m.values[0].powf(1.0 / gamma0))
        }
    }
}

/// Runs the unbiasedness check that matches the target family.
fn require_unbiased(target: &ModelFamily, w: &WeightFunction, cfg: &QuadratureConfig) -> Result<()> {
    let verdict = match target {
        ModelFamily::Elliptical(m) => check_theorem1(m.generator(), w, m.dim(), cfg)?,
        ModelFamily::ItakuraSaito(m) => check_theorem2(m.generator(), w, cfg)?,
        ModelFamily::ContinuousBregman(m) => check_theorem4(m, w, cfg)?,
    };
    if verdict.finite {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "weight {w} fails the unbiasedness condition for the target model ({})",
            verdict.diagnostics
        )))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    /// Tuning parameter of the weight function.
    pub alpha: f64,
    /// Average of `θ̂ − θ*` over successful replications.
    pub mean_bias: f64,
    pub sd_bias: f64,
    /// `None` when the weight has no vanishing shift.
    pub nu_f: Option<f64>,
    pub failures: usize,
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 { values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, var.sqrt())
}

/// Estimates θ on `replications` contaminated datasets of size `n` for each
/// weight. Replication `r` uses `seed.derive(r)` and the same dataset is
/// shared by all weights. Scalar targets only.
#[allow(clippy::too_many_arguments)]
pub fn latent_bias_sweep(
    spec: &ContaminationSpec,
    div: &BregmanDivergence,
    weights: &[WeightFunction],
    n: usize,
    replications: usize,
    seed: RngSeed,
    est_cfg: &EstimatorConfig,
    cfg: &QuadratureConfig,
) -> Result<Vec<SweepRow>> {
    if spec.target.dim() != 1 {
        return Err(Error::Unsupported("latent-bias sweeps support scalar targets only".into()));
    }
    if n == 0 || replications == 0 {
        return Err(Error::InvalidParameter("n and replications must be >= 1".into()));
    }
    for w in weights {
        require_unbiased(&spec.target, w, cfg)?;
    }
    let theta_star = spec.theta_star[0];
    let per_rep: Vec<Vec<Option<f64>>> = (0..replications as u64)
        .into_par_iter()
        .map(|r| -> Result<Vec<Option<f64>>> {
            let data = sample_contaminated(spec, n, seed.derive(r))?;
            Ok(weights
                .iter()
                .map(|w| estimate(&data, div, w, est_cfg).ok().map(|e| e.theta_hat[0] - theta_star))
                .collect())
        })
        .collect::<Result<_>>()?;

    weights
        .iter()
        .enumerate()
        .map(|(i, w)| {
            let biases: Vec<f64> = per_rep.iter().filter_map(|rep| rep[i]).collect();
            let (mean_bias, sd_bias) = mean_sd(&biases);
            let nu = match nu_f(spec, w, div, cfg) {
                Ok(v) => Some(v),
                Err(Error::Unsupported(_)) => None,
                Err(e) => return Err(e),
            };
            Ok(SweepRow { alpha: w.tuning(), mean_bias, sd_bias, nu_f: nu, failures: replications - biases.len() })
        })
        .collect()
}

/// Writes rows under the header `alpha,mean_bias,sd_bias,nu_f,failures`.
pub fn write_sweep_csv<W: std::io::Write>(rows: &[SweepRow], writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(["alpha", "mean_bias", "sd_bias", "nu_f", "failures"])?;
    for r in rows {
        out.write_record([
            r.alpha.to_string(),
            r.mean_bias.to_string(),
            r.sd_bias.to_string(),
            r.nu_f.map_or(String::new(), |v| v.to_string()),
            r.failures.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Solves `E_p̃[f'(d_φ(X, θ)) (X − θ)] = 0` for a scalar target by iterating
/// the population weighted mean from θ*.
pub fn population_fixed_point(
    spec: &ContaminationSpec,
    w: &WeightFunction,
    div: &BregmanDivergence,
    cfg: &QuadratureConfig,
) -> Result<f64> {
    if spec.target.dim() != 1 {
        return Err(Error::Unsupported("population fixed point supports scalar targets only".into()));
    }
    let eps = spec.epsilon;
    let moments = |model: &ModelFamily, at: &[f64], theta: f64| -> Result<(f64, f64)> {
        let region = Some(div.scalar_domain());
        let m = expect(
            model,
            at,
            region,
            2,
            |x, c| match div.eval(x, &[theta]).map(|z| w.deriv(z)) {
                Ok(Ok(f1)) => if c == 0 { f1 } else { f1 * x[0] },
                _ => f64::NAN,
            },
            cfg,
            RngSeed(0),
        )?;
        Ok((m.values[0], m.values[1]))
    };
    let mut theta = spec.theta_star[0];
    for _ in 0..500 {
        let (mut w0, mut w1) = if eps < 1.0 { moments(&spec.target, &spec.theta_star, theta)? } else { (0.0, 0.0) };
        w0 *= 1.0 - eps;
        w1 *= 1.0 - eps;
        if eps > 0.0 {
            let (c0, c1) = match &spec.contaminant {
                Contaminant::PointMass(x) => {
                    let f1 = w.deriv(div.eval(x, &[theta])?)?;
                    (f1, f1 * x[0])
                }
                Contaminant::Model { model, theta: tc } => moments(model, tc, theta)?,
            };
            w0 += eps * c0;
            w1 += eps * c1;
        }
        if !(w0 > 0.0) {
            return Err(Error::DegenerateWeights { sum: w0 });
        }
        let next = w1 / w0;
        if (next - theta).abs() <= 1e-12 * (1.0 + theta.abs()) {
            return Ok(next);
        }
        theta = next;
    }
    Err(Error::Quadrature("population fixed point did not converge in 500 iterations".into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SmallInlierResult {
    pub bias_fsep: f64,
    pub bias_mle: f64,
    pub failures: usize,
}

/// Exponential(θ*) data contaminated by a point mass at `inlier_location`,
/// estimated with the IS divergence under `LogSumExp(α)` and under the MLE
/// (the sample mean).
#[allow(clippy::too_many_arguments)]
pub fn small_inlier_experiment(
    theta_star: f64,
    inlier_location: f64,
    epsilon: f64,
    alpha: f64,
    n: usize,
    replications: usize,
    seed: RngSeed,
    cfg: &QuadratureConfig,
) -> Result<SmallInlierResult> {
    if !(inlier_location > 0.0 && inlier_location < theta_star) {
        return Err(Error::InvalidParameter(format!(
            "inlier location must lie in (0, θ*) = (0, {theta_star}), got {inlier_location}"
        )));
    }
    let target: ModelFamily = ISModel::new(GeneratorFunction::exponential(1.0)?, cfg)?.into();
    let spec = ContaminationSpec::new(epsilon, target, vec![theta_star], Contaminant::PointMass(vec![inlier_location]))?;
    let weights = [WeightFunction::log_sum_exp(alpha)?, WeightFunction::Linear];
    let est_cfg = EstimatorConfig { n_starts: 3, ..EstimatorConfig::default() };
    let rows = latent_bias_sweep(&spec, &BregmanDivergence::ItakuraSaito, &weights, n, replications, seed, &est_cfg, cfg)?;
    Ok(SmallInlierResult {
        bias_fsep: rows[0].mean_bias,
        bias_mle: rows[1].mean_bias,
        failures: rows[0].failures + rows[1].failures,
    })
}
