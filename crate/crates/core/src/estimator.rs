//! Minimizes `L_f(θ) = (1/n) Σ f(d_φ(x_i, θ))` by iteratively reweighted
//! averaging.
//!
//! The estimating equation is `Σ f'(d_φ(x_i, θ)) ∇∇φ(θ)(θ − x_i) = 0`, and
//! the positive-definite Hessian factors out, so its roots are the fixed
//! points of `θ ↦ Σ w_i x_i / Σ w_i` with `w_i = f'(d_φ(x_i, θ))`. For
//! concave `f` each step is a majorize-minimize step; for convex `f` the
//! iteration may oscillate and `damping < 1` helps.

use rand::RngExt;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::divergences::BregmanDivergence;
use crate::error::{Error, Result};
use crate::numerics::RngSeed;
use crate::weights::WeightFunction;

/// How the first start of the iteration is chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum InitStrategy {
    SampleMean,
    CoordinateMedian,
    Provided(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    /// Threshold on the normalized residual, relative to `1 + ‖θ‖`.
    pub tol: f64,
    pub max_iter: usize,
    pub n_starts: usize,
    pub init_strategy: InitStrategy,
    pub damping: f64,
    /// Seed for choosing data points as extra starts.
    pub seed: RngSeed,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            tol: 1e-10,
            max_iter: 500,
            n_starts: 5,
            init_strategy: InitStrategy::SampleMean,
            damping: 1.0,
            seed: RngSeed(0),
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidParameter(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 || self.n_starts == 0 {
            return Err(Error::InvalidParameter("max_iter and n_starts must be >= 1".into()));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::InvalidParameter(format!("damping must lie in (0, 1], got {}", self.damping)));
        }
        Ok(())
    }
}

/// Output of [`estimate`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateResult {
    pub theta_hat: Vec<f64>,
    /// `L_f(θ̂)`.
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// `‖Σ w_i (x_i − θ̂)‖ / Σ w_i`.
    pub residual: f64,
    /// Final weights `f'(d_φ(x_i, θ̂))`.
    #[serde(skip)]
    pub weights: Vec<f64>,
}

/// Checks every row against the divergence domain; errors name the 1-based row.
pub fn validate_data(data: &Dataset, div: &BregmanDivergence) -> Result<()> {
    for (i, row) in data.rows().enumerate() {
        div.check_point(row).map_err(|e| Error::Domain(format!("row {}: {}", i + 1, inner_message(e))))?;
    }
    Ok(())
}

fn check_theta(data: &Dataset, div: &BregmanDivergence, theta: &[f64]) -> Result<()> {
    if theta.len() != data.dim() {
        return Err(Error::Domain(format!(
            "parameter has dimension {}, data has {}",
            theta.len(),
            data.dim()
        )));
    }
    div.check_point(theta).map_err(|e| Error::Domain(format!("parameter: {}", inner_message(e))))
}

fn inner_message(e: Error) -> String {
    match e {
        Error::Domain(m) => m,
        other => other.to_string(),
    }
}

/// `L_f(θ) = (1/n) Σ f(d_φ(x_i, θ))`.
pub fn objective_eval(data: &Dataset, div: &BregmanDivergence, w: &WeightFunction, theta: &[f64]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::InvalidParameter("objective of an empty dataset".into()));
    }
    validate_data(data, div)?;
    check_theta(data, div, theta)?;
    objective_unchecked(data, div, w, theta)
}

fn objective_unchecked(data: &Dataset, div: &BregmanDivergence, w: &WeightFunction, theta: &[f64]) -> Result<f64> {
    let mut acc = 0.0;
    for row in data.rows() {
        acc += w.value(div.eval_unchecked(row, theta))?;
    }
    Ok(acc / data.len() as f64)
}

struct Run {
    theta: Vec<f64>,
    iterations: usize,
    converged: bool,
    residual: f64,
    weights: Vec<f64>,
}

enum Step {
    Done(Run),
    Degenerate(f64),
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn run_from(data: &Dataset, div: &BregmanDivergence, w: &WeightFunction, start: Vec<f64>, cfg: &EstimatorConfig) -> Result<Step> {
    let d = data.dim();
    let mut theta = start;
    let mut weights = vec![0.0; data.len()];
    let mut residual = f64::INFINITY;
    let mut shift = vec![0.0; d];
    for it in 1..=cfg.max_iter {
        let mut sum_w = 0.0;
        shift.iter_mut().for_each(|s| *s = 0.0);
        for (wi, row) in weights.iter_mut().zip(data.rows()) {
            let z = div.eval_unchecked(row, &theta);
            let weight = w.deriv(z)?;
            *wi = weight;
            sum_w += weight;
            for j in 0..d {
                shift[j] += weight * (row[j] - theta[j]);
            }
        }
        if !(sum_w > 0.0) || !sum_w.is_finite() {
            return Ok(Step::Degenerate(sum_w));
        }
        shift.iter_mut().for_each(|s| *s /= sum_w);
        residual = norm(&shift);
        if residual <= cfg.tol * (1.0 + norm(&theta)) {
            return Ok(Step::Done(Run { theta, iterations: it, converged: true, residual, weights }));
        }
        let next: Vec<f64> = theta.iter().zip(&shift).map(|(t, s)| t + cfg.damping * s).collect();
        if div.check_point(&next).is_err() {
            // Damped steps stay inside convex domains; an undamped weighted mean
            // of in-domain points does as well, so this only guards rounding.
            return Ok(Step::Done(Run { theta, iterations: it, converged: false, residual, weights }));
        }
        theta = next;
    }
    Ok(Step::Done(Run { theta, iterations: cfg.max_iter, converged: false, residual, weights }))
}

fn coordinate_median(data: &Dataset) -> Vec<f64> {
    (0..data.dim())
        .map(|j| {
            let mut col: Vec<f64> = data.rows().map(|r| r[j]).collect();
            col.sort_by(f64::total_cmp);
            let n = col.len();
            if n % 2 == 1 {
                col[n / 2]
            } else {
                0.5 * (col[n / 2 - 1] + col[n / 2])
            }
        })
        .collect()
}

fn starts(data: &Dataset, cfg: &EstimatorConfig) -> Vec<Vec<f64>> {
    let mean = data.mean().expect("non-empty data");
    let median = coordinate_median(data);
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(cfg.n_starts);
    let push = |out: &mut Vec<Vec<f64>>, s: Vec<f64>| {
        if out.len() < cfg.n_starts && !out.contains(&s) {
            out.push(s);
        }
    };
    match &cfg.init_strategy {
        InitStrategy::SampleMean => push(&mut out, mean.clone()),
        InitStrategy::CoordinateMedian => push(&mut out, median.clone()),
        InitStrategy::Provided(t) => push(&mut out, t.clone()),
    }
    push(&mut out, mean);
    push(&mut out, median);
    let mut rng = cfg.seed.rng();
    let mut attempts = 0;
    while out.len() < cfg.n_starts && attempts < 4 * cfg.n_starts + 8 {
        let i = rng.random_range(0..data.len());
        push(&mut out, data.row(i).to_vec());
        attempts += 1;
    }
    out
}

fn same_root(a: &[f64], b: &[f64], tol: f64) -> bool {
    let dist = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    dist <= 100.0 * tol * (1.0 + norm(a).max(norm(b)))
}

/// Orders candidate fixed points: lower objective first; objectives within
/// 1e-12 tie and fall back to smaller ‖θ‖, then lexicographic order.
fn better(a: (&[f64], f64), b: (&[f64], f64)) -> bool {
    let (ta, oa) = a;
    let (tb, ob) = b;
    if (oa - ob).abs() > 1e-12 * oa.abs().max(ob.abs()).max(1.0) {
        return oa < ob;
    }
    let (na, nb) = (norm(ta), norm(tb));
    if na != nb {
        return na < nb;
    }
    ta.iter().zip(tb).find(|(x, y)| x != y).is_some_and(|(x, y)| x < y)
}

/// Multi-start reweighting estimator. Returns the converged fixed point with
/// the lowest objective.
pub fn estimate(data: &Dataset, div: &BregmanDivergence, w: &WeightFunction, cfg: &EstimatorConfig) -> Result<EstimateResult> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidParameter("cannot estimate from an empty dataset".into()));
    }
    validate_data(data, div)?;
    if let InitStrategy::Provided(t) = &cfg.init_strategy {
        check_theta(data, div, t)?;
    }

    let mut best: Option<EstimateResult> = None;
    let mut best_unconverged: Option<Run> = None;
    let mut degenerate = None;
    for start in starts(data, cfg) {
        let run = match run_from(data, div, w, start, cfg)? {
            Step::Done(run) => run,
            Step::Degenerate(sum) => {
                degenerate = Some(sum);
                continue;
            }
        };
        if !run.converged {
            if best_unconverged.as_ref().is_none_or(|b| run.residual < b.residual) {
                best_unconverged = Some(run);
            }
            continue;
        }
        let objective = objective_unchecked(data, div, w, &run.theta)?;
        let replace = match &best {
            None => true,
            // Starts that land on the same fixed point up to rounding keep the
            // earlier one, so the tie-break only arbitrates distinct roots.
            Some(b) if same_root(&run.theta, &b.theta_hat, cfg.tol) => false,
            Some(b) => better((&run.theta, objective), (&b.theta_hat, b.objective)),
        };
        if replace {
            best = Some(EstimateResult {
                theta_hat: run.theta,
                objective,
                iterations: run.iterations,
                converged: true,
                residual: run.residual,
                weights: run.weights,
            });
        }
    }
    if let Some(result) = best {
        return Ok(result);
    }
    match best_unconverged {
        Some(run) => {
            let objective = objective_unchecked(data, div, w, &run.theta)?;
            Err(Error::NotConverged {
                best_residual: run.residual,
                best: Box::new(EstimateResult {
                    theta_hat: run.theta,
                    objective,
                    iterations: run.iterations,
                    converged: false,
                    residual: run.residual,
                    weights: run.weights,
                }),
            })
        }
        None => Err(Error::DegenerateWeights { sum: degenerate.unwrap_or(0.0) }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    fn lse(alpha: f64) -> WeightFunction {
        WeightFunction::log_sum_exp(alpha).unwrap()
    }

    #[test]
    fn objective_examples() {
        let sq = BregmanDivergence::SquaredEuclidean;
        let data = Dataset::from_scalars(vec![0.0, 2.0]);
        assert_eq!(objective_eval(&data, &sq, &WeightFunction::Linear, &[1.0]).unwrap(), 1.0);
        let single = Dataset::from_scalars(vec![1.0]);
        assert_eq!(objective_eval(&single, &BregmanDivergence::ItakuraSaito, &lse(1.0), &[1.0]).unwrap(), 0.0);
        assert_eq!(objective_eval(&single, &sq, &lse(0.5), &[1.0]).unwrap(), 0.0);
    }

    #[test]
    fn objective_names_bad_row() {
        let data = Dataset::from_scalars(vec![1.0, 2.0, -3.0]);
        let err = objective_eval(&data, &BregmanDivergence::ItakuraSaito, &lse(1.0), &[1.0]).unwrap_err();
        assert!(err.to_string().contains("row 3"), "{err}");
    }

    #[test]
    fn linear_weight_returns_the_sample_mean_bit_for_bit() {
        // Other starts reach the mean only up to rounding; they must not win the tie-break.
        let values: Vec<f64> = (0..997).map(|i| ((i * 7919) % 1009) as f64 * 0.0137 + 0.1).collect();
        let data = Dataset::from_scalars(values);
        let mean = data.mean().unwrap();
        let r = estimate(&data, &BregmanDivergence::SquaredEuclidean, &WeightFunction::Linear, &EstimatorConfig::default()).unwrap();
        assert_eq!(r.theta_hat, mean);
    }

    #[test]
    fn linear_weight_gives_sample_mean_in_one_iteration() {
        let data = Dataset::from_scalars(vec![1.0, 3.0, 4.5, 0.25]);
        for div in [BregmanDivergence::SquaredEuclidean, BregmanDivergence::ItakuraSaito] {
            let r = estimate(&data, &div, &WeightFunction::Linear, &EstimatorConfig::default()).unwrap();
            assert!(r.converged);
            assert_eq!(r.iterations, 1);
            assert_relative_eq!(r.theta_hat[0], 2.1875, max_relative = 1e-15);
        }
    }

    #[test]
    fn single_point() {
        let data = Dataset::from_scalars(vec![5.0]);
        let r = estimate(&data, &BregmanDivergence::ItakuraSaito, &lse(2.0), &EstimatorConfig::default()).unwrap();
        assert_eq!(r.theta_hat, vec![5.0]);
    }

    #[test]
    fn zero_is_rejected_for_itakura_saito() {
        let data = Dataset::from_scalars(vec![1.0, 0.0]);
        let err = estimate(&data, &BregmanDivergence::ItakuraSaito, &lse(1.0), &EstimatorConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Domain(ref m) if m.contains("row 2")), "{err}");
    }

    #[test]
    fn robust_location_ignores_outlier() {
        let mut v: Vec<f64> = (0..50).map(|i| (i as f64 - 24.5) * 0.04).collect();
        v.push(1000.0);
        let data = Dataset::from_scalars(v);
        let r = estimate(&data, &BregmanDivergence::SquaredEuclidean, &lse(1.0), &EstimatorConfig::default()).unwrap();
        assert!(r.theta_hat[0].abs() < 1e-6, "{:?}", r.theta_hat);
        assert!(r.weights[50] < 1e-300);
    }

    #[test]
    fn fixed_point_identity() {
        let data = Dataset::from_scalars(vec![0.5, 0.9, 1.3, 2.2, 7.0, 0.05]);
        let r = estimate(&data, &BregmanDivergence::ItakuraSaito, &lse(0.7), &EstimatorConfig::default()).unwrap();
        let sw: f64 = r.weights.iter().sum();
        let wm: f64 = r.weights.iter().zip(data.values()).map(|(w, x)| w * x).sum::<f64>() / sw;
        assert!((wm - r.theta_hat[0]).abs() <= 1e-10 * (1.0 + r.theta_hat[0]));
    }

    #[test]
    fn degenerate_and_nonconverged_errors() {
        // Weights e^{+αd} with α < 0 overflow for far-apart points.
        let data = Dataset::from_scalars(vec![-1e3, 1e3]);
        let err = estimate(&data, &BregmanDivergence::SquaredEuclidean, &lse(-1.0), &EstimatorConfig::default()).unwrap_err();
        assert!(matches!(err, Error::DegenerateWeights { .. }), "{err:?}");

        let data = Dataset::from_scalars(vec![0.1, 0.4, 3.0, 9.0]);
        let cfg = EstimatorConfig { max_iter: 1, ..EstimatorConfig::default() };
        let err = estimate(&data, &BregmanDivergence::ItakuraSaito, &lse(1.0), &cfg).unwrap_err();
        match err {
            Error::NotConverged { best, best_residual } => {
                assert!(!best.converged);
                assert_eq!(best.residual, best_residual);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn multivariate_mahalanobis() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let div = BregmanDivergence::mahalanobis(a).unwrap();
        let data = Dataset::from_rows(&[vec![0.0, 0.0], vec![1.0, 0.5], vec![-0.5, 0.2], vec![0.3, -0.7], vec![50.0, 50.0]]).unwrap();
        let r = estimate(&data, &div, &lse(1.0), &EstimatorConfig::default()).unwrap();
        assert!(r.converged);
        assert!(r.theta_hat.iter().all(|t| t.abs() < 1.0));
    }

    #[test]
    fn config_validation() {
        let data = Dataset::from_scalars(vec![1.0]);
        for cfg in [
            EstimatorConfig { tol: 0.0, ..Default::default() },
            EstimatorConfig { max_iter: 0, ..Default::default() },
            EstimatorConfig { n_starts: 0, ..Default::default() },
            EstimatorConfig { damping: 0.0, ..Default::default() },
            EstimatorConfig { damping: 1.5, ..Default::default() },
        ] {
            assert!(estimate(&data, &BregmanDivergence::SquaredEuclidean, &WeightFunction::Linear, &cfg).is_err());
        }
    }

    #[test]
    fn tie_break_prefers_smaller_norm() {
        assert!(better((&[1.0], 0.5), (&[-2.0], 0.5)));
        assert!(better((&[-1.0], 0.5), (&[1.0], 0.5)));
        assert!(better((&[3.0], 0.4), (&[1.0], 0.5)));
    }
}
