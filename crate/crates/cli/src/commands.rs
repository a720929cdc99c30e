use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use fsep_core::analysis::{check_theorem1, check_theorem2, check_theorem4, ConditionVerdict};
use fsep_core::asymptotics::{are_curve, write_are_csv};
use fsep_core::dataset::Dataset;
use fsep_core::estimator::{estimate as run_estimator, validate_data, EstimatorConfig};
use fsep_core::experiments::{latent_bias_sweep, small_inlier_experiment, write_sweep_csv};
use fsep_core::models::ContinuousBregmanModel;
use fsep_core::numerics::{QuadratureConfig, RngSeed};
use fsep_core::weights::WeightFunction;
use fsep_core::Error;
use serde::Serialize;

use crate::config::{self, LatentBiasConfig, SmallInlierConfig};
use crate::manifest::{write_sidecar, RunManifest};
use crate::{parse, AreArgs, CheckArgs, CliError, EstimateArgs, ExperimentArgs, ExperimentKind, Outcome, SampleArgs};

/// JSON result with its manifest embedded under `manifest`.
#[derive(Serialize)]
struct Report<'a, T: Serialize> {
    #[serde(flatten)]
    result: &'a T,
    manifest: &'a RunManifest,
}

fn params<const N: usize>(pairs: [(&str, Option<String>); N]) -> BTreeMap<String, String> {
    pairs.into_iter().filter_map(|(k, v)| v.map(|v| (k.to_string(), v))).collect()
}

fn path_param(p: &Option<std::path::PathBuf>) -> Option<String> {
    p.as_ref().map(|p| p.display().to_string())
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, bytes).map_err(|e| CliError::io(path, e)),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(bytes).and_then(|_| stdout.flush()).map_err(|e| CliError::Failed(e.to_string()))
        }
    }
}

fn json<T: Serialize>(result: &T, manifest: &RunManifest) -> Result<Vec<u8>, CliError> {
    let mut text = serde_json::to_vec_pretty(&Report { result, manifest }).map_err(|e| CliError::Failed(e.to_string()))?;
    text.push(b'\n');
    Ok(text)
}

/// Writes CSV bytes, plus the sidecar manifest when going to a file.
fn emit_table(out: Option<&Path>, bytes: &[u8], manifest: &RunManifest) -> Result<(), CliError> {
    emit(out, bytes)?;
    match out {
        Some(path) => write_sidecar(path, manifest),
        None => Ok(()),
    }
}

pub fn estimate(a: &EstimateArgs, seed: u64) -> Result<Outcome, CliError> {
    let manifest = RunManifest::new(
        "estimate",
        params([
            ("input", Some(a.input.display().to_string())),
            ("divergence", Some(a.divergence.clone())),
            ("f", Some(a.f.clone())),
            ("tol", Some(format!("{:e}", a.tol))),
            ("max-iter", Some(a.max_iter.to_string())),
            ("starts", Some(a.starts.to_string())),
            ("out", path_param(&a.out)),
        ]),
        seed,
    );
    let div = parse::divergence(&a.divergence)?;
    let w: WeightFunction = a.f.parse()?;
    let data = Dataset::read_csv_path(&a.input)?;
    validate_data(&data, &div)?;
    let cfg = EstimatorConfig {
        tol: a.tol,
        max_iter: a.max_iter,
        n_starts: a.starts,
        seed: RngSeed(seed),
        ..EstimatorConfig::default()
    };
    let (result, outcome) = match run_estimator(&data, &div, &w, &cfg) {
        Ok(r) => (r, Outcome::Ok),
        Err(Error::NotConverged { best, best_residual }) => {
            eprintln!("warning: estimator did not converge (best residual {best_residual:e})");
            (*best, Outcome::NotConverged)
        }
        Err(e) => return Err(e.into()),
    };
    emit(a.out.as_deref(), &json(&result, &manifest)?)?;
    Ok(outcome)
}

pub fn check(a: &CheckArgs, seed: u64) -> Result<Outcome, CliError> {
    let manifest = RunManifest::new(
        "check",
        params([
            ("theorem", Some(a.theorem.clone())),
            ("g", Some(a.g.clone())),
            ("f", Some(a.f.clone())),
            ("dim", Some(a.dim.to_string())),
            ("phi", Some(a.phi.clone())),
        ]),
        seed,
    );
    let cfg = QuadratureConfig::default();
    let w: WeightFunction = a.f.parse()?;
    let verdict: ConditionVerdict = match a.theorem.as_str() {
        "1" => check_theorem1(&parse::generator(&a.g, a.dim)?, &w, a.dim, &cfg)?,
        "2" => check_theorem2(&parse::generator(&a.g, 1)?, &w, &cfg)?,
        _ => {
            let model = ContinuousBregmanModel::new(parse::phi(&a.phi)?, parse::generator(&a.g, 1)?, &cfg)?;
            check_theorem4(&model, &w, &cfg)?
        }
    };
    emit(None, &json(&verdict, &manifest)?)?;
    Ok(if verdict.finite { Outcome::Ok } else { Outcome::Divergent })
}

pub fn are(a: &AreArgs, seed: u64) -> Result<Outcome, CliError> {
    let manifest = RunManifest::new(
        "are",
        params([
            ("k", Some(a.k.to_string())),
            ("alpha-grid", Some(a.alpha_grid.clone())),
            ("baselines", Some(a.baselines.to_string())),
            ("out", path_param(&a.out)),
        ]),
        seed,
    );
    let grid = parse::grid(&a.alpha_grid)?;
    let rows = are_curve(a.k, &grid, a.baselines, &QuadratureConfig::default())?;
    let mut bytes = Vec::new();
    write_are_csv(&rows, &mut bytes)?;
    emit_table(a.out.as_deref(), &bytes, &manifest)?;
    Ok(Outcome::Ok)
}

pub fn experiment(a: &ExperimentArgs, seed: u64) -> Result<Outcome, CliError> {
    let kind = match a.kind {
        ExperimentKind::LatentBias => "latent-bias",
        ExperimentKind::SmallInlier => "small-inlier",
    };
    let manifest = RunManifest::new(
        "experiment",
        params([
            ("kind", Some(kind.to_string())),
            ("config", Some(a.config.display().to_string())),
            ("out", path_param(&a.out)),
        ]),
        seed,
    );
    let cfg = QuadratureConfig::default();
    let mut bytes = Vec::new();
    match a.kind {
        ExperimentKind::LatentBias => {
            let c: LatentBiasConfig = config::read(&a.config)?;
            let spec = c.spec(&cfg)?;
            let div = match &c.divergence {
                Some(d) => parse::divergence(d)?,
                None => spec.target().matching_divergence(),
            };
            let weights = c.alphas.iter().map(|&al| WeightFunction::log_sum_exp(al)).collect::<Result<Vec<_>, _>>()?;
            let est_cfg = EstimatorConfig { seed: RngSeed(seed), ..EstimatorConfig::default() };
            let rows = latent_bias_sweep(&spec, &div, &weights, c.n, c.replications, RngSeed(seed), &est_cfg, &cfg)?;
            write_sweep_csv(&rows, &mut bytes)?;
        }
        ExperimentKind::SmallInlier => {
            let c: SmallInlierConfig = config::read(&a.config)?;
            let r = small_inlier_experiment(
                c.theta_star,
                c.inlier_location,
                c.epsilon,
                c.alpha,
                c.n,
                c.replications,
                RngSeed(seed),
                &cfg,
            )?;
            bytes = format!("bias_fsep,bias_mle,failures\n{},{},{}\n", r.bias_fsep, r.bias_mle, r.failures).into_bytes();
        }
    }
    emit_table(a.out.as_deref(), &bytes, &manifest)?;
    Ok(Outcome::Ok)
}

pub fn sample(a: &SampleArgs, seed: u64) -> Result<Outcome, CliError> {
    let manifest = RunManifest::new(
        "sample",
        params([
            ("model", Some(a.model.clone())),
            ("g", Some(a.g.clone())),
            ("theta", Some(a.theta.clone())),
            ("n", Some(a.n.to_string())),
            ("phi", a.phi.clone()),
            ("shape", path_param(&a.shape)),
            ("out", path_param(&a.out)),
        ]),
        seed,
    );
    let theta = parse::vector(&a.theta)?;
    let shape = a.shape.as_deref().map(parse::matrix_file).transpose()?;
    let model = parse::model(&a.model, &a.g, a.phi.as_deref(), shape, theta.len(), &QuadratureConfig::default())?;
    let data = model.sample(&theta, a.n, RngSeed(seed))?;
    let mut bytes = Vec::new();
    data.write_csv(&mut bytes)?;
    emit_table(a.out.as_deref(), &bytes, &manifest)?;
    Ok(Outcome::Ok)
}
