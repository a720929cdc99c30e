//! Parsers for the textual flag values shared by several subcommands.

use std::path::Path;

use fsep_core::divergences::{BregmanDivergence, ScalarConvex};
use fsep_core::models::{ContinuousBregmanModel, EllipticalModel, GeneratorFunction, ISModel, ModelFamily};
use fsep_core::numerics::QuadratureConfig;
use nalgebra::DMatrix;

use crate::CliError;

/// `sq`, `is` or `mahalanobis:FILE`.
pub fn divergence(s: &str) -> Result<BregmanDivergence, CliError> {
    match s.trim() {
        "sq" => Ok(BregmanDivergence::SquaredEuclidean),
        "is" => Ok(BregmanDivergence::ItakuraSaito),
        other => match other.split_once(':') {
            Some(("mahalanobis", file)) => Ok(BregmanDivergence::mahalanobis(matrix_file(Path::new(file))?)?),
            _ => Err(CliError::Failed(format!("invalid divergence '{s}': expected sq, is or mahalanobis:FILE"))),
        },
    }
}

/// Generator flag; `student:NU` without an explicit dimension takes `dim`.
pub fn generator(s: &str, dim: usize) -> Result<GeneratorFunction, CliError> {
    let s = s.trim();
    if s.starts_with("student:") && !s.contains(',') {
        return Ok(format!("{s},{dim}").parse()?);
    }
    Ok(s.parse()?)
}

/// `sq` (φ = x²/2) or `neglog` (φ = −ln x).
pub fn phi(s: &str) -> Result<ScalarConvex, CliError> {
    match s.trim() {
        "sq" => Ok(ScalarConvex::squared()),
        "neglog" => Ok(ScalarConvex::neg_log()),
        _ => Err(CliError::Failed(format!("invalid phi '{s}': expected sq or neglog"))),
    }
}

/// Square matrix, one row per line, entries separated by commas or
/// whitespace. Blank lines and `#` comments are skipped.
pub fn matrix_file(path: &Path) -> Result<DMatrix<f64>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(|t| t.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| CliError::Failed(format!("{}: line {}: not a numeric row", path.display(), i + 1)))?;
        rows.push(row);
    }
    matrix_rows(&rows).map_err(|e| CliError::Failed(format!("{}: {e}", path.display())))
}

pub fn matrix_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>, String> {
    let d = rows.len();
    if d == 0 || rows.iter().any(|r| r.len() != d) {
        return Err(format!("matrix must be square and non-empty, got {d} rows"));
    }
    Ok(DMatrix::from_fn(d, d, |i, j| rows[i][j]))
}

/// Comma-separated reals.
pub fn vector(s: &str) -> Result<Vec<f64>, CliError> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| CliError::Failed(format!("invalid vector '{s}': expected comma-separated numbers")))
}

/// `START:STOP:STEP`, inclusive of STOP when it lies on the grid.
pub fn grid(s: &str) -> Result<Vec<f64>, CliError> {
    let bad = || CliError::Failed(format!("invalid grid '{s}': expected START:STOP:STEP with STEP > 0 and STOP >= START"));
    let parts = s.split(':').map(|t| t.trim().parse::<f64>()).collect::<Result<Vec<_>, _>>().map_err(|_| bad())?;
    let [start, stop, step] = parts[..] else { return Err(bad()) };
    if ![start, stop, step].iter().all(|v| v.is_finite()) || step <= 0.0 || stop < start {
        return Err(bad());
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    // Rounding to 12 decimals keeps 0.1-step grids printing as 0.3, not 0.30000000000000004.
    Ok((0..count).map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12).collect())
}

/// Model for `sample` and experiment configs. `dim` sizes elliptical models
/// with the identity shape when no shape is given.
pub fn model(
    family: &str,
    g: &str,
    phi_name: Option<&str>,
    shape: Option<DMatrix<f64>>,
    dim: usize,
    cfg: &QuadratureConfig,
) -> Result<ModelFamily, CliError> {
    match family {
        "elliptical" => {
            let a = shape.unwrap_or_else(|| DMatrix::identity(dim, dim));
            Ok(EllipticalModel::new(generator(g, a.nrows())?, a, cfg)?.into())
        }
        "is" => Ok(ISModel::new(generator(g, 1)?, cfg)?.into()),
        "cbregman" => Ok(ContinuousBregmanModel::new(phi(phi_name.unwrap_or("sq"))?, generator(g, 1)?, cfg)?.into()),
        _ => Err(CliError::Failed(format!("invalid model '{family}': expected elliptical, is or cbregman"))),
    }
}
