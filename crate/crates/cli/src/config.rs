//! JSON schemas of the `experiment` configs.
//!
//! Latent bias:
//!
//! ```json
//! {
//!   "target": {"family": "is", "g": "exp:1"},
//!   "theta_star": [1.0],
//!   "epsilon": 0.2,
//!   "contaminant": {"kind": "model", "model": {"family": "is", "g": "exp:1"}, "theta": [50.0]},
//!   "alphas": [0.0, 0.25, 0.5, 1.0, 2.0],
//!   "n": 10000,
//!   "replications": 200
//! }
//! ```
//!
//! `family` is `elliptical` (optional `shape` matrix, identity by default),
//! `is`, or `cbregman` (with `phi`: `sq` or `neglog`). A point-mass
//! contaminant is `{"kind": "point_mass", "location": [1e-4]}`. An optional
//! `divergence` (`sq`, `is`, `mahalanobis:FILE`) overrides the target's own.
//!
//! Small inlier: `{theta_star, inlier_location, epsilon, alpha, n, replications}`.

use std::path::Path;

use fsep_core::experiments::{Contaminant, ContaminationSpec};
use fsep_core::models::ModelFamily;
use fsep_core::numerics::QuadratureConfig;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::{parse, CliError};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase", deny_unknown_fields)]
pub enum ModelConfig {
    Elliptical {
        g: String,
        #[serde(default)]
        shape: Option<Vec<Vec<f64>>>,
    },
    Is {
        g: String,
    },
    Cbregman {
        g: String,
        #[serde(default)]
        phi: Option<String>,
    },
}

impl ModelConfig {
    pub fn build(&self, dim: usize, cfg: &QuadratureConfig) -> Result<ModelFamily, CliError> {
        match self {
            ModelConfig::Elliptical { g, shape } => {
                let a = shape.as_deref().map(parse::matrix_rows).transpose().map_err(CliError::Failed)?;
                parse::model("elliptical", g, None, a, dim, cfg)
            }
            ModelConfig::Is { g } => parse::model("is", g, None, None, dim, cfg),
            ModelConfig::Cbregman { g, phi } => parse::model("cbregman", g, phi.as_deref(), None, dim, cfg),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ContaminantConfig {
    PointMass { location: Vec<f64> },
    Model { model: ModelConfig, theta: Vec<f64> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatentBiasConfig {
    pub target: ModelConfig,
    pub theta_star: Vec<f64>,
    pub epsilon: f64,
    pub contaminant: ContaminantConfig,
    pub alphas: Vec<f64>,
    pub n: usize,
    pub replications: usize,
    #[serde(default)]
    pub divergence: Option<String>,
}

impl LatentBiasConfig {
    pub fn spec(&self, cfg: &QuadratureConfig) -> Result<ContaminationSpec, CliError> {
        let dim = self.theta_star.len();
        let target = self.target.build(dim, cfg)?;
        let contaminant = match &self.contaminant {
            ContaminantConfig::PointMass { location } => Contaminant::PointMass(location.clone()),
            ContaminantConfig::Model { model, theta } => {
                Contaminant::Model { model: model.build(theta.len(), cfg)?, theta: theta.clone() }
            }
        };
        Ok(ContaminationSpec::new(self.epsilon, target, self.theta_star.clone(), contaminant)?)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmallInlierConfig {
    pub theta_star: f64,
    pub inlier_location: f64,
    pub epsilon: f64,
    pub alpha: f64,
    pub n: usize,
    pub replications: usize,
}

/// Reads a config, reporting schema violations with the JSON path of the
/// offending field.
pub fn read<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| CliError::schema(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse_latent(text: &str) -> Result<LatentBiasConfig, String> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| format!("{}: {}", e.path(), e.inner()))
    }

    const GOOD: &str = r#"{
        "target": {"family": "is", "g": "exp:1"},
        "theta_star": [1.0],
        "epsilon": 0.2,
        "contaminant": {"kind": "model", "model": {"family": "is", "g": "exp:1"}, "theta": [50.0]},
        "alphas": [0.0, 1.0],
        "n": 100,
        "replications": 2
    }"#;

    #[test]
    fn documented_example_parses() {
        let c = parse_latent(GOOD).unwrap();
        assert_eq!(c.alphas, vec![0.0, 1.0]);
        let spec = c.spec(&QuadratureConfig::default()).unwrap();
        assert_eq!(spec.epsilon(), 0.2);
    }

    #[test]
    fn unknown_field_reports_path() {
        let bad = GOOD.replace(r#""theta": [50.0]"#, r#""theta": [50.0], "mean": 3"#);
        let err = parse_latent(&bad).unwrap_err();
        assert!(err.starts_with("contaminant"), "{err}");
        assert!(err.contains("mean"), "{err}");
        let bad = GOOD.replace(r#""target": {"family": "is", "g": "exp:1"}"#, r#""target": {"family": "is", "g": "exp:1", "k": 1}"#);
        let err = parse_latent(&bad).unwrap_err();
        assert!(err.starts_with("target"), "{err}");
    }

    #[test]
    fn wrong_type_reports_path() {
        let err = parse_latent(&GOOD.replace(r#""n": 100"#, r#""n": "many""#)).unwrap_err();
        assert!(err.starts_with("n:"), "{err}");
        let err = parse_latent(&GOOD.replace("[0.0, 1.0]", r#"[0.0, "x"]"#)).unwrap_err();
        assert!(err.starts_with("alphas[1]"), "{err}");
    }

    #[test]
    fn point_mass_outside_support_is_rejected() {
        let text = GOOD.replace(
            r#"{"kind": "model", "model": {"family": "is", "g": "exp:1"}, "theta": [50.0]}"#,
            r#"{"kind": "point_mass", "location": [-1.0]}"#,
        );
        let c = parse_latent(&text).unwrap();
        assert!(c.spec(&QuadratureConfig::default()).is_err());
    }
}
