//! Linear regressors sharing the prediction form `y = x·β + c`:
//! ordinary least squares, ridge-penalised Gaussian GLM, linear ε-SVR and
//! relevance vector regression.

pub mod linear;
pub mod rvr;
pub mod svr;

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

pub use linear::{CenteredSvd, LinearSolution};
pub use rvr::{RvrParams, RvrState};
pub use svr::{SvrParams, SvrWorkspace};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Ols,
    Glm,
    Svr,
    Rvr,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::Ols, ModelKind::Glm, ModelKind::Svr, ModelKind::Rvr];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Ols => "ols",
            ModelKind::Glm => "glm",
            ModelKind::Svr => "svr",
            ModelKind::Rvr => "rvr",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ols" | "lr" => Ok(ModelKind::Ols),
            "glm" | "ridge" => Ok(ModelKind::Glm),
            "svr" => Ok(ModelKind::Svr),
            "rvr" => Ok(ModelKind::Rvr),
            other => Err(Error::InvalidArgument(format!("unknown model kind '{other}'"))),
        }
    }
}

/// Which regressor to fit and with what settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrainConfig {
    Ols,
    Glm { lambda: f64 },
    Svr(SvrParams),
    Rvr(RvrParams),
}

impl TrainConfig {
    pub fn kind(&self) -> ModelKind {
        match self {
            TrainConfig::Ols => ModelKind::Ols,
            TrainConfig::Glm { .. } => ModelKind::Glm,
            TrainConfig::Svr(_) => ModelKind::Svr,
            TrainConfig::Rvr(_) => ModelKind::Rvr,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            TrainConfig::Ols => Ok(()),
            TrainConfig::Glm { lambda } => {
                if *lambda >= 0.0 && lambda.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidArgument(format!("GLM lambda must be >= 0, got {lambda}")))
                }
            }
            TrainConfig::Svr(p) => p.validate(),
            TrainConfig::Rvr(p) => p.validate(),
        }
    }

    /// Tunable hyperparameters, as recorded in model files and CV tables.
    pub fn hyperparams(&self) -> BTreeMap<String, f64> {
        let mut h = BTreeMap::new();
        match self {
            TrainConfig::Ols => {}
            TrainConfig::Glm { lambda } => {
                h.insert("lambda".into(), *lambda);
            }
            TrainConfig::Svr(p) => {
                h.insert("c".into(), p.c);
                h.insert("epsilon".into(), p.epsilon);
                h.insert("tol".into(), p.tol);
                h.insert("max_passes".into(), p.max_passes as f64);
            }
            TrainConfig::Rvr(p) => {
                h.insert("prune_threshold".into(), p.prune_threshold);
                h.insert("max_iter".into(), p.max_iter as f64);
                h.insert("tol".into(), p.tol);
            }
        }
        h
    }

    /// Short human-readable label for the grid cell, e.g. `c=1,epsilon=0.5`.
    pub fn label(&self) -> String {
        match self {
            TrainConfig::Ols => "-".into(),
            TrainConfig::Glm { lambda } => format!("lambda={lambda}"),
            TrainConfig::Svr(p) => format!("c={},epsilon={}", p.c, p.epsilon),
            TrainConfig::Rvr(_) => "-".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub converged: bool,
    pub iterations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objective: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_violation: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank: Option<usize>,
    #[serde(default)]
    pub rank_deficient: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub kind: ModelKind,
    pub hyperparams: BTreeMap<String, f64>,
    pub feature_names: Vec<String>,
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub diagnostics: FitDiagnostics,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rvr: Option<RvrState>,
}

/// Lazily computed decompositions of one design, shared by all grid cells
/// that are fitted on it.
#[derive(Default)]
pub struct FitCache {
    svd: OnceLock<std::result::Result<CenteredSvd, String>>,
    svr: OnceLock<SvrWorkspace>,
}

impl FitCache {
    pub fn new() -> Self {
        Self::default()
    }

    fn svd(&self, x: &FeatureMatrix) -> Result<&CenteredSvd> {
        self.svd
            .get_or_init(|| CenteredSvd::new(x.values(), x.target()).map_err(|e| e.to_string()))
            .as_ref()
            .map_err(|e| Error::Numerical(e.clone()))
    }

    fn svr(&self, x: &FeatureMatrix) -> &SvrWorkspace {
        self.svr.get_or_init(|| SvrWorkspace::new(x.values()))
    }
}

fn linear_model(
    config: &TrainConfig,
    x: &FeatureMatrix,
    sol: LinearSolution,
) -> LinearModel {
    LinearModel {
        kind: config.kind(),
        hyperparams: config.hyperparams(),
        feature_names: x.col_names().to_vec(),
        weights: sol.weights,
        intercept: sol.intercept,
        diagnostics: FitDiagnostics {
            converged: true,
            iterations: 0,
            rank: Some(sol.rank),
            rank_deficient: sol.rank_deficient,
            ..Default::default()
        },
        rvr: None,
    }
}

/// Fits `config` on `x`, reusing decompositions held by `cache`. The cache
/// must only ever be used with the same `x`.
pub fn fit_with_cache(config: &TrainConfig, x: &FeatureMatrix, cache: &FitCache) -> Result<LinearModel> {
    config.validate()?;
    if x.nrows() == 0 {
        return Err(Error::Empty("cannot fit a model on zero rows".into()));
    }
    let model = match config {
        TrainConfig::Ols => {
            let sol = cache.svd(x)?.solve(0.0);
            if sol.rank_deficient {
                log::debug!(
                    "OLS design is rank deficient (rank {} < {} features); using the minimum-norm solution",
                    sol.rank,
                    x.ncols()
                );
            }
            linear_model(config, x, sol)
        }
        TrainConfig::Glm { lambda } => {
            let sol = cache.svd(x)?.solve(*lambda);
            linear_model(config, x, sol)
        }
        TrainConfig::Svr(p) => {
            let s = svr::fit_svr_with(cache.svr(x), x.values(), x.target(), p)?;
            let mut hyperparams = config.hyperparams();
            hyperparams.insert("seed".into(), p.seed as f64);
            LinearModel {
                kind: ModelKind::Svr,
                hyperparams,
                feature_names: x.col_names().to_vec(),
                weights: s.weights,
                intercept: s.intercept,
                diagnostics: FitDiagnostics {
                    converged: s.converged,
                    iterations: s.iterations,
                    objective: Some(s.objective),
                    max_violation: Some(s.max_violation),
                    ..Default::default()
                },
                rvr: None,
            }
        }
        TrainConfig::Rvr(p) => {
            let s = rvr::fit_rvr(x.values(), x.target(), p)?;
            LinearModel {
                kind: ModelKind::Rvr,
                hyperparams: config.hyperparams(),
                feature_names: x.col_names().to_vec(),
                weights: s.weights,
                intercept: s.intercept,
                diagnostics: FitDiagnostics {
                    converged: s.converged,
                    iterations: s.iterations,
                    objective: s.state.log_evidence_history.last().copied(),
                    ..Default::default()
                },
                rvr: Some(s.state),
            }
        }
    };
    if model.weights.iter().any(|w| !w.is_finite()) || !model.intercept.is_finite() {
        return Err(Error::Numerical(format!("{} fit produced non-finite coefficients", model.kind)));
    }
    Ok(model)
}

pub fn fit(config: &TrainConfig, x: &FeatureMatrix) -> Result<LinearModel> {
    fit_with_cache(config, x, &FitCache::new())
}

pub fn fit_ols(x: &FeatureMatrix) -> Result<LinearModel> {
    fit(&TrainConfig::Ols, x)
}

pub fn fit_glm(x: &FeatureMatrix, lambda: f64) -> Result<LinearModel> {
    fit(&TrainConfig::Glm { lambda }, x)
}

pub fn fit_svr(x: &FeatureMatrix, params: SvrParams) -> Result<LinearModel> {
    fit(&TrainConfig::Svr(params), x)
}

pub fn fit_rvr(x: &FeatureMatrix, params: RvrParams) -> Result<LinearModel> {
    fit(&TrainConfig::Rvr(params), x)
}

/// `x_i·β + c` for every row; columns must match the training features.
pub fn predict(model: &LinearModel, x: &FeatureMatrix) -> Result<Vec<f64>> {
    if model.feature_names != x.col_names() {
        return Err(Error::Dimension(format!(
            "model expects {} features in training order, matrix has {} (or a different order)",
            model.feature_names.len(),
            x.ncols()
        )));
    }
    let v = x.values();
    Ok((0..x.nrows())
        .map(|i| {
            model
                .weights
                .iter()
                .enumerate()
                .map(|(j, w)| w * v[(i, j)])
                .sum::<f64>()
                + model.intercept
        })
        .collect())
}

/// Versioned on-disk form of a fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    /// Hex SHA-256 of the `feature,min,max` scaler CSV the model expects.
    pub scaler_sha256: Option<String>,
    #[serde(flatten)]
    pub model: LinearModel,
}

impl ModelFile {
    pub fn new(model: LinearModel, scaler_sha256: Option<String>) -> Self {
        ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            scaler_sha256,
            model,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        if file.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Schema(format!(
                "unsupported model format version {}",
                file.format_version
            )));
        }
        if file.model.weights.len() != file.model.feature_names.len() {
            return Err(Error::Schema("model weights and feature names differ in length".into()));
        }
        Ok(file)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ModelFile::from_json(&text)
    }
}
