use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize};

use crate::dataset::FeatureSet;
use crate::error::{Error, Result};
use crate::regressors::{ModelKind, RvrParams, SvrParams, TrainConfig};

fn default_feature_sets() -> Vec<FeatureSet> {
    FeatureSet::ALL.to_vec()
}

fn default_models() -> Vec<ModelKind> {
    ModelKind::ALL.to_vec()
}

fn default_cv_folds() -> usize {
    10
}

fn default_test_fraction() -> f64 {
    0.2
}

/// Accepts `"all"` or a list of set names.
fn feature_sets_de<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<FeatureSet>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        One(String),
        Many(Vec<String>),
    }
    let names = match Raw::deserialize(d)? {
        Raw::One(s) => vec![s],
        Raw::Many(v) => v,
    };
    parse_feature_sets(&names).map_err(serde::de::Error::custom)
}

/// Parses set names, expanding `all`; order is CAT12, Desikan, Destrieux
/// regardless of input order and duplicates collapse.
pub fn parse_feature_sets<S: AsRef<str>>(names: &[S]) -> Result<Vec<FeatureSet>> {
    let mut picked = Vec::new();
    for n in names {
        let n = n.as_ref();
        if n.trim().eq_ignore_ascii_case("all") {
            picked.extend(FeatureSet::ALL);
        } else {
            picked.push(n.parse::<FeatureSet>()?);
        }
    }
    picked.sort();
    picked.dedup();
    Ok(picked)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "GridConfig::default_lambda")]
    pub glm_lambda: Vec<f64>,
    #[serde(default = "GridConfig::default_c")]
    pub svr_c: Vec<f64>,
    #[serde(default = "GridConfig::default_epsilon")]
    pub svr_epsilon: Vec<f64>,
}

impl GridConfig {
    fn default_lambda() -> Vec<f64> {
        vec![1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3]
    }

    fn default_c() -> Vec<f64> {
        vec![0.1, 1.0, 10.0]
    }

    fn default_epsilon() -> Vec<f64> {
        vec![0.5, 1.0, 2.0]
    }
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            glm_lambda: Self::default_lambda(),
            svr_c: Self::default_c(),
            svr_epsilon: Self::default_epsilon(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SvrSolverConfig {
    pub tol: f64,
    pub max_passes: usize,
}

impl Default for SvrSolverConfig {
    fn default() -> Self {
        let p = SvrParams::default();
        SvrSolverConfig {
            tol: p.tol,
            max_passes: p.max_passes,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RvrSolverConfig {
    pub prune_threshold: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for RvrSolverConfig {
    fn default() -> Self {
        let p = RvrParams::default();
        RvrSolverConfig {
            prune_threshold: p.prune_threshold,
            max_iter: p.max_iter,
            tol: p.tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_feature_sets", deserialize_with = "feature_sets_de")]
    pub feature_sets: Vec<FeatureSet>,
    #[serde(default = "default_models")]
    pub models: Vec<ModelKind>,
    #[serde(default)]
    pub grids: GridConfig,
    #[serde(default = "default_cv_folds")]
    pub cv_folds: usize,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub svr: SvrSolverConfig,
    #[serde(default)]
    pub rvr: RvrSolverConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            feature_sets: default_feature_sets(),
            models: default_models(),
            grids: GridConfig::default(),
            cv_folds: default_cv_folds(),
            test_fraction: default_test_fraction(),
            seed: 0,
            svr: SvrSolverConfig::default(),
            rvr: RvrSolverConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    pub fn validate(&self) -> Result<()> {
        if self.feature_sets.is_empty() {
            return Err(Error::Config("feature_sets must not be empty".into()));
        }
        if self.models.is_empty() {
            return Err(Error::Config("models must not be empty".into()));
        }
        if self.cv_folds < 2 {
            return Err(Error::Config(format!("cv_folds must be >= 2, got {}", self.cv_folds)));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::Config(format!(
                "test_fraction must lie in (0, 1), got {}",
                self.test_fraction
            )));
        }
        for kind in &self.models {
            let grid = self.grid(*kind);
            if grid.is_empty() {
                return Err(Error::Config(format!("hyperparameter grid for {kind} is empty")));
            }
            for cell in &grid {
                cell.validate().map_err(|e| Error::Config(format!("{kind} grid: {e}")))?;
            }
        }
        Ok(())
    }

    /// Grid cells for one model kind, in grid order (C outer, ε inner for SVR).
    pub fn grid(&self, kind: ModelKind) -> Vec<TrainConfig> {
        match kind {
            ModelKind::Ols => vec![TrainConfig::Ols],
            ModelKind::Glm => self
                .grids
                .glm_lambda
                .iter()
                .map(|&lambda| TrainConfig::Glm { lambda })
                .collect(),
            ModelKind::Svr => {
                let mut cells = Vec::new();
                for &c in &self.grids.svr_c {
                    for &epsilon in &self.grids.svr_epsilon {
                        cells.push(TrainConfig::Svr(SvrParams {
                            c,
                            epsilon,
                            tol: self.svr.tol,
                            max_passes: self.svr.max_passes,
                            seed: self.seed,
                        }));
                    }
                }
                cells
            }
            ModelKind::Rvr => vec![TrainConfig::Rvr(RvrParams {
                prune_threshold: self.rvr.prune_threshold,
                max_iter: self.rvr.max_iter,
                tol: self.rvr.tol,
            })],
        }
    }

    /// Label of the fused feature selection, e.g. `cat12+desikan`.
    pub fn feature_label(&self) -> String {
        self.feature_sets
            .iter()
            .map(|s| s.as_str())
            .collect::<Vec<_>>()
            .join("+")
    }
}
