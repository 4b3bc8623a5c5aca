use std::collections::{BTreeMap, HashSet};
use std::sync::atomic::{AtomicUsize, Ordering};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{apply_scaler, fit_scaler, FeatureMatrix};
use crate::regressors::{fit_with_cache, predict, FitCache, ModelKind, TrainConfig};
use crate::rng::{seeded, Stream};

/// Shuffles `0..m` and cuts it into `k` contiguous folds; the first `m % k`
/// folds get one extra row. Each fold is returned sorted.
pub fn kfold_split(m: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 folds, got {k}")));
    }
    if k > m {
        return Err(Error::InvalidArgument(format!("{k} folds requested for {m} rows")));
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(&mut seeded(seed, Stream::Folds));
    let (base, extra) = (m / k, m % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        let mut fold = order[start..start + len].to_vec();
        fold.sort_unstable();
        folds.push(fold);
        start += len;
    }
    Ok(folds)
}

/// Called once per fold with the rows the scaler was fitted on and the rows
/// it is then applied to for validation.
pub trait CvObserver: Sync {
    fn scaler_fitted(&self, fold: usize, scaler_rows: &[String], validation_rows: &[String]);
}

/// Counts validation rows that leaked into a fold's scaler statistics.
#[derive(Debug, Default)]
pub struct LeakageCounter {
    violations: AtomicUsize,
    folds_seen: AtomicUsize,
}

impl LeakageCounter {
    pub fn violations(&self) -> usize {
        self.violations.load(Ordering::SeqCst)
    }

    pub fn folds_seen(&self) -> usize {
        self.folds_seen.load(Ordering::SeqCst)
    }
}

impl CvObserver for LeakageCounter {
    fn scaler_fitted(&self, _fold: usize, scaler_rows: &[String], validation_rows: &[String]) {
        let fit: HashSet<&String> = scaler_rows.iter().collect();
        let leaked = validation_rows.iter().filter(|r| fit.contains(r)).count();
        self.violations.fetch_add(leaked, Ordering::SeqCst);
        self.folds_seen.fetch_add(1, Ordering::SeqCst);
    }
}

struct NoObserver;

impl CvObserver for NoObserver {
    fn scaler_fitted(&self, _: usize, _: &[String], _: &[String]) {}
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub label: String,
    pub hyperparams: BTreeMap<String, f64>,
    /// Validation MAE per fold; empty when the cell failed.
    pub fold_mae: Vec<f64>,
    pub mean_mae: Option<f64>,
    /// Sample standard deviation of the fold MAEs.
    pub std_mae: Option<f64>,
    /// Folds whose fit did not report convergence.
    pub non_converged_folds: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub kind: ModelKind,
    pub cells: Vec<CellResult>,
    pub winner: usize,
    /// Row ids of each validation fold.
    pub folds: Vec<Vec<String>>,
    pub leakage_violations: usize,
}

impl CvResult {
    pub fn winning_cell(&self) -> &CellResult {
        &self.cells[self.winner]
    }

    /// Fold-by-cell MAE table as CSV.
    pub fn to_csv(&self) -> String {
        let keys: Vec<&String> = self.cells.first().map(|c| c.hyperparams.keys().collect()).unwrap_or_default();
        let k = self.folds.len();
        let mut out = String::from("cell,label");
        for key in &keys {
            out.push(',');
            out.push_str(key);
        }
        out.push_str(",mean_mae,std_mae");
        for f in 0..k {
            out.push_str(&format!(",fold_{}", f + 1));
        }
        out.push_str(",status,winner\n");
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for (i, c) in self.cells.iter().enumerate() {
            out.push_str(&format!("{},\"{}\"", i, c.label));
            for key in &keys {
                out.push_str(&format!(",{}", opt(c.hyperparams.get(*key).copied())));
            }
            out.push_str(&format!(",{},{}", opt(c.mean_mae), opt(c.std_mae)));
            for f in 0..k {
                out.push_str(&format!(",{}", opt(c.fold_mae.get(f).copied())));
            }
            let status = if c.error.is_some() { "failed" } else { "ok" };
            out.push_str(&format!(",{},{}\n", status, u8::from(i == self.winner)));
        }
        out
    }
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

type FoldOutcome = Vec<std::result::Result<(f64, bool), String>>;

fn run_fold(
    x: &FeatureMatrix,
    fold: usize,
    val_rows: &[usize],
    grid: &[TrainConfig],
    observer: &dyn CvObserver,
) -> std::result::Result<FoldOutcome, String> {
    let held: HashSet<usize> = val_rows.iter().copied().collect();
    let train_rows: Vec<usize> = (0..x.nrows()).filter(|r| !held.contains(r)).collect();
    let train = x.select_rows(&train_rows);
    let val = x.select_rows(val_rows);
    let scaler = fit_scaler(&train).map_err(|e| e.to_string())?;
    observer.scaler_fitted(fold, train.row_ids(), val.row_ids());
    let train = apply_scaler(&scaler, &train).map_err(|e| e.to_string())?;
    let val = apply_scaler(&scaler, &val).map_err(|e| e.to_string())?;
    let cache = FitCache::new();
    Ok(grid
        .iter()
        .map(|cell| {
            let model = fit_with_cache(cell, &train, &cache).map_err(|e| e.to_string())?;
            let pred = predict(&model, &val).map_err(|e| e.to_string())?;
            let mae = pred
                .iter()
                .zip(val.target())
                .map(|(p, t)| (p - t).abs())
                .sum::<f64>()
                / pred.len() as f64;
            if !mae.is_finite() {
                return Err("non-finite validation MAE".to_string());
            }
            Ok((mae, model.diagnostics.converged))
        })
        .collect())
}

/// k-fold grid search on an unscaled training matrix. The scaler is refitted
/// inside every fold on that fold's training rows only.
pub fn grid_search(grid: &[TrainConfig], x: &FeatureMatrix, folds: &[Vec<usize>]) -> Result<CvResult> {
    grid_search_observed(grid, x, folds, &NoObserver)
}

pub fn grid_search_observed(
    grid: &[TrainConfig],
    x: &FeatureMatrix,
    folds: &[Vec<usize>],
    observer: &dyn CvObserver,
) -> Result<CvResult> {
    let kind = match grid.first() {
        Some(c) => c.kind(),
        None => return Err(Error::Config("empty hyperparameter grid".into())),
    };
    if grid.iter().any(|c| c.kind() != kind) {
        return Err(Error::Config("a grid must hold a single model kind".into()));
    }
    if folds.len() < 2 {
        return Err(Error::InvalidArgument("grid search needs at least 2 folds".into()));
    }
    let audit = LeakageCounter::default();
    struct Both<'a>(&'a LeakageCounter, &'a dyn CvObserver);
    impl CvObserver for Both<'_> {
        fn scaler_fitted(&self, fold: usize, s: &[String], v: &[String]) {
            self.0.scaler_fitted(fold, s, v);
            self.1.scaler_fitted(fold, s, v);
        }
    }
    let both = Both(&audit, observer);

    let outcomes: Vec<std::result::Result<FoldOutcome, String>> = folds
        .par_iter()
        .enumerate()
        .map(|(f, rows)| run_fold(x, f, rows, grid, &both))
        .collect();

    let mut cells = Vec::with_capacity(grid.len());
    for (c, cell) in grid.iter().enumerate() {
        let mut fold_mae = Vec::with_capacity(folds.len());
        let mut non_converged = 0;
        let mut error = None;
        for (f, outcome) in outcomes.iter().enumerate() {
            let r = match outcome {
                Ok(per_cell) => per_cell[c].clone(),
                Err(e) => Err(e.clone()),
            };
            match r {
                Ok((mae, converged)) => {
                    fold_mae.push(mae);
                    non_converged += usize::from(!converged);
                }
                Err(e) => {
                    error = Some(format!("fold {}: {e}", f + 1));
                    break;
                }
            }
        }
        if let Some(e) = &error {
            log::warn!("{} cell {} failed: {e}", kind, cell.label());
            fold_mae.clear();
        }
        let (mean_mae, std_mae) = if error.is_none() {
            let (m, s) = mean_std(&fold_mae);
            (Some(m), Some(s))
        } else {
            (None, None)
        };
        cells.push(CellResult {
            label: cell.label(),
            hyperparams: cell.hyperparams(),
            fold_mae,
            mean_mae,
            std_mae,
            non_converged_folds: non_converged,
            error,
        });
    }

    let winner = cells
        .iter()
        .enumerate()
        .filter(|(_, c)| c.error.is_none())
        .min_by(|(i, a), (j, b)| {
            let ka = (a.mean_mae.unwrap_or(f64::INFINITY), a.std_mae.unwrap_or(f64::INFINITY));
            let kb = (b.mean_mae.unwrap_or(f64::INFINITY), b.std_mae.unwrap_or(f64::INFINITY));
            ka.0.total_cmp(&kb.0).then(ka.1.total_cmp(&kb.1)).then(i.cmp(j))
        })
        .map(|(i, _)| i)
        .ok_or_else(|| Error::Numerical(format!("every {kind} grid cell failed")))?;

    Ok(CvResult {
        kind,
        cells,
        winner,
        folds: folds
            .iter()
            .map(|f| f.iter().map(|&r| x.row_ids()[r].clone()).collect())
            .collect(),
        leakage_violations: audit.violations(),
    })
}
