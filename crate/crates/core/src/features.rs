//! Design matrices, min-max scaling, feature-set fusion and feature-age correlation.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{Cohort, FeatureSet};
use crate::error::{Error, Result};

/// `m × n` feature values with row ids, column names and the age target.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    values: DMatrix<f64>,
    row_ids: Vec<String>,
    col_names: Vec<String>,
    target: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(
        values: DMatrix<f64>,
        row_ids: Vec<String>,
        col_names: Vec<String>,
        target: Vec<f64>,
    ) -> Result<Self> {
        if values.nrows() != row_ids.len() || values.nrows() != target.len() {
            return Err(Error::Dimension(format!(
                "{} rows but {} ids and {} targets",
                values.nrows(),
                row_ids.len(),
                target.len()
            )));
        }
        if values.ncols() != col_names.len() {
            return Err(Error::Dimension(format!(
                "{} columns but {} names",
                values.ncols(),
                col_names.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            let (r, c) = (i % values.nrows(), i / values.nrows());
            return Err(Error::InvalidCell {
                row: r + 1,
                id: row_ids[r].clone(),
                column: col_names[c].clone(),
                reason: "non-finite value".into(),
            });
        }
        if let Some(r) = target.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidCell {
                row: r + 1,
                id: row_ids[r].clone(),
                column: "age".into(),
                reason: "non-finite target".into(),
            });
        }
        Ok(FeatureMatrix {
            values,
            row_ids,
            col_names,
            target,
        })
    }

    /// Convenience constructor with generated ids and names, mostly for tests.
    pub fn from_rows(rows: &[Vec<f64>], target: &[f64]) -> Result<Self> {
        let m = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Dimension("ragged rows".into()));
        }
        let values = DMatrix::from_fn(m, n, |i, j| rows[i][j]);
        FeatureMatrix::new(
            values,
            (0..m).map(|i| format!("r{i}")).collect(),
            (0..n).map(|j| format!("x{j}")).collect(),
            target.to_vec(),
        )
    }

    /// Builds the matrix for `ids` (in the given order) from the columns of
    /// `set`. Requires unique cohort ids.
    pub fn from_cohort_set(cohort: &Cohort, ids: &[String], set: FeatureSet) -> Result<Self> {
        let cols = cohort.schema().indices_of(set);
        if cols.is_empty() {
            return Err(Error::Schema(format!("cohort has no {set} features")));
        }
        let index = cohort.index_by_id();
        let rows = ids
            .iter()
            .map(|id| {
                index
                    .get(id.as_str())
                    .map(|&i| &cohort.records()[i])
                    .ok_or_else(|| Error::InvalidArgument(format!("id '{id}' not in cohort")))
            })
            .collect::<Result<Vec<_>>>()?;
        let values = DMatrix::from_fn(rows.len(), cols.len(), |i, j| rows[i].features[cols[j]]);
        let names = cols
            .iter()
            .map(|&c| cohort.schema().features()[c].name.clone())
            .collect();
        FeatureMatrix::new(
            values,
            ids.to_vec(),
            names,
            rows.iter().map(|r| r.age).collect(),
        )
    }

    /// Builds each requested set and fuses them in the order given.
    pub fn from_cohort(cohort: &Cohort, ids: &[String], sets: &[FeatureSet]) -> Result<Self> {
        let blocks = sets
            .iter()
            .map(|&s| FeatureMatrix::from_cohort_set(cohort, ids, s))
            .collect::<Result<Vec<_>>>()?;
        fuse(&blocks)
    }

    /// Builds the matrix for `ids` from named cohort columns, in the order given.
    pub fn from_cohort_columns(cohort: &Cohort, ids: &[String], names: &[String]) -> Result<Self> {
        let cols = names
            .iter()
            .map(|n| {
                cohort
                    .schema()
                    .position(n)
                    .ok_or_else(|| Error::Schema(format!("cohort has no feature '{n}'")))
            })
            .collect::<Result<Vec<_>>>()?;
        let index = cohort.index_by_id();
        let rows = ids
            .iter()
            .map(|id| {
                index
                    .get(id.as_str())
                    .map(|&i| &cohort.records()[i])
                    .ok_or_else(|| Error::InvalidArgument(format!("id '{id}' not in cohort")))
            })
            .collect::<Result<Vec<_>>>()?;
        let values = DMatrix::from_fn(rows.len(), cols.len(), |i, j| rows[i].features[cols[j]]);
        FeatureMatrix::new(
            values,
            ids.to_vec(),
            names.to_vec(),
            rows.iter().map(|r| r.age).collect(),
        )
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn row_ids(&self) -> &[String] {
        &self.row_ids
    }

    pub fn col_names(&self) -> &[String] {
        &self.col_names
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    pub fn select_rows(&self, rows: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            values: self.values.select_rows(rows.iter()),
            row_ids: rows.iter().map(|&i| self.row_ids[i].clone()).collect(),
            col_names: self.col_names.clone(),
            target: rows.iter().map(|&i| self.target[i]).collect(),
        }
    }

    pub fn with_values(&self, values: DMatrix<f64>) -> Result<FeatureMatrix> {
        FeatureMatrix::new(
            values,
            self.row_ids.clone(),
            self.col_names.clone(),
            self.target.clone(),
        )
    }

    pub fn with_target(&self, target: Vec<f64>) -> Result<FeatureMatrix> {
        FeatureMatrix::new(
            self.values.clone(),
            self.row_ids.clone(),
            self.col_names.clone(),
            target,
        )
    }
}

/// Per-feature minimum and maximum learned on a training matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub names: Vec<String>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

pub fn fit_scaler(train: &FeatureMatrix) -> Result<ScalerParams> {
    if train.nrows() == 0 {
        return Err(Error::Empty("cannot fit a scaler on zero rows".into()));
    }
    let (min, max) = train
        .values
        .column_iter()
        .map(|c| (c.min(), c.max()))
        .unzip();
    Ok(ScalerParams {
        names: train.col_names.clone(),
        min,
        max,
    })
}

/// `(x - min) / (max - min)` per column. Degenerate columns map to 0 and
/// values outside the training range are not clipped.
pub fn apply_scaler(params: &ScalerParams, x: &FeatureMatrix) -> Result<FeatureMatrix> {
    if params.names != x.col_names {
        return Err(Error::Dimension(
            "scaler feature names do not match the matrix columns".into(),
        ));
    }
    let mut values = x.values.clone();
    for (j, mut col) in values.column_iter_mut().enumerate() {
        let (lo, hi) = (params.min[j], params.max[j]);
        let range = hi - lo;
        if range > 0.0 {
            col.apply(|v| *v = (*v - lo) / range);
        } else {
            col.fill(0.0);
        }
    }
    x.with_values(values)
}

impl ScalerParams {
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// `feature,min,max` CSV.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("feature,min,max\n");
        for ((n, lo), hi) in self.names.iter().zip(&self.min).zip(&self.max) {
            out.push_str(&format!("{n},{lo},{hi}\n"));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let mut p = ScalerParams {
            names: Vec::new(),
            min: Vec::new(),
            max: Vec::new(),
        };
        for (i, row) in reader.records().enumerate() {
            let row = row?;
            let num = |k: usize, col: &str| -> Result<f64> {
                row.get(k)
                    .and_then(|s| s.parse::<f64>().ok())
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::InvalidCell {
                        row: i + 1,
                        id: row.get(0).unwrap_or("").to_string(),
                        column: col.into(),
                        reason: "expected a finite number".into(),
                    })
            };
            let (lo, hi) = (num(1, "min")?, num(2, "max")?);
            if lo > hi {
                return Err(Error::Schema(format!("scaler row {}: min > max", i + 1)));
            }
            p.names.push(row[0].to_string());
            p.min.push(lo);
            p.max.push(hi);
        }
        Ok(p)
    }

    /// Hex SHA-256 of the CSV form, used by model files to reference their scaler.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_csv().as_bytes()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ScalerParams::from_csv(&text)
    }
}

/// Column-wise concatenation in the order given.
pub fn fuse(sets: &[FeatureMatrix]) -> Result<FeatureMatrix> {
    let first = sets
        .first()
        .ok_or_else(|| Error::Empty("nothing to fuse".into()))?;
    let mut seen = HashSet::new();
    for s in sets {
        if s.row_ids != first.row_ids || s.target != first.target {
            return Err(Error::Dimension(
                "fused matrices must share row ids and targets in the same order".into(),
            ));
        }
        for n in &s.col_names {
            if !seen.insert(n.as_str()) {
                return Err(Error::Schema(format!("duplicate column '{n}' in fusion")));
            }
        }
    }
    let m = first.nrows();
    let n: usize = sets.iter().map(FeatureMatrix::ncols).sum();
    let mut values = DMatrix::zeros(m, n);
    let mut names = Vec::with_capacity(n);
    let mut offset = 0;
    for s in sets {
        values.columns_mut(offset, s.ncols()).copy_from(&s.values);
        names.extend(s.col_names.iter().cloned());
        offset += s.ncols();
    }
    FeatureMatrix::new(values, first.row_ids.clone(), names, first.target.clone())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureCorrelation {
    pub feature: String,
    pub r: f64,
    /// Set when the feature column is constant; `r` is then reported as 0.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub features: Vec<FeatureCorrelation>,
}

impl CorrelationReport {
    pub fn get(&self, feature: &str) -> Option<&FeatureCorrelation> {
        self.features.iter().find(|f| f.feature == feature)
    }

    /// Mean r over non-degenerate features accepted by `keep`.
    pub fn mean_r(&self, keep: impl Fn(&str) -> bool) -> Option<f64> {
        let rs: Vec<f64> = self
            .features
            .iter()
            .filter(|f| !f.degenerate && keep(&f.feature))
            .map(|f| f.r)
            .collect();
        (!rs.is_empty()).then(|| rs.iter().sum::<f64>() / rs.len() as f64)
    }
}

/// Pearson correlation of every column with the age target.
pub fn correlate_with_age(x: &FeatureMatrix) -> Result<CorrelationReport> {
    let m = x.nrows();
    if m < 3 {
        return Err(Error::InvalidArgument(format!("need at least 3 rows, got {m}")));
    }
    let mean_age = x.target.iter().sum::<f64>() / m as f64;
    let dy: Vec<f64> = x.target.iter().map(|a| a - mean_age).collect();
    let syy: f64 = dy.iter().map(|d| d * d).sum();
    if syy == 0.0 {
        return Err(Error::InvalidArgument("age vector is constant".into()));
    }
    let features = x
        .values
        .column_iter()
        .zip(&x.col_names)
        .map(|(col, name)| {
            let mean = col.sum() / m as f64;
            let (mut sxy, mut sxx) = (0.0, 0.0);
            for (v, d) in col.iter().zip(&dy) {
                let dx = v - mean;
                sxy += dx * d;
                sxx += dx * dx;
            }
            let degenerate = sxx == 0.0;
            let r = if degenerate {
                0.0
            } else {
                (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0)
            };
            FeatureCorrelation {
                feature: name.clone(),
                r,
                degenerate,
            }
        })
        .collect();
    Ok(CorrelationReport { features })
}
