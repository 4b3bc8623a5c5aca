use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::cv::{grid_search_observed, kfold_split, CvObserver, CvResult};
use crate::analysis::{bias_summary, box_stats, subgroup_eval, BiasSummary, EvalReport};
use crate::dataset::{dedup_conflicting_ids, stratified_split, Cohort, Sex, SplitAssignment};
use crate::error::{Error, Result, StageExt};
use crate::features::{apply_scaler, fit_scaler, FeatureMatrix, ScalerParams};
use crate::regressors::{fit, predict, LinearModel, ModelFile, ModelKind};

pub const REPORT_FORMAT_VERSION: u32 = 1;
pub const GROUPS: [&str; 3] = ["all", "male", "female"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelOutcome {
    pub kind: ModelKind,
    pub cv: CvResult,
    pub model: LinearModel,
    /// Hold-out evaluation with nested male/female reports.
    pub test: EvalReport,
    /// Keyed by `all`, `male`, `female`; groups too small for a slope are absent.
    pub bias: BTreeMap<String, BiasSummary>,
    pub predictions: Vec<f64>,
}

impl ModelOutcome {
    pub fn converged(&self) -> bool {
        self.model.diagnostics.converged
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutcome {
    pub config: ExperimentConfig,
    pub n_subjects: usize,
    pub removed_ids: Vec<String>,
    pub split: SplitAssignment,
    pub scaler: ScalerParams,
    pub test_ids: Vec<String>,
    pub test_age: Vec<f64>,
    pub test_sex: Vec<Sex>,
    pub leakage_violations: usize,
    pub models: Vec<ModelOutcome>,
}

impl ExperimentOutcome {
    pub fn all_converged(&self) -> bool {
        self.models.iter().all(ModelOutcome::converged)
    }

    pub fn model(&self, kind: ModelKind) -> Option<&ModelOutcome> {
        self.models.iter().find(|m| m.kind == kind)
    }
}

/// Dedup, split, cross-validated selection per model kind, refit on the full
/// training split and hold-out evaluation.
pub fn run_experiment(config: &ExperimentConfig, cohort: Cohort) -> Result<ExperimentOutcome> {
    struct Quiet;
    impl CvObserver for Quiet {
        fn scaler_fitted(&self, _: usize, _: &[String], _: &[String]) {}
    }
    run_experiment_observed(config, cohort, &Quiet)
}

pub fn run_experiment_observed(
    config: &ExperimentConfig,
    cohort: Cohort,
    observer: &dyn CvObserver,
) -> Result<ExperimentOutcome> {
    config.validate().stage("config")?;
    let n_subjects = cohort.len();
    let (cohort, removed_ids) = dedup_conflicting_ids(cohort);
    if !removed_ids.is_empty() {
        log::info!("excluded {} records with conflicting duplicate ids", removed_ids.len());
    }
    let split = stratified_split(&cohort, config.test_fraction, config.seed).stage("split")?;
    let train = FeatureMatrix::from_cohort(&cohort, &split.train_ids, &config.feature_sets).stage("features")?;
    let test = FeatureMatrix::from_cohort(&cohort, &split.test_ids, &config.feature_sets).stage("features")?;
    let folds = kfold_split(train.nrows(), config.cv_folds, config.seed).stage("folds")?;

    let scaler = fit_scaler(&train).stage("scaling")?;
    let train_scaled = apply_scaler(&scaler, &train).stage("scaling")?;
    let test_scaled = apply_scaler(&scaler, &test).stage("scaling")?;
    let index = cohort.index_by_id();
    let test_sex: Vec<Sex> = split
        .test_ids
        .iter()
        .map(|id| cohort.records()[index[id.as_str()]].sex)
        .collect();

    let mut models = Vec::with_capacity(config.models.len());
    let mut leakage_violations = 0;
    for &kind in &config.models {
        let grid = config.grid(kind);
        let cv = grid_search_observed(&grid, &train, &folds, observer).stage("grid_search")?;
        leakage_violations += cv.leakage_violations;
        let best = grid[cv.winner];
        log::info!(
            "{kind}: winner {} with CV MAE {:.4}",
            best.label(),
            cv.winning_cell().mean_mae.unwrap_or(f64::NAN)
        );
        let model = fit(&best, &train_scaled).stage("refit")?;
        if !model.diagnostics.converged {
            log::warn!("{kind} refit did not converge");
        }
        if model.diagnostics.rank_deficient {
            match model.diagnostics.rank {
                Some(r) => log::warn!(
                    "{kind} training design is rank deficient (rank {r} < {} features)",
                    train_scaled.ncols()
                ),
                None => log::warn!("{kind} training design is rank deficient"),
            }
        }
        let pred = predict(&model, &test_scaled).stage("predict")?;
        let report = subgroup_eval(test.target(), &pred, &test_sex).stage("evaluate")?;
        let bias = bias_by_group(test.target(), &pred, &test_sex);
        models.push(ModelOutcome {
            kind,
            cv,
            model,
            test: report,
            bias,
            predictions: pred,
        });
    }

    Ok(ExperimentOutcome {
        config: config.clone(),
        n_subjects,
        removed_ids,
        test_ids: split.test_ids.clone(),
        test_age: test.target().to_vec(),
        test_sex,
        split,
        scaler,
        leakage_violations,
        models,
    })
}

fn group_rows(sex: &[Sex], group: &str) -> Vec<usize> {
    (0..sex.len())
        .filter(|&i| match group {
            "male" => sex[i] == Sex::Male,
            "female" => sex[i] == Sex::Female,
            _ => true,
        })
        .collect()
}

fn bias_by_group(truth: &[f64], pred: &[f64], sex: &[Sex]) -> BTreeMap<String, BiasSummary> {
    let mut out = BTreeMap::new();
    for g in GROUPS {
        let rows = group_rows(sex, g);
        let t: Vec<f64> = rows.iter().map(|&i| truth[i]).collect();
        let p: Vec<f64> = rows.iter().map(|&i| pred[i]).collect();
        match bias_summary(&t, &p) {
            Ok(b) => {
                out.insert(g.to_string(), b);
            }
            Err(e) => log::warn!("no bias summary for group {g}: {e}"),
        }
    }
    out
}

#[derive(Serialize)]
struct ModelSection<'a> {
    kind: ModelKind,
    winner: &'a str,
    hyperparams: &'a BTreeMap<String, f64>,
    cv_mean_mae: Option<f64>,
    cv_std_mae: Option<f64>,
    converged: bool,
    diagnostics: &'a crate::regressors::FitDiagnostics,
    test: &'a EvalReport,
    bias: &'a BTreeMap<String, BiasSummary>,
}

#[derive(Serialize)]
struct Report<'a> {
    format_version: u32,
    feature_sets: String,
    config: &'a ExperimentConfig,
    n_subjects: usize,
    removed_ids: &'a [String],
    n_train: usize,
    n_test: usize,
    n_test_male: usize,
    n_test_female: usize,
    scaler_sha256: String,
    leakage_violations: usize,
    models: Vec<ModelSection<'a>>,
}

fn write(dir: &Path, name: &str, text: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, text).map_err(|e| Error::io(path, e))
}

/// Writes the report bundle into `dir` (created if missing). Output is
/// byte-identical for identical outcomes.
pub fn write_bundle(outcome: &ExperimentOutcome, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let digest = outcome.scaler.digest();
    let report = Report {
        format_version: REPORT_FORMAT_VERSION,
        feature_sets: outcome.config.feature_label(),
        config: &outcome.config,
        n_subjects: outcome.n_subjects,
        removed_ids: &outcome.removed_ids,
        n_train: outcome.split.train_ids.len(),
        n_test: outcome.split.test_ids.len(),
        n_test_male: outcome.split.male_test_ids.len(),
        n_test_female: outcome.split.female_test_ids.len(),
        scaler_sha256: digest.clone(),
        leakage_violations: outcome.leakage_violations,
        models: outcome
            .models
            .iter()
            .map(|m| {
                let cell = m.cv.winning_cell();
                ModelSection {
                    kind: m.kind,
                    winner: &cell.label,
                    hyperparams: &cell.hyperparams,
                    cv_mean_mae: cell.mean_mae,
                    cv_std_mae: cell.std_mae,
                    converged: m.converged(),
                    diagnostics: &m.model.diagnostics,
                    test: &m.test,
                    bias: &m.bias,
                }
            })
            .collect(),
    };
    write(dir, "report.json", &(serde_json::to_string_pretty(&report)? + "\n"))?;

    let mut preds = String::from("participant_id,sex,true_age,model,predicted_age,brain_ead\n");
    for m in &outcome.models {
        for (i, id) in outcome.test_ids.iter().enumerate() {
            preds.push_str(&format!(
                "{},{},{},{},{},{}\n",
                id,
                outcome.test_sex[i],
                outcome.test_age[i],
                m.kind,
                m.predictions[i],
                m.predictions[i] - outcome.test_age[i]
            ));
        }
    }
    write(dir, "predictions.csv", &preds)?;

    let label = outcome.config.feature_label();
    let mut boxes =
        String::from("model,feature_set,group,n,q1,median,q3,whisker_low,whisker_high,outliers\n");
    for g in GROUPS {
        let rows = group_rows(&outcome.test_sex, g);
        let mut scatter = String::from("model,participant_id,true_age,predicted_age,sex\n");
        for m in &outcome.models {
            for &i in &rows {
                scatter.push_str(&format!(
                    "{},{},{},{},{}\n",
                    m.kind, outcome.test_ids[i], outcome.test_age[i], m.predictions[i], outcome.test_sex[i]
                ));
            }
            let ead: Vec<f64> = rows
                .iter()
                .map(|&i| m.predictions[i] - outcome.test_age[i])
                .collect();
            if let Ok(b) = box_stats(&ead) {
                let outliers: Vec<String> = b.outliers.iter().map(f64::to_string).collect();
                boxes.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{},{}\n",
                    m.kind,
                    label,
                    g,
                    b.n,
                    b.q1,
                    b.median,
                    b.q3,
                    b.whisker_low,
                    b.whisker_high,
                    outliers.join(";")
                ));
            }
        }
        write(dir, &format!("scatter_{g}.csv"), &scatter)?;
    }
    write(dir, "ead_box.csv", &boxes)?;

    for m in &outcome.models {
        let file = ModelFile::new(m.model.clone(), Some(digest.clone()));
        write(dir, &format!("model_{}.json", m.kind), &(file.to_json()? + "\n"))?;
        write(dir, &format!("cv_{}.csv", m.kind), &m.cv.to_csv())?;
    }
    outcome.scaler.save(&dir.join("scaler.csv"))?;
    outcome.split.save(&dir.join("split.csv"))?;
    Ok(())
}

/// Scores a saved model on the test partition of a saved split. The scaler's
/// digest must match the one recorded in the model file.
pub fn evaluate_saved(
    model: &ModelFile,
    scaler: &ScalerParams,
    cohort: &Cohort,
    split: &SplitAssignment,
) -> Result<(EvalReport, BTreeMap<String, BiasSummary>)> {
    let digest = scaler.digest();
    match &model.scaler_sha256 {
        Some(expected) if *expected != digest => {
            return Err(Error::InvalidArgument(format!(
                "scaler digest {digest} does not match the model's {expected}"
            )))
        }
        None => log::warn!("model file records no scaler digest; cannot verify the scaler"),
        _ => {}
    }
    let x = FeatureMatrix::from_cohort_columns(cohort, &split.test_ids, &model.model.feature_names)
        .stage("features")?;
    let x = apply_scaler(scaler, &x).stage("scaling")?;
    let pred = predict(&model.model, &x).stage("predict")?;
    let index = cohort.index_by_id();
    let sex: Vec<Sex> = split
        .test_ids
        .iter()
        .map(|id| cohort.records()[index[id.as_str()]].sex)
        .collect();
    let report = subgroup_eval(x.target(), &pred, &sex).stage("evaluate")?;
    Ok((report, bias_by_group(x.target(), &pred, &sex)))
}
