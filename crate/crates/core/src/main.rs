use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use brainage::analysis::{kmeans_1d, tsne_embed, TsneParams};
use brainage::dataset::{dedup_conflicting_ids, load_cohort, write_cohort, FeatureSchema, FeatureSet, SplitAssignment};
use brainage::features::{apply_scaler, fit_scaler, FeatureMatrix, ScalerParams};
use brainage::pipeline::{evaluate_saved, parse_feature_sets, run_experiment, write_bundle, ExperimentConfig};
use brainage::regressors::{ModelFile, ModelKind};
use brainage::synth::{generate, truth_to_csv, SynthSpec};
use brainage::{Error, Result};

#[derive(Parser)]
#[command(name = "brainage", version, about = "Brain age estimation from region-wise MRI features")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a feature table against a schema and write a clean cohort file.
    Ingest {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        schema: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cross-validate, refit and evaluate every configured model.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        cohort: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated feature sets, or `all`.
        #[arg(long, value_delimiter = ',')]
        feature_sets: Option<Vec<String>>,
        #[arg(long, value_delimiter = ',')]
        models: Option<Vec<String>>,
        #[arg(long)]
        cv_folds: Option<usize>,
        #[arg(long)]
        test_fraction: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score a saved model on the test partition of a saved split.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        cohort: PathBuf,
        #[arg(long)]
        split: PathBuf,
        /// Defaults to `scaler.csv` next to the model file.
        #[arg(long)]
        scaler: Option<PathBuf>,
    },
    /// 1-D k-means on the cohort's ages.
    Cluster {
        #[arg(long)]
        cohort: PathBuf,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// t-SNE embedding of one feature set; writes `participant_id,age,sex,x,y`.
    Embed {
        #[arg(long)]
        cohort: PathBuf,
        #[arg(long)]
        set: String,
        #[arg(long, default_value_t = 30.0)]
        perplexity: f64,
        #[arg(long, default_value_t = 1000)]
        iterations: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Embed unscaled features instead of min-max scaled ones.
        #[arg(long)]
        raw: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic cohort with a planted linear age law.
    Synth {
        #[arg(long, default_value_t = 3965)]
        m: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Feature noise in years of age.
        #[arg(long, default_value_t = 4.0)]
        noise: f64,
        #[arg(long, value_delimiter = ',', default_value = "all")]
        feature_sets: Vec<String>,
        #[arg(long, default_value_t = brainage::dataset::atlas::CAT12_DEFAULT_REGIONS)]
        cat12_regions: usize,
        /// Defaults to `truth.csv` next to `--out`.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Defaults to `schema.txt` next to `--out`.
        #[arg(long)]
        schema_out: Option<PathBuf>,
    },
}

enum Outcome {
    Done,
    NotConverged,
}

fn sibling(path: &Path, name: &str) -> PathBuf {
    path.parent().unwrap_or_else(|| Path::new(".")).join(name)
}

fn run(cli: Cli) -> Result<Outcome> {
    match cli.command {
        Command::Ingest { data, schema, out } => {
            let schema = FeatureSchema::load(&schema)?;
            let cohort = load_cohort(&data, Some(&schema))?;
            let (cohort, removed) = dedup_conflicting_ids(cohort);
            for id in &removed {
                eprintln!("excluded conflicting record: {id}");
            }
            write_cohort(&cohort, &out)?;
            println!("{} subjects, {} features, {} excluded", cohort.len(), schema.len(), removed.len());
        }
        Command::Train {
            config,
            cohort,
            out,
            feature_sets,
            models,
            cv_folds,
            test_fraction,
            seed,
        } => {
            let mut cfg = match config {
                Some(p) => ExperimentConfig::load(&p)?,
                None => ExperimentConfig::default(),
            };
            if let Some(sets) = feature_sets {
                cfg.feature_sets = parse_feature_sets(&sets)?;
            }
            if let Some(models) = models {
                cfg.models = models.iter().map(|m| m.parse::<ModelKind>()).collect::<Result<_>>()?;
            }
            if let Some(k) = cv_folds {
                cfg.cv_folds = k;
            }
            if let Some(f) = test_fraction {
                cfg.test_fraction = f;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            cfg.validate()?;
            let cohort = load_cohort(&cohort, None)?;
            let outcome = run_experiment(&cfg, cohort)?;
            write_bundle(&outcome, &out)?;
            println!("model  winner                 cv_mae     test_mae   rmse       r2");
            for m in &outcome.models {
                println!(
                    "{:<6} {:<22} {:<10.4} {:<10.4} {:<10.4} {:.4}",
                    m.kind.as_str(),
                    m.cv.winning_cell().label,
                    m.cv.winning_cell().mean_mae.unwrap_or(f64::NAN),
                    m.test.mae,
                    m.test.rmse,
                    m.test.r2.unwrap_or(f64::NAN)
                );
            }
            if !outcome.all_converged() {
                for m in outcome.models.iter().filter(|m| !m.converged()) {
                    eprintln!("{} winner did not converge", m.kind);
                }
                return Ok(Outcome::NotConverged);
            }
        }
        Command::Evaluate {
            model,
            cohort,
            split,
            scaler,
        } => {
            let scaler_path = scaler.unwrap_or_else(|| sibling(&model, "scaler.csv"));
            let model = ModelFile::load(&model)?;
            let scaler = ScalerParams::load(&scaler_path)?;
            let cohort = load_cohort(&cohort, None)?;
            let split = SplitAssignment::load(&split, &cohort)?;
            let (report, bias) = evaluate_saved(&model, &scaler, &cohort, &split)?;
            let out = serde_json::json!({ "kind": model.model.kind, "test": report, "bias": bias });
            println!("{}", serde_json::to_string_pretty(&out)?);
        }
        Command::Cluster { cohort, k, seed } => {
            let cohort = load_cohort(&cohort, None)?;
            let summary = kmeans_1d(&cohort.ages(), k, seed)?;
            let out = serde_json::json!({ "clusters": summary.clusters, "wcss": summary.wcss });
            println!("{}", serde_json::to_string_pretty(&out)?);
        }
        Command::Embed {
            cohort,
            set,
            perplexity,
            iterations,
            seed,
            raw,
            out,
        } => {
            let set: FeatureSet = set.parse()?;
            let cohort = load_cohort(&cohort, None)?;
            let ids = cohort.ids();
            let mut x = FeatureMatrix::from_cohort_set(&cohort, &ids, set)?;
            if !raw {
                x = apply_scaler(&fit_scaler(&x)?, &x)?;
            }
            let params = TsneParams {
                perplexity,
                iterations,
                seed,
                ..Default::default()
            };
            let emb = tsne_embed(&x, &params)?;
            let mut text = String::from("participant_id,age,sex,x,y\n");
            for (r, c) in cohort.records().iter().zip(&emb.coords) {
                text.push_str(&format!("{},{},{},{},{}\n", r.id, r.age, r.sex, c[0], c[1]));
            }
            std::fs::write(&out, text).map_err(|e| Error::io(&out, e))?;
            println!("final KL divergence {}", emb.kl);
        }
        Command::Synth {
            m,
            seed,
            out,
            noise,
            feature_sets,
            cat12_regions,
            truth,
            schema_out,
        } => {
            let sets = parse_feature_sets(&feature_sets)?;
            let schema = FeatureSchema::standard(&sets, cat12_regions)?;
            let mut spec = SynthSpec::new(m, seed, schema);
            spec.noise_years = noise;
            let s = generate(&spec)?;
            write_cohort(&s.cohort, &out)?;
            let truth = truth.unwrap_or_else(|| sibling(&out, "truth.csv"));
            std::fs::write(&truth, truth_to_csv(&s.truth)?).map_err(|e| Error::io(&truth, e))?;
            let schema_path = schema_out.unwrap_or_else(|| sibling(&out, "schema.txt"));
            s.cohort.schema().save(&schema_path)?;
            println!("{} subjects, {} features", s.cohort.len(), s.cohort.schema().len());
        }
    }
    Ok(Outcome::Done)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::NotConverged) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
