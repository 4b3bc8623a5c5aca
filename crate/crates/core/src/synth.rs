//! Synthetic cohorts with a planted linear age law, for dataset-free testing.
//!
//! Ages come from a truncated-normal mixture; every feature follows
//! `a * age + b + N(0, sigma)`. Grey-matter features get `a < 0`, CSF features
//! `a > 0`, anything else a random sign.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{age_stratum, Cohort, FeatureSchema, FeatureSet, Sex, SubjectRecord, Tissue};
use crate::error::{Error, Result};
use crate::rng::{seeded, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub mean: f64,
    pub sd: f64,
    pub weight: f64,
}

/// Cluster means and sizes of the reference cohort's three age groups.
pub fn default_age_mixture() -> Vec<MixtureComponent> {
    // narrow enough that 3-means on the draws lands near the component means
    let raw = [(11.6, 3.0, 620.0), (23.0, 3.0, 2223.0), (61.1, 12.0, 366.0)];
    let total: f64 = raw.iter().map(|r| r.2).sum();
    raw.iter()
        .map(|&(mean, sd, w)| MixtureComponent { mean, sd, weight: w / total })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub m: usize,
    pub seed: u64,
    pub age_mixture: Vec<MixtureComponent>,
    pub age_min: f64,
    pub age_max: f64,
    pub schema: FeatureSchema,
    /// Feature noise expressed in years of age: `sigma_i = noise_years * |a_i|`.
    pub noise_years: f64,
    /// Range of `|a_i|`.
    pub slope_range: (f64, f64),
    pub intercept_range: (f64, f64),
}

impl SynthSpec {
    pub fn new(m: usize, seed: u64, schema: FeatureSchema) -> Self {
        SynthSpec {
            m,
            seed,
            age_mixture: default_age_mixture(),
            age_min: 6.0,
            age_max: 86.0,
            schema,
            noise_years: 4.0,
            slope_range: (0.05, 1.0),
            intercept_range: (100.0, 200.0),
        }
    }

    /// All three atlases at full size.
    pub fn full(m: usize, seed: u64) -> Result<Self> {
        let schema = FeatureSchema::standard(&FeatureSet::ALL, crate::dataset::atlas::CAT12_DEFAULT_REGIONS)?;
        Ok(SynthSpec::new(m, seed, schema))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.m == 0 {
            return bad("synthetic cohort needs m >= 1".into());
        }
        if self.age_mixture.is_empty() {
            return bad("age mixture has no components".into());
        }
        let wsum: f64 = self.age_mixture.iter().map(|c| c.weight).sum();
        if (wsum - 1.0).abs() > 1e-9 {
            return bad(format!("mixture weights sum to {wsum}, not 1"));
        }
        for c in &self.age_mixture {
            if !(c.weight >= 0.0 && c.sd > 0.0 && c.mean.is_finite() && c.sd.is_finite()) {
                return bad(format!("invalid mixture component {c:?}"));
            }
        }
        if !(self.age_min > 0.0 && self.age_min < self.age_max && self.age_max < crate::dataset::MAX_AGE) {
            return bad(format!("invalid age range [{}, {}]", self.age_min, self.age_max));
        }
        if !(self.noise_years >= 0.0 && self.noise_years.is_finite()) {
            return bad("noise must be >= 0".into());
        }
        let (lo, hi) = self.slope_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return bad(format!("invalid slope range {:?}", self.slope_range));
        }
        let (lo, hi) = self.intercept_range;
        if !(lo <= hi && lo.is_finite() && hi.is_finite()) {
            return bad(format!("invalid intercept range {:?}", self.intercept_range));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedFeature {
    pub feature: String,
    pub a: f64,
    pub b: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCohort {
    pub cohort: Cohort,
    pub truth: Vec<PlantedFeature>,
}

fn subject_rng(seed: u64, i: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((1 << 32) + i as u64);
    rng
}

fn draw_age<R: Rng>(spec: &SynthSpec, rng: &mut R) -> f64 {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut comp = spec.age_mixture[spec.age_mixture.len() - 1];
    for c in &spec.age_mixture {
        acc += c.weight;
        if u < acc {
            comp = *c;
            break;
        }
    }
    let normal = Normal::new(comp.mean, comp.sd).expect("validated sd");
    loop {
        let a = normal.sample(rng);
        if a >= spec.age_min && a <= spec.age_max {
            return (a * 100.0).round() / 100.0;
        }
    }
}

pub fn generate(spec: &SynthSpec) -> Result<SynthCohort> {
    spec.validate()?;
    let mut rng = seeded(spec.seed, Stream::Synth);
    let truth: Vec<PlantedFeature> = spec
        .schema
        .features()
        .iter()
        .map(|f| {
            let mag = rng.random_range(spec.slope_range.0..=spec.slope_range.1);
            let a = match f.tissue() {
                Tissue::GreyMatter => -mag,
                Tissue::Csf => mag,
                Tissue::Other => {
                    if rng.random::<bool>() {
                        mag
                    } else {
                        -mag
                    }
                }
            };
            let b = rng.random_range(spec.intercept_range.0..=spec.intercept_range.1);
            PlantedFeature {
                feature: f.name.clone(),
                a,
                b,
                sigma: spec.noise_years * mag,
            }
        })
        .collect();

    let width = spec.m.to_string().len().max(6);
    let mut records: Vec<SubjectRecord> = (0..spec.m)
        .into_par_iter()
        .map(|i| {
            let mut r = subject_rng(spec.seed, i);
            let age = draw_age(spec, &mut r);
            let features = truth
                .iter()
                .map(|t| {
                    let noise = if t.sigma > 0.0 {
                        Normal::new(0.0, t.sigma).expect("positive sigma").sample(&mut r)
                    } else {
                        0.0
                    };
                    t.a * age + t.b + noise
                })
                .collect();
            SubjectRecord {
                id: format!("sub-{:0width$}", i + 1),
                age,
                sex: Sex::Male,
                site: None,
                features,
            }
        })
        .collect();

    // alternate sexes within each decade stratum, in id order
    let mut seen: BTreeMap<u32, usize> = BTreeMap::new();
    for rec in records.iter_mut() {
        let k = seen.entry(age_stratum(rec.age)).or_insert(0);
        rec.sex = if k.is_multiple_of(2) { Sex::Male } else { Sex::Female };
        *k += 1;
    }
    let cohort = Cohort::new(spec.schema.clone(), records)?;
    Ok(SynthCohort { cohort, truth })
}

pub fn truth_to_csv(truth: &[PlantedFeature]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for t in truth {
        w.serialize(t)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::io("truth.csv", e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn read_truth(path: &Path) -> Result<Vec<PlantedFeature>> {
    let mut r = csv::Reader::from_path(path)?;
    let rows = r.deserialize().collect::<std::result::Result<Vec<PlantedFeature>, _>>()?;
    Ok(rows)
}
