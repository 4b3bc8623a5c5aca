use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{Cohort, Sex};
use crate::error::{Error, Result};
use crate::rng::{seeded, Stream};

/// Decade bin used for stratification: `[0,10)` is 0, `[10,20)` is 1, ...
pub fn age_stratum(age: f64) -> u32 {
    (age / 10.0).floor().max(0.0) as u32
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
    pub male_test_ids: Vec<String>,
    pub female_test_ids: Vec<String>,
    pub seed: u64,
}

/// Largest-remainder apportionment of `total` units over `quotas`.
/// Ties go to the earlier entry.
fn apportion(quotas: &[f64], total: usize) -> Vec<usize> {
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..quotas.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// Seeded random split stratified by sex and age decade.
///
/// The test-set size is `round(test_fraction * m)`. It is first apportioned
/// between the sexes and then across the decade bins within each sex, so every
/// stratum receives the floor or the ceiling of its proportional share.
pub fn stratified_split(cohort: &Cohort, test_fraction: f64, seed: u64) -> Result<SplitAssignment> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "test fraction {test_fraction} is outside (0, 1)"
        )));
    }
    if !cohort.has_unique_ids() {
        return Err(Error::InvalidArgument("cohort ids are not unique; dedup first".into()));
    }
    for sex in [Sex::Male, Sex::Female] {
        if cohort.count_sex(sex) < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 {} subjects to stratify",
                sex.group_name()
            )));
        }
    }

    // strata in deterministic (sex, decade) order, members in id order
    let mut strata: BTreeMap<(Sex, u32), Vec<&str>> = BTreeMap::new();
    for r in cohort.records() {
        strata.entry((r.sex, age_stratum(r.age))).or_default().push(&r.id);
    }

    let m = cohort.len();
    let total_test = (test_fraction * m as f64).round() as usize;
    let sexes = [Sex::Male, Sex::Female];
    let sex_sizes: Vec<usize> = sexes.iter().map(|&s| cohort.count_sex(s)).collect();
    let sex_quotas: Vec<f64> = sex_sizes
        .iter()
        .map(|&n| total_test as f64 * n as f64 / m as f64)
        .collect();
    let sex_test = apportion(&sex_quotas, total_test);

    let mut rng = seeded(seed, Stream::Split);
    let mut test: HashSet<&str> = HashSet::new();
    for (si, &sex) in sexes.iter().enumerate() {
        let keys: Vec<(Sex, u32)> = strata.keys().filter(|k| k.0 == sex).copied().collect();
        let quotas: Vec<f64> = keys
            .iter()
            .map(|k| sex_test[si] as f64 * strata[k].len() as f64 / sex_sizes[si] as f64)
            .collect();
        let counts = apportion(&quotas, sex_test[si]);
        for (key, count) in keys.iter().zip(counts) {
            let mut members = strata[key].clone();
            members.shuffle(&mut rng);
            test.extend(members.into_iter().take(count));
        }
    }

    let mut split = SplitAssignment {
        train_ids: Vec::new(),
        test_ids: Vec::new(),
        male_test_ids: Vec::new(),
        female_test_ids: Vec::new(),
        seed,
    };
    for r in cohort.records() {
        if test.contains(r.id.as_str()) {
            split.test_ids.push(r.id.clone());
            match r.sex {
                Sex::Male => split.male_test_ids.push(r.id.clone()),
                Sex::Female => split.female_test_ids.push(r.id.clone()),
            }
        } else {
            split.train_ids.push(r.id.clone());
        }
    }
    Ok(split)
}

impl SplitAssignment {
    /// Serialises as `participant_id,partition` with partition in {train,test}.
    pub fn to_csv(&self) -> String {
        let mut rows: Vec<(&str, &str)> = self
            .train_ids
            .iter()
            .map(|i| (i.as_str(), "train"))
            .chain(self.test_ids.iter().map(|i| (i.as_str(), "test")))
            .collect();
        rows.sort();
        let mut out = String::from("participant_id,partition\n");
        for (id, p) in rows {
            out.push_str(id);
            out.push(',');
            out.push_str(p);
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    /// Reads a split file and resolves the sex of test subjects from `cohort`.
    pub fn load(path: &Path, cohort: &Cohort) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, cohort)
    }

    pub fn parse(text: &str, cohort: &Cohort) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let header = reader.headers()?.clone();
        if header.iter().collect::<Vec<_>>() != ["participant_id", "partition"] {
            return Err(Error::Schema("split file header must be 'participant_id,partition'".into()));
        }
        let index = cohort.index_by_id();
        let mut split = SplitAssignment {
            train_ids: Vec::new(),
            test_ids: Vec::new(),
            male_test_ids: Vec::new(),
            female_test_ids: Vec::new(),
            seed: 0,
        };
        for (i, row) in reader.records().enumerate() {
            let row = row?;
            let id = row[0].to_string();
            let Some(&pos) = index.get(id.as_str()) else {
                return Err(Error::InvalidCell {
                    row: i + 1,
                    id,
                    column: "participant_id".into(),
                    reason: "id not present in cohort".into(),
                });
            };
            match &row[1] {
                "train" => split.train_ids.push(id),
                "test" => {
                    match cohort.records()[pos].sex {
                        Sex::Male => split.male_test_ids.push(id.clone()),
                        Sex::Female => split.female_test_ids.push(id.clone()),
                    }
                    split.test_ids.push(id);
                }
                other => {
                    return Err(Error::InvalidCell {
                        row: i + 1,
                        id,
                        column: "partition".into(),
                        reason: format!("'{other}' is not train/test"),
                    })
                }
            }
        }
        for v in [
            &mut split.train_ids,
            &mut split.test_ids,
            &mut split.male_test_ids,
            &mut split.female_test_ids,
        ] {
            v.sort();
        }
        Ok(split)
    }
}
