//! Cohort tables: loading, validation, de-duplication and train/test splitting.

pub mod atlas;
mod io;
pub mod schema;
mod split;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{load_cohort, read_cohort, write_cohort, write_cohort_to};
pub use schema::{FeatureSchema, FeatureSet, FeatureSpec, Tissue};
pub use split::{age_stratum, stratified_split, SplitAssignment};

pub const MAX_AGE: f64 = 130.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Sex {
    #[serde(rename = "M")]
    Male,
    #[serde(rename = "F")]
    Female,
}

impl Sex {
    pub fn as_str(self) -> &'static str {
        match self {
            Sex::Male => "M",
            Sex::Female => "F",
        }
    }

    pub fn group_name(self) -> &'static str {
        match self {
            Sex::Male => "male",
            Sex::Female => "female",
        }
    }
}

impl fmt::Display for Sex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Sex {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "m" | "male" => Ok(Sex::Male),
            "f" | "female" => Ok(Sex::Female),
            other => Err(format!("unrecognised sex '{other}'")),
        }
    }
}

/// One subject. `features` is aligned with the owning cohort's schema.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectRecord {
    pub id: String,
    pub age: f64,
    pub sex: Sex,
    pub site: Option<String>,
    pub features: Vec<f64>,
}

pub fn validate_age(age: f64) -> std::result::Result<(), String> {
    if !age.is_finite() {
        Err("age is not finite".into())
    } else if age <= 0.0 || age >= MAX_AGE {
        Err(format!("age {age} outside (0, {MAX_AGE})"))
    } else {
        Ok(())
    }
}

impl SubjectRecord {
    fn validate(&self, row: usize, schema: &FeatureSchema) -> Result<()> {
        let cell_err = |column: &str, reason: String| Error::InvalidCell {
            row,
            id: self.id.clone(),
            column: column.to_string(),
            reason,
        };
        if self.id.trim().is_empty() {
            return Err(cell_err("participant_id", "empty id".into()));
        }
        validate_age(self.age).map_err(|r| cell_err("age", r))?;
        if self.features.len() != schema.len() {
            return Err(Error::Dimension(format!(
                "record '{}' has {} features, schema has {}",
                self.id,
                self.features.len(),
                schema.len()
            )));
        }
        for (v, spec) in self.features.iter().zip(schema.features()) {
            if !v.is_finite() {
                return Err(cell_err(&spec.name, format!("non-finite value {v}")));
            }
        }
        Ok(())
    }
}

/// Validated subjects plus their feature schema, ordered by id.
///
/// Ids may repeat until [`dedup_conflicting_ids`] has been applied; the sort
/// is stable so repeated ids keep their input order.
#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    schema: FeatureSchema,
    records: Vec<SubjectRecord>,
}

impl Cohort {
    pub fn new(schema: FeatureSchema, mut records: Vec<SubjectRecord>) -> Result<Self> {
        for (i, r) in records.iter().enumerate() {
            r.validate(i + 1, &schema)?;
        }
        records.sort_by(|a, b| a.id.cmp(&b.id));
        Ok(Cohort { schema, records })
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn records(&self) -> &[SubjectRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn ids(&self) -> Vec<String> {
        self.records.iter().map(|r| r.id.clone()).collect()
    }

    pub fn has_unique_ids(&self) -> bool {
        self.records.windows(2).all(|w| w[0].id != w[1].id)
    }

    /// Lookup by id; requires unique ids.
    pub fn index_by_id(&self) -> HashMap<&str, usize> {
        self.records
            .iter()
            .enumerate()
            .map(|(i, r)| (r.id.as_str(), i))
            .collect()
    }

    pub fn ages(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.age).collect()
    }

    pub fn count_sex(&self, sex: Sex) -> usize {
        self.records.iter().filter(|r| r.sex == sex).count()
    }

    pub fn into_parts(self) -> (FeatureSchema, Vec<SubjectRecord>) {
        (self.schema, self.records)
    }
}

/// Drops every record whose id occurs more than once with conflicting age or
/// sex; exact repeats keep their first occurrence. Returns the excluded ids,
/// one entry per removed record.
pub fn dedup_conflicting_ids(cohort: Cohort) -> (Cohort, Vec<String>) {
    let (schema, records) = cohort.into_parts();
    let mut groups: Vec<Vec<SubjectRecord>> = Vec::new();
    for r in records {
        match groups.last_mut() {
            Some(g) if g[0].id == r.id => g.push(r),
            _ => groups.push(vec![r]),
        }
    }
    let mut kept = Vec::with_capacity(groups.len());
    let mut excluded = Vec::new();
    for mut g in groups {
        let first = &g[0];
        let conflicting = g
            .iter()
            .any(|r| r.age.to_bits() != first.age.to_bits() || r.sex != first.sex);
        if conflicting {
            excluded.extend(g.iter().map(|r| r.id.clone()));
        } else {
            kept.push(g.swap_remove(0));
        }
    }
    (Cohort { schema, records: kept }, excluded)
}
