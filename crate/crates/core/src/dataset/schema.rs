use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::atlas::{
    CAT12_MEASURES, DESIKAN_REGIONS, DESTRIEUX_REGIONS, HEMISPHERES, SURFACE_MEASURES,
};
use crate::error::{Error, Result};

/// Separator between the set, region and measure parts of a feature name.
pub const NAME_SEPARATOR: &str = "__";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureSet {
    Cat12,
    Desikan,
    Destrieux,
}

impl FeatureSet {
    pub const ALL: [FeatureSet; 3] = [FeatureSet::Cat12, FeatureSet::Desikan, FeatureSet::Destrieux];

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureSet::Cat12 => "cat12",
            FeatureSet::Desikan => "desikan",
            FeatureSet::Destrieux => "destrieux",
        }
    }

    /// Required feature count for the surface atlases; `None` for CAT12 whose
    /// size depends on how the atlas export counted tissues.
    pub fn expected_len(self) -> Option<usize> {
        match self {
            FeatureSet::Cat12 => None,
            FeatureSet::Desikan => Some(2 * SURFACE_MEASURES.len() * DESIKAN_REGIONS.len()),
            FeatureSet::Destrieux => Some(2 * SURFACE_MEASURES.len() * DESTRIEUX_REGIONS.len()),
        }
    }
}

impl fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "cat12" => Ok(FeatureSet::Cat12),
            "desikan" => Ok(FeatureSet::Desikan),
            "destrieux" => Ok(FeatureSet::Destrieux),
            other => Err(Error::Schema(format!("unknown feature set '{other}'"))),
        }
    }
}

/// Tissue class a feature measures; drives the planted sign in synthetic data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tissue {
    GreyMatter,
    Csf,
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub set: FeatureSet,
    pub region: String,
    pub measure: String,
    pub units: String,
}

impl FeatureSpec {
    pub fn new(set: FeatureSet, region: &str, measure: &str, units: &str) -> Self {
        FeatureSpec {
            name: format!("{}{NAME_SEPARATOR}{region}{NAME_SEPARATOR}{measure}", set.as_str()),
            set,
            region: region.to_string(),
            measure: measure.to_string(),
            units: units.to_string(),
        }
    }

    /// Parses a `<set>__<region>__<measure>` column name.
    pub fn from_name(name: &str, units: &str) -> Result<Self> {
        let parts: Vec<&str> = name.split(NAME_SEPARATOR).collect();
        if parts.len() != 3 || parts.iter().any(|p| p.is_empty()) {
            return Err(Error::Schema(format!(
                "feature name '{name}' is not of the form <set>__<region>__<measure>"
            )));
        }
        let set: FeatureSet = parts[0].parse()?;
        Ok(FeatureSpec {
            name: name.to_string(),
            set,
            region: parts[1].to_string(),
            measure: parts[2].to_string(),
            units: units.to_string(),
        })
    }

    pub fn tissue(&self) -> Tissue {
        match self.measure.to_ascii_lowercase().as_str() {
            "gm" | "gm_volume" | "grey_matter" | "gray_matter" => Tissue::GreyMatter,
            "csf" => Tissue::Csf,
            _ => Tissue::Other,
        }
    }
}

/// Ordered, uniquely-named feature catalogue grouped by feature set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<FeatureSpec>", into = "Vec<FeatureSpec>")]
pub struct FeatureSchema {
    features: Vec<FeatureSpec>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl TryFrom<Vec<FeatureSpec>> for FeatureSchema {
    type Error = Error;
    fn try_from(v: Vec<FeatureSpec>) -> Result<Self> {
        FeatureSchema::new(v)
    }
}

impl From<FeatureSchema> for Vec<FeatureSpec> {
    fn from(s: FeatureSchema) -> Self {
        s.features
    }
}

impl FeatureSchema {
    pub fn new(features: Vec<FeatureSpec>) -> Result<Self> {
        let mut index = HashMap::with_capacity(features.len());
        for (i, f) in features.iter().enumerate() {
            if matches!(f.name.as_str(), "participant_id" | "age" | "sex" | "site") {
                return Err(Error::Schema(format!("feature name '{}' is reserved", f.name)));
            }
            if index.insert(f.name.clone(), i).is_some() {
                return Err(Error::Schema(format!("duplicate feature name '{}'", f.name)));
            }
        }
        Ok(FeatureSchema { features, index })
    }

    /// Builds a schema from bare column names, units left blank.
    pub fn from_names<'a>(names: impl IntoIterator<Item = &'a str>) -> Result<Self> {
        let specs = names
            .into_iter()
            .map(|n| FeatureSpec::from_name(n, ""))
            .collect::<Result<Vec<_>>>()?;
        FeatureSchema::new(specs)
    }

    /// Full-size schema for the requested sets, in CAT12, Desikan, Destrieux order.
    pub fn standard(sets: &[FeatureSet], cat12_regions: usize) -> Result<Self> {
        let mut specs = Vec::new();
        for set in FeatureSet::ALL {
            if !sets.contains(&set) {
                continue;
            }
            match set {
                FeatureSet::Cat12 => {
                    for r in 0..cat12_regions {
                        for (m, u) in CAT12_MEASURES {
                            specs.push(FeatureSpec::new(set, &format!("roi{:03}", r + 1), m, u));
                        }
                    }
                }
                FeatureSet::Desikan | FeatureSet::Destrieux => {
                    let regions: &[&str] = if set == FeatureSet::Desikan {
                        &DESIKAN_REGIONS
                    } else {
                        &DESTRIEUX_REGIONS
                    };
                    for h in HEMISPHERES {
                        for r in regions {
                            for (m, u) in SURFACE_MEASURES {
                                specs.push(FeatureSpec::new(set, &format!("{h}_{r}"), m, u));
                            }
                        }
                    }
                }
            }
        }
        FeatureSchema::new(specs)
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn features(&self) -> &[FeatureSpec] {
        &self.features
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.features.iter().map(|f| f.name.as_str())
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn get(&self, name: &str) -> Option<&FeatureSpec> {
        self.position(name).map(|i| &self.features[i])
    }

    /// Column indices belonging to `set`, in schema order.
    pub fn indices_of(&self, set: FeatureSet) -> Vec<usize> {
        self.features
            .iter()
            .enumerate()
            .filter(|(_, f)| f.set == set)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn sets(&self) -> Vec<FeatureSet> {
        FeatureSet::ALL
            .into_iter()
            .filter(|s| self.features.iter().any(|f| f.set == *s))
            .collect()
    }

    pub fn set_len(&self, set: FeatureSet) -> usize {
        self.features.iter().filter(|f| f.set == set).count()
    }

    /// Checks the Desikan/Destrieux blocks, when present, have their full atlas size.
    pub fn check_atlas_sizes(&self) -> Result<()> {
        for set in self.sets() {
            if let Some(expected) = set.expected_len() {
                let got = self.set_len(set);
                if got != expected {
                    return Err(Error::Schema(format!(
                        "{set} block has {got} features, expected {expected}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Parses the companion schema file: one `name,set,units` entry per line.
    /// Blank lines, `#` comments and an optional header line are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut specs = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if specs.is_empty() && fields.first() == Some(&"name") {
                continue;
            }
            if fields.len() != 3 {
                return Err(Error::Schema(format!(
                    "schema line {}: expected 'name,set,units', got '{line}'",
                    lineno + 1
                )));
            }
            let spec = FeatureSpec::from_name(fields[0], fields[2])?;
            let declared: FeatureSet = fields[1].parse()?;
            if declared != spec.set {
                return Err(Error::Schema(format!(
                    "schema line {}: '{}' is declared as {declared} but named as {}",
                    lineno + 1,
                    fields[0],
                    spec.set
                )));
            }
            specs.push(spec);
        }
        if specs.is_empty() {
            return Err(Error::Empty("schema file lists no features".into()));
        }
        FeatureSchema::new(specs)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        FeatureSchema::parse(&text)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("name,set,units\n");
        for f in &self.features {
            out.push_str(&format!("{},{},{}\n", f.name, f.set, f.units));
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}
