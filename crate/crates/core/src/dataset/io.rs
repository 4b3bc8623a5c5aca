use std::fs;
use std::io::Write;
use std::path::Path;

use super::{Cohort, FeatureSchema, Sex, SubjectRecord};
use crate::error::{Error, Result};

const ID: &str = "participant_id";
const AGE: &str = "age";
const SEX: &str = "sex";
const SITE: &str = "site";

fn sniff_delimiter(text: &str) -> u8 {
    let header = text.lines().next().unwrap_or("");
    let tabs = header.matches('\t').count();
    let commas = header.matches(',').count();
    if tabs > commas {
        b'\t'
    } else {
        b','
    }
}

/// Loads a cohort table from CSV or TSV. When `schema` is `None` the schema is
/// inferred from the feature column names (units left blank).
pub fn load_cohort(path: &Path, schema: Option<&FeatureSchema>) -> Result<Cohort> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let cohort = read_cohort(&text, schema)?;
    log::info!("loaded {} rows from {}", cohort.len(), path.display());
    Ok(cohort)
}

pub fn read_cohort(text: &str, schema: Option<&FeatureSchema>) -> Result<Cohort> {
    if text.trim().is_empty() {
        return Err(Error::Empty("cohort file is empty".into()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(sniff_delimiter(text))
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();

    let find = |name: &str| header.iter().position(|h| h == name);
    let id_col = find(ID).ok_or_else(|| Error::Schema(format!("missing column '{ID}'")))?;
    let age_col = find(AGE).ok_or_else(|| Error::Schema(format!("missing column '{AGE}'")))?;
    let sex_col = find(SEX).ok_or_else(|| Error::Schema(format!("missing column '{SEX}'")))?;
    let site_col = find(SITE);

    let feature_cols: Vec<(usize, &str)> = header
        .iter()
        .enumerate()
        .filter(|(_, h)| ![ID, AGE, SEX, SITE].contains(&h.as_str()))
        .map(|(i, h)| (i, h.as_str()))
        .collect();

    let inferred;
    let schema = match schema {
        Some(s) => s,
        None => {
            inferred = FeatureSchema::from_names(feature_cols.iter().map(|(_, n)| *n))?;
            &inferred
        }
    };

    // column position in the file for each schema feature
    let mut source = vec![usize::MAX; schema.len()];
    for &(col, name) in &feature_cols {
        match schema.position(name) {
            Some(p) if source[p] == usize::MAX => source[p] = col,
            Some(_) => return Err(Error::Schema(format!("column '{name}' appears twice"))),
            None => return Err(Error::Schema(format!("column '{name}' is not in the schema"))),
        }
    }
    if let Some(p) = source.iter().position(|&c| c == usize::MAX) {
        let missing = schema.features().len() - feature_cols.len();
        return Err(Error::Schema(format!(
            "missing column '{}' ({missing} schema feature(s) absent)",
            schema.features()[p].name
        )));
    }

    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row?;
        let rowno = i + 1;
        let id = row.get(id_col).unwrap_or("").to_string();
        let cell_err = |column: &str, reason: String| Error::InvalidCell {
            row: rowno,
            id: id.clone(),
            column: column.to_string(),
            reason,
        };
        if row.len() != header.len() {
            return Err(cell_err(
                "*",
                format!("row has {} fields, header has {}", row.len(), header.len()),
            ));
        }
        let parse_num = |col: usize, name: &str| -> Result<f64> {
            let cell = &row[col];
            let v: f64 = cell
                .parse()
                .map_err(|_| cell_err(name, format!("'{cell}' is not a number")))?;
            if !v.is_finite() {
                return Err(cell_err(name, format!("non-finite value '{cell}'")));
            }
            Ok(v)
        };
        let age = parse_num(age_col, AGE)?;
        let sex: Sex = row[sex_col].parse().map_err(|e| cell_err(SEX, e))?;
        let site = site_col
            .map(|c| row[c].to_string())
            .filter(|s| !s.is_empty());
        let features = source
            .iter()
            .zip(schema.features())
            .map(|(&col, spec)| parse_num(col, &spec.name))
            .collect::<Result<Vec<f64>>>()?;
        records.push(SubjectRecord {
            id,
            age,
            sex,
            site,
            features,
        });
    }
    if records.is_empty() {
        return Err(Error::Empty("cohort file has a header but no rows".into()));
    }
    Cohort::new(schema.clone(), records)
}

/// Writes the canonical CSV form: id, age, sex, optional site, then features in
/// schema order. Numbers use the shortest representation that round-trips.
pub fn write_cohort_to<W: Write>(cohort: &Cohort, out: W) -> Result<()> {
    let with_site = cohort.records().iter().any(|r| r.site.is_some());
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![ID, AGE, SEX];
    if with_site {
        header.push(SITE);
    }
    header.extend(cohort.schema().names());
    w.write_record(&header)?;
    let mut row: Vec<String> = Vec::with_capacity(header.len());
    for r in cohort.records() {
        row.clear();
        row.push(r.id.clone());
        row.push(r.age.to_string());
        row.push(r.sex.to_string());
        if with_site {
            row.push(r.site.clone().unwrap_or_default());
        }
        row.extend(r.features.iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io("<cohort writer>", e))?;
    Ok(())
}

pub fn write_cohort(cohort: &Cohort, path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_cohort_to(cohort, std::io::BufWriter::new(file))
}
