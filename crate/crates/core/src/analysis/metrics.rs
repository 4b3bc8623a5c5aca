use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::Sex;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    pub mae: f64,
    pub rmse: f64,
    /// `None` only inside a subgroup whose true ages are constant.
    pub r2: Option<f64>,
    pub mean_ead: f64,
    /// Predicted minus true age, per subject.
    pub brain_ead: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subgroup: Option<BTreeMap<String, EvalReport>>,
}

fn check_pair(truth: &[f64], pred: &[f64]) -> Result<()> {
    if truth.len() != pred.len() {
        return Err(Error::Dimension(format!(
            "{} true ages but {} predictions",
            truth.len(),
            pred.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::Empty("no predictions to evaluate".into()));
    }
    if truth.iter().chain(pred).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("ages and predictions must be finite".into()));
    }
    Ok(())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn report(truth: &[f64], pred: &[f64]) -> EvalReport {
    let n = truth.len();
    let ead: Vec<f64> = pred.iter().zip(truth).map(|(p, t)| p - t).collect();
    let mae = ead.iter().map(|e| e.abs()).sum::<f64>() / n as f64;
    let sse: f64 = ead.iter().map(|e| e * e).sum();
    let rmse = (sse / n as f64).sqrt();
    let ybar = mean(truth);
    let sst: f64 = truth.iter().map(|t| (t - ybar).powi(2)).sum();
    let r2 = (n >= 2 && sst > 0.0).then(|| 1.0 - sse / sst);
    EvalReport {
        n,
        mae,
        rmse,
        r2,
        mean_ead: mean(pred) - ybar,
        brain_ead: ead,
        subgroup: None,
    }
}

/// MAE, RMSE and R² (baseline: mean of the true ages), plus Brain-EAD.
pub fn metrics(truth: &[f64], pred: &[f64]) -> Result<EvalReport> {
    check_pair(truth, pred)?;
    let r = report(truth, pred);
    if r.r2.is_none() {
        return Err(Error::InvalidArgument(
            "R² is undefined: need at least two rows with non-constant true age".into(),
        ));
    }
    Ok(r)
}

/// Overall report with nested per-sex reports. Empty subgroups are left out.
pub fn subgroup_eval(truth: &[f64], pred: &[f64], sex: &[Sex]) -> Result<EvalReport> {
    check_pair(truth, pred)?;
    if sex.len() != truth.len() {
        return Err(Error::Dimension(format!(
            "{} rows but {} sex labels",
            truth.len(),
            sex.len()
        )));
    }
    let mut overall = report(truth, pred);
    let mut groups = BTreeMap::new();
    for s in [Sex::Male, Sex::Female] {
        let idx: Vec<usize> = (0..sex.len()).filter(|&i| sex[i] == s).collect();
        if idx.is_empty() {
            log::warn!("no {} subjects; subgroup omitted", s.group_name());
            continue;
        }
        let t: Vec<f64> = idx.iter().map(|&i| truth[i]).collect();
        let p: Vec<f64> = idx.iter().map(|&i| pred[i]).collect();
        groups.insert(s.group_name().to_string(), report(&t, &p));
    }
    overall.subgroup = Some(groups);
    Ok(overall)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasSummary {
    /// Least-squares slope of Brain-EAD on true age.
    pub slope: f64,
    pub mean_ead: f64,
}

pub fn bias_summary(truth: &[f64], pred: &[f64]) -> Result<BiasSummary> {
    check_pair(truth, pred)?;
    if truth.len() < 3 {
        return Err(Error::InvalidArgument("bias summary needs at least 3 points".into()));
    }
    let ybar = mean(truth);
    let ead: Vec<f64> = pred.iter().zip(truth).map(|(p, t)| p - t).collect();
    let ebar = mean(&ead);
    let sxx: f64 = truth.iter().map(|t| (t - ybar).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("bias summary needs non-constant ages".into()));
    }
    let sxe: f64 = truth.iter().zip(&ead).map(|(t, e)| (t - ybar) * (e - ebar)).sum();
    Ok(BiasSummary {
        slope: sxe / sxx,
        mean_ead: ebar,
    })
}

/// Box-plot statistics: type-7 quartiles, Tukey whiskers at 1.5 IQR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub n: usize,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    /// Most extreme observations inside the fences.
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub outliers: Vec<f64>,
}

/// Linear-interpolation quantile of sorted data (R type 7).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn box_stats(values: &[f64]) -> Result<BoxStats> {
    if values.is_empty() {
        return Err(Error::Empty("box statistics of no values".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("box statistics need finite values".into()));
    }
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    let q1 = quantile_sorted(&s, 0.25);
    let median = quantile_sorted(&s, 0.5);
    let q3 = quantile_sorted(&s, 0.75);
    let iqr = q3 - q1;
    let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let inside = s.iter().copied().filter(|v| *v >= lo_fence && *v <= hi_fence);
    let whisker_low = inside.clone().fold(f64::INFINITY, f64::min);
    let whisker_high = inside.fold(f64::NEG_INFINITY, f64::max);
    let outliers = s.iter().copied().filter(|v| *v < lo_fence || *v > hi_fence).collect();
    Ok(BoxStats {
        n: s.len(),
        q1,
        median,
        q3,
        whisker_low,
        whisker_high,
        outliers,
    })
}
