use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{seeded, Stream};

pub const RESTARTS: usize = 20;
const MAX_LLOYD_ITERS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AgeGroup {
    Adolescents,
    Adults,
    Elders,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    /// Rank of the cluster by ascending mean.
    pub id: usize,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub count: usize,
    /// Named group, assigned only for three clusters.
    pub label: Option<AgeGroup>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub clusters: Vec<Cluster>,
    /// Cluster id of each input value, in input order.
    pub assignments: Vec<usize>,
    pub wcss: f64,
    /// WCSS after each Lloyd iteration of the winning restart.
    pub wcss_history: Vec<f64>,
}

struct Run {
    assignments: Vec<usize>,
    wcss: f64,
    history: Vec<f64>,
}

fn nearest(v: f64, centers: &[f64]) -> usize {
    let mut best = 0;
    for (c, &ctr) in centers.iter().enumerate().skip(1) {
        if (v - ctr).abs() < (v - centers[best]).abs() {
            best = c;
        }
    }
    best
}

fn plus_plus_init<R: Rng>(values: &[f64], k: usize, rng: &mut R) -> Vec<f64> {
    let mut centers = vec![values[rng.random_range(0..values.len())]];
    let mut d2: Vec<f64> = values.iter().map(|v| (v - centers[0]).powi(2)).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = values.len() - 1;
            for (i, d) in d2.iter().enumerate() {
                if *d > 0.0 && target < *d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            // floating drift can land on an existing center; take the farthest point instead
            if d2[pick] == 0.0 {
                pick = (0..values.len()).max_by(|&a, &b| d2[a].total_cmp(&d2[b])).unwrap_or(0);
            }
            values[pick]
        } else {
            values[0]
        };
        centers.push(next);
        for (d, v) in d2.iter_mut().zip(values) {
            *d = d.min((v - next).powi(2));
        }
    }
    centers
}

fn lloyd(values: &[f64], mut centers: Vec<f64>) -> Run {
    let k = centers.len();
    let mut assignments = vec![usize::MAX; values.len()];
    let mut history = Vec::new();
    for _ in 0..MAX_LLOYD_ITERS {
        let mut changed = false;
        for (a, &v) in assignments.iter_mut().zip(values) {
            let c = nearest(v, &centers);
            if *a != c {
                *a = c;
                changed = true;
            }
        }
        let mut sums = vec![0.0; k];
        let mut counts = vec![0usize; k];
        for (&a, &v) in assignments.iter().zip(values) {
            sums[a] += v;
            counts[a] += 1;
        }
        for c in 0..k {
            if counts[c] > 0 {
                centers[c] = sums[c] / counts[c] as f64;
            } else {
                // reseed an empty cluster at the worst-served point
                let far = (0..values.len())
                    .max_by(|&a, &b| {
                        let da = (values[a] - centers[assignments[a]]).abs();
                        let db = (values[b] - centers[assignments[b]]).abs();
                        da.total_cmp(&db)
                    })
                    .unwrap_or(0);
                centers[c] = values[far];
                changed = true;
            }
        }
        let wcss: f64 = assignments
            .iter()
            .zip(values)
            .map(|(&a, &v)| (v - centers[a]).powi(2))
            .sum();
        history.push(wcss);
        if !changed {
            break;
        }
    }
    Run {
        wcss: *history.last().unwrap_or(&0.0),
        assignments,
        history,
    }
}

/// One-dimensional k-means: k-means++ seeding, Lloyd iterations, best of
/// [`RESTARTS`] runs. Clusters are reported in ascending order of their mean.
pub fn kmeans_1d(values: &[f64], k: usize, seed: u64) -> Result<ClusterSummary> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be >= 1".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("values must be finite".into()));
    }
    let mut distinct: Vec<f64> = values.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if k > distinct.len() {
        return Err(Error::InvalidArgument(format!(
            "k = {k} exceeds the {} distinct values",
            distinct.len()
        )));
    }

    let mut rng = seeded(seed, Stream::KMeans);
    let mut best: Option<Run> = None;
    for _ in 0..RESTARTS {
        let run = lloyd(values, plus_plus_init(values, k, &mut rng));
        if best.as_ref().is_none_or(|b| run.wcss < b.wcss) {
            best = Some(run);
        }
    }
    let best = best.expect("at least one restart");

    let mut stats: Vec<(f64, f64, f64, usize, usize)> = (0..k)
        .map(|c| {
            let members: Vec<f64> = best
                .assignments
                .iter()
                .zip(values)
                .filter(|(a, _)| **a == c)
                .map(|(_, v)| *v)
                .collect();
            let mean = members.iter().sum::<f64>() / members.len().max(1) as f64;
            let lo = members.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = members.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (mean, lo, hi, members.len(), c)
        })
        .collect();
    stats.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank = vec![0; k];
    for (r, s) in stats.iter().enumerate() {
        rank[s.4] = r;
    }
    let labels = [AgeGroup::Adolescents, AgeGroup::Adults, AgeGroup::Elders];
    let clusters = stats
        .iter()
        .enumerate()
        .map(|(r, &(mean, min, max, count, _))| Cluster {
            id: r,
            min,
            max,
            mean,
            count,
            label: (k == 3).then(|| labels[r]),
        })
        .collect();
    Ok(ClusterSummary {
        clusters,
        assignments: best.assignments.iter().map(|&a| rank[a]).collect(),
        wcss: best.wcss,
        wcss_history: best.history,
    })
}
