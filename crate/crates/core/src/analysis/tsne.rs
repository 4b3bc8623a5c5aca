//! Exact t-SNE (no tree approximation), O(m²) per iteration.

use nalgebra::DMatrix;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::rng::{seeded, Stream};

pub const PERPLEXITY_TOL: f64 = 1e-3;
const BISECTION_STEPS: usize = 200;
const EXAGGERATION: f64 = 12.0;
const MIN_GAIN: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TsneParams {
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TsneParams {
    fn default() -> Self {
        TsneParams {
            perplexity: 30.0,
            iterations: 1000,
            learning_rate: 200.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding2D {
    pub row_ids: Vec<String>,
    pub coords: Vec<[f64; 2]>,
    pub perplexity: f64,
    pub iterations: usize,
    /// KL(P || Q) at the returned coordinates.
    pub kl: f64,
    /// KL(P || Q) at the start of every iteration, measured against the
    /// unexaggerated P.
    pub kl_history: Vec<f64>,
    /// Perplexity actually reached by each row's bandwidth search.
    pub row_perplexity: Vec<f64>,
}

/// Squared Euclidean distances between rows.
pub fn squared_distances(x: &DMatrix<f64>) -> Vec<f64> {
    let (m, n) = x.shape();
    let rows: Vec<Vec<f64>> = (0..m).map(|i| (0..n).map(|j| x[(i, j)]).collect()).collect();
    let mut d = vec![0.0; m * m];
    d.par_chunks_mut(m.max(1)).enumerate().for_each(|(i, out)| {
        for (k, o) in out.iter_mut().enumerate() {
            *o = rows[i]
                .iter()
                .zip(&rows[k])
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
        }
    });
    d
}

/// Conditional distribution of one row for precision `beta`, returning its
/// natural-log entropy. `dist` excludes the row itself.
fn row_distribution(dist: &[f64], beta: f64, out: &mut [f64]) -> f64 {
    let dmin = dist.iter().copied().fold(f64::INFINITY, f64::min);
    let mut sum = 0.0;
    for (o, d) in out.iter_mut().zip(dist) {
        *o = (-beta * (d - dmin)).exp();
        sum += *o;
    }
    let mut weighted = 0.0;
    for (o, d) in out.iter_mut().zip(dist) {
        *o /= sum;
        weighted += *o * (d - dmin);
    }
    sum.ln() + beta * weighted
}

/// Row-conditional affinities `p_{j|i}` (row-major, zero diagonal) with each
/// row's Gaussian precision found by bisection so its perplexity matches the
/// target. Also returns the perplexity reached on each row.
pub fn conditional_affinities(dist2: &[f64], m: usize, perplexity: f64) -> (Vec<f64>, Vec<f64>) {
    let target = perplexity.ln();
    let mut p = vec![0.0; m * m];
    let mut reached = vec![0.0; m];
    p.par_chunks_mut(m.max(1))
        .zip(reached.par_iter_mut())
        .enumerate()
        .for_each(|(i, (prow, reach))| {
            let others: Vec<f64> = (0..m).filter(|&k| k != i).map(|k| dist2[i * m + k]).collect();
            let mut buf = vec![0.0; others.len()];
            let (mut lo, mut hi) = (0.0_f64, f64::INFINITY);
            let mut beta = 1.0;
            let mut best = (f64::INFINITY, beta);
            for _ in 0..BISECTION_STEPS {
                let h = row_distribution(&others, beta, &mut buf);
                let gap = (h.exp() - perplexity).abs();
                if gap < best.0 {
                    best = (gap, beta);
                }
                if gap < 0.1 * PERPLEXITY_TOL {
                    break;
                }
                if h > target {
                    lo = beta;
                    beta = if hi.is_finite() { 0.5 * (lo + hi) } else { beta * 2.0 };
                } else {
                    hi = beta;
                    beta = 0.5 * (lo + hi);
                }
            }
            let h = row_distribution(&others, best.1, &mut buf);
            *reach = h.exp();
            let mut it = buf.iter();
            for (k, slot) in prow.iter_mut().enumerate() {
                if k != i {
                    *slot = *it.next().expect("m - 1 entries");
                }
            }
        });
    (p, reached)
}

/// Symmetrised joint affinities `(p_{j|i} + p_{i|j}) / 2m`.
pub fn joint_affinities(cond: &[f64], m: usize) -> Vec<f64> {
    let mut p = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..m {
            p[i * m + j] = (cond[i * m + j] + cond[j * m + i]) / (2.0 * m as f64);
        }
    }
    p
}

/// Student-t kernel numerators (zero diagonal) and their total.
fn student_kernel(y: &[[f64; 2]]) -> (Vec<f64>, f64) {
    let m = y.len();
    let mut num = vec![0.0; m * m];
    let row_sums: Vec<f64> = num
        .par_chunks_mut(m.max(1))
        .enumerate()
        .map(|(i, row)| {
            let mut s = 0.0;
            for (k, slot) in row.iter_mut().enumerate() {
                if k != i {
                    let dx = y[i][0] - y[k][0];
                    let dy = y[i][1] - y[k][1];
                    *slot = 1.0 / (1.0 + dx * dx + dy * dy);
                    s += *slot;
                }
            }
            s
        })
        .collect();
    (num, row_sums.iter().sum())
}

fn kl_divergence(p: &[f64], num: &[f64], z: f64) -> f64 {
    p.par_iter()
        .zip(num.par_iter())
        .map(|(&pij, &nij)| {
            if pij > 0.0 && nij > 0.0 {
                pij * (pij / (nij / z)).ln()
            } else {
                0.0
            }
        })
        .collect::<Vec<f64>>()
        .iter()
        .sum::<f64>()
        .max(0.0)
}

/// Joint output affinities `q_ij` for an embedding.
pub fn output_affinities(y: &[[f64; 2]]) -> Vec<f64> {
    let (mut num, z) = student_kernel(y);
    num.iter_mut().for_each(|v| *v /= z);
    num
}

pub fn tsne_embed(x: &FeatureMatrix, params: &TsneParams) -> Result<Embedding2D> {
    let m = x.nrows();
    if !(params.perplexity > 0.0) {
        return Err(Error::InvalidArgument("perplexity must be > 0".into()));
    }
    if (m as f64) < 3.0 * params.perplexity {
        return Err(Error::InvalidArgument(format!(
            "t-SNE needs at least 3 × perplexity = {} rows, got {m}",
            3.0 * params.perplexity
        )));
    }
    if params.iterations == 0 || !(params.learning_rate > 0.0) {
        return Err(Error::InvalidArgument(
            "t-SNE needs iterations >= 1 and a positive learning rate".into(),
        ));
    }

    let dist2 = squared_distances(x.values());
    let (cond, row_perplexity) = conditional_affinities(&dist2, m, params.perplexity);
    let p = joint_affinities(&cond, m);

    let mut rng = seeded(params.seed, Stream::Tsne);
    let init = Normal::new(0.0, 1e-2).expect("valid normal");
    let mut y: Vec<[f64; 2]> = (0..m)
        .map(|_| [init.sample(&mut rng), init.sample(&mut rng)])
        .collect();
    let mut update = vec![[0.0; 2]; m];
    let mut gains = vec![[1.0_f64; 2]; m];
    let switch = params.iterations / 4;
    let mut kl_history = Vec::with_capacity(params.iterations);

    for iter in 0..params.iterations {
        let early = iter < switch;
        let exaggeration = if early { EXAGGERATION } else { 1.0 };
        let momentum = if early { 0.5 } else { 0.8 };
        let (num, z) = student_kernel(&y);
        kl_history.push(kl_divergence(&p, &num, z));
        let grad: Vec<[f64; 2]> = (0..m)
            .into_par_iter()
            .map(|i| {
                let mut g = [0.0; 2];
                for k in 0..m {
                    if k == i {
                        continue;
                    }
                    let nik = num[i * m + k];
                    let coeff = (exaggeration * p[i * m + k] - nik / z) * nik;
                    g[0] += coeff * (y[i][0] - y[k][0]);
                    g[1] += coeff * (y[i][1] - y[k][1]);
                }
                [4.0 * g[0], 4.0 * g[1]]
            })
            .collect();
        for i in 0..m {
            for d in 0..2 {
                let same_sign = (grad[i][d] > 0.0) == (update[i][d] > 0.0);
                gains[i][d] = if same_sign {
                    (gains[i][d] * 0.8).max(MIN_GAIN)
                } else {
                    gains[i][d] + 0.2
                };
                update[i][d] = momentum * update[i][d] - params.learning_rate * gains[i][d] * grad[i][d];
                y[i][d] += update[i][d];
            }
        }
        let mean = y.iter().fold([0.0; 2], |a, v| [a[0] + v[0], a[1] + v[1]]);
        for v in y.iter_mut() {
            v[0] -= mean[0] / m as f64;
            v[1] -= mean[1] / m as f64;
        }
    }
    if y.iter().any(|v| !v[0].is_finite() || !v[1].is_finite()) {
        return Err(Error::Numerical("t-SNE diverged".into()));
    }
    let (num, z) = student_kernel(&y);
    let kl = kl_divergence(&p, &num, z);
    Ok(Embedding2D {
        row_ids: x.row_ids().to_vec(),
        coords: y,
        perplexity: params.perplexity,
        iterations: params.iterations,
        kl,
        kl_history,
        row_perplexity,
    })
}
