//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use brainage::dataset::FeatureSchema;
use brainage::features::FeatureMatrix;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ 0x005e_ed0f_7e57)
}

pub fn matrix(rows: &[Vec<f64>], y: &[f64]) -> FeatureMatrix {
    FeatureMatrix::from_rows(rows, y).unwrap()
}

pub fn random_problem(r: &mut ChaCha8Rng, m: usize, n: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let rows: Vec<Vec<f64>> = (0..m)
        .map(|_| (0..n).map(|_| r.random_range(-1.0..1.0)).collect())
        .collect();
    let y = (0..m).map(|_| r.random_range(5.0..80.0)).collect();
    (rows, y)
}

/// Ridge with an unpenalised intercept via the normal equations of the
/// augmented design `[X, 1]`, solved by LU.
pub fn ridge_oracle(rows: &[Vec<f64>], y: &[f64], lambda: f64) -> (Vec<f64>, f64) {
    let m = rows.len();
    let n = rows[0].len();
    let a = DMatrix::from_fn(m, n + 1, |i, j| if j < n { rows[i][j] } else { 1.0 });
    let mut lhs = a.transpose() * &a;
    for j in 0..n {
        lhs[(j, j)] += lambda;
    }
    let rhs = a.transpose() * DVector::from_column_slice(y);
    let theta = lhs.lu().solve(&rhs).expect("normal equations are non-singular");
    (theta.rows(0, n).iter().copied().collect(), theta[n])
}

pub fn svr_objective(rows: &[Vec<f64>], y: &[f64], w: &[f64], c: f64, cap: f64, eps: f64) -> f64 {
    let reg: f64 = 0.5 * w.iter().map(|v| v * v).sum::<f64>();
    let loss: f64 = rows
        .iter()
        .zip(y)
        .map(|(x, t)| {
            let f: f64 = x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() + c;
            ((t - f).abs() - eps).max(0.0)
        })
        .sum();
    reg + cap * loss
}

/// Exact minimum over the intercept: the ε-insensitive loss is convex and
/// piecewise linear in `c`, so some breakpoint `r_i ± ε` is optimal.
pub fn svr_best_intercept(rows: &[Vec<f64>], y: &[f64], w: &[f64], cap: f64, eps: f64) -> (f64, f64) {
    let mut best = (f64::INFINITY, 0.0);
    for (x, t) in rows.iter().zip(y) {
        let r = t - x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>();
        for c in [r - eps, r + eps] {
            let v = svr_objective(rows, y, w, c, cap, eps);
            if v < best.0 {
                best = (v, c);
            }
        }
    }
    best
}

/// Brute-force grid refinement over the weights (one or two features) with
/// the exact intercept at every grid point. Returns the best objective.
pub fn svr_oracle(rows: &[Vec<f64>], y: &[f64], cap: f64, eps: f64) -> f64 {
    let n = rows[0].len();
    assert!(n == 1 || n == 2);
    let f0 = svr_best_intercept(rows, y, &vec![0.0; n], cap, eps).0;
    // any optimum has ½||w||² <= f(0)
    let radius = (2.0 * f0).sqrt().max(1e-12);
    let mut center = vec![0.0; n];
    let mut half = vec![radius; n];
    let mut best = f0;
    let pts = 41;
    for _ in 0..200 {
        let mut round_best = (f64::INFINITY, center.clone());
        let axis = |j: usize, k: usize, center: &[f64], half: &[f64]| {
            center[j] - half[j] + 2.0 * half[j] * k as f64 / (pts - 1) as f64
        };
        if n == 1 {
            for k in 0..pts {
                let w = vec![axis(0, k, &center, &half)];
                let v = svr_best_intercept(rows, y, &w, cap, eps).0;
                if v < round_best.0 {
                    round_best = (v, w);
                }
            }
        } else {
            for k in 0..pts {
                for l in 0..pts {
                    let w = vec![axis(0, k, &center, &half), axis(1, l, &center, &half)];
                    let v = svr_best_intercept(rows, y, &w, cap, eps).0;
                    if v < round_best.0 {
                        round_best = (v, w);
                    }
                }
            }
        }
        best = best.min(round_best.0);
        center = round_best.1;
        // halving keeps the minimiser inside the window even when the best
        // grid point sits on a kink
        for h in half.iter_mut() {
            *h *= 0.5;
        }
        if half.iter().all(|h| *h < 1e-13) {
            break;
        }
    }
    best
}

fn wcss_of(sorted: &[f64]) -> f64 {
    let mean = sorted.iter().sum::<f64>() / sorted.len() as f64;
    sorted.iter().map(|v| (v - mean).powi(2)).sum()
}

/// Optimal 1-D k-means cost by enumerating every split of the sorted values
/// into `k <= 3` contiguous non-empty intervals.
pub fn kmeans_oracle(values: &[f64], k: usize) -> f64 {
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len();
    match k {
        1 => wcss_of(&s),
        2 => (1..m)
            .map(|a| wcss_of(&s[..a]) + wcss_of(&s[a..]))
            .fold(f64::INFINITY, f64::min),
        3 => {
            let mut best = f64::INFINITY;
            for a in 1..m {
                for b in a + 1..m {
                    best = best.min(wcss_of(&s[..a]) + wcss_of(&s[a..b]) + wcss_of(&s[b..]));
                }
            }
            best
        }
        _ => panic!("oracle supports k <= 3"),
    }
}

/// Small schema with one feature of each tissue class per set.
pub fn small_schema() -> FeatureSchema {
    FeatureSchema::from_names([
        "cat12__roi001__gm",
        "cat12__roi001__csf",
        "cat12__roi002__gm",
        "cat12__roi002__csf",
        "desikan__lh_bankssts__area",
        "desikan__lh_bankssts__gm_volume",
        "desikan__rh_bankssts__thickness",
        "destrieux__lh_G_and_S_frontomargin__area",
        "destrieux__lh_G_and_S_frontomargin__gm_volume",
        "destrieux__rh_G_and_S_frontomargin__thickness",
    ])
    .unwrap()
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}
