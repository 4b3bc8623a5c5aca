//! Linear ε-insensitive support vector regression.
//!
//! The dual is solved over `theta_i = alpha_i - alpha_i^*` with
//! `-C <= theta_i <= C` and `sum theta_i = 0` (the constraint that keeps the
//! intercept out of the penalty). Each step moves one pair of dual variables
//! along the maximal violating direction and solves the resulting
//! one-dimensional piecewise quadratic exactly. The intercept is recovered by
//! minimising the primal over `c` for the final weight vector.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Above this many rows the Gram matrix is not materialised.
const GRAM_MAX_ROWS: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvrParams {
    pub c: f64,
    pub epsilon: f64,
    pub tol: f64,
    pub max_passes: usize,
    pub seed: u64,
}

impl Default for SvrParams {
    fn default() -> Self {
        SvrParams {
            c: 1.0,
            epsilon: 1.0,
            tol: 1e-4,
            max_passes: 10_000,
            seed: 0,
        }
    }
}

impl SvrParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::InvalidArgument(format!("SVR C must be > 0, got {}", self.c)));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "SVR epsilon must be >= 0, got {}",
                self.epsilon
            )));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument("SVR tolerance must be > 0".into()));
        }
        if self.max_passes == 0 {
            return Err(Error::InvalidArgument("SVR max_passes must be >= 1".into()));
        }
        Ok(())
    }
}

/// Row-major copy of the design plus its Gram matrix when affordable. Can be
/// shared across fits that use the same design with different (C, ε).
#[derive(Debug, Clone)]
pub struct SvrWorkspace {
    m: usize,
    n: usize,
    rows: Vec<f64>,
    gram: Option<Vec<f64>>,
}

impl SvrWorkspace {
    pub fn new(x: &DMatrix<f64>) -> Self {
        let (m, n) = x.shape();
        let mut rows = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                rows[i * n + j] = x[(i, j)];
            }
        }
        let gram = (m <= GRAM_MAX_ROWS).then(|| {
            let mut g = vec![0.0; m * m];
            g.par_chunks_mut(m).enumerate().for_each(|(i, out)| {
                let xi = &rows[i * n..(i + 1) * n];
                for (k, o) in out.iter_mut().enumerate() {
                    *o = dot(xi, &rows[k * n..(k + 1) * n]);
                }
            });
            g
        });
        SvrWorkspace { m, n, rows, gram }
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.n..(i + 1) * self.n]
    }

    fn kernel(&self, i: usize, k: usize) -> f64 {
        match &self.gram {
            Some(g) => g[i * self.m + k],
            None => dot(self.row(i), self.row(k)),
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvrSolution {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub objective: f64,
    pub max_violation: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// `½||w||² + C Σ max(0, |y - Xw - c| - ε)`
pub fn primal_objective(x: &DMatrix<f64>, y: &[f64], w: &[f64], c: f64, params: &SvrParams) -> f64 {
    let reg = 0.5 * dot(w, w);
    let loss: f64 = (0..x.nrows())
        .map(|i| {
            let f: f64 = (0..x.ncols()).map(|j| x[(i, j)] * w[j]).sum::<f64>() + c;
            ((y[i] - f).abs() - params.epsilon).max(0.0)
        })
        .sum();
    reg + params.c * loss
}

/// Exact minimiser set `[lo, hi]` of `Σ max(0, |r_i - c| - ε)` over `c`.
pub fn intercept_interval(residuals: &[f64], epsilon: f64) -> (f64, f64) {
    // derivative at c is #{r_i + ε < c} - #{r_i - ε > c}; it steps up by one
    // at every breakpoint, starting from -m
    let m = residuals.len();
    let mut bps: Vec<f64> = residuals
        .iter()
        .flat_map(|r| [r - epsilon, r + epsilon])
        .collect();
    bps.sort_by(f64::total_cmp);
    // after passing k breakpoints the slope is k - m; optimum where it crosses 0
    (bps[m - 1], bps[m])
}

fn solve_pair(q: f64, dg: f64, eps: f64, ti: f64, tj: f64, upper: f64) -> f64 {
    let f = |t: f64| 0.5 * q * t * t + dg * t + eps * ((ti + t).abs() + (tj - t).abs());
    let mut knots = vec![0.0, upper];
    for b in [-ti, tj] {
        if b > 0.0 && b < upper {
            knots.push(b);
        }
    }
    knots.sort_by(f64::total_cmp);
    let mut best = (f(0.0), 0.0);
    for seg in knots.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        let mid = 0.5 * (a + b);
        let si = if ti + mid >= 0.0 { 1.0 } else { -1.0 };
        let sj = if tj - mid >= 0.0 { -1.0 } else { 1.0 };
        let lin = dg + eps * (si + sj);
        let mut cands = vec![a, b];
        if q > 0.0 {
            cands.push((-lin / q).clamp(a, b));
        }
        for t in cands {
            let v = f(t);
            if v < best.0 {
                best = (v, t);
            }
        }
    }
    best.1
}

pub fn fit_svr_with(ws: &SvrWorkspace, x: &DMatrix<f64>, y: &[f64], params: &SvrParams) -> Result<SvrSolution> {
    params.validate()?;
    let (m, n) = (ws.m, ws.n);
    if m == 0 {
        return Err(Error::Empty("cannot fit SVR on zero rows".into()));
    }
    if y.len() != m {
        return Err(Error::Dimension(format!("{m} rows but {} targets", y.len())));
    }
    let (cap, eps) = (params.c, params.epsilon);
    let mut theta = vec![0.0; m];
    let mut w = vec![0.0; n];
    let mut grad: Vec<f64> = y.iter().map(|v| -v).collect();
    let max_iter = params.max_passes.saturating_mul(m.max(1));
    let mut iterations = 0;
    let mut violation;
    let mut converged = false;
    let mut dir = vec![0.0; n];
    loop {
        // most attractive index to increase and to decrease
        let (mut up, mut up_val) = (usize::MAX, f64::INFINITY);
        let (mut dn, mut dn_val) = (usize::MAX, f64::NEG_INFINITY);
        for k in 0..m {
            if theta[k] < cap {
                let v = grad[k] + if theta[k] >= 0.0 { eps } else { -eps };
                if v < up_val {
                    up_val = v;
                    up = k;
                }
            }
            if theta[k] > -cap {
                let v = grad[k] + if theta[k] > 0.0 { eps } else { -eps };
                if v > dn_val {
                    dn_val = v;
                    dn = k;
                }
            }
        }
        violation = if up == usize::MAX || dn == usize::MAX {
            0.0
        } else {
            (dn_val - up_val).max(0.0)
        };
        if violation < params.tol {
            converged = true;
            break;
        }
        if iterations >= max_iter {
            break;
        }
        iterations += 1;

        let (i, j) = (up, dn);
        let q = (ws.kernel(i, i) + ws.kernel(j, j) - 2.0 * ws.kernel(i, j)).max(0.0);
        let upper = (cap - theta[i]).min(theta[j] + cap);
        let t = solve_pair(q, grad[i] - grad[j], eps, theta[i], theta[j], upper);
        if t <= 0.0 {
            // no representable progress along the steepest pair
            break;
        }
        theta[i] += t;
        theta[j] -= t;
        let (xi, xj) = (ws.row(i), ws.row(j));
        for k in 0..n {
            dir[k] = xi[k] - xj[k];
            w[k] += t * dir[k];
        }
        match &ws.gram {
            Some(g) => {
                let (gi, gj) = (&g[i * m..(i + 1) * m], &g[j * m..(j + 1) * m]);
                for k in 0..m {
                    grad[k] += t * (gi[k] - gj[k]);
                }
            }
            None => {
                grad.par_iter_mut().enumerate().for_each(|(k, gk)| {
                    *gk += t * dot(ws.row(k), &dir);
                });
            }
        }
    }

    // recompute residuals from w to shed accumulated drift in `grad`
    let residuals: Vec<f64> = (0..m).map(|k| y[k] - dot(ws.row(k), &w)).collect();
    let (lo, hi) = intercept_interval(&residuals, eps);
    let tiny = 1e-9 * cap;
    let free: Vec<f64> = (0..m)
        .filter(|&k| theta[k].abs() > tiny && theta[k].abs() < cap - tiny)
        .map(|k| residuals[k] - eps * theta[k].signum())
        .collect();
    let kkt = if free.is_empty() {
        0.5 * (lo + hi)
    } else {
        free.iter().sum::<f64>() / free.len() as f64
    };
    let intercept = kkt.clamp(lo, hi);
    let objective = primal_objective(x, y, &w, intercept, params);
    Ok(SvrSolution {
        weights: w,
        intercept,
        objective,
        max_violation: violation,
        iterations,
        converged,
    })
}

pub fn fit_svr(x: &DMatrix<f64>, y: &[f64], params: &SvrParams) -> Result<SvrSolution> {
    params.validate()?;
    fit_svr_with(&SvrWorkspace::new(x), x, y, params)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn intercept_interval_is_the_median_band() {
        // ε = 0: minimiser of Σ|r - c| is the median interval
        assert_eq!(intercept_interval(&[1.0, 5.0, 2.0], 0.0), (2.0, 2.0));
        assert_eq!(intercept_interval(&[1.0, 5.0, 2.0, 4.0], 0.0), (2.0, 4.0));
        // wide tube: every point inside for c in [max-ε, min+ε]
        assert_eq!(intercept_interval(&[0.0, 1.0], 10.0), (-9.0, 10.0));
    }

    #[test]
    fn pair_step_hits_the_unconstrained_minimum() {
        // f(t) = ½ t² + (-3) t with theta = 0 and ε = 0 -> t = 3
        assert!((solve_pair(1.0, -3.0, 0.0, 0.0, 0.0, 10.0) - 3.0).abs() < 1e-15);
        // clipped by the box
        assert_eq!(solve_pair(1.0, -3.0, 0.0, 0.0, 0.0, 2.0), 2.0);
        // ε absorbs the pull: |dg| <= 2ε at theta = 0 means no move
        assert_eq!(solve_pair(1.0, -1.0, 1.0, 0.0, 0.0, 10.0), 0.0);
    }

    #[test]
    fn wide_tube_gives_zero_weights() {
        let x = DMatrix::from_column_slice(5, 1, &[0.0, 0.3, 0.5, 0.8, 1.0]);
        let y = [10.0, 12.0, 11.0, 13.0, 12.5];
        let p = SvrParams { c: 5.0, epsilon: 2.0, ..Default::default() };
        let s = fit_svr(&x, &y, &p).unwrap();
        assert_eq!(s.weights, vec![0.0]);
        assert_eq!(s.objective, 0.0);
        assert!(s.converged);
    }

    #[test]
    fn rejects_bad_parameters() {
        let x = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
        let bad_c = SvrParams { c: 0.0, ..Default::default() };
        assert!(fit_svr(&x, &[0.0, 1.0], &bad_c).is_err());
        let bad_eps = SvrParams { epsilon: -1.0, ..Default::default() };
        assert!(fit_svr(&x, &[0.0, 1.0], &bad_eps).is_err());
    }

    #[test]
    fn gram_and_streaming_paths_agree() {
        let x = DMatrix::from_fn(12, 2, |i, j| ((i * 7 + j * 3) % 11) as f64 / 10.0);
        let y: Vec<f64> = (0..12).map(|i| 3.0 * x[(i, 0)] - x[(i, 1)] + (i % 3) as f64 * 0.1).collect();
        let p = SvrParams { c: 10.0, epsilon: 0.05, tol: 1e-8, ..Default::default() };
        let mut ws = SvrWorkspace::new(&x);
        let a = fit_svr_with(&ws, &x, &y, &p).unwrap();
        ws.gram = None;
        let b = fit_svr_with(&ws, &x, &y, &p).unwrap();
        assert!(a.converged && b.converged, "{a:?} {b:?}");
        assert!((a.objective - b.objective).abs() < 1e-6 * a.objective, "{a:?} {b:?}");
    }
}
