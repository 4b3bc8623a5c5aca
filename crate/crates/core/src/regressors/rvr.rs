//! Relevance vector regression on a linear basis `[features, 1]`.
//!
//! Type-II maximum likelihood with the re-estimation rules
//! `alpha_i <- gamma_i / mu_i^2` and
//! `beta <- (m - sum gamma) / ||y - Phi mu||^2`, `gamma_i = 1 - alpha_i Sigma_ii`.
//! Bases whose precision exceeds the prune threshold are removed for good.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Upper bound on the noise precision relative to `1 / var(y)`; a noiseless
/// target would otherwise drive it to infinity.
const MAX_PRECISION_RATIO: f64 = 1e10;
const INITIAL_ALPHA: f64 = 1e-6;
const MIN_ALPHA: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RvrParams {
    pub prune_threshold: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for RvrParams {
    fn default() -> Self {
        RvrParams {
            prune_threshold: 1e9,
            max_iter: 500,
            tol: 1e-6,
        }
    }
}

impl RvrParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.prune_threshold > 0.0) {
            return Err(Error::InvalidArgument("RVR prune threshold must be > 0".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidArgument("RVR max_iter must be >= 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument("RVR tolerance must be > 0".into()));
        }
        Ok(())
    }
}

/// Hyperparameter state of a fitted RVR. Basis index `n` is the bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RvrState {
    pub retained: Vec<usize>,
    /// Precision of each retained basis, aligned with `retained`.
    pub alpha: Vec<f64>,
    pub noise_precision: f64,
    pub bias_retained: bool,
    /// Retained-basis count after each iteration.
    pub retained_history: Vec<usize>,
    /// Log marginal likelihood of the posterior evaluated at each iteration.
    pub log_evidence_history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RvrSolution {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub state: RvrState,
    pub iterations: usize,
    pub converged: bool,
}

struct Posterior {
    mu: DVector<f64>,
    sigma_diag: DVector<f64>,
    residual_sq: f64,
    log_evidence: f64,
}

fn posterior(
    phi: &DMatrix<f64>,
    gram: &DMatrix<f64>,
    phi_t_y: &DVector<f64>,
    y: &DVector<f64>,
    active: &[usize],
    alpha: &[f64],
    beta: f64,
) -> Result<Posterior> {
    let k = active.len();
    let m = y.len();
    let mut h = DMatrix::from_fn(k, k, |a, b| beta * gram[(active[a], active[b])]);
    for a in 0..k {
        h[(a, a)] += alpha[a];
    }
    let chol = Cholesky::new(h)
        .ok_or_else(|| Error::Numerical("RVR posterior precision is not positive definite".into()))?;
    let rhs = DVector::from_fn(k, |a, _| beta * phi_t_y[active[a]]);
    let mu = chol.solve(&rhs);
    let sigma = chol.inverse();
    let sigma_diag = sigma.diagonal();
    let mut fitted = DVector::zeros(m);
    for (a, &col) in active.iter().enumerate() {
        fitted.axpy(mu[a], &phi.column(col), 1.0);
    }
    let residual_sq = (y - fitted).norm_squared();
    let log_det_h: f64 = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let log_alpha: f64 = alpha.iter().map(|a| a.ln()).sum();
    let prior_term: f64 = alpha.iter().zip(mu.iter()).map(|(a, u)| a * u * u).sum();
    let log_evidence = -0.5
        * (m as f64 * (2.0 * std::f64::consts::PI).ln() + log_det_h
            - m as f64 * beta.ln()
            - log_alpha
            + beta * residual_sq
            + prior_term);
    Ok(Posterior {
        mu,
        sigma_diag,
        residual_sq,
        log_evidence,
    })
}

pub fn fit_rvr(x: &DMatrix<f64>, y: &[f64], params: &RvrParams) -> Result<RvrSolution> {
    params.validate()?;
    let (m, n) = x.shape();
    if m < 2 {
        return Err(Error::InvalidArgument(format!("RVR needs at least 2 rows, got {m}")));
    }
    if y.len() != m {
        return Err(Error::Dimension(format!("{m} rows but {} targets", y.len())));
    }
    let phi = x.clone().insert_column(n, 1.0);
    let gram = phi.tr_mul(&phi);
    let yv = DVector::from_column_slice(y);
    let phi_t_y = phi.tr_mul(&yv);

    let mean = y.iter().sum::<f64>() / m as f64;
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / m as f64;
    let mean_sq = y.iter().map(|v| v * v).sum::<f64>() / m as f64;
    let scale = match var.max(1e-10 * mean_sq) {
        s if s > 0.0 => s,
        _ => 1.0,
    };
    let beta_max = MAX_PRECISION_RATIO / scale;
    let mut beta = (100.0 / scale).min(beta_max);

    let mut active: Vec<usize> = (0..=n).collect();
    let mut alpha = vec![INITIAL_ALPHA; n + 1];
    let mut retained_history = Vec::new();
    let mut log_evidence_history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    while iterations < params.max_iter {
        if active.is_empty() {
            converged = true;
            break;
        }
        iterations += 1;
        let post = posterior(&phi, &gram, &phi_t_y, &yv, &active, &alpha, beta)?;
        log_evidence_history.push(post.log_evidence);

        let mut gamma_sum = 0.0;
        let mut new_alpha = Vec::with_capacity(active.len());
        for (a, alpha_a) in alpha.iter().enumerate() {
            let gamma = (1.0 - alpha_a * post.sigma_diag[a]).clamp(0.0, 1.0);
            gamma_sum += gamma;
            let mu2 = post.mu[a] * post.mu[a];
            new_alpha.push(if mu2 > 0.0 { gamma / mu2 } else { f64::INFINITY });
        }
        let dof = (m as f64 - gamma_sum).max(0.0);
        beta = if post.residual_sq > 0.0 {
            (dof / post.residual_sq).min(beta_max)
        } else {
            beta_max
        };
        if !(beta > 0.0) {
            beta = 1.0 / scale;
        }

        let mut max_change: f64 = 0.0;
        let mut pruned_any = false;
        let mut next_active = Vec::with_capacity(active.len());
        let mut next_alpha = Vec::with_capacity(active.len());
        for ((&idx, &old), &new) in active.iter().zip(&alpha).zip(&new_alpha) {
            if new > params.prune_threshold || !new.is_finite() {
                pruned_any = true;
                continue;
            }
            let new = new.max(MIN_ALPHA);
            max_change = max_change.max((new.ln() - old.ln()).abs());
            next_active.push(idx);
            next_alpha.push(new);
        }
        active = next_active;
        alpha = next_alpha;
        retained_history.push(active.len());
        if !pruned_any && max_change < params.tol {
            converged = true;
            break;
        }
    }

    let mut weights = vec![0.0; n];
    let mut intercept = 0.0;
    if !active.is_empty() {
        let post = posterior(&phi, &gram, &phi_t_y, &yv, &active, &alpha, beta)?;
        for (a, &idx) in active.iter().enumerate() {
            if idx == n {
                intercept = post.mu[a];
            } else {
                weights[idx] = post.mu[a];
            }
        }
    }
    let bias_retained = active.last() == Some(&n);
    Ok(RvrSolution {
        weights,
        intercept,
        state: RvrState {
            retained: active,
            alpha,
            noise_precision: beta,
            bias_retained,
            retained_history,
            log_evidence_history,
        },
        iterations,
        converged,
    })
}
