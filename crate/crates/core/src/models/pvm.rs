//! Probabilistic voting model: a softmax over linear project scores whose
//! weights maximize the multinomial log-likelihood of the observed votes.
//!
//! With scores `s = X w`, probabilities `p = softmax(s)` and vote counts `n`
//! summing to `T`:
//!
//! ```text
//! L(w)  = Σ_i n_i log p_i(w) − (λ/2)‖w‖²
//! ∇L(w) = Σ_i n_i x_i − T Σ_j p_j x_j − λ w
//! ```

use log::warn;
use serde::{Deserialize, Serialize};

use super::ModelError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PvmConfig {
    pub max_iterations: usize,
    /// Convergence threshold on ‖∇L‖∞.
    pub tolerance: f64,
    /// L2 penalty strength λ; zero fits the plain likelihood.
    pub l2: f64,
    /// Armijo sufficient-increase constant.
    pub armijo: f64,
    /// Backtracking shrink factor.
    pub shrink: f64,
}

impl Default for PvmConfig {
    fn default() -> Self {
        PvmConfig { max_iterations: 5000, tolerance: 1e-6, l2: 0.0, armijo: 1e-4, shrink: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub log_likelihood: f64,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub converged: bool,
    /// Log-likelihood after each accepted step, starting at the initial point.
    #[serde(skip)]
    pub trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PvmModel {
    pub weights: Vec<f64>,
    pub diagnostics: FitDiagnostics,
}

fn check_dims(weights: &[f64], features: &[Vec<f64>]) -> Result<(), ModelError> {
    for (i, x) in features.iter().enumerate() {
        if x.len() != weights.len() {
            return Err(ModelError::DimensionMismatch { row: i, expected: weights.len(), got: x.len() });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite { row: i });
        }
    }
    Ok(())
}

pub fn scores(weights: &[f64], features: &[Vec<f64>]) -> Vec<f64> {
    features.iter().map(|x| x.iter().zip(weights).map(|(a, b)| a * b).sum()).collect()
}

/// Softmax with max-subtraction; stable for any finite scores.
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

fn log_sum_exp(scores: &[f64]) -> f64 {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln()
}

/// Vote probabilities `p_i = exp(s_i) / Σ_j exp(s_j)`.
pub fn pvm_probabilities(weights: &[f64], features: &[Vec<f64>]) -> Result<Vec<f64>, ModelError> {
    check_dims(weights, features)?;
    Ok(softmax(&scores(weights, features)))
}

pub fn log_likelihood(weights: &[f64], features: &[Vec<f64>], votes: &[f64], l2: f64) -> f64 {
    let s = scores(weights, features);
    let total: f64 = votes.iter().sum();
    let linear: f64 = votes.iter().zip(&s).map(|(n, s)| n * s).sum();
    let penalty = 0.5 * l2 * weights.iter().map(|w| w * w).sum::<f64>();
    linear - total * log_sum_exp(&s) - penalty
}

pub fn gradient(weights: &[f64], features: &[Vec<f64>], votes: &[f64], l2: f64) -> Vec<f64> {
    let p = softmax(&scores(weights, features));
    let total: f64 = votes.iter().sum();
    let mut g: Vec<f64> = weights.iter().map(|w| -l2 * w).collect();
    for ((x, n), pi) in features.iter().zip(votes).zip(&p) {
        let coef = n - total * pi;
        for (gj, xj) in g.iter_mut().zip(x) {
            *gj += coef * xj;
        }
    }
    g
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Maximizes the log-likelihood by gradient ascent from `w = 0`.
///
/// Each iteration tries a Barzilai-Borwein step length, then backtracks until
/// the Armijo condition holds, so the objective never decreases. When the
/// line search can no longer make progress in floating point the best iterate
/// is returned with `converged = false`.
pub fn fit_pvm(features: &[Vec<f64>], votes: &[f64], config: &PvmConfig) -> Result<PvmModel, ModelError> {
    let n = features.len();
    if n < 2 {
        return Err(ModelError::TooFewProjects { n });
    }
    if votes.len() != n {
        return Err(ModelError::LengthMismatch { features: n, votes: votes.len() });
    }
    if votes.iter().any(|v| *v < 0.0 || !v.is_finite()) {
        return Err(ModelError::NegativeVotes);
    }
    let total: f64 = votes.iter().sum();
    if total <= 0.0 {
        return Err(ModelError::NoVotes);
    }
    let d = features[0].len();
    let mut w = vec![0.0; d];
    check_dims(&w, features)?;

    let objective = |w: &[f64]| log_likelihood(w, features, votes, config.l2);
    let mut ll = objective(&w);
    let mut g = gradient(&w, features, votes, config.l2);
    let mut trace = vec![ll];
    let mut step = 1.0 / total;
    let mut iterations = 0;
    let mut converged = inf_norm(&g) < config.tolerance;

    while !converged && iterations < config.max_iterations {
        let g_sq: f64 = g.iter().map(|x| x * x).sum();
        let mut alpha = step;
        let accepted = loop {
            let candidate: Vec<f64> = w.iter().zip(&g).map(|(wi, gi)| wi + alpha * gi).collect();
            let cand_ll = objective(&candidate);
            if cand_ll.is_nan() {
                return Err(ModelError::NanObjective { iteration: iterations });
            }
            if cand_ll >= ll + config.armijo * alpha * g_sq {
                break Some((candidate, cand_ll));
            }
            alpha *= config.shrink;
            if alpha * g_sq.sqrt() < 1e-300 || alpha == 0.0 {
                break None;
            }
        };
        let Some((next_w, next_ll)) = accepted else {
            break;
        };
        iterations += 1;
        let next_g = gradient(&next_w, features, votes, config.l2);
        // Barzilai-Borwein length for the next trial step (ascent form).
        let s: Vec<f64> = next_w.iter().zip(&w).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = next_g.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        let ss: f64 = s.iter().map(|x| x * x).sum();
        step = if sy < 0.0 && ss > 0.0 { ss / -sy } else { alpha / config.shrink };
        w = next_w;
        ll = next_ll;
        g = next_g;
        trace.push(ll);
        converged = inf_norm(&g) < config.tolerance;
    }

    if !ll.is_finite() {
        return Err(ModelError::NanObjective { iteration: iterations });
    }
    let gradient_norm = inf_norm(&g);
    if !converged {
        warn!(
            "PVM fit stopped after {iterations} iterations with ‖∇L‖∞ = {gradient_norm:.3e} (tolerance {:.1e})",
            config.tolerance
        );
    }
    Ok(PvmModel {
        weights: w,
        diagnostics: FitDiagnostics { log_likelihood: ll, iterations, gradient_norm, converged, trace },
    })
}

/// Expected votes `T · p_i` for each project of the evaluated campaign.
pub fn predict_pvm(model: &PvmModel, features: &[Vec<f64>], total_votes: f64) -> Result<Vec<f64>, ModelError> {
    if total_votes.is_nan() || total_votes <= 0.0 {
        return Err(ModelError::NonPositiveTotal(total_votes));
    }
    Ok(pvm_probabilities(&model.weights, features)?.into_iter().map(|p| total_votes * p).collect())
}
