//! Training objectives: the explicit-precision-regularized loss, the
//! reverse-KL and forward-KL Dirichlet baselines, and plain cross-entropy.
//! Every loss returns its batch-mean value together with closed-form
//! gradients with respect to the logits; finite-difference checks live in
//! the tests.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dirichlet::{dirichlet_kl, DirichletParams};
use crate::special_math::{digamma, log_sum_exp, sigmoid, softmax, trigamma};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossFamily {
    Proposed,
    Rkl,
    Fkl,
    CrossEntropy,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LossConfig {
    pub family: LossFamily,
    pub lambda_in: f64,
    pub lambda_out: f64,
    pub gamma: f64,
    /// KL target concentration for the true class (RKL/FKL).
    pub beta_in_correct: f64,
    /// KL target concentration for the other classes (RKL/FKL).
    pub beta_in_incorrect: f64,
    /// Per-class KL target concentration for OOD examples; tau + 1.
    pub beta_out: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            family: LossFamily::Proposed,
            lambda_in: 0.0,
            lambda_out: 0.0,
            gamma: 1.0,
            beta_in_correct: 100.0,
            beta_in_incorrect: 1.0,
            beta_out: 1.0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<(), LossError> {
        if !(self.gamma > 0.0) {
            return Err(LossError::BadConfig(format!(
                "gamma must be > 0, got {}",
                self.gamma
            )));
        }
        if matches!(self.family, LossFamily::Rkl | LossFamily::Fkl)
            && (self.beta_in_correct <= 0.0
                || self.beta_in_incorrect <= 0.0
                || self.beta_out <= 0.0)
        {
            return Err(LossError::BadConfig(
                "KL target concentrations must be > 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum LossError {
    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: usize, num_classes: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("invalid loss config: {0}")]
    BadConfig(String),
}

/// Batch-mean loss value plus per-example logit gradients.
#[derive(Debug, Clone)]
pub struct LossBatchResult {
    pub loss: f64,
    pub grad_logits: Vec<Vec<f64>>,
}

impl LossBatchResult {
    fn zero() -> Self {
        Self {
            loss: 0.0,
            grad_logits: Vec::new(),
        }
    }
}

fn check_labels(z: &[Vec<f64>], y: &[usize]) -> Result<(), LossError> {
    if z.is_empty() {
        return Err(LossError::EmptyBatch);
    }
    for (row, &label) in z.iter().zip(y) {
        if label >= row.len() {
            return Err(LossError::LabelOutOfRange {
                label,
                num_classes: row.len(),
            });
        }
    }
    Ok(())
}

/// Cross-entropy with the sigmoid precision regularizer:
/// -log softmax(z)_y - (lambda_in / K) sum_c sigmoid(z_c).
pub fn proposed_in_loss(
    z: &[Vec<f64>],
    y: &[usize],
    lambda_in: f64,
) -> Result<LossBatchResult, LossError> {
    check_labels(z, y)?;
    let n = z.len() as f64;
    let mut total = 0.0;
    let mut grads = Vec::with_capacity(z.len());
    for (row, &label) in z.iter().zip(y) {
        let k = row.len() as f64;
        let lse = log_sum_exp(row).expect("non-empty logits");
        let probs = softmax(row);
        let mut reg = 0.0;
        let mut grad = vec![0.0; row.len()];
        for (c, (&zc, &pc)) in row.iter().zip(&probs).enumerate() {
            let s = sigmoid(zc);
            reg += s;
            grad[c] = (pc - if c == label { 1.0 } else { 0.0 }
                - lambda_in / k * s * (1.0 - s))
                / n;
        }
        total += lse - row[label] - lambda_in / k * reg;
        grads.push(grad);
    }
    Ok(LossBatchResult {
        loss: total / n,
        grad_logits: grads,
    })
}

/// Uniform-target cross-entropy with the sigmoid regularizer:
/// -(1/K) sum_c log softmax(z)_c - (lambda_out / K) sum_c sigmoid(z_c).
pub fn proposed_out_loss(z: &[Vec<f64>], lambda_out: f64) -> Result<LossBatchResult, LossError> {
    if z.is_empty() {
        return Err(LossError::EmptyBatch);
    }
    let n = z.len() as f64;
    let mut total = 0.0;
    let mut grads = Vec::with_capacity(z.len());
    for row in z {
        let k = row.len() as f64;
        let lse = log_sum_exp(row).expect("non-empty logits");
        let probs = softmax(row);
        let mut reg = 0.0;
        let mut mean_z = 0.0;
        let mut grad = vec![0.0; row.len()];
        for (c, (&zc, &pc)) in row.iter().zip(&probs).enumerate() {
            let s = sigmoid(zc);
            reg += s;
            mean_z += zc / k;
            grad[c] = (pc - 1.0 / k - lambda_out / k * s * (1.0 - s)) / n;
        }
        total += lse - mean_z - lambda_out / k * reg;
        grads.push(grad);
    }
    Ok(LossBatchResult {
        loss: total / n,
        grad_logits: grads,
    })
}

fn in_targets(k: usize, label: usize, cfg: &LossConfig) -> Vec<f64> {
    (0..k)
        .map(|c| {
            if c == label {
                cfg.beta_in_correct
            } else {
                cfg.beta_in_incorrect
            }
        })
        .collect()
}

/// KL(Dir(exp z) || Dir(beta)) with the analytic gradient
/// dKL/dz_c = alpha_c [ (alpha_c - beta_c) psi'(alpha_c) - psi'(alpha_0) sum_k (alpha_k - beta_k) ].
fn rkl_batch(z: &[Vec<f64>], targets: &[Vec<f64>]) -> LossBatchResult {
    let n = z.len() as f64;
    let mut total = 0.0;
    let mut grads = Vec::with_capacity(z.len());
    for (row, beta) in z.iter().zip(targets) {
        let alpha: Vec<f64> = row.iter().map(|&v| v.exp()).collect();
        let p = DirichletParams::new(alpha.clone()).expect("exp(z) > 0");
        let q = DirichletParams::new(beta.clone()).expect("targets > 0");
        total += dirichlet_kl(&p, &q).expect("same K");
        let a0: f64 = alpha.iter().sum();
        let diff_sum: f64 = alpha.iter().zip(beta).map(|(a, b)| a - b).sum();
        let tri_a0 = trigamma(a0).expect("alpha_0 > 0");
        let grad = alpha
            .iter()
            .zip(beta)
            .map(|(&a, &b)| a * ((a - b) * trigamma(a).expect("alpha_c > 0") - tri_a0 * diff_sum) / n)
            .collect();
        grads.push(grad);
    }
    LossBatchResult {
        loss: total / n,
        grad_logits: grads,
    }
}

/// KL(Dir(beta) || Dir(exp z)); dKL/dz_c = alpha_c [ psi(alpha_c) - psi(alpha_0) - psi(beta_c) + psi(beta_0) ].
fn fkl_batch(z: &[Vec<f64>], targets: &[Vec<f64>]) -> LossBatchResult {
    let n = z.len() as f64;
    let mut total = 0.0;
    let mut grads = Vec::with_capacity(z.len());
    for (row, beta) in z.iter().zip(targets) {
        let alpha: Vec<f64> = row.iter().map(|&v| v.exp()).collect();
        let p = DirichletParams::new(alpha.clone()).expect("exp(z) > 0");
        let q = DirichletParams::new(beta.clone()).expect("targets > 0");
        total += dirichlet_kl(&q, &p).expect("same K");
        let a0: f64 = alpha.iter().sum();
        let b0: f64 = beta.iter().sum();
        let psi_a0 = digamma(a0).unwrap();
        let psi_b0 = digamma(b0).unwrap();
        let grad = alpha
            .iter()
            .zip(beta)
            .map(|(&a, &b)| {
                a * (digamma(a).unwrap() - psi_a0 - digamma(b).unwrap() + psi_b0) / n
            })
            .collect();
        grads.push(grad);
    }
    LossBatchResult {
        loss: total / n,
        grad_logits: grads,
    }
}

pub fn rkl_in_loss(
    z: &[Vec<f64>],
    y: &[usize],
    cfg: &LossConfig,
) -> Result<LossBatchResult, LossError> {
    check_labels(z, y)?;
    let targets: Vec<Vec<f64>> = z
        .iter()
        .zip(y)
        .map(|(row, &label)| in_targets(row.len(), label, cfg))
        .collect();
    Ok(rkl_batch(z, &targets))
}

pub fn rkl_out_loss(z: &[Vec<f64>], cfg: &LossConfig) -> Result<LossBatchResult, LossError> {
    if z.is_empty() {
        return Err(LossError::EmptyBatch);
    }
    let targets: Vec<Vec<f64>> = z.iter().map(|row| vec![cfg.beta_out; row.len()]).collect();
    Ok(rkl_batch(z, &targets))
}

pub fn fkl_in_loss(
    z: &[Vec<f64>],
    y: &[usize],
    cfg: &LossConfig,
) -> Result<LossBatchResult, LossError> {
    check_labels(z, y)?;
    let targets: Vec<Vec<f64>> = z
        .iter()
        .zip(y)
        .map(|(row, &label)| in_targets(row.len(), label, cfg))
        .collect();
    Ok(fkl_batch(z, &targets))
}

pub fn fkl_out_loss(z: &[Vec<f64>], cfg: &LossConfig) -> Result<LossBatchResult, LossError> {
    if z.is_empty() {
        return Err(LossError::EmptyBatch);
    }
    let targets: Vec<Vec<f64>> = z.iter().map(|row| vec![cfg.beta_out; row.len()]).collect();
    Ok(fkl_batch(z, &targets))
}

/// In-domain loss for the configured family.
pub fn in_loss(
    z: &[Vec<f64>],
    y: &[usize],
    cfg: &LossConfig,
) -> Result<LossBatchResult, LossError> {
    match cfg.family {
        LossFamily::Proposed => proposed_in_loss(z, y, cfg.lambda_in),
        LossFamily::CrossEntropy => proposed_in_loss(z, y, 0.0),
        LossFamily::Rkl => rkl_in_loss(z, y, cfg),
        LossFamily::Fkl => fkl_in_loss(z, y, cfg),
    }
}

/// OOD loss for the configured family. Cross-entropy has no OOD term.
pub fn out_loss(z: &[Vec<f64>], cfg: &LossConfig) -> Result<LossBatchResult, LossError> {
    match cfg.family {
        LossFamily::Proposed => proposed_out_loss(z, cfg.lambda_out),
        LossFamily::CrossEntropy => Ok(LossBatchResult::zero()),
        LossFamily::Rkl => rkl_out_loss(z, cfg),
        LossFamily::Fkl => fkl_out_loss(z, cfg),
    }
}

/// Multi-task objective: L_in + gamma * L_out. OOD gradients come back
/// pre-scaled by gamma so callers can apply them directly.
pub fn combined_loss(
    in_z: &[Vec<f64>],
    in_y: &[usize],
    out_z: &[Vec<f64>],
    cfg: &LossConfig,
) -> Result<(LossBatchResult, LossBatchResult), LossError> {
    let in_result = in_loss(in_z, in_y, cfg)?;
    let mut out_result = if out_z.is_empty() {
        if cfg.family != LossFamily::CrossEntropy {
            return Err(LossError::EmptyBatch);
        }
        LossBatchResult::zero()
    } else {
        out_loss(out_z, cfg)?
    };
    for grad in &mut out_result.grad_logits {
        for g in grad {
            *g *= cfg.gamma;
        }
    }
    Ok((in_result, out_result))
}
