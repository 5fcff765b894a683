//! Dirichlet distribution representation and the uncertainty measures
//! derived from it: Max.P, expected entropy, mutual information,
//! differential entropy, precision and EPKL, plus the Dirichlet-to-Dirichlet
//! KL divergence used by the reverse/forward KL losses.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::special_math::{digamma, ln_gamma};

/// Logits are clamped to this magnitude before exponentiation when computing
/// measures. Unregularized models can drive logits arbitrarily high; the
/// clamp keeps alpha finite. Loss and gradient computation never clamps.
pub const LOGIT_CLAMP: f64 = 30.0;

#[derive(Debug, Error, PartialEq)]
pub enum DirichletError {
    #[error("concentration vector needs K >= 2, got {0}")]
    TooFewClasses(usize),
    #[error("concentration parameter at index {index} is not positive and finite: {value}")]
    BadConcentration { index: usize, value: f64 },
    #[error("logit at index {index} is NaN")]
    NanLogit { index: usize },
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
}

/// Concentration parameters of one Dirichlet distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct DirichletParams {
    alpha: Vec<f64>,
    precision: f64,
}

/// A point on the probability simplex (the Dirichlet mean).
#[derive(Debug, Clone, PartialEq)]
pub struct Categorical {
    pub probs: Vec<f64>,
}

/// All six uncertainty measures for one input, computed from its logits.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UncertaintyVector {
    pub max_p: f64,
    pub entropy: f64,
    pub mutual_information: f64,
    pub differential_entropy: f64,
    pub precision: f64,
    pub epkl: f64,
}

impl DirichletParams {
    pub fn new(alpha: Vec<f64>) -> Result<Self, DirichletError> {
        if alpha.len() < 2 {
            return Err(DirichletError::TooFewClasses(alpha.len()));
        }
        for (index, &value) in alpha.iter().enumerate() {
            if !(value > 0.0) || !value.is_finite() {
                return Err(DirichletError::BadConcentration { index, value });
            }
        }
        let precision = alpha.iter().sum();
        Ok(Self { alpha, precision })
    }

    /// alpha_c = exp(clamp(z_c, -30, +30)).
    pub fn from_logits(z: &[f64]) -> Result<Self, DirichletError> {
        if z.len() < 2 {
            return Err(DirichletError::TooFewClasses(z.len()));
        }
        for (index, &v) in z.iter().enumerate() {
            if v.is_nan() {
                return Err(DirichletError::NanLogit { index });
            }
        }
        let alpha: Vec<f64> = z
            .iter()
            .map(|&v| v.clamp(-LOGIT_CLAMP, LOGIT_CLAMP).exp())
            .collect();
        Self::new(alpha)
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn num_classes(&self) -> usize {
        self.alpha.len()
    }

    /// alpha_0, the sum of the concentration parameters.
    pub fn precision(&self) -> f64 {
        self.precision
    }

    /// Expected categorical: p(omega_c) = alpha_c / alpha_0.
    pub fn mean(&self) -> Categorical {
        Categorical {
            probs: self.alpha.iter().map(|a| a / self.precision).collect(),
        }
    }

    pub fn max_p(&self) -> f64 {
        self.alpha.iter().cloned().fold(f64::NEG_INFINITY, f64::max) / self.precision
    }

    /// Shannon entropy of the expected categorical.
    pub fn expected_entropy(&self) -> f64 {
        -self
            .alpha
            .iter()
            .map(|a| {
                let p = a / self.precision;
                if p > 0.0 {
                    p * p.ln()
                } else {
                    0.0
                }
            })
            .sum::<f64>()
    }

    /// Mutual information between the label and the categorical:
    /// sum_c (alpha_c/alpha_0) [psi(alpha_c+1) - psi(alpha_0+1) - ln(alpha_c/alpha_0)].
    pub fn mutual_information(&self) -> f64 {
        let a0 = self.precision;
        let psi_a0 = digamma(a0 + 1.0).expect("alpha_0 + 1 > 0");
        let mi: f64 = self
            .alpha
            .iter()
            .map(|&a| {
                let p = a / a0;
                p * (digamma(a + 1.0).expect("alpha_c + 1 > 0") - psi_a0 - p.ln())
            })
            .sum();
        mi.max(0.0)
    }

    /// Differential entropy:
    /// sum_c lnGamma(alpha_c) - lnGamma(alpha_0) - sum_c (alpha_c-1)(psi(alpha_c) - psi(alpha_0)).
    pub fn differential_entropy(&self) -> f64 {
        let a0 = self.precision;
        let psi_a0 = digamma(a0).expect("alpha_0 > 0");
        let mut h = -ln_gamma(a0).expect("alpha_0 > 0");
        for &a in &self.alpha {
            h += ln_gamma(a).expect("alpha_c > 0");
            h -= (a - 1.0) * (digamma(a).expect("alpha_c > 0") - psi_a0);
        }
        h
    }

    /// Expected pairwise KL between categorical draws, (K-1)/alpha_0.
    pub fn epkl(&self) -> f64 {
        (self.alpha.len() as f64 - 1.0) / self.precision
    }
}

/// KL(Dir(p) || Dir(q)), closed form. Clamped at 0 from below.
pub fn dirichlet_kl(p: &DirichletParams, q: &DirichletParams) -> Result<f64, DirichletError> {
    if p.num_classes() != q.num_classes() {
        return Err(DirichletError::DimensionMismatch(
            p.num_classes(),
            q.num_classes(),
        ));
    }
    let p0 = p.precision();
    let q0 = q.precision();
    let psi_p0 = digamma(p0).expect("p0 > 0");
    let mut kl = ln_gamma(p0).unwrap() - ln_gamma(q0).unwrap();
    for (&pc, &qc) in p.alpha().iter().zip(q.alpha()) {
        kl -= ln_gamma(pc).unwrap();
        kl += ln_gamma(qc).unwrap();
        kl += (pc - qc) * (digamma(pc).unwrap() - psi_p0);
    }
    Ok(kl.max(0.0))
}

/// All six measures from one logit vector.
pub fn all_measures(z: &[f64]) -> Result<UncertaintyVector, DirichletError> {
    let d = DirichletParams::from_logits(z)?;
    Ok(UncertaintyVector {
        max_p: d.max_p(),
        entropy: d.expected_entropy(),
        mutual_information: d.mutual_information(),
        differential_entropy: d.differential_entropy(),
        precision: d.precision(),
        epkl: d.epkl(),
    })
}
