//! Detection and calibration metrics: AUROC and AUPR over any uncertainty
//! score, RMS calibration error with the OOD-as-incorrect convention, and
//! the representation-gap metric (KL between bivariate Gaussians fitted to
//! (Max.P, log(-D.Ent)) clouds).

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{make_grid, GridSpec};
use crate::dirichlet::{all_measures, UncertaintyVector};
use crate::network::MlpModel;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("empty {0} population")]
    EmptyPopulation(&'static str),
    #[error("confidence/correctness length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} samples for {bins} bins, got {got}")]
    TooFewSamples {
        needed: usize,
        bins: usize,
        got: usize,
    },
    #[error("gaussian fit needs at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("non-finite value in gaussian fit input")]
    NonFinite,
    #[error("covariance is singular")]
    SingularCovariance,
    #[error("group '{0}' has fewer than 3 members")]
    GroupTooSmall(&'static str),
    #[error(transparent)]
    Data(#[from] crate::data::DataError),
    #[error(transparent)]
    Network(#[from] crate::network::NetworkError),
    #[error(transparent)]
    Dirichlet(#[from] crate::dirichlet::DirichletError),
}

/// Scores for a binary detection task; larger = more positive-like.
pub struct ScoredPopulation {
    pub positives: Vec<f64>,
    pub negatives: Vec<f64>,
}

impl ScoredPopulation {
    pub fn new(positives: Vec<f64>, negatives: Vec<f64>) -> Self {
        Self {
            positives,
            negatives,
        }
    }
}

/// Mann-Whitney AUROC with half-credit ties, O(n log n).
pub fn auroc(p: &ScoredPopulation) -> Result<f64, EvalError> {
    if p.positives.is_empty() {
        return Err(EvalError::EmptyPopulation("positive"));
    }
    if p.negatives.is_empty() {
        return Err(EvalError::EmptyPopulation("negative"));
    }
    let mut all: Vec<(f64, bool)> = p
        .positives
        .iter()
        .map(|&s| (s, true))
        .chain(p.negatives.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    // sum positive ranks with midranks for ties
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            j += 1;
        }
        let midrank = (i + j + 1) as f64 / 2.0; // ranks are 1-based
        for item in &all[i..j] {
            if item.1 {
                rank_sum += midrank;
            }
        }
        i = j;
    }
    let n_pos = p.positives.len() as f64;
    let n_neg = p.negatives.len() as f64;
    Ok((rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg))
}

/// Area under the precision-recall curve by descending-threshold sweep;
/// tied scores are processed as one threshold group.
pub fn aupr(p: &ScoredPopulation) -> Result<f64, EvalError> {
    if p.positives.is_empty() {
        return Err(EvalError::EmptyPopulation("positive"));
    }
    let mut all: Vec<(f64, bool)> = p
        .positives
        .iter()
        .map(|&s| (s, true))
        .chain(p.negatives.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    let n_pos = p.positives.len() as f64;
    let mut tp = 0.0;
    let mut fp = 0.0;
    let mut prev_recall = 0.0;
    let mut area = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            if all[j].1 {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            j += 1;
        }
        let recall = tp / n_pos;
        let precision = tp / (tp + fp);
        area += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j;
    }
    Ok(area)
}

/// RMS calibration error over equal-count confidence bins.
pub fn rms_calibration_error(
    confidences: &[f64],
    correct: &[bool],
    n_bins: usize,
) -> Result<f64, EvalError> {
    if confidences.len() != correct.len() {
        return Err(EvalError::LengthMismatch(confidences.len(), correct.len()));
    }
    let n = confidences.len();
    let n_bins = n_bins.max(1);
    if n < n_bins {
        return Err(EvalError::TooFewSamples {
            needed: n_bins,
            bins: n_bins,
            got: n,
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| confidences[a].partial_cmp(&confidences[b]).unwrap());
    let mut sum = 0.0;
    for b in 0..n_bins {
        let lo = b * n / n_bins;
        let hi = (b + 1) * n / n_bins;
        let size = (hi - lo) as f64;
        let conf: f64 = order[lo..hi].iter().map(|&i| confidences[i]).sum::<f64>() / size;
        let acc: f64 = order[lo..hi]
            .iter()
            .filter(|&&i| correct[i])
            .count() as f64
            / size;
        sum += size / n as f64 * (conf - acc).powi(2);
    }
    Ok(sum.sqrt())
}

/// Bivariate Gaussian: mean and symmetric positive-definite covariance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GaussianFit2D {
    pub mean: [f64; 2],
    /// [[xx, xy], [xy, yy]]
    pub covariance: [[f64; 2]; 2],
}

/// Sample mean and (n-1)-divisor covariance with a small ridge so tiny or
/// degenerate groups stay positive-definite.
pub fn fit_gaussian_2d(points: &[[f64; 2]]) -> Result<GaussianFit2D, EvalError> {
    if points.len() < 3 {
        return Err(EvalError::TooFewPoints(points.len()));
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(EvalError::NonFinite);
    }
    let n = points.len() as f64;
    let mean = [
        points.iter().map(|p| p[0]).sum::<f64>() / n,
        points.iter().map(|p| p[1]).sum::<f64>() / n,
    ];
    let mut cov = [[0.0; 2]; 2];
    for p in points {
        let dx = p[0] - mean[0];
        let dy = p[1] - mean[1];
        cov[0][0] += dx * dx;
        cov[0][1] += dx * dy;
        cov[1][1] += dy * dy;
    }
    for row in &mut cov {
        for v in row.iter_mut() {
            *v /= n - 1.0;
        }
    }
    cov[1][0] = cov[0][1];
    let ridge = 1e-9 * (0.5 * (cov[0][0] + cov[1][1])).max(1.0);
    cov[0][0] += ridge;
    cov[1][1] += ridge;
    Ok(GaussianFit2D {
        mean,
        covariance: cov,
    })
}

fn det2(m: &[[f64; 2]; 2]) -> f64 {
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}

fn inv2(m: &[[f64; 2]; 2]) -> Result<[[f64; 2]; 2], EvalError> {
    let d = det2(m);
    if d <= 0.0 || !d.is_finite() {
        return Err(EvalError::SingularCovariance);
    }
    Ok([
        [m[1][1] / d, -m[0][1] / d],
        [-m[1][0] / d, m[0][0] / d],
    ])
}

/// KL(N_from || N_to) for bivariate Gaussians:
/// 1/2 [ tr(S_to^-1 S_from) - 2 + ln(det S_to / det S_from) + (mu_to - mu_from)^T S_to^-1 (mu_to - mu_from) ].
pub fn gaussian_kl(from: &GaussianFit2D, to: &GaussianFit2D) -> Result<f64, EvalError> {
    let inv_to = inv2(&to.covariance)?;
    let s = &from.covariance;
    let trace = inv_to[0][0] * s[0][0]
        + inv_to[0][1] * s[1][0]
        + inv_to[1][0] * s[0][1]
        + inv_to[1][1] * s[1][1];
    let d = [to.mean[0] - from.mean[0], to.mean[1] - from.mean[1]];
    let quad = d[0] * (inv_to[0][0] * d[0] + inv_to[0][1] * d[1])
        + d[1] * (inv_to[1][0] * d[0] + inv_to[1][1] * d[1]);
    let log_det = (det2(&to.covariance) / det2(&from.covariance)).ln();
    Ok((0.5 * (trace - 2.0 + log_det + quad)).max(0.0))
}

/// Uncertainty measures whose scores feed the detection tasks. The arrow
/// direction (larger = more OOD-like) is fixed here so AUROC values are
/// comparable across measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Measure {
    MaxP,
    Entropy,
    MutualInformation,
    Precision,
    Epkl,
    DifferentialEntropy,
}

impl Measure {
    pub const ALL: [Measure; 6] = [
        Measure::MaxP,
        Measure::Entropy,
        Measure::MutualInformation,
        Measure::Precision,
        Measure::Epkl,
        Measure::DifferentialEntropy,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Measure::MaxP => "max_p",
            Measure::Entropy => "entropy",
            Measure::MutualInformation => "mi",
            Measure::Precision => "precision",
            Measure::Epkl => "epkl",
            Measure::DifferentialEntropy => "dent",
        }
    }

    /// Oriented score: MI, entropy and EPKL rise with uncertainty; Max.P,
    /// precision and D.Ent fall, so they are negated.
    pub fn oriented_score(&self, m: &UncertaintyVector) -> f64 {
        match self {
            Measure::MaxP => -m.max_p,
            Measure::Entropy => m.entropy,
            Measure::MutualInformation => m.mutual_information,
            Measure::Precision => -m.precision,
            Measure::Epkl => m.epkl,
            Measure::DifferentialEntropy => -m.differential_entropy,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectionScores {
    pub auroc: f64,
    pub aupr: f64,
}

/// Full evaluation output for one trained model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectionReport {
    pub ood_detection: BTreeMap<String, DetectionScores>,
    /// None when the in-domain split has no misclassified (or no correct)
    /// examples.
    pub misclassification_detection: Option<BTreeMap<String, DetectionScores>>,
    pub rms_calibration: f64,
    pub gap_kl_miss: Option<f64>,
    pub gap_kl_correct: Option<f64>,
    pub in_accuracy: f64,
}

/// (Max.P, log(-D.Ent)) pair for one example; -D.Ent is clamped to 1e-12
/// before the log so the metric stays total.
fn gap_coords(m: &UncertaintyVector) -> [f64; 2] {
    [m.max_p, (-m.differential_entropy).max(1e-12).ln()]
}

/// Representation gap: fit bivariate Gaussians to the (Max.P, log(-D.Ent))
/// clouds of misclassified, correct and OOD examples, and return
/// (KL(miss || ood), KL(correct || ood)).
pub fn representation_gap(
    model: &MlpModel,
    in_x: &[Vec<f64>],
    in_y: &[usize],
    ood_x: &[Vec<f64>],
) -> Result<(f64, f64), EvalError> {
    let in_logits = model.logits(in_x)?;
    let ood_logits = model.logits(ood_x)?;
    let mut miss = Vec::new();
    let mut correct = Vec::new();
    for (row, &label) in in_logits.iter().zip(in_y) {
        let m = all_measures(row)?;
        let pred = row
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        if pred == label {
            correct.push(gap_coords(&m));
        } else {
            miss.push(gap_coords(&m));
        }
    }
    let ood: Vec<[f64; 2]> = ood_logits
        .iter()
        .map(|row| all_measures(row).map(|m| gap_coords(&m)))
        .collect::<Result<_, _>>()?;
    if miss.len() < 3 {
        return Err(EvalError::GroupTooSmall("misclassified"));
    }
    if correct.len() < 3 {
        return Err(EvalError::GroupTooSmall("correct"));
    }
    if ood.len() < 3 {
        return Err(EvalError::GroupTooSmall("ood"));
    }
    let fit_miss = fit_gaussian_2d(&miss)?;
    let fit_correct = fit_gaussian_2d(&correct)?;
    let fit_ood = fit_gaussian_2d(&ood)?;
    Ok((
        gaussian_kl(&fit_miss, &fit_ood)?,
        gaussian_kl(&fit_correct, &fit_ood)?,
    ))
}

/// Per-point uncertainty table over a lattice, as a CSV string with header
/// `x0,x1,max_p,entropy,mi,precision,epkl,dent`. Rows are row-major over
/// the grid regardless of evaluation parallelism.
pub fn evaluate_grid(model: &MlpModel, spec: &GridSpec) -> Result<String, EvalError> {
    let points = make_grid(spec)?;
    let rows: Vec<String> = points
        .par_iter()
        .map(|p| -> Result<String, EvalError> {
            let z = model.logits(std::slice::from_ref(p))?;
            let m = all_measures(&z[0])?;
            Ok(format!(
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                p[0],
                p[1],
                m.max_p,
                m.entropy,
                m.mutual_information,
                m.precision,
                m.epkl,
                m.differential_entropy
            ))
        })
        .collect::<Result<_, _>>()?;
    let mut out = String::from("x0,x1,max_p,entropy,mi,precision,epkl,dent\n");
    for row in rows {
        out.push_str(&row);
        out.push('\n');
    }
    Ok(out)
}

/// Runs both detection tasks, calibration and the representation gap on
/// held-out data. Misclassification-dependent fields are None when a group
/// is empty; the caller decides how to report that.
pub fn build_report(
    model: &MlpModel,
    in_x: &[Vec<f64>],
    in_y: &[usize],
    ood_x: &[Vec<f64>],
    n_bins: usize,
) -> Result<DetectionReport, EvalError> {
    let in_logits = model.logits(in_x)?;
    let ood_logits = model.logits(ood_x)?;
    let in_measures: Vec<UncertaintyVector> = in_logits
        .iter()
        .map(|row| all_measures(row))
        .collect::<Result<_, _>>()?;
    let ood_measures: Vec<UncertaintyVector> = ood_logits
        .iter()
        .map(|row| all_measures(row))
        .collect::<Result<_, _>>()?;

    let mut ood_detection = BTreeMap::new();
    for measure in Measure::ALL {
        let pop = ScoredPopulation::new(
            ood_measures.iter().map(|m| measure.oriented_score(m)).collect(),
            in_measures.iter().map(|m| measure.oriented_score(m)).collect(),
        );
        ood_detection.insert(
            measure.name().to_string(),
            DetectionScores {
                auroc: auroc(&pop)?,
                aupr: aupr(&pop)?,
            },
        );
    }

    let predictions: Vec<usize> = in_logits
        .iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0
        })
        .collect();
    let correct_mask: Vec<bool> = predictions.iter().zip(in_y).map(|(p, y)| p == y).collect();
    let n_correct = correct_mask.iter().filter(|&&c| c).count();
    let in_accuracy = n_correct as f64 / in_x.len().max(1) as f64;

    let misclassification_detection = if n_correct == 0 || n_correct == in_x.len() {
        None
    } else {
        let mut map = BTreeMap::new();
        for measure in Measure::ALL {
            let pos: Vec<f64> = in_measures
                .iter()
                .zip(&correct_mask)
                .filter(|(_, &c)| !c)
                .map(|(m, _)| measure.oriented_score(m))
                .collect();
            let neg: Vec<f64> = in_measures
                .iter()
                .zip(&correct_mask)
                .filter(|(_, &c)| c)
                .map(|(m, _)| measure.oriented_score(m))
                .collect();
            let pop = ScoredPopulation::new(pos, neg);
            map.insert(
                measure.name().to_string(),
                DetectionScores {
                    auroc: auroc(&pop)?,
                    aupr: aupr(&pop)?,
                },
            );
        }
        Some(map)
    };

    // OOD examples count as always incorrect, confidence = Max.P
    let confidences: Vec<f64> = in_measures
        .iter()
        .map(|m| m.max_p)
        .chain(ood_measures.iter().map(|m| m.max_p))
        .collect();
    let correct_flags: Vec<bool> = correct_mask
        .iter()
        .cloned()
        .chain(std::iter::repeat(false).take(ood_x.len()))
        .collect();
    let rms_calibration = rms_calibration_error(&confidences, &correct_flags, n_bins)?;

    let (gap_kl_miss, gap_kl_correct) = match representation_gap(model, in_x, in_y, ood_x) {
        Ok((m, c)) => (Some(m), Some(c)),
        Err(EvalError::GroupTooSmall(_)) => (None, None),
        Err(e) => return Err(e),
    };

    Ok(DetectionReport {
        ood_detection,
        misclassification_detection,
        rms_calibration,
        gap_kl_miss,
        gap_kl_correct,
        in_accuracy,
    })
}
