//! Experiment configuration: the JSON schema driving the CLI, fail-fast
//! validation, and the named presets covering the ablation settings.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::GridSpec;
use crate::losses::{LossConfig, LossFamily};
use crate::network::OptimizerConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config field {field}: {message}")]
    Invalid { field: String, message: String },
    #[error("unknown preset '{0}'")]
    UnknownPreset(String),
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse config {path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DataConfig {
    pub means: Vec<[f64; 2]>,
    pub sigma_std: f64,
    pub n_per_class: usize,
    pub ood_box: [f64; 4],
    pub ood_n: usize,
    pub exclusion_radius: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelConfig {
    pub layer_dims: Vec<usize>,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalConfig {
    pub grid: GridSpec,
    pub n_bins: usize,
    /// Held-out in-domain test points per class.
    pub in_test_per_class: usize,
    pub ood_test_n: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    pub model: ModelConfig,
    pub loss: LossConfig,
    pub optimizer: OptimizerConfig,
    pub training: TrainingConfig,
    pub eval: EvalConfig,
}

impl ExperimentConfig {
    /// Validates every field against its owning module's preconditions
    /// before any work starts.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |field: &str, message: String| {
            Err(ConfigError::Invalid {
                field: field.into(),
                message,
            })
        };
        if self.data.means.len() < 2 {
            return fail("data.means", format!("need >= 2 classes, got {}", self.data.means.len()));
        }
        if !(self.data.sigma_std > 0.0) {
            return fail("data.sigma_std", format!("must be > 0, got {}", self.data.sigma_std));
        }
        if self.data.n_per_class == 0 {
            return fail("data.n_per_class", "must be >= 1".into());
        }
        let [x_lo, x_hi, y_lo, y_hi] = self.data.ood_box;
        if !(x_lo < x_hi && y_lo < y_hi) {
            return fail("data.ood_box", format!("lo < hi required, got {:?}", self.data.ood_box));
        }
        if self.data.exclusion_radius < 0.0 {
            return fail("data.exclusion_radius", "must be >= 0".into());
        }
        if self.model.layer_dims.len() < 2 || self.model.layer_dims.iter().any(|&d| d == 0) {
            return fail("model.layer_dims", format!("invalid dims {:?}", self.model.layer_dims));
        }
        if *self.model.layer_dims.last().unwrap() != self.data.means.len() {
            return fail(
                "model.layer_dims",
                format!(
                    "output width {} does not match {} classes",
                    self.model.layer_dims.last().unwrap(),
                    self.data.means.len()
                ),
            );
        }
        if let Err(e) = self.loss.validate() {
            return fail("loss", e.to_string());
        }
        if !(self.optimizer.learning_rate > 0.0) {
            return fail("optimizer.learning_rate", "must be > 0".into());
        }
        if self.optimizer.momentum < 0.0 {
            return fail("optimizer.momentum", "must be >= 0".into());
        }
        if self.training.batch_size == 0 {
            return fail("training.batch_size", "must be >= 1".into());
        }
        if let Err(e) = self.eval.grid.validate() {
            return fail("eval.grid", e.to_string());
        }
        if self.eval.n_bins == 0 {
            return fail("eval.n_bins", "must be >= 1".into());
        }
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let cfg: ExperimentConfig =
            serde_json::from_str(&text).map_err(|source| ConfigError::Json {
                path: path.display().to_string(),
                source,
            })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn num_classes(&self) -> usize {
        self.data.means.len()
    }
}

fn synthetic_defaults(loss: LossConfig, optimizer: OptimizerConfig) -> ExperimentConfig {
    ExperimentConfig {
        data: DataConfig {
            means: crate::data::default_means(),
            sigma_std: 2.0,
            n_per_class: 200,
            ood_box: crate::data::DEFAULT_OOD_BOX,
            ood_n: 600,
            exclusion_radius: 6.0,
            seed: 11,
        },
        model: ModelConfig {
            layer_dims: vec![2, 50, 50, 3],
            seed: 12,
        },
        loss,
        optimizer,
        training: TrainingConfig {
            epochs: 500,
            batch_size: 64,
            seed: 13,
        },
        eval: EvalConfig {
            grid: GridSpec {
                x_range: [-15.0, 15.0],
                y_range: [-13.0, 17.0],
                resolution: 100,
            },
            n_bins: 15,
            in_test_per_class: 300,
            ood_test_n: 900,
            seed: 14,
        },
    }
}

fn sgd_default() -> OptimizerConfig {
    OptimizerConfig::sgd(0.05, 0.9)
}

pub const PRESET_NAMES: [&str; 9] = [
    "baseline",
    "oe",
    "dpn-plus",
    "dpn-minus",
    "dpn-rev",
    "dpn-fwd",
    "dpn-rev-frac",
    "dpn-0-minus",
    "dpn-half-0",
];

/// Named experiment settings; each ablation is one preset.
pub fn preset(name: &str) -> Result<ExperimentConfig, ConfigError> {
    let k = 3.0;
    let proposed = |lambda_in: f64, lambda_out: f64| LossConfig {
        family: LossFamily::Proposed,
        lambda_in,
        lambda_out,
        gamma: 1.0,
        ..LossConfig::default()
    };
    let kl = |family: LossFamily, beta_out: f64| LossConfig {
        family,
        gamma: 1.0,
        beta_in_correct: 100.0,
        beta_in_incorrect: 1.0,
        beta_out,
        ..LossConfig::default()
    };
    let cfg = match name {
        "baseline" => synthetic_defaults(
            LossConfig {
                family: LossFamily::CrossEntropy,
                gamma: 1.0,
                ..LossConfig::default()
            },
            sgd_default(),
        ),
        "oe" => synthetic_defaults(
            LossConfig {
                family: LossFamily::Proposed,
                lambda_in: 0.0,
                lambda_out: 0.0,
                gamma: 0.5,
                ..LossConfig::default()
            },
            sgd_default(),
        ),
        "dpn-plus" => synthetic_defaults(proposed(1.5, 1.0 / k + 0.5), sgd_default()),
        "dpn-minus" => synthetic_defaults(proposed(0.5, 1.0 / k - 0.5), sgd_default()),
        "dpn-rev" => synthetic_defaults(kl(LossFamily::Rkl, 1.0), OptimizerConfig::adam(1e-3)),
        "dpn-fwd" => synthetic_defaults(kl(LossFamily::Fkl, 1.0), OptimizerConfig::adam(1e-3)),
        "dpn-rev-frac" => {
            synthetic_defaults(kl(LossFamily::Rkl, 0.1), OptimizerConfig::adam(1e-3))
        }
        "dpn-0-minus" => synthetic_defaults(proposed(0.0, -0.5), sgd_default()),
        "dpn-half-0" => synthetic_defaults(proposed(0.5, 0.0), sgd_default()),
        other => return Err(ConfigError::UnknownPreset(other.into())),
    };
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::OptimizerKind;
    use approx::assert_abs_diff_eq;

    #[test]
    fn all_presets_validate() {
        for name in PRESET_NAMES {
            let cfg = preset(name).unwrap();
            cfg.validate().unwrap();
        }
        assert!(preset("nope").is_err());
    }

    #[test]
    fn preset_hyperparameters() {
        let minus = preset("dpn-minus").unwrap();
        assert_abs_diff_eq!(minus.loss.lambda_in, 0.5);
        assert_abs_diff_eq!(minus.loss.lambda_out, 1.0 / 3.0 - 0.5);
        assert_abs_diff_eq!(minus.loss.gamma, 1.0);
        assert_eq!(minus.optimizer.kind, OptimizerKind::Sgd);

        let plus = preset("dpn-plus").unwrap();
        assert_abs_diff_eq!(plus.loss.lambda_in, 1.5);
        assert_abs_diff_eq!(plus.loss.lambda_out, 1.0 / 3.0 + 0.5);

        let rev = preset("dpn-rev").unwrap();
        assert_eq!(rev.loss.family, LossFamily::Rkl);
        assert_abs_diff_eq!(rev.loss.beta_in_correct, 100.0);
        assert_abs_diff_eq!(rev.loss.beta_out, 1.0);
        assert_eq!(rev.optimizer.kind, OptimizerKind::Adam);

        let frac = preset("dpn-rev-frac").unwrap();
        assert_abs_diff_eq!(frac.loss.beta_out, 0.1);

        assert_eq!(preset("baseline").unwrap().loss.family, LossFamily::CrossEntropy);
        let oe = preset("oe").unwrap();
        assert_abs_diff_eq!(oe.loss.lambda_in, 0.0);
        assert_abs_diff_eq!(oe.loss.gamma, 0.5);
    }

    #[test]
    fn validation_names_the_field() {
        let mut cfg = preset("baseline").unwrap();
        cfg.data.sigma_std = -1.0;
        match cfg.validate() {
            Err(ConfigError::Invalid { field, .. }) => assert_eq!(field, "data.sigma_std"),
            other => panic!("expected invalid-field error, got {other:?}"),
        }

        let mut cfg = preset("baseline").unwrap();
        cfg.model.layer_dims = vec![2, 10, 4];
        assert!(matches!(cfg.validate(), Err(ConfigError::Invalid { field, .. }) if field == "model.layer_dims"));
    }

    #[test]
    fn config_json_roundtrip() {
        let cfg = preset("dpn-minus").unwrap();
        let json = serde_json::to_string_pretty(&cfg).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&json).unwrap();
        assert_abs_diff_eq!(back.loss.lambda_out, cfg.loss.lambda_out);
        assert_eq!(back.model.layer_dims, cfg.model.layer_dims);
    }
}
