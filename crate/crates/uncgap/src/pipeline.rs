//! Glue between the experiment config and the individual modules: dataset
//! generation, the training run, and training-record serialization. Shared
//! by the CLI and the integration tests.

use crate::config::ExperimentConfig;
use crate::data::{sample_in_domain, sample_ood, DataError, LabeledDataset};
use crate::network::{train, MlpModel, NetworkError, OptimizerState, TrainRecord};

/// Train split: n_per_class in-domain points per class plus ood_n uniform
/// OOD points, on separate seed streams.
pub fn generate_train(cfg: &ExperimentConfig) -> Result<LabeledDataset, DataError> {
    let in_part = sample_in_domain(
        cfg.data.n_per_class,
        &cfg.data.means,
        cfg.data.sigma_std,
        cfg.data.seed,
    )?;
    let out_part = sample_ood(
        cfg.data.ood_n,
        cfg.data.ood_box,
        cfg.data.exclusion_radius,
        &cfg.data.means,
        cfg.data.seed.wrapping_add(1),
    )?;
    Ok(in_part.concat(out_part))
}

/// Held-out split, drawn with the eval seed so it never overlaps training.
pub fn generate_test(cfg: &ExperimentConfig) -> Result<LabeledDataset, DataError> {
    let in_part = sample_in_domain(
        cfg.eval.in_test_per_class,
        &cfg.data.means,
        cfg.data.sigma_std,
        cfg.eval.seed,
    )?;
    let out_part = sample_ood(
        cfg.eval.ood_test_n,
        cfg.data.ood_box,
        cfg.data.exclusion_radius,
        &cfg.data.means,
        cfg.eval.seed.wrapping_add(1),
    )?;
    Ok(in_part.concat(out_part))
}

/// Full training run from the config on an already-generated dataset.
pub fn train_model(
    cfg: &ExperimentConfig,
    dataset: &LabeledDataset,
) -> Result<(MlpModel, Vec<TrainRecord>), NetworkError> {
    let (in_x, in_y) = dataset.in_domain();
    let out_x = dataset.ood();
    let mut model = MlpModel::init(&cfg.model.layer_dims, cfg.model.seed)?;
    let mut opt = OptimizerState::new(cfg.optimizer.clone(), &model);
    let records = train(
        &mut model,
        &in_x,
        &in_y,
        &out_x,
        &cfg.loss,
        &mut opt,
        cfg.training.epochs,
        cfg.training.batch_size,
        cfg.training.seed,
    )?;
    Ok((model, records))
}

pub fn records_csv(records: &[TrainRecord]) -> String {
    let mut out = String::from("epoch,objective,in_loss,out_loss,train_accuracy\n");
    for r in records {
        out.push_str(&format!(
            "{},{:.16e},{:.16e},{:.16e},{:.16e}\n",
            r.epoch, r.objective, r.in_loss, r.out_loss, r.train_accuracy
        ));
    }
    out
}
