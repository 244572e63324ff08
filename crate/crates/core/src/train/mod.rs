//! Training drivers, evaluation metrics and epoch timing.

mod config;
mod link;
mod metrics;
mod node;

use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::layers::ParamStore;
use crate::model::{Model, ModelConfig};

pub use config::{Method, OptimizerConfig, TrainConfig};
pub use link::{fit_link_predictor, train_link_predictor};
pub use metrics::{accuracy, hits_at_k, mean_std, roc_auc};
pub use node::{fit_node_classifier, time_node_epochs, train_node_classifier};

/// Metric trajectories. `train_loss[e]` is the mean loss of epoch `e + 1`;
/// the evaluation vectors are aligned with `eval_epochs`, where epoch 0 is
/// the untrained model. `train` is empty for link prediction.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Curves {
    pub train_loss: Vec<f64>,
    pub eval_epochs: Vec<usize>,
    pub train: Vec<f64>,
    pub valid: Vec<f64>,
    pub test: Vec<f64>,
}

/// Outcome of one seeded training run. `test_metric` is taken at
/// `best_epoch`, the first evaluation with the highest validation metric.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub config_hash: String,
    pub seed: u64,
    pub epochs: usize,
    pub metric: String,
    pub curves: Curves,
    pub best_epoch: usize,
    pub best_valid: f64,
    pub test_metric: f64,
    /// Wall-clock training time of each epoch, evaluation excluded.
    pub epoch_seconds: Vec<f64>,
    pub param_count: usize,
}

impl RunResult {
    pub fn mean_epoch_seconds(&self) -> f64 {
        if self.epoch_seconds.is_empty() {
            return 0.0;
        }
        self.epoch_seconds.iter().sum::<f64>() / self.epoch_seconds.len() as f64
    }

    pub fn final_train_loss(&self) -> Option<f64> {
        self.curves.train_loss.last().copied()
    }
}

/// Hex SHA-256 of the canonical JSON of both configs.
pub fn config_hash(model: &ModelConfig, train: &TrainConfig) -> String {
    let json = serde_json::json!({ "model": model, "train": train });
    hex::encode(Sha256::digest(json.to_string().as_bytes()))
}

/// Mean and standard deviation of per-epoch wall-clock seconds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochTiming {
    pub mean: f64,
    pub std: f64,
    pub samples: Vec<f64>,
}

impl EpochTiming {
    pub fn from_samples(samples: Vec<f64>) -> Self {
        let (mean, std) = mean_std(&samples);
        EpochTiming { mean, std, samples }
    }
}

struct Evaluation {
    train: Option<f64>,
    valid: f64,
    test: f64,
}

trait Driver {
    fn model(&self) -> &Model<f32>;
    fn epoch(&mut self) -> Result<f64>;
    fn evaluate(&self) -> Result<Evaluation>;
}

/// Shared epoch loop with best-valid model selection. Returns the result
/// and the parameters of the selected epoch.
fn run<D: Driver>(
    driver: &mut D,
    cfg: &TrainConfig,
    metric: String,
    config_hash: String,
) -> Result<(RunResult, ParamStore<f32>)> {
    let mut curves = Curves::default();
    let mut epoch_seconds = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(usize, f64, f64)> = None;
    let mut best_params = driver.model().params.clone();

    let mut record = |driver: &D, epoch: usize, curves: &mut Curves| -> Result<()> {
        let e = driver.evaluate()?;
        curves.eval_epochs.push(epoch);
        curves.train.extend(e.train);
        curves.valid.push(e.valid);
        curves.test.push(e.test);
        if best.is_none_or(|(_, v, _)| e.valid > v) {
            best = Some((epoch, e.valid, e.test));
            best_params = driver.model().params.clone();
        }
        Ok(())
    };

    record(driver, 0, &mut curves)?;
    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        let loss = driver.epoch()?;
        epoch_seconds.push(start.elapsed().as_secs_f64());
        curves.train_loss.push(loss);
        if epoch % cfg.eval_every == 0 || epoch == cfg.epochs {
            record(driver, epoch, &mut curves)?;
        }
    }
    let (best_epoch, best_valid, test_metric) = best.expect("epoch 0 is always evaluated");
    let result = RunResult {
        config_hash,
        seed: cfg.seed,
        epochs: cfg.epochs,
        metric,
        curves,
        best_epoch,
        best_valid,
        test_metric,
        epoch_seconds,
        param_count: driver.model().param_count(),
    };
    Ok((result, best_params))
}

/// One warm-up epoch, then `samples` timed epochs.
fn time_epochs<D: Driver>(driver: &mut D, samples: usize) -> Result<EpochTiming> {
    driver.epoch()?;
    let mut out = Vec::with_capacity(samples);
    for _ in 0..samples {
        let start = Instant::now();
        driver.epoch()?;
        out.push(start.elapsed().as_secs_f64());
    }
    Ok(EpochTiming::from_samples(out))
}
