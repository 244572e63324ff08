use serde::{Deserialize, Serialize};

use crate::error::{NgnnError, Result};
use crate::tensor::{Adam, AdamConfig, OptimizerState, Scalar, Sgd};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    FullGraph,
    NeighborSampling,
    Cluster,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OptimizerConfig {
    Adam(AdamConfig),
    Sgd { lr: f64 },
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig::Adam(AdamConfig::default())
    }
}

impl OptimizerConfig {
    pub fn build<T: Scalar>(&self) -> Result<OptimizerState<T>> {
        Ok(match *self {
            OptimizerConfig::Adam(c) => OptimizerState::Adam(Adam::new(c)?),
            OptimizerConfig::Sgd { lr } => OptimizerState::Sgd(Sgd::new(lr)?),
        })
    }
}

fn default_epochs() -> usize {
    100
}

fn default_batch_size() -> usize {
    1024
}

fn default_eval_every() -> usize {
    1
}

fn default_hits_k() -> usize {
    50
}

/// Training loop settings.
///
/// `batch_size` counts seed nodes per step for neighbor sampling and
/// positive edges per step for link prediction; the other drivers take one
/// step per graph or cluster. `fanouts` lists per-layer neighbor budgets,
/// input layer first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default)]
    pub method: Method,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fanouts: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_clusters: Option<usize>,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_eval_every")]
    pub eval_every: usize,
    /// K of the hits@K link-prediction metric.
    #[serde(default = "default_hits_k")]
    pub hits_k: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            method: Method::FullGraph,
            epochs: default_epochs(),
            batch_size: default_batch_size(),
            fanouts: None,
            num_clusters: None,
            optimizer: OptimizerConfig::default(),
            seed: 0,
            eval_every: default_eval_every(),
            hits_k: default_hits_k(),
        }
    }
}

impl TrainConfig {
    pub fn full_graph(epochs: usize) -> Self {
        TrainConfig {
            epochs,
            ..TrainConfig::default()
        }
    }

    pub fn neighbor_sampling(epochs: usize, batch_size: usize, fanouts: Vec<usize>) -> Self {
        TrainConfig {
            method: Method::NeighborSampling,
            epochs,
            batch_size,
            fanouts: Some(fanouts),
            ..TrainConfig::default()
        }
    }

    pub fn cluster(epochs: usize, num_clusters: usize) -> Self {
        TrainConfig {
            method: Method::Cluster,
            epochs,
            num_clusters: Some(num_clusters),
            ..TrainConfig::default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_lr(mut self, lr: f64) -> Self {
        match &mut self.optimizer {
            OptimizerConfig::Adam(c) => c.lr = lr,
            OptimizerConfig::Sgd { lr: l } => *l = lr,
        }
        self
    }

    /// Checks the method-specific fields; `num_layers` is the model depth
    /// the fanouts must cover.
    pub fn validate(&self, num_layers: usize) -> Result<()> {
        let bad = |m: String| Err(NgnnError::Config(m));
        if self.eval_every == 0 {
            return bad("eval_every must be >= 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        match (self.method, &self.fanouts) {
            (Method::NeighborSampling, None) => return bad("neighbor_sampling requires fanouts".into()),
            (Method::NeighborSampling, Some(f)) if f.len() != num_layers => {
                return bad(format!("{} fanouts for {num_layers} layers", f.len()))
            }
            (Method::FullGraph | Method::Cluster, Some(_)) => {
                return bad("fanouts are only valid with neighbor_sampling".into())
            }
            _ => {}
        }
        match (self.method, self.num_clusters) {
            (Method::Cluster, None) => return bad("cluster requires num_clusters".into()),
            (Method::Cluster, Some(0)) => return bad("num_clusters must be >= 1".into()),
            (Method::FullGraph | Method::NeighborSampling, Some(_)) => {
                return bad("num_clusters is only valid with cluster".into())
            }
            _ => {}
        }
        self.optimizer.build::<f32>()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_defaults() {
        let c: TrainConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(c, TrainConfig::default());
        assert_eq!(c.optimizer, OptimizerConfig::Adam(AdamConfig { lr: 0.003, ..AdamConfig::default() }));
        let c: TrainConfig = serde_json::from_str(
            r#"{"method":"neighbor_sampling","fanouts":[5,10],"optimizer":{"kind":"sgd","lr":0.1}}"#,
        )
        .unwrap();
        assert_eq!(c.method, Method::NeighborSampling);
        assert_eq!(c.optimizer, OptimizerConfig::Sgd { lr: 0.1 });
        c.validate(2).unwrap();
    }

    #[test]
    fn method_fields_required_iff_method() {
        assert!(TrainConfig::neighbor_sampling(1, 8, vec![2, 2]).validate(3).is_err());
        let mut c = TrainConfig::full_graph(1);
        c.fanouts = Some(vec![1, 1]);
        assert!(c.validate(2).is_err());
        let mut c = TrainConfig::full_graph(1);
        c.num_clusters = Some(2);
        assert!(c.validate(2).is_err());
        assert!(TrainConfig::cluster(1, 0).validate(2).is_err());
        TrainConfig::cluster(1, 4).validate(2).unwrap();
        assert!(TrainConfig::full_graph(1).with_lr(0.0).validate(2).is_err());
    }
}
