use rand::seq::SliceRandom;

use super::{config_hash, run, time_epochs, Driver, EpochTiming, Evaluation, Method, RunResult, TrainConfig};
use super::metrics::accuracy;
use crate::error::{NgnnError, Result};
use crate::graph::{cluster_partition, neighbor_sample, Block, NodeDataset};
use crate::model::{build_model, Arch, Model, ModelConfig, Propagation};
use crate::rng::{stream, streams, Rng};
use crate::tensor::{Optimizer, OptimizerState, Tape, Tensor};

/// Fills `in_dim`/`out_dim` left at 0 from the dataset and rejects
/// explicit values that disagree with it.
pub(crate) fn resolve_dims(cfg: &ModelConfig, in_dim: usize, out_dim: usize) -> Result<ModelConfig> {
    let mut cfg = cfg.clone();
    for (field, slot, want) in [("in_dim", &mut cfg.in_dim, in_dim), ("out_dim", &mut cfg.out_dim, out_dim)] {
        if *slot == 0 {
            *slot = want;
        } else if *slot != want {
            return Err(NgnnError::Config(format!("model {field} {} but dataset needs {want}", *slot)));
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

struct ClusterPart {
    block: Block,
    features: Tensor<f32>,
    train_local: Vec<usize>,
    labels: Vec<usize>,
}

enum Batching {
    Full,
    Sampled(Vec<usize>),
    Clusters(Vec<ClusterPart>),
}

struct NodeTrainer<'a> {
    d: &'a NodeDataset,
    model: Model<f32>,
    opt: OptimizerState<f32>,
    batch_size: usize,
    full: Block,
    batching: Batching,
    train_labels: Vec<usize>,
    shuffle: Rng,
    sampling: Rng,
    dropout: Rng,
}

/// One optimizer step on the cross-entropy of `rows` of the model output
/// (all output rows when `rows` is `None`).
fn step(
    model: &mut Model<f32>,
    opt: &mut OptimizerState<f32>,
    dropout: &mut Rng,
    prop: Propagation<'_>,
    x: &Tensor<f32>,
    rows: Option<&[usize]>,
    labels: &[usize],
) -> Result<f64> {
    let mut tape = Tape::new();
    let p = model.params.bind(&mut tape, true);
    let xv = tape.constant(x.clone());
    let out = model.forward(&mut tape, &p, prop, xv, Some(dropout))?;
    let out = match rows {
        Some(r) => tape.gather_rows(out, r.to_vec())?,
        None => out,
    };
    let loss = tape.softmax_cross_entropy(out, labels)?;
    tape.backward(loss)?;
    let grads = p.grads(&mut tape);
    opt.step(model.params.tensors_mut(), &grads)?;
    Ok(f64::from(tape.value(loss).get(0, 0)))
}

impl<'a> NodeTrainer<'a> {
    fn new(d: &'a NodeDataset, mcfg: &ModelConfig, tcfg: &TrainConfig) -> Result<Self> {
        d.validate()?;
        let mcfg = resolve_dims(mcfg, d.feature_dim(), d.num_classes)?;
        tcfg.validate(mcfg.num_layers)?;
        if d.split.train.is_empty() {
            return Err(NgnnError::Empty("training split"));
        }
        let graph = if mcfg.arch == Arch::Gcn && !d.graph.is_normalized() {
            d.graph.gcn_normalize()
        } else {
            d.graph.clone()
        };
        let batching = match tcfg.method {
            Method::FullGraph => Batching::Full,
            Method::NeighborSampling => Batching::Sampled(tcfg.fanouts.clone().unwrap_or_default()),
            Method::Cluster => {
                let k = tcfg.num_clusters.unwrap_or(1);
                let parts = cluster_partition(&graph, k, &mut stream(tcfg.seed, streams::PARTITION))?;
                let mut is_train = vec![false; d.num_nodes()];
                for &v in &d.split.train {
                    is_train[v] = true;
                }
                let mut out = Vec::with_capacity(parts.len());
                for nodes in parts {
                    let sub = graph.induced_subgraph(&nodes)?;
                    let train_local: Vec<usize> = (0..nodes.len()).filter(|&i| is_train[nodes[i]]).collect();
                    out.push(ClusterPart {
                        block: Block::from_graph(&sub),
                        features: d.features.select_rows(&nodes),
                        labels: train_local.iter().map(|&i| d.labels[nodes[i]]).collect(),
                        train_local,
                    });
                }
                Batching::Clusters(out)
            }
        };
        Ok(NodeTrainer {
            d,
            model: build_model(&mcfg, &mut stream(tcfg.seed, streams::INIT))?,
            opt: tcfg.optimizer.build()?,
            batch_size: tcfg.batch_size,
            full: Block::from_graph(&graph),
            batching,
            train_labels: d.split.train.iter().map(|&v| d.labels[v]).collect(),
            shuffle: stream(tcfg.seed, streams::SHUFFLE),
            sampling: stream(tcfg.seed, streams::SAMPLING),
            dropout: stream(tcfg.seed, streams::DROPOUT),
        })
    }
}

impl Driver for NodeTrainer<'_> {
    fn model(&self) -> &Model<f32> {
        &self.model
    }

    /// Mean training loss over the epoch's steps, weighted by the number of
    /// labelled nodes per step.
    fn epoch(&mut self) -> Result<f64> {
        let d = self.d;
        match &self.batching {
            Batching::Full => step(
                &mut self.model,
                &mut self.opt,
                &mut self.dropout,
                Propagation::Full(&self.full),
                &d.features,
                Some(&d.split.train),
                &self.train_labels,
            ),
            Batching::Sampled(fanouts) => {
                let mut order = d.split.train.clone();
                order.shuffle(&mut self.shuffle);
                let mut total = 0.0;
                for seeds in order.chunks(self.batch_size) {
                    let s = neighbor_sample(&d.graph, seeds, fanouts, &mut self.sampling)?;
                    let x = d.features.select_rows(s.input_nodes());
                    let labels: Vec<usize> = s.seeds().iter().map(|&v| d.labels[v]).collect();
                    let loss = step(
                        &mut self.model,
                        &mut self.opt,
                        &mut self.dropout,
                        Propagation::Layered(&s.blocks),
                        &x,
                        None,
                        &labels,
                    )?;
                    total += loss * seeds.len() as f64;
                }
                Ok(total / order.len() as f64)
            }
            Batching::Clusters(parts) => {
                let mut order: Vec<usize> = (0..parts.len()).collect();
                order.shuffle(&mut self.shuffle);
                let (mut total, mut count) = (0.0, 0usize);
                for i in order {
                    let part = &parts[i];
                    if part.train_local.is_empty() {
                        continue;
                    }
                    let loss = step(
                        &mut self.model,
                        &mut self.opt,
                        &mut self.dropout,
                        Propagation::Full(&part.block),
                        &part.features,
                        Some(&part.train_local),
                        &part.labels,
                    )?;
                    total += loss * part.train_local.len() as f64;
                    count += part.train_local.len();
                }
                Ok(total / count as f64)
            }
        }
    }

    /// Accuracy of a full-graph, evaluation-mode forward.
    fn evaluate(&self) -> Result<Evaluation> {
        let d = self.d;
        let preds = self
            .model
            .predict(Propagation::Full(&self.full), &d.features)?
            .argmax_rows();
        let acc = |ids: &[usize]| -> Result<f64> {
            let p: Vec<usize> = ids.iter().map(|&v| preds[v]).collect();
            let l: Vec<usize> = ids.iter().map(|&v| d.labels[v]).collect();
            accuracy(&p, &l)
        };
        Ok(Evaluation {
            train: Some(acc(&d.split.train)?),
            valid: acc(&d.split.valid)?,
            test: acc(&d.split.test)?,
        })
    }
}

/// Trains a node classifier and returns the run record together with the
/// model at the selected (best-valid) epoch.
pub fn fit_node_classifier(
    d: &NodeDataset,
    mcfg: &ModelConfig,
    tcfg: &TrainConfig,
) -> Result<(RunResult, Model<f32>)> {
    let mut t = NodeTrainer::new(d, mcfg, tcfg)?;
    let hash = config_hash(&t.model.config, tcfg);
    let (result, params) = run(&mut t, tcfg, "accuracy".into(), hash)?;
    let mut model = t.model;
    model.params = params;
    Ok((result, model))
}

pub fn train_node_classifier(d: &NodeDataset, mcfg: &ModelConfig, tcfg: &TrainConfig) -> Result<RunResult> {
    fit_node_classifier(d, mcfg, tcfg).map(|(r, _)| r)
}

/// Wall-clock seconds of training epochs (evaluation excluded): one
/// warm-up epoch, then `samples >= 5` timed epochs.
pub fn time_node_epochs(
    d: &NodeDataset,
    mcfg: &ModelConfig,
    tcfg: &TrainConfig,
    samples: usize,
) -> Result<EpochTiming> {
    if samples < 5 {
        return Err(NgnnError::Config(format!("epoch timing needs >= 5 samples, got {samples}")));
    }
    time_epochs(&mut NodeTrainer::new(d, mcfg, tcfg)?, samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Graph, Split};
    use crate::model::NgnnPosition;
    use rand::{Rng as _, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Two dense communities whose features carry the label.
    fn two_blocks(n: usize, seed: u64) -> NodeDataset {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let labels: Vec<usize> = (0..n).map(|v| v % 2).collect();
        let mut edges = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                let p = if labels[u] == labels[v] { 0.2 } else { 0.02 };
                if r.random_bool(p) {
                    edges.push((u, v));
                }
            }
        }
        let g = Graph::from_edges(&edges, n, true).unwrap();
        let x = Tensor::from_fn(n, 4, |v, c| {
            let mean = if c == labels[v] { 1.0 } else { 0.0 };
            mean + r.random_range(-0.5..0.5)
        });
        let ids: Vec<usize> = (0..n).collect();
        let split = Split {
            train: ids[..n / 2].to_vec(),
            valid: ids[n / 2..3 * n / 4].to_vec(),
            test: ids[3 * n / 4..].to_vec(),
        };
        NodeDataset::new(g, x, labels, split).unwrap()
    }

    #[test]
    fn gcn_fits_separable_training_set() {
        let d = two_blocks(80, 1);
        let m = ModelConfig::new(Arch::Gcn, 0, 16, 0);
        let r = train_node_classifier(&d, &m, &TrainConfig::full_graph(200).with_lr(0.01)).unwrap();
        assert_eq!(*r.curves.train.last().unwrap(), 1.0);
        assert!(r.test_metric > 0.9, "{}", r.test_metric);
        assert_eq!(r.curves.train_loss.len(), 200);
        assert!(r.curves.train_loss[199] < r.curves.train_loss[0]);
    }

    #[test]
    fn zero_epochs_reports_untrained_model() {
        let d = two_blocks(40, 2);
        let m = ModelConfig::new(Arch::Sage, 0, 8, 0);
        let (r, model) = fit_node_classifier(&d, &m, &TrainConfig::full_graph(0)).unwrap();
        assert_eq!(r.epochs, 0);
        assert!(r.curves.train_loss.is_empty());
        assert_eq!(r.curves.eval_epochs, vec![0]);
        assert_eq!(r.best_epoch, 0);
        let fresh = build_model::<f32, _>(&model.config, &mut stream(0, streams::INIT)).unwrap();
        assert_eq!(model.params, fresh.params);
    }

    #[test]
    fn same_seed_same_curves() {
        let d = two_blocks(60, 3);
        let mut m = ModelConfig::new(Arch::Gat, 0, 8, 0).with_heads(2).with_ngnn(NgnnPosition::Hidden, "2-relu");
        m.dropout = 0.3;
        for t in [
            TrainConfig::full_graph(5),
            TrainConfig::neighbor_sampling(3, 8, vec![3, 3, 3]),
            TrainConfig::cluster(3, 4),
        ] {
            let a = train_node_classifier(&d, &m, &t.clone().with_seed(7)).unwrap();
            let b = train_node_classifier(&d, &m, &t.clone().with_seed(7)).unwrap();
            let c = train_node_classifier(&d, &m, &t.clone().with_seed(8)).unwrap();
            assert_eq!(a.curves, b.curves);
            assert_ne!(a.curves.train_loss, c.curves.train_loss);
        }
    }

    #[test]
    fn selected_model_reproduces_test_metric() {
        let d = two_blocks(60, 4);
        let m = ModelConfig::new(Arch::Sage, 0, 8, 0);
        let (r, model) = fit_node_classifier(&d, &m, &TrainConfig::full_graph(30)).unwrap();
        let preds = model
            .predict(Propagation::Full(&Block::from_graph(&d.graph)), &d.features)
            .unwrap()
            .argmax_rows();
        let p: Vec<usize> = d.split.test.iter().map(|&v| preds[v]).collect();
        let l: Vec<usize> = d.split.test.iter().map(|&v| d.labels[v]).collect();
        assert_eq!(accuracy(&p, &l).unwrap(), r.test_metric);
        let idx = r.curves.eval_epochs.iter().position(|&e| e == r.best_epoch).unwrap();
        assert_eq!(r.curves.valid[idx], r.best_valid);
        assert!(r.curves.valid.iter().all(|&v| v <= r.best_valid));
    }

    #[test]
    fn dims_resolved_from_dataset() {
        let d = two_blocks(20, 5);
        assert!(train_node_classifier(&d, &ModelConfig::new(Arch::Sage, 3, 8, 0), &TrainConfig::full_graph(1)).is_err());
        assert!(time_node_epochs(&d, &ModelConfig::new(Arch::Sage, 0, 8, 0), &TrainConfig::full_graph(1), 4).is_err());
        let t = time_node_epochs(&d, &ModelConfig::new(Arch::Sage, 0, 8, 0), &TrainConfig::full_graph(1), 5).unwrap();
        assert_eq!(t.samples.len(), 5);
    }
}
