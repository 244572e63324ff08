use rand::seq::SliceRandom;

use super::node::resolve_dims;
use super::{config_hash, run, Driver, Evaluation, Method, RunResult, TrainConfig};
use super::metrics::hits_at_k;
use crate::error::{NgnnError, Result};
use crate::graph::{negative_sample_edges, Block, LinkDataset};
use crate::model::{build_model, Arch, Model, ModelConfig, Propagation};
use crate::rng::{stream, streams, Rng};
use crate::tensor::{Optimizer, OptimizerState, Tape, Tensor};

struct LinkTrainer<'a> {
    d: &'a LinkDataset,
    model: Model<f32>,
    opt: OptimizerState<f32>,
    block: Block,
    positives: Vec<(usize, usize)>,
    batch_size: usize,
    hits_k: usize,
    shuffle: Rng,
    negatives: Rng,
    dropout: Rng,
}

/// Dot-product score of each pair of embedding rows.
fn pair_scores(emb: &Tensor<f32>, edges: &[(usize, usize)]) -> Vec<f64> {
    edges
        .iter()
        .map(|&(u, v)| {
            emb.row(u)
                .iter()
                .zip(emb.row(v))
                .map(|(a, b)| f64::from(*a) * f64::from(*b))
                .sum()
        })
        .collect()
}

impl<'a> LinkTrainer<'a> {
    fn new(d: &'a LinkDataset, mcfg: &ModelConfig, tcfg: &TrainConfig) -> Result<Self> {
        d.validate()?;
        if tcfg.method != Method::FullGraph {
            return Err(NgnnError::Config("link prediction supports the full_graph method only".into()));
        }
        let out = if mcfg.out_dim == 0 { mcfg.hidden_dim } else { mcfg.out_dim };
        let mcfg = resolve_dims(mcfg, d.features.cols(), out)?;
        tcfg.validate(mcfg.num_layers)?;
        let positives = d.graph.undirected_edges();
        if positives.is_empty() {
            return Err(NgnnError::Empty("training edges"));
        }
        let graph = if mcfg.arch == Arch::Gcn && !d.graph.is_normalized() {
            d.graph.gcn_normalize()
        } else {
            d.graph.clone()
        };
        Ok(LinkTrainer {
            d,
            model: build_model(&mcfg, &mut stream(tcfg.seed, streams::INIT))?,
            opt: tcfg.optimizer.build()?,
            block: Block::from_graph(&graph),
            positives,
            batch_size: tcfg.batch_size,
            hits_k: tcfg.hits_k,
            shuffle: stream(tcfg.seed, streams::SHUFFLE),
            negatives: stream(tcfg.seed, streams::NEGATIVES),
            dropout: stream(tcfg.seed, streams::DROPOUT),
        })
    }
}

impl Driver for LinkTrainer<'_> {
    fn model(&self) -> &Model<f32> {
        &self.model
    }

    /// Binary cross-entropy of positive training edges against an equal
    /// number of freshly drawn non-edges, per batch.
    fn epoch(&mut self) -> Result<f64> {
        self.positives.shuffle(&mut self.shuffle);
        let mut total = 0.0;
        for batch in self.positives.chunks(self.batch_size) {
            let neg = negative_sample_edges(&self.d.graph, batch.len(), &mut self.negatives)?;
            let (src, dst): (Vec<usize>, Vec<usize>) = batch.iter().chain(&neg).copied().unzip();
            let mut targets = vec![1.0f32; batch.len()];
            targets.resize(batch.len() + neg.len(), 0.0);

            let mut tape = Tape::new();
            let p = self.model.params.bind(&mut tape, true);
            let x = tape.constant(self.d.features.clone());
            let emb = self.model.forward(&mut tape, &p, Propagation::Full(&self.block), x, Some(&mut self.dropout))?;
            let hu = tape.gather_rows(emb, src)?;
            let hv = tape.gather_rows(emb, dst)?;
            let prod = tape.mul(hu, hv)?;
            let scores = tape.row_sum(prod);
            let loss = tape.bce_with_logits(scores, &targets)?;
            tape.backward(loss)?;
            let grads = p.grads(&mut tape);
            self.opt.step(self.model.params.tensors_mut(), &grads)?;
            total += f64::from(tape.value(loss).get(0, 0)) * batch.len() as f64;
        }
        Ok(total / self.positives.len() as f64)
    }

    /// hits@K of the held-out positives against the fixed negatives.
    fn evaluate(&self) -> Result<Evaluation> {
        let emb = self.model.predict(Propagation::Full(&self.block), &self.d.features)?;
        let hits = |pos: &[(usize, usize)], neg: &[(usize, usize)]| {
            hits_at_k(&pair_scores(&emb, pos), &pair_scores(&emb, neg), self.hits_k)
        };
        Ok(Evaluation {
            train: None,
            valid: hits(&self.d.valid_pos, &self.d.valid_neg)?,
            test: hits(&self.d.test_pos, &self.d.test_neg)?,
        })
    }
}

/// Trains a dot-product link predictor over GNN embeddings; returns the run
/// record and the best-valid model.
pub fn fit_link_predictor(
    d: &LinkDataset,
    mcfg: &ModelConfig,
    tcfg: &TrainConfig,
) -> Result<(RunResult, Model<f32>)> {
    let mut t = LinkTrainer::new(d, mcfg, tcfg)?;
    let hash = config_hash(&t.model.config, tcfg);
    let metric = format!("hits@{}", tcfg.hits_k);
    let (result, params) = run(&mut t, tcfg, metric, hash)?;
    let mut model = t.model;
    model.params = params;
    Ok((result, model))
}

pub fn train_link_predictor(d: &LinkDataset, mcfg: &ModelConfig, tcfg: &TrainConfig) -> Result<RunResult> {
    fit_link_predictor(d, mcfg, tcfg).map(|(r, _)| r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;
    use crate::train::mean_std;
    use rand::{Rng as _, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn two_cliques(size: usize) -> Graph {
        let mut edges = Vec::new();
        for base in [0, size] {
            for u in 0..size {
                for v in u + 1..size {
                    edges.push((base + u, base + v));
                }
            }
        }
        Graph::from_edges(&edges, 2 * size, true).unwrap()
    }

    fn cross_negatives(size: usize, count: usize, r: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
        let mut all: Vec<(usize, usize)> = (0..size).flat_map(|u| (size..2 * size).map(move |v| (u, v))).collect();
        all.shuffle(r);
        all.truncate(count);
        all
    }

    /// Two cliques, held-out positives inside them, negatives across them.
    fn clique_dataset(seed: u64) -> LinkDataset {
        let size = 12;
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let mut edges = two_cliques(size).undirected_edges();
        edges.shuffle(&mut r);
        let (valid_pos, rest) = edges.split_at(10);
        let (test_pos, train) = rest.split_at(10);
        let negs = cross_negatives(size, 60, &mut r);
        let features = Tensor::from_fn(2 * size, 4, |_, _| r.random_range(-1.0..1.0));
        LinkDataset {
            graph: Graph::from_edges(train, 2 * size, true).unwrap(),
            features,
            valid_pos: valid_pos.to_vec(),
            valid_neg: negs[..30].to_vec(),
            test_pos: test_pos.to_vec(),
            test_neg: negs[30..].to_vec(),
        }
    }

    #[test]
    fn clustered_structure_is_learned() {
        let d = clique_dataset(1);
        let m = ModelConfig::new(Arch::Gcn, 0, 16, 0);
        let mut t = TrainConfig::full_graph(100).with_lr(0.01);
        t.hits_k = 5;
        let r = train_link_predictor(&d, &m, &t).unwrap();
        assert_eq!(r.metric, "hits@5");
        assert_eq!(r.test_metric, 1.0, "{:?}", r.curves.test);
    }

    #[test]
    fn untrained_hits_near_chance() {
        let n = 200;
        let mut r = ChaCha8Rng::seed_from_u64(3);
        let mut edges = Vec::new();
        for _ in 0..600 {
            edges.push((r.random_range(0..n), r.random_range(0..n)));
        }
        let full = Graph::from_edges(&edges, n, true).unwrap();
        let x = Tensor::from_fn(n, 8, |_, _| r.random_range(-1.0..1.0));
        let (m_neg, k) = (100, 50);
        let mut hits = Vec::new();
        for seed in 0..20 {
            let d = LinkDataset::split_edges(&full, x.clone(), 0.2, 0.2, m_neg, &mut stream(seed, streams::SYNTH))
                .unwrap();
            let mut t = TrainConfig::full_graph(0).with_seed(seed);
            t.hits_k = k;
            let m = ModelConfig::new(Arch::Sage, 0, 8, 0);
            hits.push(train_link_predictor(&d, &m, &t).unwrap().test_metric);
        }
        // A positive whose score is exchangeable with M negatives beats the
        // K-th largest with probability (M - K + 1) / (M + 1).
        let expected = (m_neg - k + 1) as f64 / (m_neg + 1) as f64;
        let (mean, _) = mean_std(&hits);
        assert!((mean - expected).abs() < 0.15, "{mean} vs {expected}");
    }

    #[test]
    fn deterministic_and_method_checked() {
        let d = clique_dataset(2);
        let m = ModelConfig::new(Arch::Sage, 0, 8, 0);
        let mut t = TrainConfig::full_graph(5).with_seed(4);
        t.hits_k = 5;
        let a = train_link_predictor(&d, &m, &t).unwrap();
        let b = train_link_predictor(&d, &m, &t).unwrap();
        assert_eq!(a.curves, b.curves);
        let mut t = TrainConfig::cluster(1, 2);
        t.hits_k = 5;
        assert!(train_link_predictor(&d, &m, &t).is_err());
    }
}
