use std::collections::HashSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;

use super::io;
use super::{negative_sample_edges, Graph};
use crate::error::{NgnnError, Result};
use crate::tensor::Tensor;

/// Train/valid/test node ids.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
}

/// Node-classification dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeDataset {
    pub graph: Graph,
    pub features: Tensor<f32>,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub split: Split,
}

impl NodeDataset {
    pub fn new(
        graph: Graph,
        features: Tensor<f32>,
        labels: Vec<usize>,
        split: Split,
    ) -> Result<Self> {
        let num_classes = labels.iter().max().map_or(0, |m| m + 1);
        let d = NodeDataset {
            graph,
            features,
            labels,
            num_classes,
            split,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn num_nodes(&self) -> usize {
        self.graph.num_nodes()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.graph.num_nodes();
        if self.features.rows() != n {
            return Err(NgnnError::shape(
                "NodeDataset",
                format!("{} feature rows for {n} nodes", self.features.rows()),
            ));
        }
        if self.labels.len() != n {
            return Err(NgnnError::shape(
                "NodeDataset",
                format!("{} labels for {n} nodes", self.labels.len()),
            ));
        }
        if let Some(&l) = self.labels.iter().find(|&&l| l >= self.num_classes) {
            return Err(NgnnError::LabelOutOfRange {
                label: l,
                classes: self.num_classes,
            });
        }
        let mut seen = HashSet::new();
        for &id in self.split.train.iter().chain(&self.split.valid).chain(&self.split.test) {
            if id >= n {
                return Err(NgnnError::NodeOutOfRange { id, num_nodes: n });
            }
            if !seen.insert(id) {
                return Err(NgnnError::Config(format!("node {id} appears in more than one split")));
            }
        }
        Ok(())
    }

    /// Relabels every node `v` as `perm[v]` across graph, features, labels
    /// and splits.
    pub fn permute_nodes(&self, perm: &[usize]) -> Result<NodeDataset> {
        let n = self.num_nodes();
        check_permutation(perm, n)?;
        let edges: Vec<_> = self.graph.edges().into_iter().map(|(u, v)| (perm[u], perm[v])).collect();
        let mut graph = Graph::from_edges(&edges, n, false)?;
        if self.graph.is_normalized() {
            graph = graph.gcn_normalize();
        }
        let mut inverse = vec![0; n];
        for (old, &new) in perm.iter().enumerate() {
            inverse[new] = old;
        }
        let features = self.features.select_rows(&inverse);
        let labels = inverse.iter().map(|&old| self.labels[old]).collect();
        let map = |ids: &[usize]| ids.iter().map(|&v| perm[v]).collect::<Vec<_>>();
        Ok(NodeDataset {
            graph,
            features,
            labels,
            num_classes: self.num_classes,
            split: Split {
                train: map(&self.split.train),
                valid: map(&self.split.valid),
                test: map(&self.split.test),
            },
        })
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| NgnnError::io(dir, e))?;
        io::write_edge_list(&dir.join(io::EDGES_FILE), &self.graph.undirected_edges())?;
        io::write_features(&dir.join(io::FEATURES_FILE), &self.features)?;
        io::write_ids(&dir.join(io::LABELS_FILE), &self.labels)?;
        io::write_ids(&dir.join(io::TRAIN_FILE), &self.split.train)?;
        io::write_ids(&dir.join(io::VALID_FILE), &self.split.valid)?;
        io::write_ids(&dir.join(io::TEST_FILE), &self.split.test)?;
        Ok(())
    }

    /// Loads a dataset directory written by [`NodeDataset::save`]. The node
    /// count comes from the feature file; edges are symmetrized.
    pub fn load(dir: &Path) -> Result<Self> {
        let features = io::read_features(&dir.join(io::FEATURES_FILE))?;
        let n = features.rows();
        let edges = io::read_edge_list(&dir.join(io::EDGES_FILE))?;
        let graph = Graph::from_edges(&edges, n, true)?;
        let labels = io::read_ids(&dir.join(io::LABELS_FILE))?;
        let split = Split {
            train: io::read_ids(&dir.join(io::TRAIN_FILE))?,
            valid: io::read_ids(&dir.join(io::VALID_FILE))?,
            test: io::read_ids(&dir.join(io::TEST_FILE))?,
        };
        NodeDataset::new(graph, features, labels, split)
    }
}

pub(crate) fn check_permutation(perm: &[usize], n: usize) -> Result<()> {
    if perm.len() != n {
        return Err(NgnnError::Config(format!("permutation of length {} for {n} nodes", perm.len())));
    }
    let mut seen = vec![false; n];
    for &p in perm {
        if p >= n || std::mem::replace(&mut seen[p], true) {
            return Err(NgnnError::Config("permutation is not a bijection".into()));
        }
    }
    Ok(())
}

/// Link-prediction dataset: a training graph plus held-out positive edges and
/// fixed negative sets for ranking evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct LinkDataset {
    /// Graph over training edges only.
    pub graph: Graph,
    pub features: Tensor<f32>,
    pub valid_pos: Vec<(usize, usize)>,
    pub valid_neg: Vec<(usize, usize)>,
    pub test_pos: Vec<(usize, usize)>,
    pub test_neg: Vec<(usize, usize)>,
}

impl LinkDataset {
    /// Holds out `valid_frac` and `test_frac` of the undirected edges of
    /// `full` and samples `num_neg` negatives per split from the non-edges of
    /// `full`, so no negative is a positive of any split.
    pub fn split_edges<R: Rng + ?Sized>(
        full: &Graph,
        features: Tensor<f32>,
        valid_frac: f64,
        test_frac: f64,
        num_neg: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if !(valid_frac >= 0.0 && test_frac >= 0.0 && valid_frac + test_frac < 1.0) {
            return Err(NgnnError::Config(format!(
                "edge split fractions {valid_frac}/{test_frac} must be >= 0 and sum below 1"
            )));
        }
        let mut edges = full.undirected_edges();
        edges.shuffle(rng);
        let n_valid = (valid_frac * edges.len() as f64).round() as usize;
        let n_test = (test_frac * edges.len() as f64).round() as usize;
        let valid_pos = edges[..n_valid].to_vec();
        let test_pos = edges[n_valid..n_valid + n_test].to_vec();
        let train = &edges[n_valid + n_test..];
        let negatives = negative_sample_edges(full, 2 * num_neg, rng)?;
        let d = LinkDataset {
            graph: Graph::from_edges(train, full.num_nodes(), true)?,
            features,
            valid_pos,
            valid_neg: negatives[..num_neg].to_vec(),
            test_pos,
            test_neg: negatives[num_neg..].to_vec(),
        };
        d.validate()?;
        Ok(d)
    }

    pub fn num_nodes(&self) -> usize {
        self.graph.num_nodes()
    }

    pub fn train_edges(&self) -> Vec<(usize, usize)> {
        self.graph.undirected_edges()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.graph.num_nodes();
        if self.features.rows() != n {
            return Err(NgnnError::shape(
                "LinkDataset",
                format!("{} feature rows for {n} nodes", self.features.rows()),
            ));
        }
        let all = [&self.valid_pos, &self.valid_neg, &self.test_pos, &self.test_neg];
        for &(u, v) in all.iter().flat_map(|s| s.iter()) {
            for id in [u, v] {
                if id >= n {
                    return Err(NgnnError::NodeOutOfRange { id, num_nodes: n });
                }
            }
        }
        for &(u, v) in self.valid_pos.iter().chain(&self.test_pos) {
            if self.graph.has_edge(u, v) {
                return Err(NgnnError::Config(format!(
                    "held-out positive ({u}, {v}) is present in the training graph"
                )));
            }
        }
        let norm = |&(u, v): &(usize, usize)| (u.min(v), u.max(v));
        for (pos, neg, name) in [
            (&self.valid_pos, &self.valid_neg, "valid"),
            (&self.test_pos, &self.test_neg, "test"),
        ] {
            let positives: HashSet<_> = pos.iter().map(norm).collect();
            if let Some(e) = neg.iter().map(norm).find(|e| positives.contains(e)) {
                return Err(NgnnError::Config(format!("{name} negative {e:?} is a positive")));
            }
        }
        Ok(())
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| NgnnError::io(dir, e))?;
        io::write_edge_list(&dir.join(io::EDGES_FILE), &self.graph.undirected_edges())?;
        io::write_features(&dir.join(io::FEATURES_FILE), &self.features)?;
        io::write_edge_list(&dir.join(io::VALID_POS_FILE), &self.valid_pos)?;
        io::write_edge_list(&dir.join(io::VALID_NEG_FILE), &self.valid_neg)?;
        io::write_edge_list(&dir.join(io::TEST_POS_FILE), &self.test_pos)?;
        io::write_edge_list(&dir.join(io::TEST_NEG_FILE), &self.test_neg)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let features = io::read_features(&dir.join(io::FEATURES_FILE))?;
        let n = features.rows();
        let graph = Graph::from_edges(&io::read_edge_list(&dir.join(io::EDGES_FILE))?, n, true)?;
        let d = LinkDataset {
            graph,
            features,
            valid_pos: io::read_edge_list(&dir.join(io::VALID_POS_FILE))?,
            valid_neg: io::read_edge_list(&dir.join(io::VALID_NEG_FILE))?,
            test_pos: io::read_edge_list(&dir.join(io::TEST_POS_FILE))?,
            test_neg: io::read_edge_list(&dir.join(io::TEST_NEG_FILE))?,
        };
        d.validate()?;
        Ok(d)
    }
}
