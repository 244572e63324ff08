//! Stochastic block model datasets.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Geometric, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{NgnnError, Result};
use crate::graph::{Graph, LinkDataset, NodeDataset, Split};
use crate::rng::{stream, streams};
use crate::tensor::Tensor;

/// Held-out edge fractions and negatives per split for a link dataset.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkSplitSpec {
    pub valid_frac: f64,
    pub test_frac: f64,
    pub num_neg: usize,
}

/// `classes` equal contiguous blocks of nodes. Node pairs connect with
/// probability `p_in` inside a block and `p_out` across blocks. Class `c`
/// has feature mean `separation * e_c` and every feature gets unit Gaussian
/// noise, so `separation` is the distance from each mean to the origin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SbmSpec {
    pub nodes: usize,
    pub classes: usize,
    pub dim: usize,
    pub p_in: f64,
    pub p_out: f64,
    #[serde(default = "one")]
    pub separation: f64,
    #[serde(default)]
    pub seed: u64,
}

fn one() -> f64 {
    1.0
}

impl SbmSpec {
    pub fn new(nodes: usize, classes: usize, dim: usize, p_in: f64, p_out: f64) -> Self {
        SbmSpec {
            nodes,
            classes,
            dim,
            p_in,
            p_out,
            separation: 1.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(NgnnError::Config(m));
        if self.classes == 0 || self.nodes < self.classes {
            return bad(format!("{} nodes cannot hold {} classes", self.nodes, self.classes));
        }
        if self.classes > self.dim {
            return bad(format!("{} classes need feature dim >= classes, got {}", self.classes, self.dim));
        }
        for (name, p) in [("p_in", self.p_in), ("p_out", self.p_out)] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} = {p} outside [0, 1]"));
            }
        }
        if !(self.separation >= 0.0 && self.separation.is_finite()) {
            return bad(format!("separation {} must be finite and >= 0", self.separation));
        }
        Ok(())
    }

    /// Non-fatal issues with the spec.
    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if self.p_out >= self.p_in {
            w.push(format!(
                "p_out ({}) >= p_in ({}): classes are not recoverable from structure",
                self.p_out, self.p_in
            ));
        }
        w
    }

    pub fn class_of(&self, v: usize) -> usize {
        v * self.classes / self.nodes
    }
}

/// Appends every pair `(u, v)`, `v` in `range`, that succeeds a Bernoulli
/// trial with probability `p`, skipping geometrically between successes.
fn bernoulli_row<R: Rng + ?Sized>(
    u: usize,
    range: std::ops::Range<usize>,
    p: f64,
    rng: &mut R,
    out: &mut Vec<(usize, usize)>,
) {
    if p <= 0.0 || range.is_empty() {
        return;
    }
    if p >= 1.0 {
        out.extend(range.map(|v| (u, v)));
        return;
    }
    let geo = Geometric::new(p).expect("p in (0, 1)");
    let mut v = range.start;
    loop {
        let skip = geo.sample(rng);
        v = match usize::try_from(skip).ok().and_then(|s| v.checked_add(s)) {
            Some(v) if v < range.end => v,
            _ => return,
        };
        out.push((u, v));
        v += 1;
    }
}

fn sbm_graph(spec: &SbmSpec, rng: &mut impl Rng) -> Result<Graph> {
    let n = spec.nodes;
    let start = |c: usize| (c * n).div_ceil(spec.classes);
    let mut edges = Vec::new();
    for u in 0..n {
        let cu = spec.class_of(u);
        for c in cu..spec.classes {
            let lo = start(c).max(u + 1);
            let hi = start(c + 1);
            let p = if c == cu { spec.p_in } else { spec.p_out };
            bernoulli_row(u, lo..hi, p, rng, &mut edges);
        }
    }
    Graph::from_edges(&edges, n, true)
}

/// Node-classification SBM with a random 60/20/20 split.
pub fn generate_sbm(spec: &SbmSpec) -> Result<NodeDataset> {
    spec.validate()?;
    let mut rng = stream(spec.seed, streams::SYNTH);
    let graph = sbm_graph(spec, &mut rng)?;
    let labels: Vec<usize> = (0..spec.nodes).map(|v| spec.class_of(v)).collect();
    let features = Tensor::from_fn(spec.nodes, spec.dim, |v, c| {
        let z: f64 = rng.sample(StandardNormal);
        let mean = if c == labels[v] { spec.separation } else { 0.0 };
        (mean + z) as f32
    });
    let mut ids: Vec<usize> = (0..spec.nodes).collect();
    ids.shuffle(&mut rng);
    let n_train = spec.nodes * 6 / 10;
    let n_valid = spec.nodes * 2 / 10;
    let mut split = Split {
        train: ids[..n_train].to_vec(),
        valid: ids[n_train..n_train + n_valid].to_vec(),
        test: ids[n_train + n_valid..].to_vec(),
    };
    split.train.sort_unstable();
    split.valid.sort_unstable();
    split.test.sort_unstable();
    NodeDataset::new(graph, features, labels, split)
}

/// Link-prediction dataset over the same SBM graph and features.
pub fn generate_sbm_links(spec: &SbmSpec, link: &LinkSplitSpec) -> Result<LinkDataset> {
    let d = generate_sbm(spec)?;
    let mut rng = stream(spec.seed, streams::NEGATIVES);
    LinkDataset::split_edges(&d.graph, d.features, link.valid_frac, link.test_frac, link.num_neg, &mut rng)
}
