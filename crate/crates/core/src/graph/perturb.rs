//! Feature and structure perturbations used by the robustness sweeps.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{negative_sample_edges, Graph, NodeDataset};
use crate::error::{NgnnError, Result};
use crate::rng::{stream, streams};
use crate::tensor::{Scalar, Tensor};

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(NgnnError::Config(format!("noise std {sigma} must be finite and >= 0")));
    }
    Ok(())
}

/// Appends an `N x D` block of i.i.d. `N(0, sigma)` noise to the right of
/// `x`, doubling the feature width. Original columns are copied unchanged.
pub fn perturb_features_concat<T: Scalar, R: Rng + ?Sized>(
    x: &Tensor<T>,
    sigma: f64,
    rng: &mut R,
) -> Result<Tensor<T>> {
    check_sigma(sigma)?;
    let noise = Tensor::from_fn(x.rows(), x.cols(), |_, _| {
        let z: f64 = rng.sample(StandardNormal);
        T::of(sigma * z)
    });
    x.hconcat(&noise)
}

/// Adds i.i.d. `N(0, sigma)` noise to every entry of `x`.
pub fn perturb_features_add<T: Scalar, R: Rng + ?Sized>(
    x: &Tensor<T>,
    sigma: f64,
    rng: &mut R,
) -> Result<Tensor<T>> {
    check_sigma(sigma)?;
    let mut out = x.clone();
    for v in out.data_mut() {
        let z: f64 = rng.sample(StandardNormal);
        *v += T::of(sigma * z);
    }
    Ok(out)
}

/// Adds `round(ratio * |E|)` uniformly random new undirected edges, where
/// `|E|` counts undirected edges. Since stored edges are symmetric this
/// equals `round(ratio * directed) / 2` new undirected pairs, i.e. the same
/// ratio against directed counts. Existing edges are kept.
///
/// GCN coefficients are recomputed when `g` carries them.
pub fn perturb_edges<R: Rng + ?Sized>(g: &Graph, ratio: f64, rng: &mut R) -> Result<Graph> {
    if !(ratio >= 0.0) || !ratio.is_finite() {
        return Err(NgnnError::Config(format!("edge noise ratio {ratio} must be >= 0")));
    }
    let count = (ratio * g.num_undirected_edges() as f64).round() as usize;
    let mut edges = g.undirected_edges();
    edges.extend(negative_sample_edges(g, count, rng)?);
    let out = Graph::from_edges(&edges, g.num_nodes(), true)?;
    Ok(if g.is_normalized() { out.gcn_normalize() } else { out })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum PerturbMode {
    FeatureConcat { sigma: f64 },
    FeatureAdd { sigma: f64 },
    EdgeAdd { ratio: f64 },
}

/// A single perturbation with its own random seed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbSpec {
    #[serde(flatten)]
    pub mode: PerturbMode,
    pub seed: u64,
}

impl PerturbSpec {
    /// Applies the perturbation. Feature modes leave the graph untouched and
    /// the edge mode leaves features untouched.
    pub fn apply(&self, d: &NodeDataset) -> Result<NodeDataset> {
        let mut out = d.clone();
        match self.mode {
            PerturbMode::FeatureConcat { sigma } => {
                let mut rng = stream(self.seed, streams::FEATURE_NOISE);
                out.features = perturb_features_concat(&d.features, sigma, &mut rng)?;
            }
            PerturbMode::FeatureAdd { sigma } => {
                let mut rng = stream(self.seed, streams::FEATURE_NOISE);
                out.features = perturb_features_add(&d.features, sigma, &mut rng)?;
            }
            PerturbMode::EdgeAdd { ratio } => {
                let mut rng = stream(self.seed, streams::EDGE_NOISE);
                out.graph = perturb_edges(&d.graph, ratio, &mut rng)?;
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashSet;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn mean_std(v: &[f64]) -> (f64, f64) {
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, var.sqrt())
    }

    #[test]
    fn concat_zero_sigma_appends_zeros() {
        let x = Tensor::<f32>::uniform(5, 3, 1.0, &mut rng(1));
        let y = perturb_features_concat(&x, 0.0, &mut rng(2)).unwrap();
        assert_eq!(y.shape(), (5, 6));
        for r in 0..5 {
            assert_eq!(&y.row(r)[..3], x.row(r));
            assert!(y.row(r)[3..].iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn concat_noise_statistics() {
        let (n, d, sigma) = (500, 200, 1.5);
        let x = Tensor::<f64>::zeros(n, d);
        let y = perturb_features_concat(&x, sigma, &mut rng(3)).unwrap();
        let noise: Vec<f64> = (0..n).flat_map(|r| y.row(r)[d..].to_vec()).collect();
        let (mean, std) = mean_std(&noise);
        assert!(mean.abs() < 3.0 * sigma / ((n * d) as f64).sqrt());
        assert!((std / sigma - 1.0).abs() < 0.02);
    }

    #[test]
    fn add_noise_statistics() {
        let x = Tensor::<f64>::uniform(400, 250, 2.0, &mut rng(4));
        assert_eq!(perturb_features_add(&x, 0.0, &mut rng(5)).unwrap(), x);
        let sigma = 3.0;
        let y = perturb_features_add(&x, sigma, &mut rng(5)).unwrap();
        let diff: Vec<f64> = y.data().iter().zip(x.data()).map(|(a, b)| a - b).collect();
        let (_, std) = mean_std(&diff);
        assert!((std / sigma - 1.0).abs() < 0.02);
        assert!(perturb_features_add(&x, -1.0, &mut rng(5)).is_err());
    }

    #[test]
    fn edge_noise_adds_new_edges_only() {
        let mut r = rng(6);
        let edges: Vec<_> = (0..300).map(|_| (r.random_range(0..100), r.random_range(0..100))).collect();
        let g = Graph::from_edges(&edges, 100, true).unwrap();
        assert_eq!(perturb_edges(&g, 0.0, &mut r).unwrap(), g);

        let before: HashSet<_> = g.undirected_edges().into_iter().collect();
        let out = perturb_edges(&g, 0.3, &mut r).unwrap();
        out.validate().unwrap();
        assert!(out.is_symmetric());
        let after: HashSet<_> = out.undirected_edges().into_iter().collect();
        assert!(before.is_subset(&after));
        let expected = (0.3 * before.len() as f64).round() as usize;
        assert_eq!(after.len() - before.len(), expected);
    }

    #[test]
    fn footnote_scale_edge_count() {
        // 61,859,140 directed edges at K = 0.01.
        let directed = 61_859_140.0f64;
        let undirected_added = (0.01 * directed / 2.0).round();
        assert_eq!(undirected_added, 309_296.0);
        // Reported as directed entries: ~618.6K.
        assert_eq!((2.0 * undirected_added / 100.0).round() / 10.0, 618.6);
    }
}
