//! Graph storage, datasets, sampling and perturbation.

mod block;
mod dataset;
pub mod io;
mod partition;
mod perturb;
mod sampling;

use crate::error::{NgnnError, Result};

pub use block::{Block, SampledBlocks};
pub use dataset::{LinkDataset, NodeDataset, Split};
pub use partition::cluster_partition;
pub use perturb::{
    perturb_edges, perturb_features_add, perturb_features_concat, PerturbMode, PerturbSpec,
};
pub use sampling::{negative_sample_edges, neighbor_sample};

/// Immutable CSR adjacency.
///
/// Graphs built with `symmetrize = true` store every undirected edge in both
/// directions. Neighbor lists are sorted and contain no self-loops or
/// duplicates.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    num_nodes: usize,
    offsets: Vec<usize>,
    indices: Vec<usize>,
    gcn_coeff: Option<Vec<f64>>,
}

impl Graph {
    /// Builds a CSR graph from an edge list. Self-loops and duplicate pairs
    /// are dropped before symmetrization.
    pub fn from_edges(edges: &[(usize, usize)], num_nodes: usize, symmetrize: bool) -> Result<Self> {
        let mut pairs = Vec::with_capacity(if symmetrize { 2 * edges.len() } else { edges.len() });
        for &(u, v) in edges {
            for id in [u, v] {
                if id >= num_nodes {
                    return Err(NgnnError::NodeOutOfRange { id, num_nodes });
                }
            }
            if u == v {
                continue;
            }
            pairs.push((u, v));
            if symmetrize {
                pairs.push((v, u));
            }
        }
        pairs.sort_unstable();
        pairs.dedup();

        let mut offsets = vec![0usize; num_nodes + 1];
        for &(u, _) in &pairs {
            offsets[u + 1] += 1;
        }
        for i in 0..num_nodes {
            offsets[i + 1] += offsets[i];
        }
        let indices = pairs.into_iter().map(|(_, v)| v).collect();
        Ok(Graph {
            num_nodes,
            offsets,
            indices,
            gcn_coeff: None,
        })
    }

    /// Wraps raw CSR arrays after checking the structural invariants.
    pub fn from_csr(num_nodes: usize, offsets: Vec<usize>, indices: Vec<usize>) -> Result<Self> {
        let g = Graph {
            num_nodes,
            offsets,
            indices,
            gcn_coeff: None,
        };
        g.validate()?;
        Ok(g)
    }

    /// Checks CSR well-formedness: offsets shape and monotonicity, id range
    /// and sorted, duplicate-free neighbor lists.
    pub fn validate(&self) -> Result<()> {
        let fail = |d: String| Err(NgnnError::shape("Graph", d));
        if self.offsets.len() != self.num_nodes + 1 || self.offsets[0] != 0 {
            return fail(format!("{} offsets for {} nodes", self.offsets.len(), self.num_nodes));
        }
        if self.offsets.windows(2).any(|w| w[0] > w[1]) {
            return fail("offsets decrease".into());
        }
        if self.offsets[self.num_nodes] != self.indices.len() {
            return fail("offsets do not cover indices".into());
        }
        if let Some(&id) = self.indices.iter().find(|&&i| i >= self.num_nodes) {
            return Err(NgnnError::NodeOutOfRange {
                id,
                num_nodes: self.num_nodes,
            });
        }
        for v in 0..self.num_nodes {
            if self.neighbors(v).windows(2).any(|w| w[0] >= w[1]) {
                return fail(format!("neighbors of {v} not strictly sorted"));
            }
        }
        if let Some(c) = &self.gcn_coeff {
            if c.len() != self.indices.len() {
                return fail("gcn coefficient count".into());
            }
        }
        Ok(())
    }

    #[inline]
    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    /// Stored (directed) edge entries.
    #[inline]
    pub fn num_edges(&self) -> usize {
        self.indices.len()
    }

    /// Undirected edge count of a symmetric graph.
    pub fn num_undirected_edges(&self) -> usize {
        self.indices.len() / 2
    }

    #[inline]
    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    #[inline]
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    #[inline]
    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.indices[self.offsets[v]..self.offsets[v + 1]]
    }

    #[inline]
    pub fn degree(&self, v: usize) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }

    pub fn degrees(&self) -> Vec<usize> {
        (0..self.num_nodes).map(|v| self.degree(v)).collect()
    }

    pub fn max_degree(&self) -> usize {
        (0..self.num_nodes).map(|v| self.degree(v)).max().unwrap_or(0)
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        u < self.num_nodes && self.neighbors(u).binary_search(&v).is_ok()
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.num_nodes).all(|u| self.neighbors(u).iter().all(|&v| self.has_edge(v, u)))
    }

    /// Directed `(u, v)` pairs in CSR order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        (0..self.num_nodes)
            .flat_map(|u| self.neighbors(u).iter().map(move |&v| (u, v)))
            .collect()
    }

    /// Each undirected edge once as `(u, v)` with `u < v`.
    pub fn undirected_edges(&self) -> Vec<(usize, usize)> {
        self.edges().into_iter().filter(|&(u, v)| u < v).collect()
    }

    pub fn gcn_coeff(&self) -> Option<&[f64]> {
        self.gcn_coeff.as_deref()
    }

    pub fn is_normalized(&self) -> bool {
        self.gcn_coeff.is_some()
    }

    /// Symmetric GCN normalization with virtual self-loops: the coefficient
    /// of edge `(u, v)` is `1 / sqrt((deg u + 1)(deg v + 1))`; see
    /// [`Graph::self_coeff`] for the self-loop weight.
    pub fn gcn_normalize(&self) -> Graph {
        let deg: Vec<f64> = (0..self.num_nodes).map(|v| self.degree(v) as f64 + 1.0).collect();
        let mut coeff = Vec::with_capacity(self.indices.len());
        for u in 0..self.num_nodes {
            for &v in self.neighbors(u) {
                coeff.push(1.0 / (deg[u] * deg[v]).sqrt());
            }
        }
        Graph {
            gcn_coeff: Some(coeff),
            ..self.clone()
        }
    }

    /// Weight of the virtual self-loop of `v` under GCN normalization.
    #[inline]
    pub fn self_coeff(&self, v: usize) -> f64 {
        1.0 / (self.degree(v) as f64 + 1.0)
    }

    /// Subgraph induced by `nodes`; node `nodes[i]` becomes `i`. Carries GCN
    /// coefficients recomputed on the subgraph when `self` is normalized.
    pub fn induced_subgraph(&self, nodes: &[usize]) -> Result<Graph> {
        let mut local = vec![usize::MAX; self.num_nodes];
        for (i, &v) in nodes.iter().enumerate() {
            if v >= self.num_nodes {
                return Err(NgnnError::NodeOutOfRange {
                    id: v,
                    num_nodes: self.num_nodes,
                });
            }
            local[v] = i;
        }
        let mut offsets = Vec::with_capacity(nodes.len() + 1);
        offsets.push(0);
        let mut indices = Vec::new();
        for &v in nodes {
            let start = indices.len();
            indices.extend(self.neighbors(v).iter().filter_map(|&u| {
                let l = local[u];
                (l != usize::MAX).then_some(l)
            }));
            indices[start..].sort_unstable();
            offsets.push(indices.len());
        }
        let g = Graph {
            num_nodes: nodes.len(),
            offsets,
            indices,
            gcn_coeff: None,
        };
        Ok(if self.is_normalized() { g.gcn_normalize() } else { g })
    }

    /// Dense 0/1 adjacency, row-major. Test oracle helper.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut a = vec![vec![0.0; self.num_nodes]; self.num_nodes];
        for (u, v) in self.edges() {
            a[u][v] = 1.0;
        }
        a
    }
}
