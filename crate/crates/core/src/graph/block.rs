use std::sync::Arc;

use super::Graph;
use crate::error::{NgnnError, Result};
use crate::tensor::{Scalar, SparseAdj};

/// Bipartite message-passing structure for one GNN layer.
///
/// Destinations are the first `num_dst` sources: local destination `i` is
/// local source `i`. Edges are stored per destination (CSR) as local source
/// ids. A full graph is the special case `num_src == num_dst == N`.
#[derive(Clone, Debug, PartialEq)]
pub struct Block {
    pub num_src: usize,
    pub num_dst: usize,
    pub offsets: Vec<usize>,
    pub indices: Vec<usize>,
    /// GCN coefficient per edge, when normalization is available.
    pub edge_norm: Option<Vec<f64>>,
    /// GCN self-loop coefficient per destination.
    pub self_norm: Option<Vec<f64>>,
}

impl Block {
    /// Whole-graph block. GCN coefficients are attached iff the graph has
    /// been normalized.
    pub fn from_graph(g: &Graph) -> Block {
        let (edge_norm, self_norm) = match g.gcn_coeff() {
            Some(c) => (
                Some(c.to_vec()),
                Some((0..g.num_nodes()).map(|v| g.self_coeff(v)).collect()),
            ),
            None => (None, None),
        };
        Block {
            num_src: g.num_nodes(),
            num_dst: g.num_nodes(),
            offsets: g.offsets().to_vec(),
            indices: g.indices().to_vec(),
            edge_norm,
            self_norm,
        }
    }

    pub fn num_edges(&self) -> usize {
        self.indices.len()
    }

    pub fn in_degree(&self, d: usize) -> usize {
        self.offsets[d + 1] - self.offsets[d]
    }

    pub fn neighbors(&self, d: usize) -> &[usize] {
        &self.indices[self.offsets[d]..self.offsets[d + 1]]
    }

    /// Row-normalized adjacency: each destination averages its sources.
    /// Destinations without sources get an empty (all-zero) row.
    pub fn mean_adj<T: Scalar>(&self) -> Arc<SparseAdj<T>> {
        let mut values = Vec::with_capacity(self.indices.len());
        for d in 0..self.num_dst {
            let deg = self.in_degree(d);
            let w = T::of(1.0 / deg.max(1) as f64);
            values.extend(std::iter::repeat_n(w, deg));
        }
        Arc::new(SparseAdj {
            num_dst: self.num_dst,
            num_src: self.num_src,
            offsets: self.offsets.clone(),
            indices: self.indices.clone(),
            values,
        })
    }

    /// Normalized adjacency with the self-loop listed first in every row.
    pub fn gcn_adj<T: Scalar>(&self) -> Result<Arc<SparseAdj<T>>> {
        let (Some(edge_norm), Some(self_norm)) = (&self.edge_norm, &self.self_norm) else {
            return Err(NgnnError::MissingNormalization);
        };
        let mut offsets = Vec::with_capacity(self.num_dst + 1);
        let mut indices = Vec::with_capacity(self.indices.len() + self.num_dst);
        let mut values = Vec::with_capacity(self.indices.len() + self.num_dst);
        offsets.push(0);
        for d in 0..self.num_dst {
            indices.push(d);
            values.push(T::of(self_norm[d]));
            for e in self.offsets[d]..self.offsets[d + 1] {
                indices.push(self.indices[e]);
                values.push(T::of(edge_norm[e]));
            }
            offsets.push(indices.len());
        }
        Ok(Arc::new(SparseAdj {
            num_dst: self.num_dst,
            num_src: self.num_src,
            offsets,
            indices,
            values,
        }))
    }

    /// Edge pattern including a leading self-loop per destination, used as
    /// the attention neighborhood `N(v) + {v}`.
    pub fn attention_pattern<T: Scalar>(&self) -> Arc<SparseAdj<T>> {
        let mut offsets = Vec::with_capacity(self.num_dst + 1);
        let mut indices = Vec::with_capacity(self.indices.len() + self.num_dst);
        offsets.push(0);
        for d in 0..self.num_dst {
            indices.push(d);
            indices.extend_from_slice(self.neighbors(d));
            offsets.push(indices.len());
        }
        Arc::new(SparseAdj {
            num_dst: self.num_dst,
            num_src: self.num_src,
            offsets,
            indices,
            values: Vec::new(),
        })
    }
}

/// Per-hop blocks for one minibatch, ordered input hop to output hop.
///
/// `nodes[i]` lists the global ids of block `i`'s sources and
/// `nodes[i + 1]` those of its destinations (a prefix of `nodes[i]`).
/// `nodes[0]` are the rows of the input features to gather; the last entry
/// are the seed nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledBlocks {
    pub blocks: Vec<Block>,
    pub nodes: Vec<Vec<usize>>,
}

impl SampledBlocks {
    pub fn input_nodes(&self) -> &[usize] {
        &self.nodes[0]
    }

    pub fn seeds(&self) -> &[usize] {
        self.nodes.last().map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn num_hops(&self) -> usize {
        self.blocks.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_adj_handles_isolated() {
        let g = Graph::from_edges(&[(0, 1), (0, 2)], 4, true).unwrap();
        let adj = Block::from_graph(&g).mean_adj::<f64>();
        let dense = adj.to_dense();
        assert_eq!(dense.row(0), &[0.0, 0.5, 0.5, 0.0]);
        assert_eq!(dense.row(3), &[0.0; 4]);
    }

    #[test]
    fn gcn_adj_requires_normalization() {
        let g = Graph::from_edges(&[(0, 1)], 2, true).unwrap();
        assert!(matches!(
            Block::from_graph(&g).gcn_adj::<f32>(),
            Err(NgnnError::MissingNormalization)
        ));
        let adj = Block::from_graph(&g.gcn_normalize()).gcn_adj::<f64>().unwrap();
        assert_eq!(adj.to_dense().data(), &[0.5, 0.5, 0.5, 0.5]);
    }

    #[test]
    fn attention_pattern_prepends_self() {
        let g = Graph::from_edges(&[(0, 1)], 3, true).unwrap();
        let p = Block::from_graph(&g).attention_pattern::<f32>();
        assert_eq!(p.offsets, vec![0, 2, 4, 5]);
        assert_eq!(p.indices, vec![0, 1, 1, 0, 2]);
    }
}
