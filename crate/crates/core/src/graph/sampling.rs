use std::collections::HashSet;

use rand::seq::index;
use rand::Rng;

use super::{Block, Graph, SampledBlocks};
use crate::error::{NgnnError, Result};

/// Samples a multi-hop computation graph for `seeds`.
///
/// `fanouts[i]` is the per-destination neighbor budget of layer `i` (input
/// layer first). Each destination keeps `min(fanout, degree)` distinct
/// neighbors drawn without replacement, listed in CSR order. Sampled blocks
/// always carry GCN coefficients computed from the full-graph degrees, so a
/// fanout at or above the maximum degree reproduces full-graph propagation.
pub fn neighbor_sample<R: Rng + ?Sized>(
    g: &Graph,
    seeds: &[usize],
    fanouts: &[usize],
    rng: &mut R,
) -> Result<SampledBlocks> {
    if seeds.is_empty() {
        return Err(NgnnError::Empty("neighbor_sample seeds"));
    }
    let n = g.num_nodes();
    let mut local = vec![usize::MAX; n];
    let mut frontier: Vec<usize> = Vec::with_capacity(seeds.len());
    for &s in seeds {
        if s >= n {
            return Err(NgnnError::NodeOutOfRange { id: s, num_nodes: n });
        }
        if local[s] == usize::MAX {
            local[s] = frontier.len();
            frontier.push(s);
        }
    }
    for &v in &frontier {
        local[v] = usize::MAX;
    }

    let inv_sqrt_deg: Vec<f64> = (0..n).map(|v| 1.0 / (g.degree(v) as f64 + 1.0).sqrt()).collect();

    let mut blocks = Vec::with_capacity(fanouts.len());
    let mut levels = vec![frontier.clone()];
    for &fanout in fanouts.iter().rev() {
        let dst = frontier;
        let mut src = dst.clone();
        for (i, &v) in dst.iter().enumerate() {
            local[v] = i;
        }
        let mut offsets = Vec::with_capacity(dst.len() + 1);
        offsets.push(0);
        let mut indices = Vec::new();
        let mut edge_norm = Vec::new();
        let mut self_norm = Vec::with_capacity(dst.len());
        let mut picked: Vec<usize> = Vec::new();
        for &v in &dst {
            let nbrs = g.neighbors(v);
            picked.clear();
            if fanout >= nbrs.len() {
                picked.extend_from_slice(nbrs);
            } else {
                let mut chosen = index::sample(rng, nbrs.len(), fanout).into_vec();
                chosen.sort_unstable();
                picked.extend(chosen.into_iter().map(|k| nbrs[k]));
            }
            for &u in &picked {
                if local[u] == usize::MAX {
                    local[u] = src.len();
                    src.push(u);
                }
                indices.push(local[u]);
                edge_norm.push(inv_sqrt_deg[v] * inv_sqrt_deg[u]);
            }
            self_norm.push(inv_sqrt_deg[v] * inv_sqrt_deg[v]);
            offsets.push(indices.len());
        }
        for &u in &src {
            local[u] = usize::MAX;
        }
        blocks.push(Block {
            num_src: src.len(),
            num_dst: dst.len(),
            offsets,
            indices,
            edge_norm: Some(edge_norm),
            self_norm: Some(self_norm),
        });
        levels.push(src.clone());
        frontier = src;
    }
    blocks.reverse();
    levels.reverse();
    Ok(SampledBlocks {
        blocks,
        nodes: levels,
    })
}

/// Draws `count` distinct undirected non-edges `(u, v)`, `u < v`, uniformly
/// at random. Self-loops are never produced.
pub fn negative_sample_edges<R: Rng + ?Sized>(
    g: &Graph,
    count: usize,
    rng: &mut R,
) -> Result<Vec<(usize, usize)>> {
    let n = g.num_nodes();
    let pairs = n * n.saturating_sub(1) / 2;
    let available = pairs - g.num_undirected_edges().min(pairs);
    if count > available {
        return Err(NgnnError::Infeasible(format!(
            "{count} negative edges requested, only {available} non-edges exist"
        )));
    }
    if count == 0 {
        return Ok(Vec::new());
    }
    if count.saturating_mul(2) > available {
        // Dense regime: enumerate the complement and subsample it.
        let mut all = Vec::with_capacity(available);
        for u in 0..n {
            for v in u + 1..n {
                if !g.has_edge(u, v) {
                    all.push((u, v));
                }
            }
        }
        return Ok(index::sample(rng, all.len(), count)
            .into_iter()
            .map(|i| all[i])
            .collect());
    }
    let mut seen = HashSet::with_capacity(count);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let u = rng.random_range(0..n);
        let v = rng.random_range(0..n);
        if u == v {
            continue;
        }
        let pair = (u.min(v), u.max(v));
        if g.has_edge(pair.0, pair.1) || !seen.insert(pair) {
            continue;
        }
        out.push(pair);
    }
    Ok(out)
}
