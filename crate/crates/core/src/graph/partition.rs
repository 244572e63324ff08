use std::collections::VecDeque;

use rand::Rng;

use super::Graph;
use crate::error::{NgnnError, Result};

/// Splits the nodes into `num_clusters` balanced, disjoint parts by seeded
/// BFS region growing.
///
/// Part sizes differ by at most one. Each part starts from a random
/// unassigned node and grows breadth-first; when its frontier runs dry
/// before the part is full, growth restarts from another random unassigned
/// node. Node ids inside each part are sorted ascending.
pub fn cluster_partition<R: Rng + ?Sized>(
    g: &Graph,
    num_clusters: usize,
    rng: &mut R,
) -> Result<Vec<Vec<usize>>> {
    let n = g.num_nodes();
    if num_clusters == 0 || num_clusters > n {
        return Err(NgnnError::Config(format!(
            "cannot split {n} nodes into {num_clusters} clusters"
        )));
    }
    let base = n / num_clusters;
    let extra = n % num_clusters;

    let mut assigned = vec![false; n];
    // Unassigned pool with O(1) random removal via swap_remove + position map.
    let mut pool: Vec<usize> = (0..n).collect();
    let mut pos: Vec<usize> = (0..n).collect();
    let take = |v: usize, pool: &mut Vec<usize>, pos: &mut Vec<usize>| {
        let i = pos[v];
        let last = *pool.last().unwrap();
        pool.swap_remove(i);
        if last != v {
            pos[last] = i;
        }
    };

    let mut parts = Vec::with_capacity(num_clusters);
    for c in 0..num_clusters {
        let target = base + usize::from(c < extra);
        let mut part = Vec::with_capacity(target);
        let mut queue = VecDeque::new();
        while part.len() < target {
            let v = match queue.pop_front() {
                Some(v) => v,
                None => pool[rng.random_range(0..pool.len())],
            };
            if assigned[v] {
                continue;
            }
            assigned[v] = true;
            take(v, &mut pool, &mut pos);
            part.push(v);
            queue.extend(g.neighbors(v).iter().copied().filter(|&u| !assigned[u]));
        }
        part.sort_unstable();
        parts.push(part);
    }
    Ok(parts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{any, prop_assert, prop_assert_eq, proptest};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ring(n: usize) -> Graph {
        let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n)).collect();
        Graph::from_edges(&edges, n, true).unwrap()
    }

    #[test]
    fn single_and_singleton_partitions() {
        let g = ring(7);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(cluster_partition(&g, 1, &mut rng).unwrap(), vec![(0..7).collect::<Vec<_>>()]);
        let mut singles = cluster_partition(&g, 7, &mut rng).unwrap();
        singles.sort();
        assert_eq!(singles, (0..7).map(|v| vec![v]).collect::<Vec<_>>());
        assert!(cluster_partition(&g, 8, &mut rng).is_err());
        assert!(cluster_partition(&g, 0, &mut rng).is_err());
    }

    #[test]
    fn ring_parts_are_contiguous_arcs() {
        let g = ring(40);
        let parts = cluster_partition(&g, 4, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        // The first part grows from one seed on an untouched ring, so it is a
        // single arc: exactly 2 boundary edges leave it.
        let p = &parts[0];
        let cut = p
            .iter()
            .flat_map(|&v| g.neighbors(v).iter().map(move |&u| (v, u)))
            .filter(|(_, u)| p.binary_search(u).is_err())
            .count();
        assert_eq!(cut, 2);
    }

    proptest! {
        #[test]
        fn partition_is_disjoint_balanced_cover(
            n in 1usize..60,
            k_frac in 0.0f64..1.0,
            seed in any::<u64>(),
            edge_seed in any::<u64>(),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(edge_seed);
            let edges: Vec<_> = (0..2 * n)
                .map(|_| (rng.random_range(0..n), rng.random_range(0..n)))
                .collect();
            let g = Graph::from_edges(&edges, n, true).unwrap();
            let k = 1 + ((n - 1) as f64 * k_frac) as usize;
            let parts = cluster_partition(&g, k, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            prop_assert_eq!(parts.len(), k);
            let mut all: Vec<usize> = parts.iter().flatten().copied().collect();
            all.sort();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            let sizes: Vec<usize> = parts.iter().map(Vec::len).collect();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            let again = cluster_partition(&g, k, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            prop_assert_eq!(parts, again);
        }
    }
}
