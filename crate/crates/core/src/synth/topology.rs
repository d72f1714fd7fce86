use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::SynthError;
use crate::data::RoadGraph;

const JITTER: f64 = 0.3;

struct DisjointSet {
    parent: Vec<usize>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.parent[ra.max(rb)] = ra.min(rb);
        true
    }
}

/// Segment ids `seg0000`, `seg0001`, ... which sort in index order.
pub fn segment_ids(n: usize) -> Vec<String> {
    let width = n.saturating_sub(1).to_string().len().max(4);
    (0..n).map(|i| format!("seg{i:0width$}")).collect()
}

/// Nodes on a jittered lattice. A minimum spanning tree over the
/// 8-neighbourhood candidates is grown first, then the shortest remaining
/// candidates are added (or the longest tree edges dropped) until the graph
/// has exactly `target_arcs / 2` undirected edges.
pub fn lattice_graph(n: usize, target_arcs: usize, rng: &mut ChaCha8Rng) -> Result<RoadGraph, SynthError> {
    if target_arcs % 2 != 0 {
        return Err(SynthError::OddArcCount(target_arcs));
    }
    let target_edges = target_arcs / 2;
    let cols = (n as f64).sqrt().ceil().max(1.0) as usize;
    let pos: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let (r, c) = ((i / cols) as f64, (i % cols) as f64);
            (
                c + rng.random_range(-JITTER..JITTER),
                r + rng.random_range(-JITTER..JITTER),
            )
        })
        .collect();

    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for i in 0..n {
        let (r, c) = (i / cols, i % cols);
        for (dr, dc) in [(0i64, 1i64), (1, -1), (1, 0), (1, 1)] {
            let (r2, c2) = (r as i64 + dr, c as i64 + dc);
            if c2 < 0 || c2 >= cols as i64 {
                continue;
            }
            let j = r2 as usize * cols + c2 as usize;
            if j < n {
                let d = (pos[i].0 - pos[j].0).hypot(pos[i].1 - pos[j].1);
                candidates.push((d, i, j));
            }
        }
    }
    if target_edges > candidates.len() {
        return Err(SynthError::UnreachableArcCount {
            requested: target_arcs,
            max: 2 * candidates.len(),
        });
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then((a.1, a.2).cmp(&(b.1, b.2))));

    let mut dsu = DisjointSet::new(n);
    let mut tree = Vec::new();
    let mut rest = Vec::new();
    for &(d, i, j) in &candidates {
        if dsu.union(i, j) {
            tree.push((d, i, j));
        } else {
            rest.push((d, i, j));
        }
    }
    let mut chosen = tree;
    if target_edges >= chosen.len() {
        let extra = target_edges - chosen.len();
        chosen.extend(rest.into_iter().take(extra));
    } else {
        // tree edges are already in ascending length
        chosen.truncate(target_edges);
    }
    let pairs: Vec<(usize, usize)> = chosen.into_iter().map(|(_, i, j)| (i, j)).collect();
    Ok(RoadGraph::from_index_edges(segment_ids(n), pairs)?)
}

/// Separate generator for the topology so node streams stay untouched.
pub(crate) fn topology_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX);
    rng
}
