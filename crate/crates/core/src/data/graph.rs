use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::DataError;

/// Static, undirected road-segment graph in canonical (sorted id) node order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoadGraph {
    node_ids: Vec<String>,
    edges: Vec<(usize, usize)>,
    adjacency: Vec<Vec<usize>>,
}

/// Directed arc list used for attention message passing, grouped by target node.
///
/// `targets[e]` receives a message from `sources[e]`. When built with self-loops,
/// every node owns at least one arc. `edge_ids[e]` names the undirected edge an
/// arc came from (`None` for self-loops).
#[derive(Clone, Debug)]
pub struct AttentionEdges {
    pub targets: Arc<[usize]>,
    pub sources: Arc<[usize]>,
    pub edge_ids: Vec<Option<usize>>,
    pub num_nodes: usize,
}

impl AttentionEdges {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

impl RoadGraph {
    /// Builds a graph from segment identifiers and endpoint pairs.
    ///
    /// Pairs may be given in directed form (both `(a, b)` and `(b, a)`) or
    /// undirected form; both collapse to one undirected edge.
    pub fn load<S: AsRef<str>>(
        node_ids: &[S],
        edge_pairs: &[(S, S)],
    ) -> Result<Self, DataError> {
        let mut ids: Vec<String> = node_ids.iter().map(|s| s.as_ref().to_owned()).collect();
        ids.sort();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(DataError::DuplicateNode(w[0].clone()));
        }
        let index: HashMap<&str, usize> =
            ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        let mut edges = BTreeSet::new();
        for (a, b) in edge_pairs {
            let (a, b) = (a.as_ref(), b.as_ref());
            let ia = *index
                .get(a)
                .ok_or_else(|| DataError::DanglingEdge(a.to_owned()))?;
            let ib = *index
                .get(b)
                .ok_or_else(|| DataError::DanglingEdge(b.to_owned()))?;
            if ia == ib {
                return Err(DataError::SelfLoop(a.to_owned()));
            }
            edges.insert((ia.min(ib), ia.max(ib)));
        }
        Ok(Self::assemble(ids, edges))
    }

    /// Builds a graph from already sorted ids and index pairs.
    pub fn from_index_edges(
        node_ids: Vec<String>,
        pairs: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self, DataError> {
        if node_ids.windows(2).any(|w| w[0] >= w[1]) {
            return Err(DataError::DuplicateNode(
                "node ids must be strictly sorted".into(),
            ));
        }
        let n = node_ids.len();
        let mut edges = BTreeSet::new();
        for (a, b) in pairs {
            if a >= n || b >= n {
                return Err(DataError::DanglingEdge(format!("index {}", a.max(b))));
            }
            if a == b {
                return Err(DataError::SelfLoop(node_ids[a].clone()));
            }
            edges.insert((a.min(b), a.max(b)));
        }
        Ok(Self::assemble(node_ids, edges))
    }

    fn assemble(node_ids: Vec<String>, edges: BTreeSet<(usize, usize)>) -> Self {
        let mut adjacency = vec![Vec::new(); node_ids.len()];
        for &(a, b) in &edges {
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        Self {
            node_ids,
            edges: edges.into_iter().collect(),
            adjacency,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.node_ids.len()
    }

    /// Number of undirected edges.
    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Number of directed arcs (twice the undirected edge count).
    pub fn num_arcs(&self) -> usize {
        2 * self.edges.len()
    }

    pub fn node_ids(&self) -> &[String] {
        &self.node_ids
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.node_ids.binary_search_by(|p| p.as_str().cmp(id)).ok()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adjacency[a].binary_search(&b).is_ok()
    }

    /// Same node set with the edge set replaced.
    pub fn with_edges(&self, pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self, DataError> {
        Self::from_index_edges(self.node_ids.clone(), pairs)
    }

    /// Arc list for attention. With `self_loops`, each node also attends to itself.
    pub fn attention_edges(&self, self_loops: bool) -> AttentionEdges {
        let mut arcs: Vec<(usize, usize, Option<usize>)> = Vec::with_capacity(self.num_arcs() + self.num_nodes());
        for (id, &(a, b)) in self.edges.iter().enumerate() {
            arcs.push((a, b, Some(id)));
            arcs.push((b, a, Some(id)));
        }
        if self_loops {
            arcs.extend((0..self.num_nodes()).map(|i| (i, i, None)));
        }
        arcs.sort_unstable_by_key(|&(t, s, _)| (t, s));
        AttentionEdges {
            targets: arcs.iter().map(|a| a.0).collect(),
            sources: arcs.iter().map(|a| a.1).collect(),
            edge_ids: arcs.iter().map(|a| a.2).collect(),
            num_nodes: self.num_nodes(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_edge_is_symmetric() {
        let g = RoadGraph::load(&["A", "B", "C"], &[("A", "B")]).unwrap();
        assert_eq!(g.neighbors(0), &[1]);
        assert_eq!(g.neighbors(1), &[0]);
        assert!(g.neighbors(2).is_empty());
        assert_eq!(g.num_edges(), 1);
    }

    #[test]
    fn directed_and_undirected_records_collapse() {
        let g = RoadGraph::load(&["A", "B", "C"], &[("A", "B"), ("B", "A"), ("C", "B")]).unwrap();
        assert_eq!(g.num_edges(), 2);
        assert_eq!(g.num_arcs(), 4);
    }

    #[test]
    fn path_of_750_with_both_directions_has_749_edges() {
        let ids: Vec<String> = (0..750).map(|i| format!("S{i:04}")).collect();
        let mut pairs = Vec::new();
        for i in 0..749 {
            pairs.push((ids[i].clone(), ids[i + 1].clone()));
            pairs.push((ids[i + 1].clone(), ids[i].clone()));
        }
        assert_eq!(pairs.len(), 1498);
        let g = RoadGraph::load(&ids, &pairs).unwrap();
        assert_eq!(g.num_edges(), 749);
        assert_eq!(g.num_arcs(), 1498);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            RoadGraph::load(&["A", "A"], &[]),
            Err(DataError::DuplicateNode(_))
        ));
        assert!(matches!(
            RoadGraph::load(&["A", "B"], &[("A", "Z")]),
            Err(DataError::DanglingEdge(_))
        ));
        assert!(matches!(
            RoadGraph::load(&["A", "B"], &[("A", "A")]),
            Err(DataError::SelfLoop(_))
        ));
    }

    #[test]
    fn attention_edges_grouped_by_target_with_self_loops() {
        let g = RoadGraph::load(&["A", "B", "C"], &[("A", "B"), ("B", "C")]).unwrap();
        let e = g.attention_edges(true);
        assert_eq!(e.len(), 4 + 3);
        assert!(e.targets.windows(2).all(|w| w[0] <= w[1]));
        for i in 0..3 {
            assert!(e
                .targets
                .iter()
                .zip(e.sources.iter())
                .any(|(&t, &s)| t == i && s == i));
        }
    }
}
