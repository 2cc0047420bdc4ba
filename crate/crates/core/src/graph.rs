//! Undirected simple graphs with node attributes and labels, plus the
//! neighborhood and k-hop subgraph queries every other module relies on.

use std::collections::{BTreeSet, VecDeque};

use crate::error::{Error, Result};
use crate::nn::Tensor;

pub type NodeId = usize;

/// Unordered node pair, stored with the smaller id first.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Edge(NodeId, NodeId);

impl Edge {
    pub fn new(u: NodeId, v: NodeId) -> Self {
        if u <= v {
            Edge(u, v)
        } else {
            Edge(v, u)
        }
    }

    pub fn low(self) -> NodeId {
        self.0
    }

    pub fn high(self) -> NodeId {
        self.1
    }

    pub fn contains(self, v: NodeId) -> bool {
        self.0 == v || self.1 == v
    }

    pub fn is_self_loop(self) -> bool {
        self.0 == self.1
    }
}

/// Undirected simple graph with per-node attributes and class labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    adjacency: Vec<Vec<NodeId>>,
    num_edges: usize,
    features: Tensor,
    labels: Vec<usize>,
    num_classes: usize,
}

impl Graph {
    /// Builds a graph from an edge list. Duplicate edges (in either
    /// orientation) collapse into one; self-loops are dropped.
    pub fn new(
        num_nodes: usize,
        edges: impl IntoIterator<Item = (NodeId, NodeId)>,
        features: Tensor,
        labels: Vec<usize>,
        num_classes: usize,
    ) -> Result<Self> {
        if features.rows() != num_nodes || !features.is_matrix() {
            return Err(Error::shape(format!(
                "{num_nodes} nodes but feature matrix {:?}",
                features.shape()
            )));
        }
        if labels.len() != num_nodes {
            return Err(Error::shape(format!("{num_nodes} nodes but {} labels", labels.len())));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::invalid(format!("label {bad} outside {num_classes} classes")));
        }
        let mut sets = vec![BTreeSet::new(); num_nodes];
        for (u, v) in edges {
            for node in [u, v] {
                if node >= num_nodes {
                    return Err(Error::InvalidNode { node, num_nodes });
                }
            }
            if u != v {
                sets[u].insert(v);
                sets[v].insert(u);
            }
        }
        let adjacency: Vec<Vec<NodeId>> = sets.into_iter().map(|s| s.into_iter().collect()).collect();
        let num_edges = adjacency.iter().map(Vec::len).sum::<usize>() / 2;
        Ok(Graph {
            adjacency,
            num_edges,
            features,
            labels,
            num_classes,
        })
    }

    /// Graph with the class count inferred as `max(label) + 1`.
    pub fn with_inferred_classes(
        num_nodes: usize,
        edges: impl IntoIterator<Item = (NodeId, NodeId)>,
        features: Tensor,
        labels: Vec<usize>,
    ) -> Result<Self> {
        let classes = labels.iter().max().map_or(0, |m| m + 1);
        Self::new(num_nodes, edges, features, labels, classes)
    }

    pub fn num_nodes(&self) -> usize {
        self.adjacency.len()
    }

    pub fn num_edges(&self) -> usize {
        self.num_edges
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn feature_row(&self, v: NodeId) -> &[f64] {
        self.features.row(v)
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn check_node(&self, v: NodeId) -> Result<()> {
        if v < self.num_nodes() {
            Ok(())
        } else {
            Err(Error::InvalidNode {
                node: v,
                num_nodes: self.num_nodes(),
            })
        }
    }

    /// Sorted neighbors of `v`.
    pub fn neighbors(&self, v: NodeId) -> Result<&[NodeId]> {
        self.check_node(v)?;
        Ok(&self.adjacency[v])
    }

    pub fn degree(&self, v: NodeId) -> usize {
        self.adjacency[v].len()
    }

    pub fn has_edge(&self, u: NodeId, v: NodeId) -> bool {
        u < self.num_nodes() && self.adjacency[u].binary_search(&v).is_ok()
    }

    /// Every edge once, in ascending `(low, high)` order.
    pub fn edges(&self) -> impl Iterator<Item = Edge> + '_ {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(u, ns)| ns.iter().filter(move |&&v| u < v).map(move |&v| Edge(u, v)))
    }

    pub(crate) fn adjacency(&self) -> &[Vec<NodeId>] {
        &self.adjacency
    }

    /// Subgraph induced by `nodes`; node `i` of the result is `nodes[i]` here.
    pub fn induced(&self, nodes: &[NodeId]) -> Result<Graph> {
        let mut local = vec![usize::MAX; self.num_nodes()];
        for (i, &v) in nodes.iter().enumerate() {
            self.check_node(v)?;
            if local[v] != usize::MAX {
                return Err(Error::invalid(format!("node {v} listed twice")));
            }
            local[v] = i;
        }
        let mut edges = Vec::new();
        for (i, &v) in nodes.iter().enumerate() {
            for &u in &self.adjacency[v] {
                let j = local[u];
                if j != usize::MAX && i < j {
                    edges.push((i, j));
                }
            }
        }
        let labels = nodes.iter().map(|&v| self.labels[v]).collect();
        Graph::new(
            nodes.len(),
            edges,
            self.features.select_rows(nodes),
            labels,
            self.num_classes,
        )
    }

    /// Same nodes, attributes and labels over a replacement edge set.
    pub fn with_edges(&self, edges: impl IntoIterator<Item = (NodeId, NodeId)>) -> Result<Graph> {
        Graph::new(
            self.num_nodes(),
            edges,
            self.features.clone(),
            self.labels.clone(),
            self.num_classes,
        )
    }

    /// Same structure with replaced labels.
    pub fn with_labels(&self, labels: Vec<usize>, num_classes: usize) -> Result<Graph> {
        Graph::new(
            self.num_nodes(),
            self.edges().map(|e| (e.0, e.1)),
            self.features.clone(),
            labels,
            num_classes,
        )
    }

    /// Neighbors of `v` as seen with `exclude` removed from the edge set.
    pub fn visible_neighbors(&self, v: NodeId, exclude: Option<Edge>) -> Result<Vec<NodeId>> {
        Ok(self
            .neighbors(v)?
            .iter()
            .copied()
            .filter(|&u| exclude != Some(Edge::new(u, v)))
            .collect())
    }

    /// Depth-`hop` neighborhood of `center` with `exclude` removed.
    ///
    /// Nodes are listed in breadth-first order with the center first; edges are
    /// all edges of the (edge-deleted) graph between included nodes, plus a
    /// self-loop on every included node.
    pub fn khop_subgraph(&self, center: NodeId, hop: Hop, exclude: Option<Edge>) -> Result<Subgraph> {
        self.check_node(center)?;
        let depth = hop.depth();
        let mut local = std::collections::HashMap::new();
        let mut nodes = vec![center];
        local.insert(center, 0usize);
        let mut queue = VecDeque::from([(center, 0usize)]);
        while let Some((v, d)) = queue.pop_front() {
            if d == depth {
                continue;
            }
            for &u in &self.adjacency[v] {
                if exclude == Some(Edge::new(u, v)) || local.contains_key(&u) {
                    continue;
                }
                local.insert(u, nodes.len());
                nodes.push(u);
                queue.push_back((u, d + 1));
            }
        }
        let mut edges: Vec<(usize, usize)> = (0..nodes.len()).map(|i| (i, i)).collect();
        if depth > 0 {
            for (i, &v) in nodes.iter().enumerate() {
                for &u in &self.adjacency[v] {
                    if exclude == Some(Edge::new(u, v)) {
                        continue;
                    }
                    if let Some(&j) = local.get(&u) {
                        if i < j {
                            edges.push((i, j));
                        }
                    }
                }
            }
        }
        Ok(Subgraph {
            center,
            hop,
            features: self.features.select_rows(&nodes),
            nodes,
            edges,
        })
    }
}

/// Query depth: how much neighborhood the querier supplies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Hop {
    Zero,
    One,
    Two,
}

impl Hop {
    pub const ALL: [Hop; 3] = [Hop::Zero, Hop::One, Hop::Two];

    pub fn depth(self) -> usize {
        match self {
            Hop::Zero => 0,
            Hop::One => 1,
            Hop::Two => 2,
        }
    }

    pub fn from_depth(depth: usize) -> Result<Hop> {
        match depth {
            0 => Ok(Hop::Zero),
            1 => Ok(Hop::One),
            2 => Ok(Hop::Two),
            other => Err(Error::invalid(format!("hop must be 0, 1 or 2, got {other}"))),
        }
    }
}

/// Local view handed to a model at query time. Node 0 is always the center.
#[derive(Clone, Debug, PartialEq)]
pub struct Subgraph {
    pub center: NodeId,
    pub hop: Hop,
    /// Parent-graph ids, indexed by local id.
    pub nodes: Vec<NodeId>,
    /// Local-id pairs `(i, j)` with `i <= j`; includes one self-loop per node.
    pub edges: Vec<(usize, usize)>,
    /// Attribute rows for `nodes`, in the same order.
    pub features: Tensor,
}

impl Subgraph {
    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Parent ids of the center's neighbors in this view, self excluded.
    pub fn center_neighbors(&self) -> BTreeSet<NodeId> {
        self.edges
            .iter()
            .filter_map(|&(i, j)| match (i, j) {
                (0, 0) => None,
                (0, k) | (k, 0) => Some(self.nodes[k]),
                _ => None,
            })
            .collect()
    }

    /// Same subgraph with local ids permuted: new local `i` is old `order[i]`.
    /// `order[0]` must stay `0` so the center remains first.
    pub fn permuted(&self, order: &[usize]) -> Result<Subgraph> {
        if order.len() != self.nodes.len() || order.first() != Some(&0) {
            return Err(Error::invalid("permutation must keep the center at position 0"));
        }
        let mut inverse = vec![usize::MAX; order.len()];
        for (new, &old) in order.iter().enumerate() {
            if old >= order.len() || inverse[old] != usize::MAX {
                return Err(Error::invalid("not a permutation"));
            }
            inverse[old] = new;
        }
        let edges = self
            .edges
            .iter()
            .map(|&(i, j)| {
                let (a, b) = (inverse[i], inverse[j]);
                (a.min(b), a.max(b))
            })
            .collect();
        Ok(Subgraph {
            center: self.center,
            hop: self.hop,
            nodes: order.iter().map(|&o| self.nodes[o]).collect(),
            edges,
            features: self.features.select_rows(order),
        })
    }
}
