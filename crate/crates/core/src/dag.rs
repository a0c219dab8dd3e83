//! Validated directed acyclic graphs with node features and typed edges.
//!
//! A [`Dag`] is immutable once built. Construction checks every structural
//! rule (no self-loops, no parallel edges, no cycles, rectangular features)
//! and precomputes the predecessor/successor lists together with the
//! source and target sets.

use std::collections::{HashSet, VecDeque};

use thiserror::Error;

/// Dense node index in `[0, num_nodes)`.
pub type NodeId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Edge {
    pub tail: NodeId,
    pub head: NodeId,
    pub edge_type: usize,
}

impl Edge {
    pub fn new(tail: NodeId, head: NodeId, edge_type: usize) -> Self {
        Self { tail, head, edge_type }
    }

    /// Edge of type 0.
    pub fn untyped(tail: NodeId, head: NodeId) -> Self {
        Self::new(tail, head, 0)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DagError {
    #[error("graph has no nodes")]
    Empty,
    #[error("edge ({tail}, {head}) references a node outside [0, {num_nodes})")]
    NodeOutOfRange {
        tail: NodeId,
        head: NodeId,
        num_nodes: usize,
    },
    #[error("self-loop on node {0}")]
    SelfLoop(NodeId),
    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(NodeId, NodeId),
    #[error("directed cycle through {remaining} node(s)")]
    Cycle { remaining: usize },
    #[error("expected {expected} feature rows, got {actual}")]
    FeatureCount { expected: usize, actual: usize },
    #[error("feature row {node} has dimension {actual}, expected {expected}")]
    Dimension {
        node: NodeId,
        expected: usize,
        actual: usize,
    },
    #[error("not a permutation of [0, {0})")]
    InvalidPermutation(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dag {
    num_nodes: usize,
    edges: Vec<Edge>,
    feature_dim: usize,
    /// Row-major `num_nodes x feature_dim`.
    features: Vec<f64>,
    /// `(predecessor, edge_type)` per node, sorted by predecessor.
    predecessors: Vec<Vec<(NodeId, usize)>>,
    /// Sorted per node.
    successors: Vec<Vec<NodeId>>,
    sources: Vec<NodeId>,
    targets: Vec<NodeId>,
}

impl Dag {
    /// Validates and builds a DAG.
    ///
    /// Edges are kept in the given order. Acyclicity is checked by Kahn
    /// peeling: the graph is accepted iff peeling consumes every node.
    pub fn new(num_nodes: usize, edges: Vec<Edge>, features: Vec<Vec<f64>>) -> Result<Self, DagError> {
        if num_nodes == 0 {
            return Err(DagError::Empty);
        }
        if features.len() != num_nodes {
            return Err(DagError::FeatureCount {
                expected: num_nodes,
                actual: features.len(),
            });
        }
        let feature_dim = features[0].len();
        for (node, row) in features.iter().enumerate() {
            if row.len() != feature_dim {
                return Err(DagError::Dimension {
                    node,
                    expected: feature_dim,
                    actual: row.len(),
                });
            }
        }
        Self::from_flat(num_nodes, edges, feature_dim, features.concat())
    }

    pub(crate) fn from_flat(
        num_nodes: usize,
        edges: Vec<Edge>,
        feature_dim: usize,
        features: Vec<f64>,
    ) -> Result<Self, DagError> {
        if num_nodes == 0 {
            return Err(DagError::Empty);
        }
        debug_assert_eq!(features.len(), num_nodes * feature_dim);

        let mut seen = HashSet::with_capacity(edges.len());
        let mut predecessors = vec![Vec::new(); num_nodes];
        let mut successors = vec![Vec::new(); num_nodes];
        for e in &edges {
            if e.tail >= num_nodes || e.head >= num_nodes {
                return Err(DagError::NodeOutOfRange {
                    tail: e.tail,
                    head: e.head,
                    num_nodes,
                });
            }
            if e.tail == e.head {
                return Err(DagError::SelfLoop(e.tail));
            }
            if !seen.insert((e.tail, e.head)) {
                return Err(DagError::DuplicateEdge(e.tail, e.head));
            }
            predecessors[e.head].push((e.tail, e.edge_type));
            successors[e.tail].push(e.head);
        }
        for p in &mut predecessors {
            p.sort_unstable();
        }
        for s in &mut successors {
            s.sort_unstable();
        }

        let consumed = kahn_order(&predecessors, &successors).len();
        if consumed != num_nodes {
            return Err(DagError::Cycle {
                remaining: num_nodes - consumed,
            });
        }

        let sources = (0..num_nodes).filter(|&v| predecessors[v].is_empty()).collect();
        let targets = (0..num_nodes).filter(|&v| successors[v].is_empty()).collect();
        Ok(Self {
            num_nodes,
            edges,
            feature_dim,
            features,
            predecessors,
            successors,
            sources,
            targets,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn features(&self, v: NodeId) -> &[f64] {
        &self.features[v * self.feature_dim..(v + 1) * self.feature_dim]
    }

    /// Row-major feature matrix.
    pub fn feature_matrix(&self) -> &[f64] {
        &self.features
    }

    /// Direct predecessors of `v` with the type of the connecting edge.
    pub fn predecessors(&self, v: NodeId) -> &[(NodeId, usize)] {
        &self.predecessors[v]
    }

    pub fn successors(&self, v: NodeId) -> &[NodeId] {
        &self.successors[v]
    }

    pub fn in_degree(&self, v: NodeId) -> usize {
        self.predecessors[v].len()
    }

    pub fn sources(&self) -> &[NodeId] {
        &self.sources
    }

    pub fn targets(&self) -> &[NodeId] {
        &self.targets
    }

    /// Largest edge type present, if any edge exists.
    pub fn max_edge_type(&self) -> Option<usize> {
        self.edges.iter().map(|e| e.edge_type).max()
    }

    /// A topological order of the nodes (Kahn, ascending id among ready nodes).
    pub fn topological_order(&self) -> Vec<NodeId> {
        kahn_order(&self.predecessors, &self.successors)
    }

    /// The same graph with every edge flipped. Edge types and features are kept.
    pub fn reverse(&self) -> Dag {
        let edges = self
            .edges
            .iter()
            .map(|e| Edge::new(e.head, e.tail, e.edge_type))
            .collect();
        Dag::from_flat(self.num_nodes, edges, self.feature_dim, self.features.clone())
            .expect("reversal preserves validity")
    }

    /// Number of nodes on the longest directed path.
    pub fn longest_path_node_count(&self) -> usize {
        let mut depth = vec![1usize; self.num_nodes];
        for v in self.topological_order() {
            for &(u, _) in &self.predecessors[v] {
                depth[v] = depth[v].max(depth[u] + 1);
            }
        }
        depth.into_iter().max().unwrap_or(0)
    }

    /// Relabels node `v` as `perm[v]`, carrying features and edge types along.
    pub fn permute(&self, perm: &[NodeId]) -> Result<Dag, DagError> {
        let n = self.num_nodes;
        if perm.len() != n {
            return Err(DagError::InvalidPermutation(n));
        }
        let mut hit = vec![false; n];
        for &p in perm {
            if p >= n || hit[p] {
                return Err(DagError::InvalidPermutation(n));
            }
            hit[p] = true;
        }
        let edges = self
            .edges
            .iter()
            .map(|e| Edge::new(perm[e.tail], perm[e.head], e.edge_type))
            .collect();
        let d = self.feature_dim;
        let mut features = vec![0.0; n * d];
        for v in 0..n {
            features[perm[v] * d..(perm[v] + 1) * d].copy_from_slice(self.features(v));
        }
        Ok(Dag::from_flat(n, edges, d, features).expect("relabeling preserves validity"))
    }

    /// Structural equality ignoring the order in which edges were listed.
    pub fn same_structure(&self, other: &Dag) -> bool {
        self.num_nodes == other.num_nodes
            && self.feature_dim == other.feature_dim
            && self.features == other.features
            && self.predecessors == other.predecessors
    }

    /// Disjoint union of `graphs`; returns the union and the first node id of each part.
    pub fn disjoint_union(graphs: &[&Dag]) -> Result<(Dag, Vec<NodeId>), DagError> {
        let first = graphs.first().ok_or(DagError::Empty)?;
        let d = first.feature_dim;
        let mut offsets = Vec::with_capacity(graphs.len());
        let mut edges = Vec::new();
        let mut features = Vec::new();
        let mut offset = 0;
        for (i, g) in graphs.iter().enumerate() {
            if g.feature_dim != d {
                return Err(DagError::Dimension {
                    node: i,
                    expected: d,
                    actual: g.feature_dim,
                });
            }
            offsets.push(offset);
            edges.extend(
                g.edges
                    .iter()
                    .map(|e| Edge::new(e.tail + offset, e.head + offset, e.edge_type)),
            );
            features.extend_from_slice(&g.features);
            offset += g.num_nodes;
        }
        Ok((Dag::from_flat(offset, edges, d, features)?, offsets))
    }
}

/// Kahn peeling; returns the nodes it managed to consume, in order.
fn kahn_order(predecessors: &[Vec<(NodeId, usize)>], successors: &[Vec<NodeId>]) -> Vec<NodeId> {
    let mut indegree: Vec<usize> = predecessors.iter().map(Vec::len).collect();
    let mut queue: VecDeque<NodeId> = (0..indegree.len()).filter(|&v| indegree[v] == 0).collect();
    let mut order = Vec::with_capacity(indegree.len());
    while let Some(v) = queue.pop_front() {
        order.push(v);
        for &w in &successors[v] {
            indegree[w] -= 1;
            if indegree[w] == 0 {
                queue.push_back(w);
            }
        }
    }
    order
}
