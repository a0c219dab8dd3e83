//! Topological batching: an ordered partition of the nodes such that every
//! batch only depends on earlier batches.
//!
//! Batches are produced by repeated peeling. The first batch is the source
//! set; removing it (and its outgoing edges) exposes the next set of nodes
//! without predecessors, and so on. The number of batches equals the number
//! of nodes on the longest path, which is the minimum for any ordering that
//! keeps comparable nodes in strictly increasing batches.
//!
//! Batches must be processed in order. Nodes inside one batch share no
//! dependencies and may be processed in any order or in parallel.

use thiserror::Error;

use crate::dag::{Dag, NodeId};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BatchingError {
    #[error("no graphs to merge")]
    EmptyInput,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopoBatches {
    /// Each batch lists its nodes in ascending id order.
    batches: Vec<Vec<NodeId>>,
    batch_of: Vec<usize>,
}

impl TopoBatches {
    /// Peels `dag` into batches.
    pub fn compute(dag: &Dag) -> Self {
        let n = dag.num_nodes();
        let mut indegree: Vec<usize> = (0..n).map(|v| dag.in_degree(v)).collect();
        let mut batch_of = vec![usize::MAX; n];
        let mut batches = Vec::new();
        let mut current: Vec<NodeId> = dag.sources().to_vec();
        while !current.is_empty() {
            let mut next = Vec::new();
            for &v in &current {
                batch_of[v] = batches.len();
                for &w in dag.successors(v) {
                    indegree[w] -= 1;
                    if indegree[w] == 0 {
                        next.push(w);
                    }
                }
            }
            next.sort_unstable();
            batches.push(current);
            current = next;
        }
        debug_assert!(batch_of.iter().all(|&b| b != usize::MAX));
        Self { batches, batch_of }
    }

    /// Batches of the reversed graph; the first batch is the target set of `dag`.
    pub fn compute_reverse(dag: &Dag) -> Self {
        Self::compute(&dag.reverse())
    }

    /// Merges per-graph batchings, batch `i` with batch `i`, over the disjoint
    /// union of `graphs` (node ids of graph `k` are offset by the sizes of the
    /// graphs before it).
    pub fn merge(graphs: &[&Dag]) -> Result<Self, BatchingError> {
        if graphs.is_empty() {
            return Err(BatchingError::EmptyInput);
        }
        let per_graph: Vec<TopoBatches> = graphs.iter().map(|g| Self::compute(g)).collect();
        Ok(Self::merge_batchings(&per_graph))
    }

    pub(crate) fn merge_batchings(parts: &[TopoBatches]) -> Self {
        let depth = parts.iter().map(|b| b.len()).max().unwrap_or(0);
        let mut batches = vec![Vec::new(); depth];
        let mut batch_of = Vec::new();
        let mut offset = 0;
        for part in parts {
            for (i, batch) in part.batches.iter().enumerate() {
                batches[i].extend(batch.iter().map(|v| v + offset));
            }
            batch_of.extend_from_slice(&part.batch_of);
            offset += part.batch_of.len();
        }
        Self { batches, batch_of }
    }

    pub fn len(&self) -> usize {
        self.batches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.batches.is_empty()
    }

    pub fn batches(&self) -> &[Vec<NodeId>] {
        &self.batches
    }

    pub fn batch(&self, i: usize) -> &[NodeId] {
        &self.batches[i]
    }

    /// Index of the batch containing `v`.
    pub fn batch_of(&self, v: NodeId) -> usize {
        self.batch_of[v]
    }

    pub fn num_nodes(&self) -> usize {
        self.batch_of.len()
    }

    pub fn max_width(&self) -> usize {
        self.batches.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = &[NodeId]> {
        self.batches.iter().map(Vec::as_slice)
    }
}
