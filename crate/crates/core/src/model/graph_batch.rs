use std::ops::Range;

use super::ModelError;
use crate::batching::TopoBatches;
use crate::dag::{Dag, NodeId};

/// Several graphs processed together as one disjoint-union DAG.
///
/// The union's batches are the per-graph batches merged index by index.
#[derive(Debug, Clone)]
pub struct GraphBatch {
    union: Dag,
    ranges: Vec<Range<NodeId>>,
    batches: TopoBatches,
    reversed: Option<(Dag, TopoBatches)>,
}

impl GraphBatch {
    pub fn new(graphs: &[&Dag], with_reverse: bool) -> Result<Self, ModelError> {
        let batches = TopoBatches::merge(graphs)?;
        let (union, offsets) = Dag::disjoint_union(graphs)?;
        let ranges = offsets.iter().zip(graphs).map(|(&o, g)| o..o + g.num_nodes()).collect();
        let reversed = with_reverse.then(|| {
            let r = union.reverse();
            let b = TopoBatches::compute(&r);
            (r, b)
        });
        Ok(Self {
            union,
            ranges,
            batches,
            reversed,
        })
    }

    pub fn single(dag: &Dag, with_reverse: bool) -> Result<Self, ModelError> {
        Self::new(&[dag], with_reverse)
    }

    pub fn dag(&self) -> &Dag {
        &self.union
    }

    pub fn batches(&self) -> &TopoBatches {
        &self.batches
    }

    pub fn reversed(&self) -> Option<(&Dag, &TopoBatches)> {
        self.reversed.as_ref().map(|(d, b)| (d, b))
    }

    pub fn num_graphs(&self) -> usize {
        self.ranges.len()
    }

    /// Node ids of graph `k` inside the union.
    pub fn range(&self, k: usize) -> Range<NodeId> {
        self.ranges[k].clone()
    }

    pub fn targets_of(&self, k: usize) -> Vec<NodeId> {
        let r = self.range(k);
        self.union.targets().iter().copied().filter(|v| r.contains(v)).collect()
    }

    pub fn sources_of(&self, k: usize) -> Vec<NodeId> {
        let r = self.range(k);
        self.union.sources().iter().copied().filter(|v| r.contains(v)).collect()
    }
}
