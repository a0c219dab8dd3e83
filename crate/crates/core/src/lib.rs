//! Neural networks on directed acyclic graphs that follow the partial order:
//! every node is updated from the current-layer states of its direct
//! predecessors, scheduled in topological batches.

pub mod ablation;
pub mod batching;
pub mod checkpoint;
pub mod dag;
pub mod datasets;
pub mod metrics;
pub mod model;
pub mod numeric;
pub mod train;

pub use batching::TopoBatches;
pub use dag::{Dag, DagError, Edge, NodeId};
