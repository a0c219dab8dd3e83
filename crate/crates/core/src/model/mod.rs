//! Graph models: DAGNN with its ablation variants, and the MPNN baseline.

mod config;
mod dagnn;
mod graph_batch;
mod mpnn;
mod params;

pub use config::{Aggregator, Combiner, DagnnConfig, Direction, MpnnConfig, Output, ReadoutScope};
pub use dagnn::{
    aggregate_attention, aggregate_gated_sum, attention_weights, combine_fc, combine_gru, model_forward,
    AggregatorParams, AttentionParams, CombinerParams, Dagnn, FcParams, ForwardTrace, GatedSumParams, GruParams,
    NodeStates,
};
pub use graph_batch::GraphBatch;
pub use mpnn::Mpnn;
pub use params::{BoundParams, Init, ParamSet, ParamSpec};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::batching::BatchingError;
use crate::dag::DagError;
use crate::numeric::{NumericError, Tape, Var};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error(transparent)]
    Numeric(#[from] NumericError),
    #[error(transparent)]
    Dag(#[from] DagError),
    #[error(transparent)]
    Batching(#[from] BatchingError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("missing parameter {0}")]
    MissingParam(String),
    #[error("graph features have dimension {actual}, model expects {expected}")]
    InputDim { expected: usize, actual: usize },
    #[error("edge type {edge_type} out of range for {num_edge_types} type(s)")]
    EdgeType { edge_type: usize, num_edge_types: usize },
}

/// A model architecture together with its hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ModelSpec {
    Dagnn(DagnnConfig),
    Mpnn(MpnnConfig),
}

impl ModelSpec {
    pub fn output(&self) -> Output {
        match self {
            ModelSpec::Dagnn(c) => c.output,
            ModelSpec::Mpnn(c) => c.output,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        match self {
            ModelSpec::Dagnn(c) => c.validate(),
            ModelSpec::Mpnn(c) => c.validate(),
        }
    }

    pub fn param_specs(&self) -> Result<Vec<ParamSpec>, ModelError> {
        Ok(match self {
            ModelSpec::Dagnn(c) => Dagnn::new(*c)?.param_specs(),
            ModelSpec::Mpnn(c) => Mpnn::new(*c)?.param_specs(),
        })
    }

    pub fn init_params(&self, seed: u64) -> Result<ParamSet, ModelError> {
        Ok(match self {
            ModelSpec::Dagnn(c) => Dagnn::new(*c)?.init_params(seed),
            ModelSpec::Mpnn(c) => Mpnn::new(*c)?.init_params(seed),
        })
    }

    /// Whether graph batches need the reversed graphs.
    pub fn needs_reverse(&self) -> bool {
        matches!(self, ModelSpec::Dagnn(c) if c.bidirectional)
    }

    pub fn forward(&self, tape: &mut Tape, params: &BoundParams, batch: &GraphBatch) -> Result<Vec<Var>, ModelError> {
        match self {
            ModelSpec::Dagnn(c) => Dagnn::new(*c)?.forward(tape, params, batch),
            ModelSpec::Mpnn(c) => Mpnn::new(*c)?.forward(tape, params, batch),
        }
    }

    /// Forward pass over a list of graphs, returning plain output vectors.
    pub fn predict(&self, params: &ParamSet, graphs: &[&crate::dag::Dag]) -> Result<Vec<Vec<f64>>, ModelError> {
        let batch = GraphBatch::new(graphs, self.needs_reverse())?;
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape);
        let outs = self.forward(&mut tape, &bound, &batch)?;
        Ok(outs.iter().map(|&o| tape.value(o).data().to_vec()).collect())
    }
}
