use serde::{Deserialize, Serialize};

use super::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregator {
    /// Additive attention over predecessors.
    Attention,
    /// Additive attention with an edge-type term in the logits.
    AttentionEdge,
    /// Gated sum of mapped predecessor states.
    GatedSum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Combiner {
    Gru,
    #[serde(rename = "fc")]
    FullyConnected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReadoutScope {
    /// Pool over targets (and over sources for the reverse direction).
    Targets,
    /// Pool over every node in both directions.
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Output {
    /// `k` logits for classification.
    Classes(usize),
    /// A single regression value.
    Scalar,
}

impl Output {
    pub fn dim(self) -> usize {
        match self {
            Output::Classes(k) => k,
            Output::Scalar => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    Forward,
    Reverse,
}

impl Direction {
    /// Tag used in parameter names.
    pub fn tag(self) -> &'static str {
        match self {
            Direction::Forward => "fwd",
            Direction::Reverse => "rev",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DagnnConfig {
    pub num_layers: usize,
    pub hidden_dim: usize,
    pub input_dim: usize,
    pub num_edge_types: usize,
    pub bidirectional: bool,
    pub aggregator: Aggregator,
    pub combiner: Combiner,
    pub readout: ReadoutScope,
    pub output: Output,
}

impl DagnnConfig {
    /// Two-layer unidirectional model with edge-aware attention, GRU
    /// combiner and targets-only readout.
    pub fn new(input_dim: usize, hidden_dim: usize, num_edge_types: usize, output: Output) -> Self {
        Self {
            num_layers: 2,
            hidden_dim,
            input_dim,
            num_edge_types,
            bidirectional: false,
            aggregator: Aggregator::AttentionEdge,
            combiner: Combiner::Gru,
            readout: ReadoutScope::Targets,
            output,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |what: &str| Err(ModelError::Config(format!("{what} must be at least 1")));
        if self.num_layers == 0 {
            return bad("num_layers");
        }
        if self.hidden_dim == 0 {
            return bad("hidden_dim");
        }
        if self.input_dim == 0 {
            return bad("input_dim");
        }
        if self.num_edge_types == 0 {
            return bad("num_edge_types");
        }
        if self.output.dim() == 0 {
            return bad("output dimension");
        }
        Ok(())
    }

    pub fn directions(&self) -> &'static [Direction] {
        if self.bidirectional {
            &[Direction::Forward, Direction::Reverse]
        } else {
            &[Direction::Forward]
        }
    }

    /// Width of the pooled vector fed to the readout layer.
    pub fn readout_input_dim(&self) -> usize {
        self.directions().len() * (self.num_layers + 1) * self.hidden_dim
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MpnnConfig {
    pub num_layers: usize,
    pub hidden_dim: usize,
    pub input_dim: usize,
    pub output: Output,
}

impl MpnnConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.num_layers == 0 || self.hidden_dim == 0 || self.input_dim == 0 || self.output.dim() == 0 {
            return Err(ModelError::Config(
                "MPNN layers and dimensions must be at least 1".into(),
            ));
        }
        Ok(())
    }
}
