//! Minimal message-passing baseline.
//!
//! Each layer reads the previous layer's states of the undirected
//! neighborhood: `h_v^l = tanh(h_v^{l-1} W1 + mean_{u in N(v)} h_u^{l-1} W2)`.
//! The graph output is a linear layer over the mean of the final states.
//! Information therefore travels one hop per layer.

use super::dagnn::affine;
use super::{BoundParams, GraphBatch, ModelError, MpnnConfig, ParamSet, ParamSpec};
use crate::dag::Dag;
use crate::numeric::{DenseArray, Shape, Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mpnn {
    config: MpnnConfig,
}

impl Mpnn {
    pub fn new(config: MpnnConfig) -> Result<Self, ModelError> {
        config.validate()?;
        Ok(Self { config })
    }

    pub fn config(&self) -> &MpnnConfig {
        &self.config
    }

    /// `input.W`, `input.b`, `mpnn<l>.W1`, `mpnn<l>.W2`, `readout.W`, `readout.b`.
    pub fn param_specs(&self) -> Vec<ParamSpec> {
        let c = &self.config;
        let d = c.hidden_dim;
        let mut specs = vec![
            ParamSpec::weight("input.W", Shape::Matrix(c.input_dim, d)),
            ParamSpec::bias("input.b", d),
        ];
        for l in 1..=c.num_layers {
            specs.push(ParamSpec::weight(format!("mpnn{l}.W1"), Shape::Matrix(d, d)));
            specs.push(ParamSpec::weight(format!("mpnn{l}.W2"), Shape::Matrix(d, d)));
        }
        specs.push(ParamSpec::weight("readout.W", Shape::Matrix(d, c.output.dim())));
        specs.push(ParamSpec::bias("readout.b", c.output.dim()));
        specs
    }

    pub fn init_params(&self, seed: u64) -> ParamSet {
        ParamSet::init(&self.param_specs(), self.config.hidden_dim, seed)
    }

    /// States for every layer; `result[l][v]` is `h_v^l`.
    pub fn node_states(&self, tape: &mut Tape, p: &BoundParams, dag: &Dag) -> Result<Vec<Vec<Var>>, ModelError> {
        if dag.feature_dim() != self.config.input_dim {
            return Err(ModelError::InputDim {
                expected: self.config.input_dim,
                actual: dag.feature_dim(),
            });
        }
        let (w, b) = (p.get("input.W")?, p.get("input.b")?);
        let h0 = (0..dag.num_nodes())
            .map(|v| {
                let x = tape.leaf(DenseArray::vector(dag.features(v).to_vec()));
                affine(tape, x, w, b)
            })
            .collect::<Result<Vec<_>, _>>()?;
        let mut layers = vec![h0];
        for l in 1..=self.config.num_layers {
            let w1 = p.get(&format!("mpnn{l}.W1"))?;
            let w2 = p.get(&format!("mpnn{l}.W2"))?;
            let prev = &layers[l - 1];
            let mut cur = Vec::with_capacity(dag.num_nodes());
            for v in 0..dag.num_nodes() {
                let neighbors: Vec<Var> = dag
                    .predecessors(v)
                    .iter()
                    .map(|&(u, _)| prev[u])
                    .chain(dag.successors(v).iter().map(|&u| prev[u]))
                    .collect();
                let mut pre = tape.vecmat(prev[v], w1)?;
                if !neighbors.is_empty() {
                    let mean = tape.mean_pool(&neighbors)?;
                    let msg = tape.vecmat(mean, w2)?;
                    pre = tape.add(pre, msg)?;
                }
                cur.push(tape.tanh(pre));
            }
            layers.push(cur);
        }
        Ok(layers)
    }

    pub fn forward(&self, tape: &mut Tape, p: &BoundParams, batch: &GraphBatch) -> Result<Vec<Var>, ModelError> {
        let layers = self.node_states(tape, p, batch.dag())?;
        let last = &layers[self.config.num_layers];
        let (w, b) = (p.get("readout.W")?, p.get("readout.b")?);
        (0..batch.num_graphs())
            .map(|k| {
                let nodes: Vec<Var> = batch.range(k).map(|v| last[v]).collect();
                let pooled = tape.mean_pool(&nodes)?;
                affine(tape, pooled, w, b)
            })
            .collect()
    }
}
