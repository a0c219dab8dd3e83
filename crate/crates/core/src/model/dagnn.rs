//! The DAGNN forward pass.
//!
//! Node states are updated in topological batches. At layer `l` a node
//! aggregates the layer-`l` states of its direct predecessors (already
//! computed, since predecessors sit in earlier batches) together with its own
//! layer-`l-1` state, then a combiner produces its layer-`l` state. A layer
//! finishes over all batches before the next one starts. The readout
//! max-pools the per-node concatenation of all layer states over the targets
//! (and, for the reverse direction, over the sources) and applies a linear
//! layer.

use super::{Aggregator, Combiner, ReadoutScope};
use super::{BoundParams, DagnnConfig, Direction, GraphBatch, ModelError, ParamSet, ParamSpec};
use crate::batching::TopoBatches;
use crate::dag::{Dag, NodeId};
use crate::numeric::{DenseArray, Shape, Tape, Var};

/// Per-layer node states for one direction; `layers[l][v]` is `h_v^l`.
#[derive(Debug, Clone)]
pub struct NodeStates {
    pub layers: Vec<Vec<Var>>,
}

impl NodeStates {
    pub fn state(&self, layer: usize, v: NodeId) -> Var {
        self.layers[layer][v]
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len() - 1
    }
}

/// Attention weights for one layer and direction. `edge_emb` is present only
/// when edge types enter the logits; the edge term reuses `w1`.
#[derive(Debug, Clone, Copy)]
pub struct AttentionParams {
    pub w1: Var,
    pub w2: Var,
    pub edge_emb: Option<Var>,
}

#[derive(Debug, Clone, Copy)]
pub struct GatedSumParams {
    pub gate_w: Var,
    pub gate_b: Var,
    pub map_w: Var,
    pub map_b: Var,
}

#[derive(Debug, Clone, Copy)]
pub struct GruParams {
    pub wz: Var,
    pub uz: Var,
    pub bz: Var,
    pub wr: Var,
    pub ur: Var,
    pub br: Var,
    pub wn: Var,
    pub un: Var,
    pub bn: Var,
}

#[derive(Debug, Clone, Copy)]
pub struct FcParams {
    pub w: Var,
    pub b: Var,
}

#[derive(Debug, Clone, Copy)]
pub enum AggregatorParams {
    Attention(AttentionParams),
    GatedSum(GatedSumParams),
}

#[derive(Debug, Clone, Copy)]
pub enum CombinerParams {
    Gru(GruParams),
    Fc(FcParams),
}

/// `x W + b`.
pub(crate) fn affine(tape: &mut Tape, x: Var, w: Var, b: Var) -> Result<Var, ModelError> {
    let y = tape.vecmat(x, w)?;
    Ok(tape.add(y, b)?)
}

fn zeros(tape: &mut Tape, d: usize) -> Var {
    tape.leaf(DenseArray::zeros(Shape::Vector(d)))
}

/// Softmax attention weights over the predecessors, or `None` for an empty
/// predecessor set.
///
/// Logits are `w1.h_prev + w2.h_u`, plus `w1.y_type` when edge embeddings
/// are supplied.
pub fn attention_weights(
    tape: &mut Tape,
    p: &AttentionParams,
    h_prev: Var,
    preds: &[(Var, usize)],
) -> Result<Option<Var>, ModelError> {
    if preds.is_empty() {
        return Ok(None);
    }
    let states: Vec<Var> = preds.iter().map(|&(h, _)| h).collect();
    let keys = tape.stack_rows(&states)?;
    let key_logits = tape.matvec(keys, p.w2)?;
    let query = tape.dot(p.w1, h_prev)?;
    let mut logits = tape.add_broadcast(key_logits, query)?;
    if let Some(emb) = p.edge_emb {
        let types: Vec<usize> = preds.iter().map(|&(_, t)| t).collect();
        let edges = tape.gather_rows(emb, &types)?;
        let edge_logits = tape.matvec(edges, p.w1)?;
        logits = tape.add(logits, edge_logits)?;
    }
    Ok(Some(tape.softmax(logits)?))
}

/// Attention-weighted sum of predecessor states; zero when there are none.
pub fn aggregate_attention(
    tape: &mut Tape,
    p: &AttentionParams,
    h_prev: Var,
    preds: &[(Var, usize)],
) -> Result<Var, ModelError> {
    let d = tape.value(h_prev).len();
    let Some(alpha) = attention_weights(tape, p, h_prev, preds)? else {
        return Ok(zeros(tape, d));
    };
    let states: Vec<Var> = preds.iter().map(|&(h, _)| h).collect();
    let values = tape.stack_rows(&states)?;
    Ok(tape.vecmat(alpha, values)?)
}

/// `sum_u sigmoid(h_u G + g) * (h_u M + m)`; ignores `h_prev`.
pub fn aggregate_gated_sum(
    tape: &mut Tape,
    p: &GatedSumParams,
    h_prev: Var,
    preds: &[(Var, usize)],
) -> Result<Var, ModelError> {
    let d = tape.value(h_prev).len();
    let mut total: Option<Var> = None;
    for &(h, _) in preds {
        let g = affine(tape, h, p.gate_w, p.gate_b)?;
        let g = tape.sigmoid(g);
        let t = affine(tape, h, p.map_w, p.map_b)?;
        let term = tape.mul(g, t)?;
        total = Some(match total {
            None => term,
            Some(acc) => tape.add(acc, term)?,
        });
    }
    Ok(total.unwrap_or_else(|| zeros(tape, d)))
}

/// GRU cell with the previous node state as input and the message as the
/// recurrent state:
///
/// ```text
/// z  = sigmoid(x Wz + s Uz + bz)
/// r  = sigmoid(x Wr + s Ur + br)
/// n  = tanh(x Wn + (r * s) Un + bn)
/// h' = (1 - z) * n + z * s
/// ```
pub fn combine_gru(tape: &mut Tape, p: &GruParams, input: Var, state: Var) -> Result<Var, ModelError> {
    let gate = |tape: &mut Tape, w: Var, u: Var, b: Var, s: Var| -> Result<Var, ModelError> {
        let xw = tape.vecmat(input, w)?;
        let su = tape.vecmat(s, u)?;
        let sum = tape.add(xw, su)?;
        Ok(tape.add(sum, b)?)
    };
    let z = gate(tape, p.wz, p.uz, p.bz, state)?;
    let z = tape.sigmoid(z);
    let r = gate(tape, p.wr, p.ur, p.br, state)?;
    let r = tape.sigmoid(r);
    let rs = tape.mul(r, state)?;
    let n = gate(tape, p.wn, p.un, p.bn, rs)?;
    let n = tape.tanh(n);
    let keep = tape.rsub_scalar(1.0, z);
    let a = tape.mul(keep, n)?;
    let b = tape.mul(z, state)?;
    Ok(tape.add(a, b)?)
}

/// `tanh([h_prev, m] W + b)`.
pub fn combine_fc(tape: &mut Tape, p: &FcParams, h_prev: Var, message: Var) -> Result<Var, ModelError> {
    let joined = tape.concat(&[h_prev, message])?;
    let y = affine(tape, joined, p.w, p.b)?;
    Ok(tape.tanh(y))
}

/// The DAGNN model for one configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dagnn {
    config: DagnnConfig,
}

/// Everything computed by one forward pass over a [`GraphBatch`].
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub forward: NodeStates,
    pub reverse: Option<NodeStates>,
    /// One output per graph: `k` logits or a single scalar.
    pub outputs: Vec<Var>,
}

impl Dagnn {
    pub fn new(config: DagnnConfig) -> Result<Self, ModelError> {
        config.validate()?;
        Ok(Self { config })
    }

    pub fn config(&self) -> &DagnnConfig {
        &self.config
    }

    /// Every trainable array with its name and shape.
    ///
    /// Names: `input.W`, `input.b`; per direction `edge_emb.<dir>` (edge-aware
    /// attention only); per layer `l` and direction `layer<l>.<dir>.w1`/`w2`
    /// (attention) or `layer<l>.<dir>.gate_W`/`gate_b`/`map_W`/`map_b`
    /// (gated sum); `gru<l>.<dir>.Wz`..`bn` or `fc<l>.<dir>.W`/`b`;
    /// `readout.W`, `readout.b`.
    pub fn param_specs(&self) -> Vec<ParamSpec> {
        let c = &self.config;
        let d = c.hidden_dim;
        let sq = Shape::Matrix(d, d);
        let mut specs = vec![
            ParamSpec::weight("input.W", Shape::Matrix(c.input_dim, d)),
            ParamSpec::bias("input.b", d),
        ];
        for &dir in c.directions() {
            let t = dir.tag();
            if c.aggregator == Aggregator::AttentionEdge {
                specs.push(ParamSpec::weight(
                    format!("edge_emb.{t}"),
                    Shape::Matrix(c.num_edge_types, d),
                ));
            }
            for l in 1..=c.num_layers {
                match c.aggregator {
                    Aggregator::Attention | Aggregator::AttentionEdge => {
                        specs.push(ParamSpec::weight(format!("layer{l}.{t}.w1"), Shape::Vector(d)));
                        specs.push(ParamSpec::weight(format!("layer{l}.{t}.w2"), Shape::Vector(d)));
                    }
                    Aggregator::GatedSum => {
                        specs.push(ParamSpec::weight(format!("layer{l}.{t}.gate_W"), sq));
                        specs.push(ParamSpec::bias(format!("layer{l}.{t}.gate_b"), d));
                        specs.push(ParamSpec::weight(format!("layer{l}.{t}.map_W"), sq));
                        specs.push(ParamSpec::bias(format!("layer{l}.{t}.map_b"), d));
                    }
                }
                match c.combiner {
                    Combiner::Gru => {
                        for gate in ["z", "r", "n"] {
                            specs.push(ParamSpec::weight(format!("gru{l}.{t}.W{gate}"), sq));
                            specs.push(ParamSpec::weight(format!("gru{l}.{t}.U{gate}"), sq));
                            specs.push(ParamSpec::bias(format!("gru{l}.{t}.b{gate}"), d));
                        }
                    }
                    Combiner::FullyConnected => {
                        specs.push(ParamSpec::weight(format!("fc{l}.{t}.W"), Shape::Matrix(2 * d, d)));
                        specs.push(ParamSpec::bias(format!("fc{l}.{t}.b"), d));
                    }
                }
            }
        }
        specs.push(ParamSpec::weight(
            "readout.W",
            Shape::Matrix(c.readout_input_dim(), c.output.dim()),
        ));
        specs.push(ParamSpec::bias("readout.b", c.output.dim()));
        specs
    }

    pub fn init_params(&self, seed: u64) -> ParamSet {
        ParamSet::init(&self.param_specs(), self.config.hidden_dim, seed)
    }

    fn aggregator_params(&self, p: &BoundParams, l: usize, dir: Direction) -> Result<AggregatorParams, ModelError> {
        let t = dir.tag();
        Ok(match self.config.aggregator {
            Aggregator::Attention | Aggregator::AttentionEdge => AggregatorParams::Attention(AttentionParams {
                w1: p.get(&format!("layer{l}.{t}.w1"))?,
                w2: p.get(&format!("layer{l}.{t}.w2"))?,
                edge_emb: match self.config.aggregator {
                    Aggregator::AttentionEdge => Some(p.get(&format!("edge_emb.{t}"))?),
                    _ => None,
                },
            }),
            Aggregator::GatedSum => AggregatorParams::GatedSum(GatedSumParams {
                gate_w: p.get(&format!("layer{l}.{t}.gate_W"))?,
                gate_b: p.get(&format!("layer{l}.{t}.gate_b"))?,
                map_w: p.get(&format!("layer{l}.{t}.map_W"))?,
                map_b: p.get(&format!("layer{l}.{t}.map_b"))?,
            }),
        })
    }

    fn combiner_params(&self, p: &BoundParams, l: usize, dir: Direction) -> Result<CombinerParams, ModelError> {
        let t = dir.tag();
        let g = |name: &str| p.get(&format!("gru{l}.{t}.{name}"));
        Ok(match self.config.combiner {
            Combiner::Gru => CombinerParams::Gru(GruParams {
                wz: g("Wz")?,
                uz: g("Uz")?,
                bz: g("bz")?,
                wr: g("Wr")?,
                ur: g("Ur")?,
                br: g("br")?,
                wn: g("Wn")?,
                un: g("Un")?,
                bn: g("bn")?,
            }),
            Combiner::FullyConnected => CombinerParams::Fc(FcParams {
                w: p.get(&format!("fc{l}.{t}.W"))?,
                b: p.get(&format!("fc{l}.{t}.b"))?,
            }),
        })
    }

    /// Projects raw node features to the hidden width; these are the
    /// layer-0 states of both directions.
    pub fn input_states(&self, tape: &mut Tape, p: &BoundParams, dag: &Dag) -> Result<Vec<Var>, ModelError> {
        if dag.feature_dim() != self.config.input_dim {
            return Err(ModelError::InputDim {
                expected: self.config.input_dim,
                actual: dag.feature_dim(),
            });
        }
        let (w, b) = (p.get("input.W")?, p.get("input.b")?);
        (0..dag.num_nodes())
            .map(|v| {
                let x = tape.leaf(DenseArray::vector(dag.features(v).to_vec()));
                affine(tape, x, w, b)
            })
            .collect()
    }

    /// Runs all layers over `dag` in batch order. For the reverse direction
    /// pass the reversed graph and its batches.
    pub fn forward_direction(
        &self,
        tape: &mut Tape,
        p: &BoundParams,
        dag: &Dag,
        batches: &TopoBatches,
        h0: Vec<Var>,
        dir: Direction,
    ) -> Result<NodeStates, ModelError> {
        if batches.num_nodes() != dag.num_nodes() || h0.len() != dag.num_nodes() {
            return Err(ModelError::Config(
                "batches or initial states do not match the graph".into(),
            ));
        }
        if let Some(t) = dag.max_edge_type() {
            if t >= self.config.num_edge_types {
                return Err(ModelError::EdgeType {
                    edge_type: t,
                    num_edge_types: self.config.num_edge_types,
                });
            }
        }
        let mut layers = vec![h0];
        for l in 1..=self.config.num_layers {
            let aggregator = self.aggregator_params(p, l, dir)?;
            let combiner = self.combiner_params(p, l, dir)?;
            let prev = &layers[l - 1];
            let mut cur: Vec<Option<Var>> = vec![None; dag.num_nodes()];
            for batch in batches.iter() {
                for &v in batch {
                    let preds: Vec<(Var, usize)> = dag
                        .predecessors(v)
                        .iter()
                        .map(|&(u, t)| (cur[u].expect("predecessor in an earlier batch"), t))
                        .collect();
                    let message = match &aggregator {
                        AggregatorParams::Attention(a) => aggregate_attention(tape, a, prev[v], &preds)?,
                        AggregatorParams::GatedSum(g) => aggregate_gated_sum(tape, g, prev[v], &preds)?,
                    };
                    let h = match &combiner {
                        CombinerParams::Gru(g) => combine_gru(tape, g, prev[v], message)?,
                        CombinerParams::Fc(f) => combine_fc(tape, f, prev[v], message)?,
                    };
                    cur[v] = Some(h);
                }
            }
            layers.push(cur.into_iter().map(|h| h.expect("every node visited")).collect());
        }
        Ok(NodeStates { layers })
    }

    /// Max-pools concatenated layer states over `nodes`.
    fn pool(&self, tape: &mut Tape, states: &NodeStates, nodes: &[NodeId]) -> Result<Var, ModelError> {
        let rows = nodes
            .iter()
            .map(|&v| {
                let per_layer: Vec<Var> = states.layers.iter().map(|layer| layer[v]).collect();
                tape.concat(&per_layer)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(tape.max_pool(&rows)?)
    }

    /// Graph-level output for graph `k` of `batch`.
    pub fn readout(
        &self,
        tape: &mut Tape,
        p: &BoundParams,
        batch: &GraphBatch,
        k: usize,
        forward: &NodeStates,
        reverse: Option<&NodeStates>,
    ) -> Result<Var, ModelError> {
        let (fwd_nodes, rev_nodes): (Vec<NodeId>, Vec<NodeId>) = match self.config.readout {
            ReadoutScope::Targets => (batch.targets_of(k), batch.sources_of(k)),
            ReadoutScope::All => (batch.range(k).collect(), batch.range(k).collect()),
        };
        let mut pooled = self.pool(tape, forward, &fwd_nodes)?;
        if self.config.bidirectional {
            let rev = reverse.ok_or_else(|| ModelError::Config("reverse states missing".into()))?;
            let r = self.pool(tape, rev, &rev_nodes)?;
            pooled = tape.concat(&[pooled, r])?;
        }
        affine(tape, pooled, p.get("readout.W")?, p.get("readout.b")?)
    }

    pub fn forward_trace(
        &self,
        tape: &mut Tape,
        p: &BoundParams,
        batch: &GraphBatch,
    ) -> Result<ForwardTrace, ModelError> {
        let h0 = self.input_states(tape, p, batch.dag())?;
        let forward = self.forward_direction(tape, p, batch.dag(), batch.batches(), h0.clone(), Direction::Forward)?;
        let reverse = if self.config.bidirectional {
            let (dag, batches) = batch
                .reversed()
                .ok_or_else(|| ModelError::Config("graph batch built without reverse graphs".into()))?;
            Some(self.forward_direction(tape, p, dag, batches, h0, Direction::Reverse)?)
        } else {
            None
        };
        let outputs = (0..batch.num_graphs())
            .map(|k| self.readout(tape, p, batch, k, &forward, reverse.as_ref()))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ForwardTrace {
            forward,
            reverse,
            outputs,
        })
    }

    pub fn forward(&self, tape: &mut Tape, p: &BoundParams, batch: &GraphBatch) -> Result<Vec<Var>, ModelError> {
        Ok(self.forward_trace(tape, p, batch)?.outputs)
    }
}

/// Output vector (logits or scalar) for a single graph.
pub fn model_forward(dag: &Dag, params: &ParamSet, config: &DagnnConfig) -> Result<Vec<f64>, ModelError> {
    let model = Dagnn::new(*config)?;
    let batch = GraphBatch::single(dag, config.bidirectional)?;
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape);
    let out = model.forward(&mut tape, &bound, &batch)?;
    Ok(tape.value(out[0]).data().to_vec())
}
