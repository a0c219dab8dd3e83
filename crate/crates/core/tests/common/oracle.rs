//! Plain `f64` reference implementation of the DAGNN forward pass.
//!
//! Node states are evaluated by memoized recursion over predecessors, one
//! node at a time, with no tape and no topological batches. It reads the
//! same named parameters as the library model.

#![allow(dead_code)]

use std::collections::HashMap;

use dagnn::model::{Aggregator, Combiner, DagnnConfig, ParamSet, ReadoutScope};
use dagnn::Dag;

fn param<'a>(p: &'a ParamSet, name: &str) -> &'a [f64] {
    p.get(name).unwrap_or_else(|| panic!("missing parameter {name}")).data()
}

/// `x W` for a row-major `W` with `x.len()` rows.
pub fn vecmat(x: &[f64], w: &[f64]) -> Vec<f64> {
    let cols = w.len() / x.len();
    (0..cols)
        .map(|j| x.iter().enumerate().map(|(i, xi)| xi * w[i * cols + j]).sum())
        .collect()
}

fn affine(x: &[f64], w: &[f64], b: &[f64]) -> Vec<f64> {
    vecmat(x, w).iter().zip(b).map(|(y, b)| y + b).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Softmax computed directly from the definition, shifted by the maximum.
pub fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|x| x / s).collect()
}

/// Attention weights of one node given its previous state and
/// `(predecessor state, edge type)` pairs.
pub fn attention(
    w1: &[f64],
    w2: &[f64],
    emb: Option<(&[f64], usize)>,
    h_prev: &[f64],
    preds: &[(Vec<f64>, usize)],
) -> Vec<f64> {
    let logits: Vec<f64> = preds
        .iter()
        .map(|(h, t)| {
            let mut z = dot(w1, h_prev) + dot(w2, h);
            if let Some((e, d)) = emb {
                z += dot(w1, &e[t * d..(t + 1) * d]);
            }
            z
        })
        .collect();
    softmax(&logits)
}

pub fn gru(p: &ParamSet, prefix: &str, x: &[f64], s: &[f64]) -> Vec<f64> {
    let g = |n: &str| param(p, &format!("{prefix}.{n}"));
    let d = s.len();
    let pre = |w: &str, u: &str, b: &str, state: &[f64]| -> Vec<f64> {
        let a = vecmat(x, g(w));
        let c = vecmat(state, g(u));
        (0..d).map(|i| a[i] + c[i] + g(b)[i]).collect()
    };
    let z: Vec<f64> = pre("Wz", "Uz", "bz", s).into_iter().map(sigmoid).collect();
    let r: Vec<f64> = pre("Wr", "Ur", "br", s).into_iter().map(sigmoid).collect();
    let rs: Vec<f64> = (0..d).map(|i| r[i] * s[i]).collect();
    let n: Vec<f64> = pre("Wn", "Un", "bn", &rs).into_iter().map(f64::tanh).collect();
    (0..d).map(|i| (1.0 - z[i]) * n[i] + z[i] * s[i]).collect()
}

struct Direction<'a> {
    dag: &'a Dag,
    tag: &'static str,
    config: &'a DagnnConfig,
    params: &'a ParamSet,
    h0: &'a [Vec<f64>],
    memo: HashMap<(usize, usize), Vec<f64>>,
}

impl Direction<'_> {
    fn state(&mut self, layer: usize, v: usize) -> Vec<f64> {
        if layer == 0 {
            return self.h0[v].clone();
        }
        if let Some(h) = self.memo.get(&(layer, v)) {
            return h.clone();
        }
        let d = self.config.hidden_dim;
        let (p, t) = (self.params, self.tag);
        let h_prev = self.state(layer - 1, v);
        let preds: Vec<(Vec<f64>, usize)> = self
            .dag
            .predecessors(v)
            .to_vec()
            .into_iter()
            .map(|(u, ty)| (self.state(layer, u), ty))
            .collect();
        let mut m = vec![0.0; d];
        match self.config.aggregator {
            Aggregator::Attention | Aggregator::AttentionEdge => {
                if !preds.is_empty() {
                    let emb = (self.config.aggregator == Aggregator::AttentionEdge)
                        .then(|| (param(p, &format!("edge_emb.{t}")), d));
                    let w1 = param(p, &format!("layer{layer}.{t}.w1"));
                    let w2 = param(p, &format!("layer{layer}.{t}.w2"));
                    let alpha = attention(w1, w2, emb, &h_prev, &preds);
                    for (a, (h, _)) in alpha.iter().zip(&preds) {
                        for i in 0..d {
                            m[i] += a * h[i];
                        }
                    }
                }
            }
            Aggregator::GatedSum => {
                let g = |n: &str| param(p, &format!("layer{layer}.{t}.{n}"));
                for (h, _) in &preds {
                    let gate = affine(h, g("gate_W"), g("gate_b"));
                    let map = affine(h, g("map_W"), g("map_b"));
                    for i in 0..d {
                        m[i] += sigmoid(gate[i]) * map[i];
                    }
                }
            }
        }
        let h = match self.config.combiner {
            Combiner::Gru => gru(p, &format!("gru{layer}.{t}"), &h_prev, &m),
            Combiner::FullyConnected => {
                let joined: Vec<f64> = h_prev.iter().chain(&m).copied().collect();
                affine(
                    &joined,
                    param(p, &format!("fc{layer}.{t}.W")),
                    param(p, &format!("fc{layer}.{t}.b")),
                )
                .into_iter()
                .map(f64::tanh)
                .collect()
            }
        };
        self.memo.insert((layer, v), h.clone());
        h
    }

    fn pooled(&mut self, nodes: &[usize]) -> Vec<f64> {
        let rows: Vec<Vec<f64>> = nodes
            .iter()
            .map(|&v| (0..=self.config.num_layers).flat_map(|l| self.state(l, v)).collect())
            .collect();
        (0..rows[0].len())
            .map(|i| rows.iter().map(|r| r[i]).fold(f64::NEG_INFINITY, f64::max))
            .collect()
    }
}

/// Node state `h_v^layer` in the forward direction.
pub fn dagnn_state(dag: &Dag, params: &ParamSet, config: &DagnnConfig, layer: usize, v: usize) -> Vec<f64> {
    let h0 = input_states(dag, params);
    let mut dir = Direction {
        dag,
        tag: "fwd",
        config,
        params,
        h0: &h0,
        memo: HashMap::new(),
    };
    dir.state(layer, v)
}

fn input_states(dag: &Dag, params: &ParamSet) -> Vec<Vec<f64>> {
    (0..dag.num_nodes())
        .map(|v| affine(dag.features(v), param(params, "input.W"), param(params, "input.b")))
        .collect()
}

/// Model output for one graph.
pub fn dagnn_forward(dag: &Dag, params: &ParamSet, config: &DagnnConfig) -> Vec<f64> {
    let h0 = input_states(dag, params);
    let all: Vec<usize> = (0..dag.num_nodes()).collect();
    let mut fwd = Direction {
        dag,
        tag: "fwd",
        config,
        params,
        h0: &h0,
        memo: HashMap::new(),
    };
    let fwd_nodes = match config.readout {
        ReadoutScope::Targets => dag.targets().to_vec(),
        ReadoutScope::All => all.clone(),
    };
    let mut pooled = fwd.pooled(&fwd_nodes);
    if config.bidirectional {
        let rev_dag = dag.reverse();
        let mut rev = Direction {
            dag: &rev_dag,
            tag: "rev",
            config,
            params,
            h0: &h0,
            memo: HashMap::new(),
        };
        // the targets of the reversed graph are the sources of the original
        let rev_nodes = match config.readout {
            ReadoutScope::Targets => dag.sources().to_vec(),
            ReadoutScope::All => all,
        };
        pooled.extend(rev.pooled(&rev_nodes));
    }
    affine(&pooled, param(params, "readout.W"), param(params, "readout.b"))
}
