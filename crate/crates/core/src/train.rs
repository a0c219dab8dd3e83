//! Mini-batch training with Adam, global-norm gradient clipping and early
//! stopping on a validation metric.
//!
//! Each optimizer step treats its data batch as one disjoint-union DAG and
//! averages the per-graph losses (cross-entropy for class outputs, squared
//! error for scalar outputs).

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datasets::{Label, Sample};
use crate::metrics::{self, Metrics};
use crate::model::{BoundParams, GraphBatch, ModelError, ModelSpec, Output, ParamSet};
use crate::numeric::{grad_check, DenseArray, Tape, Var};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("non-finite loss at epoch {epoch}, step {step}")]
    NonFiniteLoss { epoch: usize, step: usize },
    #[error("training set is empty")]
    EmptyDataset,
    #[error("sample {index}: {message}")]
    Label { index: usize, message: String },
    #[error("invalid training configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Stop after this many epochs without a validation improvement.
    pub patience: usize,
    /// Maximum global L2 norm of a step's gradient; non-positive disables clipping.
    pub grad_clip: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            max_epochs: 100,
            patience: 10,
            grad_clip: 0.25,
            batch_size: 32,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<(), TrainError> {
        if self.learning_rate < 0.0 || !self.learning_rate.is_finite() {
            return Err(TrainError::Config(
                "learning rate must be finite and non-negative".into(),
            ));
        }
        if self.patience == 0 || self.batch_size == 0 {
            return Err(TrainError::Config("patience and batch size must be at least 1".into()));
        }
        Ok(())
    }
}

/// One line of the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Accuracy for class outputs, RMSE for scalar outputs.
    pub val_metric: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the best validation metric.
    pub params: ParamSet,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
}

/// Adam with the usual defaults (beta1 0.9, beta2 0.999, eps 1e-8).
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: i32,
    m: ParamSet,
    v: ParamSet,
}

impl Adam {
    pub fn new(lr: f64, params: &ParamSet) -> Self {
        let zeros = |p: &ParamSet| {
            let mut z = ParamSet::default();
            for (k, a) in p.iter() {
                z.insert(k, DenseArray::zeros(a.shape()));
            }
            z
        };
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: zeros(params),
            v: zeros(params),
        }
    }

    pub fn update(&mut self, params: &mut ParamSet, grads: &ParamSet) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        for (name, p) in params.iter_mut() {
            let g = grads.get(name).expect("gradient for every parameter").data();
            let m = self.m.get_mut(name).expect("moment").data_mut();
            let v = self.v.get_mut(name).expect("moment").data_mut();
            for (((p, &g), m), v) in p.data_mut().iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
            }
        }
    }
}

/// Rescales `grads` in place so their global norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut ParamSet, max_norm: f64) -> f64 {
    let norm = grads.iter().map(|(_, g)| g.squared_norm()).sum::<f64>().sqrt();
    if max_norm > 0.0 && norm > max_norm {
        let s = max_norm / norm;
        for (_, g) in grads.iter_mut() {
            g.data_mut().iter_mut().for_each(|x| *x *= s);
        }
    }
    norm
}

fn check_labels(spec: &ModelSpec, samples: &[Sample]) -> Result<(), TrainError> {
    for (index, s) in samples.iter().enumerate() {
        match (spec.output(), s.label) {
            (Output::Classes(k), Label::Class(c)) if c >= k => {
                return Err(TrainError::Label {
                    index,
                    message: format!("class {c} out of range for {k} classes"),
                })
            }
            (Output::Classes(_), Label::Scalar(_)) => {
                return Err(TrainError::Label {
                    index,
                    message: "scalar label for a classification model".into(),
                })
            }
            _ => {}
        }
    }
    Ok(())
}

/// Records the mean loss of `samples` on `tape`; returns the loss and the
/// per-graph outputs.
pub fn batch_loss(
    spec: &ModelSpec,
    tape: &mut Tape,
    params: &BoundParams,
    samples: &[&Sample],
) -> Result<(Var, Vec<Var>), ModelError> {
    let graphs: Vec<_> = samples.iter().map(|s| &s.dag).collect();
    let batch = GraphBatch::new(&graphs, spec.needs_reverse())?;
    let outputs = spec.forward(tape, params, &batch)?;
    let mut total: Option<Var> = None;
    for (s, &out) in samples.iter().zip(&outputs) {
        let loss = match (spec.output(), s.label) {
            (Output::Classes(_), Label::Class(c)) => tape.cross_entropy(out, c)?,
            (Output::Classes(_), Label::Scalar(_)) => {
                return Err(ModelError::Config("scalar label for a classification model".into()))
            }
            (Output::Scalar, label) => {
                let y = tape.leaf(DenseArray::scalar(label.as_f64()));
                let diff = tape.sub(out, y)?;
                tape.dot(diff, diff)?
            }
        };
        total = Some(match total {
            None => loss,
            Some(t) => tape.add(t, loss)?,
        });
    }
    let total = total.ok_or_else(|| ModelError::Config("empty batch".into()))?;
    Ok((tape.scale(total, 1.0 / samples.len() as f64), outputs))
}

/// Largest relative error between the reverse-mode gradient of the mean
/// loss over `samples` and central finite differences with `step`, across
/// every parameter coordinate.
pub fn loss_grad_check(spec: &ModelSpec, params: &ParamSet, samples: &[&Sample], step: f64) -> Result<f64, ModelError> {
    let names: Vec<String> = params.names().map(str::to_string).collect();
    let arrays: Vec<DenseArray> = params.iter().map(|(_, a)| a.clone()).collect();
    grad_check(
        |tape: &mut Tape, vars: &[Var]| {
            let bound = BoundParams::from_vars(names.iter().cloned().zip(vars.iter().copied()));
            Ok(batch_loss(spec, tape, &bound, samples)?.0)
        },
        &arrays,
        step,
    )
}

/// Loss and metrics of `params` over `samples`.
pub fn evaluate(
    spec: &ModelSpec,
    params: &ParamSet,
    samples: &[Sample],
    batch_size: usize,
) -> Result<Metrics, ModelError> {
    if samples.is_empty() {
        return Ok(Metrics::default());
    }
    let mut loss_sum = 0.0;
    let mut outputs: Vec<Vec<f64>> = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(batch_size.max(1)) {
        let refs: Vec<&Sample> = chunk.iter().collect();
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape);
        let (loss, outs) = batch_loss(spec, &mut tape, &bound, &refs)?;
        loss_sum += tape.value(loss).data()[0] * chunk.len() as f64;
        outputs.extend(outs.iter().map(|&o| tape.value(o).data().to_vec()));
    }
    let mut m = Metrics {
        loss: loss_sum / samples.len() as f64,
        ..Metrics::default()
    };
    match spec.output() {
        Output::Classes(_) => {
            let predicted: Vec<usize> = outputs.iter().map(|o| metrics::argmax(o)).collect();
            let labels: Vec<usize> = samples
                .iter()
                .map(|s| match s.label {
                    Label::Class(c) => c,
                    Label::Scalar(y) => y as usize,
                })
                .collect();
            m.accuracy = metrics::accuracy(&predicted, &labels).ok();
        }
        Output::Scalar => {
            let predicted: Vec<f64> = outputs.iter().map(|o| o[0]).collect();
            let labels: Vec<f64> = samples.iter().map(|s| s.label.as_f64()).collect();
            m.rmse = metrics::rmse(&predicted, &labels).ok();
            m.pearson_r = metrics::pearson_r(&predicted, &labels).ok();
        }
    }
    Ok(m)
}

/// The early-stopping metric and whether larger is better.
fn selection_metric(spec: &ModelSpec, m: &Metrics) -> (f64, bool) {
    match spec.output() {
        Output::Classes(_) => (m.accuracy.unwrap_or(0.0), true),
        Output::Scalar => (m.rmse.unwrap_or(f64::INFINITY), false),
    }
}

/// Trains from `init`. Validation uses `val`, or the training set when
/// `val` is empty.
pub fn train(
    spec: &ModelSpec,
    init: ParamSet,
    train_set: &[Sample],
    val: &[Sample],
    config: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    spec.validate()?;
    init.check_against(&spec.param_specs()?)?;
    check_labels(spec, train_set)?;
    check_labels(spec, val)?;
    let val = if val.is_empty() { train_set } else { val };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = init;
    let mut adam = Adam::new(config.learning_rate, &params);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::new();
    let mut best: Option<(f64, usize, ParamSet)> = None;
    let mut stale = 0;

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for (step, chunk) in order.chunks(config.batch_size).enumerate() {
            let samples: Vec<&Sample> = chunk.iter().map(|&i| &train_set[i]).collect();
            let mut tape = Tape::new();
            let bound = params.bind(&mut tape);
            let (loss, _) = batch_loss(spec, &mut tape, &bound, &samples)?;
            let value = tape.value(loss).data()[0];
            if !value.is_finite() {
                return Err(TrainError::NonFiniteLoss { epoch, step });
            }
            loss_sum += value * chunk.len() as f64;
            let grads = tape.backward(loss).map_err(ModelError::from)?;
            let mut grads = params.gradients(&tape, &bound, &grads);
            clip_global_norm(&mut grads, config.grad_clip);
            adam.update(&mut params, &grads);
        }
        let val_metrics = evaluate(spec, &params, val, config.batch_size)?;
        let (metric, larger_is_better) = selection_metric(spec, &val_metrics);
        history.push(EpochRecord {
            epoch,
            train_loss: loss_sum / train_set.len() as f64,
            val_loss: val_metrics.loss,
            val_metric: metric,
        });
        let improved = match &best {
            None => true,
            Some((b, _, _)) if larger_is_better => metric > *b,
            Some((b, _, _)) => metric < *b,
        };
        if improved {
            best = Some((metric, epoch, params.clone()));
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                break;
            }
        }
    }

    let (_, best_epoch, params) = match best {
        Some(b) => b,
        None => (0.0, 0, params),
    };
    Ok(TrainOutcome {
        params,
        history,
        best_epoch,
    })
}

/// Writes the epoch log as CSV: `epoch,train_loss,val_loss,val_metric`.
pub fn write_history<W: Write>(mut out: W, history: &[EpochRecord]) -> std::io::Result<()> {
    writeln!(out, "epoch,train_loss,val_loss,val_metric")?;
    for r in history {
        writeln!(out, "{},{},{},{}", r.epoch, r.train_loss, r.val_loss, r.val_metric)?;
    }
    out.flush()
}
