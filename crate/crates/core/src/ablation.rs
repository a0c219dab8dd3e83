//! Ablation grid over DAGNN design choices.
//!
//! Starting from a base configuration the grid swaps attention for a gated
//! sum, drops to one layer, replaces the GRU by a fully connected layer,
//! pools over all nodes, removes edge attributes, sweeps one to four
//! layers, and toggles bidirectional processing. Variants that coincide
//! with another are merged into a single row whose name joins theirs.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::datasets::{mean_std, Sample};
use crate::model::{Aggregator, Combiner, DagnnConfig, ModelSpec, ReadoutScope};
use crate::train::{evaluate, train, TrainConfig, TrainError};

pub const DEFAULT_SEEDS: [u64; 3] = [1, 2, 3];

#[derive(Debug, Clone, PartialEq)]
pub struct AblationEntry {
    /// Variant names joined by `+` when several coincide.
    pub name: String,
    pub config: DagnnConfig,
}

/// Distinct configurations of the grid, in a fixed order.
pub fn ablation_grid(base: &DagnnConfig) -> Vec<AblationEntry> {
    let with = |f: &dyn Fn(&mut DagnnConfig)| {
        let mut c = *base;
        f(&mut c);
        c
    };
    let variants: Vec<(String, DagnnConfig)> = [
        ("full".to_string(), *base),
        ("gated_sum".into(), with(&|c| c.aggregator = Aggregator::GatedSum)),
        ("single_layer".into(), with(&|c| c.num_layers = 1)),
        ("fc_combiner".into(), with(&|c| c.combiner = Combiner::FullyConnected)),
        ("pool_all_nodes".into(), with(&|c| c.readout = ReadoutScope::All)),
        ("no_edge_attr".into(), with(&|c| c.aggregator = Aggregator::Attention)),
    ]
    .into_iter()
    .chain((1..=4).map(|l| (format!("layers_{l}"), with(&|c| c.num_layers = l))))
    .chain([
        ("unidirectional".to_string(), with(&|c| c.bidirectional = false)),
        ("bidirectional".to_string(), with(&|c| c.bidirectional = true)),
    ])
    .collect();

    let mut grid: Vec<AblationEntry> = Vec::new();
    for (name, config) in variants {
        match grid.iter_mut().find(|e| e.config == config) {
            Some(e) => {
                e.name.push('+');
                e.name.push_str(&name);
            }
            None => grid.push(AblationEntry { name, config }),
        }
    }
    grid
}

/// One CSV row: a configuration with metric mean and standard deviation
/// (population) over the seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub config: String,
    pub layers: usize,
    pub bidirectional: bool,
    pub aggregator: Aggregator,
    pub combiner: Combiner,
    pub readout: ReadoutScope,
    pub seeds: usize,
    pub accuracy_mean: Option<f64>,
    pub accuracy_std: Option<f64>,
    pub rmse_mean: Option<f64>,
    pub rmse_std: Option<f64>,
    pub pearson_mean: Option<f64>,
    pub pearson_std: Option<f64>,
}

fn summarize(values: &[Option<f64>]) -> (Option<f64>, Option<f64>) {
    let xs: Vec<f64> = values.iter().flatten().copied().collect();
    if xs.is_empty() || xs.len() != values.len() {
        return (None, None);
    }
    let (m, s) = mean_std(&xs);
    (Some(m), Some(s))
}

/// Trains and tests every grid entry once per seed. The seed drives both
/// the parameter initialization and the shuffling order.
pub fn run_ablation_grid(
    base: &DagnnConfig,
    train_set: &[Sample],
    val: &[Sample],
    test: &[Sample],
    train_config: &TrainConfig,
    seeds: &[u64],
    mut progress: impl FnMut(&AblationRow),
) -> Result<Vec<AblationRow>, TrainError> {
    let mut rows = Vec::new();
    for entry in ablation_grid(base) {
        let spec = ModelSpec::Dagnn(entry.config);
        let mut results = Vec::new();
        for &seed in seeds {
            let cfg = TrainConfig { seed, ..*train_config };
            let outcome = train(&spec, spec.init_params(seed)?, train_set, val, &cfg)?;
            results.push(evaluate(&spec, &outcome.params, test, cfg.batch_size)?);
        }
        let (accuracy_mean, accuracy_std) = summarize(&results.iter().map(|m| m.accuracy).collect::<Vec<_>>());
        let (rmse_mean, rmse_std) = summarize(&results.iter().map(|m| m.rmse).collect::<Vec<_>>());
        let (pearson_mean, pearson_std) = summarize(&results.iter().map(|m| m.pearson_r).collect::<Vec<_>>());
        let c = entry.config;
        let row = AblationRow {
            config: entry.name,
            layers: c.num_layers,
            bidirectional: c.bidirectional,
            aggregator: c.aggregator,
            combiner: c.combiner,
            readout: c.readout,
            seeds: seeds.len(),
            accuracy_mean,
            accuracy_std,
            rmse_mean,
            rmse_std,
            pearson_mean,
            pearson_std,
        };
        progress(&row);
        rows.push(row);
    }
    Ok(rows)
}

pub fn write_rows<W: Write>(out: W, rows: &[AblationRow]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows<R: Read>(input: R) -> Result<Vec<AblationRow>, csv::Error> {
    csv::Reader::from_reader(input).deserialize().collect()
}
