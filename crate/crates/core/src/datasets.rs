//! Synthetic DAG datasets with exact labels, and their JSON-lines form.
//!
//! Each line of a dataset file holds one graph:
//!
//! ```text
//! {"n": 3, "edges": [[0, 1, 0], [1, 2, 1]], "x": [[1.0, 0.0], [0.0, 1.0], [0.0, 1.0]], "y": 2}
//! ```
//!
//! `edges` lists `[tail, head, type]`; `x` is the per-node feature matrix.
//! An integral `y` is a class index, a `y` written with a fraction or
//! exponent is a real-valued regression target.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dag::{Dag, DagError, Edge};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Label {
    Class(usize),
    Scalar(f64),
}

impl Label {
    pub fn as_f64(self) -> f64 {
        match self {
            Label::Class(c) => c as f64,
            Label::Scalar(y) => y,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub dag: Dag,
    pub label: Label,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    /// One-hot in-degree, clipped to the last slot.
    OnehotIndegree,
    /// One-hot position in a topological order, clipped to the last slot.
    OnehotTopoindex,
    /// Uniform in `[-1, 1]`.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenParams {
    pub n_min: usize,
    pub n_max: usize,
    pub edge_prob: f64,
    pub num_edge_types: usize,
    pub feature_mode: FeatureMode,
    /// Width of the feature vectors. One-hot modes need at least `n_max`
    /// slots to avoid clipping.
    pub feature_dim: usize,
}

impl Default for GenParams {
    fn default() -> Self {
        Self {
            n_min: 4,
            n_max: 15,
            edge_prob: 0.35,
            num_edge_types: 2,
            feature_mode: FeatureMode::OnehotIndegree,
            feature_dim: 15,
        }
    }
}

impl GenParams {
    fn validate(&self) {
        assert!(self.n_min >= 1 && self.n_min <= self.n_max, "need 1 <= n_min <= n_max");
        assert!((0.0..=1.0).contains(&self.edge_prob), "edge_prob must be a probability");
        assert!(self.num_edge_types >= 1 && self.feature_dim >= 1);
    }
}

/// Draws one graph from `rng`. Each pair `i < j` is joined by an edge
/// `(i, j)` with probability `edge_prob`, so the result is acyclic by
/// construction.
pub fn gen_random_dag_with(params: &GenParams, rng: &mut ChaCha8Rng) -> Dag {
    params.validate();
    let n = rng.gen_range(params.n_min..=params.n_max);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen_bool(params.edge_prob) {
                edges.push(Edge::new(i, j, rng.gen_range(0..params.num_edge_types)));
            }
        }
    }
    let d = params.feature_dim;
    let features = match params.feature_mode {
        FeatureMode::Random => (0..n)
            .map(|_| (0..d).map(|_| rng.gen_range(-1.0..=1.0)).collect())
            .collect(),
        FeatureMode::OnehotIndegree => {
            let mut indeg = vec![0; n];
            edges.iter().for_each(|e| indeg[e.head] += 1);
            indeg.into_iter().map(|k| one_hot(k.min(d - 1), d)).collect()
        }
        // edges only go from lower to higher index, so the identity order is topological
        FeatureMode::OnehotTopoindex => (0..n).map(|v| one_hot(v.min(d - 1), d)).collect(),
    };
    Dag::new(n, edges, features).expect("generator emits valid DAGs")
}

pub fn gen_random_dag(params: &GenParams, seed: u64) -> Dag {
    gen_random_dag_with(params, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn one_hot(k: usize, d: usize) -> Vec<f64> {
    let mut x = vec![0.0; d];
    x[k] = 1.0;
    x
}

/// Longest-path classification: the label is the number of edges on the
/// longest path. Depth-revealing topological-index features are rejected.
pub fn gen_lp_dataset(count: usize, params: &GenParams, seed: u64) -> Vec<Sample> {
    assert!(
        params.feature_mode != FeatureMode::OnehotTopoindex,
        "longest-path data must not carry topological-position features"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let dag = gen_random_dag_with(params, &mut rng);
            let label = Label::Class(dag.longest_path_node_count() - 1);
            Sample { dag, label }
        })
        .collect()
}

pub const SCORE_PATH_WEIGHT: f64 = 1.0;
pub const SCORE_INDEGREE_WEIGHT: f64 = 0.5;
pub const SCORE_EDGE_WEIGHT: f64 = 0.25;
pub const SCORE_NOISE_STD: f64 = 0.05;

/// Noise-free structural score:
/// `1.0 * longest-path nodes + 0.5 * mean in-degree + 0.25 * sum over edges of (type + 1)`.
pub fn raw_score(dag: &Dag) -> f64 {
    let mean_indegree = dag.num_edges() as f64 / dag.num_nodes() as f64;
    let typed_edges: f64 = dag.edges().iter().map(|e| (e.edge_type + 1) as f64).sum();
    SCORE_PATH_WEIGHT * dag.longest_path_node_count() as f64
        + SCORE_INDEGREE_WEIGHT * mean_indegree
        + SCORE_EDGE_WEIGHT * typed_edges
}

/// Regression data: [`raw_score`] plus Gaussian noise, standardized to zero
/// mean and unit variance over the returned set.
pub fn gen_score_dataset(count: usize, params: &GenParams, seed: u64) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, SCORE_NOISE_STD).expect("valid std");
    let graphs: Vec<(Dag, f64)> = (0..count)
        .map(|_| {
            let dag = gen_random_dag_with(params, &mut rng);
            let y = raw_score(&dag) + noise.sample(&mut rng);
            (dag, y)
        })
        .collect();
    let ys: Vec<f64> = graphs.iter().map(|g| g.1).collect();
    let (mean, std) = mean_std(&ys);
    graphs
        .into_iter()
        .map(|(dag, y)| {
            let z = if std > 0.0 { (y - mean) / std } else { 0.0 };
            Sample {
                dag,
                label: Label::Scalar(z),
            }
        })
        .collect()
}

/// Population mean and standard deviation.
pub(crate) fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Count of samples per class label.
pub fn label_histogram(samples: &[Sample]) -> BTreeMap<usize, usize> {
    let mut hist = BTreeMap::new();
    for s in samples {
        if let Label::Class(c) = s.label {
            *hist.entry(c).or_insert(0) += 1;
        }
    }
    hist
}

#[derive(Serialize, Deserialize)]
struct Record {
    n: usize,
    edges: Vec<[usize; 3]>,
    x: Vec<Vec<f64>>,
    y: Label,
}

impl From<&Sample> for Record {
    fn from(s: &Sample) -> Self {
        let g = &s.dag;
        Record {
            n: g.num_nodes(),
            edges: g.edges().iter().map(|e| [e.tail, e.head, e.edge_type]).collect(),
            x: (0..g.num_nodes()).map(|v| g.features(v).to_vec()).collect(),
            y: s.label,
        }
    }
}

impl TryFrom<Record> for Sample {
    type Error = DagError;

    fn try_from(r: Record) -> Result<Self, Self::Error> {
        let edges = r.edges.iter().map(|&[t, h, ty]| Edge::new(t, h, ty)).collect();
        Ok(Sample {
            dag: Dag::new(r.n, edges, r.x)?,
            label: r.y,
        })
    }
}

pub fn to_json_line(sample: &Sample) -> String {
    serde_json::to_string(&Record::from(sample)).expect("records serialize")
}

/// Parses one line; `line` is the 1-based line number used in errors.
pub fn from_json_line(text: &str, line: usize) -> Result<Sample, DatasetError> {
    let record: Record = serde_json::from_str(text).map_err(|e| DatasetError::Parse {
        line,
        message: e.to_string(),
    })?;
    Sample::try_from(record).map_err(|e| DatasetError::Parse {
        line,
        message: e.to_string(),
    })
}

pub fn write_samples<W: Write>(mut out: W, samples: &[Sample]) -> std::io::Result<()> {
    for s in samples {
        writeln!(out, "{}", to_json_line(s))?;
    }
    out.flush()
}

/// Reads samples, skipping blank lines.
pub fn read_samples<R: BufRead>(input: R) -> Result<Vec<Sample>, DatasetError> {
    let mut samples = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        samples.push(from_json_line(&line, i + 1)?);
    }
    Ok(samples)
}

pub fn save(path: impl AsRef<Path>, samples: &[Sample]) -> Result<(), DatasetError> {
    write_samples(BufWriter::new(File::create(path)?), samples)?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<Vec<Sample>, DatasetError> {
    read_samples(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::batching::TopoBatches;

    fn params(p: f64) -> GenParams {
        GenParams {
            n_min: 6,
            n_max: 6,
            edge_prob: p,
            ..GenParams::default()
        }
    }

    #[test]
    fn extreme_edge_probabilities() {
        let empty = gen_random_dag(&params(0.0), 1);
        assert_eq!(empty.num_edges(), 0);
        assert_eq!(TopoBatches::compute(&empty).len(), 1);

        let full = gen_random_dag(&params(1.0), 1);
        assert_eq!(full.num_edges(), 15);
        let b = TopoBatches::compute(&full);
        assert_eq!(b.len(), 6);
        assert!(b.iter().all(|batch| batch.len() == 1));
    }

    #[test]
    fn seeded_generation_is_reproducible() {
        let p = GenParams::default();
        let a = gen_lp_dataset(20, &p, 9);
        assert_eq!(a, gen_lp_dataset(20, &p, 9));
        assert_ne!(a, gen_lp_dataset(20, &p, 10));
        let s = gen_score_dataset(20, &p, 9);
        assert_eq!(s, gen_score_dataset(20, &p, 9));
    }

    #[test]
    fn feature_modes() {
        let mut p = params(0.5);
        let g = gen_random_dag(&p, 3);
        for v in 0..g.num_nodes() {
            let x = g.features(v);
            assert_eq!(x.iter().sum::<f64>(), 1.0);
            assert_eq!(x[g.in_degree(v)], 1.0);
        }
        p.feature_mode = FeatureMode::OnehotTopoindex;
        let g = gen_random_dag(&p, 3);
        assert_eq!(g.features(4)[4], 1.0);
        p.feature_mode = FeatureMode::Random;
        p.feature_dim = 3;
        let g = gen_random_dag(&p, 3);
        assert_eq!(g.feature_dim(), 3);
        assert!(g.feature_matrix().iter().all(|x| x.abs() <= 1.0));
    }

    #[test]
    fn chain_label() {
        let g = Dag::new(5, (1..5).map(|v| Edge::untyped(v - 1, v)).collect(), vec![vec![0.0]; 5]).unwrap();
        assert_eq!(g.longest_path_node_count() - 1, 4);
    }

    #[test]
    fn single_node_raw_score() {
        let g = Dag::new(1, vec![], vec![vec![1.0]]).unwrap();
        assert_eq!(raw_score(&g), 1.0);
    }

    #[test]
    fn score_labels_standardized() {
        let s = gen_score_dataset(300, &GenParams::default(), 4);
        let ys: Vec<f64> = s.iter().map(|s| s.label.as_f64()).collect();
        let (m, sd) = mean_std(&ys);
        assert!(m.abs() < 1e-9);
        assert!((sd - 1.0).abs() < 1e-9);
    }

    #[test]
    fn histogram_counts() {
        let s = gen_lp_dataset(50, &GenParams::default(), 2);
        let h = label_histogram(&s);
        assert_eq!(h.values().sum::<usize>(), 50);
        assert!(h.keys().all(|&k| k < 15));
    }

    #[test]
    fn json_lines() {
        let p = GenParams {
            feature_mode: FeatureMode::Random,
            feature_dim: 2,
            ..GenParams::default()
        };
        let lp = gen_lp_dataset(5, &p, 1);
        let score = gen_score_dataset(5, &p, 1);
        for s in lp.iter().chain(&score) {
            assert_eq!(&from_json_line(&to_json_line(s), 1).unwrap(), s);
        }
        let line = to_json_line(&lp[0]);
        assert!(line.starts_with("{\"n\":"));
        assert!(line.contains("\"edges\":") && line.contains("\"x\":") && line.contains("\"y\":"));

        let text = format!("{}\n{{\"n\": 2, \"edges\": [[0, 1]]\n", to_json_line(&lp[0]));
        match read_samples(text.as_bytes()) {
            Err(DatasetError::Parse { line: 2, .. }) => {}
            other => panic!("expected a parse error on line 2, got {other:?}"),
        }
        let cyclic = r#"{"n": 2, "edges": [[0, 1, 0], [1, 0, 0]], "x": [[0.0], [0.0]], "y": 0}"#;
        assert!(matches!(
            read_samples(cyclic.as_bytes()),
            Err(DatasetError::Parse { line: 1, .. })
        ));
        assert!(read_samples("".as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn integral_scalar_stays_scalar() {
        let s = Sample {
            dag: Dag::new(1, vec![], vec![vec![0.0]]).unwrap(),
            label: Label::Scalar(1.0),
        };
        assert_eq!(from_json_line(&to_json_line(&s), 1).unwrap().label, Label::Scalar(1.0));
    }
}
