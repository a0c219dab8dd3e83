use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use dagnn::ablation::{ablation_grid, run_ablation_grid, write_rows, DEFAULT_SEEDS};
use dagnn::checkpoint::Checkpoint;
use dagnn::datasets::{self, FeatureMode, GenParams, Label, Sample};
use dagnn::metrics::Metrics;
use dagnn::model::{Aggregator, Combiner, DagnnConfig, ModelSpec, MpnnConfig, Output, ReadoutScope};
use dagnn::train::{evaluate, loss_grad_check, train, write_history, TrainConfig};
use dagnn::TopoBatches;

#[derive(Parser)]
#[command(name = "dagnn", version, about = "Directed acyclic graph neural networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset as JSON lines.
    Generate(GenerateArgs),
    /// Train a model and print metrics as CSV.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset.
    Eval(EvalArgs),
    /// Train every ablation variant over several seeds.
    Ablate(AblateArgs),
    /// Compare reverse-mode gradients with finite differences.
    Gradcheck(GradcheckArgs),
    /// Print per-graph batching statistics.
    BatchInfo {
        /// Dataset in JSON-lines form.
        data: PathBuf,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Task {
    /// Longest-path length classification.
    Lp,
    /// Structural score regression.
    Score,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModelKind {
    Dagnn,
    Mpnn,
}

#[derive(Clone, Copy, ValueEnum)]
enum AggregatorArg {
    AttentionEdge,
    Attention,
    GatedSum,
}

#[derive(Clone, Copy, ValueEnum)]
enum CombinerArg {
    Gru,
    Fc,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReadoutArg {
    Targets,
    All,
}

#[derive(Clone, Copy, ValueEnum)]
enum FeatureArg {
    OnehotIndegree,
    OnehotTopoindex,
    Random,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, value_enum)]
    task: Task,
    #[arg(long)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 4)]
    n_min: usize,
    #[arg(long, default_value_t = 15)]
    n_max: usize,
    #[arg(long, default_value_t = 0.35)]
    edge_prob: f64,
    #[arg(long, default_value_t = 2)]
    edge_types: usize,
    #[arg(long, value_enum, default_value = "onehot-indegree")]
    feature_mode: FeatureArg,
    /// Feature width; defaults to `n_max`.
    #[arg(long)]
    feature_dim: Option<usize>,
}

/// Architecture flags shared by `train` and `ablate`.
#[derive(Args)]
struct ModelArgs {
    #[arg(long, value_enum, default_value = "lp")]
    task: Task,
    #[arg(long, default_value_t = 2)]
    layers: usize,
    #[arg(long, default_value_t = 16)]
    hidden: usize,
    #[arg(long)]
    bidirectional: bool,
    #[arg(long, value_enum, default_value = "attention-edge")]
    aggregator: AggregatorArg,
    #[arg(long, value_enum, default_value = "gru")]
    combiner: CombinerArg,
    #[arg(long, value_enum, default_value = "targets")]
    readout: ReadoutArg,
    /// Number of classes for `lp`; defaults to the largest label plus one.
    #[arg(long)]
    classes: Option<usize>,
    /// Number of edge types; defaults to the largest type in the data plus one.
    #[arg(long)]
    edge_types: Option<usize>,
}

/// Optimization and data flags shared by `train` and `ablate`.
#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    data: PathBuf,
    /// Validation set; without it the last `--val-fraction` of `--data` is held out.
    #[arg(long)]
    val: Option<PathBuf>,
    #[arg(long, default_value_t = 0.1)]
    val_fraction: f64,
    /// Test set, evaluated with the selected parameters.
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long, default_value_t = 10)]
    patience: usize,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value_t = 0.25)]
    grad_clip: f64,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, value_enum, default_value = "dagnn")]
    model: ModelKind,
    #[command(flatten)]
    model_args: ModelArgs,
    #[command(flatten)]
    fit: FitArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Checkpoint destination.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-epoch log destination (CSV).
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
}

#[derive(Args)]
struct AblateArgs {
    #[command(flatten)]
    model_args: ModelArgs,
    #[command(flatten)]
    fit: FitArgs,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_SEEDS)]
    seeds: Vec<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 3)]
    hidden: usize,
    #[arg(long, default_value_t = 1e-5)]
    step: f64,
}

fn main() -> Result<()> {
    let result = match Cli::parse().command {
        Command::Generate(a) => generate(a),
        Command::Train(a) => run_train(a),
        Command::Eval(a) => run_eval(a),
        Command::Ablate(a) => run_ablate(a),
        Command::Gradcheck(a) => run_gradcheck(a),
        Command::BatchInfo { data } => batch_info(&data),
    };
    // a closed stdout (e.g. piping into `head`) is not a failure
    match result {
        Err(e)
            if e.downcast_ref::<io::Error>()
                .is_some_and(|e| e.kind() == io::ErrorKind::BrokenPipe) =>
        {
            Ok(())
        }
        other => other,
    }
}

fn generate(a: GenerateArgs) -> Result<()> {
    let params = GenParams {
        n_min: a.n_min,
        n_max: a.n_max,
        edge_prob: a.edge_prob,
        num_edge_types: a.edge_types,
        feature_mode: match a.feature_mode {
            FeatureArg::OnehotIndegree => FeatureMode::OnehotIndegree,
            FeatureArg::OnehotTopoindex => FeatureMode::OnehotTopoindex,
            FeatureArg::Random => FeatureMode::Random,
        },
        feature_dim: a.feature_dim.unwrap_or(a.n_max),
    };
    if params.n_min == 0 || params.n_min > params.n_max {
        bail!("need 1 <= --n-min <= --n-max");
    }
    if !(0.0..=1.0).contains(&params.edge_prob) {
        bail!("--edge-prob must lie in [0, 1]");
    }
    if params.num_edge_types == 0 || params.feature_dim == 0 {
        bail!("--edge-types and --feature-dim must be at least 1");
    }
    let samples = match a.task {
        Task::Lp => {
            if params.feature_mode == FeatureMode::OnehotTopoindex {
                bail!("onehot-topoindex features reveal depth and are not allowed for the lp task");
            }
            datasets::gen_lp_dataset(a.count, &params, a.seed)
        }
        Task::Score => datasets::gen_score_dataset(a.count, &params, a.seed),
    };
    datasets::save(&a.out, &samples).with_context(|| format!("writing {}", a.out.display()))?;

    let mut out = io::stdout().lock();
    match a.task {
        Task::Lp => {
            writeln!(out, "label,count")?;
            for (label, count) in datasets::label_histogram(&samples) {
                writeln!(out, "{label},{count}")?;
            }
        }
        Task::Score => {
            let ys: Vec<f64> = samples.iter().map(|s| s.label.as_f64()).collect();
            let n = ys.len().max(1) as f64;
            let mean = ys.iter().sum::<f64>() / n;
            let std = (ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n).sqrt();
            writeln!(out, "count,mean,std")?;
            writeln!(out, "{},{mean},{std}", ys.len())?;
        }
    }
    Ok(())
}

fn load(path: &Path, task: Task) -> Result<Vec<Sample>> {
    let mut samples = datasets::load(path).with_context(|| format!("reading {}", path.display()))?;
    for (i, s) in samples.iter_mut().enumerate() {
        match (task, s.label) {
            (Task::Lp, Label::Scalar(_)) => {
                bail!(
                    "{}: sample {i} has a real-valued label but the task is lp",
                    path.display()
                )
            }
            (Task::Score, Label::Class(c)) => s.label = Label::Scalar(c as f64),
            _ => {}
        }
    }
    Ok(samples)
}

/// Training, validation and optional test sets.
struct Splits {
    train: Vec<Sample>,
    val: Vec<Sample>,
    test: Vec<Sample>,
}

fn load_splits(fit: &FitArgs, task: Task) -> Result<Splits> {
    let mut train = load(&fit.data, task)?;
    if train.is_empty() {
        bail!("{} contains no graphs", fit.data.display());
    }
    let val = match &fit.val {
        Some(p) => load(p, task)?,
        None => {
            if !(0.0..1.0).contains(&fit.val_fraction) {
                bail!("--val-fraction must lie in [0, 1)");
            }
            let held = (train.len() as f64 * fit.val_fraction).round() as usize;
            train.split_off(train.len() - held.min(train.len() - 1))
        }
    };
    let test = match &fit.test {
        Some(p) => load(p, task)?,
        None => Vec::new(),
    };
    Ok(Splits { train, val, test })
}

fn all_samples(s: &Splits) -> impl Iterator<Item = &Sample> {
    s.train.iter().chain(&s.val).chain(&s.test)
}

fn output_for(task: Task, classes: Option<usize>, s: &Splits) -> Output {
    match task {
        Task::Score => Output::Scalar,
        Task::Lp => Output::Classes(
            classes.unwrap_or_else(|| all_samples(s).map(|x| x.label.as_f64() as usize + 1).max().unwrap_or(1)),
        ),
    }
}

fn dagnn_config(m: &ModelArgs, s: &Splits) -> Result<DagnnConfig> {
    let input_dim = s.train[0].dag.feature_dim();
    let edge_types = m.edge_types.unwrap_or_else(|| {
        all_samples(s)
            .filter_map(|x| x.dag.max_edge_type())
            .max()
            .map_or(1, |t| t + 1)
    });
    let mut c = DagnnConfig::new(input_dim, m.hidden, edge_types, output_for(m.task, m.classes, s));
    c.num_layers = m.layers;
    c.bidirectional = m.bidirectional;
    c.aggregator = match m.aggregator {
        AggregatorArg::AttentionEdge => Aggregator::AttentionEdge,
        AggregatorArg::Attention => Aggregator::Attention,
        AggregatorArg::GatedSum => Aggregator::GatedSum,
    };
    c.combiner = match m.combiner {
        CombinerArg::Gru => Combiner::Gru,
        CombinerArg::Fc => Combiner::FullyConnected,
    };
    c.readout = match m.readout {
        ReadoutArg::Targets => ReadoutScope::Targets,
        ReadoutArg::All => ReadoutScope::All,
    };
    c.validate()?;
    Ok(c)
}

fn train_config(fit: &FitArgs, seed: u64) -> TrainConfig {
    TrainConfig {
        learning_rate: fit.lr,
        max_epochs: fit.epochs,
        patience: fit.patience,
        grad_clip: fit.grad_clip,
        batch_size: fit.batch_size,
        seed,
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn write_metrics(out: &mut impl Write, rows: &[(&str, Metrics)]) -> io::Result<()> {
    writeln!(out, "split,loss,accuracy,rmse,pearson_r")?;
    for (split, m) in rows {
        writeln!(
            out,
            "{split},{},{},{},{}",
            m.loss,
            opt(m.accuracy),
            opt(m.rmse),
            opt(m.pearson_r)
        )?;
    }
    Ok(())
}

fn run_train(a: TrainArgs) -> Result<()> {
    let splits = load_splits(&a.fit, a.model_args.task)?;
    let dagnn = dagnn_config(&a.model_args, &splits)?;
    let spec = match a.model {
        ModelKind::Dagnn => ModelSpec::Dagnn(dagnn),
        ModelKind::Mpnn => ModelSpec::Mpnn(MpnnConfig {
            num_layers: dagnn.num_layers,
            hidden_dim: dagnn.hidden_dim,
            input_dim: dagnn.input_dim,
            output: dagnn.output,
        }),
    };
    let cfg = train_config(&a.fit, a.seed);
    let outcome = train(&spec, spec.init_params(a.seed)?, &splits.train, &splits.val, &cfg)?;

    if let Some(path) = &a.log {
        let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        write_history(BufWriter::new(f), &outcome.history)?;
    }
    if let Some(path) = &a.out {
        Checkpoint::new(spec, outcome.params.clone())?
            .save(path)
            .with_context(|| format!("writing {}", path.display()))?;
    }

    let bs = cfg.batch_size;
    let mut rows = vec![
        ("train", evaluate(&spec, &outcome.params, &splits.train, bs)?),
        ("val", evaluate(&spec, &outcome.params, &splits.val, bs)?),
    ];
    if !splits.test.is_empty() {
        rows.push(("test", evaluate(&spec, &outcome.params, &splits.test, bs)?));
    }
    write_metrics(&mut io::stdout().lock(), &rows)?;
    Ok(())
}

fn run_eval(a: EvalArgs) -> Result<()> {
    let ck = Checkpoint::load(&a.ckpt).with_context(|| format!("reading {}", a.ckpt.display()))?;
    let task = match ck.spec.output() {
        Output::Classes(_) => Task::Lp,
        Output::Scalar => Task::Score,
    };
    let data = load(&a.data, task)?;
    if let Output::Classes(k) = ck.spec.output() {
        if let Some(c) = data.iter().map(|s| s.label.as_f64() as usize).find(|&c| c >= k) {
            bail!("label {c} is outside the checkpoint's {k} classes");
        }
    }
    let m = evaluate(&ck.spec, &ck.params, &data, a.batch_size)?;
    write_metrics(&mut io::stdout().lock(), &[("eval", m)])?;
    Ok(())
}

fn run_ablate(a: AblateArgs) -> Result<()> {
    if a.seeds.is_empty() {
        bail!("--seeds needs at least one seed");
    }
    let splits = load_splits(&a.fit, a.model_args.task)?;
    let base = dagnn_config(&a.model_args, &splits)?;
    let test = if splits.test.is_empty() {
        &splits.val
    } else {
        &splits.test
    };
    let cfg = train_config(&a.fit, 0);
    let rows = run_ablation_grid(&base, &splits.train, &splits.val, test, &cfg, &a.seeds, |row| {
        eprintln!("finished {}", row.config);
    })?;
    let f = File::create(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    write_rows(BufWriter::new(f), &rows)?;
    write_rows(io::stdout().lock(), &rows)?;
    Ok(())
}

/// Checks the gradient of the training loss for every ablation variant and
/// the baseline, for both output kinds, on two small random graphs.
fn run_gradcheck(a: GradcheckArgs) -> Result<()> {
    let gen = GenParams {
        n_min: 3,
        n_max: 7,
        feature_mode: FeatureMode::Random,
        feature_dim: 3,
        ..GenParams::default()
    };
    let lp = datasets::gen_lp_dataset(2, &gen, a.seed);
    let score = datasets::gen_score_dataset(2, &gen, a.seed);
    let mut out = io::stdout().lock();
    writeln!(out, "config,output,max_rel_error")?;
    let mut worst: f64 = 0.0;
    for (data, output, tag) in [
        (&lp, Output::Classes(gen.n_max), "classes"),
        (&score, Output::Scalar, "scalar"),
    ] {
        let refs: Vec<&Sample> = data.iter().collect();
        let base = DagnnConfig::new(gen.feature_dim, a.hidden, gen.num_edge_types, output);
        let mut specs: Vec<(String, ModelSpec)> = ablation_grid(&base)
            .into_iter()
            .map(|e| (e.name, ModelSpec::Dagnn(e.config)))
            .collect();
        specs.push((
            "mpnn".into(),
            ModelSpec::Mpnn(MpnnConfig {
                num_layers: 2,
                hidden_dim: a.hidden,
                input_dim: gen.feature_dim,
                output,
            }),
        ));
        for (name, spec) in specs {
            let err = loss_grad_check(&spec, &spec.init_params(a.seed)?, &refs, a.step)?;
            worst = worst.max(err);
            writeln!(out, "{name},{tag},{err:e}")?;
        }
    }
    writeln!(out, "max,all,{worst:e}")?;
    Ok(())
}

fn batch_info(path: &Path) -> Result<()> {
    let data = datasets::load(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = io::stdout().lock();
    writeln!(out, "graph,nodes,edges,batches,longest_path_nodes,max_width")?;
    for (i, s) in data.iter().enumerate() {
        let b = TopoBatches::compute(&s.dag);
        writeln!(
            out,
            "{i},{},{},{},{},{}",
            s.dag.num_nodes(),
            s.dag.num_edges(),
            b.len(),
            s.dag.longest_path_node_count(),
            b.max_width()
        )?;
    }
    Ok(())
}
