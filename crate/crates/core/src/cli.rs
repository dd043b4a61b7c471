//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 for invalid input (bad flags, malformed
//! files, violated preconditions), 2 for runtime failures (I/O, solver,
//! non-finite losses). Every successful command prints one result path on
//! standard output.
//!
//! Training flags override values read from `--config`; a flag counts only
//! when it is actually given on the command line.

use std::fs;
use std::path::{Path, PathBuf};

use clap::parser::ValueSource;
use clap::{ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};

use crate::baselines::{cloud_features, kmeans, ncut};
use crate::config::{parse_settings, Ablation, TrainConfig};
use crate::data_io::{
    generate_samples, load_cloud, load_dataset, load_logits, sample_masks, save_dataset,
    save_logits, save_prediction, BudgetSplit, MaskScheme, Sample, ShapeFamily, SyntheticSpec,
};
use crate::encoder::{init_params, load_checkpoint};
use crate::error::{read_text, write_text, Error, Result};
use crate::graph::{knn_weights, GraphParams};
use crate::metrics::{
    best_permutation_miou_with_policy, metrics_json, summarize, AbsentClassPolicy,
};
use crate::propagate::propagate;
use crate::rng;
use crate::trainer::{
    budget_csv, budget_experiment, evaluate, grad_study, label_amount_sweep, sweep_csv, train,
    write_run_dir, TrainSample,
};
use crate::types::{Logits, PointCloud};

#[derive(Debug, Parser)]
#[command(name = "wsseg", version, about = "Weakly supervised point cloud part segmentation")]
pub struct Cli {
    /// Worker threads; 1 runs everything serially. Results do not depend on it.
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(1..))]
    pub threads: Option<u64>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic part-labelled dataset.
    Gen(GenArgs),
    /// Train an encoder and write a run directory.
    Train(TrainArgs),
    /// Score a trained run on a dataset.
    Eval(EvalArgs),
    /// Refine a logits file by label propagation on a cloud's k-NN graph.
    Propagate(PropagateArgs),
    /// Unsupervised k-means or normalized-cut segmentation.
    Baseline(BaselineArgs),
    /// Variance of weak-label gradients against the label count.
    Gradstudy(GradStudyArgs),
    /// Compare ways of splitting a fixed labelling budget.
    Budget(BudgetArgs),
    /// Test mIoU against the labelled fraction.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Family {
    Barbell,
    Table,
    Rocket,
}

impl From<Family> for ShapeFamily {
    fn from(f: Family) -> Self {
        match f {
            Family::Barbell => ShapeFamily::Barbell,
            Family::Table => ShapeFamily::Table,
            Family::Rocket => ShapeFamily::Rocket,
        }
    }
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, value_enum, default_value = "barbell")]
    pub family: Family,
    #[arg(long, default_value_t = 32)]
    pub shapes: usize,
    #[arg(long, default_value_t = 256)]
    pub points: usize,
    /// Gaussian noise added to coordinates.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub jitter: f64,
    /// Attach per-part colors.
    #[arg(long)]
    pub colored: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

/// k-NN graph and propagation settings.
#[derive(Debug, Args)]
pub struct GraphArgs {
    /// Neighbors per point.
    #[arg(long, default_value = "10")]
    pub k: usize,
    /// Kernel bandwidth in w = exp(-d/eta).
    #[arg(long, default_value = "1e3", allow_negative_numbers = true)]
    pub eta: f64,
    /// Propagation fidelity weight.
    #[arg(long, default_value = "1", allow_negative_numbers = true)]
    pub gamma: f64,
    #[arg(long, default_value = "true", action = clap::ArgAction::Set)]
    pub symmetrize: bool,
    #[arg(long, default_value = "1e-8", allow_negative_numbers = true)]
    pub propagation_tol: f64,
}

/// Every training hyperparameter.
#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// `key = value` settings file; flags given on the command line win.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub graph: GraphArgs,
    #[arg(long, default_value = "1", allow_negative_numbers = true)]
    pub lambda_mil: f64,
    #[arg(long, default_value = "1", allow_negative_numbers = true)]
    pub lambda_sia: f64,
    #[arg(long, default_value = "1", allow_negative_numbers = true)]
    pub lambda_smo: f64,
    #[arg(long, default_value = "1e-3", allow_negative_numbers = true)]
    pub lr: f64,
    #[arg(long, default_value = "60")]
    pub epochs_stage1: usize,
    #[arg(long, default_value = "60")]
    pub epochs_stage2: usize,
    #[arg(long, default_value = "8")]
    pub batch_size: usize,
    #[arg(long, default_value = "0")]
    pub seed: u64,
    /// Comma-separated widths of the shared per-point layers.
    #[arg(long, default_value = "64,64,128")]
    pub encoder_widths: String,
    /// Comma-separated hidden widths of the segmentation head.
    #[arg(long, default_value = "128")]
    pub decoder_widths: String,
    #[arg(long, default_value = "false", action = clap::ArgAction::Set)]
    pub seg_on_augmented: bool,
    #[arg(long, default_value = "false", action = clap::ArgAction::Set)]
    pub smooth_must_not_link: bool,
    #[arg(long, default_value = "true", action = clap::ArgAction::Set)]
    pub use_propagation: bool,
    #[arg(long, default_value = "false", action = clap::ArgAction::Set)]
    pub constrained_propagation: bool,
    /// `exclude` or `score_one`.
    #[arg(long, default_value = "exclude")]
    pub absent_class_policy: String,
    #[arg(long, default_value = "true", action = clap::ArgAction::Set)]
    pub mil: bool,
    #[arg(long, default_value = "true", action = clap::ArgAction::Set)]
    pub siamese: bool,
    #[arg(long, default_value = "true", action = clap::ArgAction::Set)]
    pub smooth: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Scored after training; defaults to the training set.
    #[arg(long)]
    pub test_data: Option<PathBuf>,
    /// `full`, `1pt`, a percentage such as `10%`, or a fraction such as `0.1`.
    #[arg(long, default_value = "full")]
    pub scheme: String,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub cfg: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Run directory holding `checkpoint.txt` and `config.txt`.
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory for `metrics.json` and per-cloud predictions.
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the run's `use_propagation`.
    #[arg(long, action = clap::ArgAction::Set)]
    pub propagation: Option<bool>,
}

#[derive(Debug, Args)]
pub struct PropagateArgs {
    /// Cloud whose coordinates define the graph.
    #[arg(long)]
    pub cloud: PathBuf,
    #[arg(long)]
    pub logits: PathBuf,
    /// Directory for `refined_logits.txt` and `prediction.txt`.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub graph: GraphArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Method {
    Kmeans,
    Ncut,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[arg(long, value_enum)]
    pub method: Method,
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory for `metrics.json` and per-cloud predictions.
    #[arg(long)]
    pub out: PathBuf,
    /// Cluster count; defaults to each cloud's class count.
    #[arg(long)]
    pub clusters: Option<usize>,
    #[arg(long, default_value_t = 100)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub graph: GraphArgs,
}

#[derive(Debug, Args)]
pub struct GradStudyArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "8,16,32,64,128")]
    pub grid: String,
    #[arg(long, default_value_t = 30)]
    pub draws: usize,
    /// Fixed parameters to study; a fresh initialization from `--seed` otherwise.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// CSV of `n,variance`.
    #[arg(long, default_value = "gradstudy.csv")]
    pub out: PathBuf,
    #[command(flatten)]
    pub cfg: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct BudgetArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub test_data: PathBuf,
    /// Fraction of all points that may be labelled.
    #[arg(long, default_value_t = 0.1, allow_negative_numbers = true)]
    pub budget: f64,
    /// `sample_fraction:point_fraction` pairs.
    #[arg(long, default_value = "0.1:1.0,0.5:0.2,1.0:0.1")]
    pub splits: String,
    #[arg(long, default_value = "budget.csv")]
    pub out: PathBuf,
    #[command(flatten)]
    pub cfg: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub test_data: PathBuf,
    #[arg(long, default_value = "0.01,0.1,1.0")]
    pub fractions: String,
    #[arg(long, default_value = "sweep.csv")]
    pub out: PathBuf,
    #[command(flatten)]
    pub cfg: ConfigArgs,
}

fn given(m: &ArgMatches, id: &str) -> bool {
    m.value_source(id) == Some(ValueSource::CommandLine)
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse()
                .map_err(|_| Error::validation(format!("invalid {what} entry `{v}`")))
        })
        .collect()
}

fn graph_from(g: &GraphArgs, m: &ArgMatches, c: &mut TrainConfig) {
    if given(m, "k") {
        c.k = g.k;
    }
    if given(m, "eta") {
        c.eta = g.eta;
    }
    if given(m, "gamma") {
        c.gamma = g.gamma;
    }
    if given(m, "symmetrize") {
        c.symmetrize = g.symmetrize;
    }
    if given(m, "propagation_tol") {
        c.propagation_tol = g.propagation_tol;
    }
}

/// Config file (or defaults) with command-line flags applied on top.
fn resolve_config(a: &ConfigArgs, m: &ArgMatches) -> Result<(TrainConfig, Ablation)> {
    let (mut c, mut ab) = match &a.config {
        Some(path) => parse_settings(&read_text(path)?, path)?,
        None => (TrainConfig::default(), Ablation::default()),
    };
    graph_from(&a.graph, m, &mut c);
    macro_rules! take {
        ($($field:ident),*) => {
            $(if given(m, stringify!($field)) {
                c.$field = a.$field;
            })*
        };
    }
    take!(
        lambda_mil,
        lambda_sia,
        lambda_smo,
        lr,
        epochs_stage1,
        epochs_stage2,
        batch_size,
        seed,
        seg_on_augmented,
        smooth_must_not_link,
        use_propagation,
        constrained_propagation
    );
    if given(m, "encoder_widths") {
        c.encoder_widths = parse_list(&a.encoder_widths, "width")?;
    }
    if given(m, "decoder_widths") {
        c.decoder_widths = parse_list(&a.decoder_widths, "width")?;
    }
    if given(m, "absent_class_policy") {
        c.absent_class_policy = a.absent_class_policy.parse::<AbsentClassPolicy>()?;
    }
    if given(m, "mil") {
        ab.mil = a.mil;
    }
    if given(m, "siamese") {
        ab.siamese = a.siamese;
    }
    if given(m, "smooth") {
        ab.smooth = a.smooth;
    }
    c.validate()?;
    Ok((c, ab))
}

fn graph_params(g: &GraphArgs) -> GraphParams {
    GraphParams {
        k: g.k,
        eta: g.eta,
        symmetrize: g.symmetrize,
        use_rgb: true,
    }
}

fn clouds(samples: &[Sample]) -> Vec<&PointCloud> {
    samples.iter().map(|s| &s.cloud).collect()
}

fn write_predictions(dir: &Path, samples: &[Sample], predictions: &[Vec<usize>]) -> Result<()> {
    let pred_dir = dir.join("predictions");
    fs::create_dir_all(&pred_dir)?;
    for (s, p) in samples.iter().zip(predictions) {
        let labels: Vec<Option<usize>> = p.iter().map(|&l| Some(l)).collect();
        save_prediction(&s.cloud, &labels, pred_dir.join(format!("{}.txt", s.name)))?;
    }
    Ok(())
}

fn cmd_gen(a: &GenArgs) -> Result<PathBuf> {
    let mut spec = SyntheticSpec::new(a.family.into(), a.shapes, a.points, a.seed);
    spec.jitter_sigma = a.jitter;
    spec.colored = a.colored;
    save_dataset(&a.out, &generate_samples(&spec)?)
}

fn cmd_train(a: &TrainArgs, m: &ArgMatches) -> Result<PathBuf> {
    let (config, ablation) = resolve_config(&a.cfg, m)?;
    let scheme: MaskScheme = a.scheme.parse()?;
    let data = load_dataset(&a.data)?;
    let masks = sample_masks(&clouds(&data), scheme, config.seed)?;
    let samples: Vec<TrainSample> = data
        .iter()
        .zip(&masks)
        .map(|(s, mask)| TrainSample::new(s, mask.clone()))
        .collect();
    let mut record = train(&samples, &config, &ablation)?;
    let eval = match &a.test_data {
        Some(path) => evaluate(&record.params, &load_dataset(path)?, None, &config, config.use_propagation)?,
        None => evaluate(&record.params, &data, Some(&masks), &config, config.use_propagation)?,
    };
    record.evaluation = Some(eval);
    write_run_dir(&a.out, &record)
}

fn cmd_eval(a: &EvalArgs) -> Result<PathBuf> {
    let config_path = a.run.join("config.txt");
    let (config, _) = parse_settings(&read_text(&config_path)?, &config_path)?;
    let params = load_checkpoint(a.run.join("checkpoint.txt"))?;
    let data = load_dataset(&a.data)?;
    let eval = evaluate(
        &params,
        &data,
        None,
        &config,
        a.propagation.unwrap_or(config.use_propagation),
    )?;
    fs::create_dir_all(&a.out)?;
    write_predictions(&a.out, &data, &eval.predictions)?;
    let path = a.out.join("metrics.json");
    write_text(&path, metrics_json(&eval.summary))?;
    Ok(path)
}

fn cmd_propagate(a: &PropagateArgs) -> Result<PathBuf> {
    let cloud = load_cloud(&a.cloud)?;
    let logits = Logits::new(load_logits(&a.logits)?)?;
    if logits.matrix().rows() != cloud.len() {
        return Err(Error::validation(format!(
            "{} logit rows for {} points",
            logits.matrix().rows(),
            cloud.len()
        )));
    }
    let graph = knn_weights(&cloud, &graph_params(&a.graph))?;
    let result = propagate(&logits, &graph, a.graph.gamma, a.graph.propagation_tol)?;
    fs::create_dir_all(&a.out)?;
    let labels: Vec<Option<usize>> = result.predicted.iter().map(|&l| Some(l)).collect();
    save_prediction(&cloud, &labels, a.out.join("prediction.txt"))?;
    let path = a.out.join("refined_logits.txt");
    save_logits(result.refined.matrix(), &path)?;
    Ok(path)
}

fn cmd_baseline(a: &BaselineArgs) -> Result<PathBuf> {
    let data = load_dataset(&a.data)?;
    let policy = AbsentClassPolicy::default();
    let mut reports = Vec::with_capacity(data.len());
    let mut predictions = Vec::with_capacity(data.len());
    for (i, s) in data.iter().enumerate() {
        let nc = s.cloud.num_classes();
        let k = a.clusters.unwrap_or(nc);
        if k != nc {
            return Err(Error::validation(format!(
                "{k} clusters cannot be matched to {nc} classes"
            )));
        }
        let seed = rng::derive_seed(a.seed, &[i as u64]);
        let features = cloud_features(&s.cloud);
        let clustering = match a.method {
            Method::Kmeans => kmeans(&features, k, seed, a.max_iters)?,
            Method::Ncut => ncut(&knn_weights(&s.cloud, &graph_params(&a.graph))?, &features, k, seed)?,
        };
        let report =
            best_permutation_miou_with_policy(&clustering.assignment, s.cloud.labels(), nc, policy)?;
        let perm = report.permutation.clone().unwrap_or_else(|| (0..nc).collect());
        let mut to_class = vec![0; nc];
        for (class, &label) in perm.iter().enumerate() {
            to_class[label] = class;
        }
        predictions.push(clustering.assignment.iter().map(|&l| to_class[l]).collect());
        reports.push((s.category.clone(), report));
    }
    let sizes: Vec<usize> = data.iter().map(|s| s.cloud.len()).collect();
    let summary = summarize(&reports, &sizes)?;
    fs::create_dir_all(&a.out)?;
    write_predictions(&a.out, &data, &predictions)?;
    let path = a.out.join("metrics.json");
    write_text(&path, metrics_json(&summary))?;
    Ok(path)
}

fn cmd_gradstudy(a: &GradStudyArgs, m: &ArgMatches) -> Result<PathBuf> {
    let (config, _) = resolve_config(&a.cfg, m)?;
    let data = load_dataset(&a.data)?;
    let grid: Vec<usize> = parse_list(&a.grid, "grid")?;
    let params = match &a.checkpoint {
        Some(path) => load_checkpoint(path)?,
        None => {
            let c = &data[0].cloud;
            init_params(
                config.seed,
                c.num_features(),
                c.num_classes(),
                &config.encoder_widths,
                &config.decoder_widths,
            )?
        }
    };
    let all: Vec<PointCloud> = data.into_iter().map(|s| s.cloud).collect();
    let result = grad_study(&all, &params, &grid, a.draws, config.seed)?;
    write_text(&a.out, result.to_csv())?;
    eprintln!(
        "slope {:.6} ± {:.6} (intercept {:.6})",
        result.slope, result.slope_se, result.intercept
    );
    Ok(a.out.clone())
}

fn cmd_budget(a: &BudgetArgs, m: &ArgMatches) -> Result<PathBuf> {
    let (config, ablation) = resolve_config(&a.cfg, m)?;
    let splits = a
        .splits
        .split(',')
        .map(|pair| {
            let (x, y) = pair
                .split_once(':')
                .ok_or_else(|| Error::validation(format!("split `{pair}` is not `x:y`")))?;
            let parse = |v: &str| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::validation(format!("invalid split `{pair}`")))
            };
            BudgetSplit::new(parse(x)?, parse(y)?)
        })
        .collect::<Result<Vec<_>>>()?;
    let rows = budget_experiment(
        &load_dataset(&a.data)?,
        &load_dataset(&a.test_data)?,
        a.budget,
        &splits,
        &config,
        &ablation,
    )?;
    write_text(&a.out, budget_csv(&rows))?;
    Ok(a.out.clone())
}

fn cmd_sweep(a: &SweepArgs, m: &ArgMatches) -> Result<PathBuf> {
    let (config, _) = resolve_config(&a.cfg, m)?;
    let fractions: Vec<f64> = parse_list(&a.fractions, "fraction")?;
    let rows = label_amount_sweep(
        &load_dataset(&a.data)?,
        &load_dataset(&a.test_data)?,
        &fractions,
        &config,
    )?;
    write_text(&a.out, sweep_csv(&rows))?;
    Ok(a.out.clone())
}

fn dispatch(cli: &Cli, sub: &ArgMatches) -> Result<PathBuf> {
    match &cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Train(a) => cmd_train(a, sub),
        Command::Eval(a) => cmd_eval(a),
        Command::Propagate(a) => cmd_propagate(a),
        Command::Baseline(a) => cmd_baseline(a),
        Command::Gradstudy(a) => cmd_gradstudy(a, sub),
        Command::Budget(a) => cmd_budget(a, sub),
        Command::Sweep(a) => cmd_sweep(a, sub),
    }
}

/// The effective configuration a `train` command line resolves to.
pub fn effective_config<I, T>(argv: I) -> Result<(TrainConfig, Ablation)>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let matches = Cli::command()
        .try_get_matches_from(argv)
        .map_err(|e| Error::validation(e.to_string()))?;
    let cli = Cli::from_arg_matches(&matches).map_err(|e| Error::validation(e.to_string()))?;
    let (_, sub) = matches.subcommand().expect("subcommand is required");
    match &cli.command {
        Command::Train(a) => resolve_config(&a.cfg, sub),
        _ => Err(Error::validation("only `train` carries a training config")),
    }
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let matches = match Cli::command().try_get_matches_from(argv) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return 1;
        }
    };
    let (_, sub) = matches.subcommand().expect("subcommand is required");
    let threads = cli.threads.map_or_else(
        || std::thread::available_parallelism().map_or(1, |n| n.get()),
        |t| t as usize,
    );
    let outcome = match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool.install(|| dispatch(&cli, sub)),
        Err(e) => Err(Error::Usage(format!("cannot start {threads} worker threads: {e}"))),
    };
    match outcome {
        Ok(path) => {
            println!("{}", path.display());
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                1
            } else {
                2
            }
        }
    }
}
