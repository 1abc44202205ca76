use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::Serialize;

use auxfuse::attribution::{aggregate_attributions, IgConfig};
use auxfuse::experiment::{run_experiment, write_experiment, ExperimentConfig};
use auxfuse::fusion::{load_checkpoint, HeadOutput};
use auxfuse::retrieval::{evaluate, EvalConfig, Metric};
use auxfuse::store::{
    load_dataset, merge_fragment, save_dataset, split_random, synth_generate, Signal, SplitSpec,
    SynthBlock, SynthSpec, MANIFEST_FILE,
};
use auxfuse::trainer::{train_fusion, write_training_artifacts, Regime, TrainConfig};
use auxfuse::trajectory::{
    extract_block, load_trajectories, train_trajectory, write_trajectory_block, SceneBounds,
    TrajectoryTrainConfig,
};
use auxfuse::{Dataset, FusionMode};

#[derive(Parser, Debug)]
#[command(name = "auxfuse", version, about = "Auxiliary-feature fusion for person re-identification")]
struct Cli {
    /// JSON config for the chosen command; flags override its fields
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, global = true, default_value = "auxfuse-out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset with controllable block informativeness
    Synth(SynthArgs),
    /// Validate a dataset directory, merging block fragments first
    Check(CheckArgs),
    /// Train the fusion classifier and write a checkpoint
    Train(TrainArgs),
    /// Query/gallery retrieval metrics for a checkpoint
    Eval(EvalArgs),
    /// Integrated Gradients per feature block
    Attribute(AttributeArgs),
    /// Train the trajectory LSTM and emit its feature block
    Traj(TrajArgs),
    /// Repeated-split ablation over variants and fusion modes
    Experiment(ExperimentArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long)]
    identities: Option<usize>,
    #[arg(long)]
    cameras: Option<usize>,
    #[arg(long)]
    samples_per_identity: Option<usize>,
    #[arg(long)]
    noise: Option<f64>,
    /// Block as `name:dim:signal[:scale]`, signal one of informative,
    /// uninformative, grouped<N>. Repeatable.
    #[arg(long = "block", value_parser = parse_block)]
    blocks: Vec<SynthBlock>,
    /// Identity fraction used for training; the rest become query/gallery
    #[arg(long)]
    train_fraction: Option<f64>,
}

#[derive(Args, Debug)]
struct CheckArgs {
    dataset: PathBuf,
    /// Fragment JSON (next to its `<block>.f32`) to merge into the manifest
    #[arg(long)]
    merge: Vec<PathBuf>,
}

#[derive(Args, Debug)]
struct ResplitArgs {
    /// Re-split by identity with this train fraction (seeded by --seed)
    #[arg(long)]
    split: Option<f64>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Concat,
    #[value(alias = "att")]
    Attention,
}

impl From<ModeArg> for FusionMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Concat => FusionMode::Concat,
            ModeArg::Attention => FusionMode::Attention,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum RegimeArg {
    Image,
    Video,
}

#[derive(Args, Debug)]
struct TrainArgs {
    dataset: PathBuf,
    #[command(flatten)]
    resplit: ResplitArgs,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Comma-separated auxiliary blocks, in fusion order
    #[arg(long, value_delimiter = ',')]
    aux: Option<Vec<String>>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long, value_enum)]
    regime: Option<RegimeArg>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Hidden width of the re-id encoder; 0 keeps the raw descriptor
    #[arg(long)]
    encoder_hidden: Option<usize>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MetricArg {
    Euclidean,
    Cosine,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FilterArg {
    On,
    Off,
    Auto,
}

#[derive(Args, Debug)]
struct EvalArgs {
    dataset: PathBuf,
    /// Checkpoint directory holding model.json and model.f32
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    resplit: ResplitArgs,
    #[arg(long, value_enum)]
    metric: Option<MetricArg>,
    #[arg(long)]
    l2_normalize: bool,
    #[arg(long, value_enum)]
    cross_camera: Option<FilterArg>,
    /// Row label in the markdown table
    #[arg(long, default_value = "model")]
    label: String,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum OutputArg {
    Logit,
    Probability,
}

#[derive(Args, Debug)]
struct AttributeArgs {
    dataset: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    resplit: ResplitArgs,
    /// Riemann steps
    #[arg(long)]
    steps: Option<usize>,
    /// Number of query samples to average over
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long, value_enum)]
    output: Option<OutputArg>,
}

#[derive(Args, Debug)]
struct TrajArgs {
    /// trajectories.jsonl
    input: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Feed only the 10 observed points when extracting features
    #[arg(long)]
    observed_only: bool,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    /// Dataset directory; overrides the config's `dataset`
    dataset: Option<PathBuf>,
    #[arg(long)]
    repeats: Option<usize>,
}

fn parse_block(s: &str) -> std::result::Result<SynthBlock, String> {
    let parts: Vec<&str> = s.split(':').collect();
    if !(3..=4).contains(&parts.len()) {
        return Err(format!("expected name:dim:signal[:scale], got `{s}`"));
    }
    let dim: usize = parts[1].parse().map_err(|e| format!("dim `{}`: {e}", parts[1]))?;
    let signal = match parts[2] {
        "informative" => Signal::Informative,
        "uninformative" => Signal::Uninformative,
        g if g.starts_with("grouped") => Signal::Grouped {
            size: g["grouped".len()..]
                .parse()
                .map_err(|e| format!("group size in `{g}`: {e}"))?,
        },
        other => return Err(format!("unknown signal `{other}`")),
    };
    let mut block = SynthBlock::new(parts[0], dim, signal);
    if let Some(scale) = parts.get(3) {
        block = block.with_scale(scale.parse().map_err(|e| format!("scale `{scale}`: {e}"))?);
    }
    Ok(block)
}

fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))
        }
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn create_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn open_dataset(dir: &Path, resplit: &ResplitArgs, seed: u64) -> Result<Dataset> {
    let ds = load_dataset(dir).with_context(|| format!("loading dataset {}", dir.display()))?;
    Ok(match resplit.split {
        Some(f) => split_random(&ds, &SplitSpec::new(f, seed))?,
        None => ds,
    })
}

fn synth(cli: &Cli, args: &SynthArgs) -> Result<()> {
    let mut spec: SynthSpec = load_config(cli.config.as_deref())?;
    if let Some(v) = args.identities {
        spec.identities = v;
    }
    if let Some(v) = args.cameras {
        spec.cameras = v;
    }
    if let Some(v) = args.samples_per_identity {
        spec.samples_per_identity = v;
    }
    if let Some(v) = args.noise {
        spec.noise = v;
    }
    if let Some(v) = args.train_fraction {
        spec.train_fraction = v;
    }
    if !args.blocks.is_empty() {
        spec.blocks = args.blocks.clone();
    }
    let ds = synth_generate(&spec, cli.seed.unwrap_or(0))?;
    save_dataset(&ds, &cli.out)?;
    println!(
        "wrote {} records, {} identities, blocks [{}] to {}",
        ds.records.len(),
        ds.num_identities(),
        ds.schema.iter().map(|b| format!("{}:{}", b.name, b.dim)).collect::<Vec<_>>().join(", "),
        cli.out.display()
    );
    Ok(())
}

fn check(args: &CheckArgs) -> Result<()> {
    for fragment in &args.merge {
        merge_fragment(&args.dataset, fragment)
            .with_context(|| format!("merging {}", fragment.display()))?;
        println!("merged {} into {}", fragment.display(), args.dataset.join(MANIFEST_FILE).display());
    }
    let ds = load_dataset(&args.dataset)?;
    let count = |s| ds.split(s).count();
    println!(
        "ok: {} records ({} train, {} query, {} gallery), {} identities, {} cameras",
        ds.records.len(),
        count(auxfuse::Split::Train),
        count(auxfuse::Split::Query),
        count(auxfuse::Split::Gallery),
        ds.num_identities(),
        ds.num_cameras()
    );
    for b in &ds.schema {
        println!("  {} dim {}", b.name, b.dim);
    }
    Ok(())
}

fn train(cli: &Cli, args: &TrainArgs) -> Result<()> {
    let mut cfg: TrainConfig = load_config(cli.config.as_deref())?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(m) = args.mode {
        cfg.mode = m.into();
    }
    if let Some(a) = &args.aux {
        cfg.aux_selection = a.clone();
    }
    if let Some(v) = args.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = args.lr {
        cfg.lr = v;
    }
    if let Some(r) = args.regime {
        cfg.regime = match r {
            RegimeArg::Image => Regime::Image,
            RegimeArg::Video => Regime::Video,
        };
    }
    if args.batch_size.is_some() {
        cfg.batch_size = args.batch_size;
    }
    if let Some(v) = args.encoder_hidden {
        cfg.encoder_hidden = v;
    }
    let ds = open_dataset(&args.dataset, &args.resplit, cfg.seed)?;
    let outcome = train_fusion(&ds, &cfg)?;
    write_training_artifacts(&cli.out, &outcome, &cfg)?;
    println!(
        "trained {} model over {} classes, final loss {:.6}, checkpoint in {}",
        cfg.mode,
        outcome.model.num_classes(),
        outcome.history.final_loss().unwrap_or(f64::NAN),
        cli.out.display()
    );
    Ok(())
}

fn eval(cli: &Cli, args: &EvalArgs) -> Result<()> {
    let mut cfg: EvalConfig = load_config(cli.config.as_deref())?;
    if let Some(m) = args.metric {
        cfg.metric = match m {
            MetricArg::Euclidean => Metric::Euclidean,
            MetricArg::Cosine => Metric::Cosine,
        };
    }
    cfg.l2_normalize |= args.l2_normalize;
    if let Some(f) = args.cross_camera {
        cfg.cross_camera_filter = match f {
            FilterArg::On => Some(true),
            FilterArg::Off => Some(false),
            FilterArg::Auto => None,
        };
    }
    let model = load_checkpoint(&args.model)?;
    let ds = open_dataset(&args.dataset, &args.resplit, cli.seed.unwrap_or(0))?;
    let report = evaluate(&model, &ds, &cfg)?;
    create_out(&cli.out)?;
    write_json(&cli.out.join("report.json"), &report)?;
    let table = report.markdown(&args.label);
    fs::write(cli.out.join("report.md"), &table)?;
    print!("{table}");
    if !report.excluded_queries.is_empty() {
        println!("{} queries without a gallery match were excluded", report.excluded_queries.len());
    }
    Ok(())
}

fn attribute(cli: &Cli, args: &AttributeArgs) -> Result<()> {
    let mut cfg: IgConfig = load_config(cli.config.as_deref())?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(v) = args.steps {
        cfg.steps = v;
    }
    if let Some(v) = args.samples {
        cfg.sample_count = v;
    }
    if let Some(o) = args.output {
        cfg.output = match o {
            OutputArg::Logit => HeadOutput::Logit,
            OutputArg::Probability => HeadOutput::Probability,
        };
    }
    let model = load_checkpoint(&args.model)?;
    let ds = open_dataset(&args.dataset, &args.resplit, cli.seed.unwrap_or(0))?;
    let report = aggregate_attributions(&model, &ds, &cfg)?;
    create_out(&cli.out)?;
    write_json(&cli.out.join("attributions.json"), &report)?;
    let csv = report.to_csv();
    fs::write(cli.out.join("attributions.csv"), &csv)?;
    print!("{csv}");
    println!(
        "{} samples, mean completeness residual {:.2e}",
        report.samples.len(),
        report.mean_residual()
    );
    Ok(())
}

fn traj(cli: &Cli, args: &TrajArgs) -> Result<()> {
    let mut cfg: TrajectoryTrainConfig = load_config(cli.config.as_deref())?;
    if let Some(v) = args.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = args.hidden {
        cfg.hidden = v;
    }
    if let Some(v) = args.lr {
        cfg.lr = v;
    }
    let raw = load_trajectories(&args.input)?;
    let Some(bounds) = SceneBounds::fit(&raw) else {
        bail!("{} holds no trajectories", args.input.display());
    };
    let samples = bounds.apply(&raw);
    let training = train_trajectory(&samples, &cfg, cli.seed.unwrap_or(0))?;
    let features = extract_block(&samples, &training.model, args.observed_only)?;
    write_trajectory_block(&cli.out, &samples, &features)?;
    let mut history = String::from("epoch,loss\n");
    for (i, l) in training.train_history.iter().enumerate() {
        history.push_str(&format!("{},{l}\n", i + 1));
    }
    fs::write(cli.out.join("trajectory_history.csv"), history)?;
    write_json(
        &cli.out.join("trajectory_summary.json"),
        &serde_json::json!({
            "config": cfg,
            "bounds": bounds,
            "initial_train_mse": training.initial_train_loss,
            "final_train_mse": training.train_history.last(),
            "val_mse": training.val_mse,
            "train_ids": training.train_ids,
            "val_ids": training.val_ids,
        }),
    )?;
    println!(
        "{} trajectories, validation MSE {:.3e}; wrote trajectory.f32 and trajectory.json to {}",
        samples.len(),
        training.val_mse,
        cli.out.display()
    );
    Ok(())
}

fn experiment(cli: &Cli, args: &ExperimentArgs) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.base_seed = s;
    }
    if let Some(r) = args.repeats {
        cfg.repeats = r;
    }
    if let Some(d) = &args.dataset {
        cfg.dataset = Some(d.clone());
    }
    cfg.validate()?;
    let Some(dir) = cfg.dataset.clone() else {
        bail!("no dataset given on the command line or in the config");
    };
    let ds = load_dataset(&dir).with_context(|| format!("loading dataset {}", dir.display()))?;
    let outcome = run_experiment(&ds, &cfg)?;
    write_experiment(&outcome, &cli.out)?;
    print!("{}", outcome.report.to_markdown());
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Synth(a) => synth(cli, a),
        Command::Check(a) => check(a),
        Command::Train(a) => train(cli, a),
        Command::Eval(a) => eval(cli, a),
        Command::Attribute(a) => attribute(cli, a),
        Command::Traj(a) => traj(cli, a),
        Command::Experiment(a) => experiment(cli, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // library errors already spell out their cause; skip repeats
            let mut msg = e.to_string();
            for cause in e.chain().skip(1) {
                let c = cause.to_string();
                if !msg.contains(&c) {
                    msg = format!("{msg}: {c}");
                }
            }
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
