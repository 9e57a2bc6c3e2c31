use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use ssm::blocksparse::{estimate_block_rip_constant, DEFAULT_SUPPORT_CAP};
use ssm::classify::{ClassifierMode, LayoutMode, ProjectionSpec, SsmConfig, SsmModel};
use ssm::harness::{
    emit_report, load_image_dir, load_matrix_csv, render_report, run_sweep_with, write_instance,
    DataSource, ExperimentConfig, NoObserver, ReportFormat,
};
use ssm::projection::{ProjectionKind, ProjectionMatrix};
use ssm::synth::{gen_class_subspaces, gen_queries, QueryMode, SubspaceSpec};
use ssm::TrainingDictionary;

#[derive(Parser)]
#[command(name = "ssm", version, about = "Joint sparse subspace classification of multiple queries")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic union-of-subspaces instance.
    Synth(SynthArgs),
    /// Classify a query file against class datasets.
    Classify(ClassifyArgs),
    /// Run a recognition sweep over projection dimensions and query counts.
    Sweep(SweepArgs),
    /// Exhaustive block restricted isometry constant of a dictionary.
    Rip(RipArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    N2one,
    N2ones,
    N2m,
}

impl From<Mode> for ClassifierMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::N2one => ClassifierMode::NToOne,
            Mode::N2ones => ClassifierMode::NToOnes,
            Mode::N2m => ClassifierMode::NToM,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Layout {
    Class,
    Flat,
}

impl From<Layout> for LayoutMode {
    fn from(l: Layout) -> Self {
        match l {
            Layout::Class => LayoutMode::Class,
            Layout::Flat => LayoutMode::Flat,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Projection {
    Gaussian,
    Downsample,
    Identity,
}

impl From<Projection> for ProjectionKind {
    fn from(p: Projection) -> Self {
        match p {
            Projection::Gaussian => ProjectionKind::Gaussian,
            Projection::Downsample => ProjectionKind::Downsample,
            Projection::Identity => ProjectionKind::Identity,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

impl From<Format> for ReportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Json => ReportFormat::Json,
            Format::Csv => ReportFormat::Csv,
        }
    }
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 40)]
    classes: usize,
    #[arg(long, default_value_t = 2048)]
    dim: usize,
    #[arg(long, default_value_t = 5)]
    subspace_dim: usize,
    #[arg(long, default_value_t = 8)]
    samples: usize,
    /// Generating classes.
    #[arg(long, default_value_t = 1)]
    m_true: usize,
    /// Number of query columns.
    #[arg(long, default_value_t = 4)]
    queries: usize,
    /// Give each query its own class instead of a shared support.
    #[arg(long)]
    individual: bool,
    #[arg(long, default_value_t = 0.05)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

/// Where class training data comes from.
#[derive(Args)]
struct DataArgs {
    /// One CSV per class, samples as columns. Repeat for each class.
    #[arg(long = "class-csv", conflicts_with = "images")]
    class_csv: Vec<PathBuf>,
    /// Directory with one subdirectory of PGM images per class.
    #[arg(long)]
    images: Option<PathBuf>,
}

impl DataArgs {
    fn load(&self) -> Result<Vec<nalgebra::DMatrix<f64>>> {
        if let Some(root) = &self.images {
            return Ok(load_image_dir(root)?.0);
        }
        if self.class_csv.is_empty() {
            bail!("need --class-csv or --images");
        }
        self.class_csv
            .iter()
            .map(|p| load_matrix_csv(p).map_err(Into::into))
            .collect()
    }
}

#[derive(Args)]
struct ClassifyArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Query CSV, one query per column.
    #[arg(long)]
    query: PathBuf,
    /// Base configuration as JSON; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dhat: Option<usize>,
    #[arg(long, value_enum, default_value = "gaussian")]
    projection: Projection,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    m0: Option<usize>,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    #[arg(long, value_enum)]
    layout: Option<Layout>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Experiment configuration as JSON; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    dhat: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    queries: Option<Vec<usize>>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    m0: Option<usize>,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    #[arg(long, value_enum)]
    layout: Option<Layout>,
    #[arg(long)]
    tau: Option<f64>,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RipArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Block sparsity levels to evaluate.
    #[arg(long, value_delimiter = ',', default_value = "1,2")]
    m: Vec<usize>,
    #[arg(long)]
    dhat: Option<usize>,
    #[arg(long, value_enum, default_value = "gaussian")]
    projection: Projection,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Maximum number of supports to enumerate per level.
    #[arg(long, default_value_t = DEFAULT_SUPPORT_CAP)]
    cap: u128,
}

fn write_output(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn synth(args: SynthArgs) -> Result<()> {
    let spec = SubspaceSpec {
        classes: args.classes,
        dim: args.dim,
        subspace_dim: args.subspace_dim,
        samples_per_class: args.samples,
        sample_noise: 0.0,
        overcomplete: args.classes * args.subspace_dim > args.dim,
    };
    let mode = if args.individual { QueryMode::IndividualLabels } else { QueryMode::SharedSupport };
    let inst = gen_class_subspaces(&spec, args.seed)?;
    let inst = gen_queries(&inst, args.m_true, args.queries, mode, args.noise, args.seed.wrapping_add(1))?;
    let truth = write_instance(&args.out, &inst, args.seed)?;
    println!("{}", serde_json::to_string_pretty(&truth)?);
    Ok(())
}

fn classify(args: ClassifyArgs) -> Result<()> {
    let mut config: SsmConfig = match &args.config {
        Some(p) => read_json(p)?,
        None => SsmConfig::default(),
    };
    if let Some(d_hat) = args.dhat {
        config.projection = Some(ProjectionSpec { kind: args.projection.into(), d_hat, seed: args.seed });
    }
    if let Some(m0) = args.m0 {
        config.solver.m0 = m0;
    }
    if let Some(m) = args.mode {
        config.mode = m.into();
    }
    if let Some(l) = args.layout {
        config.layout = l.into();
    }
    if let Some(t) = args.tau {
        config.tau = t;
    }
    if let Some(t) = args.threshold {
        config.threshold = t;
    }
    let classes = args.data.load()?;
    let queries = load_matrix_csv(&args.query)?;
    let model = SsmModel::fit(&classes, &config)?;
    let result = model.classify(&queries)?;
    write_output(args.out.as_deref(), &serde_json::to_string_pretty(&result.report)?)
}

fn sweep(args: SweepArgs) -> Result<()> {
    let mut cfg = match &args.config {
        Some(p) => read_json::<ExperimentConfig>(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(d) = args.dhat {
        cfg.projection.d_hat = d;
    }
    if let Some(q) = args.queries {
        cfg.queries = q;
    }
    if let Some(t) = args.trials {
        cfg.trials = t;
    }
    if let Some(m0) = args.m0 {
        cfg.solver.m0 = m0;
    }
    if let Some(m) = args.mode {
        cfg.mode = m.into();
    }
    if let Some(l) = args.layout {
        cfg.layout = l.into();
    }
    if let Some(t) = args.tau {
        cfg.tau = t;
    }
    cfg.validate()?;
    if let DataSource::Synthetic(s) = &cfg.data {
        log::info!("synthetic sweep: {} classes in R^{}", s.subspaces.classes, s.subspaces.dim);
    }
    let outcome = run_sweep_with(&cfg, args.workers, &NoObserver)?;
    match &args.out {
        Some(p) => emit_report(&outcome.report, args.format.into(), p)?,
        None => println!("{}", render_report(&outcome.report, args.format.into())?),
    }
    Ok(())
}

fn rip(args: RipArgs) -> Result<()> {
    let mut classes = args.data.load()?;
    if let Some(d_hat) = args.dhat {
        let d = classes[0].nrows();
        let p = ProjectionMatrix::new(d, d_hat, args.seed, args.projection.into())?;
        classes = classes.iter().map(|c| p.project(c)).collect::<ssm::Result<_>>()?;
    }
    let dict = TrainingDictionary::build(&classes)?.normalize_columns()?;
    let mut levels = Vec::new();
    for &m in &args.m {
        let delta = estimate_block_rip_constant(&dict, m, args.cap)?;
        levels.push(json!({ "m": m, "delta": delta }));
    }
    let report = json!({
        "dim": dict.dim(),
        "classes": dict.num_classes(),
        "layout": dict.layout().sizes(),
        "levels": levels,
    });
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Synth(a) => synth(a),
        Command::Classify(a) => classify(a),
        Command::Sweep(a) => sweep(a),
        Command::Rip(a) => rip(a),
    }
}
