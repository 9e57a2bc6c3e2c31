use std::time::Instant;

use nalgebra::DMatrix;
use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{DataSource, ExperimentConfig};
use super::io::{load_image_dir, load_matrix_csv};
use crate::classify::{
    Classification, ClassifierMode, Labels, LayoutMode, ProjectionSpec, SsmConfig, SsmModel,
};
use crate::error::{Result, SsmError};
use crate::projection::ProjectionKind;
use crate::rng::{derive_seed, stream};
use crate::synth::{gen_class_subspaces, gen_queries, SynthInstance};

const STREAM_DICTIONARY: u64 = 1;
const STREAM_QUERIES: u64 = 2;
const STREAM_SPLIT: u64 = 3;
const STREAM_PICK: u64 = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellMetrics {
    pub d_hat: usize,
    pub n: usize,
    pub trials: usize,
    /// Correct decisions (trials for n-to-one, queries otherwise).
    pub correct: u64,
    pub total: u64,
    pub recognition_rate: f64,
    /// Mean of `‖R‖_F / ‖Q‖_F` after decomposition.
    pub mean_residual: f64,
    pub mean_sci: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_wall_time_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub master_seed: u64,
    pub projection_seed: u64,
    pub projection_kind: ProjectionKind,
    pub config_hash: String,
    pub mode: ClassifierMode,
    pub layout: LayoutMode,
    pub d_hat: Vec<usize>,
    pub queries: Vec<usize>,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub metadata: ReportMetadata,
    /// Row-major over `(d_hat, n)` in configured order.
    pub cells: Vec<CellMetrics>,
}

impl MetricsReport {
    pub fn cell(&self, d_hat: usize, n: usize) -> Option<&CellMetrics> {
        self.cells.iter().find(|c| c.d_hat == d_hat && c.n == n)
    }

    pub fn rate(&self, d_hat: usize, n: usize) -> Option<f64> {
        self.cell(d_hat, n).map(|c| c.recognition_rate)
    }
}

/// Score of one trial in one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub d_hat: usize,
    pub n: usize,
    pub trial: usize,
    pub correct: u64,
    pub total: u64,
    pub relative_residual: f64,
    pub mean_sci: f64,
    pub wall_time_ms: f64,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub report: MetricsReport,
    /// Every trial of every cell, in `(d_hat, trial, n)` order.
    pub trials: Vec<TrialOutcome>,
}

impl SweepOutcome {
    /// Recognition rate recomputed from the stored per-trial outcomes.
    pub fn batch_rate(&self, d_hat: usize, n: usize) -> Option<f64> {
        let cell: Vec<&TrialOutcome> = self
            .trials
            .iter()
            .filter(|t| t.d_hat == d_hat && t.n == n)
            .collect();
        if cell.is_empty() {
            return None;
        }
        let correct: u64 = cell.iter().map(|t| t.correct).sum();
        let total: u64 = cell.iter().map(|t| t.total).sum();
        Some(correct as f64 / total as f64)
    }
}

/// What an observer sees after each classification in a sweep.
pub struct TrialContext<'a> {
    pub d_hat: usize,
    pub n: usize,
    pub trial: usize,
    pub model: &'a SsmModel,
    pub classification: &'a Classification,
    pub truth: &'a [usize],
}

pub trait SweepObserver: Sync {
    fn on_trial(&self, ctx: &TrialContext<'_>);
}

pub struct NoObserver;

impl SweepObserver for NoObserver {
    fn on_trial(&self, _ctx: &TrialContext<'_>) {}
}

enum Source {
    Synthetic,
    Loaded(Vec<DMatrix<f64>>),
}

struct TrialData {
    train: Vec<DMatrix<f64>>,
    synthetic: Option<SynthInstance>,
    /// Held-out samples per class (loaded data only).
    pools: Vec<DMatrix<f64>>,
}

fn load_source(config: &ExperimentConfig) -> Result<Source> {
    match &config.data {
        DataSource::Synthetic(_) => Ok(Source::Synthetic),
        DataSource::Csv { class_paths } => {
            let classes = class_paths
                .iter()
                .map(load_matrix_csv)
                .collect::<Result<Vec<_>>>()?;
            Ok(Source::Loaded(classes))
        }
        DataSource::Images { root } => Ok(Source::Loaded(load_image_dir(root)?.0)),
    }
}

fn source_dim(config: &ExperimentConfig, source: &Source) -> Result<usize> {
    match (source, &config.data) {
        (Source::Synthetic, DataSource::Synthetic(s)) => Ok(s.subspaces.dim),
        (Source::Loaded(classes), _) => classes
            .first()
            .map(|m| m.nrows())
            .ok_or(SsmError::NoClasses),
        _ => unreachable!("source matches config"),
    }
}

/// Random half of each class for training, the rest held out. Classes with
/// a single sample keep it for training and hold nothing out.
fn split_classes(classes: &[DMatrix<f64>], master: u64, trial: usize) -> TrialData {
    let mut train = Vec::with_capacity(classes.len());
    let mut pools = Vec::with_capacity(classes.len());
    for (k, m) in classes.iter().enumerate() {
        let mut rng = stream(derive_seed(master, &[STREAM_SPLIT, trial as u64, k as u64]));
        let count = m.ncols();
        let n_train = count.div_ceil(2);
        let order = index::sample(&mut rng, count, count).into_vec();
        let pick = |idx: &[usize]| DMatrix::from_fn(m.nrows(), idx.len(), |i, j| m[(i, idx[j])]);
        train.push(pick(&order[..n_train]));
        pools.push(pick(&order[n_train..]));
    }
    TrialData {
        train,
        synthetic: None,
        pools,
    }
}

fn trial_data(config: &ExperimentConfig, source: &Source, trial: usize) -> Result<TrialData> {
    match (source, &config.data) {
        (Source::Synthetic, DataSource::Synthetic(s)) => {
            let inst = gen_class_subspaces(
                &s.subspaces,
                derive_seed(config.seed, &[STREAM_DICTIONARY, trial as u64]),
            )?;
            Ok(TrialData {
                train: inst.class_datasets(),
                synthetic: Some(inst),
                pools: Vec::new(),
            })
        }
        (Source::Loaded(classes), _) => Ok(split_classes(classes, config.seed, trial)),
        _ => unreachable!("source matches config"),
    }
}

/// Queries and their per-query true labels.
fn trial_queries(
    config: &ExperimentConfig,
    data: &TrialData,
    trial: usize,
    n: usize,
) -> Result<(DMatrix<f64>, Vec<usize>, Vec<usize>)> {
    if let (Some(inst), DataSource::Synthetic(s)) = (&data.synthetic, &config.data) {
        let seed = derive_seed(config.seed, &[STREAM_QUERIES, trial as u64]);
        let m_true = match config.query_mode() {
            crate::synth::QueryMode::IndividualLabels => s.m_true.min(n),
            crate::synth::QueryMode::SharedSupport => s.m_true,
        };
        let q = gen_queries(inst, m_true, n, config.query_mode(), s.noise_sigma, seed)?;
        return Ok((q.queries, q.true_labels, q.true_support));
    }

    let mut rng = stream(derive_seed(config.seed, &[STREAM_PICK, trial as u64, n as u64]));
    let d = data.train[0].nrows();
    let eligible: Vec<usize> = (0..data.pools.len())
        .filter(|&k| data.pools[k].ncols() >= n)
        .collect();
    let pick_from = |k: usize, count: usize, rng: &mut rand_chacha::ChaCha8Rng| {
        let pool = &data.pools[k];
        let idx = index::sample(rng, pool.ncols(), count).into_vec();
        DMatrix::from_fn(d, count, |i, j| pool[(i, idx[j])])
    };
    match config.query_mode() {
        crate::synth::QueryMode::SharedSupport => {
            if eligible.is_empty() {
                return Err(SsmError::InvalidParameter(format!(
                    "no class has {n} held-out samples"
                )));
            }
            let k = eligible[rng.random_range(0..eligible.len())];
            let q = pick_from(k, n, &mut rng);
            Ok((q, vec![k; n], vec![k]))
        }
        crate::synth::QueryMode::IndividualLabels => {
            let nonempty: Vec<usize> = (0..data.pools.len())
                .filter(|&k| data.pools[k].ncols() > 0)
                .collect();
            if nonempty.is_empty() {
                return Err(SsmError::InvalidParameter("no held-out samples".into()));
            }
            let mut q = DMatrix::zeros(d, n);
            let mut labels = Vec::with_capacity(n);
            for j in 0..n {
                let k = nonempty[rng.random_range(0..nonempty.len())];
                q.set_column(j, &pick_from(k, 1, &mut rng).column(0));
                labels.push(k);
            }
            let mut support = labels.clone();
            support.sort_unstable();
            support.dedup();
            Ok((q, labels, support))
        }
    }
}

fn score(labels: &Labels, truth: &[usize], support: &[usize]) -> (u64, u64) {
    match labels {
        Labels::Single(l) => (support.contains(l) as u64, 1),
        Labels::PerQuery(ls) => (
            ls.iter().zip(truth).filter(|(a, b)| a == b).count() as u64,
            truth.len() as u64,
        ),
        Labels::Sets(sets) => (
            sets.iter().zip(truth).filter(|(s, t)| s.contains(t)).count() as u64,
            truth.len() as u64,
        ),
    }
}

#[derive(Default)]
struct CellAccumulator {
    trials: usize,
    correct: u64,
    total: u64,
    residual: f64,
    sci: f64,
    wall: f64,
}

impl CellAccumulator {
    fn push(&mut self, t: &TrialOutcome) {
        self.trials += 1;
        self.correct += t.correct;
        self.total += t.total;
        self.residual += t.relative_residual;
        self.sci += t.mean_sci;
        self.wall += t.wall_time_ms;
    }

    fn finish(self, d_hat: usize, n: usize, timing: bool) -> CellMetrics {
        let trials = self.trials as f64;
        CellMetrics {
            d_hat,
            n,
            trials: self.trials,
            correct: self.correct,
            total: self.total,
            recognition_rate: self.correct as f64 / self.total as f64,
            mean_residual: self.residual / trials,
            mean_sci: self.sci / trials,
            mean_wall_time_ms: timing.then(|| self.wall / trials),
        }
    }
}

fn run_job(
    config: &ExperimentConfig,
    source: &Source,
    d_idx: usize,
    trial: usize,
    observer: &dyn SweepObserver,
) -> Result<Vec<TrialOutcome>> {
    let d_hat = config.projection.d_hat[d_idx];
    let data = trial_data(config, source, trial)?;
    let ssm = SsmConfig {
        projection: Some(ProjectionSpec {
            kind: config.projection.kind,
            d_hat,
            seed: derive_seed(config.projection.seed, &[d_idx as u64, trial as u64]),
        }),
        layout: config.layout,
        solver: config.solver.clone(),
        mode: config.mode,
        threshold: config.threshold,
        tau: config.tau,
    };
    let model = SsmModel::fit(&data.train, &ssm)?;
    let mut out = Vec::with_capacity(config.queries.len());
    for &n in &config.queries {
        let (q, truth, support) = trial_queries(config, &data, trial, n)?;
        let start = Instant::now();
        let classification = model.classify(&q)?;
        let wall_time_ms = if config.record_timing {
            start.elapsed().as_secs_f64() * 1e3
        } else {
            0.0
        };
        observer.on_trial(&TrialContext {
            d_hat,
            n,
            trial,
            model: &model,
            classification: &classification,
            truth: &truth,
        });
        let report = &classification.report;
        let (correct, total) = score(&report.labels, &truth, &support);
        let q_norm = classification.queries.data().norm();
        out.push(TrialOutcome {
            d_hat,
            n,
            trial,
            correct,
            total,
            relative_residual: if q_norm > 0.0 { report.residual_norm / q_norm } else { 0.0 },
            mean_sci: report.sci.iter().sum::<f64>() / report.sci.len() as f64,
            wall_time_ms,
        });
    }
    Ok(out)
}

/// Runs the configured `(d_hat, n)` grid on the global thread pool.
pub fn run_sweep(config: &ExperimentConfig) -> Result<MetricsReport> {
    Ok(run_sweep_with(config, None, &NoObserver)?.report)
}

/// Runs the grid on `workers` threads (`None` for the global pool).
///
/// Seeds depend only on the master seed and the trial/cell indices, and
/// per-trial outcomes are aggregated in a fixed order, so the report is
/// identical for any worker count.
pub fn run_sweep_with(
    config: &ExperimentConfig,
    workers: Option<usize>,
    observer: &dyn SweepObserver,
) -> Result<SweepOutcome> {
    config.validate()?;
    let source = load_source(config)?;
    let dim = source_dim(config, &source)?;
    if let Some(&d_hat) = config.projection.d_hat.iter().find(|&&d| d > dim) {
        return Err(SsmError::InvalidParameter(format!(
            "d_hat {d_hat} exceeds the data dimension {dim}"
        )));
    }

    let jobs: Vec<(usize, usize)> = (0..config.projection.d_hat.len())
        .flat_map(|d| (0..config.trials).map(move |t| (d, t)))
        .collect();
    let execute = || {
        jobs.par_iter()
            .map(|&(d_idx, trial)| {
                run_job(config, &source, d_idx, trial, observer).map_err(|e| SsmError::Trial {
                    d_hat: config.projection.d_hat[d_idx],
                    trial,
                    source: Box::new(e),
                })
            })
            .collect::<Result<Vec<_>>>()
    };
    let per_job = match workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| SsmError::InvalidParameter(format!("thread pool: {e}")))?
            .install(execute),
        None => execute(),
    }?;

    let trials: Vec<TrialOutcome> = per_job.into_iter().flatten().collect();
    let nq = config.queries.len();
    let mut acc: Vec<CellAccumulator> = (0..config.projection.d_hat.len() * nq)
        .map(|_| CellAccumulator::default())
        .collect();
    for (i, t) in trials.iter().enumerate() {
        let d_idx = i / (config.trials * nq);
        let n_idx = i % nq;
        acc[d_idx * nq + n_idx].push(t);
    }
    let cells = acc
        .into_iter()
        .enumerate()
        .map(|(i, a)| {
            a.finish(
                config.projection.d_hat[i / nq],
                config.queries[i % nq],
                config.record_timing,
            )
        })
        .collect();

    let report = MetricsReport {
        metadata: ReportMetadata {
            master_seed: config.seed,
            projection_seed: config.projection.seed,
            projection_kind: config.projection.kind,
            config_hash: config.hash(),
            mode: config.mode,
            layout: config.layout,
            d_hat: config.projection.d_hat.clone(),
            queries: config.queries.clone(),
            trials: config.trials,
        },
        cells,
    };
    Ok(SweepOutcome { report, trials })
}
