//! Synthetic union-of-subspaces data with ground truth.
//!
//! Each class is a random `dim_k`-dimensional subspace of `R^d` (orthonormal
//! basis from a Gaussian matrix). Training samples and queries are Gaussian
//! combinations of basis vectors; queries are scaled to unit norm before
//! noise is added.

use nalgebra::DMatrix;
use rand::seq::index;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dictionary::TrainingDictionary;
use crate::error::{Result, SsmError};
use crate::rng::{derive_seed, stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SubspaceSpec {
    pub classes: usize,
    pub dim: usize,
    pub subspace_dim: usize,
    pub samples_per_class: usize,
    /// Relative noise on training samples, same model as query noise.
    pub sample_noise: f64,
    /// Permit `classes · subspace_dim > dim`.
    pub overcomplete: bool,
}

impl Default for SubspaceSpec {
    fn default() -> Self {
        Self {
            classes: 40,
            dim: 2048,
            subspace_dim: 5,
            samples_per_class: 8,
            sample_noise: 0.0,
            overcomplete: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryMode {
    /// All queries drawn from the same set of generating classes.
    #[default]
    SharedSupport,
    /// Each query drawn from a single class of its own.
    IndividualLabels,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub query_sigma: f64,
    pub sample_sigma: f64,
}

#[derive(Debug, Clone)]
pub struct SynthInstance {
    /// Raw (unnormalized) training samples.
    pub dictionary: TrainingDictionary,
    pub true_bases: Vec<DMatrix<f64>>,
    /// `d × n`, possibly with zero columns before queries are generated.
    pub queries: DMatrix<f64>,
    /// Queries before noise.
    pub clean_queries: DMatrix<f64>,
    /// Ascending generating classes.
    pub true_support: Vec<usize>,
    /// Per-query generating class (the first generating class in shared mode).
    pub true_labels: Vec<usize>,
    pub noise: NoiseSpec,
}

impl SynthInstance {
    pub fn class_datasets(&self) -> Vec<DMatrix<f64>> {
        (0..self.dictionary.num_classes())
            .map(|k| self.dictionary.block(k).clone_owned())
            .collect()
    }

    pub fn num_classes(&self) -> usize {
        self.true_bases.len()
    }

    pub fn dim(&self) -> usize {
        self.dictionary.dim()
    }
}

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

/// Adds `N(0, (sigma · ‖x_j‖ / √d)²)` noise to every coordinate of column j.
fn add_relative_noise(x: &mut DMatrix<f64>, sigma: f64, rng: &mut ChaCha8Rng) {
    if sigma == 0.0 {
        return;
    }
    let d = x.nrows() as f64;
    for mut col in x.column_iter_mut() {
        let scale = sigma * col.norm() / d.sqrt();
        for v in col.iter_mut() {
            let z: f64 = StandardNormal.sample(rng);
            *v += scale * z;
        }
    }
}

/// Class subspaces and training samples; queries are left empty.
pub fn gen_class_subspaces(spec: &SubspaceSpec, seed: u64) -> Result<SynthInstance> {
    let SubspaceSpec {
        classes,
        dim,
        subspace_dim,
        samples_per_class,
        sample_noise,
        overcomplete,
    } = *spec;
    if classes == 0 || subspace_dim == 0 {
        return Err(SsmError::InvalidParameter("need at least one class of dimension >= 1".into()));
    }
    if subspace_dim > samples_per_class || samples_per_class > dim {
        return Err(SsmError::InvalidParameter(format!(
            "need subspace_dim <= samples_per_class <= dim, got {subspace_dim}, {samples_per_class}, {dim}"
        )));
    }
    if !overcomplete && classes * subspace_dim > dim {
        return Err(SsmError::InvalidParameter(format!(
            "{classes} classes of dimension {subspace_dim} do not fit independently in R^{dim}"
        )));
    }
    if !(sample_noise >= 0.0) {
        return Err(SsmError::InvalidParameter("sample noise must be >= 0".into()));
    }

    let mut rng = stream(seed);
    let mut bases = Vec::with_capacity(classes);
    let mut datasets = Vec::with_capacity(classes);
    for _ in 0..classes {
        let basis = gaussian(&mut rng, dim, subspace_dim).qr().q();
        let mut samples = &basis * gaussian(&mut rng, subspace_dim, samples_per_class);
        add_relative_noise(&mut samples, sample_noise, &mut rng);
        bases.push(basis);
        datasets.push(samples);
    }
    Ok(SynthInstance {
        dictionary: TrainingDictionary::build(&datasets)?,
        true_bases: bases,
        queries: DMatrix::zeros(dim, 0),
        clean_queries: DMatrix::zeros(dim, 0),
        true_support: Vec::new(),
        true_labels: Vec::new(),
        noise: NoiseSpec {
            query_sigma: 0.0,
            sample_sigma: sample_noise,
        },
    })
}

fn draw_query(instance: &SynthInstance, classes: &[usize], rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut q = nalgebra::DVector::zeros(instance.dim());
    for &k in classes {
        let b = &instance.true_bases[k];
        q += b * gaussian(rng, b.ncols(), 1).column(0);
    }
    let norm = q.norm();
    if norm > 0.0 {
        q.unscale_mut(norm);
    }
    q.as_slice().to_vec()
}

fn with_queries(
    instance: &SynthInstance,
    clean: DMatrix<f64>,
    labels: Vec<usize>,
    support: Vec<usize>,
    noise_sigma: f64,
    rng: &mut ChaCha8Rng,
) -> SynthInstance {
    let mut noisy = clean.clone();
    add_relative_noise(&mut noisy, noise_sigma, rng);
    SynthInstance {
        dictionary: instance.dictionary.clone(),
        true_bases: instance.true_bases.clone(),
        queries: noisy,
        clean_queries: clean,
        true_support: support,
        true_labels: labels,
        noise: NoiseSpec {
            query_sigma: noise_sigma,
            sample_sigma: instance.noise.sample_sigma,
        },
    }
}

/// Draws `n` unit-norm queries from `m_true` randomly chosen classes.
///
/// In [`QueryMode::IndividualLabels`] query `j` comes from generating class
/// `⌊j · m_true / n⌋`, so labels form contiguous runs (e.g. `a,a,a,b,b`).
pub fn gen_queries(
    instance: &SynthInstance,
    m_true: usize,
    n: usize,
    mode: QueryMode,
    noise_sigma: f64,
    seed: u64,
) -> Result<SynthInstance> {
    let classes = instance.num_classes();
    if m_true == 0 || m_true > classes {
        return Err(SsmError::InvalidParameter(format!(
            "cannot draw {m_true} generating classes out of {classes}"
        )));
    }
    if n == 0 {
        return Err(SsmError::InvalidParameter("need at least one query".into()));
    }
    if mode == QueryMode::IndividualLabels && m_true > n {
        return Err(SsmError::InvalidParameter(format!(
            "{m_true} individual labels need at least as many queries, got {n}"
        )));
    }
    if !(noise_sigma >= 0.0) {
        return Err(SsmError::InvalidParameter("noise must be >= 0".into()));
    }
    let mut rng = stream(derive_seed(seed, &[0]));
    let mut support: Vec<usize> = index::sample(&mut rng, classes, m_true).into_vec();
    support.sort_unstable();

    let mut clean = DMatrix::zeros(instance.dim(), n);
    let mut labels = Vec::with_capacity(n);
    for j in 0..n {
        let (q, label) = match mode {
            QueryMode::SharedSupport => (draw_query(instance, &support, &mut rng), support[0]),
            QueryMode::IndividualLabels => {
                let k = support[j * m_true / n];
                (draw_query(instance, &[k], &mut rng), k)
            }
        };
        clean.set_column(j, &nalgebra::DVector::from_vec(q));
        labels.push(label);
    }
    Ok(with_queries(instance, clean, labels, support, noise_sigma, &mut rng))
}

/// Draws one single-class query per entry of `labels`.
pub fn gen_labeled_queries(
    instance: &SynthInstance,
    labels: &[usize],
    noise_sigma: f64,
    seed: u64,
) -> Result<SynthInstance> {
    if labels.is_empty() {
        return Err(SsmError::InvalidParameter("need at least one query".into()));
    }
    if let Some(&k) = labels.iter().find(|&&k| k >= instance.num_classes()) {
        return Err(SsmError::ClassOutOfRange {
            index: k,
            classes: instance.num_classes(),
        });
    }
    let mut rng = stream(derive_seed(seed, &[1]));
    let mut clean = DMatrix::zeros(instance.dim(), labels.len());
    for (j, &k) in labels.iter().enumerate() {
        clean.set_column(j, &nalgebra::DVector::from_vec(draw_query(instance, &[k], &mut rng)));
    }
    let mut support = labels.to_vec();
    support.sort_unstable();
    support.dedup();
    Ok(with_queries(instance, clean, labels.to_vec(), support, noise_sigma, &mut rng))
}

/// Sets exactly `⌊fraction · len⌋` coordinates, chosen without replacement,
/// to `lo` or `hi` with a fair coin. `lo`/`hi` default to the min/max of `x`.
pub fn salt_pepper_corrupt(
    x: &[f64],
    fraction: f64,
    lo: Option<f64>,
    hi: Option<f64>,
    seed: u64,
) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(SsmError::InvalidParameter(format!(
            "fraction {fraction} must be in [0, 1]"
        )));
    }
    let lo = lo.unwrap_or_else(|| x.iter().copied().fold(f64::INFINITY, f64::min));
    let hi = hi.unwrap_or_else(|| x.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    let count = (fraction * x.len() as f64).floor() as usize;
    let mut rng = stream(seed);
    let mut out = x.to_vec();
    for i in index::sample(&mut rng, x.len(), count) {
        out[i] = if rng.random::<bool>() { hi } else { lo };
    }
    Ok(out)
}
