use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classify::{ClassifierMode, LayoutMode, DEFAULT_NTOM_THRESHOLD, DEFAULT_TAU};
use crate::error::{Result, SsmError};
use crate::projection::ProjectionKind;
use crate::solver::SolverOptions;
use crate::synth::{QueryMode, SubspaceSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSource {
    pub subspaces: SubspaceSpec,
    /// Generating classes per trial. Shared by all queries in the n-to-one
    /// mode, one class per query otherwise.
    pub m_true: usize,
    pub noise_sigma: f64,
}

impl Default for SyntheticSource {
    fn default() -> Self {
        Self {
            subspaces: SubspaceSpec::default(),
            m_true: 1,
            noise_sigma: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum DataSource {
    Synthetic(SyntheticSource),
    /// One CSV per class, samples as columns.
    Csv { class_paths: Vec<PathBuf> },
    /// One subdirectory of PGM images per class.
    Images { root: PathBuf },
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Synthetic(SyntheticSource::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProjectionGrid {
    pub kind: ProjectionKind,
    pub d_hat: Vec<usize>,
    pub seed: u64,
}

impl Default for ProjectionGrid {
    fn default() -> Self {
        Self {
            kind: ProjectionKind::Gaussian,
            d_hat: vec![32, 64, 128, 256, 512],
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub data: DataSource,
    pub projection: ProjectionGrid,
    pub layout: LayoutMode,
    pub solver: SolverOptions,
    pub mode: ClassifierMode,
    pub threshold: f64,
    pub tau: f64,
    /// Query counts `n` to sweep.
    pub queries: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    /// Record wall time per cell. Off by default so reports stay
    /// byte-reproducible.
    pub record_timing: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            data: DataSource::default(),
            projection: ProjectionGrid::default(),
            layout: LayoutMode::Class,
            solver: SolverOptions::default(),
            mode: ClassifierMode::NToOne,
            threshold: DEFAULT_NTOM_THRESHOLD,
            tau: DEFAULT_TAU,
            queries: vec![1, 2, 4, 8],
            trials: 100,
            seed: 0,
            record_timing: false,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.projection.d_hat.is_empty() {
            return Err(SsmError::InvalidParameter("d_hat list is empty".into()));
        }
        if self.queries.is_empty() || self.queries.contains(&0) {
            return Err(SsmError::InvalidParameter("query counts must be non-empty and positive".into()));
        }
        if self.trials == 0 {
            return Err(SsmError::InvalidParameter("trial count must be at least 1".into()));
        }
        if let DataSource::Synthetic(s) = &self.data {
            if s.m_true == 0 || s.m_true > s.subspaces.classes {
                return Err(SsmError::InvalidParameter(format!(
                    "m_true {} must be in 1..={}",
                    s.m_true, s.subspaces.classes
                )));
            }
            if let Some(&d_hat) = self.projection.d_hat.iter().find(|&&d| d > s.subspaces.dim) {
                return Err(SsmError::InvalidParameter(format!(
                    "d_hat {d_hat} exceeds the ambient dimension {}",
                    s.subspaces.dim
                )));
            }
        }
        self.solver.validate()
    }

    /// SHA-256 of the canonical JSON encoding, hex encoded.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&bytes)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub(crate) fn query_mode(&self) -> QueryMode {
        match self.mode {
            ClassifierMode::NToOne => QueryMode::SharedSupport,
            ClassifierMode::NToOnes | ClassifierMode::NToM => QueryMode::IndividualLabels,
        }
    }
}
