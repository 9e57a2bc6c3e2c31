//! Data-independent dimensionality reduction applied to both the dictionary
//! and the queries.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SsmError};

/// Oversampling constant used when none is given.
pub const DEFAULT_OVERSAMPLING: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionKind {
    Gaussian,
    Downsample,
    Identity,
}

/// A `d_hat × d` linear map.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionMatrix {
    data: DMatrix<f64>,
    seed: u64,
    kind: ProjectionKind,
}

impl ProjectionMatrix {
    /// Builds the map deterministically from `(d, d_hat, seed, kind)`.
    ///
    /// Gaussian entries are i.i.d. `N(0, 1/d_hat)`, drawn from a ChaCha8
    /// stream seeded with `seed` and filled in row-major order. Downsampling
    /// keeps every `⌈d/d_hat⌉`-th coordinate when those all fit, and the
    /// evenly spaced coordinates `⌊i·d/d_hat⌋` otherwise.
    pub fn new(d: usize, d_hat: usize, seed: u64, kind: ProjectionKind) -> Result<Self> {
        if d_hat == 0 || d_hat > d {
            return Err(SsmError::InvalidParameter(format!(
                "projection dimension {d_hat} must be in 1..={d}"
            )));
        }
        let data = match kind {
            ProjectionKind::Identity => {
                if d_hat != d {
                    return Err(SsmError::InvalidParameter(format!(
                        "identity projection needs d_hat == d, got {d_hat} != {d}"
                    )));
                }
                DMatrix::identity(d, d)
            }
            ProjectionKind::Downsample => {
                let step = d.div_ceil(d_hat);
                let strided = (d_hat - 1) * step < d;
                let mut m = DMatrix::zeros(d_hat, d);
                for i in 0..d_hat {
                    let j = if strided { i * step } else { i * d / d_hat };
                    m[(i, j)] = 1.0;
                }
                m
            }
            ProjectionKind::Gaussian => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let scale = (d_hat as f64).sqrt().recip();
                let entries: Vec<f64> = (0..d_hat * d)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        z * scale
                    })
                    .collect();
                DMatrix::from_row_slice(d_hat, d, &entries)
            }
        };
        Ok(Self { data, seed, kind })
    }

    /// `P · x`.
    pub fn project(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.nrows() != self.data.ncols() {
            return Err(SsmError::DimensionMismatch(format!(
                "projection expects {} rows, got {}",
                self.data.ncols(),
                x.nrows()
            )));
        }
        Ok(&self.data * x)
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn kind(&self) -> ProjectionKind {
        self.kind
    }

    pub fn input_dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.data.nrows()
    }
}

/// Advisory lower bound `⌈c · m · ln(d/m)⌉` on the reduced dimension,
/// clamped to `[1, d]`.
pub fn min_projection_dim(m: usize, d: usize, c: f64) -> Result<usize> {
    if m == 0 || m >= d {
        return Err(SsmError::InvalidParameter(format!(
            "sparsity {m} must be in 1..{d}"
        )));
    }
    if !(c > 0.0) {
        return Err(SsmError::InvalidParameter(format!(
            "oversampling constant {c} must be positive"
        )));
    }
    let raw = (c * m as f64 * (d as f64 / m as f64).ln()).ceil();
    Ok((raw as usize).clamp(1, d))
}
