//! Exact minimum block-support search by enumeration. Exponential in the
//! number of classes; meant for checking the greedy solver on small problems.

use itertools::Itertools;
use nalgebra::DMatrix;

use crate::blocksparse::{check_enumeration, gather_blocks, CoefficientMatrix};
use crate::dictionary::{QueryMatrix, TrainingDictionary};
use crate::error::{Result, SsmError};

#[derive(Debug, Clone)]
pub struct OracleSolution {
    /// Ascending class indices.
    pub support: Vec<usize>,
    pub coefficients: CoefficientMatrix,
    pub residual_norm: f64,
}

/// Smallest block support whose least-squares residual is at most `eps`.
///
/// Supports are tried by increasing size and, within a size, in lexicographic
/// order, so ties go to the lexicographically first support. Least squares
/// here uses an SVD pseudo-inverse. `cap` bounds the total number of supports
/// examined.
pub fn brute_force_block_l0(
    q: &QueryMatrix,
    dict: &TrainingDictionary,
    max_blocks: usize,
    eps: f64,
    cap: u128,
) -> Result<Option<OracleSolution>> {
    q.check_against(dict)?;
    if !(eps >= 0.0) {
        return Err(SsmError::InvalidParameter(format!("eps {eps} must be >= 0")));
    }
    let classes = dict.num_classes();
    let max_blocks = max_blocks.min(classes);
    let mut total: u128 = 0;
    for m in 1..=max_blocks {
        total += check_enumeration(classes, m, cap)?;
    }
    if total > cap {
        return Err(SsmError::EnumerationCap { count: total, cap });
    }

    let qm = q.data();
    for m in 1..=max_blocks {
        for support in (0..classes).combinations(m) {
            let a = gather_blocks(dict, &support);
            let x = pseudo_inverse_solve(a.clone(), qm);
            let residual_norm = (qm - &a * &x).norm();
            if residual_norm <= eps {
                let coefficients =
                    CoefficientMatrix::scatter(dict.layout().clone(), &support, &x);
                return Ok(Some(OracleSolution {
                    support,
                    coefficients,
                    residual_norm,
                }));
            }
        }
    }
    Ok(None)
}

fn pseudo_inverse_solve(a: DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let tol = smax * f64::EPSILON * svd.singular_values.len().max(b.nrows()) as f64;
    svd.solve(b, tol).expect("u and v were computed")
}
