use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::lsq::{cg_normal_equations, PivotedQr};
use crate::blocksparse::{energies_unchecked, gather_blocks, CoefficientMatrix};
use crate::dictionary::{QueryMatrix, TrainingDictionary};
use crate::error::{Result, SsmError};

/// Column count above which [`LsqMethod::Auto`] switches to CG.
pub const AUTO_CG_COLUMNS: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LsqMethod {
    #[default]
    Auto,
    Direct,
    ConjugateGradient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// Sparsity level: at most this many blocks enter per iteration.
    pub m0: usize,
    /// Absolute stopping tolerance on `‖R‖_F`; `None` means `1e-9 · ‖Q‖_F`.
    pub residual_tol: Option<f64>,
    /// Stop once the support reaches this size; `None` means `2 · m0`.
    pub max_support: Option<usize>,
    pub lsq_method: LsqMethod,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            m0: 4,
            residual_tol: None,
            max_support: None,
            lsq_method: LsqMethod::Auto,
            cg_tol: 1e-10,
            cg_max_iter: 500,
        }
    }
}

impl SolverOptions {
    pub fn with_m0(m0: usize) -> Self {
        Self {
            m0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m0 == 0 {
            return Err(SsmError::InvalidParameter("m0 must be at least 1".into()));
        }
        if let Some(t) = self.residual_tol {
            if !(t >= 0.0) {
                return Err(SsmError::InvalidParameter(format!(
                    "residual tolerance {t} must be >= 0"
                )));
            }
        }
        if self.max_support == Some(0) {
            return Err(SsmError::InvalidParameter("max_support must be at least 1".into()));
        }
        if !(self.cg_tol > 0.0) || self.cg_max_iter == 0 {
            return Err(SsmError::InvalidParameter(
                "cg_tol must be positive and cg_max_iter at least 1".into(),
            ));
        }
        Ok(())
    }

    fn support_cap(&self) -> usize {
        self.max_support.unwrap_or(2 * self.m0)
    }

    fn tolerance(&self, q_norm: f64) -> f64 {
        self.residual_tol.unwrap_or(1e-9 * q_norm)
    }
}

/// Coefficients over a fixed support and the residual they leave.
#[derive(Debug, Clone)]
pub struct SupportFit {
    pub coefficients: CoefficientMatrix,
    pub residual: DMatrix<f64>,
    /// Query columns whose CG solve failed and fell back to the direct method.
    pub cg_fallbacks: usize,
}

/// Result of a sparse subspace decomposition.
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub coefficients: CoefficientMatrix,
    /// Selected blocks in the order they entered.
    pub support: Vec<usize>,
    pub residual: DMatrix<f64>,
    pub residual_norm: f64,
    pub iterations: usize,
    /// `‖R‖_F` after each iteration.
    pub per_iteration_residuals: Vec<f64>,
    pub cg_fallbacks: usize,
}

impl Decomposition {
    pub fn sorted_support(&self) -> Vec<usize> {
        let mut s = self.support.clone();
        s.sort_unstable();
        s
    }
}

/// Per-query least squares restricted to the blocks in `support`.
///
/// Each query column is solved on its own against a shared factorization, so
/// results do not depend on how columns are scheduled.
pub fn least_squares_on_support(
    q: &QueryMatrix,
    dict: &TrainingDictionary,
    support: &[usize],
    opts: &SolverOptions,
) -> Result<SupportFit> {
    q.check_against(dict)?;
    if support.is_empty() {
        return Err(SsmError::InvalidParameter("support is empty".into()));
    }
    let layout = dict.layout();
    let mut seen = vec![false; layout.num_blocks()];
    for &k in support {
        layout.check_class(k)?;
        if std::mem::replace(&mut seen[k], true) {
            return Err(SsmError::InvalidParameter(format!("class {k} repeated in support")));
        }
    }
    Ok(fit_support(q.data(), dict, support, opts))
}

fn fit_support(
    q: &DMatrix<f64>,
    dict: &TrainingDictionary,
    support: &[usize],
    opts: &SolverOptions,
) -> SupportFit {
    let a = gather_blocks(dict, support);
    let use_cg = match opts.lsq_method {
        LsqMethod::Direct => false,
        LsqMethod::ConjugateGradient => true,
        LsqMethod::Auto => a.ncols() > AUTO_CG_COLUMNS,
    };
    let mut stacked = DMatrix::zeros(a.ncols(), q.ncols());
    let mut direct: Option<PivotedQr> = None;
    let mut cg_fallbacks = 0;
    for j in 0..q.ncols() {
        let b = q.column(j);
        let x = if use_cg {
            let sol = cg_normal_equations(&a, b, opts.cg_tol, opts.cg_max_iter);
            if sol.converged {
                sol.x
            } else {
                log::warn!(
                    "CG did not converge for query {j} after {} iterations; using direct solve",
                    sol.iterations
                );
                cg_fallbacks += 1;
                direct.get_or_insert_with(|| PivotedQr::new(&a)).solve(b)
            }
        } else {
            direct.get_or_insert_with(|| PivotedQr::new(&a)).solve(b)
        };
        stacked.set_column(j, &x);
    }
    let residual = q - &a * &stacked;
    SupportFit {
        coefficients: CoefficientMatrix::scatter(dict.layout().clone(), support, &stacked),
        residual,
        cg_fallbacks,
    }
}

/// Picks the maximal-energy window of comparable entries.
///
/// `gamma` must be sorted in descending order. A window `[i, j)` is admissible
/// when `gamma[i] <= 2 * gamma[j - 1]`; the one with the largest sum of squares
/// wins, the earliest on ties.
pub fn select_regularized(gamma: &[f64]) -> std::ops::Range<usize> {
    let mut best = 0..0;
    let mut best_energy = f64::NEG_INFINITY;
    for start in 0..gamma.len() {
        let mut end = start;
        let mut energy = 0.0;
        while end < gamma.len() && gamma[start] <= 2.0 * gamma[end] {
            energy += gamma[end] * gamma[end];
            end += 1;
        }
        if energy > best_energy {
            best_energy = energy;
            best = start..end;
        }
    }
    best
}

/// Greedy row-block-sparse decomposition `Q ≈ S A` (block-regularized OMP).
///
/// Each iteration correlates the residual with the dictionary, ranks blocks
/// by the Frobenius norm of their correlation rows, keeps the `m0` largest
/// nonzero ones not yet selected, and adds the maximal-energy window whose
/// entries are within a factor two of each other. All selected blocks are
/// then refit jointly. Stops when `‖R‖_F` reaches the tolerance, the support
/// reaches its cap, or no unselected block correlates with the residual.
pub fn ssd_romp(
    q: &QueryMatrix,
    dict: &TrainingDictionary,
    opts: &SolverOptions,
) -> Result<Decomposition> {
    dict.require_normalized()?;
    q.check_against(dict)?;
    opts.validate()?;

    let layout = dict.layout();
    let classes = layout.num_blocks();
    let q_mat = q.data();
    let tol = opts.tolerance(q_mat.norm());
    let cap = opts.support_cap();

    let mut selected = vec![false; classes];
    let mut support: Vec<usize> = Vec::new();
    let mut residual = q_mat.clone();
    let mut residual_norm = residual.norm();
    let mut coefficients = CoefficientMatrix::zeros(layout.clone(), q.count());
    let mut history = Vec::new();
    let mut cg_fallbacks = 0;

    while residual_norm > tol && support.len() < cap {
        let u = dict.data().tr_mul(&residual);
        let gamma = energies_unchecked(u.as_view(), layout).into_inner();

        let mut candidates: Vec<usize> = (0..classes)
            .filter(|&k| !selected[k] && gamma[k] > 0.0)
            .collect();
        // descending energy, lower index first on ties
        candidates.sort_by(|&a, &b| gamma[b].total_cmp(&gamma[a]).then(a.cmp(&b)));
        candidates.truncate(opts.m0);
        if candidates.is_empty() {
            break;
        }
        let sorted: Vec<f64> = candidates.iter().map(|&k| gamma[k]).collect();
        for &k in &candidates[select_regularized(&sorted)] {
            selected[k] = true;
            support.push(k);
        }

        let fit = fit_support(q_mat, dict, &support, opts);
        cg_fallbacks += fit.cg_fallbacks;
        coefficients = fit.coefficients;
        residual = fit.residual;
        residual_norm = residual.norm();
        history.push(residual_norm);
    }

    Ok(Decomposition {
        coefficients,
        iterations: history.len(),
        support,
        residual,
        residual_norm,
        per_iteration_residuals: history,
        cg_fallbacks,
    })
}
