//! Residual-based classifiers over a decomposition, and the end-to-end
//! pipeline: reduce, normalize, decompose, classify.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::blocksparse::CoefficientMatrix;
use crate::dictionary::{BlockLayout, QueryMatrix, TrainingDictionary};
use crate::error::{Result, SsmError};
use crate::projection::{ProjectionKind, ProjectionMatrix};
use crate::solver::{ssd_romp, Decomposition, SolverOptions};

pub const DEFAULT_TAU: f64 = 0.5;
pub const DEFAULT_NTOM_THRESHOLD: f64 = 0.9;

/// Per-class residuals of the whole query set and of each query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualTable {
    /// `‖Q − S_k A_k‖_F` for each class.
    pub per_class: Vec<f64>,
    /// `per_query[k][j] = ‖q_j − S_k α_k^(j)‖₂`.
    pub per_query: Vec<Vec<f64>>,
}

impl ResidualTable {
    pub fn compute(q: &QueryMatrix, dict: &TrainingDictionary, a: &CoefficientMatrix) -> Result<Self> {
        Ok(Self {
            per_class: class_residuals(q, dict, a)?,
            per_query: per_query_residuals(q, dict, a)?,
        })
    }

    pub fn query_column(&self, j: usize) -> Vec<f64> {
        self.per_query.iter().map(|row| row[j]).collect()
    }

    pub fn num_queries(&self) -> usize {
        self.per_query.first().map_or(0, Vec::len)
    }
}

fn check_shapes(q: &QueryMatrix, dict: &TrainingDictionary, a: &CoefficientMatrix) -> Result<()> {
    q.check_against(dict)?;
    if a.layout() != dict.layout() {
        return Err(SsmError::DimensionMismatch(
            "coefficient layout differs from dictionary layout".into(),
        ));
    }
    if a.num_queries() != q.count() {
        return Err(SsmError::DimensionMismatch(format!(
            "{} coefficient columns for {} queries",
            a.num_queries(),
            q.count()
        )));
    }
    Ok(())
}

/// Blocks outside the support reproduce `‖Q‖_F` exactly.
pub fn class_residuals(
    q: &QueryMatrix,
    dict: &TrainingDictionary,
    a: &CoefficientMatrix,
) -> Result<Vec<f64>> {
    check_shapes(q, dict, a)?;
    let q_norm = q.data().norm();
    Ok((0..dict.num_classes())
        .map(|k| {
            if !a.support().contains(&k) {
                return q_norm;
            }
            (q.data() - dict.block(k) * a.block(k)).norm()
        })
        .collect())
}

pub fn per_query_residuals(
    q: &QueryMatrix,
    dict: &TrainingDictionary,
    a: &CoefficientMatrix,
) -> Result<Vec<Vec<f64>>> {
    check_shapes(q, dict, a)?;
    let col_norms: Vec<f64> = q.data().column_iter().map(|c| c.norm()).collect();
    Ok((0..dict.num_classes())
        .map(|k| {
            if !a.support().contains(&k) {
                return col_norms.clone();
            }
            let r = q.data() - dict.block(k) * a.block(k);
            r.column_iter().map(|c| c.norm()).collect()
        })
        .collect())
}

fn argmin(values: impl IntoIterator<Item = f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (k, v) in values.into_iter().enumerate() {
        match best {
            Some((_, b)) if !(v < b) => {}
            _ => best = Some((k, v)),
        }
    }
    best.map(|(k, _)| k)
}

/// Class with the smallest residual; the lowest index wins ties.
pub fn classify_n_to_one(residuals: &[f64]) -> Result<usize> {
    argmin(residuals.iter().copied())
        .ok_or_else(|| SsmError::InvalidParameter("empty residual vector".into()))
}

/// Column-wise argmin of a `C × n` residual table.
pub fn classify_n_to_ones(per_query: &[Vec<f64>]) -> Result<Vec<usize>> {
    let n = per_query.first().map_or(0, Vec::len);
    if n == 0 {
        return Err(SsmError::InvalidParameter("empty residual matrix".into()));
    }
    Ok((0..n)
        .map(|j| argmin(per_query.iter().map(|row| row[j])).expect("non-empty"))
        .collect())
}

/// For each query, every class with `r_k^(j) <= threshold · ‖q_j‖₂`.
pub fn classify_n_to_m(
    per_query: &[Vec<f64>],
    query_norms: &[f64],
    threshold: f64,
) -> Result<Vec<Vec<usize>>> {
    if !(threshold > 0.0) {
        return Err(SsmError::InvalidParameter(format!(
            "threshold {threshold} must be positive"
        )));
    }
    let n = query_norms.len();
    if per_query.iter().any(|row| row.len() != n) {
        return Err(SsmError::DimensionMismatch("residual table width differs from query count".into()));
    }
    Ok((0..n)
        .map(|j| {
            let limit = threshold * query_norms[j];
            (0..per_query.len())
                .filter(|&k| per_query[k][j] <= limit)
                .collect()
        })
        .collect())
}

/// Per-query sparsity concentration index over the class blocks:
/// `(C · max_k ‖α_k‖₁ / ‖α‖₁ − 1) / (C − 1)`, and 0 for an all-zero column.
pub fn sparsity_concentration_index(a: &CoefficientMatrix) -> Result<Vec<f64>> {
    let layout = a.layout();
    let c = layout.num_blocks();
    if c < 2 {
        return Err(SsmError::InvalidParameter("SCI needs at least two classes".into()));
    }
    let cf = c as f64;
    Ok((0..a.num_queries())
        .map(|j| {
            let col = a.data().column(j);
            let masses: Vec<f64> = layout
                .ranges()
                .map(|r| col.rows(r.start, r.len()).iter().map(|v| v.abs()).sum())
                .collect();
            let total: f64 = masses.iter().sum();
            if total == 0.0 {
                return 0.0;
            }
            let max = masses.iter().copied().fold(0.0, f64::max);
            ((cf * (max / total) - 1.0) / (cf - 1.0)).clamp(0.0, 1.0)
        })
        .collect())
}

/// Valid iff `sci >= tau`.
pub fn validate_query(sci: f64, tau: f64) -> Result<bool> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(SsmError::InvalidParameter(format!("tau {tau} must be in (0, 1)")));
    }
    Ok(sci >= tau)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayoutMode {
    /// One block per class.
    #[default]
    Class,
    /// One block per dictionary column.
    Flat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierMode {
    #[default]
    NToOne,
    NToOnes,
    NToM,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionSpec {
    pub kind: ProjectionKind,
    pub d_hat: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SsmConfig {
    /// `None` keeps the original feature dimension.
    pub projection: Option<ProjectionSpec>,
    pub layout: LayoutMode,
    pub solver: SolverOptions,
    pub mode: ClassifierMode,
    /// Relative residual threshold for [`ClassifierMode::NToM`].
    pub threshold: f64,
    pub tau: f64,
}

impl Default for SsmConfig {
    fn default() -> Self {
        Self {
            projection: None,
            layout: LayoutMode::Class,
            solver: SolverOptions::default(),
            mode: ClassifierMode::NToOne,
            threshold: DEFAULT_NTOM_THRESHOLD,
            tau: DEFAULT_TAU,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Labels {
    Single(usize),
    PerQuery(Vec<usize>),
    Sets(Vec<Vec<usize>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub mode: ClassifierMode,
    pub labels: Labels,
    pub residuals: ResidualTable,
    pub sci: Vec<f64>,
    pub valid: Vec<bool>,
    /// Classes with a nonzero coefficient block, ascending.
    pub support: Vec<usize>,
    pub iterations: usize,
    pub residual_norm: f64,
}

/// Report plus the intermediate objects it was computed from.
#[derive(Debug, Clone)]
pub struct Classification {
    pub report: ClassificationReport,
    /// Decomposition in the solver's layout (class or flat).
    pub decomposition: Decomposition,
    /// Coefficients regrouped by class.
    pub class_coefficients: CoefficientMatrix,
    /// Queries after dimensionality reduction.
    pub queries: QueryMatrix,
}

/// A dictionary prepared once (reduced and normalized) for repeated queries.
#[derive(Debug, Clone)]
pub struct SsmModel {
    config: SsmConfig,
    projection: Option<ProjectionMatrix>,
    class_dict: TrainingDictionary,
    solver_dict: TrainingDictionary,
}

impl SsmModel {
    pub fn fit(class_datasets: &[DMatrix<f64>], config: &SsmConfig) -> Result<Self> {
        config.solver.validate()?;
        validate_query(1.0, config.tau)?;
        if !(config.threshold > 0.0) {
            return Err(SsmError::InvalidParameter(format!(
                "threshold {} must be positive",
                config.threshold
            )));
        }
        let raw = TrainingDictionary::build(class_datasets)?;
        let projection = config
            .projection
            .as_ref()
            .map(|p| ProjectionMatrix::new(raw.dim(), p.d_hat, p.seed, p.kind))
            .transpose()?;
        let reduced = match &projection {
            Some(p) => TrainingDictionary::from_parts(p.project(raw.data())?, raw.layout().clone())?,
            None => raw,
        };
        let class_dict = reduced.normalize_columns()?;
        let solver_dict = match config.layout {
            LayoutMode::Class => class_dict.clone(),
            LayoutMode::Flat => class_dict.with_layout(BlockLayout::flat(class_dict.layout().total())?)?,
        };
        Ok(Self {
            config: config.clone(),
            projection,
            class_dict,
            solver_dict,
        })
    }

    pub fn dictionary(&self) -> &TrainingDictionary {
        &self.class_dict
    }

    pub fn solver_dictionary(&self) -> &TrainingDictionary {
        &self.solver_dict
    }

    pub fn projection(&self) -> Option<&ProjectionMatrix> {
        self.projection.as_ref()
    }

    pub fn config(&self) -> &SsmConfig {
        &self.config
    }

    pub fn classify(&self, queries: &DMatrix<f64>) -> Result<Classification> {
        let reduced = match &self.projection {
            Some(p) => p.project(queries)?,
            None => queries.clone(),
        };
        let q = QueryMatrix::new(reduced)?;
        let decomposition = ssd_romp(&q, &self.solver_dict, &self.config.solver)?;
        let class_coefficients = match self.config.layout {
            LayoutMode::Class => decomposition.coefficients.clone(),
            LayoutMode::Flat => decomposition
                .coefficients
                .relayout(self.class_dict.layout().clone())?,
        };
        let residuals = ResidualTable::compute(&q, &self.class_dict, &class_coefficients)?;
        let labels = match self.config.mode {
            ClassifierMode::NToOne => Labels::Single(classify_n_to_one(&residuals.per_class)?),
            ClassifierMode::NToOnes => Labels::PerQuery(classify_n_to_ones(&residuals.per_query)?),
            ClassifierMode::NToM => {
                let norms: Vec<f64> = q.data().column_iter().map(|c| c.norm()).collect();
                Labels::Sets(classify_n_to_m(&residuals.per_query, &norms, self.config.threshold)?)
            }
        };
        let sci = if self.class_dict.num_classes() >= 2 {
            sparsity_concentration_index(&class_coefficients)?
        } else {
            vec![1.0; q.count()]
        };
        let valid = sci
            .iter()
            .map(|&s| validate_query(s, self.config.tau))
            .collect::<Result<Vec<_>>>()?;
        let report = ClassificationReport {
            mode: self.config.mode,
            labels,
            residuals,
            sci,
            valid,
            support: class_coefficients.support().iter().copied().collect(),
            iterations: decomposition.iterations,
            residual_norm: decomposition.residual_norm,
        };
        Ok(Classification {
            report,
            decomposition,
            class_coefficients,
            queries: q,
        })
    }
}

/// One-shot pipeline over raw class datasets and raw queries.
pub fn ssm_classify(
    queries: &DMatrix<f64>,
    class_datasets: &[DMatrix<f64>],
    config: &SsmConfig,
) -> Result<ClassificationReport> {
    Ok(SsmModel::fit(class_datasets, config)?.classify(queries)?.report)
}
