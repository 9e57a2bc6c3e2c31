//! Block-sparsity measures over a [`BlockLayout`].
//!
//! `class_energy_map` sends a coefficient matrix to its vector of block
//! Frobenius norms (the point in classification space). Block l0/l1 are the
//! l0/l1 norms of that vector.

use std::collections::BTreeSet;

use itertools::Itertools;
use nalgebra::{DMatrix, DMatrixView, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dictionary::{BlockLayout, TrainingDictionary};
use crate::error::{Result, SsmError};

/// Default support-count cap for exhaustive enumerations.
pub const DEFAULT_SUPPORT_CAP: u128 = 10_000;

/// Non-negative block energies, one entry per class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassEnergyVector(Vec<f64>);

impl ClassEnergyVector {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn l1(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn count_above(&self, tol: f64) -> usize {
        self.0.iter().filter(|&&v| v > tol).count()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Row-block Frobenius norms of `x`.
pub fn class_energy_map(x: &DMatrix<f64>, layout: &BlockLayout) -> Result<ClassEnergyVector> {
    layout.check_rows(x.nrows())?;
    Ok(energies_unchecked(x.as_view(), layout))
}

pub(crate) fn energies_unchecked(x: DMatrixView<'_, f64>, layout: &BlockLayout) -> ClassEnergyVector {
    let values = layout
        .ranges()
        .map(|r| x.rows(r.start, r.len()).norm())
        .collect();
    ClassEnergyVector(values)
}

/// Number of blocks whose energy is strictly above `tol`.
pub fn block_l0(x: &DMatrix<f64>, layout: &BlockLayout, tol: f64) -> Result<usize> {
    if !(tol >= 0.0) {
        return Err(SsmError::InvalidParameter(format!("tolerance {tol} must be >= 0")));
    }
    Ok(class_energy_map(x, layout)?.count_above(tol))
}

/// Sum of block Frobenius norms.
pub fn block_l1(x: &DMatrix<f64>, layout: &BlockLayout) -> Result<f64> {
    Ok(class_energy_map(x, layout)?.l1())
}

/// `vec(Xᵀ)`: the rows of `x` laid end to end, with every block size scaled
/// by the column count so block sparsity is preserved.
pub fn row_block_vectorize(
    x: &DMatrix<f64>,
    layout: &BlockLayout,
) -> Result<(DVector<f64>, BlockLayout)> {
    layout.check_rows(x.nrows())?;
    let n = x.ncols();
    if n == 0 {
        return Err(SsmError::InvalidParameter("matrix has no columns".into()));
    }
    let v = DVector::from_iterator(
        x.nrows() * n,
        (0..x.nrows()).flat_map(|i| (0..n).map(move |j| x[(i, j)])),
    );
    Ok((v, layout.scaled(n)?))
}

/// A row-block-sparse coefficient matrix with an explicit support.
///
/// Blocks outside the support are stored as exact zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientMatrix {
    data: DMatrix<f64>,
    layout: BlockLayout,
    support: BTreeSet<usize>,
}

impl CoefficientMatrix {
    pub fn zeros(layout: BlockLayout, n: usize) -> Self {
        Self {
            data: DMatrix::zeros(layout.total(), n),
            layout,
            support: BTreeSet::new(),
        }
    }

    /// Wraps `data`, zeroing every block whose energy is at most `tol`.
    pub fn from_dense(mut data: DMatrix<f64>, layout: BlockLayout, tol: f64) -> Result<Self> {
        let gamma = class_energy_map(&data, &layout)?;
        let mut support = BTreeSet::new();
        for (k, &g) in gamma.values().iter().enumerate() {
            if g > tol {
                support.insert(k);
            } else {
                let r = layout.range(k);
                data.rows_mut(r.start, r.len()).fill(0.0);
            }
        }
        Ok(Self {
            data,
            layout,
            support,
        })
    }

    /// Builds from per-block values stacked in the order of `support`.
    /// Rows of `stacked` follow the concatenation of the selected blocks.
    pub(crate) fn scatter(layout: BlockLayout, support: &[usize], stacked: &DMatrix<f64>) -> Self {
        let mut data = DMatrix::zeros(layout.total(), stacked.ncols());
        let mut row = 0;
        for &k in support {
            let r = layout.range(k);
            data.rows_mut(r.start, r.len())
                .copy_from(&stacked.rows(row, r.len()));
            row += r.len();
        }
        Self {
            data,
            layout,
            support: support.iter().copied().collect(),
        }
    }

    /// Same coefficients under a different partition of the rows.
    /// The support is recomputed with exact-zero tolerance.
    pub fn relayout(&self, layout: BlockLayout) -> Result<Self> {
        Self::from_dense(self.data.clone(), layout, 0.0)
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn layout(&self) -> &BlockLayout {
        &self.layout
    }

    pub fn support(&self) -> &BTreeSet<usize> {
        &self.support
    }

    pub fn block(&self, k: usize) -> DMatrixView<'_, f64> {
        let r = self.layout.range(k);
        self.data.rows(r.start, r.len())
    }

    pub fn num_queries(&self) -> usize {
        self.data.ncols()
    }

    pub fn energies(&self) -> ClassEnergyVector {
        energies_unchecked(self.data.as_view(), &self.layout)
    }
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

pub(crate) fn check_enumeration(classes: usize, m: usize, cap: u128) -> Result<u128> {
    let count = binomial(classes, m);
    if count > cap {
        return Err(SsmError::EnumerationCap { count, cap });
    }
    Ok(count)
}

/// Columns of the selected blocks, concatenated in support order.
pub(crate) fn gather_blocks(dict: &TrainingDictionary, support: &[usize]) -> DMatrix<f64> {
    let layout = dict.layout();
    let cols: usize = support.iter().map(|&k| layout.size(k)).sum();
    let mut out = DMatrix::zeros(dict.dim(), cols);
    let mut c = 0;
    for &k in support {
        let s = layout.size(k);
        out.columns_mut(c, s).copy_from(&dict.block(k));
        c += s;
    }
    out
}

/// Exhaustive block-RIP constant at block sparsity `m`.
///
/// For every size-`m` block support, takes the extreme singular values of the
/// selected columns and returns the largest `max(1 - σ_min², σ_max² - 1)`.
/// Supports with more columns than rows have `σ_min = 0`.
pub fn estimate_block_rip_constant(
    dict: &TrainingDictionary,
    m: usize,
    cap: u128,
) -> Result<f64> {
    dict.require_normalized()?;
    let classes = dict.num_classes();
    if m == 0 || m > classes {
        return Err(SsmError::InvalidParameter(format!(
            "block sparsity {m} must be in 1..={classes}"
        )));
    }
    check_enumeration(classes, m, cap)?;
    let supports: Vec<Vec<usize>> = (0..classes).combinations(m).collect();
    let delta = supports
        .par_iter()
        .map(|s| {
            let sub = gather_blocks(dict, s);
            let sv = sub.singular_values();
            let mut smax = sv.max();
            let mut smin = if sub.ncols() > sub.nrows() { 0.0 } else { sv.min() };
            smax *= smax;
            smin *= smin;
            (1.0 - smin).max(smax - 1.0)
        })
        .reduce(|| 0.0, f64::max);
    Ok(delta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn layout(s: &[usize]) -> BlockLayout {
        BlockLayout::new(s.to_vec()).unwrap()
    }

    fn random(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng))
    }

    #[test]
    fn energy_3_4_5() {
        let x = DMatrix::from_column_slice(4, 1, &[3.0, 4.0, 0.0, 0.0]);
        let l = layout(&[2, 2]);
        let g = class_energy_map(&x, &l).unwrap();
        assert_eq!(g.values(), &[5.0, 0.0]);
        assert_eq!(block_l0(&x, &l, 0.0).unwrap(), 1);
        assert_eq!(block_l1(&x, &l).unwrap(), 5.0);
    }

    #[test]
    fn zero_matrix() {
        let x = DMatrix::zeros(6, 3);
        let l = layout(&[1, 2, 3]);
        assert_eq!(class_energy_map(&x, &l).unwrap().values(), &[0.0; 3]);
        assert_eq!(block_l0(&x, &l, 0.0).unwrap(), 0);
        let (v, l2) = row_block_vectorize(&x, &l).unwrap();
        assert_eq!(v.len(), 18);
        assert!(v.iter().all(|&e| e == 0.0));
        assert_eq!(block_l0(&DMatrix::from_column_slice(18, 1, v.as_slice()), &l2, 0.0).unwrap(), 0);
    }

    #[test]
    fn layout_mismatch() {
        let x = DMatrix::zeros(5, 1);
        assert!(class_energy_map(&x, &layout(&[2, 2])).is_err());
        assert!(block_l1(&x, &layout(&[2, 2])).is_err());
        assert!(row_block_vectorize(&x, &layout(&[2, 2])).is_err());
        assert!(block_l0(&x, &layout(&[2, 2]), 0.0).is_err());
    }

    #[test]
    fn norm_identity_random() {
        let x = random(10, 3, 1);
        let g = class_energy_map(&x, &layout(&[4, 6])).unwrap();
        assert!((g.norm() - x.norm()).abs() <= 1e-12 * x.norm());
    }

    #[test]
    fn all_blocks_populated() {
        let x = random(9, 2, 2);
        assert_eq!(block_l0(&x, &layout(&[3, 3, 3]), 0.0).unwrap(), 3);
    }

    #[test]
    fn l1_additivity() {
        // each block has Frobenius norm 2
        let x = DMatrix::from_column_slice(4, 1, &[2.0, 0.0, 0.0, 2.0]);
        assert_eq!(block_l1(&x, &layout(&[2, 2])).unwrap(), 4.0);
        let x = random(12, 3, 3);
        let l = layout(&[5, 4, 3]);
        let l1 = block_l1(&x, &l).unwrap();
        assert!(l1 >= x.norm());
        assert!(l1 <= 3f64.sqrt() * x.norm() * (1.0 + 1e-12));
    }

    #[test]
    fn vectorize_2x2() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 0.0]);
        let l = layout(&[1, 1]);
        let (v, l2) = row_block_vectorize(&x, &l).unwrap();
        assert_eq!(v.as_slice(), &[1.0, 2.0, 0.0, 0.0]);
        assert_eq!(l2.sizes(), &[2, 2]);
        let vm = DMatrix::from_column_slice(4, 1, v.as_slice());
        assert_eq!(block_l0(&vm, &l2, 0.0).unwrap(), 1);
        assert_eq!(block_l0(&x, &l, 0.0).unwrap(), 1);
    }

    #[test]
    fn vectorize_block_2_sparse() {
        let l = layout(&[3, 3, 3, 3]);
        let mut x = DMatrix::zeros(12, 4);
        x.rows_mut(3, 3).copy_from(&random(3, 4, 4));
        x.rows_mut(9, 3).copy_from(&random(3, 4, 5));
        let (v, l2) = row_block_vectorize(&x, &l).unwrap();
        let vm = DMatrix::from_column_slice(v.len(), 1, v.as_slice());
        assert_eq!(block_l0(&x, &l, 0.0).unwrap(), 2);
        assert_eq!(block_l0(&vm, &l2, 0.0).unwrap(), 2);
    }

    #[test]
    fn flat_layout_is_abs_value() {
        let x = random(7, 1, 6);
        let g = class_energy_map(&x, &BlockLayout::flat(7).unwrap()).unwrap();
        for (gi, xi) in g.values().iter().zip(x.iter()) {
            assert_eq!(*gi, xi.abs());
        }
    }

    #[test]
    fn coefficient_support_is_structural() {
        let l = layout(&[2, 2, 2]);
        let mut x = random(6, 2, 7);
        x.rows_mut(2, 2).fill(1e-14);
        let c = CoefficientMatrix::from_dense(x, l, 1e-10).unwrap();
        assert_eq!(c.support().iter().copied().collect::<Vec<_>>(), vec![0, 2]);
        assert!(c.block(1).iter().all(|&v| v == 0.0));
        assert_eq!(c.energies().count_above(0.0), c.support().len());
    }

    fn normalized(data: DMatrix<f64>, sizes: &[usize]) -> TrainingDictionary {
        TrainingDictionary::from_parts(data, layout(sizes))
            .unwrap()
            .normalize_columns()
            .unwrap()
    }

    #[test]
    fn rip_orthonormal_blocks_is_zero() {
        let dict = normalized(DMatrix::identity(6, 6), &[2, 2, 2]);
        let d = estimate_block_rip_constant(&dict, 2, DEFAULT_SUPPORT_CAP).unwrap();
        assert!(d.abs() < 1e-12, "{d}");
    }

    #[test]
    fn rip_duplicate_column_is_one() {
        let mut m = DMatrix::identity(4, 4);
        let first = m.column(0).clone_owned();
        m.column_mut(2).copy_from(&first);
        let dict = normalized(m, &[2, 2]);
        let d = estimate_block_rip_constant(&dict, 2, DEFAULT_SUPPORT_CAP).unwrap();
        assert!((d - 1.0).abs() < 1e-12, "{d}");
    }

    #[test]
    fn rip_random_matches_power_oracle() {
        let dict = normalized(random(20, 10, 0), &[2; 5]);
        let d = estimate_block_rip_constant(&dict, 2, DEFAULT_SUPPORT_CAP).unwrap();
        assert!(d > 0.0 && d < 1.0, "{d}");
        // Oracle: eigenvalues of every 4x4 Gram matrix via symmetric eigensolver.
        let mut oracle: f64 = 0.0;
        for s in (0..5).combinations(2) {
            let sub = gather_blocks(&dict, &s);
            let eig = (sub.transpose() * &sub).symmetric_eigenvalues();
            oracle = oracle.max(1.0 - eig.min()).max(eig.max() - 1.0);
        }
        assert!((d - oracle).abs() < 1e-10, "{d} vs {oracle}");
    }

    #[test]
    fn rip_guards() {
        let raw = TrainingDictionary::from_parts(DMatrix::identity(4, 4), layout(&[1; 4])).unwrap();
        assert!(matches!(
            estimate_block_rip_constant(&raw, 2, DEFAULT_SUPPORT_CAP),
            Err(SsmError::NotNormalized)
        ));
        let dict = raw.normalize_columns().unwrap();
        assert!(matches!(
            estimate_block_rip_constant(&dict, 2, 5),
            Err(SsmError::EnumerationCap { count: 6, cap: 5 })
        ));
        assert!(estimate_block_rip_constant(&dict, 5, DEFAULT_SUPPORT_CAP).is_err());
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(5, 2), 10);
        assert_eq!(binomial(40, 0), 1);
        assert_eq!(binomial(3, 4), 0);
        assert_eq!(binomial(60, 30), 118264581564861424);
    }
}
