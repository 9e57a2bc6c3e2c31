//! Concatenated class dictionaries and their block layout.
//!
//! A dictionary stores one column per training sample. Columns of class `k`
//! occupy the contiguous range `layout.range(k)`, so every block operation is
//! a column-range view and never copies.

use std::ops::Range;

use nalgebra::{DMatrix, DMatrixView};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SsmError};

/// Column norms at or below this are treated as zero columns.
pub const ZERO_COLUMN_NORM: f64 = 1e-12;

/// Partition of dictionary columns (equivalently, coefficient rows) into
/// class blocks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct BlockLayout {
    sizes: Vec<usize>,
    offsets: Vec<usize>,
    total: usize,
}

impl BlockLayout {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.is_empty() {
            return Err(SsmError::InvalidLayout("no blocks".into()));
        }
        if let Some(k) = sizes.iter().position(|&s| s == 0) {
            return Err(SsmError::InvalidLayout(format!("block {k} has size 0")));
        }
        let mut offsets = Vec::with_capacity(sizes.len());
        let mut total = 0;
        for &s in &sizes {
            offsets.push(total);
            total += s;
        }
        Ok(Self {
            sizes,
            offsets,
            total,
        })
    }

    /// The layout `{1, …, 1}` with one block per column.
    pub fn flat(total: usize) -> Result<Self> {
        Self::new(vec![1; total])
    }

    pub fn num_blocks(&self) -> usize {
        self.sizes.len()
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn size(&self, k: usize) -> usize {
        self.sizes[k]
    }

    pub fn offset(&self, k: usize) -> usize {
        self.offsets[k]
    }

    pub fn range(&self, k: usize) -> Range<usize> {
        self.offsets[k]..self.offsets[k] + self.sizes[k]
    }

    pub fn ranges(&self) -> impl Iterator<Item = Range<usize>> + '_ {
        (0..self.num_blocks()).map(move |k| self.range(k))
    }

    /// Block owning row/column `index`.
    pub fn block_of(&self, index: usize) -> Option<usize> {
        if index >= self.total {
            return None;
        }
        Some(self.offsets.partition_point(|&o| o <= index) - 1)
    }

    /// Every block size multiplied by `factor`.
    pub fn scaled(&self, factor: usize) -> Result<Self> {
        Self::new(self.sizes.iter().map(|&s| s * factor).collect())
    }

    pub(crate) fn check_class(&self, k: usize) -> Result<()> {
        if k >= self.num_blocks() {
            return Err(SsmError::ClassOutOfRange {
                index: k,
                classes: self.num_blocks(),
            });
        }
        Ok(())
    }

    pub(crate) fn check_rows(&self, rows: usize) -> Result<()> {
        if rows != self.total {
            return Err(SsmError::DimensionMismatch(format!(
                "matrix has {rows} rows but layout covers {}",
                self.total
            )));
        }
        Ok(())
    }
}

impl TryFrom<Vec<usize>> for BlockLayout {
    type Error = SsmError;

    fn try_from(sizes: Vec<usize>) -> Result<Self> {
        Self::new(sizes)
    }
}

impl From<BlockLayout> for Vec<usize> {
    fn from(layout: BlockLayout) -> Self {
        layout.sizes
    }
}

/// The concatenation `S = [S_1, …, S_C]` of class training matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingDictionary {
    data: DMatrix<f64>,
    layout: BlockLayout,
    normalized: bool,
}

impl TrainingDictionary {
    /// Concatenates the class matrices in order. Columns are samples.
    pub fn build(class_datasets: &[DMatrix<f64>]) -> Result<Self> {
        let first = class_datasets.first().ok_or(SsmError::NoClasses)?;
        let d = first.nrows();
        let mut sizes = Vec::with_capacity(class_datasets.len());
        for (k, m) in class_datasets.iter().enumerate() {
            if m.nrows() != d {
                return Err(SsmError::DimensionMismatch(format!(
                    "class {k} has {} rows, class 0 has {d}",
                    m.nrows()
                )));
            }
            if m.ncols() == 0 {
                return Err(SsmError::EmptyClass { class: k });
            }
            sizes.push(m.ncols());
        }
        let layout = BlockLayout::new(sizes)?;
        let mut data = DMatrix::zeros(d, layout.total());
        for (k, m) in class_datasets.iter().enumerate() {
            data.columns_mut(layout.offset(k), m.ncols()).copy_from(m);
        }
        Ok(Self {
            data,
            layout,
            normalized: false,
        })
    }

    pub fn from_parts(data: DMatrix<f64>, layout: BlockLayout) -> Result<Self> {
        if data.ncols() != layout.total() {
            return Err(SsmError::DimensionMismatch(format!(
                "matrix has {} columns but layout covers {}",
                data.ncols(),
                layout.total()
            )));
        }
        Ok(Self {
            data,
            layout,
            normalized: false,
        })
    }

    /// Scales every column to unit Euclidean norm.
    pub fn normalize_columns(mut self) -> Result<Self> {
        for j in 0..self.data.ncols() {
            let norm = self.data.column(j).norm();
            if norm <= ZERO_COLUMN_NORM {
                let class = self.layout.block_of(j).expect("column within layout");
                return Err(SsmError::ZeroColumn {
                    class,
                    local: j - self.layout.offset(class),
                    column: j,
                });
            }
            self.data.column_mut(j).unscale_mut(norm);
        }
        self.normalized = true;
        Ok(self)
    }

    /// Same columns under a different partition (e.g. the flat layout).
    pub fn with_layout(&self, layout: BlockLayout) -> Result<Self> {
        let mut out = Self::from_parts(self.data.clone(), layout)?;
        out.normalized = self.normalized;
        Ok(out)
    }

    /// Columns of class `k` (0-based).
    pub fn block_slice(&self, k: usize) -> Result<DMatrixView<'_, f64>> {
        self.layout.check_class(k)?;
        Ok(self.block(k))
    }

    pub(crate) fn block(&self, k: usize) -> DMatrixView<'_, f64> {
        self.data
            .columns(self.layout.offset(k), self.layout.size(k))
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn layout(&self) -> &BlockLayout {
        &self.layout
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn num_classes(&self) -> usize {
        self.layout.num_blocks()
    }

    pub(crate) fn require_normalized(&self) -> Result<()> {
        if !self.normalized {
            return Err(SsmError::NotNormalized);
        }
        Ok(())
    }
}

/// A set of queries, one per column.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryMatrix(DMatrix<f64>);

impl QueryMatrix {
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        if data.ncols() == 0 {
            return Err(SsmError::InvalidParameter("query matrix has no columns".into()));
        }
        Ok(Self(data))
    }

    pub fn from_column(q: &[f64]) -> Self {
        Self(DMatrix::from_column_slice(q.len(), 1, q))
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn count(&self) -> usize {
        self.0.ncols()
    }

    pub(crate) fn check_against(&self, dict: &TrainingDictionary) -> Result<()> {
        if self.dim() != dict.dim() {
            return Err(SsmError::DimensionMismatch(format!(
                "queries have dimension {} but dictionary has {}",
                self.dim(),
                dict.dim()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_column_slice(v.len(), 1, v)
    }

    #[test]
    fn two_unit_columns() {
        let dict = TrainingDictionary::build(&[col(&[1.0, 0.0]), col(&[0.0, 1.0])]).unwrap();
        assert_eq!(dict.data(), &DMatrix::identity(2, 2));
        assert_eq!(dict.layout().sizes(), &[1, 1]);
        assert!(!dict.is_normalized());
    }

    #[test]
    fn mismatched_rows_rejected() {
        let err = TrainingDictionary::build(&[DMatrix::zeros(3, 1), DMatrix::zeros(4, 1)]);
        assert!(matches!(err, Err(SsmError::DimensionMismatch(_))));
    }

    #[test]
    fn empty_class_rejected() {
        let err = TrainingDictionary::build(&[DMatrix::zeros(3, 1), DMatrix::zeros(3, 0)]);
        assert!(matches!(err, Err(SsmError::EmptyClass { class: 1 })));
        assert!(matches!(
            TrainingDictionary::build(&[]),
            Err(SsmError::NoClasses)
        ));
    }

    #[test]
    fn many_class_layout() {
        // 38 classes, alternating 32/31 columns
        let classes: Vec<_> = (0..38)
            .map(|k| DMatrix::from_element(8, 32 - (k % 2), 1.0))
            .collect();
        let dict = TrainingDictionary::build(&classes).unwrap();
        assert_eq!(dict.num_classes(), 38);
        assert_eq!(dict.layout().total(), 19 * 32 + 19 * 31);
    }

    #[test]
    fn normalize_3_4_5() {
        let dict = TrainingDictionary::build(&[col(&[3.0, 4.0])])
            .unwrap()
            .normalize_columns()
            .unwrap();
        assert!((dict.data()[(0, 0)] - 0.6).abs() < 1e-15);
        assert!((dict.data()[(1, 0)] - 0.8).abs() < 1e-15);
        assert!(dict.is_normalized());
    }

    #[test]
    fn normalize_idempotent() {
        let m = DMatrix::from_fn(5, 4, |i, j| ((i * 7 + j * 3) % 5) as f64 - 1.5);
        let once = TrainingDictionary::build(&[m]).unwrap().normalize_columns().unwrap();
        let twice = once.clone().normalize_columns().unwrap();
        assert!((once.data() - twice.data()).amax() < 1e-15);
        for j in 0..4 {
            assert!((once.data().column(j).norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_column_reports_index() {
        let a = DMatrix::from_column_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let b = DMatrix::from_column_slice(2, 2, &[1.0, 1.0, 0.0, 0.0]);
        let err = TrainingDictionary::build(&[a, b])
            .unwrap()
            .normalize_columns()
            .unwrap_err();
        match err {
            SsmError::ZeroColumn {
                class,
                local,
                column,
            } => assert_eq!((class, local, column), (1, 1, 3)),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn block_slices() {
        let m = DMatrix::from_fn(3, 4, |i, j| (i * 4 + j) as f64);
        let dict = TrainingDictionary::from_parts(m.clone(), BlockLayout::new(vec![2, 2]).unwrap())
            .unwrap();
        assert_eq!(dict.block_slice(0).unwrap(), m.columns(0, 2));
        assert_eq!(dict.block_slice(1).unwrap(), m.columns(2, 2));
        assert!(matches!(
            dict.block_slice(2),
            Err(SsmError::ClassOutOfRange { index: 2, classes: 2 })
        ));
    }

    #[test]
    fn layout_invariants() {
        assert!(BlockLayout::new(vec![]).is_err());
        assert!(BlockLayout::new(vec![2, 0]).is_err());
        let l = BlockLayout::new(vec![3, 1, 2]).unwrap();
        assert_eq!(l.total(), 6);
        assert_eq!(l.offset(2) + l.size(2), l.total());
        assert_eq!(
            (0..6).map(|i| l.block_of(i).unwrap()).collect::<Vec<_>>(),
            vec![0, 0, 0, 1, 2, 2]
        );
        assert_eq!(l.block_of(6), None);
    }
}
