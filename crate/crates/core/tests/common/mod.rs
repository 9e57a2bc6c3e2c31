#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use ssm::TrainingDictionary;

pub fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

/// Reference ROMP on a single vector over individual columns of `s`.
/// Returns the selected columns in insertion order and their coefficients.
pub fn scalar_romp(s: &DMatrix<f64>, q: &DVector<f64>, m0: usize) -> (Vec<usize>, DVector<f64>) {
    let tol = 1e-9 * q.norm();
    let mut chosen: Vec<usize> = Vec::new();
    let mut r = q.clone();
    let mut coef = DVector::zeros(0);
    while r.norm() > tol && chosen.len() < 2 * m0 {
        let u = s.tr_mul(&r);
        let mut cand: Vec<usize> = (0..s.ncols()).filter(|i| !chosen.contains(i) && u[*i] != 0.0).collect();
        cand.sort_by(|&a, &b| u[b].abs().total_cmp(&u[a].abs()).then(a.cmp(&b)));
        cand.truncate(m0);
        if cand.is_empty() {
            break;
        }
        let mags: Vec<f64> = cand.iter().map(|&i| u[i].abs()).collect();
        let (mut best, mut best_e) = ((0, 0), -1.0);
        for i in 0..mags.len() {
            let mut e = 0.0;
            let mut j = i;
            while j < mags.len() && mags[i] <= 2.0 * mags[j] {
                e += mags[j] * mags[j];
                j += 1;
            }
            if e > best_e {
                best_e = e;
                best = (i, j);
            }
        }
        chosen.extend_from_slice(&cand[best.0..best.1]);
        let sub = DMatrix::from_fn(s.nrows(), chosen.len(), |i, j| s[(i, chosen[j])]);
        coef = sub.clone().svd(true, true).solve(q, 1e-13).unwrap();
        r = q - &sub * &coef;
    }
    (chosen, coef)
}

/// Sparse representation classification on top of [`scalar_romp`].
pub fn scalar_romp_src(dict: &TrainingDictionary, q: &DVector<f64>, m0: usize) -> usize {
    let s = dict.data();
    let (chosen, coef) = scalar_romp(s, q, m0);
    let layout = dict.layout();
    let residuals: Vec<f64> = (0..layout.num_blocks())
        .map(|k| {
            let range = layout.range(k);
            let mut rec = DVector::zeros(s.nrows());
            let mut any = false;
            for (t, &col) in chosen.iter().enumerate() {
                if range.contains(&col) {
                    rec += s.column(col) * coef[t];
                    any = true;
                }
            }
            if any { (q - rec).norm() } else { q.norm() }
        })
        .collect();
    // lowest index on ties
    let mut best = 0;
    for k in 1..residuals.len() {
        if residuals[k] < residuals[best] {
            best = k;
        }
    }
    best
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) }
}
