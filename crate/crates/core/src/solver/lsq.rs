//! Least squares on a column subset of the dictionary.
//!
//! The direct path is a complete orthogonal decomposition: Householder QR with
//! column pivoting, followed (only when rank deficient) by a QR of the
//! trapezoidal factor so the returned solution has minimum norm.

use nalgebra::{DMatrix, DVector, DVectorView};

/// Factorization of an `m × p` matrix `A` with `A P = Q [R11 R12; 0 0]`.
#[derive(Debug, Clone)]
pub struct PivotedQr {
    /// Householder vectors below the diagonal, `R` on and above it.
    qr: DMatrix<f64>,
    tau: Vec<f64>,
    perm: Vec<usize>,
    rank: usize,
    /// `Z` and `U` with `[R11 R12]ᵀ = Z [U; 0]`, present when `rank < p`.
    minimum_norm: Option<(DMatrix<f64>, DMatrix<f64>)>,
}

impl PivotedQr {
    pub fn new(a: &DMatrix<f64>) -> Self {
        let (m, p) = a.shape();
        let mut qr = a.clone();
        let mut perm: Vec<usize> = (0..p).collect();
        let steps = m.min(p);
        let mut tau = Vec::with_capacity(steps);

        for k in 0..steps {
            // pivot: largest remaining column norm, lowest index on ties
            let mut best = k;
            let mut best_norm = -1.0;
            for j in k..p {
                let nj = qr.view((k, j), (m - k, 1)).norm_squared();
                if nj > best_norm {
                    best_norm = nj;
                    best = j;
                }
            }
            if best != k {
                qr.swap_columns(k, best);
                perm.swap(k, best);
            }

            let alpha = qr[(k, k)];
            let xnorm = qr.view((k + 1, k), (m - k - 1, 1)).norm();
            if xnorm == 0.0 {
                tau.push(0.0);
                continue;
            }
            let beta = -alpha.signum() * alpha.hypot(xnorm);
            let scale = (alpha - beta).recip();
            for i in k + 1..m {
                qr[(i, k)] *= scale;
            }
            let t = (beta - alpha) / beta;
            qr[(k, k)] = beta;
            tau.push(t);

            for j in k + 1..p {
                let mut dot = qr[(k, j)];
                for i in k + 1..m {
                    dot += qr[(i, k)] * qr[(i, j)];
                }
                dot *= t;
                qr[(k, j)] -= dot;
                for i in k + 1..m {
                    let v = qr[(i, k)];
                    qr[(i, j)] -= dot * v;
                }
            }
        }

        let r00 = if steps > 0 { qr[(0, 0)].abs() } else { 0.0 };
        let threshold = m.max(p) as f64 * f64::EPSILON * r00;
        let rank = (0..steps)
            .take_while(|&i| qr[(i, i)].abs() > threshold)
            .count();

        let minimum_norm = (rank < p && rank > 0).then(|| {
            let trap = DMatrix::from_fn(p, rank, |j, i| if j >= i { qr[(i, j)] } else { 0.0 });
            let f = trap.qr();
            (f.q(), f.r())
        });

        Self {
            qr,
            tau,
            perm,
            rank,
            minimum_norm,
        }
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Minimum-norm minimizer of `‖A x − b‖₂`.
    pub fn solve(&self, b: DVectorView<'_, f64>) -> DVector<f64> {
        let (m, p) = self.qr.shape();
        let mut c = b.clone_owned();
        for (k, &t) in self.tau.iter().enumerate() {
            if t == 0.0 {
                continue;
            }
            let mut dot = c[k];
            for i in k + 1..m {
                dot += self.qr[(i, k)] * c[i];
            }
            dot *= t;
            c[k] -= dot;
            for i in k + 1..m {
                c[i] -= dot * self.qr[(i, k)];
            }
        }

        let r = self.rank;
        let mut y = DVector::zeros(p);
        match &self.minimum_norm {
            None => {
                for i in (0..r).rev() {
                    let mut s = c[i];
                    for j in i + 1..r {
                        s -= self.qr[(i, j)] * y[j];
                    }
                    y[i] = s / self.qr[(i, i)];
                }
            }
            Some((z, u)) => {
                // Uᵀ w = c[..r] by forward substitution, then y = Z[:, ..r] w
                let mut w = DVector::zeros(r);
                for i in 0..r {
                    let mut s = c[i];
                    for j in 0..i {
                        s -= u[(j, i)] * w[j];
                    }
                    w[i] = s / u[(i, i)];
                }
                y = z.columns(0, r) * w;
            }
        }

        let mut x = DVector::zeros(p);
        for (i, &pi) in self.perm.iter().enumerate() {
            x[pi] = y[i];
        }
        x
    }
}

/// Outcome of a conjugate-gradient solve.
#[derive(Debug, Clone)]
pub struct CgSolution {
    pub x: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Jacobi-preconditioned CG on `AᵀA x = Aᵀb`, matrix free, starting at zero.
///
/// Converged when `‖Aᵀ(b − A x)‖ ≤ tol · ‖Aᵀ b‖`.
pub fn cg_normal_equations(
    a: &DMatrix<f64>,
    b: DVectorView<'_, f64>,
    tol: f64,
    max_iter: usize,
) -> CgSolution {
    let p = a.ncols();
    let rhs = a.tr_mul(&b);
    let rhs_norm = rhs.norm();
    let mut x = DVector::zeros(p);
    if rhs_norm == 0.0 {
        return CgSolution {
            x,
            iterations: 0,
            converged: true,
        };
    }
    let inv_diag: DVector<f64> = DVector::from_iterator(
        p,
        a.column_iter().map(|c| {
            let n2 = c.norm_squared();
            if n2 > 0.0 { n2.recip() } else { 1.0 }
        }),
    );

    let mut r = rhs;
    let mut z = r.component_mul(&inv_diag);
    let mut dir = z.clone();
    let mut rz = r.dot(&z);
    for it in 0..max_iter {
        if r.norm() <= tol * rhs_norm {
            return CgSolution {
                x,
                iterations: it,
                converged: true,
            };
        }
        let ad = a * &dir;
        let gd = a.tr_mul(&ad);
        let denom = dir.dot(&gd);
        if denom <= 0.0 {
            break;
        }
        let step = rz / denom;
        x.axpy(step, &dir, 1.0);
        r.axpy(-step, &gd, 1.0);
        z = r.component_mul(&inv_diag);
        let rz_next = r.dot(&z);
        dir = &z + &dir * (rz_next / rz);
        rz = rz_next;
    }
    let converged = r.norm() <= tol * rhs_norm;
    CgSolution {
        x,
        iterations: max_iter,
        converged,
    }
}
