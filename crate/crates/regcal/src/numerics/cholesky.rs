//! Cholesky factorization with diagonal jitter, plus the triangular
//! solves and inverses built on the factor.
//!
//! The factorization is right-looking and blocked: factor a diagonal
//! block, solve the panel below it, rank-update the trailing matrix.
//! Panel and trailing passes are row-parallel; every inner loop is a dot
//! of contiguous row slices. A failed pivot escalates the jitter by
//! factors of ten up to [`JITTER_CAP`] before giving up.

use super::matrix::{dot, SymmetricMatrix};
use super::NumericsError;
use crate::parallel::{for_each_chunk_mut, map_indexed};

/// Escalation schedule: retry at 1e-10, 1e-9, ..., up to this cap.
pub const JITTER_CAP: f64 = 1e-4;
const JITTER_START: f64 = 1e-10;
const BLOCK: usize = 96;

#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    dim: usize,
    /// Lower-triangular factor, full row-major storage, upper zeroed.
    l: Vec<f64>,
    /// Jitter actually added to the diagonal before the successful pass.
    jitter_used: f64,
}

/// Factor `m + jitter * I = L L^T`. The requested jitter is tried first;
/// if a pivot fails the jitter escalates tenfold per retry until
/// [`JITTER_CAP`], after which the matrix is declared not positive
/// definite.
pub fn cholesky(m: &SymmetricMatrix, jitter: f64) -> Result<CholeskyFactor, NumericsError> {
    let n = m.dim();
    let mut attempt = jitter;
    loop {
        let mut l = m.as_slice().to_vec();
        if attempt != 0.0 {
            for i in 0..n {
                l[i * n + i] += attempt;
            }
        }
        if factor_in_place(&mut l, n) {
            // Zero the upper triangle so the factor is exactly L.
            for i in 0..n {
                for j in i + 1..n {
                    l[i * n + j] = 0.0;
                }
            }
            return Ok(CholeskyFactor {
                dim: n,
                l,
                jitter_used: attempt,
            });
        }
        let next = if attempt < JITTER_START {
            JITTER_START
        } else {
            attempt * 10.0
        };
        if next > JITTER_CAP {
            return Err(NumericsError::NotPositiveDefinite {
                jitter_limit: JITTER_CAP,
            });
        }
        attempt = next;
    }
}

// Blocked right-looking factorization; returns false on a failed pivot.
fn factor_in_place(a: &mut [f64], n: usize) -> bool {
    let mut panel = Vec::new();
    let mut k0 = 0;
    while k0 < n {
        let b = BLOCK.min(n - k0);
        // Diagonal block, unblocked Crout on rows k0..k0+b.
        for i in k0..k0 + b {
            for j in k0..=i {
                let s = a[i * n + k0..i * n + j]
                    .iter()
                    .zip(&a[j * n + k0..j * n + j])
                    .fold(0.0, |acc, (x, y)| acc + x * y);
                let v = a[i * n + j] - s;
                if i == j {
                    if !(v > 0.0) || !v.is_finite() {
                        return false;
                    }
                    a[i * n + i] = v.sqrt();
                } else {
                    a[i * n + j] = v / a[j * n + j];
                }
            }
        }
        let rest = k0 + b;
        if rest == n {
            return true;
        }
        // Panel solve: rows below get their block columns via forward
        // substitution against the diagonal block. The split keeps the
        // block rows shared-immutable while each panel row is mutated.
        let (head, tail) = a.split_at_mut(rest * n);
        for_each_chunk_mut(tail, n, |_, row| {
            for j in k0..k0 + b {
                let s = dot(&row[k0..j], &head[j * n + k0..j * n + j]);
                row[j] = (row[j] - s) / head[j * n + j];
            }
        });
        // Snapshot the panel so the trailing update can read other rows'
        // panel entries while rows are mutated in parallel.
        let rows_below = n - rest;
        panel.clear();
        panel.resize(rows_below * b, 0.0);
        for r in 0..rows_below {
            panel[r * b..(r + 1) * b].copy_from_slice(&tail[r * n + k0..r * n + k0 + b]);
        }
        let panel_ref = &panel;
        // Trailing rank-b update: a[i][j] -= panel_i . panel_j for
        // rest <= j <= i.
        for_each_chunk_mut(tail, n, |r, row| {
            let pi = &panel_ref[r * b..(r + 1) * b];
            for j in rest..=rest + r {
                let pj = &panel_ref[(j - rest) * b..(j - rest + 1) * b];
                row[j] -= dot(pi, pj);
            }
        });
        k0 += b;
    }
    true
}

impl CholeskyFactor {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn jitter_used(&self) -> f64 {
        self.jitter_used
    }

    #[inline]
    fn l(&self, i: usize, j: usize) -> f64 {
        self.l[i * self.dim + j]
    }

    /// ln det(m + jitter I) = 2 sum ln L_ii.
    pub fn log_det(&self) -> f64 {
        (0..self.dim).map(|i| 2.0 * self.l(i, i).ln()).sum()
    }

    /// Solve L y = b in place.
    pub fn solve_lower_in_place(&self, b: &mut [f64]) {
        let n = self.dim;
        assert_eq!(b.len(), n);
        for i in 0..n {
            let s = dot(&self.l[i * n..i * n + i], &b[..i]);
            b[i] = (b[i] - s) / self.l[i * n + i];
        }
    }

    /// Solve L^T y = b in place.
    pub fn solve_lower_t_in_place(&self, b: &mut [f64]) {
        let n = self.dim;
        assert_eq!(b.len(), n);
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in i + 1..n {
                s -= self.l(k, i) * b[k];
            }
            b[i] = s / self.l(i, i);
        }
    }

    /// Solve (L L^T) x = b.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_lower_in_place(&mut x);
        self.solve_lower_t_in_place(&mut x);
        x
    }

    /// Solve L Y = B for many right-hand sides stored as rows of `rhs`
    /// (each row one vector of length `dim`). Rows solve independently in
    /// parallel.
    pub fn solve_lower_rows(&self, rhs: &mut [f64]) {
        let n = self.dim;
        assert_eq!(rhs.len() % n, 0);
        for_each_chunk_mut(rhs, n, |_, row| self.solve_lower_in_place(row));
    }

    /// Rows of (L^{-1})^T: row j holds the solution of L x = e_j, i.e.
    /// column j of L^{-1}. Handy layout because inverse-based products
    /// then reduce to dots of contiguous rows.
    pub fn inverse_lower_transposed(&self) -> Vec<f64> {
        let n = self.dim;
        let mut t = vec![0.0; n * n];
        for_each_chunk_mut(&mut t, n, |j, row| {
            row[j] = 1.0;
            self.solve_lower_in_place(row);
        });
        t
    }

    /// (m + jitter I)^{-1} as a symmetric matrix.
    pub fn spd_inverse(&self) -> SymmetricMatrix {
        let n = self.dim;
        let t = self.inverse_lower_transposed();
        // inv[i][j] = sum_k Linv[k][i] Linv[k][j] = t_i . t_j, where both
        // rows are zero before their own index.
        let rows = map_indexed(n, |i| {
            let ti = &t[i * n..(i + 1) * n];
            let mut row = vec![0.0; n];
            for j in 0..=i {
                let tj = &t[j * n..(j + 1) * n];
                row[j] = dot(&ti[i..], &tj[i..]);
            }
            row
        });
        SymmetricMatrix::from_lower_fn(n, |i, out| out.copy_from_slice(&rows[i][..=i]))
    }

    /// L L^T, for factorization round-trip checks.
    pub fn reconstruct(&self) -> SymmetricMatrix {
        let n = self.dim;
        SymmetricMatrix::from_lower_fn(n, |i, row| {
            for j in 0..=i {
                row[j] = dot(&self.l[i * n..i * n + j + 1], &self.l[j * n..j * n + j + 1]);
            }
        })
    }
}
