//! Dense symmetric matrices in full row-major storage.
//!
//! Full (not packed) storage keeps every row contiguous, which is what the
//! factorization and solve kernels lean on: their inner loops are dots of
//! row prefixes. Symmetry is enforced at construction and preserved by the
//! provided mutators.

use super::NumericsError;

/// Tolerance for the symmetry check at construction.
const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SymmetricMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    /// Identity scaled by `v`.
    pub fn scaled_identity(dim: usize, v: f64) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = v;
        }
        m
    }

    /// Build from explicit entries, validating shape and symmetry.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, NumericsError> {
        let dim = rows.len();
        let mut data = Vec::with_capacity(dim * dim);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != dim {
                return Err(NumericsError::DimensionMismatch {
                    expected: dim,
                    got: r.len(),
                });
            }
            data.extend_from_slice(r);
            for j in 0..i {
                let a = rows[i][j];
                let b = rows[j][i];
                if (a - b).abs() > SYMMETRY_TOL * a.abs().max(b.abs()).max(1.0) {
                    return Err(NumericsError::NotSymmetric { row: i, col: j });
                }
            }
        }
        Ok(Self { dim, data })
    }

    /// Build by filling the lower triangle row by row (`fill(i, row)` must
    /// write `row[0..=i]`), then mirroring. The fill fans out over the
    /// thread pool; the mirror is a cheap sequential pass.
    pub fn from_lower_fn(dim: usize, fill: impl Fn(usize, &mut [f64]) + Sync) -> Self {
        let mut data = vec![0.0; dim * dim];
        crate::parallel::for_each_chunk_mut(&mut data, dim, |i, row| fill(i, &mut row[..=i]));
        let mut m = Self { dim, data };
        m.mirror_lower();
        m
    }

    // Copy the lower triangle onto the upper one.
    fn mirror_lower(&mut self) {
        let n = self.dim;
        for i in 0..n {
            for j in i + 1..n {
                self.data[i * n + j] = self.data[j * n + i];
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    /// Set both (i, j) and (j, i).
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.dim + j] = v;
        self.data[j * self.dim + i] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn add_diagonal(&mut self, v: f64) {
        for i in 0..self.dim {
            self.data[i * self.dim + i] += v;
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    /// y = M x.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.dim);
        crate::parallel::map_indexed(self.dim, |i| dot(self.row(i), x))
    }

    /// Frobenius norm of (self - other), for test assertions.
    pub fn frobenius_distance(&self, other: &Self) -> f64 {
        assert_eq!(self.dim, other.dim);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// Dot product with four independent accumulators so the FP add chain
/// doesn't serialize; this is the hot inner kernel of the factorization.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (mut s0, mut s1, mut s2, mut s3) = (0.0, 0.0, 0.0, 0.0);
    let chunks = n / 4;
    for k in 0..chunks {
        let i = 4 * k;
        s0 += a[i] * b[i];
        s1 += a[i + 1] * b[i + 1];
        s2 += a[i + 2] * b[i + 2];
        s3 += a[i + 3] * b[i + 3];
    }
    let mut s = (s0 + s1) + (s2 + s3);
    for i in 4 * chunks..n {
        s += a[i] * b[i];
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_asymmetry() {
        let r = SymmetricMatrix::from_rows(&[vec![1.0, 0.5], vec![0.5 + 1e-6, 1.0]]);
        assert!(matches!(r, Err(NumericsError::NotSymmetric { .. })));
    }

    #[test]
    fn accepts_symmetry_within_tolerance() {
        let m = SymmetricMatrix::from_rows(&[vec![1.0, 0.5], vec![0.5 + 1e-14, 2.0]]).unwrap();
        assert_eq!(m.get(0, 1), 0.5);
        assert_eq!(m.get(1, 1), 2.0);
    }

    #[test]
    fn rejects_ragged_rows() {
        let r = SymmetricMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0]]);
        assert!(matches!(r, Err(NumericsError::DimensionMismatch { .. })));
    }

    #[test]
    fn lower_fill_mirrors() {
        let m = SymmetricMatrix::from_lower_fn(3, |i, row| {
            for j in 0..=i {
                row[j] = (i * 10 + j) as f64;
            }
        });
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(m.get(i, j), m.get(j, i));
            }
        }
        assert_eq!(m.get(0, 2), 20.0);
    }

    #[test]
    fn dot_matches_naive() {
        let a: Vec<f64> = (0..13).map(|i| i as f64 * 0.3).collect();
        let b: Vec<f64> = (0..13).map(|i| 1.0 - i as f64 * 0.1).collect();
        let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((dot(&a, &b) - naive).abs() < 1e-12);
    }
}
