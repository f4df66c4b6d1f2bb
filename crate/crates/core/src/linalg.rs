//! Dense row-major matrices and the few operations the memory code needs.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// Row-major dense matrix. Feature vectors are row vectors, so a `rows × cols`
/// matrix maps `rows`-dimensional inputs to `cols`-dimensional outputs via
/// [`Matrix::apply`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    /// Rectangular identity: ones on the leading diagonal.
    pub fn identity(rows: usize, cols: usize) -> Self {
        let mut m = Self::zeros(rows, cols);
        for k in 0..rows.min(cols) {
            m[(k, k)] = T::one();
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Self { rows, cols, data }
    }

    /// Builds a matrix whose columns are the given vectors.
    pub fn from_columns(columns: &[Vec<T>]) -> Self {
        let cols = columns.len();
        let rows = columns.first().map_or(0, Vec::len);
        let mut m = Self::zeros(rows, cols);
        for (c, col) in columns.iter().enumerate() {
            assert_eq!(col.len(), rows, "ragged columns");
            for (r, &v) in col.iter().enumerate() {
                m[(r, c)] = v;
            }
        }
        m
    }

    /// Random matrix with orthonormal columns (`rows >= cols`), obtained by
    /// Gram-Schmidt on Gaussian columns.
    pub fn random_orthonormal_columns<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Self {
        assert!(rows >= cols, "need rows >= cols for orthonormal columns");
        let basis = extend_orthonormal(&[], rows, cols, rng);
        Self::from_columns(&basis)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `x · M` for a row vector `x` of length `rows`.
    pub fn apply(&self, x: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.cols];
        self.apply_into(x, &mut out);
        out
    }

    pub fn apply_into(&self, x: &[T], out: &mut [T]) {
        assert_eq!(x.len(), self.rows, "input length");
        assert_eq!(out.len(), self.cols, "output length");
        out.iter_mut().for_each(|o| *o = T::zero());
        for (r, &xr) in x.iter().enumerate() {
            if xr == T::zero() {
                continue;
            }
            for (o, &m) in out.iter_mut().zip(self.row(r)) {
                *o = *o + xr * m;
            }
        }
    }

    /// `y · Mᵀ` for a row vector `y` of length `cols`.
    pub fn apply_transpose(&self, y: &[T]) -> Vec<T> {
        assert_eq!(y.len(), self.cols, "input length");
        (0..self.rows)
            .map(|r| crate::scalar::dot(self.row(r), y))
            .collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t[(c, r)] = self[(r, c)];
            }
        }
        t
    }

    pub fn cast<U: Scalar>(&self) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .map(|v| U::lit(v.to_f64_lossless()))
                .collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

impl<T> std::ops::Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    fn index(&self, (r, c): (usize, usize)) -> &T {
        &self.data[r * self.cols + c]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Matrix<T> {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut T {
        &mut self.data[r * self.cols + c]
    }
}

/// Extends `seed_vectors` to `count` orthonormal vectors in `dim` dimensions
/// using modified Gram-Schmidt. Seed vectors come first (orthonormalised in
/// order); the remainder are drawn from a standard normal.
pub fn extend_orthonormal<T: Scalar, R: Rng>(
    seed_vectors: &[Vec<T>],
    dim: usize,
    count: usize,
    rng: &mut R,
) -> Vec<Vec<T>> {
    assert!(count <= dim, "cannot fit {count} orthonormal vectors in {dim} dims");
    let mut basis: Vec<Vec<T>> = Vec::with_capacity(count);
    let mut seeds = seed_vectors.iter();
    let tol = T::lit(1e-6);
    while basis.len() < count {
        let mut v: Vec<T> = match seeds.next() {
            Some(s) => s.clone(),
            None => (0..dim)
                .map(|_| T::lit(rng.sample::<f64, _>(StandardNormal)))
                .collect(),
        };
        // two passes keep the basis orthogonal to working precision
        for _ in 0..2 {
            for b in &basis {
                let p = crate::scalar::dot(&v, b);
                v.iter_mut().zip(b).for_each(|(x, &bx)| *x = *x - p * bx);
            }
        }
        let n = crate::scalar::norm(&v);
        if n <= tol {
            continue;
        }
        v.iter_mut().for_each(|x| *x = *x / n);
        basis.push(v);
    }
    basis
}

/// Ridge least squares: finds `W` (`x_dim × y_dim`) minimising
/// `‖X·W − Y‖² + ridge·‖W‖²` given row samples. The ridge weight is scaled by
/// the mean diagonal of `XᵀX` so it is insensitive to feature magnitude.
pub fn ridge_least_squares(
    inputs: &[Vec<f64>],
    targets: &[Vec<f64>],
    x_dim: usize,
    y_dim: usize,
    relative_ridge: f64,
) -> Option<Matrix<f64>> {
    weighted_ridge_least_squares(inputs, targets, None, x_dim, y_dim, relative_ridge)
}

/// [`ridge_least_squares`] with a non-negative weight per sample. A sample
/// with weight `n` and the mean of `n` targets as its target is equivalent
/// to those `n` samples.
pub fn weighted_ridge_least_squares(
    inputs: &[Vec<f64>],
    targets: &[Vec<f64>],
    weights: Option<&[f64]>,
    x_dim: usize,
    y_dim: usize,
    relative_ridge: f64,
) -> Option<Matrix<f64>> {
    assert_eq!(inputs.len(), targets.len(), "sample count mismatch");
    if let Some(w) = weights {
        assert_eq!(w.len(), inputs.len(), "one weight per sample");
    }
    const BATCH: usize = 512;
    let mut xtx = nalgebra::DMatrix::<f64>::zeros(x_dim, x_dim);
    let mut xty = nalgebra::DMatrix::<f64>::zeros(x_dim, y_dim);
    for start in (0..inputs.len()).step_by(BATCH) {
        let end = (start + BATCH).min(inputs.len());
        // rows scaled by sqrt(weight) so that XᵀX and XᵀY carry the weights
        let scale = |k: usize| weights.map_or(1.0, |w| w[k].sqrt());
        let x = nalgebra::DMatrix::from_fn(end - start, x_dim, |r, c| inputs[start + r][c] * scale(start + r));
        let y = nalgebra::DMatrix::from_fn(end - start, y_dim, |r, c| targets[start + r][c] * scale(start + r));
        xtx += x.tr_mul(&x);
        xty += x.tr_mul(&y);
    }
    let mean_diag = xtx.diagonal().mean();
    if !(mean_diag > 0.0) {
        return None;
    }
    let alpha = relative_ridge.max(1e-12) * mean_diag;
    for k in 0..x_dim {
        xtx[(k, k)] += alpha;
    }
    let chol = xtx.cholesky()?;
    let w = chol.solve(&xty);
    let mut out = Matrix::zeros(x_dim, y_dim);
    for r in 0..x_dim {
        for c in 0..y_dim {
            out[(r, c)] = w[(r, c)];
        }
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn orthonormal_columns_are_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = Matrix::<f64>::random_orthonormal_columns(12, 5, &mut rng);
        let t = m.transpose();
        for a in 0..5 {
            for b in 0..5 {
                let d = crate::scalar::dot(t.row(a), t.row(b));
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((d - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn extend_keeps_seed_direction() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let seed = vec![vec![3.0, 4.0, 0.0, 0.0]];
        let basis = extend_orthonormal::<f64, _>(&seed, 4, 3, &mut rng);
        assert!((basis[0][0] - 0.6).abs() < 1e-12);
        assert!((basis[0][1] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn apply_and_transpose_agree() {
        let m = Matrix::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(m.apply(&[1.0, 1.0]), vec![5.0, 7.0, 9.0]);
        assert_eq!(m.apply_transpose(&[1.0, 0.0, 1.0]), vec![4.0, 10.0]);
        assert_eq!(m.transpose().apply(&[1.0, 0.0, 1.0]), vec![4.0, 10.0]);
    }

    #[test]
    fn weighted_samples_match_repeated_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let xs: Vec<Vec<f64>> = (0..6)
            .map(|_| (0..3).map(|_| rng.sample(StandardNormal)).collect())
            .collect();
        let ys: Vec<Vec<f64>> = (0..12)
            .map(|_| (0..2).map(|_| rng.sample(StandardNormal)).collect())
            .collect();
        // every x appears twice, once with each of two targets
        let rep_x: Vec<Vec<f64>> = xs.iter().flat_map(|x| [x.clone(), x.clone()]).collect();
        let full = ridge_least_squares(&rep_x, &ys, 3, 2, 1e-3).unwrap();
        let means: Vec<Vec<f64>> = ys
            .chunks(2)
            .map(|p| p[0].iter().zip(&p[1]).map(|(a, b)| (a + b) / 2.0).collect())
            .collect();
        let weighted = weighted_ridge_least_squares(&xs, &means, Some(&[2.0; 6]), 3, 2, 1e-3).unwrap();
        for (a, b) in full.as_slice().iter().zip(weighted.as_slice()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn ridge_recovers_exact_linear_map() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let truth = Matrix::<f64>::random_orthonormal_columns(4, 2, &mut rng);
        let xs: Vec<Vec<f64>> = (0..200)
            .map(|_| (0..4).map(|_| rng.sample(StandardNormal)).collect())
            .collect();
        let ys: Vec<Vec<f64>> = xs.iter().map(|x| truth.apply(x)).collect();
        let w = ridge_least_squares(&xs, &ys, 4, 2, 1e-10).unwrap();
        for (a, b) in w.as_slice().iter().zip(truth.as_slice()) {
            assert!((a - b).abs() < 1e-6);
        }
    }
}
