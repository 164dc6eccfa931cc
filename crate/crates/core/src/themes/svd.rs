//! Truncated SVD by seeded orthogonal (subspace) iteration with a
//! Rayleigh-Ritz step solved by one-sided Jacobi.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SvdError {
    #[error("rank {requested} exceeds the smaller matrix dimension {max}")]
    RankTooLarge { requested: usize, max: usize },
    #[error("rank must be at least 1")]
    ZeroRank,
}

/// A matrix that can be multiplied by vectors from either side.
pub trait LinearOperator {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    /// `A x`
    fn apply(&self, x: &[f64]) -> Vec<f64>;
    /// `A^T y`
    fn apply_t(&self, y: &[f64]) -> Vec<f64>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged rows");
        Self {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

impl LinearOperator for DenseMatrix {
    fn nrows(&self) -> usize {
        self.rows
    }

    fn ncols(&self) -> usize {
        self.cols
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    fn apply_t(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for (i, &yi) in y.iter().enumerate() {
            if yi != 0.0 {
                axpy(yi, self.row(i), &mut out);
            }
        }
        out
    }
}

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(rows: usize, cols: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_by_key(|t| (t.0, t.1));
        let mut indptr = vec![0; rows + 1];
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            assert!(r < rows && c < cols, "triplet out of bounds");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            indices.push(c);
            values.push(v);
            indptr[r + 1] += 1;
            last = Some((r, c));
        }
        for r in 0..rows {
            indptr[r + 1] += indptr[r];
        }
        Self {
            rows,
            cols,
            indptr,
            indices,
            values,
        }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_entries(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.indptr[i]..self.indptr[i + 1];
        self.indices[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            for (j, v) in self.row_entries(i) {
                m.set(i, j, v);
            }
        }
        m
    }
}

impl LinearOperator for CsrMatrix {
    fn nrows(&self) -> usize {
        self.rows
    }

    fn ncols(&self) -> usize {
        self.cols
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        (0..self.rows)
            .map(|i| self.row_entries(i).map(|(j, v)| v * x[j]).sum())
            .collect()
    }

    fn apply_t(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for (i, &yi) in y.iter().enumerate() {
            if yi != 0.0 {
                for (j, v) in self.row_entries(i) {
                    out[j] += v * yi;
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvdOptions {
    pub seed: u64,
    /// Extra basis vectors carried beyond the requested rank.
    pub oversample: usize,
    pub max_iter: usize,
    /// Relative change of the leading singular values that counts as converged.
    pub tol: f64,
}

impl Default for SvdOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            oversample: 10,
            max_iter: 100,
            tol: 1e-9,
        }
    }
}

/// Rank-r factorization `A ≈ U diag(s) V^T`. `u` and `v` hold columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Svd {
    pub u: Vec<Vec<f64>>,
    pub s: Vec<f64>,
    pub v: Vec<Vec<f64>>,
    pub iterations: usize,
}

impl Svd {
    pub fn rank(&self) -> usize {
        self.s.len()
    }

    /// Entry `(i, j)` of the rank-`r` reconstruction.
    pub fn reconstruct(&self, r: usize, i: usize, j: usize) -> f64 {
        (0..r.min(self.rank()))
            .map(|k| self.s[k] * self.u[k][i] * self.v[k][j])
            .sum()
    }

    pub fn truncated(&self, r: usize) -> Svd {
        let r = r.min(self.rank());
        Svd {
            u: self.u[..r].to_vec(),
            s: self.s[..r].to_vec(),
            v: self.v[..r].to_vec(),
            iterations: self.iterations,
        }
    }
}

pub fn truncated_svd<A: LinearOperator + ?Sized>(
    a: &A,
    rank: usize,
    options: &SvdOptions,
) -> Result<Svd, SvdError> {
    let (m, n) = (a.nrows(), a.ncols());
    let max = m.min(n);
    if rank == 0 {
        return Err(SvdError::ZeroRank);
    }
    if rank > max {
        return Err(SvdError::RankTooLarge {
            requested: rank,
            max,
        });
    }
    let p = (rank + options.oversample).min(max);
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let start: Vec<Vec<f64>> = (0..p)
        .map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let mut q = orthonormalize(start, &mut rng).0;
    let mut previous: Option<Vec<f64>> = None;

    for iteration in 1..=options.max_iter.max(1) {
        let y: Vec<Vec<f64>> = q.iter().map(|col| a.apply(col)).collect();
        let (qy, r) = orthonormalize(y, &mut rng);
        let small = jacobi_svd(&r);
        let converged = previous.as_ref().is_some_and(|prev| {
            let scale = small.s[0].max(f64::MIN_POSITIVE);
            (0..rank).all(|k| (small.s[k] - prev[k]).abs() <= options.tol * scale)
        });
        if converged || iteration == options.max_iter.max(1) {
            let mut u = combine(&qy, &small.u, rank);
            let mut v = combine(&q, &small.v, rank);
            for k in 0..rank {
                let pivot = u[k]
                    .iter()
                    .copied()
                    .max_by(|x, y| x.abs().total_cmp(&y.abs()))
                    .unwrap_or(0.0);
                if pivot < 0.0 {
                    u[k].iter_mut().for_each(|x| *x = -*x);
                    v[k].iter_mut().for_each(|x| *x = -*x);
                }
            }
            return Ok(Svd {
                u,
                s: small.s[..rank].to_vec(),
                v,
                iterations: iteration,
            });
        }
        previous = Some(small.s);
        let w: Vec<Vec<f64>> = qy.iter().map(|col| a.apply_t(col)).collect();
        q = orthonormalize(w, &mut rng).0;
    }
    unreachable!("loop returns on its last iteration")
}

/// `basis * coeffs[..k]`, where `coeffs[j]` is a column over the basis.
fn combine(basis: &[Vec<f64>], coeffs: &[Vec<f64>], k: usize) -> Vec<Vec<f64>> {
    let len = basis.first().map_or(0, Vec::len);
    coeffs[..k]
        .iter()
        .map(|c| {
            let mut out = vec![0.0; len];
            for (b, &w) in basis.iter().zip(c) {
                axpy(w, b, &mut out);
            }
            out
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Modified Gram-Schmidt with one re-orthogonalization pass. Returns the
/// orthonormal columns `Q` and the upper-triangular `R` (as columns) with
/// `A = Q R`. Numerically dependent columns are replaced by random vectors
/// orthogonal to the rest, with a zero diagonal entry in `R`.
fn orthonormalize(mut cols: Vec<Vec<f64>>, rng: &mut ChaCha8Rng) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let p = cols.len();
    let mut r = vec![vec![0.0; p]; p];
    for j in 0..p {
        let original = norm(&cols[j]);
        for _ in 0..2 {
            for i in 0..j {
                let c = dot(&cols[i], &cols[j]);
                r[j][i] += c;
                let (done, rest) = cols.split_at_mut(j);
                axpy(-c, &done[i], &mut rest[0]);
            }
        }
        let len = norm(&cols[j]);
        if len == 0.0 || len <= 1e-13 * original {
            r[j][j] = 0.0;
            loop {
                let mut fresh: Vec<f64> =
                    (0..cols[j].len()).map(|_| rng.random_range(-1.0..1.0)).collect();
                for _ in 0..2 {
                    for prev in cols.iter().take(j) {
                        let c = dot(prev, &fresh);
                        axpy(-c, prev, &mut fresh);
                    }
                }
                let l = norm(&fresh);
                if l > 1e-8 {
                    fresh.iter_mut().for_each(|x| *x /= l);
                    cols[j] = fresh;
                    break;
                }
            }
            continue;
        }
        r[j][j] = len;
        cols[j].iter_mut().for_each(|x| *x /= len);
    }
    (cols, r)
}

struct SmallSvd {
    u: Vec<Vec<f64>>,
    s: Vec<f64>,
    v: Vec<Vec<f64>>,
}

/// One-sided Jacobi SVD of a square matrix given as columns. Singular values
/// are sorted non-increasing; left vectors for zero singular values are
/// completed to an orthonormal basis.
fn jacobi_svd(cols: &[Vec<f64>]) -> SmallSvd {
    let p = cols.len();
    let mut m: Vec<Vec<f64>> = cols.to_vec();
    let mut v: Vec<Vec<f64>> = (0..p)
        .map(|j| (0..p).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    for _sweep in 0..80 {
        let mut rotated = false;
        for i in 0..p {
            for j in i + 1..p {
                let alpha = dot(&m[i], &m[i]);
                let beta = dot(&m[j], &m[j]);
                let gamma = dot(&m[i], &m[j]);
                if gamma == 0.0 || gamma.abs() <= 1e-15 * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut m, i, j, c, s);
                rotate(&mut v, i, j, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let mut order: Vec<(f64, usize)> = m.iter().enumerate().map(|(j, c)| (norm(c), j)).collect();
    order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let top = order.first().map_or(0.0, |o| o.0);

    let mut s = Vec::with_capacity(p);
    let mut u: Vec<Vec<f64>> = Vec::with_capacity(p);
    let mut vs = Vec::with_capacity(p);
    let mut deficient = Vec::new();
    for &(sigma, j) in &order {
        if sigma > top * 1e-14 && sigma > 0.0 {
            u.push(m[j].iter().map(|x| x / sigma).collect());
            s.push(sigma);
        } else {
            deficient.push(u.len());
            u.push(Vec::new());
            s.push(0.0);
        }
        vs.push(v[j].clone());
    }
    for &slot in &deficient {
        let filled: Vec<Vec<f64>> = u.iter().filter(|c| !c.is_empty()).cloned().collect();
        let mut chosen = None;
        for e in 0..p {
            let mut cand: Vec<f64> = (0..p).map(|i| if i == e { 1.0 } else { 0.0 }).collect();
            for _ in 0..2 {
                for f in &filled {
                    let c = dot(f, &cand);
                    axpy(-c, f, &mut cand);
                }
            }
            let l = norm(&cand);
            if l > 1e-6 {
                cand.iter_mut().for_each(|x| *x /= l);
                chosen = Some(cand);
                break;
            }
        }
        u[slot] = chosen.expect("orthonormal completion exists");
    }
    SmallSvd { u, s, v: vs }
}

fn rotate(cols: &mut [Vec<f64>], i: usize, j: usize, c: f64, s: f64) {
    let (left, right) = cols.split_at_mut(j);
    let (a, b) = (&mut left[i], &mut right[0]);
    for (x, y) in a.iter_mut().zip(b.iter_mut()) {
        let (xi, yj) = (*x, *y);
        *x = c * xi - s * yj;
        *y = s * xi + c * yj;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_dense(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<Vec<f64>> = (0..rows)
            .map(|_| (0..cols).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        DenseMatrix::from_rows(&data)
    }

    fn gram_error(cols: &[Vec<f64>]) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..cols.len() {
            for j in 0..cols.len() {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot(&cols[i], &cols[j]) - target).abs());
            }
        }
        worst
    }

    #[test]
    fn rank_one_three_by_three() {
        // [1,2,3]^T [1,2,2]: sigma = sqrt(14) * 3
        let a = DenseMatrix::from_rows(&[
            vec![1.0, 2.0, 2.0],
            vec![2.0, 4.0, 4.0],
            vec![3.0, 6.0, 6.0],
        ]);
        let svd = truncated_svd(&a, 1, &SvdOptions::default()).unwrap();
        assert!((svd.s[0] - 14f64.sqrt() * 3.0).abs() < 1e-12);
        let u: Vec<f64> = [1.0, 2.0, 3.0].iter().map(|x| x / 14f64.sqrt()).collect();
        for i in 0..3 {
            assert!((svd.u[0][i] - u[i]).abs() < 1e-12);
        }
        let full = truncated_svd(&a, 3, &SvdOptions::default()).unwrap();
        assert!(full.s[1].abs() < 1e-12 && full.s[2].abs() < 1e-12);
        assert!(gram_error(&full.u) < 1e-10);
        assert!(gram_error(&full.v) < 1e-10);
    }

    #[test]
    fn rank_errors() {
        let a = DenseMatrix::zeros(3, 5);
        assert_eq!(
            truncated_svd(&a, 4, &SvdOptions::default()).unwrap_err(),
            SvdError::RankTooLarge {
                requested: 4,
                max: 3
            }
        );
        assert_eq!(
            truncated_svd(&a, 0, &SvdOptions::default()).unwrap_err(),
            SvdError::ZeroRank
        );
        let empty = DenseMatrix::zeros(0, 0);
        assert!(matches!(
            truncated_svd(&empty, 1, &SvdOptions::default()),
            Err(SvdError::RankTooLarge { max: 0, .. })
        ));
    }

    #[test]
    fn agrees_with_nalgebra() {
        let a = random_dense(30, 20, 11);
        let svd = truncated_svd(&a, 8, &SvdOptions::default()).unwrap();
        let na = nalgebra::DMatrix::from_row_slice(30, 20, &a.data);
        let reference = na.svd(false, false).singular_values;
        for k in 0..8 {
            assert!(
                (svd.s[k] - reference[k]).abs() < 1e-8 * reference[0],
                "sigma {k}: {} vs {}",
                svd.s[k],
                reference[k]
            );
        }
        for k in 0..8 {
            let av = a.apply(&svd.v[k]);
            for i in 0..30 {
                assert!((av[i] - svd.s[k] * svd.u[k][i]).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn sparse_and_dense_agree() {
        let dense = random_dense(12, 9, 3);
        let mut triplets = Vec::new();
        for i in 0..12 {
            for j in 0..9 {
                if (i + j) % 3 != 0 {
                    triplets.push((i, j, dense.get(i, j)));
                }
            }
        }
        let sparse = CsrMatrix::from_triplets(12, 9, triplets);
        let as_dense = sparse.to_dense();
        let a = truncated_svd(&sparse, 5, &SvdOptions::default()).unwrap();
        let b = truncated_svd(&as_dense, 5, &SvdOptions::default()).unwrap();
        for k in 0..5 {
            assert!((a.s[k] - b.s[k]).abs() < 1e-10);
        }
    }

    #[test]
    fn rank_deficient_block_stays_orthonormal() {
        // rank 2 matrix, full-rank request
        let a = DenseMatrix::from_rows(&[
            vec![1.0, 0.0, 1.0, 0.0],
            vec![0.0, 1.0, 0.0, 1.0],
            vec![1.0, 1.0, 1.0, 1.0],
            vec![2.0, 0.0, 2.0, 0.0],
        ]);
        let svd = truncated_svd(&a, 4, &SvdOptions::default()).unwrap();
        assert!(gram_error(&svd.u) < 1e-9);
        assert!(gram_error(&svd.v) < 1e-9);
        assert!(svd.s[2] < 1e-10 && svd.s[3] < 1e-10);
        let energy: f64 = svd.s.iter().map(|s| s * s).sum();
        assert!((energy - a.frobenius_norm().powi(2)).abs() < 1e-10);
    }
}
