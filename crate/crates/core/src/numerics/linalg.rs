//! Dense row-major matrices, a cyclic Jacobi eigensolver and Haar-random
//! orthogonal matrices.

use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use super::rng::RngStream;
use crate::error::{LidError, Result};

/// Dense `rows × cols` matrix of `f64` in row-major order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(LidError::Shape(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(LidError::Shape("ragged rows".into()));
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.rows).map(move |i| self.row(i))
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(LidError::Shape(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        gemm(
            self.rows,
            self.cols,
            other.cols,
            &self.data,
            false,
            &other.data,
            false,
            &mut out.data,
            0.0,
        );
        Ok(out)
    }

    /// `self · v`
    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.cols, "matvec dimension mismatch");
        self.iter_rows().map(|r| dot(r, v)).collect()
    }

    /// `selfᵀ · v`
    pub fn tr_matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.rows, "tr_matvec dimension mismatch");
        let mut out = vec![0.0; self.cols];
        for (r, &vi) in self.iter_rows().zip(v) {
            axpy(vi, r, &mut out);
        }
        out
    }

    /// `selfᵀ · self`
    pub fn gram(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.cols);
        gemm(
            self.cols,
            self.rows,
            self.cols,
            &self.data,
            true,
            &self.data,
            false,
            &mut out.data,
            0.0,
        );
        // gemm may differ in the last bit across the diagonal.
        for i in 0..self.cols {
            for j in 0..i {
                let s = 0.5 * (out[(i, j)] + out[(j, i)]);
                out[(i, j)] = s;
                out[(j, i)] = s;
            }
        }
        out
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|x| *x *= s);
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Largest `|a_ij - a_ji|`, or an error for non-square input.
    pub fn asymmetry(&self) -> Result<f64> {
        if self.rows != self.cols {
            return Err(LidError::Shape(format!(
                "expected square matrix, got {}x{}",
                self.rows, self.cols
            )));
        }
        let mut worst = 0.0f64;
        for i in 0..self.rows {
            for j in 0..i {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        Ok(worst)
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `C = op(A) · op(B) + beta · C` for row-major buffers, where `op(A)` is
/// `m × k` and `op(B)` is `k × n`. A transposed operand is stored in its
/// untransposed shape (`k × m` for A).
#[allow(clippy::too_many_arguments)]
pub fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_trans: bool,
    b: &[f64],
    b_trans: bool,
    c: &mut [f64],
    beta: f64,
) {
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), k * n);
    assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if a_trans {
        (1, m as isize)
    } else {
        (k as isize, 1)
    };
    let (rsb, csb) = if b_trans {
        (1, k as isize)
    } else {
        (n as isize, 1)
    };
    // SAFETY: strides describe in-bounds row-major layouts checked above.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Ordered non-negative eigenvalues of a Gram matrix together with its trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    /// Descending.
    pub eigenvalues: Vec<f64>,
    /// Diagonal sum of the decomposed matrix.
    pub trace: f64,
}

impl Spectrum {
    pub fn sum(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }

    /// Number of eigenvalues strictly above `threshold`.
    pub fn count_above(&self, threshold: f64) -> usize {
        self.eigenvalues
            .iter()
            .take_while(|&&l| l > threshold)
            .count()
    }

    /// Index `i` maximizing `λ_i / λ_{i+1}` over the leading eigenvalues that
    /// exceed `floor`; the count of eigenvalues above the gap is `i + 1`.
    pub fn largest_gap(&self, floor: f64) -> Option<usize> {
        let ev = &self.eigenvalues;
        let mut best: Option<(usize, f64)> = None;
        for i in 0..ev.len().saturating_sub(1) {
            if ev[i] <= floor {
                break;
            }
            let ratio = ev[i] / ev[i + 1].max(floor);
            if best.is_none_or(|(_, r)| ratio > r) {
                best = Some((i, ratio));
            }
        }
        best.map(|(i, _)| i)
    }
}

/// Full symmetric eigendecomposition: `G = V diag(values) Vᵀ`.
#[derive(Debug, Clone)]
pub struct SymEigen {
    /// Descending.
    pub values: Vec<f64>,
    /// Eigenvectors as columns, ordered like `values`.
    pub vectors: Matrix,
}

impl SymEigen {
    pub fn reconstruct(&self) -> Matrix {
        let n = self.values.len();
        let mut vl = self.vectors.clone();
        for i in 0..n {
            for j in 0..n {
                vl[(i, j)] *= self.values[j];
            }
        }
        let mut out = Matrix::zeros(n, n);
        gemm(
            n,
            n,
            n,
            vl.as_slice(),
            false,
            self.vectors.as_slice(),
            true,
            out.as_mut_slice(),
            0.0,
        );
        out
    }
}

const JACOBI_MAX_SWEEPS: usize = 64;
const JACOBI_REL_TOL: f64 = 1e-14;
const SYMMETRY_TOL: f64 = 1e-9;

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
pub fn sym_eig_full(g: &Matrix) -> Result<SymEigen> {
    let asym = g.asymmetry()?;
    let scale = g.max_abs().max(f64::MIN_POSITIVE);
    if asym > SYMMETRY_TOL * scale.max(1.0) {
        return Err(LidError::Shape(format!(
            "matrix is not symmetric (max asymmetry {asym:e})"
        )));
    }
    let n = g.rows();
    let mut a = g.clone();
    let mut v = Matrix::identity(n);
    let frob = g.as_slice().iter().map(|x| x * x).sum::<f64>().sqrt();
    let tol = JACOBI_REL_TOL * frob;

    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += 2.0 * a[(p, q)] * a[(p, q)];
            }
        }
        if off.sqrt() <= tol {
            break;
        }
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = a[(p, p)];
                let aqq = a[(q, q)];
                // Negligible relative to both diagonal entries: skip.
                if apq.abs() <= 0.5 * f64::EPSILON * (app.abs() * aqq.abs()).sqrt()
                    && apq.abs() <= tol
                {
                    continue;
                }
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
                rotated = true;
            }
        }
        if !rotated {
            break;
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(j, j)].total_cmp(&a[(i, i)]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        for k in 0..n {
            vectors[(k, dst)] = v[(k, src)];
        }
    }
    Ok(SymEigen { values, vectors })
}

/// Spectrum of a symmetric positive semidefinite matrix.
///
/// Eigenvalues within roundoff of zero are clamped to zero; clearly negative
/// eigenvalues are a domain error.
pub fn sym_eig(g: &Matrix) -> Result<Spectrum> {
    let eig = sym_eig_full(g)?;
    let scale = eig.values.iter().fold(0.0f64, |m, l| m.max(l.abs()));
    let floor = -1e-12 * scale.max(1.0);
    let mut eigenvalues = Vec::with_capacity(eig.values.len());
    for l in eig.values {
        if l < floor {
            return Err(LidError::Domain(format!(
                "matrix is not positive semidefinite (eigenvalue {l:e})"
            )));
        }
        eigenvalues.push(l.max(0.0));
    }
    Ok(Spectrum {
        eigenvalues,
        trace: g.trace(),
    })
}

/// Haar-distributed orthogonal matrix from the QR factorization of a
/// Gaussian matrix (Gram–Schmidt applied twice per column).
pub fn random_orthogonal(rng: &mut RngStream, n: usize) -> Result<Matrix> {
    if n == 0 {
        return Err(LidError::EmptyDimension(
            "random_orthogonal requires n >= 1",
        ));
    }
    loop {
        let mut cols: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..n).map(|_| rng.normal()).collect())
            .collect();
        let mut ok = true;
        for j in 0..n {
            for _ in 0..2 {
                for i in 0..j {
                    let (done, rest) = cols.split_at_mut(j);
                    let proj = dot(&done[i], &rest[0]);
                    axpy(-proj, &done[i], &mut rest[0]);
                }
            }
            let norm = norm_sq(&cols[j]).sqrt();
            if norm < 1e-8 {
                ok = false;
                break;
            }
            cols[j].iter_mut().for_each(|x| *x /= norm);
        }
        if ok {
            let mut q = Matrix::zeros(n, n);
            for (j, c) in cols.iter().enumerate() {
                for (i, &x) in c.iter().enumerate() {
                    q[(i, j)] = x;
                }
            }
            return Ok(q);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn max_dev_from_identity(m: &Matrix) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..m.rows() {
            for j in 0..m.cols() {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((m[(i, j)] - target).abs());
            }
        }
        worst
    }

    #[test]
    fn orthogonal_one_by_one() {
        let q = random_orthogonal(&mut RngStream::new(3, 0), 1).unwrap();
        assert_eq!(q[(0, 0)].abs(), 1.0);
    }

    #[test]
    fn orthogonal_is_orthogonal() {
        let q = random_orthogonal(&mut RngStream::new(3, 0), 8).unwrap();
        let qtq = q.transpose().matmul(&q).unwrap();
        assert!(max_dev_from_identity(&qtq) < 1e-10);
        let v: Vec<f64> = (0..8).map(|i| i as f64 - 2.5).collect();
        let qv = q.matvec(&v);
        assert!((norm_sq(&qv).sqrt() - norm_sq(&v).sqrt()).abs() < 1e-10);
    }

    #[test]
    fn orthogonal_rejects_zero() {
        assert!(random_orthogonal(&mut RngStream::new(0, 0), 0).is_err());
    }

    #[test]
    fn eig_identity() {
        let s = sym_eig(&Matrix::identity(4)).unwrap();
        assert_eq!(s.eigenvalues, vec![1.0; 4]);
        assert_eq!(s.trace, 4.0);
    }

    #[test]
    fn eig_conjugated_diagonal() {
        let q = random_orthogonal(&mut RngStream::new(11, 0), 3).unwrap();
        let d = Matrix::from_diag(&[3.0, 1.0, 0.0]);
        let g = q.matmul(&d).unwrap().matmul(&q.transpose()).unwrap();
        // symmetrize the roundoff
        let g = {
            let gt = g.transpose();
            let mut s = g.clone();
            for (x, y) in s.as_mut_slice().iter_mut().zip(gt.as_slice()) {
                *x = 0.5 * (*x + y);
            }
            s
        };
        let s = sym_eig(&g).unwrap();
        for (got, want) in s.eigenvalues.iter().zip([3.0, 1.0, 0.0]) {
            assert!((got - want).abs() < 1e-9, "{got} vs {want}");
        }
    }

    #[test]
    fn eig_rank_one() {
        let u = [1.0, 2.0, 0.0, 0.0];
        let a = Matrix::from_vec(1, 4, u.to_vec()).unwrap();
        let s = sym_eig(&a.gram()).unwrap();
        assert!((s.eigenvalues[0] - 5.0).abs() < 1e-12);
        for &l in &s.eigenvalues[1..] {
            assert!(l.abs() < 1e-12);
        }
    }

    #[test]
    fn eig_reconstructs() {
        let mut rng = RngStream::new(5, 5);
        let b = Matrix::from_vec(12, 10, (0..120).map(|_| rng.normal()).collect()).unwrap();
        let g = b.gram();
        let eig = sym_eig_full(&g).unwrap();
        let r = eig.reconstruct();
        let err = r
            .as_slice()
            .iter()
            .zip(g.as_slice())
            .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        assert!(err <= 1e-8 * g.max_abs(), "reconstruction error {err}");
        assert!(eig.values.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn eig_rejects_bad_shapes() {
        assert!(sym_eig(&Matrix::zeros(2, 3)).is_err());
        let m = Matrix::from_rows(&[vec![1.0, 2.0], vec![0.0, 1.0]]).unwrap();
        assert!(matches!(sym_eig(&m), Err(LidError::Shape(_))));
    }

    #[test]
    fn spectral_trace_identity() {
        let mut rng = RngStream::new(8, 1);
        let m = 7;
        let mut b = Matrix::from_vec(m, 9, (0..63).map(|_| rng.normal()).collect()).unwrap();
        let row_sum: f64 = b.iter_rows().map(norm_sq).sum::<f64>() / m as f64;
        b.scale(1.0 / (m as f64).sqrt());
        let c = b.gram();
        let s = sym_eig(&c).unwrap();
        assert!((s.trace - row_sum).abs() <= 1e-12 * row_sum);
        assert!((s.sum() - s.trace).abs() <= 1e-9 * s.trace);
        // rank <= m
        assert!(s.eigenvalues[m..].iter().all(|&l| l < 1e-12));
    }

    #[test]
    fn gemm_transposes() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).unwrap();
        let b = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let ab = a.matmul(&b).unwrap();
        assert_eq!(ab.as_slice(), &[4.0, 5.0, 10.0, 11.0]);
        let mut c = vec![0.0; 4];
        let (at, bt) = (a.transpose(), b.transpose());
        gemm(
            2,
            3,
            2,
            at.as_slice(),
            true,
            bt.as_slice(),
            true,
            &mut c,
            0.0,
        );
        assert_eq!(c, ab.as_slice());
    }
}
