//! Dense matrices just large enough for this crate: parameter dimensions stay
//! in the single digits, so the factorizations are plain textbook loops.
//! `Cholesky` handles SPD solves, determinants, and Gaussian sampling;
//! `sym_eigen` is a cyclic Jacobi sweep used to clamp near-singular curvature.

use crate::real::Real;

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Mat<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Mat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m.set(i, i, T::one());
        }
        m
    }

    /// Builds an `n x n` diagonal matrix.
    pub fn diag(d: &[T]) -> Self {
        let mut m = Mat::zeros(d.len(), d.len());
        for (i, &v) in d.iter().enumerate() {
            m.set(i, i, v);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut m = Mat::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                m.set(r, c, f(r, c));
            }
        }
        m
    }

    /// Builds from row slices; panics if the rows are ragged.
    pub fn from_rows(rows: &[&[T]]) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        assert!(rows.iter().all(|row| row.len() == c), "ragged rows");
        Mat::from_fn(r, c, |i, j| rows[i][j])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn at(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    /// `A x` for a length-`cols` vector.
    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|r| {
                let mut acc = T::zero();
                for c in 0..self.cols {
                    acc += self.at(r, c) * x[c];
                }
                acc
            })
            .collect()
    }

    /// `A^T A`.
    pub fn gram(&self) -> Mat<T> {
        let mut g = Mat::zeros(self.cols, self.cols);
        for i in 0..self.cols {
            for j in i..self.cols {
                let mut acc = T::zero();
                for r in 0..self.rows {
                    acc += self.at(r, i) * self.at(r, j);
                }
                g.set(i, j, acc);
                g.set(j, i, acc);
            }
        }
        g
    }

    /// `A B`.
    pub fn matmul(&self, other: &Mat<T>) -> Mat<T> {
        assert_eq!(self.cols, other.rows);
        let mut out = Mat::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self.at(r, k);
                if a == T::zero() {
                    continue;
                }
                for c in 0..other.cols {
                    let v = out.at(r, c) + a * other.at(k, c);
                    out.set(r, c, v);
                }
            }
        }
        out
    }

    pub fn scale_in_place(&mut self, s: T) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    /// Adds `d[j]` to each diagonal entry; panics on a non-square matrix.
    pub fn add_diag(&mut self, d: &[T]) {
        assert_eq!(self.rows, self.cols);
        assert_eq!(d.len(), self.rows);
        for (j, &v) in d.iter().enumerate() {
            let cur = self.at(j, j);
            self.set(j, j, cur + v);
        }
    }

    /// Replaces `A` by `(A + A^T) / 2`.
    pub fn symmetrize(&mut self) {
        assert_eq!(self.rows, self.cols);
        let half = T::of(0.5);
        for r in 0..self.rows {
            for c in (r + 1)..self.cols {
                let v = (self.at(r, c) + self.at(c, r)) * half;
                self.set(r, c, v);
                self.set(c, r, v);
            }
        }
    }

    pub fn trace(&self) -> T {
        assert_eq!(self.rows, self.cols);
        (0..self.rows).map(|i| self.at(i, i)).sum()
    }

    pub fn transpose(&self) -> Mat<T> {
        Mat::from_fn(self.cols, self.rows, |r, c| self.at(c, r))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Lower-triangular Cholesky factor of an SPD matrix, `A = L L^T`.
#[derive(Clone, Debug)]
pub struct Cholesky<T> {
    l: Mat<T>,
}

impl<T: Real> Cholesky<T> {
    /// Factors `a`; `None` if a pivot is not strictly positive (not SPD).
    pub fn new(a: &Mat<T>) -> Option<Self> {
        assert_eq!(a.rows(), a.cols());
        let n = a.rows();
        let mut l = Mat::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let mut acc = a.at(i, j);
                for k in 0..j {
                    acc -= l.at(i, k) * l.at(j, k);
                }
                if i == j {
                    if !(acc > T::zero()) || !acc.is_finite() {
                        return None;
                    }
                    l.set(i, i, acc.sqrt());
                } else {
                    l.set(i, j, acc / l.at(j, j));
                }
            }
        }
        Some(Cholesky { l })
    }

    pub fn dim(&self) -> usize {
        self.l.rows()
    }

    pub fn lower(&self) -> &Mat<T> {
        &self.l
    }

    /// `log det A = 2 * sum_i log L_ii`.
    pub fn log_det(&self) -> T {
        let two = T::of(2.0);
        (0..self.dim()).map(|i| self.l.at(i, i).ln()).sum::<T>() * two
    }

    /// Solves `L y = b` (forward substitution).
    pub fn solve_lower(&self, b: &[T]) -> Vec<T> {
        let n = self.dim();
        assert_eq!(b.len(), n);
        let mut y = vec![T::zero(); n];
        for i in 0..n {
            let mut acc = b[i];
            for k in 0..i {
                acc -= self.l.at(i, k) * y[k];
            }
            y[i] = acc / self.l.at(i, i);
        }
        y
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.dim();
        let y = self.solve_lower(b);
        let mut x = y;
        for i in (0..n).rev() {
            let mut acc = x[i];
            for k in (i + 1)..n {
                acc -= self.l.at(k, i) * x[k];
            }
            x[i] = acc / self.l.at(i, i);
        }
        x
    }

    /// `A^{-1}` column by column.
    pub fn inverse(&self) -> Mat<T> {
        let n = self.dim();
        let mut inv = Mat::zeros(n, n);
        let mut e = vec![T::zero(); n];
        for c in 0..n {
            e[c] = T::one();
            let col = self.solve(&e);
            e[c] = T::zero();
            for r in 0..n {
                inv.set(r, c, col[r]);
            }
        }
        inv
    }

    /// `L z`, used to turn standard normal draws into `N(0, A)` draws.
    pub fn lower_mul(&self, z: &[T]) -> Vec<T> {
        let n = self.dim();
        assert_eq!(z.len(), n);
        (0..n)
            .map(|i| {
                let mut acc = T::zero();
                for k in 0..=i {
                    acc += self.l.at(i, k) * z[k];
                }
                acc
            })
            .collect()
    }

    /// `(x - mu)^T A^{-1} (x - mu)` via one forward solve.
    pub fn quad_form(&self, diff: &[T]) -> T {
        self.solve_lower(diff).iter().map(|v| *v * *v).sum()
    }
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns `(lambda, v)` with `A = V diag(lambda) V^T`; eigenvalues are sorted
/// ascending and the columns of `V` are the matching orthonormal eigenvectors.
pub fn sym_eigen<T: Real>(a: &Mat<T>) -> (Vec<T>, Mat<T>) {
    assert_eq!(a.rows(), a.cols());
    let n = a.rows();
    let mut m = a.clone();
    let mut v = Mat::identity(n);
    if n <= 1 {
        return ((0..n).map(|i| m.at(i, i)).collect(), v);
    }

    let fro = m
        .data()
        .iter()
        .map(|x| *x * *x)
        .sum::<T>()
        .sqrt()
        .max(T::min_positive_value());
    let tol = T::epsilon() * fro;

    for _sweep in 0..64 {
        let mut off = T::zero();
        for p in 0..n {
            for q in (p + 1)..n {
                off += m.at(p, q) * m.at(p, q);
            }
        }
        if off.sqrt() <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m.at(p, q);
                if apq.abs() <= tol * T::of(1e-3) {
                    continue;
                }
                let theta = (m.at(q, q) - m.at(p, p)) / (T::of(2.0) * apq);
                let t = {
                    let s = if theta >= T::zero() {
                        T::one()
                    } else {
                        -T::one()
                    };
                    s / (theta.abs() + (theta * theta + T::one()).sqrt())
                };
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;

                // Rotate rows/columns p and q of M.
                for k in 0..n {
                    let mkp = m.at(k, p);
                    let mkq = m.at(k, q);
                    m.set(k, p, c * mkp - s * mkq);
                    m.set(k, q, s * mkp + c * mkq);
                }
                for k in 0..n {
                    let mpk = m.at(p, k);
                    let mqk = m.at(q, k);
                    m.set(p, k, c * mpk - s * mqk);
                    m.set(q, k, s * mpk + c * mqk);
                }
                for k in 0..n {
                    let vkp = v.at(k, p);
                    let vkq = v.at(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }

    let mut idx: Vec<usize> = (0..n).collect();
    let evals: Vec<T> = (0..n).map(|i| m.at(i, i)).collect();
    idx.sort_by(|&i, &j| evals[i].partial_cmp(&evals[j]).unwrap());
    let sorted: Vec<T> = idx.iter().map(|&i| evals[i]).collect();
    let vs = Mat::from_fn(n, n, |r, c| v.at(r, idx[c]));
    (sorted, vs)
}

/// Rebuilds a symmetric matrix with eigenvalues clamped below at `floor`.
pub fn clamp_eigenvalues<T: Real>(a: &Mat<T>, floor: T) -> Mat<T> {
    let n = a.rows();
    let (evals, v) = sym_eigen(a);
    let mut out = Mat::zeros(n, n);
    for k in 0..n {
        let lam = evals[k].max(floor);
        for r in 0..n {
            for c in r..n {
                let val = out.at(r, c) + lam * v.at(r, k) * v.at(c, k);
                out.set(r, c, val);
                out.set(c, r, val);
            }
        }
    }
    out
}
