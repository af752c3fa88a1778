//! Small dense/sparse complex linear-algebra helpers.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{invalid_input, Error, Result};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub const I: C64 = C64::new(0.0, 1.0);

pub fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

pub fn commutator(a: &CMat, b: &CMat) -> CMat {
    a * b - b * a
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

pub fn hermiticity_error(m: &CMat) -> f64 {
    let mut err = 0.0f64;
    for i in 0..m.nrows() {
        for j in i..m.ncols() {
            err = err.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    err
}

pub fn max_abs_diff(a: &CMat, b: &CMat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending and
/// eigenvectors as matching columns.
pub fn hermitian_eigen(m: &CMat) -> (Vec<f64>, CMat) {
    let eig = m.clone().symmetric_eigen();
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = CMat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

pub fn hermitian_eigenvalues(m: &CMat) -> Vec<f64> {
    let mut v: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Eigenvalues of a general complex matrix via the Schur form.  When the QR
/// iteration stalls, which happens on some highly symmetric inputs, it is
/// retried on the transpose and on scalar-shifted copies.
pub fn eigenvalues(m: &CMat) -> Result<Vec<C64>> {
    let n = m.nrows();
    if n == 0 {
        return Ok(Vec::new());
    }
    let scale = m.iter().map(|x| x.norm()).fold(0.0, f64::max).max(1.0);
    let shifts = [C64::new(0.0, 0.0), C64::new(0.3137, 0.1729), C64::new(-0.2718, 0.4142)];
    for shift in &shifts {
        for transpose in [false, true] {
            let mut a = if transpose { m.transpose() } else { m.clone() };
            let s = shift * scale;
            for i in 0..n {
                a[(i, i)] += s;
            }
            if let Some(schur) = nalgebra::linalg::Schur::try_new(a, f64::EPSILON, 10_000) {
                let (_, t) = schur.unpack();
                return Ok((0..n).map(|i| t[(i, i)] - s).collect());
            }
        }
    }
    Err(Error::NumericalTolerance {
        context: "Schur decomposition".into(),
        detail: format!("no convergence for {n}x{n} matrix"),
    })
}

/// Right eigenvector for an (approximate) eigenvalue by inverse iteration.
pub fn eigenvector(m: &CMat, lambda: C64) -> Result<CVec> {
    let n = m.nrows();
    let scale = m.iter().map(|x| x.norm()).fold(0.0, f64::max).max(1.0);
    let shift = lambda + C64::new(1e-10 * scale, 1e-10 * scale);
    let mut a = m.clone();
    for i in 0..n {
        a[(i, i)] -= shift;
    }
    let lu = a.lu();
    let mut x = CVec::from_fn(n, |i, _| C64::new(1.0 + 0.1 * i as f64, 0.3 - 0.05 * i as f64));
    x /= c(x.norm());
    for _ in 0..4 {
        let y = lu.solve(&x).ok_or_else(|| invalid_input("singular shifted matrix"))?;
        let norm = y.norm();
        if !norm.is_finite() || norm == 0.0 {
            return Err(invalid_input("inverse iteration diverged"));
        }
        x = y / c(norm);
    }
    Ok(x)
}

/// Row-compressed complex matrix used for repeated products with a dense state.
#[derive(Debug, Clone)]
pub struct SparseOp {
    dim: usize,
    row_start: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<C64>,
}

impl SparseOp {
    pub fn from_dense(m: &CMat) -> Self {
        let dim = m.nrows();
        let mut row_start = Vec::with_capacity(dim + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_start.push(0);
        for i in 0..dim {
            for j in 0..dim {
                let v = m[(i, j)];
                if v != C64::new(0.0, 0.0) {
                    cols.push(j);
                    vals.push(v);
                }
            }
            row_start.push(cols.len());
        }
        Self { dim, row_start, cols, vals }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn mul_vec(&self, x: &[C64], out: &mut [C64]) {
        for (i, o) in out.iter_mut().enumerate().take(self.dim) {
            let mut acc = C64::new(0.0, 0.0);
            for p in self.row_start[i]..self.row_start[i + 1] {
                acc += self.vals[p] * x[self.cols[p]];
            }
            *o = acc;
        }
    }

    pub fn apply(&self, x: &CVec) -> CVec {
        let mut out = CVec::zeros(self.dim);
        self.mul_vec(x.as_slice(), out.as_mut_slice());
        out
    }

    /// `out = -i (A X - X A)` for square dense `X`.
    pub fn neg_i_commutator(&self, x: &CMat, out: &mut CMat) {
        let n = self.dim;
        out.fill(C64::new(0.0, 0.0));
        // A X, column by column.
        for col in 0..n {
            let xc = x.column(col);
            for i in 0..n {
                let mut acc = C64::new(0.0, 0.0);
                for p in self.row_start[i]..self.row_start[i + 1] {
                    acc += self.vals[p] * xc[self.cols[p]];
                }
                out[(i, col)] = acc;
            }
        }
        // - X A: column j of X A is sum_i A_ij X[:, i].
        for i in 0..n {
            for p in self.row_start[i]..self.row_start[i + 1] {
                let (j, a) = (self.cols[p], self.vals[p]);
                for r in 0..n {
                    let v = x[(r, i)] * a;
                    out[(r, j)] -= v;
                }
            }
        }
        for v in out.iter_mut() {
            *v = C64::new(v.im, -v.re);
        }
    }
}

/// Applies `exp(-i K) v` for Hermitian `K` given through `apply_k` by a
/// Taylor series truncated once the term norm falls below `tol * |v|`.
pub fn expm_neg_i_apply<F>(apply_k: F, v: &CVec, tol: f64, max_terms: usize) -> Result<CVec>
where
    F: Fn(&CVec) -> CVec,
{
    let scale = v.norm().max(f64::MIN_POSITIVE);
    let mut sum = v.clone();
    let mut term = v.clone();
    for n in 1..=max_terms {
        term = apply_k(&term) * C64::new(0.0, -1.0 / n as f64);
        sum += &term;
        if term.norm() <= tol * scale {
            return Ok(sum);
        }
    }
    Err(Error::NumericalTolerance {
        context: "matrix exponential".into(),
        detail: format!("Taylor series not converged after {max_terms} terms; reduce the step"),
    })
}

/// One classical fourth-order Runge-Kutta step for `dy/dt = f(y)`.
pub fn rk4_step<F>(f: F, y: &CMat, h: f64) -> CMat
where
    F: Fn(&CMat) -> CMat,
{
    let k1 = f(y);
    let k2 = f(&(y + &k1 * c(h / 2.0)));
    let k3 = f(&(y + &k2 * c(h / 2.0)));
    let k4 = f(&(y + &k3 * c(h)));
    y + (k1 + (k2 + k3) * c(2.0) + k4) * c(h / 6.0)
}
