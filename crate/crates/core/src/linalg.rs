//! Thin helpers over `faer` for the dense symmetric kernels used by the solver.

use faer::linalg::solvers::Solve;
use faer::{Par, Side};

pub use faer::Mat;

/// Eigenvalues of a symmetric matrix in ascending order; NaN on non-convergence.
pub fn sym_eigenvalues(m: &Mat<f64>) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    m.self_adjoint_eigenvalues(Side::Lower).unwrap_or_else(|_| vec![f64::NAN; m.nrows()])
}

pub fn min_eigenvalue(m: &Mat<f64>) -> f64 {
    sym_eigenvalues(m).first().copied().unwrap_or(f64::INFINITY)
}

/// Eigenvalues (ascending) and eigenvectors (columns) of a symmetric matrix.
pub fn sym_eigen(m: &Mat<f64>) -> Option<(Vec<f64>, Mat<f64>)> {
    let e = m.self_adjoint_eigen(Side::Lower).ok()?;
    let vals = e.S().column_vector().iter().copied().collect();
    Some((vals, e.U().to_owned()))
}

/// Singular values of a square matrix, descending.
pub fn singular_values(m: &Mat<f64>) -> Vec<f64> {
    m.singular_values().unwrap_or_else(|_| vec![f64::NAN; m.nrows().min(m.ncols())])
}

/// Lower Cholesky factor, or `None` when the matrix is not numerically positive definite.
pub fn cholesky_lower(m: &Mat<f64>) -> Option<Mat<f64>> {
    let l = m.llt(Side::Lower).ok()?;
    Some(l.L().to_owned())
}

/// Solves `M z = r` for symmetric positive definite `M`.
pub struct SpdSolver {
    llt: faer::linalg::solvers::Llt<f64>,
}

impl SpdSolver {
    pub fn new(m: &Mat<f64>) -> Option<Self> {
        Some(Self { llt: m.llt(Side::Lower).ok()? })
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let b = Mat::from_fn(rhs.len(), 1, |i, _| rhs[i]);
        let x = self.llt.solve(&b);
        (0..rhs.len()).map(|i| x[(i, 0)]).collect()
    }
}

/// Inverse of a symmetric positive definite matrix from its lower Cholesky factor.
pub fn spd_inverse(l: &Mat<f64>) -> Mat<f64> {
    let n = l.nrows();
    let mut linv = Mat::<f64>::identity(n, n);
    faer::linalg::triangular_solve::solve_lower_triangular_in_place(l.as_ref(), linv.as_mut(), Par::Seq);
    let inv = linv.transpose() * &linv;
    symmetrize(inv)
}

/// `L^{-1} S L^{-T}` for lower triangular `L`.
pub fn congruence_inverse(l: &Mat<f64>, s: &Mat<f64>) -> Mat<f64> {
    let mut t = s.clone();
    faer::linalg::triangular_solve::solve_lower_triangular_in_place(l.as_ref(), t.as_mut(), Par::Seq);
    let mut u = t.transpose().to_owned();
    faer::linalg::triangular_solve::solve_lower_triangular_in_place(l.as_ref(), u.as_mut(), Par::Seq);
    symmetrize(u)
}

pub fn symmetrize(mut m: Mat<f64>) -> Mat<f64> {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

/// Frobenius inner product.
pub fn dot(a: &Mat<f64>, b: &Mat<f64>) -> f64 {
    let mut s = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            s += a[(i, j)] * b[(i, j)];
        }
    }
    s
}

pub fn frobenius(a: &Mat<f64>) -> f64 {
    dot(a, a).sqrt()
}

/// Largest step `alpha <= 1` with `X + alpha dX` positive semidefinite, given the Cholesky factor of `X`.
pub fn max_psd_step(l: &Mat<f64>, dx: &Mat<f64>) -> f64 {
    if l.nrows() == 0 {
        return f64::INFINITY;
    }
    let lam = min_eigenvalue(&congruence_inverse(l, dx));
    if lam.is_nan() {
        0.0
    } else if lam >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / lam
    }
}
