//! Small dense linear-algebra helpers shared by the rest of the crate.
//!
//! Everything here works on `nalgebra` dynamic matrices. Complex matrices use
//! [`C64`]; the scalar constant matrices of the certificate layer are real.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use num_complex::Complex;

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;
pub type RMat = DMatrix<f64>;

pub fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// Promote a real matrix to a complex one.
pub fn complexify(m: &RMat) -> CMat {
    m.map(c)
}

/// `(A + A^H) / 2`.
pub fn hermitian_part(a: &CMat) -> CMat {
    (a + a.adjoint()).scale(0.5)
}

pub fn frobenius(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn max_abs(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Relative hermiticity test: `max|A - A^H| <= rel_tol * max(1, max|A|)`.
pub fn is_hermitian(a: &CMat, rel_tol: f64) -> bool {
    if !a.is_square() {
        return false;
    }
    let scale = max_abs(a).max(1.0);
    max_abs(&(a - a.adjoint())) <= rel_tol * scale
}

fn check_square(rows: usize, cols: usize, what: &str) -> Result<()> {
    if rows != cols {
        return Err(Error::Dimension(format!("{what} must be square, got {rows}x{cols}")));
    }
    Ok(())
}

fn sorted(mut v: Vec<f64>) -> Result<Vec<f64>> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical(format!("eigen-solver produced non-finite values: {v:?}")));
    }
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// Ascending eigenvalues of a Hermitian matrix. The input is hermitised first
/// so round-off asymmetry never leaks into the solver.
pub fn hermitian_eigenvalues(a: &CMat) -> Result<Vec<f64>> {
    check_square(a.nrows(), a.ncols(), "eigenvalue input")?;
    if a.nrows() == 0 {
        return Ok(Vec::new());
    }
    let eig = SymmetricEigen::new(hermitian_part(a));
    sorted(eig.eigenvalues.iter().copied().collect())
}

/// Eigen-decomposition of a Hermitian matrix: ascending eigenvalues and the
/// matching orthonormal eigenvectors (as columns).
pub fn hermitian_eigen(a: &CMat) -> Result<(Vec<f64>, CMat)> {
    check_square(a.nrows(), a.ncols(), "eigenvalue input")?;
    let eig = SymmetricEigen::new(hermitian_part(a));
    let n = a.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    if values.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical(format!("eigen-solver produced non-finite values: {values:?}")));
    }
    let mut vectors = CMat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok((values, vectors))
}

/// Ascending eigenvalues of a real symmetric matrix (the input is symmetrised).
pub fn symmetric_eigenvalues(a: &RMat) -> Result<Vec<f64>> {
    check_square(a.nrows(), a.ncols(), "eigenvalue input")?;
    if a.nrows() == 0 {
        return Ok(Vec::new());
    }
    let sym = (a + a.transpose()).scale(0.5);
    let eig = SymmetricEigen::new(sym);
    sorted(eig.eigenvalues.iter().copied().collect())
}

/// Spectral norm of a real matrix from the largest eigenvalue of `M^T M`.
pub fn spectral_norm_real(m: &RMat) -> Result<f64> {
    if m.is_empty() {
        return Ok(0.0);
    }
    let gram = m.transpose() * m;
    let ev = symmetric_eigenvalues(&gram)?;
    Ok(ev.last().copied().unwrap_or(0.0).max(0.0).sqrt())
}

/// Largest singular value of a complex matrix.
pub fn spectral_norm(m: &CMat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .singular_values()
        .iter()
        .copied()
        .fold(0.0, f64::max)
}

pub fn cholesky(b: &CMat, what: &str) -> Result<Cholesky<C64, Dyn>> {
    check_square(b.nrows(), b.ncols(), what)?;
    let not_pd = || Error::Validation(format!("{what} is not Hermitian positive definite"));
    let chol = Cholesky::new(hermitian_part(b)).ok_or_else(not_pd)?;
    // complex square roots of negative pivots do not make the factorisation fail
    let pivots_ok = chol
        .l_dirty()
        .diagonal()
        .iter()
        .all(|d| d.re.is_finite() && d.re > 0.0 && d.im.abs() <= 1e-12 * d.re);
    if pivots_ok {
        Ok(chol)
    } else {
        Err(not_pd())
    }
}

/// `L^{-1} A L^{-H}` for the Cholesky factor `L` of `b`.
pub fn whiten(a: &CMat, l_left: &CMat, l_right: &CMat) -> Result<CMat> {
    let left = l_left
        .solve_lower_triangular(a)
        .ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))?;
    // (L_r^{-1} left^H)^H = left L_r^{-H}
    let right = l_right
        .solve_lower_triangular(&left.adjoint())
        .ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))?;
    Ok(right.adjoint())
}

/// Ascending eigenvalues of the Hermitian-definite pencil `a x = λ b x`,
/// with `b` Hermitian positive definite.
pub fn generalized_eigenvalues(a: &CMat, b: &CMat) -> Result<Vec<f64>> {
    if a.shape() != b.shape() {
        return Err(Error::Dimension(format!(
            "pencil shapes differ: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let l = cholesky(b, "pencil right-hand matrix")?.l();
    let w = whiten(&hermitian_part(a), &l, &l)?;
    hermitian_eigenvalues(&w)
}

/// Block-diagonal assembly.
pub fn block_diag(blocks: &[&CMat]) -> CMat {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = CMat::zeros(rows, cols);
    let (mut r, mut col) = (0, 0);
    for b in blocks {
        out.view_mut((r, col), b.shape()).copy_from(b);
        r += b.nrows();
        col += b.ncols();
    }
    out
}

/// `V ⊗ I_n`: block `(i, l)` equals `V[(i, l)] * I_n`.
pub fn kron_identity(v: &CMat, n: usize) -> CMat {
    let mut out = CMat::zeros(v.nrows() * n, v.ncols() * n);
    for i in 0..v.nrows() {
        for l in 0..v.ncols() {
            let x = v[(i, l)];
            if x == C64::new(0.0, 0.0) {
                continue;
            }
            for p in 0..n {
                out[(i * n + p, l * n + p)] = x;
            }
        }
    }
    out
}

/// `x^H G x`, real part (G Hermitian).
pub fn gram_norm_sqr(g: &CMat, x: &CVec) -> f64 {
    x.dotc(&(g * x)).re.max(0.0)
}
