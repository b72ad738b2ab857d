//! Small dense helpers over faer used throughout the crate.

use faer::linalg::solvers::Solve;
use faer::{c64, Col, Mat, MatRef, Side};

use crate::error::{Error, Result};

pub type CMat = Mat<c64>;
pub type CVec = Col<c64>;

pub const ZERO: c64 = c64 { re: 0.0, im: 0.0 };
pub const ONE: c64 = c64 { re: 1.0, im: 0.0 };
pub const I: c64 = c64 { re: 0.0, im: 1.0 };

pub fn re(x: f64) -> c64 {
    c64::new(x, 0.0)
}

pub fn identity(n: usize) -> CMat {
    Mat::identity(n, n)
}

pub fn zeros(r: usize, c: usize) -> CMat {
    Mat::zeros(r, c)
}

pub fn adjoint(a: MatRef<'_, c64>) -> CMat {
    a.adjoint().to_owned()
}

pub fn scaled(a: &CMat, s: c64) -> CMat {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] * s)
}

/// `sum_k coef_k * mats_k + diag_shift * I`.
pub fn lincomb(terms: &[(c64, &CMat)], diag_shift: c64) -> CMat {
    let (r, c) = (terms[0].1.nrows(), terms[0].1.ncols());
    let mut out = Mat::from_fn(r, c, |i, j| if i == j { diag_shift } else { ZERO });
    for (coef, m) in terms {
        for j in 0..c {
            for i in 0..r {
                out[(i, j)] += *coef * m[(i, j)];
            }
        }
    }
    out
}

pub fn hermitian_part(a: &CMat) -> CMat {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| (a[(i, j)] + a[(j, i)].conj()) * 0.5)
}

/// Largest entrywise modulus.
pub fn max_abs(a: MatRef<'_, c64>) -> f64 {
    let mut m: f64 = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max(a[(i, j)].norm());
        }
    }
    m
}

/// Largest entrywise modulus of `a - a^dagger`.
pub fn hermitian_defect(a: &CMat) -> f64 {
    let n = a.nrows();
    let mut m: f64 = 0.0;
    for j in 0..n {
        for i in 0..n {
            m = m.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    m
}

pub fn all_finite(a: MatRef<'_, c64>) -> bool {
    (0..a.ncols()).all(|j| (0..a.nrows()).all(|i| a[(i, j)].re.is_finite() && a[(i, j)].im.is_finite()))
}

pub fn diag_real(v: &[f64]) -> CMat {
    Mat::from_fn(v.len(), v.len(), |i, j| if i == j { re(v[i]) } else { ZERO })
}

pub fn diag(v: &[c64]) -> CMat {
    Mat::from_fn(v.len(), v.len(), |i, j| if i == j { v[i] } else { ZERO })
}

/// `diag(l) * a * diag(r)`.
pub fn diag_sandwich(l: &[f64], a: &CMat, r: &[f64]) -> CMat {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] * (l[i] * r[j]))
}

/// Hermitian eigendecomposition with eigenvalues in nondecreasing order.
#[derive(Debug, Clone)]
pub struct HermEig {
    pub values: Vec<f64>,
    pub vectors: CMat,
}

impl HermEig {
    pub fn min(&self) -> f64 {
        self.values.first().copied().unwrap_or(f64::INFINITY)
    }

    pub fn max(&self) -> f64 {
        self.values.last().copied().unwrap_or(f64::NEG_INFINITY)
    }

    /// `V diag(f(lambda)) V^dagger`.
    pub fn apply_fn(&self, f: impl Fn(f64) -> f64) -> CMat {
        let v = &self.vectors;
        let fv: Vec<f64> = self.values.iter().map(|&x| f(x)).collect();
        let scaled = Mat::from_fn(v.nrows(), v.ncols(), |i, j| v[(i, j)] * fv[j]);
        let out = &scaled * v.adjoint();
        // the product is Hermitian up to rounding; make it exactly so
        hermitian_part(&out)
    }
}

/// Eigendecomposition of a Hermitian matrix; only the lower triangle is read.
pub fn herm_eig(a: &CMat) -> Result<HermEig> {
    if a.nrows() != a.ncols() {
        return Err(Error::Dimension(format!("{}x{} is not square", a.nrows(), a.ncols())));
    }
    if !all_finite(a.as_ref()) {
        return Err(Error::NonFinite("matrix passed to Hermitian eigensolver".into()));
    }
    let evd =
        a.self_adjoint_eigen(Side::Lower).map_err(|e| Error::Numerical(format!("Hermitian eigensolver: {e:?}")))?;
    let s = evd.S();
    let values = (0..a.nrows()).map(|i| s[i].re).collect();
    Ok(HermEig { values, vectors: evd.U().to_owned() })
}

pub fn herm_eigenvalues(a: &CMat) -> Result<Vec<f64>> {
    if !all_finite(a.as_ref()) {
        return Err(Error::NonFinite("matrix passed to Hermitian eigensolver".into()));
    }
    a.self_adjoint_eigenvalues(Side::Lower).map_err(|e| Error::Numerical(format!("Hermitian eigensolver: {e:?}")))
}

pub fn singular_values(a: MatRef<'_, c64>) -> Result<Vec<f64>> {
    if !all_finite(a) {
        return Err(Error::NonFinite("matrix passed to SVD".into()));
    }
    a.singular_values().map_err(|e| Error::Numerical(format!("SVD: {e:?}")))
}

/// Spectral norm (largest singular value).
pub fn op_norm(a: MatRef<'_, c64>) -> Result<f64> {
    Ok(singular_values(a)?.first().copied().unwrap_or(0.0))
}

pub fn min_singular_value(a: MatRef<'_, c64>) -> Result<f64> {
    Ok(singular_values(a)?.last().copied().unwrap_or(0.0))
}

/// Maximum absolute column sum.
pub fn one_norm(a: &CMat) -> f64 {
    (0..a.ncols()).map(|j| (0..a.nrows()).map(|i| a[(i, j)].norm()).sum::<f64>()).fold(0.0, f64::max)
}

/// Solves `a x = b` by partial-pivoting LU.
pub fn solve(a: &CMat, b: &CMat) -> CMat {
    a.partial_piv_lu().solve(b)
}

/// `x^dagger y`.
pub fn inner(x: &CVec, y: &CVec) -> c64 {
    (0..x.nrows()).map(|i| x[i].conj() * y[i]).sum()
}

pub fn vnorm(x: &CVec) -> f64 {
    x.norm_l2()
}

pub fn matvec(a: &CMat, x: &CVec) -> CVec {
    a * x
}

/// `x^dagger a y`.
pub fn form(x: &CVec, a: &CMat, y: &CVec) -> c64 {
    inner(x, &(a * y))
}

/// Assembles `[[a11, a12], [a21, a22]]` from equal square blocks.
pub fn block2(a11: &CMat, a12: &CMat, a21: &CMat, a22: &CMat) -> CMat {
    let n = a11.nrows();
    Mat::from_fn(2 * n, 2 * n, |i, j| {
        let (bi, bj) = (i / n, j / n);
        let (ii, jj) = (i % n, j % n);
        match (bi, bj) {
            (0, 0) => a11[(ii, jj)],
            (0, 1) => a12[(ii, jj)],
            (1, 0) => a21[(ii, jj)],
            _ => a22[(ii, jj)],
        }
    })
}

/// The `(bi, bj)` block of size `n` of a `2n x 2n` matrix.
pub fn block(a: &CMat, bi: usize, bj: usize) -> CMat {
    let n = a.nrows() / 2;
    a.as_ref().submatrix(bi * n, bj * n, n, n).to_owned()
}

/// The swap matrix `[[0, 1], [1, 0]]` on `C^n + C^n`.
pub fn charge_matrix(n: usize) -> CMat {
    Mat::from_fn(2 * n, 2 * n, |i, j| if (i + n) % (2 * n) == j { ONE } else { ZERO })
}

/// Operator norm of `a` measured in the geometry of the positive Gram
/// matrix `g`: `|| g^{1/2} a g^{-1/2} ||`.
pub fn norm_in_geometry(a: &CMat, g_half: &CMat, g_neg_half: &CMat) -> Result<f64> {
    op_norm((g_half * a * g_neg_half).as_ref())
}

pub fn diff_norm(a: &CMat, b: &CMat) -> Result<f64> {
    op_norm((a - b).as_ref())
}
