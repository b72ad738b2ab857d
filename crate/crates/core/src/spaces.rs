//! Time-dependent Hilbert structures on Cauchy data: the energy Gram `H`,
//! the dual Gram `S = Q H^{-1} Q`, the absolute value `|B|` in the dual
//! geometry and the interpolating scale `H_lambda`, `lambda in [-1, 1]`.

use std::borrow::Cow;
use std::collections::BTreeMap;

use faer::Mat;

use crate::discrete_operators::{fractional_power, OperatorSet};
use crate::error::{Error, Result};
use crate::linalg::{herm_eig, hermitian_defect, hermitian_part, max_abs, op_norm, CMat, CVec, HermEig};

fn lambda_key(lambda: f64) -> i64 {
    (lambda * 1e12).round() as i64
}

fn check_lambda(lambda: f64) -> Result<()> {
    if (-1.0..=1.0).contains(&lambda) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("lambda = {lambda} outside [-1, 1]")))
    }
}

/// Gram matrices of the scale `H_{lambda,t}` at one time.
#[derive(Debug, Clone)]
pub struct NormFamily {
    pub time_stamp: f64,
    /// `H(t)`.
    pub gram_en: CMat,
    /// `Q H(t)^{-1} Q`.
    pub gram_dual: CMat,
    /// `|B(t)|` defined through the dual geometry.
    pub abs_b: CMat,
    /// `S^{1/2} B S^{-1/2}` made exactly Hermitian, and its spectrum.
    pub b_tilde: CMat,
    pub b_tilde_eig: HermEig,
    /// Relative Hermiticity defect of `S^{1/2} B S^{-1/2}` before symmetrization.
    pub b_tilde_defect: f64,
    pub s_half: CMat,
    pub s_neg_half: CMat,
    lambda_cache: BTreeMap<i64, CMat>,
}

impl NormFamily {
    /// Builds the family with Grams for `lambda in {-1, 0, 1}` cached.
    pub fn build(ops: &OperatorSet) -> Result<Self> {
        Self::build_with(ops, &[-1.0, 0.0, 1.0])
    }

    /// Builds the family caching the Grams for `lambdas`.
    pub fn build_with(ops: &OperatorSet, lambdas: &[f64]) -> Result<Self> {
        let s = &ops.s_dual;
        let s_eig = herm_eig(s)?;
        if !(s_eig.min() > 0.0) {
            return Err(Error::NotPositiveDefinite { min_eig: s_eig.min() });
        }
        let s_half = s_eig.apply_fn(f64::sqrt);
        let s_neg_half = s_eig.apply_fn(|x| 1.0 / x.sqrt());
        let bt_raw = &s_half * &ops.b * &s_neg_half;
        let scale = max_abs(bt_raw.as_ref()).max(f64::MIN_POSITIVE);
        let b_tilde_defect = hermitian_defect(&bt_raw) / scale;
        if b_tilde_defect > 1e-8 {
            return Err(Error::Numerical(format!(
                "S^(1/2) B S^(-1/2) is not Hermitian (relative defect {b_tilde_defect:e}) at t = {}",
                ops.time_stamp
            )));
        }
        let b_tilde = hermitian_part(&bt_raw);
        let b_tilde_eig = herm_eig(&b_tilde)?;
        let abs_bt = b_tilde_eig.apply_fn(f64::abs);
        let abs_b = &s_neg_half * &abs_bt * &s_half;
        let mut fam = NormFamily {
            time_stamp: ops.time_stamp,
            gram_en: ops.h.clone(),
            gram_dual: s.clone(),
            abs_b,
            b_tilde,
            b_tilde_eig,
            b_tilde_defect,
            s_half,
            s_neg_half,
            lambda_cache: BTreeMap::new(),
        };
        for &lambda in lambdas {
            check_lambda(lambda)?;
            let g = fam.compute_gram(lambda);
            fam.lambda_cache.insert(lambda_key(lambda), g);
        }
        Ok(fam)
    }

    pub fn dim(&self) -> usize {
        self.gram_dual.nrows()
    }

    fn compute_gram(&self, lambda: f64) -> CMat {
        if lambda_key(lambda) == lambda_key(-1.0) {
            return self.gram_dual.clone();
        }
        let p = self.b_tilde_eig.apply_fn(|x| x.abs().powf(1.0 + lambda));
        hermitian_part(&(&self.s_half * &p * &self.s_half))
    }

    /// Gram matrix of `H_{lambda,t}`: `S^{1/2} |B~|^{1+lambda} S^{1/2}`.
    pub fn gram(&self, lambda: f64) -> Result<Cow<'_, CMat>> {
        check_lambda(lambda)?;
        match self.lambda_cache.get(&lambda_key(lambda)) {
            Some(g) => Ok(Cow::Borrowed(g)),
            None => Ok(Cow::Owned(self.compute_gram(lambda))),
        }
    }

    /// A factor `F` with `F^dagger F = Gram_lambda`, and its inverse:
    /// `F = |B~|^{(1+lambda)/2} S^{1/2}`.
    pub fn factor(&self, lambda: f64) -> Result<(CMat, CMat)> {
        check_lambda(lambda)?;
        let e = 0.5 * (1.0 + lambda);
        let p = self.b_tilde_eig.apply_fn(|x| x.abs().powf(e));
        let pinv = self.b_tilde_eig.apply_fn(|x| x.abs().powf(-e));
        Ok((&p * &self.s_half, &self.s_neg_half * &pinv))
    }

    /// Operator norm of `a` on `H_{lambda,t}`.
    pub fn operator_norm(&self, a: &CMat, lambda: f64) -> Result<f64> {
        if a.nrows() != self.dim() || a.ncols() != self.dim() {
            return Err(Error::Dimension(format!(
                "operator is {}x{}, family dim {}",
                a.nrows(),
                a.ncols(),
                self.dim()
            )));
        }
        let (f, finv) = self.factor(lambda)?;
        op_norm((&f * a * &finv).as_ref())
    }

    /// Operator norm in the dual energy geometry (`lambda = -1`).
    pub fn dual_operator_norm(&self, a: &CMat) -> Result<f64> {
        op_norm((&self.s_half * a * &self.s_neg_half).as_ref())
    }

    /// `sup |u^dagger Q v|` over unit vectors of `H_{0,t}`.
    pub fn charge_bound(&self) -> Result<f64> {
        let (_, finv) = self.factor(0.0)?;
        let n = self.dim() / 2;
        let q = crate::linalg::charge_matrix(n);
        op_norm((finv.adjoint() * &q * &finv).as_ref())
    }

    /// Constants `(k_lo, k_hi)` with
    /// `k_lo |u|_{+1} <= |u|_{-1} <= k_hi |u|_{+1}`.
    pub fn equivalence_constants(&self) -> Result<(f64, f64)> {
        let vals: Vec<f64> = self.b_tilde_eig.values.iter().map(|x| 1.0 / x.abs()).collect();
        // |u|_{-1} / |u|_{+1} = | |B~|^{-1} w | / |w| with w = |B~| S^{1/2} u
        let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().copied().fold(0.0, f64::max);
        Ok((lo, hi))
    }
}

/// `sqrt(u^dagger Gram_lambda u)`.
pub fn norm(u: &CVec, family: &NormFamily, lambda: f64) -> Result<f64> {
    if u.nrows() != family.dim() {
        return Err(Error::Dimension(format!("vector has length {}, expected {}", u.nrows(), family.dim())));
    }
    let g = family.gram(lambda)?;
    let v = g.as_ref() * u;
    let q: f64 = (0..u.nrows()).map(|i| (u[i].conj() * v[i]).re).sum();
    Ok(q.max(0.0).sqrt())
}

/// `|| L^{delta/2} v ||`, the `K^delta` norm.
pub fn k_delta_norm(v: &CVec, l: &CMat, delta: f64) -> Result<f64> {
    if !(-1.0..=1.0).contains(&delta) {
        return Err(Error::InvalidArgument(format!("delta = {delta} outside [-1, 1]")));
    }
    if v.nrows() != l.nrows() {
        return Err(Error::Dimension(format!("vector has length {}, L is {}x{}", v.nrows(), l.nrows(), l.ncols())));
    }
    let p = fractional_power(l, delta / 2.0)?;
    Ok((&p * v).norm_l2())
}

/// Geometric mean `A # B = A^{1/2} (A^{-1/2} B A^{-1/2})^{1/2} A^{1/2}` of
/// two positive definite matrices.
pub fn geometric_mean(a: &CMat, b: &CMat) -> Result<CMat> {
    let ae = herm_eig(a)?;
    if !(ae.min() > 0.0) {
        return Err(Error::NotPositiveDefinite { min_eig: ae.min() });
    }
    let ah = ae.apply_fn(f64::sqrt);
    let anh = ae.apply_fn(|x| 1.0 / x.sqrt());
    let mid = hermitian_part(&(&anh * b * &anh));
    let mid_half = fractional_power(&mid, 0.5)?;
    Ok(hermitian_part(&(&ah * &mid_half * &ah)))
}

/// Smallest and largest generalized eigenvalue of `(a, b)` for positive
/// definite `b`: the best constants in `lo b <= a <= hi b`.
pub fn relative_bounds(a: &CMat, b: &CMat) -> Result<(f64, f64)> {
    let be = herm_eig(b)?;
    if !(be.min() > 0.0) {
        return Err(Error::NotPositiveDefinite { min_eig: be.min() });
    }
    let bnh = be.apply_fn(|x| 1.0 / x.sqrt());
    let m = hermitian_part(&(&bnh * a * &bnh));
    let e = herm_eig(&m)?;
    Ok((e.min(), e.max()))
}

/// Unit vector helper: `e_k` of length `n`.
pub fn basis_vector(n: usize, k: usize) -> CVec {
    let mut v = CVec::zeros(n);
    v[k] = crate::linalg::ONE;
    v
}

/// Cauchy vector from its two halves.
pub fn cauchy(u1: &CVec, u2: &CVec) -> CVec {
    let n = u1.nrows();
    CVec::from_fn(2 * n, |i| if i < n { u1[i] } else { u2[i - n] })
}

/// Column `j` of `a` as a vector.
pub fn column(a: &CMat, j: usize) -> CVec {
    CVec::from_fn(a.nrows(), |i| a[(i, j)])
}

/// Matrix with the given columns.
pub fn from_columns(cols: &[CVec]) -> CMat {
    let n = cols.first().map(|c| c.nrows()).unwrap_or(0);
    Mat::from_fn(n, cols.len(), |i, j| cols[j][i])
}
