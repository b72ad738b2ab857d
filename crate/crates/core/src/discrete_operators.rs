//! Lattice matrices `L`, `W`, `H0`, `H`, `B`, the charge matrix `Q`,
//! assumption diagnostics and the time-derivative constants that control
//! norm growth.

use faer::{c64, Mat};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{sample_slice, FieldSlice, Lattice, ScenarioModel};
use crate::linalg::{
    adjoint, all_finite, block2, charge_matrix, diag_real, herm_eig, hermitian_defect, identity, max_abs,
    min_singular_value, op_norm, re, zeros, CMat, HermEig,
};

/// Largest admissible value of the `A` bound.
pub const A_BOUND_LIMIT: f64 = 1.0 - 1e-6;

fn check_finite(name: &str, a: &[f64]) -> Result<()> {
    match a.iter().position(|x| !x.is_finite()) {
        Some(site) => Err(Error::FieldInvariant { site, what: format!("{name} is not finite") }),
        None => Ok(()),
    }
}

fn l_matrix(slice: &FieldSlice, lattice: &Lattice, b: f64) -> Result<CMat> {
    let n = lattice.n_sites;
    if slice.n_sites() != n {
        return Err(Error::Dimension(format!("slice has {} sites, lattice {n}", slice.n_sites())));
    }
    if !(b.is_finite() && b >= 0.0) {
        return Err(Error::InvalidArgument(format!("mass shift b = {b} must be >= 0")));
    }
    for (name, a) in [
        ("gamma", &slice.gamma),
        ("g_sigma_inv_tilde", &slice.g_sigma_inv_tilde),
        ("y_tilde", &slice.y_tilde),
        ("a1", &slice.a1),
    ] {
        check_finite(name, a)?;
    }
    let h = lattice.spacing;
    let mut l = zeros(n, n);
    for j in 0..n {
        let k = (j + 1) % n;
        let (gj, gk) = (slice.gamma[j], slice.gamma[k]);
        // edge weight: g~ at the midpoint times the outer gamma^{1/2} squared
        let kappa = (slice.g_sigma_inv_tilde[j] * slice.g_sigma_inv_tilde[k]).sqrt() * (gj * gk).sqrt() / (h * h);
        // Peierls phase of the forward difference (D - A)
        let theta = 0.5 * (slice.a1[j] + slice.a1[k]) * h;
        let cj = -1.0 / gj.sqrt();
        let ck = c64::cis(-theta) / gk.sqrt();
        l[(j, j)] += re(kappa / gj);
        l[(k, k)] += re(kappa / gk);
        let off = ck.conj() * (kappa * cj);
        l[(j, k)] += off;
        l[(k, j)] += off.conj();
    }
    for j in 0..n {
        l[(j, j)] += re(slice.y_tilde[j] + b);
    }
    Ok(l)
}

/// Matrix of the lattice form
/// `sum_edges g~ |gamma^{1/2} (D - A) gamma^{-1/2} u|^2 + sum_sites (Y~ + b) |u|^2`
/// with the forward difference `D`, divided by the spacing so that it acts
/// on coefficient vectors with the Euclidean inner product.
pub fn assemble_l(slice: &FieldSlice, lattice: &Lattice, b: f64) -> Result<CMat> {
    let l = l_matrix(slice, lattice, b)?;
    let min_eig = herm_eig(&l)?.min();
    if !(min_eig > 0.0) {
        return Err(Error::LNotPositive { t: slice.time_stamp, min_eig });
    }
    Ok(l)
}

/// `W = beta D_c + V - (1/2) gamma^{-1} (-i gamma_dot - beta D_c gamma)` with
/// the centered difference `D_c` and `beta D_c` symmetrized.
pub fn assemble_w(slice: &FieldSlice, lattice: &Lattice) -> Result<CMat> {
    let n = lattice.n_sites;
    if slice.n_sites() != n {
        return Err(Error::Dimension(format!("slice has {} sites, lattice {n}", slice.n_sites())));
    }
    for (name, a) in [("beta", &slice.beta), ("gamma", &slice.gamma), ("gamma_dot", &slice.gamma_dot), ("v", &slice.v)]
    {
        check_finite(name, a)?;
    }
    let h = lattice.spacing;
    let mut w = zeros(n, n);
    for j in 0..n {
        let jp = (j + 1) % n;
        let jm = (j + n - 1) % n;
        w[(j, jp)] += c64::new(0.0, -0.5 * (slice.beta[j] + slice.beta[jp]) / (2.0 * h));
        w[(j, jm)] += c64::new(0.0, 0.5 * (slice.beta[j] + slice.beta[jm]) / (2.0 * h));
        let g = slice.gamma[j];
        let im = slice.gamma_dot[j] / (2.0 * g) - slice.beta[j] * (slice.gamma[jp] - slice.gamma[jm]) / (4.0 * h * g);
        w[(j, j)] += c64::new(slice.v[j], im);
    }
    Ok(w)
}

/// `[[W, 1], [L, W^dagger]]`; errors if `B` is singular.
pub fn assemble_b(l: &CMat, w: &CMat) -> Result<CMat> {
    check_shapes(l, w)?;
    let n = l.nrows();
    let b = block2(w, &identity(n), l, &adjoint(w.as_ref()));
    let smin = min_singular_value(b.as_ref())?;
    if !(smin > 0.0) || smin < 1e-14 * op_norm(b.as_ref())? {
        return Err(Error::PositiveMass { t: f64::NAN, what: format!("B is singular (min singular value {smin:e})") });
    }
    Ok(b)
}

/// `[[L, W^dagger], [W, 1]]`.
pub fn assemble_h(l: &CMat, w: &CMat) -> Result<CMat> {
    check_shapes(l, w)?;
    let n = l.nrows();
    Ok(block2(l, &adjoint(w.as_ref()), w, &identity(n)))
}

/// `L (+) 1`.
pub fn assemble_h0(l: &CMat) -> CMat {
    let n = l.nrows();
    block2(l, &zeros(n, n), &zeros(n, n), &identity(n))
}

fn check_shapes(l: &CMat, w: &CMat) -> Result<()> {
    if l.nrows() != l.ncols() || w.nrows() != w.ncols() || l.nrows() != w.nrows() {
        return Err(Error::Dimension(format!("L is {}x{}, W is {}x{}", l.nrows(), l.ncols(), w.nrows(), w.ncols())));
    }
    Ok(())
}

fn hermitian_tolerance(m: &CMat) -> f64 {
    1e-12 * max_abs(m.as_ref()).max(1.0)
}

/// `M^delta` for Hermitian positive definite `M`.
pub fn fractional_power(m: &CMat, delta: f64) -> Result<CMat> {
    if hermitian_defect(m) > hermitian_tolerance(m) {
        return Err(Error::InvalidArgument("fractional_power needs a Hermitian matrix".into()));
    }
    let eig = herm_eig(m)?;
    if !(eig.min() > 0.0) {
        return Err(Error::NotPositiveDefinite { min_eig: eig.min() });
    }
    if delta == 0.0 {
        return Ok(identity(m.nrows()));
    }
    Ok(eig.apply_fn(|x| x.powf(delta)))
}

/// `||W L^{-1/2}||`.
pub fn a_bound(l_inv_sqrt: &CMat, w: &CMat) -> Result<f64> {
    op_norm((w * l_inv_sqrt).as_ref())
}

/// Inverse square root of `L` together with its smallest eigenvalue;
/// errors when `L` is not positive.
pub fn l_inv_sqrt(l: &CMat, t: f64) -> Result<(CMat, f64)> {
    let eig: HermEig = herm_eig(l)?;
    let min_eig = eig.min();
    if !(min_eig > 0.0) {
        return Err(Error::LNotPositive { t, min_eig });
    }
    Ok((eig.apply_fn(|x| 1.0 / x.sqrt()), min_eig))
}

/// All instantaneous operators at one time.
#[derive(Debug, Clone)]
pub struct OperatorSet {
    pub time_stamp: f64,
    pub l: CMat,
    pub w: CMat,
    pub h0: CMat,
    pub h: CMat,
    pub b: CMat,
    pub q: CMat,
    /// `Q H^{-1} Q`, the Gram matrix of the dual energy space.
    pub s_dual: CMat,
    pub a_bound: f64,
    pub min_eig_l: f64,
    /// `min_eig_l > 0` and `a_bound <= 1 - 1e-6`.
    pub assumption_ok: bool,
    pub l_inv_sqrt: CMat,
}

impl OperatorSet {
    /// Builds the set from `L` and `W`. `L` must be Hermitian positive
    /// definite and `B` invertible; a large `a_bound` only clears
    /// `assumption_ok`.
    pub fn from_blocks(time_stamp: f64, l: CMat, w: CMat) -> Result<Self> {
        check_shapes(&l, &w)?;
        if !all_finite(l.as_ref()) || !all_finite(w.as_ref()) {
            return Err(Error::NonFinite(format!("operators at t = {time_stamp}")));
        }
        if hermitian_defect(&l) > hermitian_tolerance(&l) {
            return Err(Error::InvalidArgument("L is not Hermitian".into()));
        }
        let (l_inv_sqrt, min_eig_l) = l_inv_sqrt(&l, time_stamp)?;
        let a_bound = a_bound(&l_inv_sqrt, &w)?;
        let b = assemble_b(&l, &w).map_err(|e| match e {
            Error::PositiveMass { what, .. } => Error::PositiveMass { t: time_stamp, what },
            other => other,
        })?;
        let h = assemble_h(&l, &w)?;
        let h0 = assemble_h0(&l);
        let n = l.nrows();
        let q = charge_matrix(n);
        let h_eig = herm_eig(&h)?;
        if !(h_eig.min() > 0.0) {
            return Err(Error::PositiveMass {
                t: time_stamp,
                what: format!("H is not positive (min eigenvalue {:e})", h_eig.min()),
            });
        }
        let h_inv = h_eig.apply_fn(|x| 1.0 / x);
        let s_dual = swap_conjugate(&h_inv);
        Ok(OperatorSet {
            time_stamp,
            l,
            w,
            h0,
            h,
            b,
            q,
            s_dual,
            a_bound,
            min_eig_l,
            assumption_ok: min_eig_l > 0.0 && a_bound <= A_BOUND_LIMIT,
            l_inv_sqrt,
        })
    }

    /// Samples `model` at `t` and assembles every operator.
    pub fn assemble(model: &ScenarioModel, lattice: &Lattice, t: f64) -> Result<Self> {
        let slice = sample_slice(model, lattice, t)?;
        let l = l_matrix(&slice, lattice, model.mass_shift)?;
        let w = assemble_w(&slice, lattice)?;
        Self::from_blocks(t, l, w)
    }

    /// Number of lattice sites.
    pub fn n(&self) -> usize {
        self.l.nrows()
    }

    /// Errors unless both positivity assumptions hold.
    pub fn require_assumptions(&self) -> Result<()> {
        if self.assumption_ok {
            Ok(())
        } else {
            Err(Error::PositiveMass {
                t: self.time_stamp,
                what: format!("||W L^(-1/2)|| = {} exceeds {A_BOUND_LIMIT}", self.a_bound),
            })
        }
    }
}

/// `Q M Q` for the swap `Q`: exchanges both block rows and block columns.
pub fn swap_conjugate(m: &CMat) -> CMat {
    let n2 = m.nrows();
    let n = n2 / 2;
    Mat::from_fn(n2, n2, |i, j| m[((i + n) % n2, (j + n) % n2)])
}

/// Generator `B(t)` only, with the positivity checks; the cheap path used
/// inside time stepping.
pub fn generator_at(model: &ScenarioModel, lattice: &Lattice, t: f64) -> Result<CMat> {
    let slice = sample_slice(model, lattice, t)?;
    let l = l_matrix(&slice, lattice, model.mass_shift)?;
    let w = assemble_w(&slice, lattice)?;
    let (lis, _) = l_inv_sqrt(&l, t)?;
    let a = a_bound(&lis, &w)?;
    if !(a <= A_BOUND_LIMIT) {
        return Err(Error::PositiveMass { t, what: format!("||W L^(-1/2)|| = {a} exceeds {A_BOUND_LIMIT}") });
    }
    let n = l.nrows();
    Ok(block2(&w, &identity(n), &l, &adjoint(w.as_ref())))
}

/// Positivity, timelike and quiet-tail diagnostics over a set of times.
#[derive(Debug, Clone, Serialize)]
pub struct AssumptionReport {
    pub times: Vec<f64>,
    pub a_bound: Vec<f64>,
    pub min_eig_l: Vec<f64>,
    /// `||L(t)^{-1/2}(L(t)-L(s))L(t)^{-1/2}|| + 2||(W(t)-W(s))L(t)^{-1/2}||`
    /// for consecutive sample times `s < t`.
    pub increments: Vec<f64>,
    /// Sum of the increments: a lower estimate of `int C` over the window.
    pub integrated_c: f64,
    pub l_positive: bool,
    pub a_bounded: bool,
    pub instantaneous_ok: bool,
    /// Both end increments are below `1e-6` per unit time.
    pub tails_quiet: bool,
    pub adiabatic_ok: bool,
    pub notes: Vec<String>,
}

impl AssumptionReport {
    /// Report for a run that stopped before any operator could be built.
    pub fn unavailable(times: &[f64], note: String) -> Self {
        AssumptionReport {
            times: times.to_vec(),
            a_bound: Vec::new(),
            min_eig_l: Vec::new(),
            increments: Vec::new(),
            integrated_c: 0.0,
            l_positive: false,
            a_bounded: false,
            instantaneous_ok: false,
            tails_quiet: false,
            adiabatic_ok: false,
            notes: vec![note],
        }
    }
}

/// Runs the standing-hypothesis diagnostics on operator sets sampled in `window`.
/// Never fails; violations are reported as flags.
pub fn verify_assumptions(ops: &[OperatorSet], window: (f64, f64)) -> AssumptionReport {
    let mut notes = Vec::new();
    let (lo, hi) = (window.0.min(window.1), window.0.max(window.1));
    if ops.iter().any(|o| o.time_stamp < lo || o.time_stamp > hi) {
        notes.push(format!("some sample times lie outside the window [{lo}, {hi}]"));
    }
    if ops.len() < 2 {
        notes.push("fewer than two samples: no increments computed".into());
    }
    let mut increments = Vec::new();
    let mut tails = Vec::new();
    for pair in ops.windows(2) {
        let (s, t) = (&pair[0], &pair[1]);
        let dl = &t.l_inv_sqrt * (&t.l - &s.l) * &t.l_inv_sqrt;
        let dw = (&t.w - &s.w) * &t.l_inv_sqrt;
        let inc = match (op_norm(dl.as_ref()), op_norm(dw.as_ref())) {
            (Ok(a), Ok(b)) => a + 2.0 * b,
            _ => {
                notes.push(format!("norm evaluation failed between t = {} and {}", s.time_stamp, t.time_stamp));
                f64::NAN
            }
        };
        increments.push(inc);
        tails.push(inc / (t.time_stamp - s.time_stamp).abs().max(f64::MIN_POSITIVE));
    }
    let l_positive = ops.iter().all(|o| o.min_eig_l > 0.0);
    let a_bounded = ops.iter().all(|o| o.a_bound <= A_BOUND_LIMIT);
    let instantaneous_ok = l_positive && a_bounded;
    let tails_quiet = !tails.is_empty() && tails[0] <= 1e-6 && *tails.last().unwrap() <= 1e-6;
    AssumptionReport {
        times: ops.iter().map(|o| o.time_stamp).collect(),
        a_bound: ops.iter().map(|o| o.a_bound).collect(),
        min_eig_l: ops.iter().map(|o| o.min_eig_l).collect(),
        integrated_c: increments.iter().sum(),
        increments,
        l_positive,
        a_bounded,
        instantaneous_ok,
        tails_quiet,
        adiabatic_ok: instantaneous_ok && tails_quiet,
        notes,
    }
}

/// Tabulated norm-growth constants on a time grid.
#[derive(Debug, Clone, Serialize)]
pub struct ConstantTable {
    pub times: Vec<f64>,
    pub c_y: Vec<f64>,
    pub c_w: Vec<f64>,
    pub c_a: Vec<f64>,
    pub c_gamma: Vec<f64>,
    pub c_g: Vec<f64>,
    pub c_d: Vec<f64>,
    /// `c(t) = 1 + int_{t-1}^{t+1} C_g`, restricted to the grid.
    pub c_factor: Vec<f64>,
    /// `c(t)(2 C_D + C_D^2) + C_gamma + C_g + C_Y + 2 C_W`.
    pub composite: Vec<f64>,
    pub a_bound: Vec<f64>,
    /// Set when any derivative was obtained by finite differences.
    pub approximate: bool,
}

fn trapezoid(times: &[f64], vals: &[f64], r: f64, t: f64) -> f64 {
    let (lo, hi) = (r.min(t), r.max(t));
    let interp = |x: f64| -> f64 {
        let k = times.partition_point(|&s| s <= x).clamp(1, times.len() - 1);
        let (t0, t1) = (times[k - 1], times[k]);
        let w = ((x - t0) / (t1 - t0)).clamp(0.0, 1.0);
        vals[k - 1] * (1.0 - w) + vals[k] * w
    };
    let mut pts = vec![lo];
    pts.extend(times.iter().copied().filter(|&s| s > lo && s < hi));
    pts.push(hi);
    pts.windows(2).map(|p| 0.5 * (p[1] - p[0]) * (interp(p[0]) + interp(p[1]))).sum()
}

impl ConstantTable {
    /// `|int_r^t composite|`, trapezoid with linear interpolation;
    /// `r` and `t` must lie inside the grid.
    pub fn integral(&self, r: f64, t: f64) -> Result<f64> {
        self.check_range(r, t)?;
        Ok(trapezoid(&self.times, &self.composite, r, t))
    }

    /// `sup (1 - a)^{-1}` over grid points in `[r, t]` and the two ends.
    pub fn c_rt(&self, r: f64, t: f64) -> Result<f64> {
        self.check_range(r, t)?;
        let (lo, hi) = (r.min(t), r.max(t));
        let k_lo = self.times.partition_point(|&s| s < lo).saturating_sub(1);
        let k_hi = (self.times.partition_point(|&s| s <= hi) + 1).min(self.times.len());
        Ok(self.a_bound[k_lo..k_hi].iter().map(|a| 1.0 / (1.0 - a)).fold(1.0, f64::max))
    }

    fn check_range(&self, r: f64, t: f64) -> Result<()> {
        let (first, last) = (self.times[0], *self.times.last().unwrap());
        let (lo, hi) = (r.min(t), r.max(t));
        if lo < first - 1e-12 || hi > last + 1e-12 {
            return Err(Error::Window(format!("[{lo}, {hi}] not inside constant table [{first}, {last}]")));
        }
        Ok(())
    }
}

fn time_derivative(times: &[f64], k: usize, f: impl Fn(usize) -> f64) -> f64 {
    let m = times.len();
    let (a, b) = if k == 0 {
        (0, 1)
    } else if k == m - 1 {
        (m - 2, m - 1)
    } else {
        (k - 1, k + 1)
    };
    (f(b) - f(a)) / (times[b] - times[a])
}

/// Estimates the constants `C_Y, C_W, C_A, C_gamma, C_g` bounding the time
/// derivatives of the coefficients relative to `L(t)`, and their composite.
/// `C_Y` and `C_g` use the model's analytic time derivatives; `C_W`, `C_A`
/// and `C_gamma` are differenced over `times`, which is flagged.
pub fn estimate_growth_constants(model: &ScenarioModel, lattice: &Lattice, times: &[f64]) -> Result<ConstantTable> {
    if times.len() < 2 || times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument("constant table needs >= 2 strictly increasing times".into()));
    }
    let n = lattice.n_sites;
    let h = lattice.spacing;
    let m = times.len();
    let mut slices = Vec::with_capacity(m);
    let mut ws = Vec::with_capacity(m);
    let mut lis = Vec::with_capacity(m);
    let mut a_bounds = Vec::with_capacity(m);
    for &t in times {
        let s = sample_slice(model, lattice, t)?;
        let l = l_matrix(&s, lattice, model.mass_shift)?;
        let w = assemble_w(&s, lattice)?;
        let (li, _) = l_inv_sqrt(&l, t)?;
        a_bounds.push(a_bound(&li, &w)?);
        slices.push(s);
        ws.push(w);
        lis.push(li);
    }
    // gamma^{-1} d_x gamma by centered differences
    let dlog_gamma: Vec<Vec<f64>> = slices
        .iter()
        .map(|s| (0..n).map(|j| (s.gamma[(j + 1) % n] - s.gamma[(j + n - 1) % n]) / (2.0 * h * s.gamma[j])).collect())
        .collect();
    let mut tab = ConstantTable {
        times: times.to_vec(),
        c_y: vec![0.0; m],
        c_w: vec![0.0; m],
        c_a: vec![0.0; m],
        c_gamma: vec![0.0; m],
        c_g: vec![0.0; m],
        c_d: vec![0.0; m],
        c_factor: vec![0.0; m],
        composite: vec![0.0; m],
        a_bound: a_bounds,
        approximate: true,
    };
    for k in 0..m {
        let s = &slices[k];
        let li = &lis[k];
        let t = times[k];
        tab.c_y[k] = op_norm((li * diag_real(&s.y_tilde_dot) * li).as_ref())?;
        let (a, b) = if k == 0 {
            (0, 1)
        } else if k == m - 1 {
            (m - 2, m - 1)
        } else {
            (k - 1, k + 1)
        };
        let w_dot = Mat::from_fn(n, n, |i, j| (ws[b][(i, j)] - ws[a][(i, j)]) / c64::new(times[b] - times[a], 0.0));
        tab.c_w[k] = op_norm((&w_dot * li).as_ref())?;
        let sg: Vec<f64> = s.g_sigma_inv_tilde.iter().map(|x| x.sqrt()).collect();
        let a_dot: Vec<f64> = (0..n).map(|j| sg[j] * time_derivative(times, k, |q| slices[q].a1[j])).collect();
        tab.c_a[k] = op_norm((diag_real(&a_dot) * li).as_ref())?;
        let lg_dot: Vec<f64> = (0..n).map(|j| sg[j] * time_derivative(times, k, |q| dlog_gamma[q][j])).collect();
        tab.c_gamma[k] = op_norm((diag_real(&lg_dot) * li).as_ref())?;
        tab.c_g[k] = (0..n)
            .map(|j| {
                let p = model.at_site(lattice, t, j);
                let gt = p.alpha * p.alpha / p.g_sigma;
                let gt_dot = 2.0 * p.alpha * p.alpha_dot / p.g_sigma
                    - p.alpha * p.alpha * p.g_sigma_dot / (p.g_sigma * p.g_sigma);
                (gt_dot / gt).abs()
            })
            .fold(0.0, f64::max);
        tab.c_d[k] = tab.c_a[k] + 0.5 * tab.c_gamma[k];
    }
    let (first, last) = (times[0], times[m - 1]);
    for k in 0..m {
        let t = times[k];
        let c = 1.0 + trapezoid(times, &tab.c_g, (t - 1.0).max(first), (t + 1.0).min(last));
        tab.c_factor[k] = c;
        let cd = tab.c_d[k];
        tab.composite[k] = c * (2.0 * cd + cd * cd) + tab.c_gamma[k] + tab.c_g[k] + tab.c_y[k] + 2.0 * tab.c_w[k];
    }
    Ok(tab)
}
