//! Frequency projections, the classical and non-classical propagators in
//! Cauchy-data (`E`) and scalar (`G`) form, the inhomogeneous Cauchy
//! solver and a finite-difference Klein-Gordon operator for residual checks.
//!
//! Every `E` kernel on an [`EvolutionGrid`] with origin `t0` is written as
//!
//! ```text
//! E(t, s) = U(t, t0) [theta(t - s) M_fwd + theta(s - t) M_bwd] U(t0, s),   theta(0) = 1/2
//! ```
//!
//! where `M_fwd`, `M_bwd` are `0`, `+-1` or a frequency projection moved to
//! `t0`. The `G` form is `G(t, s) = c alpha(t) [E(t, s)]_12 alpha(s)` with
//! `c = i`, except `c = 1` for the two frequency bisolutions.

use std::fmt;

use serde::Serialize;

use crate::discrete_operators::{assemble_l, assemble_w, OperatorSet};
use crate::error::{Error, Result};
use crate::evolution::{EvolutionGrid, GeneratorProvider, Sampling};
use crate::expm::{expm, expm_pair};
use crate::geometry::{sample_slice, Lattice, ScenarioModel};
use crate::linalg::{herm_eig, hermitian_part, identity, max_abs, op_norm, scaled, CMat, CVec, I, ONE};
use crate::spaces::NormFamily;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    pub fn flip(self) -> Self {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }
}

/// Reference time of a projection: finite, or a directed limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TauRef {
    Finite(f64),
    PastInfinity,
    FutureInfinity,
}

impl fmt::Display for TauRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TauRef::Finite(t) => write!(f, "{t}"),
            TauRef::PastInfinity => f.write_str("-inf"),
            TauRef::FutureInfinity => f.write_str("+inf"),
        }
    }
}

/// `in` is the limit `tau -> -infinity`, `out` the limit `tau -> +infinity`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    In,
    Out,
}

impl Direction {
    fn sign(self) -> f64 {
        match self {
            Direction::In => -1.0,
            Direction::Out => 1.0,
        }
    }
}

/// Projection onto the positive or negative part of the spectrum of `B`,
/// acting on Cauchy data at time `time_stamp`.
#[derive(Debug, Clone)]
pub struct FrequencyProjection {
    pub tau: TauRef,
    pub sign: Sign,
    /// Time of the Cauchy data the projection acts on (equal to `tau` for
    /// instantaneous projections).
    pub time_stamp: f64,
    pub p: CMat,
    /// Dual Gram matrix at `time_stamp`.
    pub gram_dual: CMat,
    /// Last Cauchy increment of the limit iteration (0 for instantaneous).
    pub limit_residual: f64,
    pub history: Vec<f64>,
}

/// Defects of a projection against its defining properties.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ProjectionDefects {
    pub idempotent: f64,
    pub commutator: f64,
    pub self_adjoint: f64,
    /// `-+` smallest eigenvalue of the charge form on the range, on an
    /// orthonormal basis; non-positive when the charge has the right sign.
    pub charge_sign: f64,
}

fn spectral_projections(family: &NormFamily, t: f64) -> Result<(CMat, CMat)> {
    let e = &family.b_tilde_eig;
    let scale = e.values.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1.0);
    if let Some(x) = e.values.iter().find(|x| x.abs() <= 1e-12 * scale) {
        return Err(Error::PositiveMass {
            t,
            what: format!("B has eigenvalue {x:e}, zero is not in its resolvent set"),
        });
    }
    let plus = e.apply_fn(|x| if x > 0.0 { 1.0 } else { 0.0 });
    let minus = e.apply_fn(|x| if x < 0.0 { 1.0 } else { 0.0 });
    let back = |m: &CMat| &family.s_neg_half * m * &family.s_half;
    Ok((back(&plus), back(&minus)))
}

/// Instantaneous projection `Pi^(sign)` of `B(ops.time_stamp)`.
pub fn freq_projection(ops: &OperatorSet, family: &NormFamily, sign: Sign) -> Result<FrequencyProjection> {
    let t = ops.time_stamp;
    let (plus, minus) = spectral_projections(family, t)?;
    let p = match sign {
        Sign::Plus => plus,
        Sign::Minus => minus,
    };
    Ok(FrequencyProjection {
        tau: TauRef::Finite(t),
        sign,
        time_stamp: t,
        p,
        gram_dual: family.gram_dual.clone(),
        limit_residual: 0.0,
        history: Vec::new(),
    })
}

/// Both instantaneous projections from one eigendecomposition.
pub fn freq_projection_pair(
    ops: &OperatorSet,
    family: &NormFamily,
) -> Result<(FrequencyProjection, FrequencyProjection)> {
    let t = ops.time_stamp;
    let (plus, minus) = spectral_projections(family, t)?;
    let mk = |sign, p| FrequencyProjection {
        tau: TauRef::Finite(t),
        sign,
        time_stamp: t,
        p,
        gram_dual: family.gram_dual.clone(),
        limit_residual: 0.0,
        history: Vec::new(),
    };
    Ok((mk(Sign::Plus, plus), mk(Sign::Minus, minus)))
}

impl FrequencyProjection {
    /// Measures idempotence, commutation with `b`, self-adjointness in the
    /// dual geometry and the charge sign on the range.
    pub fn defects(&self, b: &CMat) -> Result<ProjectionDefects> {
        let p = &self.p;
        let idempotent = max_abs((p * p - p).as_ref());
        let commutator = max_abs((p * b - b * p).as_ref());
        let g = &self.gram_dual;
        let self_adjoint = max_abs((g * p - p.adjoint() * g).as_ref());
        let charge_sign = self.charge_sign()?;
        Ok(ProjectionDefects { idempotent, commutator, self_adjoint, charge_sign })
    }

    fn charge_sign(&self) -> Result<f64> {
        let n2 = self.p.nrows();
        // orthonormal basis of the range from the eigenvectors of P P^dagger
        let pp = hermitian_part(&(&self.p * self.p.adjoint()));
        let e = herm_eig(&pp)?;
        let top = e.max().max(f64::MIN_POSITIVE);
        let cols: Vec<usize> = (0..n2).filter(|&k| e.values[k] > 1e-8 * top).collect();
        if cols.is_empty() {
            return Ok(0.0);
        }
        let z = CMat::from_fn(n2, cols.len(), |i, j| e.vectors[(i, cols[j])]);
        let q = crate::linalg::charge_matrix(n2 / 2);
        let form = hermitian_part(&(z.adjoint() * &q * &z));
        let fe = herm_eig(&form)?;
        Ok(match self.sign {
            Sign::Plus => -fe.min(),
            Sign::Minus => fe.max(),
        })
    }
}

/// Options for [`asymptotic_projection`].
#[derive(Debug, Clone, Copy)]
pub struct AsymptoticOptions {
    /// Stop when the dual-norm increment between checkpoints drops below this.
    pub tol: f64,
    /// Largest `|tau|` tried.
    pub tau_max: f64,
    /// Step size; steps are aligned to the absolute grid `dt Z`, so limits
    /// computed at different evaluation times share their step factors.
    pub dt: f64,
    pub sampling: Sampling,
    /// First checkpoint `|tau|`; later ones double.
    pub tau_first: f64,
}

impl Default for AsymptoticOptions {
    fn default() -> Self {
        AsymptoticOptions { tol: 1e-8, tau_max: 40.0, dt: 1.0 / 32.0, sampling: Sampling::Midpoint, tau_first: 1.25 }
    }
}

/// Step boundaries from `a` to `b` on the grid `dt Z`, endpoints included.
fn aligned_nodes(a: f64, b: f64, dt: f64) -> Vec<f64> {
    let mut nodes = vec![a];
    if a == b {
        return nodes;
    }
    let dir = (b - a).signum();
    let eps = 1e-9 * dt;
    let mut k = if dir > 0.0 { ((a + eps) / dt).floor() + 1.0 } else { ((a - eps) / dt).ceil() - 1.0 };
    loop {
        let x = k * dt;
        if (b - x) * dir <= eps {
            break;
        }
        nodes.push(x);
        k += dir;
    }
    nodes.push(b);
    nodes
}

/// Evolution pair `(U(b, a), U(a, b))` over the aligned grid.
pub fn evolve_aligned(
    provider: &dyn GeneratorProvider,
    a: f64,
    b: f64,
    dt: f64,
    sampling: Sampling,
) -> Result<(CMat, CMat)> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("step dt = {dt} must be positive")));
    }
    let dim = provider.dim();
    let (mut fwd, mut bwd) = (identity(dim), identity(dim));
    let nodes = aligned_nodes(a, b, dt);
    for w in nodes.windows(2) {
        let (x, y) = (w[0], w[1]);
        let h = y - x;
        match sampling {
            Sampling::Midpoint => {
                let g = provider.generator(0.5 * (x + y))?;
                let (e, einv) = expm_pair(&scaled(&g, -I * h));
                fwd = &e * &fwd;
                bwd = &bwd * &einv;
            }
            Sampling::Left => {
                let e = expm(&scaled(&provider.generator(x)?, -I * h));
                let einv = expm(&scaled(&provider.generator(y)?, I * h));
                fwd = &e * &fwd;
                bwd = &bwd * &einv;
            }
        }
    }
    Ok((fwd, bwd))
}

/// Strong limit `lim U(t, tau) Pi_lim U(tau, t)` for `tau -> -+infinity`,
/// where `Pi_lim` is the frequency projection of the asymptotic operators
/// `limit_ops`. Checkpoints are `tau = -+tau_first * 2^k`; the iteration
/// starts from `Pi_lim` itself and stops when the increment in the dual
/// norm at `t_eval` drops below `tol`.
pub fn asymptotic_projection(
    sign: Sign,
    direction: Direction,
    t_eval: f64,
    provider: &dyn GeneratorProvider,
    limit_ops: &OperatorSet,
    opts: &AsymptoticOptions,
) -> Result<FrequencyProjection> {
    let lim_family = NormFamily::build_with(limit_ops, &[])?;
    let pi = freq_projection(limit_ops, &lim_family, sign)?.p;
    let here = NormFamily::build_with(&provider.operators(t_eval)?, &[])?;
    let d = direction.sign();
    let mut tau = t_eval;
    let (mut u_tau_t, mut u_t_tau) = (identity(provider.dim()), identity(provider.dim()));
    let mut current = pi.clone();
    let mut history = Vec::new();
    let mut checkpoint = opts.tau_first;
    loop {
        while d * (checkpoint * d - t_eval) <= 0.0 {
            checkpoint *= 2.0;
        }
        if checkpoint > opts.tau_max * (1.0 + 1e-12) {
            return Err(Error::NoConvergence {
                reason: format!(
                    "asymptotic projection did not settle to {:e} within |tau| <= {}",
                    opts.tol, opts.tau_max
                ),
                history,
            });
        }
        let next = d * checkpoint;
        let (f, b) = evolve_aligned(provider, tau, next, opts.dt, opts.sampling)?;
        u_tau_t = &f * &u_tau_t;
        u_t_tau = &u_t_tau * &b;
        tau = next;
        let candidate = &u_t_tau * &pi * &u_tau_t;
        let inc = here.dual_operator_norm(&(&candidate - &current))?;
        history.push(inc);
        current = candidate;
        if inc < opts.tol {
            break;
        }
        checkpoint *= 2.0;
    }
    let limit_residual = *history.last().unwrap_or(&0.0);
    Ok(FrequencyProjection {
        tau: match direction {
            Direction::In => TauRef::PastInfinity,
            Direction::Out => TauRef::FutureInfinity,
        },
        sign,
        time_stamp: t_eval,
        p: current,
        gram_dual: here.gram_dual,
        limit_residual,
        history,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum KernelLabel {
    #[serde(rename = "PJ")]
    PauliJordan,
    #[serde(rename = "ret")]
    Retarded,
    #[serde(rename = "adv")]
    Advanced,
    #[serde(rename = "pos")]
    Positive,
    #[serde(rename = "neg")]
    Negative,
    #[serde(rename = "F")]
    Feynman,
    #[serde(rename = "aF")]
    AntiFeynman,
}

impl KernelLabel {
    pub const ALL: [KernelLabel; 7] = [
        KernelLabel::PauliJordan,
        KernelLabel::Retarded,
        KernelLabel::Advanced,
        KernelLabel::Positive,
        KernelLabel::Negative,
        KernelLabel::Feynman,
        KernelLabel::AntiFeynman,
    ];

    pub fn name(self) -> &'static str {
        match self {
            KernelLabel::PauliJordan => "PJ",
            KernelLabel::Retarded => "ret",
            KernelLabel::Advanced => "adv",
            KernelLabel::Positive => "pos",
            KernelLabel::Negative => "neg",
            KernelLabel::Feynman => "F",
            KernelLabel::AntiFeynman => "aF",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        KernelLabel::ALL
            .into_iter()
            .find(|l| l.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown kernel label `{s}`")))
    }

    /// Needs frequency projections.
    pub fn is_non_classical(self) -> bool {
        !matches!(self, KernelLabel::PauliJordan | KernelLabel::Retarded | KernelLabel::Advanced)
    }

    /// Prefactor of the `G` form.
    pub fn g_prefactor(self) -> faer::c64 {
        match self {
            KernelLabel::Positive | KernelLabel::Negative => ONE,
            _ => I,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Form {
    E,
    G,
}

#[derive(Debug, Clone)]
enum Middle {
    Scalar(f64),
    Dense(CMat),
}

impl Middle {
    fn to_dense(&self, n: usize) -> CMat {
        match self {
            Middle::Scalar(c) => scaled(&identity(n), crate::linalg::re(*c)),
            Middle::Dense(m) => m.clone(),
        }
    }

    fn apply(&self, v: &CVec) -> CVec {
        match self {
            Middle::Scalar(c) => v * cs(*c),
            Middle::Dense(m) => m * v,
        }
    }

    fn average(a: &Middle, b: &Middle, n: usize) -> Middle {
        match (a, b) {
            (Middle::Scalar(x), Middle::Scalar(y)) => Middle::Scalar(0.5 * (x + y)),
            _ => {
                let s = &a.to_dense(n) + &b.to_dense(n);
                Middle::Dense(scaled(&s, crate::linalg::re(0.5)))
            }
        }
    }
}

/// A propagator on the points of an evolution grid.
#[derive(Debug, Clone)]
pub struct PropagatorKernel<'g> {
    pub label: KernelLabel,
    pub form: Form,
    pub tau_ref: Option<TauRef>,
    grid: &'g EvolutionGrid,
    m_fwd: Middle,
    m_bwd: Middle,
    /// Lapse per grid time (`G` form only).
    alpha: Vec<Vec<f64>>,
}

/// Retarded, advanced or Pauli-Jordan kernel.
pub fn classical_kernel(label: KernelLabel, grid: &EvolutionGrid) -> Result<PropagatorKernel<'_>> {
    let (f, b) = match label {
        KernelLabel::PauliJordan => (1.0, 1.0),
        KernelLabel::Retarded => (1.0, 0.0),
        KernelLabel::Advanced => (0.0, -1.0),
        other => return Err(Error::InvalidArgument(format!("`{}` is not a classical kernel", other.name()))),
    };
    Ok(PropagatorKernel {
        label,
        form: Form::E,
        tau_ref: None,
        grid,
        m_fwd: Middle::Scalar(f),
        m_bwd: Middle::Scalar(b),
        alpha: Vec::new(),
    })
}

/// `U(t0, tau) P U(tau, t0)` for a projection acting at a grid time.
fn moved_to_origin(grid: &EvolutionGrid, p: &FrequencyProjection) -> Result<CMat> {
    let k = grid.index_of(p.time_stamp)?;
    if p.p.nrows() != grid.dim() {
        return Err(Error::Dimension(format!(
            "projection is {}x{}, grid dim {}",
            p.p.nrows(),
            p.p.ncols(),
            grid.dim()
        )));
    }
    Ok(grid.to_origin(k) * &p.p * grid.from_origin(k))
}

/// `E^(+)(t, s) = U(t, tau) Pi^+ U(tau, s)` or
/// `E^(-)(t, s) = -U(t, tau) Pi^- U(tau, s)`.
pub fn instantaneous_kernel<'g>(grid: &'g EvolutionGrid, proj: &FrequencyProjection) -> Result<PropagatorKernel<'g>> {
    let m = moved_to_origin(grid, proj)?;
    let (label, m) = match proj.sign {
        Sign::Plus => (KernelLabel::Positive, m),
        Sign::Minus => (KernelLabel::Negative, scaled(&m, crate::linalg::re(-1.0))),
    };
    Ok(PropagatorKernel {
        label,
        form: Form::E,
        tau_ref: Some(proj.tau),
        grid,
        m_fwd: Middle::Dense(m.clone()),
        m_bwd: Middle::Dense(m),
        alpha: Vec::new(),
    })
}

/// `E^F = theta(t-s) E^+ + theta(s-t) E^-` and
/// `E^aF = -theta(t-s) E^- - theta(s-t) E^+`.
pub fn feynman_kernel<'g>(
    label: KernelLabel,
    grid: &'g EvolutionGrid,
    plus: &FrequencyProjection,
    minus: &FrequencyProjection,
) -> Result<PropagatorKernel<'g>> {
    if plus.sign != Sign::Plus || minus.sign != Sign::Minus {
        return Err(Error::InvalidArgument("projections must be given as (plus, minus)".into()));
    }
    if plus.tau != minus.tau {
        return Err(Error::InvalidArgument(format!(
            "projections refer to different times {} and {}",
            plus.tau, minus.tau
        )));
    }
    let pp = moved_to_origin(grid, plus)?;
    let pm = moved_to_origin(grid, minus)?;
    let neg = |m: &CMat| scaled(m, crate::linalg::re(-1.0));
    let (f, b) = match label {
        KernelLabel::Feynman => (pp, neg(&pm)),
        KernelLabel::AntiFeynman => (pm, neg(&pp)),
        other => return Err(Error::InvalidArgument(format!("`{}` is not a Feynman-type kernel", other.name()))),
    };
    Ok(PropagatorKernel {
        label,
        form: Form::E,
        tau_ref: Some(plus.tau),
        grid,
        m_fwd: Middle::Dense(f),
        m_bwd: Middle::Dense(b),
        alpha: Vec::new(),
    })
}

/// Builds any kernel by label; `projections` is required for the
/// non-classical ones.
pub fn kernel_by_label<'g>(
    label: KernelLabel,
    grid: &'g EvolutionGrid,
    projections: Option<(&FrequencyProjection, &FrequencyProjection)>,
) -> Result<PropagatorKernel<'g>> {
    if !label.is_non_classical() {
        return classical_kernel(label, grid);
    }
    let (p, m) =
        projections.ok_or_else(|| Error::InvalidArgument(format!("`{}` needs frequency projections", label.name())))?;
    match label {
        KernelLabel::Positive => instantaneous_kernel(grid, p),
        KernelLabel::Negative => instantaneous_kernel(grid, m),
        _ => feynman_kernel(label, grid, p, m),
    }
}

/// Lapse at every lattice site for each grid time.
pub fn lapse_on_grid(model: &ScenarioModel, lattice: &Lattice, times: &[f64]) -> Vec<Vec<f64>> {
    times.iter().map(|&t| (0..lattice.n_sites).map(|j| model.at_site(lattice, t, j).alpha).collect()).collect()
}

/// The scalar form `G(t, s) = c alpha(t) [E(t, s)]_12 alpha(s)`.
pub fn to_g_form<'g>(
    kernel: &PropagatorKernel<'g>,
    model: &ScenarioModel,
    lattice: &Lattice,
) -> Result<PropagatorKernel<'g>> {
    if kernel.form != Form::E {
        return Err(Error::InvalidArgument("kernel is already in G form".into()));
    }
    if 2 * lattice.n_sites != kernel.grid.dim() {
        return Err(Error::Dimension(format!("lattice has {} sites, grid dim {}", lattice.n_sites, kernel.grid.dim())));
    }
    Ok(PropagatorKernel { form: Form::G, alpha: lapse_on_grid(model, lattice, &kernel.grid.times), ..kernel.clone() })
}

impl<'g> PropagatorKernel<'g> {
    pub fn grid(&self) -> &'g EvolutionGrid {
        self.grid
    }

    fn middle(&self, j: usize, k: usize) -> Middle {
        use std::cmp::Ordering::*;
        match j.cmp(&k) {
            Greater => self.m_fwd.clone(),
            Less => self.m_bwd.clone(),
            Equal => Middle::average(&self.m_fwd, &self.m_bwd, self.grid.dim()),
        }
    }

    /// Kernel at grid indices `(j, k)`: `2N x 2N` in `E` form, `N x N` in `G` form.
    pub fn eval_idx(&self, j: usize, k: usize) -> CMat {
        let g = self.grid;
        let n2 = g.dim();
        let mid = self.middle(j, k);
        if let (true, Middle::Scalar(c)) = (j == k, &mid) {
            // U(t, t) = 1 exactly
            return match self.form {
                Form::E => scaled(&identity(n2), crate::linalg::re(*c)),
                Form::G => CMat::zeros(n2 / 2, n2 / 2),
            };
        }
        let mid = mid.to_dense(n2);
        match self.form {
            Form::E => g.from_origin(j) * &mid * g.to_origin(k),
            Form::G => {
                let n = n2 / 2;
                let top = g.from_origin(j).as_ref().subrows(0, n);
                let right = g.to_origin(k).as_ref().subcols(n, n);
                let e12 = top * &mid * right;
                let c = self.label.g_prefactor();
                let (aj, ak) = (&self.alpha[j], &self.alpha[k]);
                CMat::from_fn(n, n, |r, s| c * e12[(r, s)] * (aj[r] * ak[s]))
            }
        }
    }

    /// Kernel at grid times `(t, s)`.
    pub fn eval(&self, t: f64, s: f64) -> Result<CMat> {
        Ok(self.eval_idx(self.grid.index_of(t)?, self.grid.index_of(s)?))
    }

    /// `(G f)(t_j) = int G(t_j, s) f(s) ds` by the composite trapezoid rule
    /// on the grid, with the diagonal taking the `theta(0) = 1/2` value.
    /// `f` holds one lattice vector per grid time.
    pub fn apply(&self, f: &[CVec]) -> Result<Vec<CVec>> {
        if self.form != Form::G {
            return Err(Error::InvalidArgument("apply needs a G-form kernel".into()));
        }
        let g = self.grid;
        let m = g.len();
        let n = g.dim() / 2;
        if f.len() != m || f.iter().any(|v| v.nrows() != n) {
            return Err(Error::Dimension(format!("source must have {m} vectors of length {n}")));
        }
        let w = trapezoid_weights(&g.times);
        let y: Vec<CVec> = (0..m)
            .map(|k| {
                let af = CVec::from_fn(n, |i| f[k][i] * (self.alpha[k][i] * w[k]));
                g.to_origin(k).as_ref().subcols(n, n) * &af
            })
            .collect();
        let mut before = vec![CVec::zeros(2 * n); m];
        let mut after = vec![CVec::zeros(2 * n); m];
        let mut acc = CVec::zeros(2 * n);
        for k in 0..m {
            before[k] = &acc + &y[k] * cs(0.5);
            acc += &y[k];
        }
        acc = CVec::zeros(2 * n);
        for k in (0..m).rev() {
            after[k] = &acc + &y[k] * cs(0.5);
            acc += &y[k];
        }
        let c = self.label.g_prefactor();
        Ok((0..m)
            .map(|j| {
                let inner = self.m_fwd.apply(&before[j]) + self.m_bwd.apply(&after[j]);
                let z = g.from_origin(j).as_ref().subrows(0, n) * &inner;
                CVec::from_fn(n, |i| c * z[i] * self.alpha[j][i])
            })
            .collect())
    }

    /// Space-time Gram matrix `M_ab = <f_a, G f_b>` over a set of sources,
    /// using trapezoid weights in both times. Computed in factorized form
    /// `X^dagger M Y` for kernels with `M_fwd = M_bwd`.
    pub fn source_gram(&self, sources: &[Vec<CVec>]) -> Result<CMat> {
        if self.form != Form::G {
            return Err(Error::InvalidArgument("source_gram needs a G-form kernel".into()));
        }
        let g = self.grid;
        let (m, n) = (g.len(), g.dim() / 2);
        let w = trapezoid_weights(&g.times);
        let r = sources.len();
        let mut x = CMat::zeros(2 * n, r);
        let mut y = CMat::zeros(2 * n, r);
        for (b, src) in sources.iter().enumerate() {
            if src.len() != m || src.iter().any(|v| v.nrows() != n) {
                return Err(Error::Dimension(format!("source must have {m} vectors of length {n}")));
            }
            for k in 0..m {
                let af = CVec::from_fn(n, |i| src[k][i] * (self.alpha[k][i] * w[k]));
                let yk = g.to_origin(k).as_ref().subcols(n, n) * &af;
                let xk = g.from_origin(k).as_ref().subrows(0, n).adjoint() * &af;
                for i in 0..2 * n {
                    y[(i, b)] += yk[i];
                    x[(i, b)] += xk[i];
                }
            }
        }
        let mid = match (&self.m_fwd, &self.m_bwd) {
            (Middle::Scalar(a), Middle::Scalar(b)) if a == b => Middle::Scalar(*a),
            (Middle::Dense(a), Middle::Dense(b)) if max_abs((a - b).as_ref()) == 0.0 => Middle::Dense(a.clone()),
            _ => return Err(Error::InvalidArgument(format!("`{}` is not a bisolution kernel", self.label.name()))),
        };
        let c = self.label.g_prefactor();
        let my = match mid {
            Middle::Scalar(s) => scaled(&y, crate::linalg::re(s)),
            Middle::Dense(d) => &d * &y,
        };
        Ok(scaled(&(x.adjoint() * &my), c))
    }
}

/// Composite trapezoid weights on a possibly non-uniform grid.
pub fn trapezoid_weights(times: &[f64]) -> Vec<f64> {
    let m = times.len();
    let mut w = vec![0.0; m];
    for k in 0..m.saturating_sub(1) {
        let h = times[k + 1] - times[k];
        w[k] += 0.5 * h;
        w[k + 1] += 0.5 * h;
    }
    w
}

/// Solution of `K u = f` with Cauchy data `(u1, u2)` at `s`, returned as
/// Cauchy data at `t`: `u~(t) = U(t, s) u~(s) + i int_s^t U(t, r) iota_2 f~(r) dr`
/// with `u~ = alpha^{-1} u` and `f~ = alpha f`. `s` and `t` must be grid
/// times and `f` (if any) holds one lattice vector per grid time.
pub fn solve_cauchy(
    u1: &CVec,
    u2: &CVec,
    f: Option<&[CVec]>,
    s: f64,
    t: f64,
    grid: &EvolutionGrid,
    alpha: &[Vec<f64>],
) -> Result<(CVec, CVec)> {
    let n = grid.dim() / 2;
    if u1.nrows() != n || u2.nrows() != n {
        return Err(Error::Dimension(format!("Cauchy data must have length {n}")));
    }
    if alpha.len() != grid.len() {
        return Err(Error::Dimension("lapse table does not match the grid".into()));
    }
    let (si, ti) = (grid.index_of(s)?, grid.index_of(t)?);
    let data = CVec::from_fn(2 * n, |i| if i < n { u1[i] / alpha[si][i] } else { u2[i - n] / alpha[si][i - n] });
    let mut v = grid.u_idx(ti, si) * &data;
    if let Some(f) = f {
        if f.len() != grid.len() || f.iter().any(|x| x.nrows() != n) {
            return Err(Error::Dimension(format!("source must have {} vectors of length {n}", grid.len())));
        }
        let (lo, hi) = (si.min(ti), si.max(ti));
        let dir = if ti >= si { 1.0 } else { -1.0 };
        let w = trapezoid_weights(&grid.times[lo..=hi]);
        // int_s^t U(t, r) y(r) dr = U(t, t0) int U(t0, r) y(r) dr
        let mut acc = CVec::zeros(2 * n);
        for (q, k) in (lo..=hi).enumerate() {
            let fk = CVec::from_fn(n, |i| f[k][i] * alpha[k][i] * (w[q] * dir));
            acc += grid.to_origin(k).as_ref().subcols(n, n) * &fk;
        }
        let src = grid.from_origin(ti) * &acc;
        for i in 0..2 * n {
            v[i] += I * src[i];
        }
    }
    let a = &alpha[ti];
    Ok((CVec::from_fn(n, |i| v[i] * a[i]), CVec::from_fn(n, |i| v[n + i] * a[i])))
}

/// The Klein-Gordon operator `K = alpha^{-1} K~ alpha^{-1}` on lattice
/// functions sampled on a uniform time grid, with
/// `K~ u = u'' + i (W u)' + i W^dagger u' - W^dagger W u + L u` and
/// second-order centred differences. Defined at interior times only.
#[derive(Debug, Clone)]
pub struct DiscreteK {
    pub times: Vec<f64>,
    dt: f64,
    l: Vec<CMat>,
    w: Vec<CMat>,
    alpha: Vec<Vec<f64>>,
}

impl DiscreteK {
    pub fn build(model: &ScenarioModel, lattice: &Lattice, times: &[f64]) -> Result<Self> {
        if times.len() < 3 {
            return Err(Error::InvalidArgument("need at least three times".into()));
        }
        let dt = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
        if times.windows(2).any(|w| ((w[1] - w[0]) - dt).abs() > 1e-9 * dt.abs()) || !(dt > 0.0) {
            return Err(Error::InvalidArgument("time grid must be uniform and increasing".into()));
        }
        let sample = |t: f64| -> Result<(CMat, CMat)> {
            let slice = sample_slice(model, lattice, t)?;
            Ok((assemble_l(&slice, lattice, model.mass_shift)?, assemble_w(&slice, lattice)?))
        };
        let (mut l, mut w) = (Vec::new(), Vec::new());
        if model.is_time_independent() {
            let (a, b) = sample(times[0])?;
            l.push(a);
            w.push(b);
        } else {
            for &t in times {
                let (a, b) = sample(t)?;
                l.push(a);
                w.push(b);
            }
        }
        Ok(DiscreteK { times: times.to_vec(), dt, l, w, alpha: lapse_on_grid(model, lattice, times) })
    }

    fn at(&self, v: &[CMat], j: usize) -> usize {
        if v.len() == 1 {
            0
        } else {
            j
        }
    }

    /// `K u` at interior indices `1..m-1`; boundary entries are `None`.
    pub fn apply(&self, u: &[CVec]) -> Result<Vec<Option<CVec>>> {
        let m = self.times.len();
        if u.len() != m {
            return Err(Error::Dimension(format!("expected {m} time samples, got {}", u.len())));
        }
        let n = self.l[0].nrows();
        let ut: Vec<CVec> = (0..m).map(|j| CVec::from_fn(n, |i| u[j][i] / self.alpha[j][i])).collect();
        let (dt, dt2) = (self.dt, self.dt * self.dt);
        let mut out = vec![None; m];
        for j in 1..m - 1 {
            let (wp, wm, wj) =
                (&self.w[self.at(&self.w, j + 1)], &self.w[self.at(&self.w, j - 1)], &self.w[self.at(&self.w, j)]);
            let lj = &self.l[self.at(&self.l, j)];
            let d2 = (&ut[j + 1] - &ut[j] * cs(2.0) + &ut[j - 1]) * cs(1.0 / dt2);
            let dwu = (wp * &ut[j + 1] - wm * &ut[j - 1]) * cs(0.5 / dt);
            let du = (&ut[j + 1] - &ut[j - 1]) * cs(0.5 / dt);
            let wdu = wj.adjoint() * &du;
            let wwu = wj.adjoint() * (wj * &ut[j]);
            let lu = lj * &ut[j];
            let kt = d2 + (dwu + wdu) * faer::Scale(I) - wwu + lu;
            out[j] = Some(CVec::from_fn(n, |i| kt[i] / self.alpha[j][i]));
        }
        Ok(out)
    }
}

/// Largest `|| A_i - B_i ||` (spectral) over a list of matrix pairs,
/// relative to `max(1, max ||B_i||)`.
pub fn max_relative_gap(pairs: &[(CMat, CMat)]) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for (a, b) in pairs {
        let scale = op_norm(b.as_ref())?.max(1.0);
        worst = worst.max(op_norm((a - b).as_ref())? / scale);
    }
    Ok(worst)
}

fn cs(x: f64) -> faer::Scale<faer::c64> {
    faer::Scale(crate::linalg::re(x))
}
