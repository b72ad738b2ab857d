//! Evolution `U(t, s)` of the first-order system `(d/dt + i B(t)) u = 0` by
//! time-ordered products of exponentials of frozen generators.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::discrete_operators::ConstantTable;
use crate::discrete_operators::{generator_at, OperatorSet, A_BOUND_LIMIT};
use crate::error::{Error, Result};
use crate::expm::{expm, expm_pair};
use crate::geometry::{Lattice, ScenarioModel};
use crate::linalg::{all_finite, herm_eig, identity, max_abs, op_norm, scaled, CMat, I};
use crate::spaces::NormFamily;

/// Where the generator of each step is frozen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sampling {
    /// Start of each step in the direction of evolution (order 1).
    Left,
    /// Midpoint of each step (order 2).
    Midpoint,
}

impl FromStr for Sampling {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "left" => Ok(Sampling::Left),
            "midpoint" => Ok(Sampling::Midpoint),
            other => Err(Error::InvalidArgument(format!("sampling `{other}` is not left or midpoint"))),
        }
    }
}

impl fmt::Display for Sampling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sampling::Left => "left",
            Sampling::Midpoint => "midpoint",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepSchedule {
    pub t_start: f64,
    pub t_end: f64,
    pub n_steps: usize,
    pub sampling: Sampling,
}

impl StepSchedule {
    pub fn new(t_start: f64, t_end: f64, n_steps: usize, sampling: Sampling) -> Result<Self> {
        if n_steps == 0 {
            return Err(Error::InvalidArgument("n_steps must be >= 1".into()));
        }
        if !(t_start.is_finite() && t_end.is_finite()) {
            return Err(Error::InvalidArgument("schedule endpoints must be finite".into()));
        }
        Ok(StepSchedule { t_start, t_end, n_steps, sampling })
    }

    pub fn dt(&self) -> f64 {
        (self.t_end - self.t_start) / self.n_steps as f64
    }

    /// Time at which the generator of step `j` is frozen.
    pub fn sample_time(&self, j: usize) -> f64 {
        let off = match self.sampling {
            Sampling::Left => 0.0,
            Sampling::Midpoint => 0.5,
        };
        self.t_start + (j as f64 + off) * self.dt()
    }

    pub fn refined(&self) -> Self {
        StepSchedule { n_steps: 2 * self.n_steps, ..*self }
    }
}

/// Source of the generator `B(t)` and of the full operator set.
pub trait GeneratorProvider: Sync {
    /// Dimension `2N` of Cauchy data.
    fn dim(&self) -> usize;
    /// `B(t)`; errors when the positivity assumptions fail at `t`.
    fn generator(&self, t: f64) -> Result<CMat>;
    fn operators(&self, t: f64) -> Result<OperatorSet>;
    /// When true, `generator` ignores `t`.
    fn time_independent(&self) -> bool {
        false
    }
}

/// A scenario sampled on a lattice.
#[derive(Debug, Clone)]
pub struct LatticeProblem {
    pub model: ScenarioModel,
    pub lattice: Lattice,
}

impl LatticeProblem {
    pub fn new(model: ScenarioModel, lattice: Lattice) -> Self {
        LatticeProblem { model, lattice }
    }
}

impl GeneratorProvider for LatticeProblem {
    fn dim(&self) -> usize {
        2 * self.lattice.n_sites
    }
    fn generator(&self, t: f64) -> Result<CMat> {
        generator_at(&self.model, &self.lattice, t)
    }
    fn operators(&self, t: f64) -> Result<OperatorSet> {
        OperatorSet::assemble(&self.model, &self.lattice, t)
    }
    fn time_independent(&self) -> bool {
        self.model.is_time_independent()
    }
}

/// Time-independent operators given directly as matrices.
#[derive(Debug, Clone)]
pub struct ConstantProvider {
    pub ops: OperatorSet,
}

impl ConstantProvider {
    pub fn new(ops: OperatorSet) -> Result<Self> {
        ops.require_assumptions()?;
        Ok(ConstantProvider { ops })
    }
}

impl GeneratorProvider for ConstantProvider {
    fn dim(&self) -> usize {
        self.ops.b.nrows()
    }
    fn generator(&self, _t: f64) -> Result<CMat> {
        Ok(self.ops.b.clone())
    }
    fn operators(&self, t: f64) -> Result<OperatorSet> {
        Ok(OperatorSet { time_stamp: t, ..self.ops.clone() })
    }
    fn time_independent(&self) -> bool {
        true
    }
}

/// Bounded perturbation added to a generator.
pub enum Perturbation {
    Constant(CMat),
    TimeDependent(Box<dyn Fn(f64) -> CMat + Sync>),
}

impl Perturbation {
    /// `[[0, 0], [c, 0]]` on `C^n + C^n`; with `c = -b` it removes a mass
    /// shift `b` from `B`.
    pub fn lower_left(n: usize, c: f64) -> Self {
        let mut p = crate::linalg::zeros(2 * n, 2 * n);
        for j in 0..n {
            p[(n + j, j)] = crate::linalg::re(c);
        }
        Perturbation::Constant(p)
    }

    fn at(&self, t: f64) -> std::borrow::Cow<'_, CMat> {
        match self {
            Perturbation::Constant(p) => std::borrow::Cow::Borrowed(p),
            Perturbation::TimeDependent(f) => std::borrow::Cow::Owned(f(t)),
        }
    }

    fn is_zero(&self) -> bool {
        matches!(self, Perturbation::Constant(p) if max_abs(p.as_ref()) == 0.0)
    }
}

/// Generator `B(t) + P(t)`. Positivity is checked on `B` only; `P` is any
/// bounded matrix.
pub struct Perturbed<'a> {
    pub base: &'a dyn GeneratorProvider,
    pub perturbation: &'a Perturbation,
}

impl GeneratorProvider for Perturbed<'_> {
    fn dim(&self) -> usize {
        self.base.dim()
    }
    fn generator(&self, t: f64) -> Result<CMat> {
        let b = self.base.generator(t)?;
        if self.perturbation.is_zero() {
            return Ok(b);
        }
        let p = self.perturbation.at(t);
        if p.nrows() != b.nrows() || p.ncols() != b.ncols() {
            return Err(Error::Dimension(format!(
                "perturbation is {}x{}, generator {}",
                p.nrows(),
                p.ncols(),
                b.nrows()
            )));
        }
        Ok(&b + p.as_ref())
    }
    fn operators(&self, t: f64) -> Result<OperatorSet> {
        self.base.operators(t)
    }
    fn time_independent(&self) -> bool {
        self.base.time_independent() && matches!(self.perturbation, Perturbation::Constant(_))
    }
}

/// `U(t_end, t_start)` with its schedule and error estimate.
#[derive(Debug, Clone)]
pub struct EvolutionOperator {
    pub u: CMat,
    pub schedule: StepSchedule,
    /// `||U_{2n} - U_n||` in the dual geometry at `t_end`, when requested.
    pub richardson_error: Option<f64>,
    /// Schedules of composed pieces, latest first.
    pub segments: Vec<StepSchedule>,
}

impl EvolutionOperator {
    pub fn identity(t: f64, dim: usize, sampling: Sampling) -> Self {
        let schedule = StepSchedule { t_start: t, t_end: t, n_steps: 1, sampling };
        EvolutionOperator { u: identity(dim), schedule, richardson_error: Some(0.0), segments: vec![schedule] }
    }

    pub fn is_identity(&self) -> bool {
        self.schedule.t_start == self.schedule.t_end && self.segments.iter().all(|s| s.t_start == s.t_end)
    }
}

fn step_factor(provider: &dyn GeneratorProvider, t: f64, dt: f64) -> Result<CMat> {
    let b = provider.generator(t)?;
    if !all_finite(b.as_ref()) {
        return Err(Error::NonFinite(format!("generator at t = {t}")));
    }
    Ok(expm(&scaled(&b, -I * dt)))
}

fn power(e: &CMat, mut n: usize) -> CMat {
    let mut acc: Option<CMat> = None;
    let mut base = e.clone();
    loop {
        if n & 1 == 1 {
            acc = Some(match acc {
                None => base.clone(),
                Some(a) => &base * &a,
            });
        }
        n >>= 1;
        if n == 0 {
            break;
        }
        base = &base * &base;
    }
    acc.unwrap_or_else(|| identity(e.nrows()))
}

/// Plain product `prod_j exp(-i dt B(tau_j))`, later factors on the left.
fn product(provider: &dyn GeneratorProvider, sch: &StepSchedule) -> Result<CMat> {
    let dim = provider.dim();
    if sch.t_start == sch.t_end {
        return Ok(identity(dim));
    }
    let dt = sch.dt();
    if provider.time_independent() {
        let e = step_factor(provider, sch.sample_time(0), dt)?;
        return Ok(power(&e, sch.n_steps));
    }
    let mut u = identity(dim);
    for j in 0..sch.n_steps {
        let e = step_factor(provider, sch.sample_time(j), dt)?;
        u = &e * &u;
    }
    if !all_finite(u.as_ref()) {
        return Err(Error::NonFinite("evolution product".into()));
    }
    Ok(u)
}

/// Dual-geometry operator norm at time `t`, `|| S^{1/2} a S^{-1/2} ||`.
pub fn dual_norm_at(provider: &dyn GeneratorProvider, t: f64, a: &CMat) -> Result<f64> {
    let ops = provider.operators(t)?;
    let e = herm_eig(&ops.s_dual)?;
    let sh = e.apply_fn(f64::sqrt);
    let snh = e.apply_fn(|x| 1.0 / x.sqrt());
    op_norm((&sh * a * &snh).as_ref())
}

/// Evolution over `schedule`. With `richardson` the step count is doubled
/// once and `||U_{2n} - U_n||` (dual norm at `t_end`) is recorded; the
/// returned matrix is always the `n`-step product.
pub fn evolve(
    provider: &dyn GeneratorProvider,
    schedule: &StepSchedule,
    richardson: bool,
) -> Result<EvolutionOperator> {
    if schedule.t_start == schedule.t_end {
        return Ok(EvolutionOperator::identity(schedule.t_start, provider.dim(), schedule.sampling));
    }
    let u = product(provider, schedule)?;
    let richardson_error = if richardson {
        let u2 = product(provider, &schedule.refined())?;
        Some(dual_norm_at(provider, schedule.t_end, &(&u2 - &u))?)
    } else {
        None
    };
    Ok(EvolutionOperator { u, schedule: *schedule, richardson_error, segments: vec![*schedule] })
}

/// Evolution with the perturbed generator `B(t) + P(t)`.
pub fn perturbed_evolve(
    base: &dyn GeneratorProvider,
    perturbation: &Perturbation,
    schedule: &StepSchedule,
    richardson: bool,
) -> Result<EvolutionOperator> {
    evolve(&Perturbed { base, perturbation }, schedule, richardson)
}

/// `U1 U2` for `U1 = U(t, r)`, `U2 = U(r, s)`.
pub fn compose(u1: &EvolutionOperator, u2: &EvolutionOperator) -> Result<EvolutionOperator> {
    if u1.u.nrows() != u2.u.nrows() {
        return Err(Error::Dimension("composed evolutions differ in dimension".into()));
    }
    if u1.is_identity() && u1.schedule.t_start == u2.schedule.t_end {
        return Ok(u2.clone());
    }
    if u2.is_identity() && u2.schedule.t_start == u1.schedule.t_start {
        return Ok(u1.clone());
    }
    if u1.schedule.t_start != u2.schedule.t_end {
        return Err(Error::Endpoints(format!(
            "first factor starts at {}, second ends at {}",
            u1.schedule.t_start, u2.schedule.t_end
        )));
    }
    let schedule = StepSchedule {
        t_start: u2.schedule.t_start,
        t_end: u1.schedule.t_end,
        n_steps: u1.schedule.n_steps + u2.schedule.n_steps,
        sampling: u1.schedule.sampling,
    };
    let richardson_error = match (u1.richardson_error, u2.richardson_error) {
        (Some(a), Some(b)) => Some(a + b),
        _ => None,
    };
    let mut segments = u1.segments.clone();
    segments.extend(u2.segments.iter().copied());
    Ok(EvolutionOperator { u: &u1.u * &u2.u, schedule, richardson_error, segments })
}

/// Evolutions between all points of a time grid, stored as
/// `U(t_k, t_0)` and `U(t_0, t_k)`; `U(t_j, t_k)` is their product, so no
/// matrix is ever inverted.
#[derive(Debug, Clone)]
pub struct EvolutionGrid {
    pub times: Vec<f64>,
    pub substeps: usize,
    pub sampling: Sampling,
    fwd: Vec<CMat>,
    bwd: Vec<CMat>,
}

impl EvolutionGrid {
    /// Builds the grid with `substeps` product steps per grid interval.
    /// With midpoint sampling the backward factors are the exact inverses
    /// of the forward ones (same frozen generators).
    pub fn build(provider: &dyn GeneratorProvider, times: &[f64], substeps: usize, sampling: Sampling) -> Result<Self> {
        if times.is_empty() || times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument("grid times must be strictly increasing and non-empty".into()));
        }
        if substeps == 0 {
            return Err(Error::InvalidArgument("substeps must be >= 1".into()));
        }
        let dim = provider.dim();
        let mut fwd = vec![identity(dim)];
        let mut bwd = vec![identity(dim)];
        let mut cached: Option<(f64, CMat, CMat)> = None;
        for w in times.windows(2) {
            let (a, b) = (w[0], w[1]);
            let sch = StepSchedule::new(a, b, substeps, sampling)?;
            let (mut f, mut g) = (identity(dim), identity(dim));
            match sampling {
                Sampling::Midpoint => {
                    let dt = sch.dt();
                    for j in 0..substeps {
                        let (e, einv) = match (&cached, provider.time_independent()) {
                            (Some((cdt, e, einv)), true) if *cdt == dt => (e.clone(), einv.clone()),
                            _ => {
                                let bgen = provider.generator(sch.sample_time(j))?;
                                let (e, einv) = expm_pair(&scaled(&bgen, -I * dt));
                                if provider.time_independent() {
                                    cached = Some((dt, e.clone(), einv.clone()));
                                }
                                (e, einv)
                            }
                        };
                        f = &e * &f;
                        g = &g * &einv;
                    }
                }
                Sampling::Left => {
                    f = product(provider, &sch)?;
                    g = product(provider, &StepSchedule::new(b, a, substeps, sampling)?)?;
                }
            }
            let nf = &f * fwd.last().unwrap();
            let nb = bwd.last().unwrap() * &g;
            fwd.push(nf);
            bwd.push(nb);
        }
        Ok(EvolutionGrid { times: times.to_vec(), substeps, sampling, fwd, bwd })
    }

    /// Uniform grid of `n_intervals + 1` points on `[t0, t1]`.
    pub fn uniform(
        provider: &dyn GeneratorProvider,
        t0: f64,
        t1: f64,
        n_intervals: usize,
        substeps: usize,
        sampling: Sampling,
    ) -> Result<Self> {
        let times: Vec<f64> = (0..=n_intervals).map(|k| t0 + (t1 - t0) * k as f64 / n_intervals as f64).collect();
        Self::build(provider, &times, substeps, sampling)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.fwd[0].nrows()
    }

    /// Index of the grid point equal to `t` (to `1e-12` relative).
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let tol = 1e-12 * (1.0 + t.abs());
        let k = self.times.partition_point(|&s| s < t - tol);
        if k < self.times.len() && (self.times[k] - t).abs() <= tol {
            Ok(k)
        } else {
            Err(Error::Window(format!(
                "t = {t} is not a grid point of [{}, {}]",
                self.times[0],
                self.times.last().unwrap()
            )))
        }
    }

    /// `U(t_0, t_k)` and `U(t_k, t_0)`.
    pub fn to_origin(&self, k: usize) -> &CMat {
        &self.bwd[k]
    }

    pub fn from_origin(&self, k: usize) -> &CMat {
        &self.fwd[k]
    }

    /// `U(t_j, t_k)` by grid indices.
    pub fn u_idx(&self, j: usize, k: usize) -> CMat {
        if j == k {
            return identity(self.dim());
        }
        &self.fwd[j] * &self.bwd[k]
    }

    /// `U(t, s)` for grid times.
    pub fn u(&self, t: f64, s: f64) -> Result<CMat> {
        Ok(self.u_idx(self.index_of(t)?, self.index_of(s)?))
    }
}

/// One line of a norm-bound report.
#[derive(Debug, Clone, Serialize)]
pub struct BoundEntry {
    pub lambda: f64,
    /// Time of the geometry in which the norm is measured.
    pub s: f64,
    pub measured: f64,
    pub bound: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundReport {
    pub r: f64,
    pub t: f64,
    pub integral: f64,
    pub c_rt: f64,
    pub entries: Vec<BoundEntry>,
    pub passed: bool,
}

/// Compares `||U(t, r)||_{lambda,s}` with `exp(2 c_{r,t} int_r^t C)` for
/// `lambda in {-1, 0, 1}` and `s` at both ends and the middle of the
/// window. A relative slack `rel_tol` is allowed.
pub fn check_norm_bound(
    u: &EvolutionOperator,
    families: &dyn Fn(f64) -> Result<NormFamily>,
    constants: &ConstantTable,
    rel_tol: f64,
) -> Result<BoundReport> {
    let (r, t) = (u.schedule.t_start, u.schedule.t_end);
    let (lo, hi) = (r.min(t), r.max(t));
    let integral = constants.integral(lo, hi)?;
    let c_rt = constants.c_rt(lo, hi)?;
    let bound = (2.0 * c_rt * integral).exp();
    let mut entries = Vec::new();
    for s in [lo, 0.5 * (lo + hi), hi] {
        let fam = families(s)?;
        for lambda in [-1.0, 0.0, 1.0] {
            let measured = fam.operator_norm(&u.u, lambda)?;
            entries.push(BoundEntry { lambda, s, measured, bound, passed: measured <= bound * (1.0 + rel_tol) });
        }
    }
    let passed = entries.iter().all(|e| e.passed);
    Ok(BoundReport { r, t, integral, c_rt, entries, passed })
}

/// `a_bound` limit re-exported for callers that report it.
pub const ASSUMPTION_LIMIT: f64 = A_BOUND_LIMIT;
