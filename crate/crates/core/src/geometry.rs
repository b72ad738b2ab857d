//! Continuum scenarios in split form (lapse, shift, spatial metric,
//! potentials) and their samples on a periodic lattice.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};

/// Periodic 1D lattice: sites `x_j = j * spacing`, `j = 0..n_sites`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Lattice {
    pub n_sites: usize,
    pub spacing: f64,
}

impl Lattice {
    pub fn new(n_sites: usize, spacing: f64) -> Result<Self> {
        if n_sites < 4 {
            return Err(Error::InvalidLattice(format!("n_sites = {n_sites}, need at least 4")));
        }
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(Error::InvalidLattice(format!("spacing = {spacing} must be positive")));
        }
        Ok(Lattice { n_sites, spacing })
    }

    pub fn x(&self, j: usize) -> f64 {
        j as f64 * self.spacing
    }

    pub fn circumference(&self) -> f64 {
        self.n_sites as f64 * self.spacing
    }

    /// Distance on the circle between two coordinates.
    pub fn periodic_distance(&self, x: f64, y: f64) -> f64 {
        periodic_distance(x, y, self.circumference())
    }

    /// Number of lattice steps between two sites along the shorter arc.
    pub fn site_distance(&self, i: usize, j: usize) -> usize {
        let d = i.abs_diff(j);
        d.min(self.n_sites - d)
    }
}

pub fn periodic_distance(x: f64, y: f64, circumference: f64) -> f64 {
    let d = (x - y).rem_euclid(circumference);
    d.min(circumference - d)
}

/// Smooth compactly supported bump `exp(1 - 1/(1 - r^2))` on `|r| < 1`,
/// normalised to peak 1, and its derivative.
pub fn bump(r: f64) -> (f64, f64) {
    if r.abs() >= 1.0 {
        return (0.0, 0.0);
    }
    let q = 1.0 - r * r;
    let v = (1.0 - 1.0 / q).exp();
    (v, v * (-2.0 * r / (q * q)))
}

/// Built-in scenario families.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Scenario {
    /// Flat, time-independent: `alpha = g = 1`, constant shift, potentials.
    Static { m: f64, y: f64, beta: f64, a0: f64, a1: f64 },
    /// Spatially flat expanding universe `g_sigma = a(t)^2` with
    /// `a(t) = ((a0 + a1) + (a1 - a0) tanh(rho t)) / 2`.
    Frw { a0: f64, a1: f64, rho: f64, m: f64 },
    /// Static background with a compact bump in the lapse and in `Y`,
    /// optionally switched on and off smoothly in time.
    Bump { m: f64, amp: f64, y_amp: f64, center: f64, width: f64, t_center: f64, t_width: f64 },
    /// Electrostatic plateau `A0 = -v0` of the given half width around
    /// `center` with smooth tanh edges.
    StepPotential { m: f64, v0: f64, center: f64, half_width: f64, edge: f64 },
}

/// Pointwise values of the continuum fields.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldPoint {
    pub alpha: f64,
    pub alpha_dot: f64,
    pub beta: f64,
    pub g_sigma: f64,
    pub g_sigma_dot: f64,
    pub a0: f64,
    pub a1: f64,
    pub y: f64,
    pub y_dot: f64,
}

impl FieldPoint {
    /// `gamma = alpha^{-1} g_sigma^{1/2}`.
    pub fn gamma(&self) -> f64 {
        self.g_sigma.sqrt() / self.alpha
    }

    pub fn gamma_dot(&self) -> f64 {
        let sg = self.g_sigma.sqrt();
        -self.alpha_dot * sg / (self.alpha * self.alpha) + self.g_sigma_dot / (2.0 * sg * self.alpha)
    }

    fn flat(m: f64) -> Self {
        FieldPoint {
            alpha: 1.0,
            alpha_dot: 0.0,
            beta: 0.0,
            g_sigma: 1.0,
            g_sigma_dot: 0.0,
            a0: 0.0,
            a1: 0.0,
            y: m * m,
            y_dot: 0.0,
        }
    }
}

/// A scenario together with the mass shift `b` applied in operator assembly.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioModel {
    pub scenario: Scenario,
    pub mass_shift: f64,
}

impl ScenarioModel {
    pub fn id(&self) -> &'static str {
        match self.scenario {
            Scenario::Static { .. } => "static",
            Scenario::Frw { .. } => "frw",
            Scenario::Bump { .. } => "bump",
            Scenario::StepPotential { .. } => "step-potential",
        }
    }

    pub fn is_time_independent(&self) -> bool {
        match self.scenario {
            Scenario::Static { .. } | Scenario::StepPotential { .. } => true,
            Scenario::Frw { a0, a1, .. } => a0 == a1,
            Scenario::Bump { t_width, .. } => t_width == 0.0,
        }
    }

    /// Field values at `(t, x)`; `circumference` is needed for periodic
    /// distances.
    pub fn eval(&self, t: f64, x: f64, circumference: f64) -> FieldPoint {
        match self.scenario {
            Scenario::Static { y, beta, a0, a1, .. } => FieldPoint { beta, a0, a1, y, ..FieldPoint::flat(0.0) },
            Scenario::Frw { a0, a1, rho, m } => {
                let th = (rho * t).tanh();
                let a = 0.5 * ((a0 + a1) + (a1 - a0) * th);
                let a_dot = 0.5 * (a1 - a0) * rho * (1.0 - th * th);
                FieldPoint { g_sigma: a * a, g_sigma_dot: 2.0 * a * a_dot, ..FieldPoint::flat(m) }
            }
            Scenario::Bump { m, amp, y_amp, center, width, t_center, t_width } => {
                let d = periodic_distance(x, center, circumference);
                let (phi, _) = bump(d / width);
                let (chi, chi_dot) = if t_width == 0.0 {
                    (1.0, 0.0)
                } else {
                    let (v, dv) = bump((t - t_center) / t_width);
                    (v, dv / t_width)
                };
                FieldPoint {
                    alpha: 1.0 + amp * phi * chi,
                    alpha_dot: amp * phi * chi_dot,
                    y: m * m * (1.0 + y_amp * phi * chi),
                    y_dot: m * m * y_amp * phi * chi_dot,
                    ..FieldPoint::flat(m)
                }
            }
            Scenario::StepPotential { m, v0, center, half_width, edge } => {
                let d = periodic_distance(x, center, circumference);
                let s = 0.5 * (1.0 - ((d - half_width) / edge).tanh());
                FieldPoint { a0: -v0 * s, ..FieldPoint::flat(m) }
            }
        }
    }

    /// Field values at lattice site `j`.
    pub fn at_site(&self, lattice: &Lattice, t: f64, j: usize) -> FieldPoint {
        self.eval(t, lattice.x(j), lattice.circumference())
    }

    /// Largest local light speed `alpha g_sigma^{-1/2}` over the lattice at `t`
    /// (shift is zero in every built-in scenario except `static`, where it
    /// adds `|beta|`).
    pub fn max_light_speed(&self, lattice: &Lattice, t: f64) -> f64 {
        (0..lattice.n_sites)
            .map(|j| {
                let p = self.at_site(lattice, t, j);
                p.alpha / p.g_sigma.sqrt() + p.beta.abs()
            })
            .fold(0.0, f64::max)
    }
}

fn take(params: &mut BTreeMap<String, f64>, key: &str, default: Option<f64>) -> Result<f64> {
    match params.remove(key) {
        Some(v) if v.is_finite() => Ok(v),
        Some(v) => Err(Error::InvalidParameter(format!("{key} = {v} is not finite"))),
        None => default.ok_or_else(|| Error::InvalidParameter(format!("missing required parameter `{key}`"))),
    }
}

fn positive(key: &str, v: f64) -> Result<f64> {
    if v > 0.0 {
        Ok(v)
    } else {
        Err(Error::InvalidParameter(format!("{key} = {v} must be positive")))
    }
}

fn mass(v: f64) -> Result<f64> {
    if v > 0.0 {
        Ok(v)
    } else {
        Err(Error::YLowerBound(format!("mass m = {v} must be positive")))
    }
}

/// Parameter keys accepted by each scenario, in documentation order.
pub fn scenario_keys(name: &str) -> Option<&'static [&'static str]> {
    Some(match name {
        "static" => &["m", "y", "beta", "a0", "a1"],
        "frw" => &["a0", "a1", "rho", "m"],
        "bump" => &["m", "amp", "y_amp", "center", "width", "t_center", "t_width"],
        "step-potential" => &["m", "v0", "center", "half_width", "edge"],
        _ => return None,
    })
}

/// Builds a scenario from its name and a parameter map.
///
/// | scenario | keys (default) |
/// |---|---|
/// | static | m (1), y (m²), beta (0), a0 (0), a1 (0) |
/// | frw | a0 (1), a1 (2), rho (1), m (1) |
/// | bump | m (1), amp (0.2), y_amp (0), center (0), width (4), t_center (0), t_width (0 = static) |
/// | step-potential | m (1), v0 (0.5), center (0), half_width (8), edge (1) |
///
/// `mass_shift` is the constant `b >= 0` added to `L`.
pub fn builtin_scenario(name: &str, params: &BTreeMap<String, f64>, mass_shift: f64) -> Result<ScenarioModel> {
    if scenario_keys(name).is_none() {
        return Err(Error::UnknownScenario(name.to_string()));
    }
    if !(mass_shift.is_finite() && mass_shift >= 0.0) {
        return Err(Error::InvalidParameter(format!("mass shift b = {mass_shift} must be >= 0")));
    }
    let mut p = params.clone();
    let scenario = match name {
        "static" => {
            let m = mass(take(&mut p, "m", Some(1.0))?)?;
            let y = take(&mut p, "y", Some(m * m))?;
            let beta = take(&mut p, "beta", Some(0.0))?;
            let a0 = take(&mut p, "a0", Some(0.0))?;
            let a1 = take(&mut p, "a1", Some(0.0))?;
            if y + mass_shift <= 0.0 {
                return Err(Error::YLowerBound(format!("Y + b = {} must be positive", y + mass_shift)));
            }
            if beta * beta >= 1.0 {
                return Err(Error::Timelike(format!("g_sigma beta^2 < alpha^2 fails for beta = {beta}")));
            }
            Scenario::Static { m, y, beta, a0, a1 }
        }
        "frw" => {
            let a0 = positive("a0", take(&mut p, "a0", Some(1.0))?)?;
            let a1 = positive("a1", take(&mut p, "a1", Some(2.0))?)?;
            let rho = take(&mut p, "rho", Some(1.0))?;
            let m = mass(take(&mut p, "m", Some(1.0))?)?;
            Scenario::Frw { a0, a1, rho, m }
        }
        "bump" => {
            let m = mass(take(&mut p, "m", Some(1.0))?)?;
            let amp = take(&mut p, "amp", Some(0.2))?;
            let y_amp = take(&mut p, "y_amp", Some(0.0))?;
            let center = take(&mut p, "center", Some(0.0))?;
            let width = positive("width", take(&mut p, "width", Some(4.0))?)?;
            let t_center = take(&mut p, "t_center", Some(0.0))?;
            let t_width = take(&mut p, "t_width", Some(0.0))?;
            if amp <= -1.0 {
                return Err(Error::InvalidParameter(format!("amp = {amp} makes the lapse non-positive")));
            }
            if y_amp <= -1.0 {
                return Err(Error::YLowerBound(format!("y_amp = {y_amp} makes Y non-positive")));
            }
            if t_width < 0.0 {
                return Err(Error::InvalidParameter(format!("t_width = {t_width} must be >= 0")));
            }
            Scenario::Bump { m, amp, y_amp, center, width, t_center, t_width }
        }
        _ => {
            let m = mass(take(&mut p, "m", Some(1.0))?)?;
            let v0 = take(&mut p, "v0", Some(0.5))?;
            let center = take(&mut p, "center", Some(0.0))?;
            let half_width = positive("half_width", take(&mut p, "half_width", Some(8.0))?)?;
            let edge = positive("edge", take(&mut p, "edge", Some(1.0))?)?;
            // |V| < m keeps ||W L^{-1/2}|| < 1 whatever the lattice
            if v0.abs() >= m {
                return Err(Error::InvalidParameter(format!("|v0| = {} must be below m = {m}", v0.abs())));
            }
            Scenario::StepPotential { m, v0, center, half_width, edge }
        }
    };
    if let Some(extra) = p.keys().next() {
        return Err(Error::InvalidParameter(format!("unknown key `{extra}` for scenario `{name}`")));
    }
    Ok(ScenarioModel { scenario, mass_shift })
}

/// Lattice samples of the fields entering the operators at one time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldSlice {
    pub time_stamp: f64,
    pub alpha: Vec<f64>,
    pub alpha_dot: Vec<f64>,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub gamma_dot: Vec<f64>,
    /// `alpha^2 / g_sigma`.
    pub g_sigma_inv_tilde: Vec<f64>,
    /// `alpha^2 Y`; the mass shift is not included.
    pub y_tilde: Vec<f64>,
    /// Time derivative of `y_tilde`.
    pub y_tilde_dot: Vec<f64>,
    /// `-A0 + A1 beta`.
    pub v: Vec<f64>,
    pub a1: Vec<f64>,
}

impl FieldSlice {
    pub fn n_sites(&self) -> usize {
        self.alpha.len()
    }

    /// Checks lengths, finiteness and the sitewise invariants.
    pub fn validate(&self) -> Result<()> {
        let n = self.alpha.len();
        let arrays: [(&str, &Vec<f64>); 10] = [
            ("alpha", &self.alpha),
            ("alpha_dot", &self.alpha_dot),
            ("beta", &self.beta),
            ("gamma", &self.gamma),
            ("gamma_dot", &self.gamma_dot),
            ("g_sigma_inv_tilde", &self.g_sigma_inv_tilde),
            ("y_tilde", &self.y_tilde),
            ("y_tilde_dot", &self.y_tilde_dot),
            ("v", &self.v),
            ("a1", &self.a1),
        ];
        for (name, a) in arrays {
            if a.len() != n {
                return Err(Error::Dimension(format!("{name} has {} entries, expected {n}", a.len())));
            }
            if let Some(site) = a.iter().position(|x| !x.is_finite()) {
                return Err(Error::FieldInvariant { site, what: format!("{name} is not finite") });
            }
        }
        for j in 0..n {
            if self.alpha[j] <= 0.0 {
                return Err(Error::FieldInvariant { site: j, what: format!("alpha = {} <= 0", self.alpha[j]) });
            }
            if self.gamma[j] <= 0.0 {
                return Err(Error::FieldInvariant { site: j, what: format!("gamma = {} <= 0", self.gamma[j]) });
            }
            if self.g_sigma_inv_tilde[j] <= 0.0 {
                return Err(Error::FieldInvariant {
                    site: j,
                    what: format!("g_sigma_inv_tilde = {} <= 0", self.g_sigma_inv_tilde[j]),
                });
            }
            // g_sigma beta^2 < alpha^2  <=>  beta^2 < alpha^2 / g_sigma
            if self.beta[j] * self.beta[j] >= self.g_sigma_inv_tilde[j] {
                return Err(Error::Timelike(format!("site {j}: beta^2 >= alpha^2 / g_sigma")));
            }
        }
        Ok(())
    }
}

/// Samples `model` on `lattice` at time `t`.
pub fn sample_slice(model: &ScenarioModel, lattice: &Lattice, t: f64) -> Result<FieldSlice> {
    let n = lattice.n_sites;
    let mut s = FieldSlice {
        time_stamp: t,
        alpha: Vec::with_capacity(n),
        alpha_dot: Vec::with_capacity(n),
        beta: Vec::with_capacity(n),
        gamma: Vec::with_capacity(n),
        gamma_dot: Vec::with_capacity(n),
        g_sigma_inv_tilde: Vec::with_capacity(n),
        y_tilde: Vec::with_capacity(n),
        y_tilde_dot: Vec::with_capacity(n),
        v: Vec::with_capacity(n),
        a1: Vec::with_capacity(n),
    };
    for j in 0..n {
        let p = model.at_site(lattice, t, j);
        if !(p.alpha > 0.0) {
            return Err(Error::FieldInvariant { site: j, what: format!("alpha = {} <= 0", p.alpha) });
        }
        if !(p.g_sigma > 0.0) {
            return Err(Error::FieldInvariant { site: j, what: format!("g_sigma = {} <= 0", p.g_sigma) });
        }
        if !(p.g_sigma * p.beta * p.beta < p.alpha * p.alpha) {
            return Err(Error::Timelike(format!(
                "site {j}: g_sigma beta^2 = {} >= alpha^2",
                p.g_sigma * p.beta * p.beta
            )));
        }
        let a2 = p.alpha * p.alpha;
        s.alpha.push(p.alpha);
        s.alpha_dot.push(p.alpha_dot);
        s.beta.push(p.beta);
        s.gamma.push(p.gamma());
        s.gamma_dot.push(p.gamma_dot());
        s.g_sigma_inv_tilde.push(a2 / p.g_sigma);
        s.y_tilde.push(a2 * p.y);
        s.y_tilde_dot.push(2.0 * p.alpha * p.alpha_dot * p.y + a2 * p.y_dot);
        s.v.push(-p.a0 + p.a1 * p.beta);
        s.a1.push(p.a1);
    }
    s.validate()?;
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(kv: &[(&str, f64)]) -> BTreeMap<String, f64> {
        kv.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn static_fields() {
        let m = builtin_scenario("static", &params(&[("m", 1.0)]), 0.0).unwrap();
        let p = m.eval(3.0, 1.0, 10.0);
        assert_eq!((p.alpha, p.beta, p.g_sigma, p.y, p.a0, p.a1), (1.0, 0.0, 1.0, 1.0, 0.0, 0.0));
    }

    #[test]
    fn frw_midpoint_scale() {
        let m = builtin_scenario("frw", &params(&[("a0", 1.0), ("a1", 2.0), ("rho", 1.0)]), 0.0).unwrap();
        let p = m.eval(0.0, 0.0, 10.0);
        assert_eq!(p.g_sigma, 2.25);
        assert_eq!(p.gamma(), 1.5);
    }

    #[test]
    fn rejections() {
        assert!(matches!(builtin_scenario("static", &params(&[("m", -1.0)]), 0.0), Err(Error::YLowerBound(_))));
        assert!(matches!(builtin_scenario("nope", &params(&[]), 0.0), Err(Error::UnknownScenario(_))));
        assert!(builtin_scenario("static", &params(&[("beta", 1.2)]), 0.0).is_err());
        assert!(builtin_scenario("static", &params(&[("mass", 1.0)]), 0.0).is_err());
        assert!(builtin_scenario("static", &params(&[("y", -0.5)]), 1.0).is_ok());
        assert!(builtin_scenario("static", &params(&[("y", -0.5)]), 0.0).is_err());
        assert!(builtin_scenario("step-potential", &params(&[("v0", 1.5)]), 0.0).is_err());
    }

    #[test]
    fn gamma_dot_matches_difference_quotient() {
        let m = builtin_scenario("bump", &params(&[("amp", 0.3), ("t_width", 2.0), ("width", 3.0)]), 0.0).unwrap();
        let (t, x, h) = (0.4, 0.7, 1e-6);
        let p = m.eval(t, x, 20.0);
        let gp = m.eval(t + h, x, 20.0).gamma();
        let gm = m.eval(t - h, x, 20.0).gamma();
        assert!((p.gamma_dot() - (gp - gm) / (2.0 * h)).abs() < 1e-8);
        let ap = m.eval(t + h, x, 20.0).alpha;
        let am = m.eval(t - h, x, 20.0).alpha;
        assert!((p.alpha_dot - (ap - am) / (2.0 * h)).abs() < 1e-8);
    }
}
