//! The five commands. Each writes its files atomically into the output
//! directory and finishes with `manifest.json`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use kgprop::discrete_operators::{verify_assumptions, AssumptionReport, OperatorSet};
use kgprop::evolution::{evolve, EvolutionGrid, LatticeProblem, StepSchedule};
use kgprop::geometry::{builtin_scenario, Lattice, ScenarioModel};
use kgprop::io::{atomic_write, fmt_f64, format_kernel, format_matrix};
use kgprop::linalg::herm_eigenvalues;
use kgprop::propagators::{freq_projection_pair, kernel_by_label, to_g_form, KernelLabel};
use kgprop::spaces::NormFamily;
use kgprop::verification::{outcome, run_suite, summary_table, CheckFamily, MetaValue, SuiteConfig};
use kgprop::Error;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::{KernelForm, RunConfig};

pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_ASSUMPTION: i32 = 3;

#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    pub fn config(message: impl Into<String>) -> Self {
        Failure { code: EXIT_CONFIG, message: message.into() }
    }
}

fn module_of(e: &Error) -> &'static str {
    match e {
        Error::UnknownScenario(_)
        | Error::InvalidParameter(_)
        | Error::YLowerBound(_)
        | Error::Timelike(_)
        | Error::InvalidLattice(_)
        | Error::FieldInvariant { .. } => "geometry",
        Error::NotPositiveDefinite { .. } | Error::LNotPositive { .. } | Error::PositiveMass { .. } => {
            "discrete_operators"
        }
        Error::Dimension(_) | Error::NonFinite(_) | Error::Numerical(_) => "linalg",
        Error::Window(_) | Error::Endpoints(_) => "evolution",
        Error::NoConvergence { .. } => "propagators",
        Error::InvalidArgument(_) => "arguments",
        Error::Io(_) | Error::Format(_) => "io",
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = if e.is_assumption_violation() {
            EXIT_ASSUMPTION
        } else {
            match e {
                Error::UnknownScenario(_)
                | Error::InvalidParameter(_)
                | Error::InvalidLattice(_)
                | Error::Window(_)
                | Error::Endpoints(_)
                | Error::InvalidArgument(_) => EXIT_CONFIG,
                _ => EXIT_INTERNAL,
            }
        };
        Failure { code, message: format!("[{}] {e}", module_of(&e)) }
    }
}

type CmdResult = Result<(), Failure>;

/// Output directory, config hash and the files written so far.
pub struct Ctx {
    pub cfg: RunConfig,
    pub hash: String,
    pub out: PathBuf,
    files: BTreeMap<String, String>,
}

impl Ctx {
    pub fn new(cfg: RunConfig, out: PathBuf) -> Result<Self, Failure> {
        std::fs::create_dir_all(&out)
            .map_err(|e| Failure { code: EXIT_INTERNAL, message: format!("{}: {e}", out.display()) })?;
        let hash = cfg.hash();
        Ok(Ctx { cfg, hash, out, files: BTreeMap::new() })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), Failure> {
        atomic_write(&self.out.join(name), bytes)?;
        let digest: String = Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect();
        self.files.insert(name.to_string(), digest);
        Ok(())
    }

    fn write_json(&mut self, name: &str, v: &impl Serialize) -> Result<(), Failure> {
        let mut s =
            serde_json::to_string_pretty(v).map_err(|e| Failure { code: EXIT_INTERNAL, message: e.to_string() })?;
        s.push('\n');
        self.write(name, s.as_bytes())
    }

    fn header(&self) -> String {
        format!("# config-hash {}\n", self.hash)
    }

    fn manifest(&mut self, command: &str, extra: Value) -> Result<(), Failure> {
        let m = json!({
            "command": command,
            "config_hash": self.hash,
            "scenario": self.cfg.scenario.name,
            "seed": self.cfg.rng.seed,
            "files": self.files,
            "details": extra,
        });
        self.write_json("manifest.json", &m)
    }

    fn model(&self) -> Result<ScenarioModel, Error> {
        builtin_scenario(&self.cfg.scenario.name, &self.cfg.params, self.cfg.scenario.mass_shift)
    }

    fn lattice(&self) -> Result<Lattice, Error> {
        Lattice::new(self.cfg.lattice.n_sites, self.cfg.lattice.spacing)
    }

    fn window(&self) -> (f64, f64) {
        (self.cfg.evolution.t_start, self.cfg.evolution.t_end)
    }
}

pub fn assemble(ctx: &mut Ctx) -> CmdResult {
    let times = ctx.cfg.assemble_times();
    let lo = times.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = times.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let built = ctx.model().and_then(|m| Ok((m, ctx.lattice()?)));
    let (model, lattice) = match built {
        Ok(x) => x,
        Err(e) if e.is_assumption_violation() => {
            let report = AssumptionReport::unavailable(&times, e.to_string());
            ctx.write_json("assumptions.json", &json!({ "config_hash": ctx.hash, "report": report }))?;
            ctx.manifest("assemble", json!({ "times": times, "assumptions_hold": false }))?;
            return Err(e.into());
        }
        Err(e) => return Err(e.into()),
    };
    let mut ops = Vec::new();
    let mut violation = None;
    let mut summary = ctx.header() + "time,min_eig_l,max_eig_l,a_bound,assumption_ok\n";
    for (k, &t) in times.iter().enumerate() {
        let o = match OperatorSet::assemble(&model, &lattice, t) {
            Ok(o) => o,
            Err(e) if e.is_assumption_violation() => {
                violation = Some(e);
                break;
            }
            Err(e) => return Err(e.into()),
        };
        for (name, m) in [("L", &o.l), ("W", &o.w), ("B", &o.b), ("H", &o.h), ("S_dual", &o.s_dual)] {
            let text = format_matrix(m, t, name, &ctx.hash)?;
            ctx.write(&format!("{name}_t{k}.csv"), text.as_bytes())?;
        }
        let eigs = herm_eigenvalues(&o.l)?;
        let _ = writeln!(
            summary,
            "{},{},{},{},{}",
            fmt_f64(t),
            fmt_f64(o.min_eig_l),
            fmt_f64(*eigs.last().unwrap_or(&f64::NAN)),
            fmt_f64(o.a_bound),
            o.assumption_ok
        );
        ops.push(o);
    }
    let mut report = if ops.is_empty() {
        AssumptionReport::unavailable(&times, "no operator set could be assembled".into())
    } else {
        verify_assumptions(&ops, (lo, hi))
    };
    if let Some(e) = &violation {
        report.instantaneous_ok = false;
        report.adiabatic_ok = false;
        report.notes.push(e.to_string());
    }
    ctx.write("eigen_summary.csv", summary.as_bytes())?;
    ctx.write_json("assumptions.json", &json!({ "config_hash": ctx.hash, "report": report }))?;
    ctx.manifest("assemble", json!({ "times": times, "assumptions_hold": report.instantaneous_ok }))?;
    match violation {
        Some(e) => Err(e.into()),
        None if !report.instantaneous_ok => Err(Failure {
            code: EXIT_ASSUMPTION,
            message: format!("[discrete_operators] positivity assumptions fail: {}", report.notes.join("; ")),
        }),
        None => Ok(()),
    }
}

pub fn evolve_cmd(ctx: &mut Ctx) -> CmdResult {
    let ev = ctx.cfg.evolution.clone();
    let prob = LatticeProblem::new(ctx.model()?, ctx.lattice()?);
    let sched = StepSchedule::new(ev.t_start, ev.t_end, ev.steps, ev.sampling)?;
    let u = evolve(&prob, &sched, ev.richardson)?;
    let text = format_matrix(&u.u, ev.t_end, "U", &ctx.hash)?;
    ctx.write("U.csv", text.as_bytes())?;
    let mut details = json!({
        "t_start": ev.t_start,
        "t_end": ev.t_end,
        "steps": ev.steps,
        "sampling": ev.sampling,
        "richardson": ev.richardson,
    });
    if let Some(err) = u.richardson_error {
        details["richardson_error"] = json!(err);
    }
    ctx.manifest("evolve", details)
}

fn check_in_window(what: &str, ts: &[f64], (a, b): (f64, f64)) -> Result<(), Failure> {
    let (lo, hi) = (a.min(b), a.max(b));
    let slack = 1e-12 * (hi - lo).abs().max(1.0);
    match ts.iter().find(|&&t| !(t >= lo - slack && t <= hi + slack)) {
        Some(t) => Err(Failure::config(format!("[evolution] {what} time {t} lies outside the window [{lo}, {hi}]"))),
        None => Ok(()),
    }
}

pub fn propagate(ctx: &mut Ctx) -> CmdResult {
    let pc = ctx.cfg.propagators.clone();
    let ev = ctx.cfg.evolution.clone();
    let window = ctx.window();
    if !(ev.t_end > ev.t_start) {
        return Err(Failure::config("[evolution] propagate needs t_end > t_start"));
    }
    let labels = pc.labels.iter().map(|s| KernelLabel::parse(s)).collect::<Result<Vec<_>, _>>()?;
    let mid = 0.5 * (window.0 + window.1);
    let t_grid = if pc.t_grid.is_empty() { vec![window.0, mid, window.1] } else { pc.t_grid.clone() };
    let s_grid = if pc.s_grid.is_empty() { t_grid.clone() } else { pc.s_grid.clone() };
    check_in_window("t_grid", &t_grid, window)?;
    check_in_window("s_grid", &s_grid, window)?;
    check_in_window("tau", &pc.tau, window)?;
    if labels.iter().any(|l| l.is_non_classical()) && pc.tau.is_empty() {
        return Err(Failure::config("[propagators] non-classical labels need `tau`"));
    }
    let model = ctx.model()?;
    let lattice = ctx.lattice()?;
    let prob = LatticeProblem::new(model.clone(), lattice);

    let mut times: Vec<f64> = [window.0, window.1].into_iter().chain(t_grid.iter().copied()).collect();
    times.extend(s_grid.iter().copied());
    times.extend(pc.tau.iter().copied());
    times.sort_by(f64::total_cmp);
    times.dedup();
    let h = (window.1 - window.0) / ev.steps as f64;
    let widest = times.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    let substeps = ((widest / h).ceil() as usize).max(1);
    let grid = EvolutionGrid::build(&prob, &times, substeps, ev.sampling)?;

    let mut projections = Vec::new();
    for &tau in &pc.tau {
        let ops = OperatorSet::assemble(&model, &lattice, tau)?;
        let fam = NormFamily::build_with(&ops, &[])?;
        projections.push(freq_projection_pair(&ops, &fam)?);
    }
    let mut entries = Vec::new();
    for &label in &labels {
        let jobs: Vec<(String, Option<usize>)> = if label.is_non_classical() {
            (0..pc.tau.len()).map(|k| (format!("kernel_{}_tau{k}.csv", label.name()), Some(k))).collect()
        } else {
            vec![(format!("kernel_{}.csv", label.name()), None)]
        };
        for (file, k) in jobs {
            let pair = k.map(|k| (&projections[k].0, &projections[k].1));
            let e = kernel_by_label(label, &grid, pair)?;
            let kernel = match pc.form {
                KernelForm::E => e,
                KernelForm::G => to_g_form(&e, &model, &lattice)?,
            };
            let text = format_kernel(&kernel, &t_grid, &s_grid, &ctx.hash)?;
            ctx.write(&file, text.as_bytes())?;
            entries.push(json!({
                "file": file,
                "label": label,
                "form": pc.form,
                "tau_ref": k.map(|k| pc.tau[k].to_string()).unwrap_or_else(|| "none".into()),
            }));
        }
    }
    ctx.manifest(
        "propagate",
        json!({
            "kernels": entries,
            "grid_times": times,
            "substeps": substeps,
            "sampling": ev.sampling,
            "quadrature": "composite trapezoid on the evolution grid",
            "tolerances": { "time_match": 1e-12 },
        }),
    )
}

pub fn verify(ctx: &mut Ctx) -> CmdResult {
    let model = ctx.model()?;
    let c = &ctx.cfg;
    let mut suite = SuiteConfig::reference(&model);
    suite.n_sites = c.lattice.n_sites;
    suite.spacing = c.lattice.spacing;
    suite.n_intervals = c.verify.n_intervals.unwrap_or(c.evolution.steps);
    suite.sampling = c.evolution.sampling;
    suite.seed = c.rng.seed;
    suite.n_sources = c.verify.n_sources;
    suite.n_positivity = c.verify.n_positivity;
    if let Some([a, b]) = c.verify.window {
        suite.window = (a, b);
    }
    if let Some(f) = &c.verify.families {
        suite.families = f.clone();
    }
    let mut reports = run_suite(&model, &suite)?;
    let mut lines = String::new();
    for r in &mut reports {
        r.metadata.insert("config_hash".into(), MetaValue::Text(ctx.hash.clone()));
        lines += &serde_json::to_string(r).map_err(|e| Failure { code: EXIT_INTERNAL, message: e.to_string() })?;
        lines.push('\n');
    }
    ctx.write("reports.jsonl", lines.as_bytes())?;
    let table = ctx.header() + &summary_table(&reports);
    ctx.write("summary.txt", table.as_bytes())?;
    let o = outcome(&reports);
    let failed: Vec<&str> = reports.iter().filter(|r| !r.control && !r.passed).map(|r| r.check_id.as_str()).collect();
    let families: Vec<&str> = suite.families.iter().map(|f: &CheckFamily| f.name()).collect();
    ctx.manifest(
        "verify",
        json!({
            "reports": reports.len(),
            "checks_passed": o.checks_passed,
            "controls_effective": o.controls_effective,
            "failed": failed,
            "families": families,
            "window": [suite.window.0, suite.window.1],
            "n_intervals": suite.n_intervals,
        }),
    )?;
    print!("{table}");
    if o.checks_passed {
        Ok(())
    } else {
        Err(Failure { code: EXIT_INTERNAL, message: format!("[verification] failed checks: {}", failed.join(", ")) })
    }
}

pub fn spectrum(ctx: &mut Ctx) -> CmdResult {
    let model = ctx.model()?;
    let lattice = ctx.lattice()?;
    let times = ctx.cfg.spectrum_times();
    let mut s = ctx.header() + "time,operator,index,value\n";
    let mut gaps = Vec::new();
    for &t in &times {
        let ops = OperatorSet::assemble(&model, &lattice, t)?;
        let fam = NormFamily::build_with(&ops, &[])?;
        for (k, v) in herm_eigenvalues(&ops.l)?.iter().enumerate() {
            let _ = writeln!(s, "{},L,{k},{}", fmt_f64(t), fmt_f64(*v));
        }
        let b = &fam.b_tilde_eig.values;
        for (k, v) in b.iter().enumerate() {
            let _ = writeln!(s, "{},B,{k},{}", fmt_f64(t), fmt_f64(*v));
        }
        gaps.push(b.iter().map(|x| x.abs()).fold(f64::INFINITY, f64::min));
    }
    ctx.write("spectrum.csv", s.as_bytes())?;
    ctx.manifest("spectrum", json!({ "times": times, "spectral_gap": gaps }))
}
