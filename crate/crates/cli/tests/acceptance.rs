//! Acceptance criteria, one line each. Runs without the libtest harness so
//! the lines are always printed; exits non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use kgprop::geometry::builtin_scenario;
use kgprop::verification::{run_suite, CheckReport, SuiteConfig};

struct Criterion {
    name: &'static str,
    passed: bool,
    detail: String,
}

fn suite(name: &str, params: &[(&str, f64)]) -> Vec<CheckReport> {
    let p: BTreeMap<String, f64> = params.iter().map(|(k, v)| (k.to_string(), *v)).collect();
    let model = builtin_scenario(name, &p, 0.0).expect("scenario builds");
    let t = Instant::now();
    let reports = run_suite(&model, &SuiteConfig::reference(&model)).expect("suite runs");
    eprintln!("suite {name}: {} reports in {:.1?}", reports.len(), t.elapsed());
    reports
}

/// Reports whose id starts with one of `prefixes`.
fn select<'a>(reports: &'a [CheckReport], prefixes: &[&str]) -> Vec<&'a CheckReport> {
    reports.iter().filter(|r| prefixes.iter().any(|p| r.check_id.starts_with(p))).collect()
}

/// Every non-control report passes, every control fails effectively, and
/// at least one of each kind is present when `need_control` is set.
fn judge(name: &'static str, reports: Vec<&CheckReport>, need_control: bool) -> Criterion {
    let checks: Vec<_> = reports.iter().filter(|r| !r.control).collect();
    let controls: Vec<_> = reports.iter().filter(|r| r.control).collect();
    let bad: Vec<String> = checks
        .iter()
        .filter(|r| !r.passed)
        .map(|r| format!("{}[{}]={:.3e}", r.check_id, r.scenario_id, r.measured))
        .chain(controls.iter().filter(|r| !r.control_effective()).map(|r| format!("{} vacuous", r.check_id)))
        .collect();
    let missing = checks.is_empty() || (need_control && controls.is_empty());
    let worst = checks.iter().map(|r| r.measured).fold(f64::NEG_INFINITY, f64::max);
    let detail = if missing {
        "no reports".to_string()
    } else if bad.is_empty() {
        format!("{} checks, {} controls, worst measured {worst:.3e}", checks.len(), controls.len())
    } else {
        bad.join(", ")
    };
    Criterion { name, passed: !missing && bad.is_empty(), detail }
}

const SMALL_CONFIG: &str = r#"
[scenario]
name = "frw"

[lattice]
n_sites = 12
spacing = 1.0

[evolution]
t_start = -0.25
t_end = 0.25
steps = 64
richardson = true

[propagators]
labels = ["PJ", "ret", "adv", "F", "aF", "pos", "neg"]
tau = [0.0]
t_grid = [-0.25, 0.0, 0.25]
s_grid = [-0.25, 0.25]

[assemble]
times = [-0.25, 0.25]

[spectrum]
times = [0.0]

[verify]
families = ["relations", "residuals", "positivity", "charge", "projections"]
n_positivity = 8
n_intervals = 512

[rng]
seed = 7
"#;

fn read_dir_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .expect("output directory exists")
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect()
}

fn determinism() -> Criterion {
    let tmp = tempfile::tempdir().expect("temp dir");
    let cfg = tmp.path().join("run.toml");
    std::fs::write(&cfg, SMALL_CONFIG).unwrap();
    let mut bad = Vec::new();
    let mut files = 0;
    for cmd in ["assemble", "evolve", "propagate", "verify", "spectrum"] {
        let runs: Vec<_> = ["a", "b"]
            .iter()
            .map(|tag| {
                let out = tmp.path().join(format!("{cmd}_{tag}"));
                let status = Command::new(env!("CARGO_BIN_EXE_kgprop"))
                    .args([cmd, "--config"])
                    .arg(&cfg)
                    .arg("--out")
                    .arg(&out)
                    .output()
                    .expect("binary runs")
                    .status;
                (status.code(), read_dir_bytes(&out))
            })
            .collect();
        if runs[0].0 != Some(0) {
            bad.push(format!("{cmd} exited {:?}", runs[0].0));
        }
        if runs[0] != runs[1] {
            bad.push(format!("{cmd} outputs differ"));
        }
        files += runs[0].1.len();
    }
    Criterion {
        name: "determinism",
        passed: bad.is_empty(),
        detail: if bad.is_empty() { format!("5 commands, {files} files byte-identical") } else { bad.join(", ") },
    }
}

fn main() {
    let start = Instant::now();
    let st = suite("static", &[("m", 1.0)]);
    let frw = suite("frw", &[("a0", 1.0), ("a1", 2.0), ("rho", 1.0)]);
    let bump = suite("bump", &[("t_width", 1.0), ("y_amp", 0.3)]);
    let all: Vec<&CheckReport> = st.iter().chain(&frw).chain(&bump).collect();
    let from_all = |prefixes: &[&str]| -> Vec<&CheckReport> {
        all.iter().copied().filter(|r| prefixes.iter().any(|p| r.check_id.starts_with(p))).collect()
    };

    let oracle = select(&st, &["oracle."]);
    let mut finite = select(&st, &["finite_speed."]);
    finite.extend(select(&frw, &["finite_speed."]));
    let mut asym = select(&frw, &["asymptotic."]);
    asym.extend(select(&st, &["asymptotic.static_first_iterate"]));

    let criteria = vec![
        judge("static oracle equivalence", oracle, false),
        judge("scheme convergence orders", select(&frw, &["convergence."]), false),
        judge("group law", from_all(&["group_law"]), false),
        judge("norm bound", select(&frw, &["norm_bound."]), false),
        judge("relation web", from_all(&["relations."]), false),
        judge("bisolution and inverse residuals", from_all(&["bisolution.", "inverse."]), true),
        judge("positivity", from_all(&["positivity."]), true),
        judge("charge sign of projections", from_all(&["projection."]), false),
        judge("asymptotic projections", asym, false),
        judge("finite propagation speed", finite, true),
        determinism(),
    ];

    let mut failed = 0;
    for (i, c) in criteria.iter().enumerate() {
        println!("criterion {:>2} {:<34} {}  {}", i + 1, c.name, if c.passed { "PASS" } else { "FAIL" }, c.detail);
        failed += usize::from(!c.passed);
    }
    println!("acceptance: {} of {} criteria pass ({:.1?})", criteria.len() - failed, criteria.len(), start.elapsed());
    if failed > 0 {
        std::process::exit(1);
    }
}
