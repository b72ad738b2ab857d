//! Run configuration read from TOML. Unknown keys are rejected.

use std::collections::BTreeMap;
use std::path::Path;

use kgprop::evolution::Sampling;
use kgprop::rng::DEFAULT_SEED;
use kgprop::verification::CheckFamily;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: ScenarioSection,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    pub lattice: LatticeSection,
    #[serde(default)]
    pub evolution: EvolutionSection,
    #[serde(default)]
    pub propagators: PropagatorSection,
    #[serde(default)]
    pub assemble: TimesSection,
    #[serde(default)]
    pub spectrum: TimesSection,
    #[serde(default)]
    pub verify: VerifySection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub rng: RngSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    pub name: String,
    /// Constant `b >= 0` added to `L`.
    #[serde(default)]
    pub mass_shift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeSection {
    pub n_sites: usize,
    pub spacing: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvolutionSection {
    pub t_start: f64,
    pub t_end: f64,
    pub steps: usize,
    pub sampling: Sampling,
    pub richardson: bool,
}

impl Default for EvolutionSection {
    fn default() -> Self {
        EvolutionSection { t_start: 0.0, t_end: 1.0, steps: 1024, sampling: Sampling::Midpoint, richardson: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelForm {
    E,
    G,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PropagatorSection {
    pub labels: Vec<String>,
    /// Reference times of the frequency projections.
    pub tau: Vec<f64>,
    pub t_grid: Vec<f64>,
    pub s_grid: Vec<f64>,
    pub form: KernelForm,
}

impl Default for PropagatorSection {
    fn default() -> Self {
        PropagatorSection {
            labels: vec!["PJ".into(), "ret".into(), "adv".into()],
            tau: Vec::new(),
            t_grid: Vec::new(),
            s_grid: Vec::new(),
            form: KernelForm::G,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimesSection {
    /// Defaults to `evolution.t_start`.
    pub times: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySection {
    /// All families when absent.
    pub families: Option<Vec<CheckFamily>>,
    /// Propagator window; a scenario-dependent default when absent.
    pub window: Option<[f64; 2]>,
    /// Defaults to `evolution.steps`.
    pub n_intervals: Option<usize>,
    pub n_sources: usize,
    pub n_positivity: usize,
}

impl Default for VerifySection {
    fn default() -> Self {
        VerifySection { families: None, window: None, n_intervals: None, n_sources: 4, n_positivity: 64 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RngSection {
    pub seed: u64,
}

impl Default for RngSection {
    fn default() -> Self {
        RngSection { seed: DEFAULT_SEED }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::parse(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    /// SHA-256 over the canonical JSON form of every key except the
    /// output directory.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output.dir = None;
        let json = serde_json::to_vec(&c).expect("config serializes");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn assemble_times(&self) -> Vec<f64> {
        self.assemble.times.clone().unwrap_or_else(|| vec![self.evolution.t_start])
    }

    pub fn spectrum_times(&self) -> Vec<f64> {
        self.spectrum.times.clone().unwrap_or_else(|| vec![self.evolution.t_start])
    }
}
