//! Monte Carlo experiment driver.
//!
//! Four experiments: false-alarm rate against the threshold under the global
//! null, false-alarm rate against the number of overlapping subcarriers,
//! detection rate against interference power, and delay/angle RMSE of the
//! naïve, oracle and proposed estimators next to the Cramér–Rao bounds.
//!
//! Every trial draws its own allocation, phases, symbols and noise from a
//! seed derived from (master seed, sweep point, trial index), so results do
//! not depend on scheduling.

mod experiments;
pub mod pipeline;
mod table;

pub use experiments::{run_beta_sweep, run_detection_power, run_fwer_vs_overlap, run_rmse_sweep};
pub use table::{ResultRow, ResultTable};

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::par::ExecMode;
use crate::scenario::ScenarioConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ExperimentKind {
    BetaSweep,
    FwerVsOverlap,
    DetectionPower,
    RmseSweep,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 4] = [
        ExperimentKind::BetaSweep,
        ExperimentKind::FwerVsOverlap,
        ExperimentKind::DetectionPower,
        ExperimentKind::RmseSweep,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::BetaSweep => "beta",
            ExperimentKind::FwerVsOverlap => "fwer",
            ExperimentKind::DetectionPower => "power",
            ExperimentKind::RmseSweep => "rmse",
        }
    }

    /// Output file name.
    pub fn file_name(self) -> &'static str {
        match self {
            ExperimentKind::BetaSweep => "fig2_beta.csv",
            ExperimentKind::FwerVsOverlap => "fig3_fwer.csv",
            ExperimentKind::DetectionPower => "fig4_power.csv",
            ExperimentKind::RmseSweep => "fig5_rmse.csv",
        }
    }

    fn stream(self) -> u64 {
        match self {
            ExperimentKind::BetaSweep => 1,
            ExperimentKind::FwerVsOverlap => 2,
            ExperimentKind::DetectionPower => 3,
            ExperimentKind::RmseSweep => 4,
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ExperimentKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown experiment {s:?}")))
    }
}

/// Sweep grids, trial counts and pass criteria. Loaded from the `[harness]`
/// table of an experiment config; every key is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarnessSettings {
    pub rue_subcarriers: usize,
    pub iue_subcarriers: usize,
    pub kappa: usize,

    pub fwer_trials: usize,
    pub beta_grid: Vec<f64>,
    pub fwer_deltas: Vec<f64>,
    pub fwer_overlaps: Vec<usize>,

    pub power_trials: usize,
    pub power_delta: f64,
    pub power_e0: f64,
    pub power_overlap: usize,
    pub power_e1_grid: Vec<f64>,
    /// E_1 at which the detection rate must exceed `power_min_rate`.
    pub power_check_e1: f64,
    pub power_min_rate: f64,

    pub rmse_trials: usize,
    pub rmse_delta: f64,
    pub rmse_e1: f64,
    pub rmse_e0_grid: Vec<f64>,
    pub rmse_overlap: usize,
    pub rmse_overlap_grid: Vec<usize>,
    pub rmse_overlap_e0: f64,
    /// Trials (the first ones) whose realizations are averaged into the bounds.
    pub crlb_realizations: usize,
    /// RMSE must lie within `bound_factor` × bound for E_0 ≥ `bound_check_e0`.
    pub bound_factor: f64,
    pub bound_check_e0: f64,
    pub ratio_band: [f64; 2],
    /// Required naïve/proposed RMSE ratio at `naive_check_e0`, overlap `rmse_overlap`.
    pub naive_factor: f64,
    pub naive_check_e0: f64,
}

impl Default for HarnessSettings {
    fn default() -> Self {
        Self {
            rue_subcarriers: 32,
            iue_subcarriers: 32,
            kappa: 1,
            fwer_trials: 2000,
            beta_grid: vec![1.0, 1.1, 1.2, 1.3, 1.4, 1.45, 1.5, 1.55, 1.561, 1.6, 1.65, 1.7, 1.8, 2.0],
            fwer_deltas: vec![0.1, 0.01],
            fwer_overlaps: vec![0, 2, 4, 8, 12, 16],
            power_trials: 1250,
            power_delta: 1e-3,
            power_e0: 0.05,
            power_overlap: 8,
            power_e1_grid: vec![0.0, 1e-4, 2e-4, 5e-4, 1e-3, 2e-3, 5e-3, 1e-2, 2e-2, 5e-2],
            power_check_e1: 0.05,
            power_min_rate: 0.99,
            rmse_trials: 500,
            rmse_delta: 1e-3,
            rmse_e1: 0.05,
            rmse_e0_grid: (1..=10).map(|k| k as f64 / 100.0).collect(),
            rmse_overlap: 8,
            rmse_overlap_grid: vec![0, 2, 4, 8, 12, 16],
            rmse_overlap_e0: 0.1,
            crlb_realizations: 50,
            bound_factor: 1.5,
            bound_check_e0: 0.06,
            ratio_band: [0.8, 1.25],
            naive_factor: 3.0,
            naive_check_e0: 0.1,
        }
    }
}

impl HarnessSettings {
    /// Replaces every trial count by `n`.
    pub fn with_trials(mut self, n: usize) -> Self {
        self.fwer_trials = n;
        self.power_trials = n;
        self.rmse_trials = n;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.fwer_trials == 0 || self.power_trials == 0 || self.rmse_trials == 0 {
            return bad("trial counts must be at least 1");
        }
        if self.beta_grid.is_empty()
            || self.fwer_deltas.is_empty()
            || self.fwer_overlaps.is_empty()
            || self.power_e1_grid.is_empty()
            || (self.rmse_e0_grid.is_empty() && self.rmse_overlap_grid.is_empty())
        {
            return bad("sweep grids must be nonempty");
        }
        if self.beta_grid.iter().any(|&b| !(b >= 1.0)) {
            return bad("beta values must be >= 1");
        }
        let deltas = self.fwer_deltas.iter().chain([&self.power_delta, &self.rmse_delta]);
        if deltas.clone().any(|&d| !(d > 0.0 && d < 1.0)) {
            return bad("delta values must lie in (0, 1)");
        }
        if self.kappa != 1 {
            return bad("calibrated thresholds require kappa = 1");
        }
        Ok(())
    }
}

/// Scenario plus harness settings, as read from one TOML file: scenario
/// keys at the top level, harness keys under `[harness]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(flatten)]
    pub scenario: ScenarioConfig,
    #[serde(default)]
    pub harness: HarnessSettings,
}

impl ExperimentConfig {
    pub fn reference() -> Self {
        Self {
            scenario: ScenarioConfig::reference(),
            harness: HarnessSettings::default(),
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s)?;
        cfg.scenario.validate()?;
        cfg.harness.validate()?;
        Ok(cfg)
    }

    pub fn from_toml_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    /// SHA-256 over the canonical serialization of the parsed config.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.scenario.to_toml_string().as_bytes());
        h.update(toml::to_string(&self.harness).expect("settings serialize").as_bytes());
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// One experiment run.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub scenario: ScenarioConfig,
    pub settings: HarnessSettings,
    pub seed: u64,
    pub mode: ExecMode,
}

impl ExperimentSpec {
    pub fn new(kind: ExperimentKind, config: &ExperimentConfig, seed: u64) -> Self {
        Self {
            kind,
            scenario: config.scenario.clone(),
            settings: config.harness.clone(),
            seed,
            mode: ExecMode::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.settings.validate()?;
        if self.scenario.num_iues() != 1 {
            return Err(Error::InvalidConfig(
                "the experiments draw single-iUE allocations".into(),
            ));
        }
        Ok(())
    }
}

/// A hard pass/fail check attached to an experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Assertion {
    pub experiment: String,
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub kind: ExperimentKind,
    pub table: ResultTable,
    pub assertions: Vec<Assertion>,
}

impl ExperimentOutput {
    pub fn passed(&self) -> bool {
        self.assertions.iter().all(|a| a.passed)
    }
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    spec.validate()?;
    match spec.kind {
        ExperimentKind::BetaSweep => run_beta_sweep(spec),
        ExperimentKind::FwerVsOverlap => run_fwer_vs_overlap(spec),
        ExperimentKind::DetectionPower => run_detection_power(spec),
        ExperimentKind::RmseSweep => run_rmse_sweep(spec),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub version: String,
    pub seed: u64,
    pub config_sha256: String,
    pub experiments: Vec<String>,
    pub files: Vec<String>,
    pub trials: TrialCounts,
    pub assertions: Vec<Assertion>,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrialCounts {
    pub fwer: usize,
    pub power: usize,
    pub rmse: usize,
}

/// `git describe` of the working tree when available, else the crate version.
pub fn version_string() -> String {
    let pkg = env!("CARGO_PKG_VERSION");
    let git = std::process::Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .current_dir(env!("CARGO_MANIFEST_DIR"))
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty());
    match git {
        Some(g) => format!("{pkg}+{g}"),
        None => pkg.to_string(),
    }
}

/// Runs `kinds` in order, writes one CSV per experiment and `manifest.json`
/// into `out_dir`, and returns the manifest.
pub fn run_all(
    config: &ExperimentConfig,
    kinds: &[ExperimentKind],
    out_dir: impl AsRef<Path>,
    seed: u64,
    mode: ExecMode,
) -> Result<Manifest> {
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir)?;
    let mut files = Vec::new();
    let mut assertions = Vec::new();
    for &kind in kinds {
        let mut spec = ExperimentSpec::new(kind, config, seed);
        spec.mode = mode;
        let out = run_experiment(&spec)?;
        out.table.write_csv(out_dir.join(kind.file_name()))?;
        files.push(kind.file_name().to_string());
        assertions.extend(out.assertions);
    }
    let manifest = Manifest {
        version: version_string(),
        seed,
        config_sha256: config.hash(),
        experiments: kinds.iter().map(|k| k.name().to_string()).collect(),
        files,
        trials: TrialCounts {
            fwer: config.harness.fwer_trials,
            power: config.harness.power_trials,
            rmse: config.harness.rmse_trials,
        },
        passed: assertions.iter().all(|a| a.passed),
        assertions,
    };
    let json = serde_json::to_string_pretty(&manifest)?;
    std::fs::write(out_dir.join("manifest.json"), json + "\n")?;
    Ok(manifest)
}
