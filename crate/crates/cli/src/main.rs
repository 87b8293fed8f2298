//! Command-line front end: threshold calibration, bound tables, experiment
//! runs and received-tensor dumps.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use isac_core::detect::{calibrate_beta, fwer_monte_carlo, fwer_theoretical};
use isac_core::harness::pipeline::{draw_realization, mean_bounds};
use isac_core::harness::{run_all, ExperimentConfig, ExperimentKind};
use isac_core::par::ExecMode;

#[derive(Parser)]
#[command(name = "isac", version, about = "Interference-aware OFDM radar sensing toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Threshold β* whose familywise error rate equals δ.
    Calibrate {
        #[arg(long)]
        delta: f64,
        /// Gamma shape, T·N_u for subcarrier statistics.
        #[arg(long)]
        shape: f64,
        /// Number of tested statistics.
        #[arg(long)]
        n: usize,
        /// Also estimate the FWER at β* by Monte Carlo.
        #[arg(long)]
        mc_check: bool,
        #[arg(long, default_value_t = 100_000)]
        mc_draws: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Delay and angle error bounds averaged over random allocations.
    Crlb {
        #[arg(long)]
        config: PathBuf,
        /// Overlapping subcarriers between the rUE and the iUE.
        #[arg(long)]
        overlap: usize,
        /// rUE transmit powers in W, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        e0: Vec<f64>,
        /// iUE transmit power in W; defaults to `rmse_e1` of the config.
        #[arg(long)]
        e1: Option<f64>,
        /// Realizations per power; defaults to `crlb_realizations`.
        #[arg(long)]
        realizations: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Monte Carlo experiments.
    Harness {
        #[command(subcommand)]
        action: HarnessAction,
    },
    /// Draws one received tensor and writes its binary dump.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        overlap: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Subcommand)]
enum HarnessAction {
    Run {
        #[arg(long, value_enum)]
        experiment: Which,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides every trial count of the config.
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Run trials on the calling thread only.
        #[arg(long)]
        sequential: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Which {
    Beta,
    Fwer,
    Power,
    Rmse,
    All,
}

impl Which {
    fn kinds(self) -> Vec<ExperimentKind> {
        match self {
            Which::Beta => vec![ExperimentKind::BetaSweep],
            Which::Fwer => vec![ExperimentKind::FwerVsOverlap],
            Which::Power => vec![ExperimentKind::DetectionPower],
            Which::Rmse => vec![ExperimentKind::RmseSweep],
            Which::All => ExperimentKind::ALL.to_vec(),
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<bool> {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match cli.command {
        Command::Calibrate { delta, shape, n, mc_check, mc_draws, seed } => {
            let beta = calibrate_beta(delta, shape, n)?;
            let fwer = fwer_theoretical(beta, shape, n)?;
            if mc_check {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let (mc, se) = fwer_monte_carlo(beta, shape, n, 1.0, mc_draws, &mut rng)?;
                writeln!(out, "delta,shape,n,beta,fwer,mc_fwer,mc_se,mc_draws")?;
                writeln!(out, "{delta},{shape},{n},{beta},{fwer},{mc},{se},{mc_draws}")?;
            } else {
                writeln!(out, "delta,shape,n,beta,fwer")?;
                writeln!(out, "{delta},{shape},{n},{beta},{fwer}")?;
            }
            Ok(true)
        }
        Command::Crlb { config, overlap, e0, e1, realizations, seed } => {
            let cfg = load(&config)?;
            if cfg.scenario.num_iues() != 1 {
                bail!("the bound table draws single-iUE allocations");
            }
            let h = &cfg.harness;
            let e1 = e1.unwrap_or(h.rmse_e1);
            let reps = realizations.unwrap_or(h.crlb_realizations);
            let names = target_names(&cfg);
            writeln!(out, "E_0,target,DEB_clean,DEB_all,AEB_clean,AEB_all")?;
            for (p, &power) in e0.iter().enumerate() {
                let point_seed = seed.wrapping_add(p as u64);
                let (b, _) = mean_bounds(
                    &cfg.scenario,
                    &[power, e1],
                    h.rue_subcarriers,
                    h.iue_subcarriers,
                    overlap,
                    reps,
                    point_seed,
                    ExecMode::Parallel,
                )?;
                for (l, name) in names.iter().enumerate() {
                    writeln!(
                        out,
                        "{power},{name},{:e},{:e},{:e},{:e}",
                        b.deb_clean[l], b.deb_all[l], b.aeb_clean[l], b.aeb_all[l]
                    )?;
                }
            }
            Ok(true)
        }
        Command::Harness { action: HarnessAction::Run { experiment, config, out: dir, trials, seed, sequential } } => {
            let mut cfg = load(&config)?;
            if let Some(n) = trials {
                cfg.harness = cfg.harness.with_trials(n);
            }
            let mode = if sequential { ExecMode::Sequential } else { ExecMode::Parallel };
            let manifest = run_all(&cfg, &experiment.kinds(), &dir, seed, mode)?;
            for a in &manifest.assertions {
                let tag = if a.passed { "PASS" } else { "FAIL" };
                writeln!(out, "{tag} [{}] {}: {}", a.experiment, a.name, a.detail)?;
            }
            let failed = manifest.assertions.iter().filter(|a| !a.passed).count();
            writeln!(out, "{} assertions, {failed} failed; output in {}", manifest.assertions.len(), dir.display())?;
            Ok(manifest.passed)
        }
        Command::Simulate { config, out: path, overlap, seed } => {
            let cfg = load(&config)?;
            let h = &cfg.harness;
            let r = draw_realization(
                &cfg.scenario,
                &cfg.scenario.tx_power_w,
                h.rue_subcarriers,
                h.iue_subcarriers,
                overlap,
                seed,
            )?;
            let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
            let mut w = BufWriter::new(file);
            r.y.write_dump(&r.alloc, &mut w)?;
            w.flush()?;
            writeln!(
                out,
                "wrote {}: {} rUE resources, {} interfered",
                path.display(),
                r.alloc.used_set(0).len(),
                r.alloc.interfered_set().len()
            )?;
            Ok(true)
        }
    }
}

fn load(path: &PathBuf) -> Result<ExperimentConfig> {
    ExperimentConfig::from_toml_file(path).with_context(|| format!("loading {}", path.display()))
}

fn target_names(cfg: &ExperimentConfig) -> Vec<String> {
    let o = cfg.scenario.num_iues();
    (0..cfg.scenario.num_objects())
        .map(|l| if l < o { format!("iue{}", l + 1) } else { format!("sp{}", l - o + 1) })
        .collect()
}
