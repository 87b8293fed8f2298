//! One Monte Carlo trial: draw a realization, detect, estimate.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::crlb::{crlb, SignalModel};
use crate::detect::{detect_interference, BetaCache, DetectionConfig, DetectionResult};
use crate::estimate::{associate, music_estimate, omp_estimate, AngleSpectrum, DelayAngle, GridConfig};
use crate::scenario::{derive_channel_params, ChannelParams, ScenarioConfig};
use crate::waveform::{
    allocate_resources, synthesize_received, synthesize_transmit, ReceivedTensor, ResourceAllocation, ResourceSet,
    TransmitGrid,
};
use crate::par::{derive_seed, map_indexed, ExecMode};
use crate::{Error, Result};

/// Everything random about one trial.
#[derive(Debug, Clone)]
pub struct Realization {
    pub alloc: ResourceAllocation,
    /// Phase-referenced channel parameters.
    pub params: ChannelParams,
    pub tx: TransmitGrid,
    pub y: ReceivedTensor,
}

/// Draws allocation, path phases, transmit symbols and noise, in that order.
pub fn draw_realization(
    cfg: &ScenarioConfig,
    powers: &[f64],
    n_rue: usize,
    n_iue: usize,
    overlap: usize,
    seed: u64,
) -> Result<Realization> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let alloc = allocate_resources(cfg.num_subcarriers, cfg.num_symbols, n_rue, n_iue, overlap, &mut rng)?;
    let params = derive_channel_params(cfg, &mut rng)?;
    let tx = synthesize_transmit(&alloc, powers, cfg.num_antennas, &mut rng)?;
    let y = synthesize_received(&params, &tx, &alloc, cfg.noise_power_w, cfg.subcarrier_spacing_hz, &mut rng);
    Ok(Realization {
        alloc,
        params: params.phase_referenced(),
        tx,
        y,
    })
}

pub fn truth(params: &ChannelParams) -> Vec<DelayAngle> {
    params
        .toa
        .iter()
        .zip(&params.aoa)
        .map(|(&delay, &angle)| DelayAngle { delay, angle })
        .collect()
}

/// Final estimates of the three methods; `None` marks a failed trial.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodEstimates {
    pub naive: Option<Vec<DelayAngle>>,
    pub oracle: Option<Vec<DelayAngle>>,
    pub proposed: Option<Vec<DelayAngle>>,
    /// Whether the detector recovered the clean set exactly.
    pub clean_set_exact: bool,
}

/// MUSIC on `Ω^(0)`, OMP on `resources`, then association.
pub fn fused_estimate(
    r: &Realization,
    spectrum: &AngleSpectrum,
    resources: &ResourceSet,
    num_targets: usize,
    grid: &GridConfig,
    delta_f: f64,
) -> Result<Vec<DelayAngle>> {
    let omp = omp_estimate(&r.y, &r.tx, resources, num_targets, grid, delta_f)?;
    Ok(associate(&omp.pairs, &spectrum.peaks)?.estimates())
}

/// Naïve: OMP on every used resource. Oracle: the full pipeline on the true
/// clean set. Proposed: the full pipeline on the detected clean set.
pub fn run_methods(
    r: &Realization,
    detection: &DetectionResult,
    num_targets: usize,
    grid: &GridConfig,
    delta_f: f64,
) -> MethodEstimates {
    let used = r.alloc.used_set(0);
    let clean = r.alloc.clean_set();
    let naive = omp_estimate(&r.y, &r.tx, &used, num_targets, grid, delta_f)
        .ok()
        .map(|o| o.pairs);
    let exact = detection.clean_set == clean;
    let (oracle, proposed) = match music_estimate(&r.y, &used, num_targets, grid) {
        Err(_) => (None, None),
        Ok(spectrum) => {
            let oracle = fused_estimate(r, &spectrum, &clean, num_targets, grid, delta_f).ok();
            let proposed = if exact {
                oracle.clone()
            } else {
                fused_estimate(r, &spectrum, &detection.clean_set, num_targets, grid, delta_f).ok()
            };
            (oracle, proposed)
        }
    };
    MethodEstimates {
        naive,
        oracle,
        proposed,
        clean_set_exact: exact,
    }
}

/// DEB and AEB over `Ω^(0)` and over `Ω` for this realization.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialBounds {
    pub deb_all: Vec<f64>,
    pub aeb_all: Vec<f64>,
    pub deb_clean: Vec<f64>,
    pub aeb_clean: Vec<f64>,
}

pub fn trial_bounds(r: &Realization, cfg: &ScenarioConfig) -> Result<TrialBounds> {
    let model = SignalModel::new(r.params.clone(), &r.alloc, &r.tx, cfg.noise_power_w, cfg.subcarrier_spacing_hz)?;
    let all = crlb(&model, &r.alloc.used_set(0))?;
    let clean = crlb(&model, &r.alloc.clean_set())?;
    Ok(TrialBounds {
        deb_all: all.deb,
        aeb_all: all.aeb,
        deb_clean: clean.deb,
        aeb_clean: clean.aeb,
    })
}

pub fn detect(r: &Realization, config: &DetectionConfig, cache: &BetaCache) -> Result<DetectionResult> {
    detect_interference(&r.y, &r.alloc, config, cache)
}

/// Bounds averaged over `realizations` independent draws at the given
/// powers and overlap; draws whose FIM is singular are skipped. Returns the
/// average and the number of draws that contributed.
#[allow(clippy::too_many_arguments)]
pub fn mean_bounds(
    cfg: &ScenarioConfig,
    powers: &[f64],
    n_rue: usize,
    n_iue: usize,
    overlap: usize,
    realizations: usize,
    seed: u64,
    mode: ExecMode,
) -> Result<(TrialBounds, usize)> {
    let draws = map_indexed(realizations, mode, |i| {
        let r = draw_realization(cfg, powers, n_rue, n_iue, overlap, derive_seed(seed, overlap as u64, i as u64))?;
        Ok(trial_bounds(&r, cfg).ok())
    });
    let ok: Vec<TrialBounds> = draws.into_iter().collect::<Result<Vec<_>>>()?.into_iter().flatten().collect();
    if ok.is_empty() {
        return Err(Error::Estimation("no realization gave a nonsingular FIM".into()));
    }
    let k = cfg.num_objects();
    let avg = |pick: fn(&TrialBounds) -> &Vec<f64>| -> Vec<f64> {
        (0..k).map(|l| ok.iter().map(|b| pick(b)[l]).sum::<f64>() / ok.len() as f64).collect()
    };
    let mean = TrialBounds {
        deb_all: avg(|b| &b.deb_all),
        aeb_all: avg(|b| &b.aeb_all),
        deb_clean: avg(|b| &b.deb_clean),
        aeb_clean: avg(|b| &b.aeb_clean),
    };
    Ok((mean, ok.len()))
}
