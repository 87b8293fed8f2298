//! Interference detection from per-subcarrier and per-symbol received power.
//!
//! A used subcarrier is flagged when its power exceeds `β` times the κ-th
//! smallest power. With κ = 1 the false-alarm probability under the global
//! null only depends on β, the Gamma shape and the number of statistics, so β
//! can be calibrated offline for a target familywise error rate δ.
//!
//! Symbol detection runs after subcarrier detection and only sums power over
//! subcarriers that were not flagged; an interferer occupying every symbol
//! otherwise makes the symbol statistics heavy-tailed and the symbol test
//! fires almost surely.

mod order_stats;
pub mod quadrature;

pub use order_stats::{calibrate_beta, fwer_monte_carlo, fwer_theoretical, p_value, BetaCache};

use std::collections::{BTreeMap, BTreeSet};

use crate::waveform::{ReceivedTensor, ResourceAllocation, ResourceSet};
use crate::{Error, Result};

/// How the threshold factors are chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Threshold {
    /// Fixed factors for subcarrier and symbol detection.
    Fixed { freq: f64, time: f64 },
    /// Calibrated per test family for familywise error rate `delta` (κ = 1 only).
    Fwer { delta: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionConfig {
    pub kappa: usize,
    pub threshold: Threshold,
    /// Skip symbol detection entirely.
    pub detect_symbols: bool,
}

impl DetectionConfig {
    pub fn fwer(delta: f64) -> Self {
        Self {
            kappa: 1,
            threshold: Threshold::Fwer { delta },
            detect_symbols: true,
        }
    }

    pub fn fixed(beta: f64) -> Self {
        Self {
            kappa: 1,
            threshold: Threshold::Fixed { freq: beta, time: beta },
            detect_symbols: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionResult {
    pub freq_detected: BTreeSet<usize>,
    pub time_detected: BTreeSet<usize>,
    /// Estimated interference-free resources `Ω̂`.
    pub clean_set: ResourceSet,
    pub subcarrier_powers: BTreeMap<usize, f64>,
    /// Symbol powers over the subcarriers left after subcarrier detection.
    pub slot_powers: BTreeMap<usize, f64>,
    pub beta_freq: f64,
    pub beta_time: Option<f64>,
}

/// `γ_n = Σ_{t ∈ Ω^(0)_time} Σ_k |y_{n,t,k}|²` for every rUE subcarrier.
pub fn subcarrier_powers(y: &ReceivedTensor, alloc: &ResourceAllocation) -> Result<BTreeMap<usize, f64>> {
    let rue = alloc.rue();
    if rue.freq.is_empty() || rue.time.is_empty() {
        return Err(Error::EmptyAllocation);
    }
    Ok(rue
        .freq
        .iter()
        .map(|&n| (n, rue.time.iter().map(|&t| energy(y.snapshot(n, t))).sum()))
        .collect())
}

/// `γ̃_t = Σ_{n ∈ Ω^(0)_freq} Σ_k |y_{n,t,k}|²` for every rUE symbol.
pub fn slot_powers(y: &ReceivedTensor, alloc: &ResourceAllocation) -> Result<BTreeMap<usize, f64>> {
    slot_powers_excluding(y, alloc, &BTreeSet::new())
}

/// Symbol powers summed over rUE subcarriers not in `excluded`.
pub fn slot_powers_excluding(
    y: &ReceivedTensor,
    alloc: &ResourceAllocation,
    excluded: &BTreeSet<usize>,
) -> Result<BTreeMap<usize, f64>> {
    let rue = alloc.rue();
    let freq: Vec<usize> = rue.freq.difference(excluded).copied().collect();
    if freq.is_empty() || rue.time.is_empty() {
        return Err(Error::EmptyAllocation);
    }
    Ok(rue
        .time
        .iter()
        .map(|&t| (t, freq.iter().map(|&n| energy(y.snapshot(n, t))).sum()))
        .collect())
}

fn energy(v: &[crate::C64]) -> f64 {
    v.iter().map(|c| c.norm_sqr()).sum()
}

/// `{ i : γ_i > γ_(κ) β }`. Ties in the ordering are broken by index.
pub fn threshold_detect(powers: &BTreeMap<usize, f64>, kappa: usize, beta: f64) -> Result<BTreeSet<usize>> {
    if powers.is_empty() {
        return Err(Error::InvalidArgument("no powers to threshold".into()));
    }
    if kappa == 0 || kappa > powers.len() {
        return Err(Error::InvalidArgument(format!(
            "kappa must lie in 1..={}, got {kappa}",
            powers.len()
        )));
    }
    if !(beta >= 1.0) {
        return Err(Error::InvalidArgument(format!("beta must be >= 1, got {beta}")));
    }
    let mut sorted: Vec<(usize, f64)> = powers.iter().map(|(&i, &p)| (i, p)).collect();
    sorted.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    let level = sorted[kappa - 1].1 * beta;
    Ok(powers.iter().filter(|(_, &p)| p > level).map(|(&i, _)| i).collect())
}

/// `Ω̂ = Ω^(0) \ [(Ω̂_freq × Ω^(0)_time) ∪ (Ω^(0)_freq × Ω̂_time)]`: a flagged
/// subcarrier or symbol removes its whole row or column.
pub fn estimate_clean_set(
    alloc: &ResourceAllocation,
    freq_detected: &BTreeSet<usize>,
    time_detected: &BTreeSet<usize>,
) -> Result<ResourceSet> {
    let rue = alloc.rue();
    if !freq_detected.is_subset(&rue.freq) || !time_detected.is_subset(&rue.time) {
        return Err(Error::InvalidArgument(
            "detected indices must be used by the rUE".into(),
        ));
    }
    let mut s = alloc.used_set(0);
    for (n, t) in alloc.used_set(0).iter() {
        if freq_detected.contains(&n) || time_detected.contains(&t) {
            s.remove(n, t);
        }
    }
    Ok(s)
}

/// Runs subcarrier detection, then symbol detection on the remaining
/// subcarriers, and returns the estimated clean set.
pub fn detect_interference(
    y: &ReceivedTensor,
    alloc: &ResourceAllocation,
    config: &DetectionConfig,
    cache: &BetaCache,
) -> Result<DetectionResult> {
    let nu = y.num_antennas as f64;
    let rue = alloc.rue();
    if let Threshold::Fwer { .. } = config.threshold {
        if config.kappa != 1 {
            return Err(Error::InvalidArgument(
                "FWER calibration is only defined for kappa = 1".into(),
            ));
        }
    }
    let gamma = subcarrier_powers(y, alloc)?;
    let beta_freq = match config.threshold {
        Threshold::Fixed { freq, .. } => freq,
        Threshold::Fwer { delta } => {
            if gamma.len() < 2 {
                f64::INFINITY
            } else {
                cache.beta(delta, rue.time.len() as f64 * nu, gamma.len())?
            }
        }
    };
    let freq_detected = if beta_freq.is_finite() {
        threshold_detect(&gamma, config.kappa, beta_freq)?
    } else {
        BTreeSet::new()
    };

    let remaining = rue.freq.len() - freq_detected.len();
    let mut time_detected = BTreeSet::new();
    let mut slot = BTreeMap::new();
    let mut beta_time = None;
    if config.detect_symbols && remaining > 0 && rue.time.len() >= 2 {
        slot = slot_powers_excluding(y, alloc, &freq_detected)?;
        let b = match config.threshold {
            Threshold::Fixed { time, .. } => time,
            Threshold::Fwer { delta } => cache.beta(delta, remaining as f64 * nu, slot.len())?,
        };
        if config.kappa <= slot.len() {
            time_detected = threshold_detect(&slot, config.kappa, b)?;
        }
        beta_time = Some(b);
    }
    let clean_set = estimate_clean_set(alloc, &freq_detected, &time_detected)?;
    Ok(DetectionResult {
        freq_detected,
        time_detected,
        clean_set,
        subcarrier_powers: gamma,
        slot_powers: slot,
        beta_freq,
        beta_time,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::waveform::{allocate_resources, ReceivedTensor};
    use crate::C64;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn map(v: &[f64]) -> BTreeMap<usize, f64> {
        v.iter().copied().enumerate().collect()
    }

    #[test]
    fn threshold_examples() {
        let d = threshold_detect(&map(&[10.0, 1.0, 1.0, 1.0]), 1, 2.0).unwrap();
        assert_eq!(d, BTreeSet::from([0]));
        let d = threshold_detect(&map(&[3.0, 3.0, 3.0]), 1, 1.5).unwrap();
        assert!(d.is_empty());
        // κ = 2: threshold 4 · 1.2 = 4.8.
        let d = threshold_detect(&map(&[5.0, 4.0, 3.0]), 2, 1.2).unwrap();
        assert_eq!(d, BTreeSet::from([0]));
    }

    #[test]
    fn threshold_errors() {
        assert!(threshold_detect(&BTreeMap::new(), 1, 2.0).is_err());
        assert!(threshold_detect(&map(&[1.0]), 2, 2.0).is_err());
        assert!(threshold_detect(&map(&[1.0, 2.0]), 1, 0.5).is_err());
    }

    fn alloc() -> ResourceAllocation {
        allocate_resources(64, 30, 32, 32, 8, &mut ChaCha8Rng::seed_from_u64(1)).unwrap()
    }

    #[test]
    fn powers_of_zero_tensor() {
        let a = alloc();
        let y = ReceivedTensor::zeros(64, 30, 6);
        assert!(subcarrier_powers(&y, &a).unwrap().values().all(|&g| g == 0.0));
        assert!(slot_powers(&y, &a).unwrap().values().all(|&g| g == 0.0));
    }

    #[test]
    fn single_element_power() {
        let a = alloc();
        let n = *a.rue().freq.iter().next().unwrap();
        let mut y = ReceivedTensor::zeros(64, 30, 6);
        y.snapshot_mut(n, 7)[2] = C64::new(3.0, 4.0);
        assert_eq!(subcarrier_powers(&y, &a).unwrap()[&n], 25.0);
        assert_eq!(slot_powers(&y, &a).unwrap()[&7], 25.0);
    }

    #[test]
    fn clean_set_examples() {
        let a = alloc();
        let none = BTreeSet::new();
        assert_eq!(estimate_clean_set(&a, &none, &none).unwrap(), a.used_set(0));
        let eight: BTreeSet<usize> = a.rue().freq.iter().copied().take(8).collect();
        assert_eq!(estimate_clean_set(&a, &eight, &none).unwrap().len(), 720);
        let all = a.rue().freq.clone();
        assert!(estimate_clean_set(&a, &all, &none).unwrap().is_empty());
        let slots = BTreeSet::from([0, 1]);
        assert_eq!(estimate_clean_set(&a, &eight, &slots).unwrap().len(), 24 * 28);
        let foreign: BTreeSet<usize> = (0..64).filter(|n| !a.rue().freq.contains(n)).take(1).collect();
        assert!(estimate_clean_set(&a, &foreign, &none).is_err());
    }

    #[test]
    fn calibrated_kappa_two_rejected() {
        let a = alloc();
        let y = ReceivedTensor::zeros(64, 30, 6);
        let mut cfg = DetectionConfig::fwer(0.01);
        cfg.kappa = 2;
        assert!(detect_interference(&y, &a, &cfg, &BetaCache::new()).is_err());
    }
}
