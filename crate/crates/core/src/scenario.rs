//! Scenario geometry and the deterministic channel parameters derived from it.
//!
//! Objects are indexed `0..O+L`: the first `O` are the interfering UEs, the
//! remaining `L` are passive scatter points. The rUE sits at the origin.

use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result, C64};

/// Speed of light in m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Thermal noise density used by the reference scenario, dBm/Hz.
pub const THERMAL_NOISE_DBM_HZ: f64 = -173.85;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub rue_position: [f64; 2],
    pub iue_positions: Vec<[f64; 2]>,
    pub sp_positions: Vec<[f64; 2]>,
    pub carrier_freq_hz: f64,
    pub subcarrier_spacing_hz: f64,
    pub num_subcarriers: usize,
    pub num_symbols: usize,
    pub num_antennas: usize,
    /// Complex noise variance per resource element and antenna, W.
    pub noise_power_w: f64,
    /// Transmit powers `E_0..E_O` (rUE first), W.
    pub tx_power_w: Vec<f64>,
    pub rng_seed: u64,
}

impl ScenarioConfig {
    /// The reference scenario: one iUE at [5, 14] m, one scatter point at
    /// [17, 6] m, 64 subcarriers at 250 kHz around 15 GHz, 30 symbols, six
    /// antennas. Noise is the thermal density integrated over one subcarrier.
    pub fn reference() -> Self {
        let spacing = 250e3;
        Self {
            rue_position: [0.0, 0.0],
            iue_positions: vec![[5.0, 14.0]],
            sp_positions: vec![[17.0, 6.0]],
            carrier_freq_hz: 15e9,
            subcarrier_spacing_hz: spacing,
            num_subcarriers: 64,
            num_symbols: 30,
            num_antennas: 6,
            noise_power_w: dbm_to_watt(THERMAL_NOISE_DBM_HZ) * spacing,
            tx_power_w: vec![0.05, 0.05],
            rng_seed: 1,
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario config serializes")
    }

    pub fn num_iues(&self) -> usize {
        self.iue_positions.len()
    }

    pub fn num_objects(&self) -> usize {
        self.iue_positions.len() + self.sp_positions.len()
    }

    /// iUE positions followed by scatter-point positions.
    pub fn object_positions(&self) -> Vec<[f64; 2]> {
        self.iue_positions
            .iter()
            .chain(self.sp_positions.iter())
            .copied()
            .collect()
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_freq_hz
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.rue_position != [0.0, 0.0] {
            return bad("rue_position must be the origin");
        }
        if self.iue_positions.is_empty() {
            return bad("at least one iUE is required");
        }
        if self.num_subcarriers == 0 || self.num_symbols == 0 {
            return bad("grid dimensions must be positive");
        }
        if self.num_antennas < 2 {
            return bad("num_antennas must be at least 2");
        }
        for (name, v) in [
            ("carrier_freq_hz", self.carrier_freq_hz),
            ("subcarrier_spacing_hz", self.subcarrier_spacing_hz),
            ("noise_power_w", self.noise_power_w),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be positive")));
            }
        }
        if self.tx_power_w.len() != self.num_iues() + 1 {
            return Err(Error::InvalidConfig(format!(
                "tx_power_w needs {} entries (rUE then each iUE), got {}",
                self.num_iues() + 1,
                self.tx_power_w.len()
            )));
        }
        if self.tx_power_w.iter().any(|&e| !(e.is_finite() && e > 0.0)) {
            return bad("transmit powers must be positive");
        }
        let pts = self.object_positions();
        for (i, p) in pts.iter().enumerate() {
            if p.iter().any(|c| !c.is_finite()) {
                return bad("positions must be finite");
            }
            if norm(*p) == 0.0 {
                return Err(Error::DegenerateGeometry {
                    what: format!("object {i} and the rUE"),
                });
            }
            for (j, q) in pts.iter().enumerate().skip(i + 1) {
                if dist(*p, *q) == 0.0 {
                    return Err(Error::DegenerateGeometry {
                        what: format!("objects {i} and {j}"),
                    });
                }
            }
        }
        Ok(())
    }
}

pub fn dbm_to_watt(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// One iUE -> object -> rUE propagation path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossPath {
    pub iue: usize,
    pub object: usize,
    pub gain: C64,
    /// Departure angle at the iUE towards the object.
    pub aod: f64,
    /// Total delay iUE -> object -> rUE.
    pub toa: f64,
}

impl CrossPath {
    /// Extra delay over the object's own one-way delay; constant in the geometry.
    pub fn delay_offset(&self, params: &ChannelParams) -> f64 {
        self.toa - params.toa[self.object]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelParams {
    pub wavelength_m: f64,
    pub num_iues: usize,
    /// Round-trip rUE -> object -> rUE gains, one per object.
    pub mono_gains: Vec<C64>,
    /// Line-of-sight iUE -> rUE gains, one per iUE.
    pub direct_gains: Vec<C64>,
    /// Ordered by iUE, then object (skipping the iUE itself).
    pub cross: Vec<CrossPath>,
    /// Angle of arrival at the rUE, per object.
    pub aoa: Vec<f64>,
    /// Departure angle at each iUE towards the rUE.
    pub aod: Vec<f64>,
    /// One-way delay rUE -> object, per object.
    pub toa: Vec<f64>,
}

impl ChannelParams {
    pub fn num_objects(&self) -> usize {
        self.aoa.len()
    }

    pub fn cross_paths_of(&self, iue: usize) -> impl Iterator<Item = &CrossPath> {
        self.cross.iter().filter(move |c| c.iue == iue)
    }

    /// Rotates every iUE's interference gains so its direct gain is real and
    /// nonnegative. The interference covariance only depends on relative
    /// phases within one iUE, so the rotated parameters describe the same
    /// model.
    pub fn phase_referenced(&self) -> ChannelParams {
        let mut out = self.clone();
        for i in 0..self.num_iues {
            let g = self.direct_gains[i];
            if g.norm() == 0.0 {
                continue;
            }
            let rot = g.conj() / g.norm();
            out.direct_gains[i] = C64::new(g.norm(), 0.0);
            for c in out.cross.iter_mut().filter(|c| c.iue == i) {
                c.gain *= rot;
            }
        }
        out
    }
}

/// Derives gains, angles and delays from the geometry and draws every path
/// phase uniformly on [0, 2π).
///
/// Draw order: monostatic phases per object, direct phases per iUE, then cross
/// phases in (iUE, object) order.
pub fn derive_channel_params<R: Rng + ?Sized>(
    config: &ScenarioConfig,
    rng: &mut R,
) -> Result<ChannelParams> {
    config.validate()?;
    let lambda = config.wavelength();
    let objects = config.object_positions();
    let num_iues = config.num_iues();
    let four_pi = 4.0 * PI;

    let aoa: Vec<f64> = objects.iter().map(|p| wrap_angle(p[1].atan2(p[0]))).collect();
    let toa: Vec<f64> = objects.iter().map(|p| norm(*p) / SPEED_OF_LIGHT).collect();

    let mut phase = || C64::from_polar(1.0, rng.random_range(0.0..2.0 * PI));

    // Scatter-path law with the rUE as transmitter: ||p_l - p_0|| = ||p_l||.
    let mono_gains: Vec<C64> = objects
        .iter()
        .map(|p| {
            let r2 = norm(*p).powi(2);
            let mag2 = lambda * lambda / four_pi.powi(3) / (r2 * r2);
            mag2.sqrt() * phase()
        })
        .collect();

    let direct_gains: Vec<C64> = objects[..num_iues]
        .iter()
        .map(|p| {
            let mag2 = lambda * lambda / four_pi.powi(2) / norm(*p).powi(2);
            mag2.sqrt() * phase()
        })
        .collect();

    let aod: Vec<f64> = aoa[..num_iues]
        .iter()
        .map(|&th| if th >= 0.0 { wrap_angle(th - PI) } else { wrap_angle(th + PI) })
        .collect();

    let mut cross = Vec::new();
    for i in 0..num_iues {
        for (l, pl) in objects.iter().enumerate() {
            if l == i {
                continue;
            }
            let pi = objects[i];
            let hop = dist(*pl, pi);
            let mag2 = lambda * lambda / four_pi.powi(3) / (hop * hop) / norm(*pl).powi(2);
            cross.push(CrossPath {
                iue: i,
                object: l,
                gain: mag2.sqrt() * phase(),
                aod: wrap_angle((pl[1] - pi[1]).atan2(pl[0] - pi[0])),
                toa: toa[l] + hop / SPEED_OF_LIGHT,
            });
        }
    }

    Ok(ChannelParams {
        wavelength_m: lambda,
        num_iues,
        mono_gains,
        direct_gains,
        cross,
        aoa,
        aod,
        toa,
    })
}

/// Maps an angle onto (−π, π].
pub fn wrap_angle(x: f64) -> f64 {
    let y = x.rem_euclid(2.0 * PI);
    if y > PI {
        y - 2.0 * PI
    } else {
        y
    }
}

fn norm(p: [f64; 2]) -> f64 {
    p[0].hypot(p[1])
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}
