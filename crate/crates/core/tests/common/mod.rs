//! Fixtures shared by the bound tests and the acceptance suite.
#![allow(dead_code)]

use isac_core::linalg::CMat;
use isac_core::scenario::{derive_channel_params, ChannelParams, CrossPath, ScenarioConfig};
use isac_core::waveform::{
    allocate_resources, beam, complex_normal, delay_response, steering_vector, synthesize_transmit,
    ResourceAllocation, TransmitGrid,
};
use isac_core::C64;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const DF: f64 = 250e3;

pub struct Setup {
    pub params: ChannelParams,
    pub alloc: ResourceAllocation,
    pub tx: TransmitGrid,
    pub noise: f64,
}

/// Random single-iUE, single-SP geometry with the reference radio settings.
pub fn random_setup(seed: u64) -> Setup {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cfg = ScenarioConfig::reference();
    loop {
        let p: [f64; 2] = [rng.random_range(2.0..20.0), rng.random_range(2.0..20.0)];
        let q: [f64; 2] = [rng.random_range(2.0..20.0), rng.random_range(-10.0..20.0)];
        if ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt() > 1.0 {
            cfg.iue_positions = vec![p];
            cfg.sp_positions = vec![q];
            break;
        }
    }
    let params = derive_channel_params(&cfg, &mut rng).unwrap().phase_referenced();
    let alloc = allocate_resources(64, 30, 32, 32, 8, &mut rng).unwrap();
    let tx = synthesize_transmit(&alloc, &[0.05, 0.05], 6, &mut rng).unwrap();
    Setup {
        params,
        alloc,
        tx,
        noise: cfg.noise_power_w,
    }
}

pub fn reference_setup(e0: f64, seed: u64) -> Setup {
    let cfg = ScenarioConfig::reference();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = derive_channel_params(&cfg, &mut rng).unwrap().phase_referenced();
    let alloc = allocate_resources(64, 30, 32, 32, 8, &mut rng).unwrap();
    let tx = synthesize_transmit(&alloc, &[e0, 0.05], 6, &mut rng).unwrap();
    Setup {
        params,
        alloc,
        tx,
        noise: cfg.noise_power_w,
    }
}

pub fn rel_fro(a: &CMat, b: &CMat) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

/// Independent sampler: builds every interference path from the geometry,
/// with fresh iUE symbols and noise per draw.
pub fn sample_interference(p: &ChannelParams, n: usize, var: f64, noise: f64, rng: &mut ChaCha8Rng) -> Vec<C64> {
    let x: Vec<C64> = (0..6).map(|_| complex_normal(rng, var)).collect();
    let mut z: Vec<C64> = (0..6).map(|_| complex_normal(rng, noise)).collect();
    let mut add = |g: C64, dep: f64, tau: f64, arr: f64| {
        let coef = g * beam(&steering_vector(dep, 6), &x) * delay_response(n, tau, DF);
        for (v, a) in z.iter_mut().zip(steering_vector(arr, 6)) {
            *v += coef * a;
        }
    };
    add(p.direct_gains[0], p.aod[0], p.toa[0], p.aoa[0]);
    for c in p.cross.iter().filter(|c: &&CrossPath| c.iue == 0) {
        add(c.gain, c.aod, c.toa, p.aoa[c.object]);
    }
    z
}

/// Largest `|A_ij − B_ij| / sqrt(A_ii A_jj)`.
pub fn normalized_gap(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let d = a.nrows();
    let mut worst = 0.0f64;
    for i in 0..d {
        for j in 0..d {
            let scale = (a[(i, i)] * a[(j, j)]).sqrt();
            worst = worst.max((a[(i, j)] - b[(i, j)]).abs() / scale);
        }
    }
    worst
}
