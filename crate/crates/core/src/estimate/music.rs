//! MUSIC angle scan over the sample covariance of all used snapshots.

use super::grid::{argmax, GridConfig};
use crate::linalg::{hermitian_eigh, CMat};
use crate::waveform::{steering_vector, ReceivedTensor, ResourceSet};
use crate::{Error, Result, C64};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub angle: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AngleSpectrum {
    pub angles: Vec<f64>,
    pub values: Vec<f64>,
    /// Refined peaks, strongest first.
    pub peaks: Vec<Peak>,
}

/// `Γ̂ = Σ y y^H` over `resources`, without normalization.
pub fn sample_covariance(y: &ReceivedTensor, resources: &ResourceSet) -> CMat {
    let nu = y.num_antennas;
    let mut g = CMat::zeros(nu, nu);
    for (n, t) in resources.iter() {
        let v = y.snapshot(n, t);
        for i in 0..nu {
            for j in 0..nu {
                g[(i, j)] += v[i] * v[j].conj();
            }
        }
    }
    g
}

struct Pseudo {
    noise: Vec<Vec<C64>>,
    nu: usize,
}

impl Pseudo {
    fn eval(&self, theta: f64) -> f64 {
        let a = steering_vector(theta, self.nu);
        let den: f64 = self
            .noise
            .iter()
            .map(|u| u.iter().zip(&a).map(|(u, a)| u.conj() * a).sum::<C64>().norm_sqr())
            .sum();
        1.0 / den.max(f64::MIN_POSITIVE)
    }
}

/// Scans `1 / (a^H U_n U_n^H a)` and returns the `s` largest local maxima,
/// each refined by zooming around the coarse grid point.
pub fn music_estimate(
    y: &ReceivedTensor,
    resources: &ResourceSet,
    num_signals: usize,
    grid: &GridConfig,
) -> Result<AngleSpectrum> {
    grid.validate()?;
    let nu = y.num_antennas;
    if num_signals >= nu {
        return Err(Error::InvalidArgument(format!(
            "signal count {num_signals} must be below the antenna count {nu}"
        )));
    }
    if resources.len() < nu {
        return Err(Error::InvalidArgument(format!(
            "{} snapshots for {nu} antennas",
            resources.len()
        )));
    }
    let (_, vecs) = hermitian_eigh(&sample_covariance(y, resources));
    let noise: Vec<Vec<C64>> = (0..nu - num_signals)
        .map(|j| vecs.column(j).iter().copied().collect())
        .collect();
    let p = Pseudo { noise, nu };

    let angles = grid.angles();
    let values: Vec<f64> = angles.iter().map(|&th| p.eval(th)).collect();
    if num_signals == 0 {
        return Ok(AngleSpectrum { angles, values, peaks: Vec::new() });
    }

    let mut local: Vec<usize> = (1..values.len().saturating_sub(1))
        .filter(|&k| values[k] > values[k - 1] && values[k] >= values[k + 1])
        .collect();
    if local.len() < num_signals {
        return Err(Error::Estimation(format!(
            "MUSIC found {} local maxima, {num_signals} required",
            local.len()
        )));
    }
    local.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let mut peaks: Vec<Peak> = local[..num_signals]
        .iter()
        .map(|&k| refine(&p, grid, angles[k], values[k]))
        .collect();
    peaks.sort_by(|a, b| b.value.total_cmp(&a.value));
    Ok(AngleSpectrum { angles, values, peaks })
}

fn refine(p: &Pseudo, grid: &GridConfig, angle: f64, value: f64) -> Peak {
    let mut best = Peak { angle, value };
    let mut step = grid.angle_step();
    for _ in 0..grid.zoom_rounds {
        let pts = grid.zoom_points(best.angle, step, grid.angle_min, grid.angle_max);
        let vals: Vec<f64> = pts.iter().map(|&th| p.eval(th)).collect();
        if let Some(i) = argmax(&vals) {
            if vals[i] > best.value {
                best = Peak { angle: pts[i], value: vals[i] };
            }
        }
        step /= grid.zoom_factor as f64;
    }
    best
}
