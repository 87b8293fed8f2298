//! Search grids and local zoom refinement shared by MUSIC and OMP.

use std::f64::consts::FRAC_PI_2;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridConfig {
    /// Coarse angle points, spread over the open interval (angle_min, angle_max).
    pub angle_points: usize,
    pub angle_min: f64,
    pub angle_max: f64,
    /// Coarse one-way delay points over [0, delay_max], endpoints included.
    pub delay_points: usize,
    pub delay_max: f64,
    pub zoom_rounds: usize,
    pub zoom_factor: usize,
}

impl GridConfig {
    /// 721 angles over (−π/2, π/2) and 512 delays over [0, 1/(4Δf)], two
    /// zoom rounds of factor 20.
    pub fn for_spacing(delta_f: f64) -> Self {
        Self {
            angle_points: 721,
            angle_min: -FRAC_PI_2,
            angle_max: FRAC_PI_2,
            delay_points: 512,
            delay_max: 1.0 / (4.0 * delta_f),
            zoom_rounds: 2,
            zoom_factor: 20,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.angle_points == 0 || self.delay_points < 2 {
            return Err(Error::InvalidArgument("search grids must be nonempty".into()));
        }
        if !(self.angle_max > self.angle_min) || !(self.delay_max > 0.0) || !self.delay_max.is_finite() {
            return Err(Error::InvalidArgument("search ranges must be nondegenerate".into()));
        }
        if self.zoom_rounds > 0 && self.zoom_factor < 2 {
            return Err(Error::InvalidArgument("zoom factor must be at least 2".into()));
        }
        Ok(())
    }

    pub fn angle_step(&self) -> f64 {
        (self.angle_max - self.angle_min) / (self.angle_points + 1) as f64
    }

    pub fn angles(&self) -> Vec<f64> {
        let h = self.angle_step();
        (0..self.angle_points).map(|k| self.angle_min + h * (k + 1) as f64).collect()
    }

    pub fn delay_step(&self) -> f64 {
        self.delay_max / (self.delay_points - 1) as f64
    }

    pub fn delays(&self) -> Vec<f64> {
        let h = self.delay_step();
        (0..self.delay_points).map(|k| h * k as f64).collect()
    }

    /// `2·factor + 1` points spanning `center ± step`, clipped to `[lo, hi]`.
    pub(crate) fn zoom_points(&self, center: f64, step: f64, lo: f64, hi: f64) -> Vec<f64> {
        let f = self.zoom_factor as i64;
        let fine = step / f as f64;
        (-f..=f)
            .map(|k| center + fine * k as f64)
            .filter(|&v| v >= lo && v <= hi)
            .collect()
    }
}

/// Index of the largest value; the lowest index wins ties.
pub(crate) fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        match best {
            Some(b) if !(v > values[b]) => {}
            _ if v.is_nan() => {}
            _ => best = Some(i),
        }
    }
    best
}
