//! Target delay and angle estimation: MUSIC on every used resource, OMP on
//! the clean resources, and an assignment step that hands the strongest
//! MUSIC angle to the matching OMP pair.

mod assign;
mod grid;
mod music;
mod omp;

pub use assign::solve_assignment;
pub use grid::GridConfig;
pub use music::{music_estimate, sample_covariance, AngleSpectrum, Peak};
pub use omp::{omp_estimate, DelayAngle, OmpResult};

use std::f64::consts::PI;

use crate::scenario::wrap_angle;
use crate::{Error, Result};

/// `min(d², (|d| − 2π)²)` with `d = a − b`.
pub fn circular_cost(a: f64, b: f64) -> f64 {
    let d = a - b;
    (d * d).min((d.abs() - 2.0 * PI).powi(2))
}

/// Absolute angle difference on the circle, in [0, π].
pub fn circular_distance(a: f64, b: f64) -> f64 {
    wrap_angle(a - b).abs()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetEstimateSet {
    /// OMP pairs in selection order.
    pub pairs: Vec<DelayAngle>,
    /// MUSIC peak angles, strongest first.
    pub init_angles: Vec<f64>,
    /// Final angles, one per OMP pair.
    pub updated_angles: Vec<f64>,
    /// `assignment[i] = j` ⇔ `X_{i,j} = 1`.
    pub assignment: Vec<usize>,
    /// Index of the strongest MUSIC peak (presumed interferer).
    pub interferer: usize,
    pub total_cost: f64,
}

impl TargetEstimateSet {
    pub fn assignment_matrix(&self) -> Vec<Vec<u8>> {
        let s = self.assignment.len();
        (0..s)
            .map(|i| (0..s).map(|j| u8::from(self.assignment[i] == j)).collect())
            .collect()
    }

    /// Final (delay, angle) pairs.
    pub fn estimates(&self) -> Vec<DelayAngle> {
        self.pairs
            .iter()
            .zip(&self.updated_angles)
            .map(|(p, &angle)| DelayAngle { delay: p.delay, angle })
            .collect()
    }
}

/// Matches OMP angles to MUSIC peaks and replaces the angle of the pair
/// assigned to the strongest peak.
pub fn associate(pairs: &[DelayAngle], peaks: &[Peak]) -> Result<TargetEstimateSet> {
    if pairs.len() != peaks.len() {
        return Err(Error::InvalidArgument(format!(
            "{} OMP pairs vs {} MUSIC peaks",
            pairs.len(),
            peaks.len()
        )));
    }
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("nothing to associate".into()));
    }
    let cost: Vec<Vec<f64>> = pairs
        .iter()
        .map(|p| peaks.iter().map(|q| circular_cost(p.angle, q.angle)).collect())
        .collect();
    let (assignment, total_cost) = solve_assignment(&cost)?;
    let values: Vec<f64> = peaks.iter().map(|p| p.value).collect();
    let w = grid::argmax(&values).unwrap_or(0);
    let updated_angles = pairs
        .iter()
        .zip(&assignment)
        .map(|(p, &j)| if j == w { wrap_angle(peaks[w].angle) } else { wrap_angle(p.angle) })
        .collect();
    Ok(TargetEstimateSet {
        pairs: pairs.to_vec(),
        init_angles: peaks.iter().map(|p| p.angle).collect(),
        updated_angles,
        assignment,
        interferer: w,
        total_cost,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetRmse {
    pub delay: f64,
    pub angle: f64,
    /// Delta-method standard errors of the two RMSEs.
    pub delay_se: f64,
    pub angle_se: f64,
    pub trials: usize,
}

/// Matches every trial's estimates to `truth` by circular angle cost and
/// returns per-target delay and angle RMSE.
pub fn rmse(trials: &[Vec<DelayAngle>], truth: &[DelayAngle]) -> Result<Vec<TargetRmse>> {
    if trials.is_empty() {
        return Err(Error::Estimation("no successful trials".into()));
    }
    let s = truth.len();
    let mut d2 = vec![Vec::with_capacity(trials.len()); s];
    let mut a2 = vec![Vec::with_capacity(trials.len()); s];
    for est in trials {
        if est.len() != s {
            return Err(Error::InvalidArgument(format!(
                "{} estimates for {s} targets",
                est.len()
            )));
        }
        let cost: Vec<Vec<f64>> = truth
            .iter()
            .map(|t| est.iter().map(|e| circular_cost(e.angle, t.angle)).collect())
            .collect();
        let (m, _) = solve_assignment(&cost)?;
        for (l, &j) in m.iter().enumerate() {
            d2[l].push((est[j].delay - truth[l].delay).powi(2));
            a2[l].push(circular_distance(est[j].angle, truth[l].angle).powi(2));
        }
    }
    Ok((0..s)
        .map(|l| {
            let (delay, delay_se) = root_mean(&d2[l]);
            let (angle, angle_se) = root_mean(&a2[l]);
            TargetRmse {
                delay,
                angle,
                delay_se,
                angle_se,
                trials: trials.len(),
            }
        })
        .collect())
}

fn root_mean(sq: &[f64]) -> (f64, f64) {
    let m = sq.len() as f64;
    let mean = sq.iter().sum::<f64>() / m;
    let r = mean.sqrt();
    if sq.len() < 2 || r == 0.0 {
        return (r, 0.0);
    }
    let var = sq.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
    (r, (var / m).sqrt() / (2.0 * r))
}
