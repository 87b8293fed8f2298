//! Orthogonal matching pursuit over a joint delay–angle dictionary of
//! monostatic atoms `h(θ,τ)_{n,t} = (a^T(θ) x_{n,t}) d_n(2τ) a(θ)`.
//!
//! The correlation of an atom with the residual factors per subcarrier:
//! with `R_n = Σ_t r_{n,t} x_{n,t}^H` and `b = conj(a(θ))`,
//! `h^H r = Σ_n conj(d_n(2τ)) b^T R_n b`, and `‖h‖² = a^T X b` with
//! `X = Σ x x^H`. The delay sum is then a cheap inner product per grid point.

use std::f64::consts::PI;

use super::grid::{argmax, GridConfig};
use crate::linalg::{solve_hermitian, CMat, CVec};
use crate::waveform::{beam, delay_response, steering_vector, ReceivedTensor, ResourceSet, TransmitGrid};
use crate::{Error, Result, C64};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayAngle {
    /// One-way delay in seconds.
    pub delay: f64,
    /// Angle in radians.
    pub angle: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OmpResult {
    /// Selected atoms in selection order.
    pub pairs: Vec<DelayAngle>,
    /// `‖r‖` before the first and after every iteration.
    pub residual_norms: Vec<f64>,
    /// Least-squares coefficients of the final projection.
    pub coefficients: Vec<C64>,
    /// Set when a rank-deficient Gram matrix needed a ridge.
    pub regularized: bool,
}

struct Problem<'a> {
    rows: Vec<(usize, usize)>,
    /// Per distinct subcarrier: (n, row indices).
    groups: Vec<(usize, Vec<usize>)>,
    x: Vec<&'a [C64]>,
    xx: CMat,
    nu: usize,
    delta_f: f64,
}

impl Problem<'_> {
    fn r_matrices(&self, r: &[C64]) -> Vec<CMat> {
        let nu = self.nu;
        self.groups
            .iter()
            .map(|(_, idx)| {
                let mut m = CMat::zeros(nu, nu);
                for &row in idx {
                    let rv = &r[row * nu..(row + 1) * nu];
                    let x = self.x[row];
                    for i in 0..nu {
                        for j in 0..nu {
                            m[(i, j)] += rv[i] * x[j].conj();
                        }
                    }
                }
                m
            })
            .collect()
    }

    /// `(z_n(θ))_n` and `‖h(θ)‖²`.
    fn angle_terms(&self, theta: f64, rn: &[CMat]) -> (Vec<C64>, f64) {
        let b: Vec<C64> = steering_vector(theta, self.nu).iter().map(|a| a.conj()).collect();
        let bilinear = |m: &CMat| -> C64 {
            let mut acc = C64::new(0.0, 0.0);
            for i in 0..self.nu {
                let mut row = C64::new(0.0, 0.0);
                for j in 0..self.nu {
                    row += m[(i, j)] * b[j];
                }
                acc += b[i] * row;
            }
            acc
        };
        let z = rn.iter().map(bilinear).collect();
        let a: Vec<C64> = b.iter().map(|v| v.conj()).collect();
        let mut norm2 = C64::new(0.0, 0.0);
        for i in 0..self.nu {
            let mut row = C64::new(0.0, 0.0);
            for j in 0..self.nu {
                row += self.xx[(i, j)] * b[j];
            }
            norm2 += a[i] * row;
        }
        (z, norm2.re)
    }

    /// `conj(d_n(2τ))` for every subcarrier group.
    fn delay_phases(&self, tau: f64) -> Vec<C64> {
        self.groups
            .iter()
            .map(|(n, _)| C64::from_polar(1.0, 4.0 * PI * self.delta_f * *n as f64 * tau))
            .collect()
    }

    fn atom(&self, p: DelayAngle) -> CVec {
        let nu = self.nu;
        let a = steering_vector(p.angle, nu);
        let mut h = CVec::zeros(self.rows.len() * nu);
        for (row, &(n, _)) in self.rows.iter().enumerate() {
            let coef = beam(&a, self.x[row]) * delay_response(n, 2.0 * p.delay, self.delta_f);
            for k in 0..nu {
                h[row * nu + k] = coef * a[k];
            }
        }
        h
    }
}

fn objective(z: &[C64], phases: &[C64], norm2: f64) -> f64 {
    if norm2 <= 0.0 {
        return 0.0;
    }
    let c: C64 = z.iter().zip(phases).map(|(z, p)| z * p).sum();
    c.norm_sqr() / norm2
}

/// Greedy selection of `s` atoms on `resources`, each maximizing the
/// normalized correlation `|h^H r| / ‖h‖` with the current residual.
pub fn omp_estimate(
    y: &ReceivedTensor,
    tx: &TransmitGrid,
    resources: &ResourceSet,
    num_targets: usize,
    grid: &GridConfig,
    delta_f: f64,
) -> Result<OmpResult> {
    grid.validate()?;
    if resources.is_empty() {
        return Err(Error::EmptyAllocation);
    }
    if num_targets == 0 {
        return Err(Error::InvalidArgument("OMP needs at least one target".into()));
    }
    let nu = y.num_antennas;
    let rows: Vec<(usize, usize)> = resources.iter().collect();
    let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
    for (row, &(n, _)) in rows.iter().enumerate() {
        match groups.last_mut() {
            Some((m, idx)) if *m == n => idx.push(row),
            _ => groups.push((n, vec![row])),
        }
    }
    let x: Vec<&[C64]> = rows.iter().map(|&(n, t)| tx.x(0, n, t)).collect();
    let mut xx = CMat::zeros(nu, nu);
    for xv in &x {
        for i in 0..nu {
            for j in 0..nu {
                xx[(i, j)] += xv[i] * xv[j].conj();
            }
        }
    }
    let prob = Problem { rows, groups, x, xx, nu, delta_f };

    let y_est = CVec::from_iterator(
        prob.rows.len() * nu,
        prob.rows.iter().flat_map(|&(n, t)| y.snapshot(n, t).iter().copied()),
    );
    let angles = grid.angles();
    let delays = grid.delays();
    let coarse_phases: Vec<Vec<C64>> = delays.iter().map(|&d| prob.delay_phases(d)).collect();

    let mut residual = y_est.clone();
    let mut norms = vec![residual.norm()];
    let mut pairs = Vec::with_capacity(num_targets);
    let mut atoms: Vec<CVec> = Vec::with_capacity(num_targets);
    let mut coefficients = Vec::new();
    let mut regularized = false;

    for iter in 0..num_targets {
        let rn = prob.r_matrices(residual.as_slice());
        let mut best = (0.0f64, DelayAngle { delay: 0.0, angle: angles[0] });
        for &th in &angles {
            let (z, norm2) = prob.angle_terms(th, &rn);
            for (tau, ph) in delays.iter().zip(&coarse_phases) {
                let v = objective(&z, ph, norm2);
                if v > best.0 {
                    best = (v, DelayAngle { delay: *tau, angle: th });
                }
            }
        }
        if !(best.0 > 0.0) {
            return Err(Error::Estimation(format!(
                "OMP iteration {iter}: residual has no correlation with the dictionary"
            )));
        }
        let (mut a_step, mut d_step) = (grid.angle_step(), grid.delay_step());
        for _ in 0..grid.zoom_rounds {
            let a_pts = grid.zoom_points(best.1.angle, a_step, grid.angle_min, grid.angle_max);
            let d_pts = grid.zoom_points(best.1.delay, d_step, 0.0, grid.delay_max);
            let phases: Vec<Vec<C64>> = d_pts.iter().map(|&d| prob.delay_phases(d)).collect();
            for &th in &a_pts {
                let (z, norm2) = prob.angle_terms(th, &rn);
                let vals: Vec<f64> = phases.iter().map(|ph| objective(&z, ph, norm2)).collect();
                if let Some(j) = argmax(&vals) {
                    if vals[j] > best.0 {
                        best = (vals[j], DelayAngle { delay: d_pts[j], angle: th });
                    }
                }
            }
            a_step /= grid.zoom_factor as f64;
            d_step /= grid.zoom_factor as f64;
        }
        pairs.push(best.1);
        atoms.push(prob.atom(best.1));

        let m = atoms.len();
        let psi = CMat::from_columns(&atoms);
        let gram = psi.adjoint() * &psi;
        let rhs = psi.adjoint() * &y_est;
        let (c, reg) = solve_hermitian(&gram, &rhs);
        debug_assert_eq!(c.len(), m);
        regularized |= reg;
        residual = &y_est - &psi * &c;
        norms.push(residual.norm());
        coefficients = c.iter().copied().collect();
    }
    Ok(OmpResult {
        pairs,
        residual_norms: norms,
        coefficients,
        regularized,
    })
}
