//! Fisher information and Cramér–Rao bounds for target delays and angles.
//!
//! Per resource the observation is `y ~ CN(μ, Σ)`. The echo mean `μ` carries
//! the monostatic paths; interference from iUE `i` enters the covariance as
//! `σ_i² G_i G_i^H` with `G_i = α_i d_n(τ_i) a(θ_i) a^T(φ_i) + Σ_l α_{i,l}
//! d_n(τ_{i,l}) a(θ_l) a^T(φ_{i,l})`. Expanding `G_i G_i^H` gives the familiar
//! sum of `|α|² A(θ)`, `V` and `W` cross terms, which [`covariance_cross_terms`]
//! evaluates literally as a check.
//!
//! Gains are phase-referenced per iUE (direct gain real), because `Σ` is
//! invariant to a common rotation of one iUE's gains. Interference gains are
//! only part of the parameter vector when the resource set contains
//! interfered resources; on clean resources they carry no information.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::linalg::{hermitian_pd_inverse, CMat};
use crate::scenario::ChannelParams;
use crate::waveform::{
    beam, delay_response, steering_derivative, steering_vector, ResourceAllocation, ResourceSet, TransmitGrid,
};
use crate::{Error, Result, C64};

/// Condition-number gate on the equilibrated FIM.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Param {
    Delay(usize),
    Angle(usize),
    MonoRe(usize),
    MonoIm(usize),
    /// Real part of a (phase-referenced, real) direct gain.
    DirectRe(usize),
    /// Index into `ChannelParams::cross`.
    CrossRe(usize),
    CrossIm(usize),
}

/// Ordering: delays, angles, then real parts, then imaginary parts.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamLayout {
    pub num_objects: usize,
    pub num_iues: usize,
    pub num_cross: usize,
    pub interference: bool,
    params: Vec<Param>,
}

impl ParamLayout {
    pub fn new(num_objects: usize, num_iues: usize, num_cross: usize, interference: bool) -> Self {
        let k = num_objects;
        let mut params: Vec<Param> = (0..k).map(Param::Delay).collect();
        params.extend((0..k).map(Param::Angle));
        params.extend((0..k).map(Param::MonoRe));
        if interference {
            params.extend((0..num_iues).map(Param::DirectRe));
            params.extend((0..num_cross).map(Param::CrossRe));
        }
        params.extend((0..k).map(Param::MonoIm));
        if interference {
            params.extend((0..num_cross).map(Param::CrossIm));
        }
        Self {
            num_objects,
            num_iues,
            num_cross,
            interference,
            params,
        }
    }

    pub fn for_params(params: &ChannelParams, interference: bool) -> Self {
        Self::new(params.num_objects(), params.num_iues, params.cross.len(), interference)
    }

    pub fn dim(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn values(&self, p: &ChannelParams) -> Vec<f64> {
        self.params
            .iter()
            .map(|q| match *q {
                Param::Delay(l) => p.toa[l],
                Param::Angle(l) => p.aoa[l],
                Param::MonoRe(l) => p.mono_gains[l].re,
                Param::MonoIm(l) => p.mono_gains[l].im,
                Param::DirectRe(i) => p.direct_gains[i].re,
                Param::CrossRe(c) => p.cross[c].gain.re,
                Param::CrossIm(c) => p.cross[c].gain.im,
            })
            .collect()
    }

    /// Copy of `p` with parameter `index` moved by `h`. A delay move shifts
    /// every cross path ending at that object by the same amount.
    pub fn perturbed(&self, p: &ChannelParams, index: usize, h: f64) -> ChannelParams {
        let mut q = p.clone();
        match self.params[index] {
            Param::Delay(l) => {
                q.toa[l] += h;
                for c in q.cross.iter_mut().filter(|c| c.object == l) {
                    c.toa += h;
                }
            }
            Param::Angle(l) => q.aoa[l] += h,
            Param::MonoRe(l) => q.mono_gains[l].re += h,
            Param::MonoIm(l) => q.mono_gains[l].im += h,
            Param::DirectRe(i) => q.direct_gains[i].re += h,
            Param::CrossRe(c) => q.cross[c].gain.re += h,
            Param::CrossIm(c) => q.cross[c].gain.im += h,
        }
        q
    }

    /// Central-difference step for parameter `index`.
    pub fn fd_step(&self, index: usize) -> f64 {
        match self.params[index] {
            Param::Delay(_) => 1e-12,
            Param::Angle(_) => 1e-7,
            _ => 1e-9,
        }
    }
}

/// How derivatives of `μ` and `Σ` are obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Derivatives {
    Analytic,
    /// Central differences with [`ParamLayout::fd_step`] scaled by `factor`.
    CentralDifference { factor: f64 },
}

/// Observation model on one transmit realization.
#[derive(Debug, Clone)]
pub struct SignalModel<'a> {
    pub params: ChannelParams,
    pub alloc: &'a ResourceAllocation,
    pub tx: &'a TransmitGrid,
    pub noise_power: f64,
    pub delta_f: f64,
    nu: usize,
    arrival: Vec<Vec<C64>>,
    arrival_d: Vec<Vec<C64>>,
    direct_dep: Vec<Vec<C64>>,
    cross_dep: Vec<Vec<C64>>,
}

impl<'a> SignalModel<'a> {
    pub fn new(
        params: ChannelParams,
        alloc: &'a ResourceAllocation,
        tx: &'a TransmitGrid,
        noise_power: f64,
        delta_f: f64,
    ) -> Result<Self> {
        if !(noise_power > 0.0) {
            return Err(Error::InvalidArgument("noise power must be positive".into()));
        }
        if tx.num_users() < 1 + params.num_iues.min(alloc.num_iues()) {
            return Err(Error::InvalidArgument("transmit grid lacks users".into()));
        }
        let nu = tx.num_antennas;
        let arrival = params.aoa.iter().map(|&t| steering_vector(t, nu)).collect();
        let arrival_d = params.aoa.iter().map(|&t| steering_derivative(t, nu)).collect();
        let direct_dep = params.aod.iter().map(|&t| steering_vector(t, nu)).collect();
        let cross_dep = params.cross.iter().map(|c| steering_vector(c.aod, nu)).collect();
        Ok(Self {
            params,
            alloc,
            tx,
            noise_power,
            delta_f,
            nu,
            arrival,
            arrival_d,
            direct_dep,
            cross_dep,
        })
    }

    fn with_params(&self, params: ChannelParams) -> Self {
        Self::new(params, self.alloc, self.tx, self.noise_power, self.delta_f).expect("validated model")
    }

    pub fn num_antennas(&self) -> usize {
        self.nu
    }

    fn iue_variance(&self, i: usize) -> f64 {
        self.tx.variances.get(i + 1).copied().unwrap_or(0.0)
    }

    /// `μ_{n,t} = Σ_l α_{0,l} (a^T(θ_l) x_{n,t}) d_n(2τ_l) a(θ_l)`.
    pub fn mean_vector(&self, n: usize, t: usize) -> Vec<C64> {
        let x = self.tx.x(0, n, t);
        let mut mu = vec![C64::new(0.0, 0.0); self.nu];
        for (l, g) in self.params.mono_gains.iter().enumerate() {
            let a = &self.arrival[l];
            let coef = g * beam(a, x) * delay_response(n, 2.0 * self.params.toa[l], self.delta_f);
            for (m, ak) in mu.iter_mut().zip(a) {
                *m += coef * ak;
            }
        }
        mu
    }

    /// `G_i` at subcarrier `n`.
    pub fn mixing_matrix(&self, i: usize, n: usize) -> CMat {
        let p = &self.params;
        let mut g = outer_t(&self.arrival[i], &self.direct_dep[i]) * (p.direct_gains[i] * delay_response(n, p.toa[i], self.delta_f));
        for (c, dep) in p.cross.iter().zip(&self.cross_dep).filter(|(c, _)| c.iue == i) {
            g += outer_t(&self.arrival[c.object], dep) * (c.gain * delay_response(n, c.toa, self.delta_f));
        }
        g
    }

    /// `Σ_{n,t} = σ² I + Σ_{i active} σ_i² G_i G_i^H`.
    pub fn covariance_matrix(&self, n: usize, t: usize) -> CMat {
        let mut s = CMat::identity(self.nu, self.nu) * C64::new(self.noise_power, 0.0);
        for i in self.active(n, t) {
            let g = self.mixing_matrix(i, n);
            s += (&g * g.adjoint()) * C64::new(self.iue_variance(i), 0.0);
        }
        s
    }

    fn active(&self, n: usize, t: usize) -> Vec<usize> {
        self.alloc
            .active_iues(n, t)
            .filter(|&i| i < self.params.num_iues)
            .collect()
    }

    /// `∂μ/∂η_p` for every layout parameter.
    pub fn mean_jacobian(&self, layout: &ParamLayout, n: usize, t: usize, how: Derivatives) -> Vec<Vec<C64>> {
        match how {
            Derivatives::Analytic => self.mean_jacobian_analytic(layout, n, t),
            Derivatives::CentralDifference { factor } => (0..layout.dim())
                .map(|k| {
                    let h = layout.fd_step(k) * factor;
                    let up = self.with_params(layout.perturbed(&self.params, k, h)).mean_vector(n, t);
                    let dn = self.with_params(layout.perturbed(&self.params, k, -h)).mean_vector(n, t);
                    up.iter().zip(&dn).map(|(u, d)| (u - d) / (2.0 * h)).collect()
                })
                .collect(),
        }
    }

    fn mean_jacobian_analytic(&self, layout: &ParamLayout, n: usize, t: usize) -> Vec<Vec<C64>> {
        let x = self.tx.x(0, n, t);
        let p = &self.params;
        let zero = vec![C64::new(0.0, 0.0); self.nu];
        let j = C64::new(0.0, 1.0);
        layout
            .params()
            .iter()
            .map(|q| match *q {
                Param::Delay(l) => {
                    let a = &self.arrival[l];
                    let d = delay_response(n, 2.0 * p.toa[l], self.delta_f);
                    let coef = p.mono_gains[l] * beam(a, x) * d * C64::new(0.0, -4.0 * PI * self.delta_f * n as f64);
                    a.iter().map(|ak| coef * ak).collect()
                }
                Param::Angle(l) => {
                    let a = &self.arrival[l];
                    let da = &self.arrival_d[l];
                    let d = p.mono_gains[l] * delay_response(n, 2.0 * p.toa[l], self.delta_f);
                    let (b, db) = (beam(a, x), beam(da, x));
                    a.iter().zip(da).map(|(ak, dak)| d * (db * ak + b * dak)).collect()
                }
                Param::MonoRe(l) | Param::MonoIm(l) => {
                    let a = &self.arrival[l];
                    let mut coef = beam(a, x) * delay_response(n, 2.0 * p.toa[l], self.delta_f);
                    if matches!(q, Param::MonoIm(_)) {
                        coef *= j;
                    }
                    a.iter().map(|ak| coef * ak).collect()
                }
                _ => zero.clone(),
            })
            .collect()
    }

    /// `∂G_i/∂η_p` for every layout parameter.
    fn mixing_jacobian(&self, layout: &ParamLayout, i: usize, n: usize) -> Vec<Option<CMat>> {
        let p = &self.params;
        let w = -2.0 * PI * self.delta_f * n as f64;
        let direct = |arr: &[C64], coef: C64| outer_t(arr, &self.direct_dep[i]) * coef;
        let paths = || p.cross.iter().enumerate().zip(&self.cross_dep).filter(move |((_, c), _)| c.iue == i);
        layout
            .params()
            .iter()
            .map(|q| match *q {
                Param::Delay(l) => {
                    let mut g: Option<CMat> = None;
                    if l == i {
                        let d = p.direct_gains[i] * delay_response(n, p.toa[i], self.delta_f) * C64::new(0.0, w);
                        g = Some(direct(&self.arrival[i], d));
                    }
                    for ((_, c), dep) in paths().filter(|((_, c), _)| c.object == l) {
                        let d = c.gain * delay_response(n, c.toa, self.delta_f) * C64::new(0.0, w);
                        add_into(&mut g, outer_t(&self.arrival[l], dep) * d);
                    }
                    g
                }
                Param::Angle(l) => {
                    let mut g: Option<CMat> = None;
                    if l == i {
                        let d = p.direct_gains[i] * delay_response(n, p.toa[i], self.delta_f);
                        g = Some(direct(&self.arrival_d[i], d));
                    }
                    for ((_, c), dep) in paths().filter(|((_, c), _)| c.object == l) {
                        let d = c.gain * delay_response(n, c.toa, self.delta_f);
                        add_into(&mut g, outer_t(&self.arrival_d[l], dep) * d);
                    }
                    g
                }
                Param::DirectRe(k) if k == i => Some(direct(&self.arrival[i], delay_response(n, p.toa[i], self.delta_f))),
                Param::CrossRe(k) | Param::CrossIm(k) if p.cross[k].iue == i => {
                    let c = &p.cross[k];
                    let mut d = delay_response(n, c.toa, self.delta_f);
                    if matches!(q, Param::CrossIm(_)) {
                        d *= C64::new(0.0, 1.0);
                    }
                    Some(outer_t(&self.arrival[c.object], &self.cross_dep[k]) * d)
                }
                _ => None,
            })
            .collect()
    }

    /// `∂Σ_{n,t}/∂η_p` for every layout parameter; `None` marks an exact zero.
    pub fn covariance_jacobian(&self, layout: &ParamLayout, n: usize, t: usize, how: Derivatives) -> Vec<Option<CMat>> {
        let active = self.active(n, t);
        if active.is_empty() {
            return vec![None; layout.dim()];
        }
        match how {
            Derivatives::Analytic => {
                let mut out: Vec<Option<CMat>> = vec![None; layout.dim()];
                for &i in &active {
                    let g = self.mixing_matrix(i, n);
                    let var = C64::new(self.iue_variance(i), 0.0);
                    for (slot, dg) in out.iter_mut().zip(self.mixing_jacobian(layout, i, n)) {
                        if let Some(dg) = dg {
                            let term = (&dg * g.adjoint() + &g * dg.adjoint()) * var;
                            add_into(slot, term);
                        }
                    }
                }
                out
            }
            Derivatives::CentralDifference { factor } => (0..layout.dim())
                .map(|k| {
                    let h = layout.fd_step(k) * factor;
                    let up = self.with_params(layout.perturbed(&self.params, k, h)).covariance_matrix(n, t);
                    let dn = self.with_params(layout.perturbed(&self.params, k, -h)).covariance_matrix(n, t);
                    Some((up - dn) / C64::new(2.0 * h, 0.0))
                })
                .collect(),
        }
    }
}

fn add_into(slot: &mut Option<CMat>, m: CMat) {
    match slot {
        Some(s) => *s += m,
        None => *slot = Some(m),
    }
}

/// `u v^T` (no conjugation).
fn outer_t(u: &[C64], v: &[C64]) -> CMat {
    CMat::from_fn(u.len(), v.len(), |i, j| u[i] * v[j])
}

/// `A(θ_a, θ_b) = a(θ_a) a^H(θ_b)`.
fn steering_outer(a: &[C64], b: &[C64]) -> CMat {
    CMat::from_fn(a.len(), b.len(), |i, j| a[i] * b[j].conj())
}

/// Interference covariance written out term by term:
/// `σ² I + Σ_i σ_i² [ |α_i|² A(θ_i) + Σ_{l≠i} ( |α_{i,l}|² A(θ_l) + V + V^H
/// + Σ_{j<l, j≠i} (W + W^H) ) ]` with
/// `V = A(θ_i,θ_l) α_i α*_{i,l} ⟨a(φ_{i,l}), a(φ_i)⟩ d_n(τ_i − τ_{i,l})` and
/// `W = A(θ_j,θ_l) α_{i,j} α*_{i,l} ⟨a(φ_{i,l}), a(φ_{i,j})⟩ d_n(τ_{i,j} − τ_{i,l})`.
pub fn covariance_cross_terms(model: &SignalModel<'_>, n: usize, t: usize) -> CMat {
    let p = &model.params;
    let nu = model.nu;
    let df = model.delta_f;
    let inner = |u: &[C64], v: &[C64]| -> C64 { u.iter().zip(v).map(|(a, b)| a.conj() * b).sum() };
    let mut s = CMat::identity(nu, nu) * C64::new(model.noise_power, 0.0);
    for i in model.active(n, t) {
        let ai = &model.arrival[i];
        let phi_i = steering_vector(p.aod[i], nu);
        let mut term = steering_outer(ai, ai) * C64::new(p.direct_gains[i].norm_sqr() * inner(&phi_i, &phi_i).re, 0.0);
        let paths: Vec<_> = p.cross.iter().filter(|c| c.iue == i).collect();
        for (li, cl) in paths.iter().enumerate() {
            let al = &model.arrival[cl.object];
            let phi_il = steering_vector(cl.aod, nu);
            term += steering_outer(al, al) * C64::new(cl.gain.norm_sqr() * inner(&phi_il, &phi_il).re, 0.0);
            let v = steering_outer(ai, al)
                * (p.direct_gains[i] * cl.gain.conj() * inner(&phi_il, &phi_i) * delay_response(n, p.toa[i] - cl.toa, df));
            term += &v + v.adjoint();
            for cj in &paths[..li] {
                let aj = &model.arrival[cj.object];
                let phi_ij = steering_vector(cj.aod, nu);
                let w = steering_outer(aj, al)
                    * (cj.gain * cl.gain.conj() * inner(&phi_il, &phi_ij) * delay_response(n, cj.toa - cl.toa, df));
                term += &w + w.adjoint();
            }
        }
        s += term * C64::new(model.iue_variance(i), 0.0);
    }
    s
}

/// Slepian–Bangs information summed over `resources` in row-major order:
/// `F_pq = Σ Tr(Σ⁻¹ ∂_pΣ Σ⁻¹ ∂_qΣ) + 2 Re(∂_pμ^H Σ⁻¹ ∂_qμ)`.
pub fn fim(model: &SignalModel<'_>, layout: &ParamLayout, resources: &ResourceSet, how: Derivatives) -> DMatrix<f64> {
    let d = layout.dim();
    let nu = model.nu;
    let mut f = DMatrix::<f64>::zeros(d, d);
    // Σ and ∂Σ only depend on the subcarrier and the set of active iUEs.
    let mut cache: BTreeMap<(usize, Vec<usize>), (CMat, Vec<Option<CMat>>)> = BTreeMap::new();
    let mut counts: BTreeMap<(usize, Vec<usize>), usize> = BTreeMap::new();
    for (n, t) in resources.iter() {
        let key = (n, model.active(n, t));
        if !cache.contains_key(&key) {
            let inv = if key.1.is_empty() {
                CMat::identity(nu, nu) * C64::new(1.0 / model.noise_power, 0.0)
            } else {
                hermitian_pd_inverse(&model.covariance_matrix(n, t)).expect("covariance is positive definite")
            };
            let ds = model.covariance_jacobian(layout, n, t, how);
            let m: Vec<Option<CMat>> = ds.into_iter().map(|o| o.map(|ds| &inv * ds)).collect();
            cache.insert(key.clone(), (inv, m));
        }
        *counts.entry(key.clone()).or_insert(0) += 1;

        let (inv, _) = &cache[&key];
        let jac = model.mean_jacobian(layout, n, t, how);
        let mats: Vec<Option<nalgebra::DVector<C64>>> = jac
            .iter()
            .map(|v| {
                if v.iter().all(|c| *c == C64::new(0.0, 0.0)) {
                    None
                } else {
                    Some(nalgebra::DVector::from_column_slice(v))
                }
            })
            .collect();
        let weighted: Vec<Option<nalgebra::DVector<C64>>> = mats.iter().map(|o| o.as_ref().map(|v| inv * v)).collect();
        for p in 0..d {
            let Some(dp) = &mats[p] else { continue };
            for q in p..d {
                let Some(wq) = &weighted[q] else { continue };
                let v = 2.0 * dp.dotc(wq).re;
                f[(p, q)] += v;
            }
        }
    }
    for (key, count) in &counts {
        let (_, m) = &cache[key];
        for p in 0..d {
            let Some(mp) = &m[p] else { continue };
            for q in p..d {
                let Some(mq) = &m[q] else { continue };
                let mut tr = C64::new(0.0, 0.0);
                for a in 0..nu {
                    for b in 0..nu {
                        tr += mp[(a, b)] * mq[(b, a)];
                    }
                }
                f[(p, q)] += *count as f64 * tr.re;
            }
        }
    }
    for p in 0..d {
        for q in 0..p {
            f[(p, q)] = f[(q, p)];
        }
    }
    f
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrlbReport {
    pub fim: DMatrix<f64>,
    pub inverse: DMatrix<f64>,
    /// Delay error bounds in seconds, per object.
    pub deb: Vec<f64>,
    /// Angle error bounds in radians, per object.
    pub aeb: Vec<f64>,
    /// Condition number of the diagonally equilibrated FIM.
    pub condition: f64,
    pub resource_count: usize,
}

/// Inverts `F` and extracts `DEB_l = √K_{l,l}`, `AEB_l = √K_{K+l,K+l}` for
/// `num_objects = K` objects.
pub fn bounds(f: &DMatrix<f64>, num_objects: usize) -> Result<CrlbReport> {
    let d = f.nrows();
    if f.ncols() != d || d < 2 * num_objects {
        return Err(Error::InvalidArgument(format!(
            "FIM of size {}x{} for {num_objects} objects",
            f.nrows(),
            f.ncols()
        )));
    }
    let diag: Vec<f64> = (0..d).map(|i| f[(i, i)]).collect();
    if diag.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(Error::SingularFim { condition: f64::INFINITY });
    }
    let s: Vec<f64> = diag.iter().map(|v| 1.0 / v.sqrt()).collect();
    let eq = DMatrix::from_fn(d, d, |i, j| f[(i, j)] * s[i] * s[j]);
    let eig = SymmetricEigen::new(eq.clone());
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    let condition = if min > 0.0 { max / min } else { f64::INFINITY };
    if !(condition < MAX_CONDITION) {
        return Err(Error::SingularFim { condition });
    }
    let inv_eq = eq
        .cholesky()
        .ok_or(Error::SingularFim { condition })?
        .inverse();
    let inverse = DMatrix::from_fn(d, d, |i, j| inv_eq[(i, j)] * s[i] * s[j]);
    let deb = (0..num_objects).map(|l| inverse[(l, l)].sqrt()).collect();
    let aeb = (0..num_objects)
        .map(|l| inverse[(num_objects + l, num_objects + l)].sqrt())
        .collect();
    Ok(CrlbReport {
        fim: f.clone(),
        inverse,
        deb,
        aeb,
        condition,
        resource_count: 0,
    })
}

/// Bounds over `resources`; interference gains are included exactly when
/// some resource in the set is interfered.
pub fn crlb(model: &SignalModel<'_>, resources: &ResourceSet) -> Result<CrlbReport> {
    let interfered = resources.iter().any(|(n, t)| !model.active(n, t).is_empty());
    let layout = ParamLayout::for_params(&model.params, interfered);
    let f = fim(model, &layout, resources, Derivatives::Analytic);
    let mut r = bounds(&f, layout.num_objects)?;
    r.resource_count = resources.len();
    Ok(r)
}
