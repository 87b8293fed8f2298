//! Resource allocation, transmit symbols and the received subcarrier-domain
//! tensor.
//!
//! Subcarriers are indexed `0..N` and symbols `0..T`. User 0 is the rUE;
//! user `i >= 1` is iUE `i - 1` (object `i - 1` in [`ChannelParams`]).

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::io::{Read, Write};

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::scenario::ChannelParams;
use crate::{Error, Result, C64};

/// A set of time-frequency resources on an `N x T` grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResourceSet {
    num_subcarriers: usize,
    num_symbols: usize,
    mask: Vec<bool>,
}

impl ResourceSet {
    pub fn empty(num_subcarriers: usize, num_symbols: usize) -> Self {
        Self {
            num_subcarriers,
            num_symbols,
            mask: vec![false; num_subcarriers * num_symbols],
        }
    }

    /// `freq x time`.
    pub fn product(
        num_subcarriers: usize,
        num_symbols: usize,
        freq: &BTreeSet<usize>,
        time: &BTreeSet<usize>,
    ) -> Self {
        let mut s = Self::empty(num_subcarriers, num_symbols);
        for &n in freq {
            for &t in time {
                s.insert(n, t);
            }
        }
        s
    }

    pub fn grid(&self) -> (usize, usize) {
        (self.num_subcarriers, self.num_symbols)
    }

    pub fn insert(&mut self, n: usize, t: usize) {
        self.mask[n * self.num_symbols + t] = true;
    }

    pub fn remove(&mut self, n: usize, t: usize) {
        self.mask[n * self.num_symbols + t] = false;
    }

    pub fn contains(&self, n: usize, t: usize) -> bool {
        n < self.num_subcarriers && t < self.num_symbols && self.mask[n * self.num_symbols + t]
    }

    pub fn len(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.mask.iter().any(|&b| b)
    }

    /// Resources in (n, t) row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let t = self.num_symbols;
        self.mask
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| (i / t, i % t))
    }

    pub fn difference(&self, other: &ResourceSet) -> ResourceSet {
        let mut out = self.clone();
        for (m, o) in out.mask.iter_mut().zip(&other.mask) {
            *m = *m && !*o;
        }
        out
    }

    pub fn intersection(&self, other: &ResourceSet) -> ResourceSet {
        let mut out = self.clone();
        for (m, o) in out.mask.iter_mut().zip(&other.mask) {
            *m = *m && *o;
        }
        out
    }

    pub fn is_subset(&self, other: &ResourceSet) -> bool {
        self.mask.iter().zip(&other.mask).all(|(a, b)| !*a || *b)
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }
}

/// Frequency and time support of one user.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserResources {
    pub freq: BTreeSet<usize>,
    pub time: BTreeSet<usize>,
}

impl UserResources {
    /// `M^(i) = N^(i) T^(i)`.
    pub fn count(&self) -> usize {
        self.freq.len() * self.time.len()
    }

    pub fn contains(&self, n: usize, t: usize) -> bool {
        self.freq.contains(&n) && self.time.contains(&t)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResourceAllocation {
    pub num_subcarriers: usize,
    pub num_symbols: usize,
    /// Index 0 is the rUE.
    pub users: Vec<UserResources>,
}

impl ResourceAllocation {
    pub fn new(num_subcarriers: usize, num_symbols: usize, users: Vec<UserResources>) -> Result<Self> {
        if users.is_empty() {
            return Err(Error::Allocation("no users".into()));
        }
        for u in &users {
            if u.freq.iter().any(|&n| n >= num_subcarriers) || u.time.iter().any(|&t| t >= num_symbols) {
                return Err(Error::Allocation("resource index outside the grid".into()));
            }
        }
        Ok(Self {
            num_subcarriers,
            num_symbols,
            users,
        })
    }

    pub fn rue(&self) -> &UserResources {
        &self.users[0]
    }

    pub fn num_iues(&self) -> usize {
        self.users.len() - 1
    }

    /// `Ω^(i)`.
    pub fn used_set(&self, user: usize) -> ResourceSet {
        let u = &self.users[user];
        ResourceSet::product(self.num_subcarriers, self.num_symbols, &u.freq, &u.time)
    }

    /// `Ω = Ω^(0) \ ∪_{i≥1} Ω^(i)`.
    pub fn clean_set(&self) -> ResourceSet {
        let mut s = self.used_set(0);
        for i in 1..self.users.len() {
            s = s.difference(&self.used_set(i));
        }
        s
    }

    /// `Ω^(0) \ Ω`.
    pub fn interfered_set(&self) -> ResourceSet {
        self.used_set(0).difference(&self.clean_set())
    }

    /// rUE subcarriers shared with at least one iUE.
    pub fn interfered_subcarriers(&self) -> BTreeSet<usize> {
        self.rue()
            .freq
            .iter()
            .copied()
            .filter(|n| self.users[1..].iter().any(|u| u.freq.contains(n) && !u.time.is_disjoint(&self.rue().time)))
            .collect()
    }

    /// rUE symbols shared with at least one iUE.
    pub fn interfered_symbols(&self) -> BTreeSet<usize> {
        self.rue()
            .time
            .iter()
            .copied()
            .filter(|t| self.users[1..].iter().any(|u| u.time.contains(t) && !u.freq.is_disjoint(&self.rue().freq)))
            .collect()
    }

    /// Users transmitting on (n, t), excluding the rUE.
    pub fn active_iues(&self, n: usize, t: usize) -> impl Iterator<Item = usize> + '_ {
        (1..self.users.len())
            .filter(move |&i| self.users[i].contains(n, t))
            .map(|i| i - 1)
    }
}

/// Draws a single-iUE allocation: the rUE takes `n_rue` subcarriers uniformly
/// without replacement; the iUE takes `n_overlap` of those plus
/// `n_iue - n_overlap` from the complement. Both use every symbol.
pub fn allocate_resources<R: Rng + ?Sized>(
    num_subcarriers: usize,
    num_symbols: usize,
    n_rue: usize,
    n_iue: usize,
    n_overlap: usize,
    rng: &mut R,
) -> Result<ResourceAllocation> {
    if n_rue == 0 || num_symbols == 0 {
        return Err(Error::Allocation("the rUE needs at least one resource".into()));
    }
    if n_overlap > n_rue.min(n_iue) {
        return Err(Error::Allocation(format!(
            "overlap {n_overlap} exceeds min(n_rue, n_iue) = {}",
            n_rue.min(n_iue)
        )));
    }
    if n_rue + n_iue - n_overlap > num_subcarriers {
        return Err(Error::Allocation(format!(
            "{n_rue} + {n_iue} - {n_overlap} subcarriers do not fit in {num_subcarriers}"
        )));
    }
    let rue_freq: Vec<usize> = sample(rng, num_subcarriers, n_rue).into_vec();
    let rue_set: BTreeSet<usize> = rue_freq.iter().copied().collect();
    let complement: Vec<usize> = (0..num_subcarriers).filter(|n| !rue_set.contains(n)).collect();

    let mut iue_set = BTreeSet::new();
    for k in sample(rng, n_rue, n_overlap) {
        iue_set.insert(rue_freq[k]);
    }
    for k in sample(rng, complement.len(), n_iue - n_overlap) {
        iue_set.insert(complement[k]);
    }
    let all_time: BTreeSet<usize> = (0..num_symbols).collect();
    ResourceAllocation::new(
        num_subcarriers,
        num_symbols,
        vec![
            UserResources {
                freq: rue_set,
                time: all_time.clone(),
            },
            UserResources {
                freq: iue_set,
                time: all_time,
            },
        ],
    )
}

/// Half-wavelength ULA response `a_k(θ) = N_u^{-1/2} exp(jπ sin θ k)`, `k = 0..N_u`.
pub fn steering_vector(theta: f64, num_antennas: usize) -> Vec<C64> {
    let amp = (num_antennas as f64).powf(-0.5);
    let u = PI * theta.sin();
    (0..num_antennas)
        .map(|k| C64::from_polar(amp, u * k as f64))
        .collect()
}

/// `∂a(θ)/∂θ`.
pub fn steering_derivative(theta: f64, num_antennas: usize) -> Vec<C64> {
    let du = PI * theta.cos();
    steering_vector(theta, num_antennas)
        .into_iter()
        .enumerate()
        .map(|(k, a)| a * C64::new(0.0, du * k as f64))
        .collect()
}

/// `d_n(τ) = exp(−j2π Δf n τ)`.
pub fn delay_response(n: usize, tau: f64, delta_f: f64) -> C64 {
    C64::from_polar(1.0, -2.0 * PI * delta_f * n as f64 * tau)
}

/// `a^T x`: the array factor of transmit vector `x` towards steering `a`.
#[inline]
pub fn beam(a: &[C64], x: &[C64]) -> C64 {
    a.iter().zip(x).map(|(a, x)| a * x).sum()
}

/// Per-user transmit vectors on the full grid, zero outside each user's support.
#[derive(Debug, Clone, PartialEq)]
pub struct TransmitGrid {
    pub num_subcarriers: usize,
    pub num_symbols: usize,
    pub num_antennas: usize,
    /// Per-entry variance `σ_i²` of each user.
    pub variances: Vec<f64>,
    data: Vec<Vec<C64>>,
}

impl TransmitGrid {
    /// Wraps per-user grids stored row-major in (n, t, k).
    pub fn new(
        num_subcarriers: usize,
        num_symbols: usize,
        num_antennas: usize,
        variances: Vec<f64>,
        data: Vec<Vec<C64>>,
    ) -> Result<Self> {
        let len = num_subcarriers * num_symbols * num_antennas;
        if variances.len() != data.len() || data.iter().any(|d| d.len() != len) {
            return Err(Error::InvalidArgument("transmit grid dimensions do not match".into()));
        }
        Ok(Self {
            num_subcarriers,
            num_symbols,
            num_antennas,
            variances,
            data,
        })
    }

    pub fn x(&self, user: usize, n: usize, t: usize) -> &[C64] {
        let k = self.num_antennas;
        let off = (n * self.num_symbols + t) * k;
        &self.data[user][off..off + k]
    }

    pub fn num_users(&self) -> usize {
        self.data.len()
    }
}

/// Draws `x^(i)_{n,t} ~ CN(0, σ_i² I)` on each user's support with
/// `σ_i² = E_i / (M^(0) N_u)`.
pub fn synthesize_transmit<R: Rng + ?Sized>(
    alloc: &ResourceAllocation,
    powers: &[f64],
    num_antennas: usize,
    rng: &mut R,
) -> Result<TransmitGrid> {
    if powers.len() != alloc.users.len() {
        return Err(Error::InvalidArgument(format!(
            "{} powers for {} users",
            powers.len(),
            alloc.users.len()
        )));
    }
    let m0 = alloc.rue().count();
    if m0 == 0 {
        return Err(Error::EmptyAllocation);
    }
    let (nn, tt) = (alloc.num_subcarriers, alloc.num_symbols);
    let mut variances = Vec::with_capacity(powers.len());
    let mut data = Vec::with_capacity(powers.len());
    for (user, &e) in alloc.users.iter().zip(powers) {
        let var = e / (m0 * num_antennas) as f64;
        let mut grid = vec![C64::new(0.0, 0.0); nn * tt * num_antennas];
        if var > 0.0 {
            for &n in &user.freq {
                for &t in &user.time {
                    let off = (n * tt + t) * num_antennas;
                    for v in &mut grid[off..off + num_antennas] {
                        *v = complex_normal(rng, var);
                    }
                }
            }
        }
        variances.push(var);
        data.push(grid);
    }
    Ok(TransmitGrid {
        num_subcarriers: nn,
        num_symbols: tt,
        num_antennas,
        variances,
        data,
    })
}

/// One `CN(0, var)` draw.
#[inline]
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R, var: f64) -> C64 {
    let s = (var / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(s * re, s * im)
}

/// Complex observations `y_{n,t,k}` stored row-major in (n, t, k).
#[derive(Debug, Clone, PartialEq)]
pub struct ReceivedTensor {
    pub num_subcarriers: usize,
    pub num_symbols: usize,
    pub num_antennas: usize,
    data: Vec<C64>,
}

impl ReceivedTensor {
    pub fn zeros(num_subcarriers: usize, num_symbols: usize, num_antennas: usize) -> Self {
        Self {
            num_subcarriers,
            num_symbols,
            num_antennas,
            data: vec![C64::new(0.0, 0.0); num_subcarriers * num_symbols * num_antennas],
        }
    }

    pub fn from_vec(num_subcarriers: usize, num_symbols: usize, num_antennas: usize, data: Vec<C64>) -> Result<Self> {
        if data.len() != num_subcarriers * num_symbols * num_antennas {
            return Err(Error::InvalidArgument("tensor data length does not match shape".into()));
        }
        Ok(Self {
            num_subcarriers,
            num_symbols,
            num_antennas,
            data,
        })
    }

    /// The antenna snapshot `y_{n,t}`.
    pub fn snapshot(&self, n: usize, t: usize) -> &[C64] {
        let k = self.num_antennas;
        let off = (n * self.num_symbols + t) * k;
        &self.data[off..off + k]
    }

    pub fn snapshot_mut(&mut self, n: usize, t: usize) -> &mut [C64] {
        let k = self.num_antennas;
        let off = (n * self.num_symbols + t) * k;
        &mut self.data[off..off + k]
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn scaled(&self, factor: f64) -> ReceivedTensor {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v *= factor);
        out
    }

    /// Writes the debug dump: magic `ISACY001`, then little-endian u64 `N`,
    /// `T`, `N_u`, user count `U`, then `U` masks of `N*T` bytes (row-major
    /// (n, t), 1 = used), then the tensor as interleaved re/im f64 in
    /// row-major (n, t, k).
    pub fn write_dump<W: Write>(&self, alloc: &ResourceAllocation, mut w: W) -> Result<()> {
        w.write_all(DUMP_MAGIC)?;
        for v in [
            self.num_subcarriers,
            self.num_symbols,
            self.num_antennas,
            alloc.users.len(),
        ] {
            w.write_all(&(v as u64).to_le_bytes())?;
        }
        for u in 0..alloc.users.len() {
            let mask: Vec<u8> = alloc.used_set(u).mask().iter().map(|&b| b as u8).collect();
            w.write_all(&mask)?;
        }
        for v in &self.data {
            w.write_all(&v.re.to_le_bytes())?;
            w.write_all(&v.im.to_le_bytes())?;
        }
        Ok(())
    }

    /// Reads a dump written by [`ReceivedTensor::write_dump`], returning the
    /// tensor and the per-user resource masks.
    pub fn read_dump<R: Read>(mut r: R) -> Result<(ReceivedTensor, Vec<ResourceSet>)> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != DUMP_MAGIC {
            return Err(Error::InvalidArgument("not a received-tensor dump".into()));
        }
        let mut word = [0u8; 8];
        let mut next = |r: &mut R| -> Result<usize> {
            r.read_exact(&mut word)?;
            Ok(u64::from_le_bytes(word) as usize)
        };
        let (nn, tt, nu, users) = (next(&mut r)?, next(&mut r)?, next(&mut r)?, next(&mut r)?);
        let mut masks = Vec::with_capacity(users);
        for _ in 0..users {
            let mut buf = vec![0u8; nn * tt];
            r.read_exact(&mut buf)?;
            let mut s = ResourceSet::empty(nn, tt);
            for (i, b) in buf.iter().enumerate() {
                if *b != 0 {
                    s.insert(i / tt, i % tt);
                }
            }
            masks.push(s);
        }
        let mut data = Vec::with_capacity(nn * tt * nu);
        let mut f = [0u8; 8];
        for _ in 0..nn * tt * nu {
            r.read_exact(&mut f)?;
            let re = f64::from_le_bytes(f);
            r.read_exact(&mut f)?;
            data.push(C64::new(re, f64::from_le_bytes(f)));
        }
        Ok((ReceivedTensor::from_vec(nn, tt, nu, data)?, masks))
    }
}

const DUMP_MAGIC: &[u8; 8] = b"ISACY001";

/// Noise-free part of the received signal: monostatic echoes, direct iUE
/// paths and iUE scatter paths.
pub fn synthesize_noiseless(params: &ChannelParams, tx: &TransmitGrid, alloc: &ResourceAllocation, delta_f: f64) -> ReceivedTensor {
    let nu = tx.num_antennas;
    let mut y = ReceivedTensor::zeros(alloc.num_subcarriers, alloc.num_symbols, nu);
    let arrival: Vec<Vec<C64>> = params.aoa.iter().map(|&th| steering_vector(th, nu)).collect();
    let direct_dep: Vec<Vec<C64>> = params.aod.iter().map(|&ph| steering_vector(ph, nu)).collect();
    let cross_dep: Vec<Vec<C64>> = params.cross.iter().map(|c| steering_vector(c.aod, nu)).collect();

    let add = |y: &mut ReceivedTensor, n: usize, t: usize, coef: C64, arr: &[C64]| {
        for (v, a) in y.snapshot_mut(n, t).iter_mut().zip(arr) {
            *v += coef * a;
        }
    };

    for (n, t) in alloc.used_set(0).iter() {
        let x = tx.x(0, n, t);
        for (l, g) in params.mono_gains.iter().enumerate() {
            let coef = g * beam(&arrival[l], x) * delay_response(n, 2.0 * params.toa[l], delta_f);
            add(&mut y, n, t, coef, &arrival[l]);
        }
    }
    for i in 0..params.num_iues {
        let user = i + 1;
        if user >= alloc.users.len() {
            break;
        }
        for (n, t) in alloc.used_set(user).iter() {
            let x = tx.x(user, n, t);
            let coef = params.direct_gains[i] * beam(&direct_dep[i], x) * delay_response(n, params.toa[i], delta_f);
            add(&mut y, n, t, coef, &arrival[i]);
            for (c, dep) in params.cross.iter().zip(&cross_dep).filter(|(c, _)| c.iue == i) {
                let coef = c.gain * beam(dep, x) * delay_response(n, c.toa, delta_f);
                add(&mut y, n, t, coef, &arrival[c.object]);
            }
        }
    }
    y
}

/// Adds iid `CN(0, σ²)` noise to every element, in (n, t, k) order.
pub fn add_noise<R: Rng + ?Sized>(y: &mut ReceivedTensor, noise_power: f64, rng: &mut R) {
    if noise_power <= 0.0 {
        return;
    }
    for v in y.data.iter_mut() {
        *v += complex_normal(rng, noise_power);
    }
}

/// Received tensor: noiseless paths plus AWGN on every (n, t, k).
pub fn synthesize_received<R: Rng + ?Sized>(
    params: &ChannelParams,
    tx: &TransmitGrid,
    alloc: &ResourceAllocation,
    noise_power: f64,
    delta_f: f64,
    rng: &mut R,
) -> ReceivedTensor {
    let mut y = synthesize_noiseless(params, tx, alloc, delta_f);
    add_noise(&mut y, noise_power, rng);
    y
}
