//! Acceptance suite: one PASS/FAIL line per criterion. Tolerances are pinned
//! here. With `ACCEPTANCE_STRICT=1` any failed criterion gives a nonzero exit.

mod common;

use std::time::{Duration, Instant};

use isac_core::crlb::{crlb, fim, Derivatives, ParamLayout, SignalModel};
use isac_core::detect::{calibrate_beta, fwer_monte_carlo, fwer_theoretical};
use isac_core::estimate::{music_estimate, omp_estimate, solve_assignment, GridConfig};
use isac_core::harness::pipeline::mean_bounds;
use isac_core::harness::{run_experiment, ExperimentConfig, ExperimentKind, ExperimentSpec};
use isac_core::linalg::hermitian_eigh;
use isac_core::par::{derive_seed, map_indexed, ExecMode};
use isac_core::scenario::{ChannelParams, ScenarioConfig};
use isac_core::waveform::{
    complex_normal, steering_vector, synthesize_noiseless, synthesize_transmit, ReceivedTensor, ResourceAllocation,
    UserResources,
};
use isac_core::C64;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Gamma;

use common::{normalized_gap, random_setup, reference_setup, sample_interference, DF};

const SHAPE: f64 = 180.0;
const N_STATS: usize = 32;
const SEED: u64 = 20_240_601;

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: impl Into<String>) -> Verdict {
    Verdict { passed, detail: detail.into() }
}

fn config() -> ExperimentConfig {
    ExperimentConfig::from_toml_file(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/reference.toml"))
        .expect("reference config")
}

fn failed_assertions(out: &isac_core::harness::ExperimentOutput, keep: impl Fn(&str) -> bool) -> Vec<String> {
    out.assertions
        .iter()
        .filter(|a| keep(&a.name) && !a.passed)
        .map(|a| format!("{} ({})", a.name, a.detail))
        .collect()
}

fn calibration() -> Verdict {
    let start = Instant::now();
    let beta = calibrate_beta(0.01, SHAPE, N_STATS).unwrap();
    let t = start.elapsed();
    verdict(
        (beta - 1.561).abs() <= 0.01 && t < Duration::from_secs(10),
        format!("beta* = {beta:.5}, {t:.2?}"),
    )
}

fn scale_invariance() -> Verdict {
    let start = Instant::now();
    let mut a = ChaCha8Rng::seed_from_u64(derive_seed(SEED, 2, 0));
    let mut b = ChaCha8Rng::seed_from_u64(derive_seed(SEED, 2, 1));
    let (p1, s1) = fwer_monte_carlo(1.561, SHAPE, N_STATS, 1.0, 100_000, &mut a).unwrap();
    let (p2, s2) = fwer_monte_carlo(1.561, SHAPE, N_STATS, 1e4, 100_000, &mut b).unwrap();
    let t = start.elapsed();
    let tol = 3.0 * s1.hypot(s2);
    verdict(
        (p1 - p2).abs() <= tol && t < Duration::from_secs(30),
        format!("scale 1: {p1:.5}, scale 1e4: {p2:.5}, |diff| {:.5} <= {tol:.5}, {t:.2?}", (p1 - p2).abs()),
    )
}

fn fwer_control() -> Verdict {
    let start = Instant::now();
    let mut cfg = config();
    cfg.harness.fwer_overlaps = vec![0, 4, 8, 16];
    cfg.harness.fwer_deltas = vec![0.1, 0.01];
    cfg.harness.fwer_trials = 2000;
    let out = run_experiment(&ExperimentSpec::new(ExperimentKind::FwerVsOverlap, &cfg, SEED)).unwrap();
    let t = start.elapsed();
    let bad = failed_assertions(&out, |_| true);
    let worst = out
        .table
        .rows
        .iter()
        .filter(|r| r.metric == "fwer_freq")
        .map(|r| format!("k={} {}: {:.4}", r.x, r.setting, r.value))
        .collect::<Vec<_>>()
        .join(", ");
    verdict(
        bad.is_empty() && out.assertions.len() == 8 && t < Duration::from_secs(300),
        format!("{worst}; {t:.1?}{}", if bad.is_empty() { String::new() } else { format!("; failed: {bad:?}") }),
    )
}

fn detection_power() -> Verdict {
    let mut cfg = config();
    cfg.harness.power_e1_grid = vec![0.05];
    cfg.harness.power_check_e1 = 0.05;
    cfg.harness.power_delta = 1e-3;
    cfg.harness.power_e0 = 0.05;
    cfg.harness.power_trials = 1250;
    let out = run_experiment(&ExperimentSpec::new(ExperimentKind::DetectionPower, &cfg, SEED)).unwrap();
    let row = out.table.find(0.05, &format!("delta=0.001,e0=0.05,overlap={}", cfg.harness.power_overlap), "detector", "all", "detection_rate").unwrap();
    verdict(
        row.value > 0.99 && row.trials >= 10_000,
        format!("rate {:.5} over {} interfered-subcarrier instances", row.value, row.trials),
    )
}

fn rmse_vs_bound() -> Verdict {
    let start = Instant::now();
    let mut cfg = config();
    let h = &mut cfg.harness;
    h.rmse_e0_grid = vec![0.06, 0.08, 0.1];
    h.rmse_overlap_grid = vec![];
    h.rmse_overlap = 8;
    h.rmse_e1 = 0.05;
    h.rmse_delta = 1e-3;
    h.rmse_trials = 500;
    h.bound_factor = 1.5;
    h.bound_check_e0 = 0.06;
    h.ratio_band = [0.8, 1.25];
    let out = run_experiment(&ExperimentSpec::new(ExperimentKind::RmseSweep, &cfg, SEED)).unwrap();
    let t = start.elapsed();
    let in_scope = |name: &str| name.contains("x bound") || name.contains("ratio in band") || name.contains("worse than proposed");
    let checked = out.assertions.iter().filter(|a| in_scope(&a.name)).count();
    let bad = failed_assertions(&out, in_scope);
    let mut detail = String::new();
    for e0 in [0.06, 0.08, 0.1] {
        for target in ["iue1", "sp1"] {
            let get = |m: &str, metric: &str| out.table.find(e0, "overlap=8", m, target, metric).map(|r| r.value).unwrap_or(f64::NAN);
            detail += &format!(
                "\n    E0={e0} {target}: RMSE over clean-set bound: delay oracle {:.2}, proposed {:.2}; angle oracle {:.2}, proposed {:.2}",
                get("oracle", "delay_rmse") / get("crlb_clean", "deb"),
                get("proposed", "delay_rmse") / get("crlb_clean", "deb"),
                get("oracle", "angle_rmse") / get("crlb_clean", "aeb"),
                get("proposed", "angle_rmse") / get("crlb_clean", "aeb"),
            );
        }
    }
    for a in &bad {
        detail += &format!("\n    failed: {a}");
    }
    verdict(
        bad.is_empty() && checked > 0 && t < Duration::from_secs(1200),
        format!("{checked} checks, {} failed, {t:.1?}{detail}", bad.len()),
    )
}

fn crlb_structure() -> Verdict {
    let cfg = ScenarioConfig::reference();
    let mut ordered = true;
    for seed in 0..20 {
        let s = reference_setup(0.06, derive_seed(SEED, 6, seed));
        let m = SignalModel::new(s.params.clone(), &s.alloc, &s.tx, s.noise, DF).unwrap();
        let all = crlb(&m, &s.alloc.used_set(0)).unwrap();
        let clean = crlb(&m, &s.alloc.clean_set()).unwrap();
        for l in 0..2 {
            ordered &= all.deb[l] <= clean.deb[l] * (1.0 + 1e-9) && all.aeb[l] <= clean.aeb[l] * (1.0 + 1e-9);
        }
    }
    let (b, used) = mean_bounds(&cfg, &[0.06, 0.05], 32, 32, 8, 50, SEED, ExecMode::Parallel).unwrap();
    let gap = |all: f64, clean: f64| (clean - all) / all;
    let iue_angle = gap(b.aeb_all[0], b.aeb_clean[0]);
    let others = [gap(b.deb_all[0], b.deb_clean[0]), gap(b.deb_all[1], b.deb_clean[1]), gap(b.aeb_all[1], b.aeb_clean[1])];
    let ratio = others.iter().map(|&o| iue_angle / o.max(f64::MIN_POSITIVE)).fold(f64::INFINITY, f64::min);
    verdict(
        ordered && ratio >= 10.0,
        format!(
            "ordering over 20 draws: {ordered}; iUE angle gap {iue_angle:.3} vs others {:.4}/{:.4}/{:.4} (min ratio {ratio:.1}, {used} draws)",
            others[0], others[1], others[2]
        ),
    )
}

fn numerical_suite() -> Verdict {
    let mut notes = Vec::new();
    let mut ok = true;

    // FIM against a finite-difference FIM at 20 random points.
    let mut worst = 0.0f64;
    for seed in 0..20 {
        let s = random_setup(derive_seed(SEED, 7, seed));
        let m = SignalModel::new(s.params.clone(), &s.alloc, &s.tx, s.noise, DF).unwrap();
        let layout = ParamLayout::for_params(&s.params, true);
        let all = s.alloc.used_set(0);
        let fa = fim(&m, &layout, &all, Derivatives::Analytic);
        let fd = fim(&m, &layout, &all, Derivatives::CentralDifference { factor: 1.0 });
        worst = worst.max(normalized_gap(&fa, &fd));
    }
    ok &= worst < 1e-4;
    notes.push(format!("FIM vs FD worst {worst:.2e}"));

    // Interference covariance against 1e5 independent draws.
    let s = reference_setup(0.05, derive_seed(SEED, 7, 100));
    let m = SignalModel::new(s.params.clone(), &s.alloc, &s.tx, s.noise, DF).unwrap();
    let (n, t) = s.alloc.interfered_set().iter().next().unwrap();
    let sigma = m.covariance_matrix(n, t);
    let (vals, _) = hermitian_eigh(&sigma);
    let draws = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(SEED, 7, 101));
    let samples: Vec<Vec<C64>> =
        (0..draws).map(|_| sample_interference(&s.params, n, s.tx.variances[1], s.noise, &mut rng)).collect();
    let mut worst_z = 0.0f64;
    for i in 0..6 {
        for j in 0..6 {
            let prods: Vec<C64> = samples.iter().map(|z| z[i] * z[j].conj()).collect();
            let mean: C64 = prods.iter().sum::<C64>() / draws as f64;
            let var_re = prods.iter().map(|p| (p.re - mean.re).powi(2)).sum::<f64>() / (draws - 1) as f64;
            let var_im = prods.iter().map(|p| (p.im - mean.im).powi(2)).sum::<f64>() / (draws - 1) as f64;
            let d = mean - sigma[(i, j)];
            worst_z = worst_z.max(d.re.abs() / (var_re / draws as f64).sqrt());
            if i != j {
                worst_z = worst_z.max(d.im.abs() / (var_im / draws as f64).sqrt());
            }
        }
    }
    let psd = vals[0] >= s.noise * (1.0 - 1e-9);
    ok &= worst_z <= 3.0 && psd;
    notes.push(format!("covariance vs MC worst {worst_z:.2} SE, Σ ⪰ σ²I: {psd}"));

    // Noiseless recovery.
    let grid = GridConfig::for_spacing(DF);
    let alloc = ResourceAllocation::new(
        64,
        30,
        vec![UserResources { freq: (0..64).step_by(2).collect(), time: (0..30).collect() }],
    )
    .unwrap();
    let set = alloc.used_set(0);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(SEED, 7, 102));
    let mut y = ReceivedTensor::zeros(64, 30, 6);
    let a = steering_vector(0.3, 6);
    for (n, t) in set.iter() {
        let s = complex_normal(&mut rng, 1.0);
        for (v, ak) in y.snapshot_mut(n, t).iter_mut().zip(&a) {
            *v += s * ak;
        }
    }
    let music_err = (music_estimate(&y, &set, 1, &grid).unwrap().peaks[0].angle - 0.3).abs();
    let params = ChannelParams {
        wavelength_m: 0.02,
        num_iues: 0,
        mono_gains: vec![C64::from_polar(1e-4, 0.7)],
        direct_gains: vec![],
        cross: vec![],
        aoa: vec![0.339_292_614_454_014_4],
        aod: vec![],
        toa: vec![6.013_412_244_453_444e-8],
    };
    let tx = synthesize_transmit(&alloc, &[0.05], 6, &mut rng).unwrap();
    let y = synthesize_noiseless(&params, &tx, &alloc, DF);
    let p = omp_estimate(&y, &tx, &set, 1, &grid, DF).unwrap().pairs[0];
    let (de, ae) = ((p.delay - params.toa[0]).abs(), (p.angle - params.aoa[0]).abs());
    ok &= music_err < 1e-4 && de < 1e-10 && ae < 1e-4;
    notes.push(format!("MUSIC err {music_err:.1e} rad, OMP err {de:.1e} s / {ae:.1e} rad"));

    // Assignment against brute force.
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(SEED, 7, 103));
    let mut assign_ok = true;
    for case in 0..400 {
        let s = 1 + case % 4;
        let c: Vec<Vec<f64>> = (0..s).map(|_| (0..s).map(|_| rng.random_range(0.0..10.0)).collect()).collect();
        let (_, cost) = solve_assignment(&c).unwrap();
        let mut perm: Vec<usize> = (0..s).collect();
        let mut best = f64::INFINITY;
        permutations(&mut perm, 0, &mut |p| best = best.min(p.iter().enumerate().map(|(i, &j)| c[i][j]).sum()));
        assign_ok &= (cost - best).abs() <= 1e-9;
    }
    ok &= assign_ok;
    notes.push(format!("assignment = brute force on 400 cases: {assign_ok}"));

    // Quadrature against 1e7 unit-scale draws, shared across five thresholds.
    let betas = [1.3, 1.4, 1.45, 1.5, 1.561];
    let chunks = 100;
    let per_chunk = 100_000;
    let counts = map_indexed(chunks, ExecMode::Parallel, |c| {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(SEED, 8, c as u64));
        let g = Gamma::new(SHAPE, 1.0).unwrap();
        let mut hits = [0usize; 5];
        for _ in 0..per_chunk {
            let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
            for _ in 0..N_STATS {
                let x: f64 = g.sample(&mut rng);
                lo = lo.min(x);
                hi = hi.max(x);
            }
            for (h, &b) in hits.iter_mut().zip(&betas) {
                *h += (hi > b * lo) as usize;
            }
        }
        hits
    });
    let total = (chunks * per_chunk) as f64;
    let mut worst = 0.0f64;
    for (k, &b) in betas.iter().enumerate() {
        let p = counts.iter().map(|h| h[k]).sum::<usize>() as f64 / total;
        let q = fwer_theoretical(b, SHAPE, N_STATS).unwrap();
        worst = worst.max((p - q).abs() / (q * (1.0 - q) / total).sqrt());
    }
    ok &= worst <= 3.0;
    notes.push(format!("quadrature vs 1e7 MC worst {worst:.2} SE"));

    verdict(ok, notes.join("; "))
}

fn permutations(p: &mut Vec<usize>, k: usize, f: &mut impl FnMut(&[usize])) {
    if k == p.len() {
        f(p);
        return;
    }
    for i in k..p.len() {
        p.swap(k, i);
        permutations(p, k + 1, f);
        p.swap(k, i);
    }
}

fn main() {
    let criteria: [(&str, fn() -> Verdict); 7] = [
        ("threshold calibration", calibration),
        ("scale invariance", scale_invariance),
        ("FWER control", fwer_control),
        ("detection power", detection_power),
        ("estimator vs bound", rmse_vs_bound),
        ("bound structure", crlb_structure),
        ("numerical correctness", numerical_suite),
    ];
    let mut failures = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let v = run();
        let tag = if v.passed { "PASS" } else { "FAIL" };
        failures += !v.passed as usize;
        println!("criterion {} [{tag}] {name} ({:.1?}): {}", i + 1, start.elapsed(), v.detail);
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failures, criteria.len());
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if failures > 0 && strict {
        std::process::exit(1);
    }
}
