use isac_core::crlb::{bounds, covariance_cross_terms, crlb, fim, Derivatives, ParamLayout, SignalModel};
use isac_core::linalg::{hermitian_eigh, CMat};
use isac_core::scenario::{derive_channel_params, ChannelParams, ScenarioConfig};
use isac_core::waveform::{
    delay_response, steering_vector, synthesize_transmit,
    ResourceAllocation, ResourceSet, TransmitGrid, UserResources,
};
use isac_core::C64;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

mod common;

use common::{normalized_gap, random_setup, reference_setup, rel_fro, sample_interference, Setup, DF};

#[test]
fn mean_vector_matches_independent_evaluation() {
    let params = ChannelParams {
        wavelength_m: 0.02,
        num_iues: 0,
        mono_gains: vec![C64::from_polar(1.1e-5, 0.4), C64::from_polar(2.3e-6, -1.9)],
        direct_gains: vec![],
        cross: vec![],
        aoa: vec![1.227_772_386_374_193, 0.339_292_614_454_014_4],
        aod: vec![],
        toa: vec![4.958_786_770_852_823e-8, 6.013_412_244_453_444e-8],
    };
    let alloc = ResourceAllocation::new(64, 30, vec![UserResources { freq: (0..64).collect(), time: (0..30).collect() }]).unwrap();
    let x: Vec<C64> = (0..6).map(|k| C64::from_polar(0.01 * (k + 1) as f64, 0.3 * k as f64)).collect();
    let data: Vec<C64> = (0..64 * 30).flat_map(|_| x.clone()).collect();
    let tx = TransmitGrid::new(64, 30, 6, vec![1.0], vec![data]).unwrap();
    let m = SignalModel::new(params, &alloc, &tx, 1e-15, DF).unwrap();
    // numpy evaluation of the same sum.
    for (n, norm, re3, im3) in [
        (0, 1.449_325_260_729_693_1e-7, 5.857_931_771_018_419_6e-8, 4.503_306_007_879_015_4e-8),
        (5, 1.441_861_231_008_709_2e-7, 7.372_220_615_754_791e-8, -1.219_641_589_935_020_6e-8),
        (37, 1.410_937_764_258_115e-7, 4.543_892_019_295_66e-8, 5.461_282_814_905_542_4e-8),
    ] {
        let mu = m.mean_vector(n, 4);
        let got: f64 = mu.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        assert!((got - norm).abs() < 1e-12 * norm, "n={n}: {got}");
        assert!((mu[3] - C64::new(re3, im3)).norm() < 1e-12 * norm);
    }
}

#[test]
fn mean_vector_collapses() {
    let mut s = random_setup(1);
    s.params.mono_gains.iter_mut().for_each(|g| *g = C64::new(0.0, 0.0));
    let m = SignalModel::new(s.params.clone(), &s.alloc, &s.tx, s.noise, DF).unwrap();
    let (n, t) = s.alloc.used_set(0).iter().next().unwrap();
    assert!(m.mean_vector(n, t).iter().all(|c| c.norm() == 0.0));

    let alloc = ResourceAllocation::new(4, 1, vec![UserResources { freq: (0..4).collect(), time: [0].into() }]).unwrap();
    let tx = synthesize_transmit(&alloc, &[1.0], 1, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
    let p = ChannelParams {
        wavelength_m: 0.02,
        num_iues: 0,
        mono_gains: vec![C64::new(0.3, -0.2)],
        direct_gains: vec![],
        cross: vec![],
        aoa: vec![0.7],
        aod: vec![],
        toa: vec![3e-8],
    };
    let m = SignalModel::new(p, &alloc, &tx, 1.0, DF).unwrap();
    let want = C64::new(0.3, -0.2) * tx.x(0, 3, 0)[0] * delay_response(3, 6e-8, DF);
    assert!((m.mean_vector(3, 0)[0] - want).norm() < 1e-15);
}

#[test]
fn covariance_clean_and_direct_only() {
    let s = random_setup(3);
    let m = SignalModel::new(s.params.clone(), &s.alloc, &s.tx, s.noise, DF).unwrap();
    let (n, t) = s.alloc.clean_set().iter().next().unwrap();
    let eye = CMat::identity(6, 6) * C64::new(s.noise, 0.0);
    assert_eq!(m.covariance_matrix(n, t), eye);

    let mut p = s.params.clone();
    p.cross.iter_mut().for_each(|c| c.gain = C64::new(0.0, 0.0));
    let m = SignalModel::new(p.clone(), &s.alloc, &s.tx, s.noise, DF).unwrap();
    let (n, t) = s.alloc.interfered_set().iter().next().unwrap();
    let a = steering_vector(p.aoa[0], 6);
    let want = eye + CMat::from_fn(6, 6, |i, j| a[i] * a[j].conj()) * C64::new(s.tx.variances[1] * p.direct_gains[0].norm_sqr(), 0.0);
    assert!(rel_fro(&m.covariance_matrix(n, t), &want) < 1e-12);
}

fn two_iue_setup(seed: u64) -> Setup {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cfg = ScenarioConfig::reference();
    cfg.iue_positions = vec![[5.0, 14.0], [12.0, -3.0]];
    cfg.sp_positions = vec![[17.0, 6.0], [8.0, 4.0]];
    cfg.tx_power_w = vec![0.05, 0.05, 0.03];
    let params = derive_channel_params(&cfg, &mut rng).unwrap();
    let all: std::collections::BTreeSet<usize> = (0..30).collect();
    let users = vec![
        UserResources { freq: (0..32).collect(), time: all.clone() },
        UserResources { freq: (24..56).collect(), time: all.clone() },
        UserResources { freq: (28..40).collect(), time: (0..15).collect() },
    ];
    let alloc = ResourceAllocation::new(64, 30, users).unwrap();
    let tx = synthesize_transmit(&alloc, &cfg.tx_power_w, 6, &mut rng).unwrap();
    Setup {
        params,
        alloc,
        tx,
        noise: cfg.noise_power_w,
    }
}

#[test]
fn factored_covariance_equals_cross_term_expansion() {
    let s = two_iue_setup(4);
    let m = SignalModel::new(s.params.clone(), &s.alloc, &s.tx, s.noise, DF).unwrap();
    for (n, t) in [(30, 3), (30, 20), (26, 0), (5, 5)] {
        let a = m.covariance_matrix(n, t);
        let b = covariance_cross_terms(&m, n, t);
        assert!(rel_fro(&a, &b) < 1e-12, "({n},{t}): {}", rel_fro(&a, &b));
    }
}

#[test]
fn covariance_matches_monte_carlo() {
    let s = reference_setup(0.05, 5);
    let m = SignalModel::new(s.params.clone(), &s.alloc, &s.tx, s.noise, DF).unwrap();
    let (n, t) = s.alloc.interfered_set().iter().next().unwrap();
    let sigma = covariance_cross_terms(&m, n, t);
    let (vals, _) = hermitian_eigh(&sigma);
    assert!(vals[0] >= s.noise * (1.0 - 1e-9));

    let draws = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let samples: Vec<Vec<C64>> = (0..draws)
        .map(|_| sample_interference(&s.params, n, s.tx.variances[1], s.noise, &mut rng))
        .collect();
    for i in 0..6 {
        for j in 0..6 {
            let prods: Vec<C64> = samples.iter().map(|z| z[i] * z[j].conj()).collect();
            let mean: C64 = prods.iter().sum::<C64>() / draws as f64;
            let var_re = prods.iter().map(|p| (p.re - mean.re).powi(2)).sum::<f64>() / (draws - 1) as f64;
            let var_im = prods.iter().map(|p| (p.im - mean.im).powi(2)).sum::<f64>() / (draws - 1) as f64;
            let (se_re, se_im) = ((var_re / draws as f64).sqrt(), (var_im / draws as f64).sqrt());
            let d = mean - sigma[(i, j)];
            assert!(d.re.abs() <= 3.0 * se_re + 1e-30, "({i},{j}) re {} vs {} se {se_re}", mean.re, sigma[(i, j)].re);
            assert!(d.im.abs() <= 3.0 * se_im + 1e-30, "({i},{j}) im {} vs {} se {se_im}", mean.im, sigma[(i, j)].im);
        }
    }
}

#[test]
fn derivatives_match_finite_differences() {
    for seed in 0..20 {
        let s = random_setup(100 + seed);
        let m = SignalModel::new(s.params.clone(), &s.alloc, &s.tx, s.noise, DF).unwrap();
        let layout = ParamLayout::for_params(&s.params, true);
        let fd = Derivatives::CentralDifference { factor: 1.0 };
        let (n, t) = s.alloc.interfered_set().iter().nth(seed as usize * 7).unwrap();
        let mu_a = m.mean_jacobian(&layout, n, t, Derivatives::Analytic);
        let mu_n = m.mean_jacobian(&layout, n, t, fd);
        let to_mat = |v: &Vec<Vec<C64>>| CMat::from_fn(6, v.len(), |i, k| v[k][i]);
        assert!(rel_fro(&to_mat(&mu_a), &to_mat(&mu_n)) < 1e-4, "seed {seed}: mean");
        let s_a = m.covariance_jacobian(&layout, n, t, Derivatives::Analytic);
        let s_n = m.covariance_jacobian(&layout, n, t, fd);
        for (k, (a, b)) in s_a.iter().zip(&s_n).enumerate() {
            let b = b.as_ref().unwrap();
            match a {
                Some(a) => assert!(rel_fro(a, b) < 1e-4, "seed {seed} param {k}: {}", rel_fro(a, b)),
                None => assert!(b.norm() < 1e-9 * m.covariance_matrix(n, t).norm(), "seed {seed} param {k}"),
            }
        }
    }
}

#[test]
fn fim_matches_finite_difference_fim() {
    for seed in 0..20 {
        let s = random_setup(200 + seed);
        let m = SignalModel::new(s.params.clone(), &s.alloc, &s.tx, s.noise, DF).unwrap();
        let layout = ParamLayout::for_params(&s.params, true);
        let all = s.alloc.used_set(0);
        let fa = fim(&m, &layout, &all, Derivatives::Analytic);
        let fd = fim(&m, &layout, &all, Derivatives::CentralDifference { factor: 1.0 });
        let gap = normalized_gap(&fa, &fd);
        assert!(gap < 1e-4, "seed {seed}: {gap}");
        // Richardson consistency of the numerical route itself.
        let fd2 = fim(&m, &layout, &all, Derivatives::CentralDifference { factor: 4.0 });
        assert!(normalized_gap(&fd, &fd2) < 1e-4, "seed {seed}");
    }
}

#[test]
fn empty_set_gives_zero_fim() {
    let s = random_setup(6);
    let m = SignalModel::new(s.params.clone(), &s.alloc, &s.tx, s.noise, DF).unwrap();
    let layout = ParamLayout::for_params(&s.params, true);
    let f = fim(&m, &layout, &ResourceSet::empty(64, 30), Derivatives::Analytic);
    assert!(f.iter().all(|&v| v == 0.0));
}

#[test]
fn clean_fim_is_mean_only() {
    let s = random_setup(7);
    let m = SignalModel::new(s.params.clone(), &s.alloc, &s.tx, s.noise, DF).unwrap();
    let layout = ParamLayout::for_params(&s.params, false);
    let clean = s.alloc.clean_set();
    let f = fim(&m, &layout, &clean, Derivatives::Analytic);
    let mut want = DMatrix::<f64>::zeros(layout.dim(), layout.dim());
    for (n, t) in clean.iter() {
        let j = m.mean_jacobian(&layout, n, t, Derivatives::Analytic);
        for p in 0..layout.dim() {
            for q in 0..layout.dim() {
                let v: C64 = j[p].iter().zip(&j[q]).map(|(a, b)| a.conj() * b).sum();
                want[(p, q)] += 2.0 * v.re / s.noise;
            }
        }
    }
    assert!(normalized_gap(&f, &want) < 1e-12);
}

#[test]
fn more_resources_never_loosen_the_bounds() {
    for seed in 0..5 {
        let s = reference_setup(0.06, 300 + seed);
        let m = SignalModel::new(s.params.clone(), &s.alloc, &s.tx, s.noise, DF).unwrap();
        let all = crlb(&m, &s.alloc.used_set(0)).unwrap();
        let clean = crlb(&m, &s.alloc.clean_set()).unwrap();
        assert_eq!(all.fim.nrows(), 11);
        assert_eq!(clean.fim.nrows(), 8);
        for l in 0..2 {
            assert!(all.deb[l] <= clean.deb[l] * (1.0 + 1e-9));
            assert!(all.aeb[l] <= clean.aeb[l] * (1.0 + 1e-9));
            assert!(all.deb[l] > 0.0 && all.aeb[l] > 0.0);
        }
    }
}

#[test]
fn interferer_angle_gains_most_from_interfered_resources() {
    let s = reference_setup(0.06, 9);
    let m = SignalModel::new(s.params.clone(), &s.alloc, &s.tx, s.noise, DF).unwrap();
    let all = crlb(&m, &s.alloc.used_set(0)).unwrap();
    let clean = crlb(&m, &s.alloc.clean_set()).unwrap();
    let gap = |a: f64, b: f64| (b - a) / a;
    let iue_angle = gap(all.aeb[0], clean.aeb[0]);
    let others = [gap(all.aeb[1], clean.aeb[1]), gap(all.deb[0], clean.deb[0]), gap(all.deb[1], clean.deb[1])];
    for o in others {
        assert!(iue_angle >= 10.0 * o, "{iue_angle} vs {others:?}");
    }
}

#[test]
fn bounds_diagonal_example() {
    let f = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![4.0, 9.0, 1.0, 1.0]));
    let r = bounds(&f, 2).unwrap();
    assert_eq!(r.deb, vec![0.5, 1.0 / 3.0]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn covariance_and_fim_are_hermitian_psd(seed in 0u64..1000) {
        let s = random_setup(seed);
        let m = SignalModel::new(s.params.clone(), &s.alloc, &s.tx, s.noise, DF).unwrap();
        let (n, t) = s.alloc.interfered_set().iter().next().unwrap();
        let c = m.covariance_matrix(n, t);
        prop_assert!((&c - c.adjoint()).norm() <= 1e-14 * c.norm());
        let (vals, _) = hermitian_eigh(&c);
        prop_assert!(vals[0] >= s.noise * (1.0 - 1e-6));
        let layout = ParamLayout::for_params(&s.params, true);
        let f = fim(&m, &layout, &s.alloc.used_set(0), Derivatives::Analytic);
        prop_assert!((&f - f.transpose()).norm() <= 1e-12 * f.norm());
        let d: Vec<f64> = (0..f.nrows()).map(|i| 1.0 / f[(i, i)].sqrt()).collect();
        let eq = DMatrix::from_fn(f.nrows(), f.ncols(), |i, j| f[(i, j)] * d[i] * d[j]);
        let eig = nalgebra::SymmetricEigen::new(eq);
        prop_assert!(eig.eigenvalues.min() > -1e-9);
    }
}
