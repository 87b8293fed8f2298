use std::collections::BTreeSet;

use super::pipeline::{detect, draw_realization, run_methods, trial_bounds, truth, MethodEstimates, TrialBounds};
use super::{Assertion, ExperimentOutput, ExperimentSpec, ResultRow, ResultTable};
use crate::detect::{fwer_theoretical, subcarrier_powers, BetaCache, DetectionConfig};
use crate::estimate::{rmse, DelayAngle, GridConfig, TargetRmse};
use crate::par::{derive_seed, map_indexed};
use crate::{Error, Result};

fn seed(spec: &ExperimentSpec, point: usize, trial: usize) -> u64 {
    derive_seed(spec.seed, (spec.kind.stream() << 32) | point as u64, trial as u64)
}

fn binomial_se(p: f64, n: usize) -> f64 {
    if n == 0 {
        return f64::NAN;
    }
    (p * (1.0 - p) / n as f64).sqrt()
}

struct Rows<'a> {
    spec: &'a ExperimentSpec,
    sweep: &'a str,
    table: ResultTable,
}

impl Rows<'_> {
    #[allow(clippy::too_many_arguments)]
    fn push(&mut self, x: f64, setting: &str, method: &str, target: &str, metric: &str, value: f64, se: f64, trials: usize, failures: usize) {
        self.table.push(ResultRow {
            experiment: self.spec.kind.name().to_string(),
            sweep: self.sweep.to_string(),
            x,
            setting: setting.to_string(),
            method: method.to_string(),
            target: target.to_string(),
            metric: metric.to_string(),
            value,
            se,
            trials,
            failures,
        });
    }
}

fn assertion(spec: &ExperimentSpec, name: String, passed: bool, detail: String) -> Assertion {
    Assertion {
        experiment: spec.kind.name().to_string(),
        name,
        passed,
        detail,
    }
}

fn collect<T>(results: Vec<Result<T>>) -> Result<Vec<T>> {
    results.into_iter().collect()
}

/// Empirical and theoretical FWER against β under the global null (no overlap).
pub fn run_beta_sweep(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    let (cfg, s) = (&spec.scenario, &spec.settings);
    let n = s.fwer_trials;
    let ratios = collect(map_indexed(n, spec.mode, |i| {
        let r = draw_realization(cfg, &cfg.tx_power_w, s.rue_subcarriers, s.iue_subcarriers, 0, seed(spec, 0, i))?;
        let g = subcarrier_powers(&r.y, &r.alloc)?;
        let lo = g.values().copied().fold(f64::INFINITY, f64::min);
        let hi = g.values().copied().fold(0.0, f64::max);
        Ok(hi / lo)
    }))?;
    let shape = (cfg.num_symbols * cfg.num_antennas) as f64;
    let mut rows = Rows { spec, sweep: "beta", table: ResultTable::default() };
    let mut asserts = Vec::new();
    for &beta in &s.beta_grid {
        let theory = fwer_theoretical(beta, shape, s.rue_subcarriers)?;
        let hits = ratios.iter().filter(|&&z| z > beta).count();
        let emp = hits as f64 / n as f64;
        rows.push(beta, "global_null", "theory", "all", "fwer", theory, 0.0, 0, 0);
        rows.push(beta, "global_null", "empirical", "all", "fwer", emp, binomial_se(emp, n), n, 0);
        let tol = 3.0 * binomial_se(theory, n) + 1e-12;
        asserts.push(assertion(
            spec,
            format!("beta={beta}: empirical FWER within 3 SE of theory"),
            (emp - theory).abs() <= tol,
            format!("empirical {emp:.5}, theory {theory:.5}, 3 SE {tol:.5}"),
        ));
        if beta == 1.0 {
            asserts.push(assertion(spec, "beta=1: every trial rejects".into(), hits == n, format!("{hits}/{n}")));
        }
    }
    Ok(ExperimentOutput { kind: spec.kind, table: rows.table, assertions: asserts })
}

struct FalseRejections {
    freq: bool,
    slot: bool,
}

/// Empirical FWER against the number of overlapping subcarriers, per δ.
/// False rejections are counted only on truly clean subcarriers and symbols.
pub fn run_fwer_vs_overlap(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    let (cfg, s) = (&spec.scenario, &spec.settings);
    let n = s.fwer_trials;
    let cache = BetaCache::new();
    let mut rows = Rows { spec, sweep: "overlap", table: ResultTable::default() };
    let mut asserts = Vec::new();
    for (p, &k) in s.fwer_overlaps.iter().enumerate() {
        let per_trial = collect(map_indexed(n, spec.mode, |i| {
            let r = draw_realization(cfg, &cfg.tx_power_w, s.rue_subcarriers, s.iue_subcarriers, k, seed(spec, p, i))?;
            let bad_freq: BTreeSet<usize> = r.alloc.rue().freq.difference(&r.alloc.interfered_subcarriers()).copied().collect();
            let bad_time: BTreeSet<usize> = r.alloc.rue().time.difference(&r.alloc.interfered_symbols()).copied().collect();
            s.fwer_deltas
                .iter()
                .map(|&delta| {
                    let d = detect(&r, &DetectionConfig::fwer(delta), &cache)?;
                    Ok(FalseRejections {
                        freq: !d.freq_detected.is_disjoint(&bad_freq),
                        slot: !d.time_detected.is_disjoint(&bad_time),
                    })
                })
                .collect::<Result<Vec<_>>>()
        }))?;
        for (j, &delta) in s.fwer_deltas.iter().enumerate() {
            let setting = format!("delta={delta}");
            let freq = per_trial.iter().filter(|t| t[j].freq).count() as f64 / n as f64;
            let slot = per_trial.iter().filter(|t| t[j].slot).count() as f64 / n as f64;
            let any = per_trial.iter().filter(|t| t[j].freq || t[j].slot).count() as f64 / n as f64;
            for (metric, v) in [("fwer_freq", freq), ("fwer_slot", slot), ("fwer_any", any)] {
                rows.push(k as f64, &setting, "detector", "all", metric, v, binomial_se(v, n), n, 0);
            }
            let bound = delta + 3.0 * binomial_se(delta, n);
            asserts.push(assertion(
                spec,
                format!("overlap={k}, delta={delta}: subcarrier FWER <= delta + 3 SE"),
                freq <= bound,
                format!("empirical {freq:.5}, bound {bound:.5}"),
            ));
        }
    }
    Ok(ExperimentOutput { kind: spec.kind, table: rows.table, assertions: asserts })
}

/// Fraction of truly interfered subcarriers that are detected, against E_1.
pub fn run_detection_power(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    let (cfg, s) = (&spec.scenario, &spec.settings);
    let n = s.power_trials;
    let cache = BetaCache::new();
    let det = DetectionConfig::fwer(s.power_delta);
    let setting = format!("delta={},e0={},overlap={}", s.power_delta, s.power_e0, s.power_overlap);
    let mut rows = Rows { spec, sweep: "e1", table: ResultTable::default() };
    let mut asserts = Vec::new();
    let mut prev: Option<(f64, f64, f64)> = None;
    for (p, &e1) in s.power_e1_grid.iter().enumerate() {
        if e1 <= 0.0 || s.power_overlap == 0 {
            rows.push(e1, &setting, "detector", "all", "detection_rate", f64::NAN, f64::NAN, 0, 0);
            continue;
        }
        let counts = collect(map_indexed(n, spec.mode, |i| {
            let r = draw_realization(cfg, &[s.power_e0, e1], s.rue_subcarriers, s.iue_subcarriers, s.power_overlap, seed(spec, p, i))?;
            let truth = r.alloc.interfered_subcarriers();
            let d = detect(&r, &det, &cache)?;
            Ok((d.freq_detected.intersection(&truth).count(), truth.len()))
        }))?;
        let hits: usize = counts.iter().map(|c| c.0).sum();
        let total: usize = counts.iter().map(|c| c.1).sum();
        let rate = hits as f64 / total as f64;
        let se = binomial_se(rate, total);
        rows.push(e1, &setting, "detector", "all", "detection_rate", rate, se, total, 0);
        if let Some((e_prev, r_prev, se_prev)) = prev {
            let slack = 3.0 * se.hypot(se_prev);
            asserts.push(assertion(
                spec,
                format!("e1={e1}: detection rate not below e1={e_prev}"),
                rate >= r_prev - slack,
                format!("{rate:.5} vs {r_prev:.5}, 3 SE {slack:.5}"),
            ));
        }
        prev = Some((e1, rate, se));
        if (e1 - s.power_check_e1).abs() < 1e-15 {
            asserts.push(assertion(
                spec,
                format!("e1={e1}: detection rate > {}", s.power_min_rate),
                rate > s.power_min_rate,
                format!("{hits}/{total} = {rate:.5}"),
            ));
        }
    }
    Ok(ExperimentOutput { kind: spec.kind, table: rows.table, assertions: asserts })
}

struct RmseTrial {
    truth: Vec<DelayAngle>,
    est: MethodEstimates,
    bounds: Option<Result<TrialBounds>>,
}

const METHODS: [&str; 3] = ["naive", "oracle", "proposed"];

fn target_names(num_iues: usize, num_objects: usize) -> Vec<String> {
    (0..num_objects)
        .map(|l| {
            if l < num_iues {
                format!("iue{}", l + 1)
            } else {
                format!("sp{}", l - num_iues + 1)
            }
        })
        .collect()
}

struct PointSummary {
    rmse: [Option<Vec<TargetRmse>>; 3],
    failures: [usize; 3],
    deb_clean: Vec<f64>,
    aeb_clean: Vec<f64>,
}

/// Delay and angle RMSE of the three estimators with averaged bounds, against
/// E_0 (fixed overlap) and against the overlap (fixed E_0).
pub fn run_rmse_sweep(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    let (cfg, s) = (&spec.scenario, &spec.settings);
    let n = s.rmse_trials;
    let cache = BetaCache::new();
    let det = DetectionConfig::fwer(s.rmse_delta);
    let grid = GridConfig::for_spacing(cfg.subcarrier_spacing_hz);
    let num_targets = cfg.num_objects();
    let names = target_names(cfg.num_iues(), num_targets);
    let mut table = ResultTable::default();
    let mut asserts = Vec::new();

    let mut points: Vec<(&str, f64, f64, usize, String)> = Vec::new();
    for &e0 in &s.rmse_e0_grid {
        points.push(("e0", e0, e0, s.rmse_overlap, format!("overlap={}", s.rmse_overlap)));
    }
    for &k in &s.rmse_overlap_grid {
        points.push(("overlap", k as f64, s.rmse_overlap_e0, k, format!("e0={}", s.rmse_overlap_e0)));
    }

    for (p, (sweep, x, e0, overlap, setting)) in points.iter().enumerate() {
        let trials = collect(map_indexed(n, spec.mode, |i| {
            let r = draw_realization(cfg, &[*e0, s.rmse_e1], s.rue_subcarriers, s.iue_subcarriers, *overlap, seed(spec, p, i))?;
            let d = detect(&r, &det, &cache)?;
            let est = run_methods(&r, &d, num_targets, &grid, cfg.subcarrier_spacing_hz);
            let bounds = (i < s.crlb_realizations).then(|| trial_bounds(&r, cfg));
            Ok(RmseTrial { truth: truth(&r.params), est, bounds })
        }))?;
        let truth = trials[0].truth.clone();
        if trials.iter().any(|t| t.truth != truth) {
            return Err(Error::Estimation("ground truth changed between trials".into()));
        }
        let mut rows = Rows { spec, sweep, table: std::mem::take(&mut table) };

        let mut summary = PointSummary {
            rmse: [None, None, None],
            failures: [0; 3],
            deb_clean: vec![f64::NAN; num_targets],
            aeb_clean: vec![f64::NAN; num_targets],
        };
        for (m, method) in METHODS.iter().enumerate() {
            let ok: Vec<Vec<DelayAngle>> = trials
                .iter()
                .filter_map(|t| match m {
                    0 => t.est.naive.clone(),
                    1 => t.est.oracle.clone(),
                    _ => t.est.proposed.clone(),
                })
                .collect();
            let failures = n - ok.len();
            summary.failures[m] = failures;
            let res = rmse(&ok, &truth).ok();
            for (l, name) in names.iter().enumerate() {
                let (d, a) = match &res {
                    Some(r) => ((r[l].delay, r[l].delay_se), (r[l].angle, r[l].angle_se)),
                    None => ((f64::NAN, f64::NAN), (f64::NAN, f64::NAN)),
                };
                rows.push(*x, setting, method, name, "delay_rmse", d.0, d.1, n, failures);
                rows.push(*x, setting, method, name, "angle_rmse", a.0, a.1, n, failures);
            }
            summary.rmse[m] = res;
        }
        let exact = trials.iter().filter(|t| t.est.clean_set_exact).count() as f64 / n as f64;
        rows.push(*x, setting, "proposed", "all", "clean_set_exact", exact, binomial_se(exact, n), n, 0);

        let bounds: Vec<&TrialBounds> = trials.iter().filter_map(|t| t.bounds.as_ref()?.as_ref().ok()).collect();
        let attempted = trials.iter().filter(|t| t.bounds.is_some()).count();
        let bound_failures = attempted - bounds.len();
        type Pick = fn(&TrialBounds) -> &Vec<f64>;
        let picks: [(&str, &str, Pick); 4] = [
            ("crlb_clean", "deb", |b| &b.deb_clean),
            ("crlb_clean", "aeb", |b| &b.aeb_clean),
            ("crlb_all", "deb", |b| &b.deb_all),
            ("crlb_all", "aeb", |b| &b.aeb_all),
        ];
        for (method, metric, pick) in picks {
            for (l, name) in names.iter().enumerate() {
                let v: Vec<f64> = bounds.iter().map(|b| pick(b)[l]).collect();
                let (mean, se) = mean_se(&v);
                rows.push(*x, setting, method, name, metric, mean, se, attempted, bound_failures);
                if method == "crlb_clean" {
                    if metric == "deb" {
                        summary.deb_clean[l] = mean;
                    } else {
                        summary.aeb_clean[l] = mean;
                    }
                }
            }
        }
        table = rows.table;
        asserts.extend(rmse_assertions(spec, sweep, *x, *e0, *overlap, &names, &summary));
    }
    Ok(ExperimentOutput { kind: spec.kind, table, assertions: asserts })
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = v.len() as f64;
    let mean = v.iter().sum::<f64>() / m;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0);
    (mean, (var / m).sqrt())
}

fn rmse_assertions(
    spec: &ExperimentSpec,
    sweep: &str,
    x: f64,
    e0: f64,
    overlap: usize,
    names: &[String],
    sm: &PointSummary,
) -> Vec<Assertion> {
    let s = &spec.settings;
    let mut out = Vec::new();
    let at = format!("{sweep}={x}");
    let get = |m: usize, l: usize, delay: bool| -> f64 {
        sm.rmse[m]
            .as_ref()
            .map(|r| if delay { r[l].delay } else { r[l].angle })
            .unwrap_or(f64::NAN)
    };
    let get_se = |m: usize, l: usize, delay: bool| -> f64 {
        sm.rmse[m]
            .as_ref()
            .map(|r| if delay { r[l].delay_se } else { r[l].angle_se })
            .unwrap_or(f64::NAN)
    };
    for (l, name) in names.iter().enumerate() {
        for (delay, metric) in [(true, "delay"), (false, "angle")] {
            let (naive, oracle, proposed) = (get(0, l, delay), get(1, l, delay), get(2, l, delay));
            if sweep == "e0" && e0 >= s.bound_check_e0 - 1e-12 {
                let bound = if delay { sm.deb_clean[l] } else { sm.aeb_clean[l] };
                for (m, v) in [("oracle", oracle), ("proposed", proposed)] {
                    let ratio = v / bound;
                    out.push(assertion(
                        spec,
                        format!("{at}: {m} {name} {metric} RMSE within {}x bound", s.bound_factor),
                        ratio <= s.bound_factor,
                        format!("RMSE {v:.4e}, bound {bound:.4e}, ratio {ratio:.3}"),
                    ));
                }
            }
            let ratio = proposed / oracle;
            out.push(assertion(
                spec,
                format!("{at}: proposed/oracle {name} {metric} RMSE ratio in band"),
                ratio >= s.ratio_band[0] && ratio <= s.ratio_band[1],
                format!("ratio {ratio:.4}"),
            ));
            if overlap > 0 {
                out.push(assertion(
                    spec,
                    format!("{at}: naive {name} {metric} RMSE worse than proposed"),
                    naive > proposed,
                    format!("naive {naive:.4e}, proposed {proposed:.4e}"),
                ));
                let slack = 2.0 * get_se(0, l, delay).hypot(get_se(1, l, delay));
                out.push(assertion(
                    spec,
                    format!("{at}: oracle {name} {metric} RMSE not above naive"),
                    oracle <= naive + slack,
                    format!("oracle {oracle:.4e}, naive {naive:.4e}, 2 SE {slack:.2e}"),
                ));
            }
            if sweep == "e0" && (e0 - s.naive_check_e0).abs() < 1e-12 && overlap == s.rmse_overlap && overlap > 0 {
                let ratio = naive / proposed;
                out.push(assertion(
                    spec,
                    format!("{at}: naive {name} {metric} RMSE at least {}x proposed", s.naive_factor),
                    ratio >= s.naive_factor,
                    format!("ratio {ratio:.2}"),
                ));
            }
        }
    }
    out
}
