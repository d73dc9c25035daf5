//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use careerwalk::classify::{aic, aicc, simulate_sweep_cell, sweep_variances, SweepConfig};
use careerwalk::distributions::{laplace_cdf, Boundary, ExponentialInit, LaplaceIncrement, ModeRule};
use careerwalk::fitting::{enumerate_change_point_sets, fit_model, FitOptions};
use careerwalk::model::{simulate_ensemble, CareerModel, ChangePointSet, StageParams, MAX_CHANGE_YEAR};
use careerwalk::rng::{self, stream};
use careerwalk::stats::{compare_ensembles, corrected_zero_rate, ensemble_summaries, ks_two_sample, wald_binomial_ci, welch_t, SummaryOptions};
use careerwalk_cli::data::load_trajectories;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn model(lambda0: f64, cps: &[u32], alphas: &[f64], betas: &[f64], boundary: Boundary) -> CareerModel {
    CareerModel::new(
        ExponentialInit::new(lambda0).unwrap(),
        ChangePointSet::from_slice(cps).unwrap(),
        alphas.iter().zip(betas).map(|(&a, &b)| StageParams::new(a, ModeRule::Slope(b)).unwrap()).collect(),
        boundary,
    )
    .unwrap()
}

fn empirical_regime(boundary: Boundary) -> CareerModel {
    model(4.65, &[4, 7, 13], &[4.5, 4.3, 3.8, 3.5], &[-0.2; 4], boundary)
}

fn candidates() -> Vec<ChangePointSet> {
    enumerate_change_point_sets(1, MAX_CHANGE_YEAR, 3).unwrap()
}

fn change_point_enumeration() -> Outcome {
    let t = Instant::now();
    let n = candidates().len();
    let secs = t.elapsed().as_secs_f64();
    outcome(n == 1159 && secs < 1.0, format!("{n} sets in {secs:.4}s"))
}

fn parameter_recovery() -> Outcome {
    let scenarios = [
        ("sharp", 101, model(2.0, &[5, 12], &[6.0, 2.0, 4.0], &[-0.05, -0.3, -0.1], Boundary::Truncate)),
        (
            "gentle",
            202,
            model(3.0, &[3, 9, 15], &[5.0, 4.0, 3.2, 2.6], &[-0.1, -0.15, -0.2, -0.25], Boundary::Truncate),
        ),
        ("empirical", 303, empirical_regime(Boundary::Truncate)),
    ];
    let cands = candidates();
    let mut pass = true;
    let mut notes = Vec::new();
    for (name, seed, truth) in scenarios {
        let t = Instant::now();
        let trajs = simulate_ensemble(&truth, 2000, 21, seed).unwrap();
        let fit = fit_model(&trajs, &cands, &FitOptions::default()).unwrap();
        let elapsed = t.elapsed();
        let got = &fit.best_model;
        let cps_ok = got.change_points() == truth.change_points();
        let lambda_err = (got.init().mean() - truth.init().mean()).abs();
        let (mut alpha_err, mut beta_err) = (f64::NAN, f64::NAN);
        if cps_ok {
            alpha_err = 0.0;
            beta_err = 0.0;
            for (g, w) in got.stages().iter().zip(truth.stages()) {
                alpha_err = alpha_err.max((g.scale - w.scale).abs());
                beta_err = beta_err.max((g.mode.value() - w.mode.value()).abs());
            }
        }
        let ok = cps_ok && lambda_err <= 0.1 && alpha_err <= 0.1 && beta_err <= 0.01 && elapsed < Duration::from_secs(300);
        pass &= ok;
        notes.push(format!(
            "{name}: cps {} vs {}, |dlambda| {lambda_err:.3}, max |dalpha| {alpha_err:.3}, max |dbeta| {beta_err:.4}, {:.1}s",
            got.change_points().label(),
            truth.change_points().label(),
            elapsed.as_secs_f64()
        ));
    }
    outcome(pass, notes.join("; "))
}

fn truncated_cdf(x: f64, location: f64, scale: f64, lower: f64) -> f64 {
    let f = |y: f64| {
        let z = (y - location) / scale;
        if z < 0.0 {
            0.5 * z.exp()
        } else {
            1.0 - 0.5 * (-z).exp()
        }
    };
    if x < lower {
        0.0
    } else {
        (f(x) - f(lower)) / (1.0 - f(lower))
    }
}

fn sampler_correctness() -> Outcome {
    let n = 100_000;
    let mut worst: f64 = 0.0;
    let mut cell = 0u64;
    for location in [-1.0, 0.5] {
        for scale in [0.5, 4.0] {
            for q in [0.0, 3.0, 50.0] {
                let inc = LaplaceIncrement::new(location, scale, Boundary::Truncate, q).unwrap();
                let mut r = stream(3, &[cell]);
                cell += 1;
                let mut xs: Vec<f64> = (0..n).map(|_| inc.sample(&mut r)).collect();
                xs.sort_by(f64::total_cmp);
                let d = xs
                    .iter()
                    .enumerate()
                    .map(|(i, &x)| {
                        let f = truncated_cdf(x, location, scale, -q);
                        (f - i as f64 / n as f64).max((i + 1) as f64 / n as f64 - f)
                    })
                    .fold(0.0, f64::max);
                worst = worst.max(d);
            }
        }
    }
    let inc = LaplaceIncrement::new(-1.0, 2.0, Boundary::Censor, 0.5).unwrap();
    let mut r = stream(3, &[99]);
    let hits = (0..n).filter(|_| inc.sample(&mut r) == -0.5).count();
    let p = 1.0 - 0.5 * (-0.25f64).exp();
    assert!((laplace_cdf(-0.5, -1.0, 2.0) - p).abs() < 1e-15);
    let sigma = (p * (1.0 - p) / n as f64).sqrt();
    let z = (hits as f64 / n as f64 - p) / sigma;
    outcome(
        cell == 12 && worst < 0.01 && z.abs() <= 3.0,
        format!("max KS over {cell} cells {worst:.5}; censor atom {hits}/{n} vs p={p:.5} (z={z:.2})"),
    )
}

fn phase_diagram() -> Outcome {
    let t = Instant::now();
    let cfg = SweepConfig { alpha1: vec![6.0, 2.0], alpha2: vec![2.0, 6.0], n: 1000, seed: 4, ..SweepConfig::default() };
    let grid = sweep_variances(&cfg).unwrap();
    let (early, late) = (grid.cells[0].fraction, grid.cells[3].fraction);
    let fraction_ok = early.estimate > late.estimate && early.lo > late.hi;

    let ens = simulate_sweep_cell(&cfg, 0, 0, 6.0, 2.0).unwrap();
    let curve = |idx: &mut dyn Iterator<Item = usize>| {
        let mut sums = vec![0.0; 21];
        let mut count = 0.0;
        for i in idx {
            for (s, q) in sums.iter_mut().zip(&ens[i].q) {
                *s += q;
            }
            count += 1.0;
        }
        sums.into_iter().map(|s| s / count).collect::<Vec<f64>>()
    };
    let means = curve(&mut (0..ens.len()));
    let peak = (0..21).fold(0, |b, t| if means[t] > means[b] { t } else { b });
    let drop = |m: &[f64]| m[10..=20].iter().sum::<f64>() / 11.0 - m[peak];
    let mut reps: Vec<f64> = (0..1000u64)
        .map(|r| {
            let mut s = stream(4, &[rng::domain::BOOTSTRAP, r]);
            drop(&curve(&mut (0..ens.len()).map(|_| rng::index(&mut s, ens.len()))))
        })
        .collect();
    reps.sort_by(f64::total_cmp);
    let upper = careerwalk::stats::quantile_sorted(&reps, 0.975);
    let secs = t.elapsed().as_secs_f64();
    outcome(
        fraction_ok && (1..=8).contains(&peak) && upper < 0.0 && secs < 120.0,
        format!(
            "canonical (6,2) {:.3} [{:.3},{:.3}] vs (2,6) {:.3} [{:.3},{:.3}]; (6,2) mean peaks at age {peak}, late-minus-peak {:.2} (95% upper {upper:.2}); {secs:.1}s",
            early.estimate, early.lo, early.hi, late.estimate, late.lo, late.hi, drop(&means)
        ),
    )
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    sxy / (sxx * syy).sqrt()
}

fn equilibrium_variance() -> Outcome {
    let alphas = [2.0, 3.0, 4.0, 5.0, 6.0];
    let means: Vec<f64> = alphas
        .iter()
        .map(|&a| {
            let m = CareerModel::new(
                ExponentialInit::new(4.65).unwrap(),
                ChangePointSet::none(),
                vec![StageParams::new(a, ModeRule::Fixed(-1.0)).unwrap()],
                Boundary::Censor,
            )
            .unwrap();
            let ens = simulate_ensemble(&m, 10_000, 201, 5).unwrap();
            ens.iter().map(|t| t.q[200]).sum::<f64>() / ens.len() as f64
        })
        .collect();
    let increasing = means.windows(2).all(|w| w[1] > w[0]);
    let r = pearson(&alphas, &means);
    outcome(increasing && r > 0.99, format!("age-200 means {means:.3?}, r={r:.4}"))
}

fn zero_year_arithmetic() -> Outcome {
    let ci = wald_binomial_ci(82, 108, 0.95).unwrap();
    let corrected = corrected_zero_rate(0.141, 0.679);
    let pass = (ci.lo - 0.679).abs() <= 0.001 && (ci.hi - 0.840).abs() <= 0.001 && (corrected - 0.0957).abs() <= 0.0005;
    outcome(pass, format!("Wald {:.4} ({:.4}, {:.4}); corrected {corrected:.5}", ci.estimate, ci.lo, ci.hi))
}

fn simulated_zero_rate() -> Outcome {
    let ens = simulate_ensemble(&empirical_regime(Boundary::Censor), 10_000, 21, 7).unwrap();
    let opts = SummaryOptions { bootstrap_replicates: 0, ..SummaryOptions::default() };
    let rate = ensemble_summaries(&ens, &opts).unwrap().zero_rate(0.95).unwrap();
    outcome(
        rate.hi < 0.15 && rate.estimate <= 0.12,
        format!("zero-year fraction {:.4} (95% CI {:.4}, {:.4}); reference band 0.085-0.087", rate.estimate, rate.lo, rate.hi),
    )
}

fn brute_force_ks(a: &[f64], b: &[f64]) -> f64 {
    let ecdf = |xs: &[f64], x: f64| xs.iter().filter(|&&v| v <= x).count() as f64 / xs.len() as f64;
    a.iter().chain(b).map(|&x| (ecdf(a, x) - ecdf(b, x)).abs()).fold(0.0, f64::max)
}

fn statistical_oracles() -> Outcome {
    let mut ks_match = 0;
    for case in 0..100u64 {
        let mut r = stream(8, &[case]);
        let (n, m) = (1 + rng::index(&mut r, 50), 1 + rng::index(&mut r, 50));
        let levels = if case % 2 == 0 { 6 } else { 1_000_000 };
        let a: Vec<f64> = (0..n).map(|_| rng::index(&mut r, levels) as f64).collect();
        let b: Vec<f64> = (0..m).map(|_| rng::index(&mut r, levels) as f64 + 0.5 * (case % 3) as f64).collect();
        ks_match += (ks_two_sample(&a, &b).unwrap().statistic == brute_force_ks(&a, &b)) as usize;
    }
    let w = welch_t(&[0.0, 0.0, 1.0, 1.0], &[1.0, 1.0, 2.0, 2.0]).unwrap();
    let welch_ok = (w.t + 2.449).abs() <= 1e-3 && (w.df - 6.0).abs() <= 1e-3;
    let mut aicc_ok = [(-12.5, 3, 28usize, 1.0), (-12.5, 3, 16, 2.0), (40.25, 4, 45, 1.0)]
        .iter()
        .all(|&(ll, k, n, pen)| aicc(ll, k, n) == 2.0 * k as f64 - 2.0 * ll + pen);
    for (ll, k, n) in [(-1234.567, 3u32, 21usize), (-3.3, 4, 21), (10.0, 4, 19)] {
        let kf = k as f64;
        let expected = aic(ll, k) + 2.0 * kf * (kf + 1.0) / (n as f64 - kf - 1.0);
        aicc_ok &= aicc(ll, k, n) == expected && aic(ll, k) == 2.0 * kf - 2.0 * ll;
    }
    outcome(
        ks_match == 100 && welch_ok && aicc_ok,
        format!("KS exact on {ks_match}/100; Welch t={:.4} df={:.4}; AICc exact: {aicc_ok}", w.t, w.df),
    )
}

fn self_consistency() -> Outcome {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/empirical_regime.csv");
    let training = load_trajectories(&path).unwrap();
    let fit = fit_model(&training, &candidates(), &FitOptions::default()).unwrap();
    let sim = simulate_ensemble(&fit.best_model, 10_000, 21, 9).unwrap();
    let opts = SummaryOptions { bootstrap_replicates: 0, ..SummaryOptions::default() };
    let report = compare_ensembles(&sim, &training, &opts).unwrap();
    outcome(
        report.max_mean_difference < 1.0,
        format!(
            "fitted cps {}, max within-year mean difference {:.3} over {} vs {} trajectories",
            fit.best_model.change_points().label(),
            report.max_mean_difference,
            report.a.trajectories,
            report.b.trajectories
        ),
    )
}

fn run_cli(args: &[String]) {
    let out = Command::new(env!("CARGO_BIN_EXE_careerwalk")).args(args).output().expect("spawn careerwalk");
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                files.push((p.strip_prefix(dir).unwrap().display().to_string(), std::fs::read(&p).unwrap()));
            }
        }
    }
    files.sort();
    files
}

fn cli_determinism() -> Outcome {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let model = fixtures.join("empirical_regime_model.json");
    let runs: Vec<Vec<(String, Vec<u8>)>> = (0..2)
        .map(|_| {
            let dir = tempfile::tempdir().unwrap();
            let p = |n: &str| dir.path().join(n).display().to_string();
            let m = model.display().to_string();
            let cmds: Vec<Vec<String>> = vec![
                vec!["simulate", "--model", &m, "--n", "300", "--seed", "10", "--out", &p("sim_a.csv")],
                vec!["simulate", "--model", &m, "--n", "300", "--seed", "11", "--boundary", "censor", "--out", &p("sim_b.csv")],
                vec!["sweep", "--alpha1", "2:6:2", "--alpha2", "2:6:2", "--n", "100", "--seed", "12", "--out", &p("sweep.csv")],
                vec!["bootstrap", "--input", &p("sim_a.csv"), "--replicates", "3", "--max-changepoints", "1", "--seed", "13", "--out", &p("freq.csv"), "--draws", &p("draws.csv")],
                vec!["compare", "--input", &p("sim_a.csv"), "--input", &p("sim_b.csv"), "--seed", "14", "--replicates", "200", "--out", &p("report.json"), "--distributions", &p("dist")],
                vec!["fit", "--input", &p("sim_a.csv"), "--max-changepoints", "1", "--out", &p("fit.json")],
                vec!["classify", "--input", &p("sim_b.csv"), "--out", &p("verdicts.csv")],
            ]
            .into_iter()
            .map(|c| c.into_iter().map(String::from).collect())
            .collect();
            for c in &cmds {
                run_cli(c);
            }
            snapshot(dir.path())
        })
        .collect();
    let files = runs[0].len();
    let identical = runs[0] == runs[1];
    outcome(identical && files >= 15, format!("{files} artifact files per run, byte-identical: {identical}"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("change-point enumeration", change_point_enumeration),
        ("parameter recovery", parameter_recovery),
        ("sampler correctness", sampler_correctness),
        ("canonical phase diagram", phase_diagram),
        ("equilibrium-variance coupling", equilibrium_variance),
        ("zero-year arithmetic", zero_year_arithmetic),
        ("simulated zero rate", simulated_zero_rate),
        ("statistical-test oracles", statistical_oracles),
        ("self-consistency", self_consistency),
        ("CLI determinism", cli_determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.into_iter().enumerate() {
        let t = Instant::now();
        let o = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            outcome(false, format!("panicked: {}", msg.unwrap_or_default()))
        });
        failed += !o.pass as usize;
        println!(
            "{} criterion {:>2} {name}: {} [{:.1}s]",
            if o.pass { "PASS" } else { "FAIL" },
            i + 1,
            o.detail,
            t.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} of 10 criteria passed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
