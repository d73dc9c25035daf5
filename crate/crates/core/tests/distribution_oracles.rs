use careerwalk::distributions::*;
use careerwalk::rng::stream;
use proptest::prelude::*;

// Adaptive Simpson quadrature, kept independent of the library.
fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    fn rec<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
            return left + right + (left + right - whole) / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, depth)
}

// Integral of the truncated density over its support, split at the mode so
// the cusp sits on a panel edge.
fn total_mass(location: f64, scale: f64, q: f64) -> f64 {
    let inc = LaplaceIncrement::new(location, scale, Boundary::Truncate, q).unwrap();
    let pdf = |d: f64| trunc_laplace_logpdf(d, &inc).unwrap().exp();
    let lower = -q;
    let upper = location.max(lower) + 60.0 * scale;
    if location > lower {
        simpson(&pdf, lower, location, 1e-12, 50) + simpson(&pdf, location, upper, 1e-12, 50)
    } else {
        simpson(&pdf, lower, upper, 1e-12, 50)
    }
}

// Closed-form CDF of the truncated law, written out independently.
fn truncated_cdf(x: f64, m: f64, b: f64, q: f64) -> f64 {
    let f = |v: f64| if v < m { 0.5 * ((v - m) / b).exp() } else { 1.0 - 0.5 * (-(v - m) / b).exp() };
    let lower = -q;
    if x < lower {
        0.0
    } else {
        (f(x) - f(lower)) / (1.0 - f(lower))
    }
}

fn one_sample_ks(mut draws: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    draws.sort_by(f64::total_cmp);
    let n = draws.len() as f64;
    draws
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let c = cdf(x);
            (c - i as f64 / n).abs().max(((i + 1) as f64 / n - c).abs())
        })
        .fold(0.0, f64::max)
}

#[test]
fn truncated_density_integrates_to_one() {
    let mass = total_mass(-1.0, 4.0, 2.0);
    assert!((mass - 1.0).abs() < 1e-6, "{mass}");
}

#[test]
fn truncated_sampler_matches_analytic_cdf() {
    let inc = LaplaceIncrement::new(-1.0, 4.0, Boundary::Truncate, 3.0).unwrap();
    let mut rng = stream(11, &[]);
    let draws: Vec<f64> = (0..100_000).map(|_| inc.sample(&mut rng)).collect();
    let d = one_sample_ks(draws, |x| truncated_cdf(x, -1.0, 4.0, 3.0));
    assert!(d < 0.01, "{d}");
}

#[test]
fn library_cdf_matches_independent_form() {
    for (m, b, q) in [(-1.0, 4.0, 3.0), (2.0, 0.5, 0.1), (-5.0, 1.0, 0.5)] {
        let inc = LaplaceIncrement::new(m, b, Boundary::Truncate, q).unwrap();
        for x in [-q, -q + 0.1, 0.0, 1.0, 5.0] {
            assert!((inc.cdf(x) - truncated_cdf(x, m, b, q)).abs() < 1e-12);
        }
    }
}

#[test]
fn censored_atom_frequency() {
    let inc = LaplaceIncrement::new(-1.0, 2.0, Boundary::Censor, 0.5).unwrap();
    let mut rng = stream(12, &[]);
    let n = 100_000;
    let hits = (0..n).filter(|_| inc.sample(&mut rng) == -0.5).count();
    // P(delta <= -0.5) for Laplace(-1, 2): mode below the boundary.
    let p = 1.0 - 0.5 * (-(0.5f64) / 2.0).exp();
    let sigma = (p * (1.0 - p) / n as f64).sqrt();
    let freq = hits as f64 / n as f64;
    assert!((freq - p).abs() < 3.0 * sigma, "{freq} vs {p}");
}

#[test]
fn initial_draws_have_requested_mean() {
    let init = ExponentialInit::new(4.65).unwrap();
    let mut rng = stream(13, &[]);
    let draws: Vec<f64> = (0..100_000).map(|_| init.sample(&mut rng)).collect();
    assert!(draws.iter().all(|&v| v >= 0.0));
    let m = draws.iter().sum::<f64>() / draws.len() as f64;
    assert!((m - 4.65).abs() < 0.05, "{m}");
    let fitted = fit_exponential(&draws[..10_000]).unwrap();
    assert!((fitted.mean() - 4.65).abs() < 0.1);
}

#[test]
fn half_sample_mode_recovers_laplace_modes() {
    for (m, b, seed) in [(-1.0, 4.0, 14), (-0.37, 3.88, 15)] {
        let inc = LaplaceIncrement::new(m, b, Boundary::Censor, 1e9).unwrap();
        let mut rng = stream(seed, &[]);
        let draws: Vec<f64> = (0..100_000).map(|_| inc.sample(&mut rng)).collect();
        let mode = estimate_mode(&draws).unwrap();
        assert!((mode - m).abs() < 0.1, "{m}: {mode}");
    }
}

fn synthetic_pairs(alpha: f64, rule: ModeRule, n: usize, seed: u64) -> Vec<(f64, f64)> {
    let init = ExponentialInit::new(5.0).unwrap();
    let mut rng = stream(seed, &[]);
    (0..n)
        .map(|_| {
            let q = init.sample(&mut rng);
            let inc = LaplaceIncrement::new(rule.location(q), alpha, Boundary::Truncate, q).unwrap();
            (q, inc.sample(&mut rng))
        })
        .collect()
}

#[test]
fn scale_mle_recovers_generator() {
    let pairs = synthetic_pairs(4.5, ModeRule::Fixed(-1.0), 10_000, 16);
    let fit = fit_scale_mle(&pairs, ModeRule::Fixed(-1.0), Boundary::Truncate).unwrap();
    assert!((fit.scale - 4.5).abs() < 0.1, "{}", fit.scale);
    assert!(!fit.degenerate);
}

#[test]
fn scale_mle_error_shrinks_with_sample_size() {
    let mut errors = Vec::new();
    for n in [100, 1_000, 10_000] {
        let mut total = 0.0;
        for rep in 0..20 {
            let pairs = synthetic_pairs(3.0, ModeRule::Slope(-0.1), n, 1000 + rep);
            let fit = fit_scale_mle(&pairs, ModeRule::Slope(-0.1), Boundary::Truncate).unwrap();
            total += (fit.scale - 3.0).abs();
        }
        errors.push(total / 20.0);
    }
    assert!(errors[0] > errors[1] && errors[1] > errors[2], "{errors:?}");
}

#[test]
fn scale_mle_is_a_maximum_of_the_naive_likelihood() {
    let pairs = synthetic_pairs(2.0, ModeRule::Slope(-0.2), 500, 17);
    for boundary in [Boundary::Truncate, Boundary::Censor] {
        let fit = fit_scale_mle(&pairs, ModeRule::Slope(-0.2), boundary).unwrap();
        let at = |s: f64| pairs_log_likelihood(&pairs, ModeRule::Slope(-0.2), s, boundary).unwrap();
        assert!((at(fit.scale) - fit.log_likelihood).abs() < 1e-8);
        assert!(at(fit.scale) >= at(fit.scale * 1.001));
        assert!(at(fit.scale) >= at(fit.scale * 0.999));
    }
}

#[test]
fn boundary_lifts_the_mean() {
    for boundary in [Boundary::Truncate, Boundary::Censor] {
        let near = LaplaceIncrement::new(-1.0, 2.0, boundary, 0.5).unwrap();
        let far = LaplaceIncrement::new(-1.0, 2.0, boundary, 10.0).unwrap();
        assert!(near.mean() > far.mean());
        let mut rng = stream(18, &[]);
        let mc = |inc: &LaplaceIncrement, rng: &mut careerwalk::rng::Stream| {
            (0..100_000).map(|_| inc.sample(rng)).sum::<f64>() / 100_000.0
        };
        assert!(mc(&near, &mut rng) > mc(&far, &mut rng));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn density_normalizes(location in -6.0f64..4.0, scale in 0.2f64..6.0, q in 0.0f64..8.0) {
        let mass = total_mass(location, scale, q);
        prop_assert!((mass - 1.0).abs() < 1e-6, "mass {}", mass);
    }

    #[test]
    fn draws_stay_in_support(location in -20.0f64..5.0, scale in 0.01f64..10.0, q in 0.0f64..10.0, seed in 0u64..1000) {
        let mut rng = stream(seed, &[]);
        for boundary in [Boundary::Truncate, Boundary::Censor] {
            let inc = LaplaceIncrement::new(location, scale, boundary, q).unwrap();
            for _ in 0..200 {
                let d = inc.sample(&mut rng);
                prop_assert!(d >= -q);
                prop_assert!(inc.log_likelihood(d).unwrap().is_finite());
            }
        }
    }
}
