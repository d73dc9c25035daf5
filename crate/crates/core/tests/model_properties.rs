use careerwalk::distributions::{Boundary, ExponentialInit, ModeRule};
use careerwalk::model::*;
use proptest::prelude::*;

fn single_stage(alpha: f64, mu: f64) -> CareerModel {
    CareerModel::new(
        ExponentialInit::new(4.65).unwrap(),
        ChangePointSet::none(),
        vec![StageParams::new(alpha, ModeRule::Fixed(mu)).unwrap()],
        Boundary::Censor,
    )
    .unwrap()
}

fn empirical_regime(boundary: Boundary) -> CareerModel {
    CareerModel::new(
        ExponentialInit::new(4.65).unwrap(),
        ChangePointSet::new(&[4, 7, 13]).unwrap(),
        [4.5, 4.3, 3.8, 3.5]
            .iter()
            .map(|&a| StageParams::new(a, ModeRule::Slope(-0.2)).unwrap())
            .collect(),
        boundary,
    )
    .unwrap()
}

fn mean_curve(trajs: &[Trajectory]) -> Vec<f64> {
    let len = trajs[0].q.len();
    (0..len).map(|t| trajs.iter().map(|x| x.q[t]).sum::<f64>() / trajs.len() as f64).collect()
}

#[test]
fn ensembles_are_reproducible() {
    let m = empirical_regime(Boundary::Censor);
    let a = simulate_ensemble(&m, 50, 21, 5).unwrap();
    let b = simulate_ensemble(&m, 50, 21, 5).unwrap();
    assert_eq!(a, b);
    let c = simulate_ensemble(&m, 50, 21, 6).unwrap();
    assert_ne!(a, c);
    // Prefix stability: trajectory i does not depend on n.
    let d = simulate_ensemble(&m, 10, 21, 5).unwrap();
    assert_eq!(&a[..10], &d[..]);
}

#[test]
fn first_year_mean_matches_lambda0() {
    let ens = simulate_ensemble(&empirical_regime(Boundary::Censor), 10_000, 21, 21).unwrap();
    let m0 = ens.iter().map(|t| t.q[0]).sum::<f64>() / ens.len() as f64;
    assert!((m0 - 4.65).abs() < 0.1, "{m0}");
}

#[test]
fn empirical_regime_mean_rises_then_falls() {
    for boundary in [Boundary::Censor, Boundary::Truncate] {
        let ens = simulate_ensemble(&empirical_regime(boundary), 10_000, 21, 22).unwrap();
        let curve = mean_curve(&ens);
        let peak = (0..curve.len()).max_by(|&a, &b| curve[a].total_cmp(&curve[b])).unwrap();
        assert!((1..=8).contains(&peak), "{boundary:?}: peak {peak} {curve:?}");
        assert!(curve[20] < curve[peak]);
    }
}

#[test]
fn equilibrium_mean_grows_with_scale() {
    let levels: Vec<f64> = [2.0, 3.0, 4.0, 5.0, 6.0]
        .iter()
        .map(|&a| {
            let ens = simulate_ensemble(&single_stage(a, -1.0), 2_000, 201, 23).unwrap();
            ens.iter().map(|t| t.q[200]).sum::<f64>() / ens.len() as f64
        })
        .collect();
    assert!(levels.windows(2).all(|w| w[1] > w[0]), "{levels:?}");
}

#[test]
fn variance_ordering_sets_the_aggregate_shape() {
    let falling = CareerModel::simplified(4.65, 6.0, 2.0, -1.0, 5, Boundary::Censor).unwrap();
    let rising = CareerModel::simplified(4.65, 2.0, 6.0, -1.0, 5, Boundary::Censor).unwrap();
    let f = mean_curve(&simulate_ensemble(&falling, 5_000, 21, 24).unwrap());
    let r = mean_curve(&simulate_ensemble(&rising, 5_000, 21, 24).unwrap());
    // After the change the (6, 2) mean declines and the (2, 6) mean bounces back.
    assert!(f[20] < f[5], "{f:?}");
    assert!(r[20] > r[5], "{r:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn simulated_productivity_is_nonnegative(
        alpha1 in 0.01f64..10.0,
        alpha2 in 0.01f64..10.0,
        beta in -1.5f64..0.5,
        truncate in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let boundary = if truncate { Boundary::Truncate } else { Boundary::Censor };
        let model = CareerModel::new(
            ExponentialInit::new(3.0).unwrap(),
            ChangePointSet::new(&[6]).unwrap(),
            vec![
                StageParams::new(alpha1, ModeRule::Slope(beta)).unwrap(),
                StageParams::new(alpha2, ModeRule::Fixed(-1.0)).unwrap(),
            ],
            boundary,
        ).unwrap();
        for t in simulate_ensemble(&model, 5, 30, seed).unwrap() {
            prop_assert!(t.q.iter().all(|&v| v >= 0.0 && v.is_finite()));
        }
    }
}
