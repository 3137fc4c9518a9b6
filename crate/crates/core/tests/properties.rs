mod common;

use nearfield_mcrb::bounds::{bounds_for_state, fim_state};
use nearfield_mcrb::channel::{
    antenna_positions, ChannelParams, ModelKind, Position, ScenarioConfig, StateParams,
};
use nearfield_mcrb::linalg::{is_psd, is_symmetric};
use nearfield_mcrb::mcrb::{lower_bound, lower_bound_with, PseudoTrueSearch};
use nearfield_mcrb::observation::Scenario;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn fim_symmetric_psd_at_many_states() {
    let sc = Scenario::from_config(ScenarioConfig::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..1000 {
        let state = common::random_state(&mut rng, sc.geometry());
        for kind in ModelKind::ALL {
            let f = fim_state(kind, &state, &sc).unwrap().matrix;
            assert!(is_symmetric(&f, 1e-12), "{kind} at {:?}", state.position);
            assert!(is_psd(&f, 1e-12), "{kind} at {:?}", state.position);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn state_derivatives_match_finite_differences(r in 0.5f64..8.0, deg in -70f64..70.0, xi in -3.0f64..3.0) {
        let cfg = ScenarioConfig::default();
        let geo = antenna_positions(&cfg);
        let a = deg.to_radians();
        let state = StateParams::line_of_sight(Position::new(r * a.cos(), r * a.sin()), xi, &geo).unwrap();
        for kind in ModelKind::ALL {
            let e = common::state_derivative_error(kind, &state, &geo, &cfg);
            prop_assert!(e < 1e-6, "{} {}", kind, e);
        }
        let th = ChannelParams::from_state(&state).unwrap();
        prop_assert!(common::channel_derivative_error(&th, &cfg) < 1e-6);
        prop_assert!(common::jacobian_product_error(&state) <= 1e-12);
    }

    #[test]
    fn fim_is_expected_hessian(r in 0.5f64..8.0, deg in -70f64..70.0) {
        let sc = Scenario::from_config(ScenarioConfig::default().with_antennas(32)).unwrap();
        let a = deg.to_radians();
        let state = StateParams::line_of_sight(Position::new(r * a.cos(), r * a.sin()), 0.4, sc.geometry()).unwrap();
        for kind in [ModelKind::Tm, ModelKind::Mm, ModelKind::TmSns] {
            let e = common::fim_hessian_error(kind, &state, &sc);
            prop_assert!(e < 1e-4, "{} {}", kind, e);
        }
    }
}

#[test]
fn pseudo_true_is_a_local_minimum() {
    let sc = Scenario::from_config(ScenarioConfig::default()).unwrap();
    let search = PseudoTrueSearch::new(&sc);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10 {
        let state = common::random_state(&mut rng, sc.geometry());
        let mean_bar = sc.mean(ModelKind::Tm, &state).unwrap();
        let res = search.run(ModelKind::Tm, &state).unwrap();
        let th0 = res.theta0;
        let cost = |th: &ChannelParams| -> f64 {
            let mu = sc.mean_mm(th).unwrap();
            mean_bar
                .iter()
                .zip(&mu)
                .map(|(a, b)| (a - b).norm_sqr())
                .sum()
        };
        let base = cost(&th0);
        // 1e-4 in the natural unit of each coordinate
        let steps = [1e-4, 1e-4 * th0.toa, 1e-4 * th0.gain, 1e-4];
        for i in 0..4 {
            for s in [-1.0, 1.0] {
                let mut th = th0;
                match i {
                    0 => th.aoa += s * steps[0],
                    1 => th.toa += s * steps[1],
                    2 => th.gain += s * steps[2],
                    _ => th.phase += s * steps[3],
                }
                assert!(cost(&th) >= base, "coordinate {i}, sign {s}");
            }
        }
    }
}

#[test]
fn bound_matrices_are_well_formed() {
    let sc = Scenario::from_config(ScenarioConfig::default()).unwrap();
    let search = PseudoTrueSearch::new(&sc);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..20 {
        let state = common::random_state(&mut rng, sc.geometry());
        for kind in ModelKind::TRUE_MODELS {
            let r = lower_bound_with(&search, kind, &state).unwrap();
            for m in [&r.matrix_b, &r.mcrb, &r.bias, &r.lb] {
                assert!(is_symmetric(m, 1e-10));
                assert!(is_psd(m, 1e-10));
            }
            assert!(r.bias.trace() >= 0.0);
            let sv = r.bias.singular_values();
            assert!(sv[1] <= 1e-12 * sv[0].max(f64::MIN_POSITIVE));
        }
    }
}

#[test]
fn high_power_saturation() {
    let state_at = |sc: &Scenario| {
        StateParams::line_of_sight(Position::new(2.0, 2.0), 0.0, sc.geometry()).unwrap()
    };
    let mut prev = f64::INFINITY;
    let mut last = None;
    for p in [-10.0, 0.0, 10.0, 20.0, 25.0, 30.0] {
        let sc = Scenario::from_config(ScenarioConfig::default().with_tx_power_dbm(p)).unwrap();
        let r = lower_bound(ModelKind::Tm, &state_at(&sc), &sc).unwrap();
        let t = r.position_lb.trace();
        assert!(t <= prev * (1.0 + 1e-9), "LB grew at {p} dBm");
        prev = t;
        last = Some(r);
    }
    let r = last.unwrap();
    let ratio = r.position_lb.trace() / r.position_bias.trace();
    assert!(
        (ratio - 1.0).abs() < 0.01,
        "LB / bias trace at 30 dBm = {ratio:.4}"
    );
}

#[test]
fn crb_scales_with_power() {
    let peb = |kind: ModelKind, p: f64| {
        let sc = Scenario::from_config(ScenarioConfig::default().with_tx_power_dbm(p)).unwrap();
        let s = StateParams::line_of_sight(Position::new(3.0, -1.0), 0.0, sc.geometry()).unwrap();
        bounds_for_state(kind, &s, &sc).unwrap().peb
    };
    for kind in [ModelKind::Tm, ModelKind::Mm] {
        let slope = (peb(kind, 20.0) / peb(kind, 0.0)).log10() / 2.0;
        assert!((slope + 0.5).abs() < 1e-9, "{kind}: {slope}");
    }
}
