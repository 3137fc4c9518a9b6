//! Finite-difference oracles and random draws shared by the integration tests.

#![allow(dead_code)]

use std::f64::consts::PI;

use nalgebra::DMatrix;
use nearfield_mcrb::bounds::{fim_state, position_jacobian_channel, position_jacobian_state};
use nearfield_mcrb::channel::{
    channel_vector, mm_channel_vector, mm_param_derivatives, mm_param_second_derivatives,
    state_derivatives, ArrayGeometry, ChannelParams, ModelKind, Position, ScenarioConfig,
    StateParams,
};
use nearfield_mcrb::linalg::scaled_difference;
use nearfield_mcrb::observation::Scenario;
use num_complex::Complex64;
use rand::Rng;

/// A line-of-sight state at range `[0.5, 8]` m and angle within +-70 degrees,
/// with a uniform phase.
pub fn random_state(rng: &mut impl Rng, geometry: &ArrayGeometry) -> StateParams {
    let r = rng.random_range(0.5..8.0);
    let a = rng.random_range(-70f64..70.0).to_radians();
    let phase = rng.random_range(-PI..PI);
    StateParams::line_of_sight(Position::new(r * a.cos(), r * a.sin()), phase, geometry).unwrap()
}

fn rel_err(a: &[Complex64], b: &[Complex64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
    let den: f64 = a.iter().map(|x| x.norm_sqr()).sum();
    (num / den).sqrt()
}

/// Central difference of `f` at step `h`, Richardson-extrapolated from `h`
/// and `h / 2`.
fn richardson(f: &dyn Fn(f64) -> Vec<Complex64>, h: f64) -> Vec<Complex64> {
    let d = |s: f64| -> Vec<Complex64> {
        f(s).iter()
            .zip(f(-s))
            .map(|(p, m)| (p - m) / (2.0 * s))
            .collect()
    };
    let (d1, d2) = (d(h), d(h / 2.0));
    d1.iter()
        .zip(&d2)
        .map(|(a, b)| (4.0 * b - a) / 3.0)
        .collect()
}

fn perturb_state(s: &StateParams, i: usize, t: f64) -> StateParams {
    let mut v = *s;
    match i {
        0 => v.position.x += t,
        1 => v.position.y += t,
        2 => v.gain += t,
        _ => v.phase += t,
    }
    v
}

fn perturb_channel(th: &ChannelParams, i: usize, t: f64) -> ChannelParams {
    let mut v = *th;
    match i {
        0 => v.aoa += t,
        1 => v.toa += t,
        2 => v.gain += t,
        _ => v.phase += t,
    }
    v
}

/// Steps worth about 1e-4 rad of phase: large enough that rounding in
/// `exp(-j 2 pi f tau)` at tau ~ 1e-8 s stays far below the tolerance.
fn channel_steps(th: &ChannelParams, config: &ScenarioConfig) -> [f64; 4] {
    [
        1e-4,
        1e-4 / (2.0 * PI * config.carrier_freq),
        1e-4 * th.gain,
        1e-4,
    ]
}

/// Largest relative error of the closed-form state derivatives of `kind`
/// against finite differences, over all subcarriers and parameters.
pub fn state_derivative_error(
    kind: ModelKind,
    state: &StateParams,
    geometry: &ArrayGeometry,
    config: &ScenarioConfig,
) -> f64 {
    let steps = [1e-6, 1e-6, 1e-6 * state.gain, 1e-6];
    let mut worst = 0.0f64;
    for k in 1..=config.n_subcarriers {
        let d = state_derivatives(kind, state, k, geometry, config).unwrap();
        for (i, analytic) in d.as_array().iter().enumerate() {
            let f = |t: f64| {
                channel_vector(kind, &perturb_state(state, i, t), k, geometry, config).unwrap()
            };
            worst = worst.max(rel_err(analytic, &richardson(&f, steps[i])));
        }
    }
    worst
}

/// Same check for the far-field model's first and second derivatives in
/// channel parameters.
pub fn channel_derivative_error(theta: &ChannelParams, config: &ScenarioConfig) -> f64 {
    let steps = channel_steps(theta, config);
    let mut worst = 0.0f64;
    for k in 1..=config.n_subcarriers {
        let d = mm_param_derivatives(theta, k, config).unwrap();
        let dd = mm_param_second_derivatives(theta, k, config).unwrap();
        for (j, analytic) in d.as_array().iter().enumerate() {
            let f = |t: f64| mm_channel_vector(&perturb_channel(theta, j, t), k, config).unwrap();
            worst = worst.max(rel_err(analytic, &richardson(&f, steps[j])));
            for i in 0..4 {
                if i == 2 && j == 2 {
                    assert!(dd[2][2].iter().all(|z| z.norm() == 0.0));
                    continue;
                }
                let g = |t: f64| {
                    let th = perturb_channel(theta, j, t);
                    mm_param_derivatives(&th, k, config).unwrap().as_array()[i].to_vec()
                };
                worst = worst.max(rel_err(&dd[i][j], &richardson(&g, steps[j])));
            }
        }
    }
    worst
}

/// Equilibrated distance between the FIM and the Hessian of the negative
/// log-likelihood evaluated by second differences at noise-free data.
pub fn fim_hessian_error(kind: ModelKind, state: &StateParams, scenario: &Scenario) -> f64 {
    let y = scenario.mean(kind, state).unwrap();
    let sigma2 = scenario.noise_variance();
    let nll = |s: &StateParams| -> f64 {
        let mu = scenario.mean(kind, s).unwrap();
        y.iter()
            .zip(&mu)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            / sigma2
    };
    let h = [1e-6, 1e-6, 1e-4 * state.gain, 1e-4];
    let mut hess = DMatrix::zeros(4, 4);
    for i in 0..4 {
        for j in 0..4 {
            let at = |si: f64, sj: f64| {
                let s = perturb_state(state, i, si * h[i]);
                nll(&perturb_state(&s, j, sj * h[j]))
            };
            hess[(i, j)] = (at(1.0, 1.0) - at(1.0, -1.0) - at(-1.0, 1.0) + at(-1.0, -1.0))
                / (4.0 * h[i] * h[j]);
        }
    }
    let fim = fim_state(kind, state, scenario).unwrap().matrix;
    scaled_difference(&hess, &fim)
}

/// `max |J_s J_c - I|` for the position Jacobians at `state`.
pub fn jacobian_product_error(state: &StateParams) -> f64 {
    let th = ChannelParams::from_state(state).unwrap();
    let js = position_jacobian_state(th.aoa, th.toa).unwrap();
    let jc = position_jacobian_channel(th.aoa, th.toa).unwrap();
    (js * jc - DMatrix::<f64>::identity(2, 2)).abs().max()
}
