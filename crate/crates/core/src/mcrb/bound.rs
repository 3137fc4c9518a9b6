//! Misspecified bound matrices and the lower bound of the far-field estimator.

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::pseudo_true::{PseudoTrueResult, PseudoTrueSearch};
use crate::bounds::position_jacobian_channel;
use crate::channel::{wrap_phase_difference, ChannelParams, ModelKind, StateParams};
use crate::error::{Error, Result};
use crate::linalg::{real_gram, real_inner, symmetric_inverse, symmetrize};
use crate::observation::Scenario;

fn residual(
    mean_bar: &[Complex64],
    theta0: &ChannelParams,
    scenario: &Scenario,
) -> Result<Vec<Complex64>> {
    let mu = scenario.mean_mm(theta0)?;
    if mu.len() != mean_bar.len() {
        return Err(Error::InvalidConfig(format!(
            "true mean has {} entries, model mean {}",
            mean_bar.len(),
            mu.len()
        )));
    }
    Ok(mean_bar.iter().zip(&mu).map(|(a, b)| a - b).collect())
}

/// `A_ij = (2 / sigma2) Re{<d_ij mu, eps> - <d_i mu, d_j mu>}` at `theta0`,
/// with analytic second derivatives of the far-field mean.
pub fn matrix_a(
    theta0: &ChannelParams,
    mean_bar: &[Complex64],
    scenario: &Scenario,
) -> Result<DMatrix<f64>> {
    let eps = residual(mean_bar, theta0, scenario)?;
    let d1 = scenario.channel_jacobian(ModelKind::Mm, theta0)?;
    let d2 = scenario.mm_hessian(theta0)?;
    let gram = real_gram(&d1);
    let s = 2.0 / scenario.noise_variance();
    Ok(DMatrix::from_fn(4, 4, |i, j| {
        s * (real_inner(&d2[i][j], &eps) - gram[(i, j)])
    }))
}

/// [`matrix_a`] with the second derivatives replaced by central differences
/// of the analytic first derivatives, Richardson-extrapolated from steps `h`
/// and `h / 2` (relative to each parameter's natural scale).
pub fn matrix_a_finite_difference(
    theta0: &ChannelParams,
    mean_bar: &[Complex64],
    scenario: &Scenario,
    rel_step: f64,
) -> Result<DMatrix<f64>> {
    let eps = residual(mean_bar, theta0, scenario)?;
    let d1 = scenario.channel_jacobian(ModelKind::Mm, theta0)?;
    let gram = real_gram(&d1);
    let lambda = scenario.config().carrier_wavelength();
    let scales = [
        1.0,
        lambda / crate::channel::SPEED_OF_LIGHT,
        theta0.gain,
        1.0,
    ];
    let base = theta0.to_array();
    let shifted = |j: usize, h: f64| -> Result<[Vec<Complex64>; 4]> {
        let mut p = base;
        p[j] += h;
        let t = ChannelParams {
            aoa: p[0],
            toa: p[1],
            gain: p[2],
            phase: p[3],
        };
        scenario.channel_jacobian(ModelKind::Mm, &t)
    };
    let mut second = DMatrix::zeros(4, 4);
    for j in 0..4 {
        let h = rel_step * scales[j];
        let central = |h: f64| -> Result<Vec<f64>> {
            let (up, down) = (shifted(j, h)?, shifted(j, -h)?);
            Ok((0..4)
                .map(|i| {
                    let diff: Vec<Complex64> = up[i]
                        .iter()
                        .zip(&down[i])
                        .map(|(a, b)| (a - b) / (2.0 * h))
                        .collect();
                    real_inner(&diff, &eps)
                })
                .collect())
        };
        let coarse = central(h)?;
        let fine = central(0.5 * h)?;
        for i in 0..4 {
            second[(i, j)] = (4.0 * fine[i] - coarse[i]) / 3.0;
        }
    }
    let s = 2.0 / scenario.noise_variance();
    Ok(symmetrize(&DMatrix::from_fn(4, 4, |i, j| {
        s * (second[(i, j)] - gram[(i, j)])
    })))
}

/// `B_ij = (4 / sigma2^2) Re<d_i mu, eps> Re<d_j mu, eps> + (2 / sigma2) Re<d_i mu, d_j mu>`.
pub fn matrix_b(
    theta0: &ChannelParams,
    mean_bar: &[Complex64],
    scenario: &Scenario,
) -> Result<DMatrix<f64>> {
    let eps = residual(mean_bar, theta0, scenario)?;
    let d1 = scenario.channel_jacobian(ModelKind::Mm, theta0)?;
    let sigma2 = scenario.noise_variance();
    let proj: Vec<f64> = d1.iter().map(|d| real_inner(d, &eps)).collect();
    let gram = real_gram(&d1);
    Ok(DMatrix::from_fn(4, 4, |i, j| {
        4.0 / (sigma2 * sigma2) * proj[i] * proj[j] + 2.0 / sigma2 * gram[(i, j)]
    }))
}

/// Everything produced by the misspecified-bound pipeline at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct McrbResult {
    pub truth: ModelKind,
    /// True parameters expressed in far-field channel parameters.
    pub theta_bar: ChannelParams,
    pub pseudo_true: PseudoTrueResult,
    pub matrix_a: DMatrix<f64>,
    pub matrix_b: DMatrix<f64>,
    /// `A^{-1} B A^{-1}`.
    pub mcrb: DMatrix<f64>,
    /// `(theta_bar - theta0)(theta_bar - theta0)^T`, phase difference wrapped.
    pub bias: DMatrix<f64>,
    /// `mcrb + bias`.
    pub lb: DMatrix<f64>,
    /// Position-domain blocks, mapped with the Jacobian at `theta0`.
    pub position_mcrb: DMatrix<f64>,
    pub position_bias: DMatrix<f64>,
    pub position_lb: DMatrix<f64>,
}

impl McrbResult {
    /// Root of the trace of the position-domain lower bound, meters.
    pub fn peb(&self) -> f64 {
        self.position_lb.trace().sqrt()
    }

    pub fn aeb(&self) -> f64 {
        self.lb[(0, 0)].sqrt()
    }

    pub fn deb(&self) -> f64 {
        self.lb[(1, 1)].sqrt()
    }

    /// Fraction of the position bound (variance) coming from the sandwich term.
    pub fn mcrb_fraction(&self) -> f64 {
        self.position_mcrb.trace() / self.position_lb.trace()
    }
}

/// Assembles the bound from a pseudo-true solution.
pub fn assemble(
    truth: ModelKind,
    theta_bar: ChannelParams,
    pseudo: PseudoTrueResult,
    mean_bar: &[Complex64],
    scenario: &Scenario,
) -> Result<McrbResult> {
    let theta0 = pseudo.theta0;
    let a = matrix_a(&theta0, mean_bar, scenario)?;
    let b = matrix_b(&theta0, mean_bar, scenario)?;
    let a_inv = symmetric_inverse(&a)?;
    let mcrb = symmetrize(&(&a_inv * &b * &a_inv));
    let diff = nalgebra::DVector::from_vec(vec![
        theta_bar.aoa - theta0.aoa,
        theta_bar.toa - theta0.toa,
        theta_bar.gain - theta0.gain,
        wrap_phase_difference(theta_bar.phase - theta0.phase),
    ]);
    let bias = &diff * diff.transpose();
    let lb = &mcrb + &bias;
    let j = position_jacobian_channel(theta0.aoa, theta0.toa)?;
    let to_position = |m: &DMatrix<f64>| symmetrize(&(j.transpose() * m.view((0, 0), (2, 2)) * &j));
    Ok(McrbResult {
        truth,
        theta_bar,
        position_mcrb: to_position(&mcrb),
        position_bias: to_position(&bias),
        position_lb: to_position(&lb),
        pseudo_true: pseudo,
        matrix_a: a,
        matrix_b: b,
        mcrb,
        bias,
        lb,
    })
}

/// Lower bound of the far-field estimator when data follow `truth` at
/// `state`, reusing a prepared search.
pub fn lower_bound_with(
    search: &PseudoTrueSearch<'_>,
    truth: ModelKind,
    state: &StateParams,
) -> Result<McrbResult> {
    let scenario = search.scenario();
    let mean_bar = scenario.mean(truth, state)?;
    let theta_bar = ChannelParams::from_state(state)?;
    let pseudo = search.run_for_mean(&mean_bar, &theta_bar)?;
    assemble(truth, theta_bar, pseudo, &mean_bar, scenario)
}

pub fn lower_bound(
    truth: ModelKind,
    state: &StateParams,
    scenario: &Scenario,
) -> Result<McrbResult> {
    lower_bound_with(&PseudoTrueSearch::new(scenario), truth, state)
}
