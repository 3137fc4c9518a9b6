//! Least-squares projection of a true-model mean onto the far-field model.

use std::f64::consts::{FRAC_PI_2, TAU};

use num_complex::Complex64;

use crate::channel::{steering_vector, ChannelParams, ModelKind, StateParams, SPEED_OF_LIGHT};
use crate::error::{Error, Result};
use crate::linalg::{inner, norm_sqr, real_inner, symmetric_inverse};
use crate::observation::Scenario;
use crate::optim::nelder_mead;

/// Search settings for [`PseudoTrueSearch`].
#[derive(Debug, Clone, PartialEq)]
pub struct SearchOptions {
    /// Coarse grid points in angle.
    pub aoa_points: usize,
    /// Coarse grid points in range.
    pub range_points: usize,
    /// The angle grid spans `(-pi/2 + margin, pi/2 - margin)`.
    pub aoa_margin: f64,
    pub max_simplex_iterations: usize,
    pub max_newton_iterations: usize,
    /// Scaled parameter step below which the search is converged.
    pub step_tolerance: f64,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            aoa_points: 200,
            range_points: 200,
            aoa_margin: 0.01,
            max_simplex_iterations: 400,
            max_newton_iterations: 40,
            step_tolerance: 1e-10,
        }
    }
}

/// Outcome of the pseudo-true search.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoTrueResult {
    pub theta0: ChannelParams,
    /// `|mu_bar - mu(theta0)|^2`, watts.
    pub residual: f64,
    /// Residual of the concentrated fit at the true angle and delay.
    pub start_residual: f64,
    pub converged: bool,
    pub iterations: usize,
    /// `max_i |Re<d_i mu, eps>| / (|mu_bar| |d_i mu|)`.
    pub stationarity: f64,
}

/// Reusable pseudo-true solver for one scenario.
///
/// The coarse stage evaluates the concentrated cost
/// `|mu_bar|^2 - |eta^H mu_bar|^2 / |eta|^2` on an angle x range grid, using
/// that `eta^H mu_bar = sum_k conj(D_k(tau)) z_k(aoa)` factorizes. The range
/// window spans one period `c / spacing` of the cost around the true range.
/// The best grid point (or the true parameters, whichever fits better) is
/// refined by Nelder-Mead on the concentrated cost and then polished by
/// Newton steps on all four parameters.
#[derive(Debug, Clone)]
pub struct PseudoTrueSearch<'a> {
    scenario: &'a Scenario,
    options: SearchOptions,
    aoa_grid: Vec<f64>,
    /// `W_g^T a(aoa)` per grid angle, transmission-major.
    combined: Vec<Vec<Complex64>>,
    /// `|eta(aoa, .)|^2` per grid angle.
    eta_norm: Vec<f64>,
    /// `f_k - f_c`.
    freq_offsets: Vec<f64>,
}

impl<'a> PseudoTrueSearch<'a> {
    pub fn new(scenario: &'a Scenario) -> Self {
        Self::with_options(scenario, SearchOptions::default())
    }

    pub fn with_options(scenario: &'a Scenario, options: SearchOptions) -> Self {
        let cfg = scenario.config();
        let n_a = options.aoa_points.max(2);
        let lo = -FRAC_PI_2 + options.aoa_margin;
        let hi = FRAC_PI_2 - options.aoa_margin;
        let aoa_grid: Vec<f64> = (0..n_a)
            .map(|i| lo + (hi - lo) * i as f64 / (n_a - 1) as f64)
            .collect();
        let mut combined = Vec::with_capacity(n_a);
        let mut eta_norm = Vec::with_capacity(n_a);
        let one = Complex64::new(1.0, 0.0);
        for &aoa in &aoa_grid {
            let a = steering_vector(aoa, cfg.n_antennas);
            let mut v = Vec::new();
            for g in 0..cfg.n_transmissions {
                scenario.combiners().combine_into(g, &a, one, &mut v);
            }
            let m = scenario.combiners().n_outputs();
            let mut norm = 0.0;
            for g in 1..=cfg.n_transmissions {
                let block = norm_sqr(&v[(g - 1) * m..g * m]);
                for k in 1..=cfg.n_subcarriers {
                    norm += scenario.pilots().symbol(g, k).norm_sqr() * block;
                }
            }
            combined.push(v);
            eta_norm.push(norm);
        }
        let freq_offsets = (1..=cfg.n_subcarriers)
            .map(|k| cfg.subcarrier_freq_unchecked(k) - cfg.carrier_freq)
            .collect();
        PseudoTrueSearch {
            scenario,
            options,
            aoa_grid,
            combined,
            eta_norm,
            freq_offsets,
        }
    }

    pub fn scenario(&self) -> &Scenario {
        self.scenario
    }

    /// Unit-gain far-field mean.
    fn eta(&self, aoa: f64, toa: f64) -> Option<Vec<Complex64>> {
        let theta = ChannelParams::new(aoa, toa, 1.0, 0.0).ok()?;
        self.scenario.mean_mm(&theta).ok()
    }

    /// Closed-form gain and the residual `|mu_bar - alpha eta|^2`.
    fn concentrated(&self, mean_bar: &[Complex64], aoa: f64, toa: f64) -> Option<(Complex64, f64)> {
        let eta = self.eta(aoa, toa)?;
        let e2 = norm_sqr(&eta);
        if !(e2 > 0.0) {
            return None;
        }
        let alpha = inner(&eta, mean_bar) / e2;
        let r = mean_bar
            .iter()
            .zip(&eta)
            .map(|(m, e)| (m - alpha * e).norm_sqr())
            .sum();
        Some((alpha, r))
    }

    /// Coarse grid maximum of `|eta^H mu_bar|^2 / |eta|^2`.
    fn coarse(&self, mean_bar: &[Complex64], lo: f64, step: f64) -> (f64, f64, f64) {
        let cfg = self.scenario.config();
        let (n_g, n_k) = (cfg.n_transmissions, cfg.n_subcarriers);
        let m = self.scenario.combiners().n_outputs();
        let ranges: Vec<f64> = (0..self.options.range_points)
            .map(|i| lo + step * i as f64)
            .collect();
        // phasors conj(D_k) up to the common carrier term, per range
        let phasors: Vec<Vec<Complex64>> = ranges
            .iter()
            .map(|r| {
                let tau = r / SPEED_OF_LIGHT;
                self.freq_offsets
                    .iter()
                    .map(|f| Complex64::cis(TAU * f * tau))
                    .collect()
            })
            .collect();
        let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
        let mut z = vec![Complex64::new(0.0, 0.0); n_k];
        for (ia, &aoa) in self.aoa_grid.iter().enumerate() {
            let v = &self.combined[ia];
            for (k, zk) in z.iter_mut().enumerate() {
                let mut acc = Complex64::new(0.0, 0.0);
                for g in 0..n_g {
                    let start = (g * n_k + k) * m;
                    let part = inner(&v[g * m..(g + 1) * m], &mean_bar[start..start + m]);
                    acc += self.scenario.pilots().symbol(g + 1, k + 1).conj() * part;
                }
                *zk = acc;
            }
            let norm = self.eta_norm[ia];
            for (ir, ph) in phasors.iter().enumerate() {
                let s: Complex64 = ph.iter().zip(&z).map(|(p, zk)| p * zk).sum();
                let score = s.norm_sqr() / norm;
                if score > best.0 {
                    best = (score, aoa, ranges[ir]);
                }
            }
        }
        best
    }

    /// Pseudo-true parameters for the noise-free mean of `truth` at `state`.
    pub fn run(&self, truth: ModelKind, state: &StateParams) -> Result<PseudoTrueResult> {
        let mean_bar = self.scenario.mean(truth, state)?;
        let theta_bar = ChannelParams::from_state(state)?;
        self.run_for_mean(&mean_bar, &theta_bar)
    }

    /// Pseudo-true parameters for an arbitrary stacked mean, with `hint`
    /// giving the true angle and delay that center the search.
    pub fn run_for_mean(
        &self,
        mean_bar: &[Complex64],
        hint: &ChannelParams,
    ) -> Result<PseudoTrueResult> {
        let cfg = self.scenario.config();
        let energy = norm_sqr(mean_bar);
        if !(energy > 0.0) || !energy.is_finite() {
            return Err(Error::NonFinite("true mean"));
        }
        let period = SPEED_OF_LIGHT / cfg.subcarrier_spacing();
        let r_bar = SPEED_OF_LIGHT * hint.toa;
        let lo = (r_bar - 0.5 * period).max(1e-3);
        let n_r = self.options.range_points.max(2);
        let r_step = period / n_r as f64;
        let a_step = self.aoa_grid[1] - self.aoa_grid[0];

        let start_residual = self
            .concentrated(mean_bar, hint.aoa, hint.toa)
            .map_or(f64::INFINITY, |c| c.1);
        let (_, ga, gr) = self.coarse(mean_bar, lo, r_step);
        let grid_residual = self
            .concentrated(mean_bar, ga, gr / SPEED_OF_LIGHT)
            .map_or(f64::INFINITY, |c| c.1);
        let (a0, r0) = if grid_residual < start_residual {
            (ga, gr)
        } else {
            (hint.aoa, r_bar)
        };

        let cost = |u: &[f64]| -> f64 {
            self.concentrated(mean_bar, u[0] * a_step, u[1] * r_step / SPEED_OF_LIGHT)
                .map_or(f64::INFINITY, |c| c.1)
        };
        let simplex = nelder_mead(
            cost,
            &[a0 / a_step, r0 / r_step],
            &[0.25, 0.25],
            1e-14 * energy,
            1e-6,
            self.options.max_simplex_iterations,
        );
        let aoa = simplex.x[0] * a_step;
        let toa = simplex.x[1] * r_step / SPEED_OF_LIGHT;
        let (alpha, _) = self
            .concentrated(mean_bar, aoa, toa)
            .ok_or(Error::NonFinite("pseudo-true refinement"))?;
        let start = ChannelParams::new(aoa, toa, alpha.norm(), -alpha.arg())?;
        let (theta0, newton_iters, converged) = self.newton(mean_bar, start, energy)?;

        let mu = self.scenario.mean_mm(&theta0)?;
        let eps: Vec<Complex64> = mean_bar.iter().zip(&mu).map(|(a, b)| a - b).collect();
        let residual = norm_sqr(&eps);
        let d1 = self.scenario.channel_jacobian(ModelKind::Mm, &theta0)?;
        let stationarity = d1
            .iter()
            .map(|d| real_inner(d, &eps).abs() / (energy.sqrt() * norm_sqr(d).sqrt()))
            .fold(0.0, f64::max);
        if !converged {
            log::warn!(
                "pseudo-true search did not converge (aoa {:.6}, toa {:.6e})",
                theta0.aoa,
                theta0.toa
            );
        }
        Ok(PseudoTrueResult {
            theta0,
            residual,
            start_residual,
            converged,
            iterations: simplex.iterations + newton_iters,
            stationarity,
        })
    }

    /// Newton polish on `[aoa, toa, gain, phase]` with backtracking.
    fn newton(
        &self,
        mean_bar: &[Complex64],
        start: ChannelParams,
        energy: f64,
    ) -> Result<(ChannelParams, usize, bool)> {
        let lambda = self.scenario.config().carrier_wavelength();
        let residual_of = |t: &ChannelParams| -> Option<f64> {
            let mu = self.scenario.mean_mm(t).ok()?;
            Some(
                mean_bar
                    .iter()
                    .zip(&mu)
                    .map(|(a, b)| (a - b).norm_sqr())
                    .sum(),
            )
        };
        let mut theta = start;
        let mut f = residual_of(&theta).ok_or(Error::NonFinite("pseudo-true residual"))?;
        for it in 0..self.options.max_newton_iterations {
            let mu = self.scenario.mean_mm(&theta)?;
            let eps: Vec<Complex64> = mean_bar.iter().zip(&mu).map(|(a, b)| a - b).collect();
            let d1 = self.scenario.channel_jacobian(ModelKind::Mm, &theta)?;
            let d2 = self.scenario.mm_hessian(&theta)?;
            let grad: Vec<f64> = d1.iter().map(|d| -2.0 * real_inner(d, &eps)).collect();
            let gn = nalgebra::DMatrix::from_fn(4, 4, |i, j| 2.0 * real_inner(&d1[i], &d1[j]));
            let hess = nalgebra::DMatrix::from_fn(4, 4, |i, j| {
                gn[(i, j)] - 2.0 * real_inner(&d2[i][j], &eps)
            });
            let g = nalgebra::DVector::from_vec(grad);
            let mut delta =
                -(symmetric_inverse(&hess).unwrap_or_else(|_| nalgebra::DMatrix::zeros(4, 4)) * &g);
            if !(delta.dot(&g) < 0.0) {
                delta = -(symmetric_inverse(&gn)? * &g);
            }
            let scaled = |d: &nalgebra::DVector<f64>, t: f64| -> f64 {
                t * d[0]
                    .abs()
                    .max(d[1].abs() * SPEED_OF_LIGHT / lambda)
                    .max(d[2].abs() / theta.gain)
                    .max(d[3].abs())
            };
            if scaled(&delta, 1.0) < self.options.step_tolerance {
                return Ok((theta, it, true));
            }
            let mut t = 1.0;
            let mut accepted = None;
            while t > 1e-12 {
                let cand = ChannelParams::new(
                    theta.aoa + t * delta[0],
                    theta.toa + t * delta[1],
                    theta.gain + t * delta[2],
                    theta.phase + t * delta[3],
                );
                if let Ok(cand) = cand {
                    if let Some(fc) = residual_of(&cand) {
                        let armijo = fc <= f + 1e-4 * t * delta.dot(&g);
                        let flat = (fc - f).abs() <= 1e-14 * energy && t == 1.0;
                        if armijo || flat {
                            accepted = Some((cand, fc));
                            break;
                        }
                    }
                }
                t *= 0.5;
            }
            match accepted {
                Some((cand, fc)) => {
                    let step = scaled(&delta, t);
                    let improvement = f - fc;
                    theta = cand;
                    f = fc;
                    if step < self.options.step_tolerance && improvement < 1e-14 * energy {
                        return Ok((theta, it + 1, true));
                    }
                }
                None => return Ok((theta, it + 1, false)),
            }
        }
        Ok((theta, self.options.max_newton_iterations, false))
    }
}

/// One-shot pseudo-true search with default options.
pub fn pseudo_true(
    truth: ModelKind,
    state: &StateParams,
    scenario: &Scenario,
) -> Result<PseudoTrueResult> {
    PseudoTrueSearch::new(scenario).run(truth, state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{Position, ScenarioConfig};

    #[test]
    fn self_match_recovers_truth() {
        let sc = Scenario::from_config(ScenarioConfig::default()).unwrap();
        let state =
            StateParams::line_of_sight(Position::new(2.0, 2.0), 0.3, sc.geometry()).unwrap();
        let r = pseudo_true(ModelKind::Mm, &state, &sc).unwrap();
        let bar = ChannelParams::from_state(&state).unwrap();
        assert!(r.converged);
        assert!((r.theta0.aoa - bar.aoa).abs() < 1e-10);
        assert!(((r.theta0.toa - bar.toa) * SPEED_OF_LIGHT).abs() < 1e-10);
        assert!((r.theta0.gain / bar.gain - 1.0).abs() < 1e-10);
        assert!(crate::channel::wrap_phase_difference(r.theta0.phase - bar.phase).abs() < 1e-9);
        let energy = norm_sqr(&sc.mean(ModelKind::Mm, &state).unwrap());
        assert!(r.residual <= 1e-20 * energy);
    }

    #[test]
    fn mismatch_fit_is_stationary_and_improves_start() {
        let sc = Scenario::from_config(ScenarioConfig::default()).unwrap();
        let state =
            StateParams::line_of_sight(Position::new(2.0, 2.0), 0.0, sc.geometry()).unwrap();
        let r = pseudo_true(ModelKind::Tm, &state, &sc).unwrap();
        assert!(r.converged, "{r:?}");
        assert!(r.residual <= r.start_residual);
        assert!(r.stationarity < 1e-8, "{}", r.stationarity);
    }

    #[test]
    fn coarse_grid_agrees_with_direct_cost() {
        let sc = Scenario::from_config(ScenarioConfig::default().with_antennas(16)).unwrap();
        let search = PseudoTrueSearch::with_options(
            &sc,
            SearchOptions {
                aoa_points: 7,
                range_points: 5,
                ..SearchOptions::default()
            },
        );
        let state =
            StateParams::line_of_sight(Position::new(1.0, 0.4), 0.0, sc.geometry()).unwrap();
        let mean_bar = sc.mean(ModelKind::Tm, &state).unwrap();
        let energy = norm_sqr(&mean_bar);
        let (score, a, r) = search.coarse(&mean_bar, 0.5, 0.3);
        let (_, resid) = search
            .concentrated(&mean_bar, a, r / SPEED_OF_LIGHT)
            .unwrap();
        assert!(((energy - score) - resid).abs() < 1e-9 * energy);
    }
}
