//! Concentrated maximum-likelihood position estimation.

use num_complex::Complex64;
use rayon::prelude::*;

use super::DescentDirection;
use super::EstimatorConfig;
use crate::channel::{ModelKind, Position, StateParams};
use crate::error::{Error, Result};
use crate::linalg::{inner, norm_sqr};
use crate::observation::Scenario;

/// Unit-gain stacked mean `eta(p)` of the chosen model.
fn eta(kind: ModelKind, p: &Position, scenario: &Scenario) -> Result<Vec<Complex64>> {
    let state = StateParams::new(*p, 1.0, 0.0)?;
    scenario.mean(kind, &state)
}

/// `|y - (eta^H y / |eta|^2) eta|^2`, evaluated as an explicit residual.
pub fn concentrated_cost(
    y: &[Complex64],
    p: &Position,
    kind: ModelKind,
    scenario: &Scenario,
) -> Result<f64> {
    Ok(fit(y, p, kind, scenario)?.cost)
}

struct Fit {
    eta: Vec<Complex64>,
    alpha: Complex64,
    residual: Vec<Complex64>,
    cost: f64,
}

fn fit(y: &[Complex64], p: &Position, kind: ModelKind, scenario: &Scenario) -> Result<Fit> {
    let eta = eta(kind, p, scenario)?;
    if eta.len() != y.len() {
        return Err(Error::InvalidConfig(format!(
            "observation has {} entries, model {}",
            y.len(),
            eta.len()
        )));
    }
    let e2 = norm_sqr(&eta);
    if !(e2 > 0.0) || !e2.is_finite() {
        return Err(Error::DegenerateGeometry(format!(
            "vanishing model response at ({}, {})",
            p.x, p.y
        )));
    }
    let alpha = inner(&eta, y) / e2;
    let residual: Vec<Complex64> = y.iter().zip(&eta).map(|(a, b)| a - alpha * b).collect();
    let cost = norm_sqr(&residual);
    Ok(Fit {
        eta,
        alpha,
        residual,
        cost,
    })
}

/// Cost, its gradient over `p`, and the Gauss-Newton matrix.
///
/// With `r` the projection residual and `alpha` the fitted gain, the
/// gradient is `-2 Re{(alpha d_i eta)^H r}` (the gain's own dependence on
/// `p` drops out at the projection). The Gauss-Newton matrix is
/// `2 Re{(alpha d_i eta)^H P (alpha d_j eta)}` with `P` the projector
/// orthogonal to `eta`.
fn cost_and_slope(
    y: &[Complex64],
    p: &Position,
    kind: ModelKind,
    scenario: &Scenario,
) -> Result<(f64, [f64; 2], [[f64; 2]; 2])> {
    let f = fit(y, p, kind, scenario)?;
    let state = StateParams::new(*p, 1.0, 0.0)?;
    let d = scenario.state_jacobian(kind, &state)?;
    let e2 = norm_sqr(&f.eta);
    let proj: Vec<Vec<Complex64>> = d[..2]
        .iter()
        .map(|di| {
            let c = inner(&f.eta, di) / e2;
            di.iter()
                .zip(&f.eta)
                .map(|(a, b)| f.alpha * (a - c * b))
                .collect()
        })
        .collect();
    let grad = [0, 1].map(|i| -2.0 * inner(&proj[i], &f.residual).re);
    let gn = [0, 1].map(|i| [0, 1].map(|j| 2.0 * inner(&proj[i], &proj[j]).re));
    Ok((f.cost, grad, gn))
}

/// Outcome of one estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub estimate: Position,
    pub cost: f64,
    /// Cost at the grid initializer.
    pub initial_cost: f64,
    pub iterations: usize,
    pub converged: bool,
    pub seed: u64,
}

/// Normalized unit-gain responses over a polar grid, shared across trials.
#[derive(Debug, Clone)]
pub struct GridDictionary {
    kind: ModelKind,
    points: Vec<Position>,
    atoms: Vec<Complex64>,
    len: usize,
}

impl GridDictionary {
    /// Grid of `aoa_bins x range_bins` points, angle-major: linear index
    /// `i_aoa * range_bins + i_range`. Angles are uniform, ranges
    /// log-spaced.
    pub fn new(kind: ModelKind, scenario: &Scenario, config: &EstimatorConfig) -> Result<Self> {
        config.validate()?;
        let (r_lo, r_hi) = config.effective_range(scenario);
        let (a_lo, a_hi) = config.aoa_range;
        let n_a = config.aoa_bins;
        let n_r = config.range_bins;
        let at = |lo: f64, hi: f64, i: usize, n: usize| {
            if n == 1 {
                0.5 * (lo + hi)
            } else {
                lo + (hi - lo) * i as f64 / (n - 1) as f64
            }
        };
        let points: Vec<Position> = (0..n_a)
            .flat_map(|ia| {
                let aoa = at(a_lo, a_hi, ia, n_a);
                (0..n_r).map(move |ir| {
                    let r = (at(r_lo.ln(), r_hi.ln(), ir, n_r)).exp();
                    Position::new(r * aoa.cos(), r * aoa.sin())
                })
            })
            .collect();
        let len = scenario.observation_len();
        let columns: Vec<Vec<Complex64>> = points
            .par_iter()
            .map(|p| {
                let e = eta(kind, p, scenario)?;
                let s = 1.0 / norm_sqr(&e).sqrt();
                Ok(e.into_iter().map(|v| v * s).collect())
            })
            .collect::<Result<_>>()?;
        let atoms = columns.into_iter().flatten().collect();
        Ok(GridDictionary {
            kind,
            points,
            atoms,
            len,
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn points(&self) -> &[Position] {
        &self.points
    }

    /// Grid point with the largest `|u^H y|` (the smallest concentrated
    /// cost); on exact ties the lower linear index wins.
    pub fn grid_init(&self, y: &[Complex64]) -> Result<Position> {
        if y.len() != self.len {
            return Err(Error::InvalidConfig(format!(
                "observation has {} entries, dictionary {}",
                y.len(),
                self.len
            )));
        }
        let mut best = (f64::NEG_INFINITY, 0usize);
        for (i, atom) in self.atoms.chunks_exact(self.len).enumerate() {
            let s = inner(atom, y).norm_sqr();
            if s > best.0 {
                best = (s, i);
            }
        }
        Ok(self.points[best.1])
    }
}

/// Descent on the concentrated cost from `p_init` with Armijo backtracking.
/// Accepted steps never increase the cost.
pub fn refine(
    y: &[Complex64],
    p_init: Position,
    kind: ModelKind,
    scenario: &Scenario,
    config: &EstimatorConfig,
) -> Result<TrialResult> {
    let scale = scenario.config().carrier_wavelength() / norm_sqr(y).max(f64::MIN_POSITIVE);
    let mut p = p_init;
    let (mut cost, mut grad, mut gn) = cost_and_slope(y, &p, kind, scenario)?;
    let initial_cost = cost;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < config.max_iterations {
        let gnorm = grad[0].hypot(grad[1]);
        if gnorm * scale < config.gradient_tolerance {
            converged = true;
            break;
        }
        let dir = match config.direction {
            DescentDirection::GaussNewton => {
                let det = gn[0][0] * gn[1][1] - gn[0][1] * gn[1][0];
                let d = [
                    -(gn[1][1] * grad[0] - gn[0][1] * grad[1]) / det,
                    -(gn[0][0] * grad[1] - gn[1][0] * grad[0]) / det,
                ];
                if det > 0.0
                    && d[0].is_finite()
                    && d[1].is_finite()
                    && d[0] * grad[0] + d[1] * grad[1] < 0.0
                {
                    d
                } else {
                    [-grad[0] / gnorm, -grad[1] / gnorm]
                }
            }
            DescentDirection::Gradient => [-grad[0] / gnorm, -grad[1] / gnorm],
        };
        if config.direction == DescentDirection::GaussNewton
            && dir[0].hypot(dir[1]) <= config.step_tolerance
        {
            converged = true;
            break;
        }
        let slope = dir[0] * grad[0] + dir[1] * grad[1];
        let mut t = config.initial_step;
        let mut accepted = None;
        while t * dir[0].hypot(dir[1]) > config.step_tolerance {
            let cand = Position::new(p.x + t * dir[0], p.y + t * dir[1]);
            if let Ok(c) = concentrated_cost(y, &cand, kind, scenario) {
                if c <= cost + config.armijo * t * slope {
                    accepted = Some(cand);
                    break;
                }
            }
            t *= config.shrink;
        }
        iterations += 1;
        match accepted {
            Some(cand) => {
                let moved = (cand - p).norm();
                p = cand;
                (cost, grad, gn) = cost_and_slope(y, &p, kind, scenario)?;
                if moved <= config.step_tolerance {
                    converged = true;
                    break;
                }
            }
            None => {
                // no decrease left above rounding
                converged = gnorm * scale < config.gradient_tolerance.sqrt();
                break;
            }
        }
    }
    Ok(TrialResult {
        estimate: p,
        cost,
        initial_cost,
        iterations,
        converged,
        seed: 0,
    })
}

/// Grid initialization followed by [`refine`].
pub fn estimate(
    y: &[Complex64],
    dictionary: &GridDictionary,
    scenario: &Scenario,
    config: &EstimatorConfig,
) -> Result<TrialResult> {
    let p0 = dictionary.grid_init(y)?;
    refine(y, p0, dictionary.kind(), scenario, config)
}
