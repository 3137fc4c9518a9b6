//! Maximum-likelihood position estimation under the true model (MLE) and
//! the far-field model (MMLE), and the Monte-Carlo harness around them.

mod mle;
mod monte_carlo;

use std::f64::consts::FRAC_PI_2;

pub use mle::{concentrated_cost, estimate, refine, GridDictionary, TrialResult};
pub use monte_carlo::{run_monte_carlo, MonteCarloReport, MonteCarloSpec, TrialRecord};

use crate::channel::SPEED_OF_LIGHT;
use crate::error::{Error, Result};
use crate::observation::Scenario;

/// Search direction used by [`refine`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DescentDirection {
    /// Gauss-Newton direction of the concentrated cost, falling back to the
    /// normalized gradient when it is not a descent direction.
    #[default]
    GaussNewton,
    /// Normalized negative gradient.
    Gradient,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig {
    pub aoa_bins: usize,
    /// Radians.
    pub aoa_range: (f64, f64),
    pub range_bins: usize,
    /// Meters, log-spaced.
    pub range_interval: (f64, f64),
    /// Clip the range grid to one period `c / spacing` above its lower
    /// end, the window in which the delay is unambiguous.
    pub unambiguous_range: bool,
    pub max_iterations: usize,
    pub initial_step: f64,
    pub shrink: f64,
    /// Sufficient-decrease constant.
    pub armijo: f64,
    /// On `|grad| lambda_c / |y|^2`.
    pub gradient_tolerance: f64,
    /// Meters.
    pub step_tolerance: f64,
    pub direction: DescentDirection,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        let lim = 89f64.to_radians();
        EstimatorConfig {
            aoa_bins: 100,
            aoa_range: (-lim, lim),
            range_bins: 100,
            range_interval: (0.1, 20.0),
            unambiguous_range: true,
            max_iterations: 200,
            initial_step: 1.0,
            shrink: 0.5,
            armijo: 1e-4,
            gradient_tolerance: 1e-12,
            step_tolerance: 1e-12,
            direction: DescentDirection::GaussNewton,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(format!("estimator: {m}")));
        if self.aoa_bins == 0 || self.range_bins == 0 {
            return bad("grid needs at least one bin per axis");
        }
        let (a0, a1) = self.aoa_range;
        if !(a0 > -FRAC_PI_2 && a1 < FRAC_PI_2 && a0 <= a1) {
            return bad("angle range must lie inside (-90, 90) degrees");
        }
        let (r0, r1) = self.range_interval;
        if !(r0 > 0.0 && r1 >= r0 && r1.is_finite()) {
            return bad("range interval must be positive and ordered");
        }
        if !(self.initial_step > 0.0
            && self.shrink > 0.0
            && self.shrink < 1.0
            && self.armijo > 0.0
            && self.armijo < 1.0)
        {
            return bad("line-search constants out of range");
        }
        if !(self.gradient_tolerance > 0.0 && self.step_tolerance > 0.0) {
            return bad("tolerances must be positive");
        }
        Ok(())
    }

    /// Range interval actually gridded for `scenario`.
    pub fn effective_range(&self, scenario: &Scenario) -> (f64, f64) {
        let (lo, hi) = self.range_interval;
        if self.unambiguous_range {
            let period = SPEED_OF_LIGHT / scenario.config().subcarrier_spacing();
            (lo, hi.min(lo + period))
        } else {
            (lo, hi)
        }
    }
}
