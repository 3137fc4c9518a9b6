//! Repeated noisy trials and their RMSE.

use rayon::prelude::*;

use super::mle::{estimate, GridDictionary, TrialResult};
use super::EstimatorConfig;
use crate::channel::{ModelKind, Position, StateParams};
use crate::error::{Error, Result};
use crate::observation::Scenario;

/// What to simulate.
#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloSpec {
    /// Model generating the data.
    pub data_kind: ModelKind,
    /// Model assumed by the estimator.
    pub estimator_kind: ModelKind,
    pub position: Position,
    pub n_trials: usize,
    /// Trial `t` draws its noise from seed `seed + t`.
    pub seed: u64,
}

/// One row of the per-trial dump.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub trial: usize,
    pub result: TrialResult,
    pub error: f64,
}

impl TrialRecord {
    pub const CSV_HEADER: [&'static str; 7] = [
        "trial",
        "seed",
        "px_hat",
        "py_hat",
        "err_m",
        "converged",
        "iters",
    ];

    pub fn csv_record(&self) -> [String; 7] {
        [
            self.trial.to_string(),
            self.result.seed.to_string(),
            format!("{:.16e}", self.result.estimate.x),
            format!("{:.16e}", self.result.estimate.y),
            format!("{:.16e}", self.error),
            self.result.converged.to_string(),
            self.result.iterations.to_string(),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloReport {
    pub spec: MonteCarloSpec,
    pub rmse: f64,
    pub mean_estimate: Position,
    pub n_trials: usize,
    pub n_nonconverged: usize,
    pub trials: Vec<TrialRecord>,
    /// Short human-readable scenario description.
    pub descriptor: String,
}

impl MonteCarloReport {
    pub fn errors(&self) -> Vec<f64> {
        self.trials.iter().map(|t| t.error).collect()
    }
}

/// Neumaier-compensated sum in the given order.
fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

/// Runs the trials in parallel; results are gathered in trial order and
/// reduced sequentially, so reports are bit-identical for any thread count.
/// Non-converged trials stay in the RMSE and are counted.
pub fn run_monte_carlo(
    scenario: &Scenario,
    spec: &MonteCarloSpec,
    dictionary: &GridDictionary,
    config: &EstimatorConfig,
) -> Result<MonteCarloReport> {
    if spec.n_trials == 0 {
        return Err(Error::InvalidConfig(
            "Monte-Carlo needs at least one trial".into(),
        ));
    }
    if dictionary.kind() != spec.estimator_kind {
        return Err(Error::InvalidConfig(format!(
            "dictionary built for {}, estimator is {}",
            dictionary.kind(),
            spec.estimator_kind
        )));
    }
    let state = StateParams::line_of_sight(spec.position, 0.0, scenario.geometry())?;
    let mean = scenario.mean(spec.data_kind, &state)?;
    let sigma2 = scenario.noise_variance();
    let trials: Vec<TrialRecord> = (0..spec.n_trials)
        .into_par_iter()
        .map(|t| {
            let seed = spec.seed.wrapping_add(t as u64);
            let y = crate::observation::sample_observation(&mean, sigma2, seed);
            let mut result = estimate(&y, dictionary, scenario, config)?;
            result.seed = seed;
            if !result.converged {
                log::debug!("trial {t} (seed {seed}) did not converge");
            }
            let error = (result.estimate - spec.position).norm();
            Ok(TrialRecord {
                trial: t,
                result,
                error,
            })
        })
        .collect::<Result<_>>()?;
    let n = trials.len() as f64;
    let rmse = (compensated_sum(trials.iter().map(|t| t.error * t.error)) / n).sqrt();
    let mean_estimate = Position::new(
        compensated_sum(trials.iter().map(|t| t.result.estimate.x)) / n,
        compensated_sum(trials.iter().map(|t| t.result.estimate.y)) / n,
    );
    let n_nonconverged = trials.iter().filter(|t| !t.result.converged).count();
    let cfg = scenario.config();
    Ok(MonteCarloReport {
        spec: spec.clone(),
        rmse,
        mean_estimate,
        n_trials: trials.len(),
        n_nonconverged,
        trials,
        descriptor: format!(
            "{} data, {} estimator, N={} M={} G={} K={} W={:.0} Hz P={:.2} dBm",
            spec.data_kind,
            spec.estimator_kind,
            cfg.n_antennas,
            cfg.n_rfc,
            cfg.n_transmissions,
            cfg.n_subcarriers,
            cfg.bandwidth,
            cfg.tx_power_dbm()
        ),
    })
}
