//! Power sweep (fig2) and the array-size / distance sweeps (fig3).

use rayon::prelude::*;

use super::table::{Cell, RowSink, Table};
use super::{ExperimentId, ExperimentSpec};
use crate::bounds::bounds_for_state;
use crate::channel::{ModelKind, Position, StateParams};
use crate::error::{Error, Result};
use crate::estimators::{run_monte_carlo, GridDictionary, MonteCarloSpec};
use crate::mcrb::{lower_bound_with, mismatch_at, PseudoTrueSearch};
use crate::observation::Scenario;

pub const FIG2_BOUND_COLUMNS: [&str; 9] = [
    "P_dbm",
    "crb_tm_peb_m",
    "crb_mm_peb_m",
    "lb_peb_m",
    "lb_mcrb_peb_m",
    "lb_bias_peb_m",
    "crb_tm_peb_var_m2",
    "crb_mm_peb_var_m2",
    "lb_peb_var_m2",
];

/// Appended when trials are requested.
pub const FIG2_TRIAL_COLUMNS: [&str; 4] =
    ["rmse_mle_m", "rmse_mmle_m", "nonconv_mle", "nonconv_mmle"];

pub const FIG3_COLUMNS: [&str; 21] = [
    "n_antennas",
    "distance_m",
    "px",
    "py",
    "model",
    "mme_peb_db",
    "mme_aeb_db",
    "mme_deb_db",
    "crb_peb_m",
    "lb_peb_m",
    "crb_aeb_rad",
    "lb_aeb_rad",
    "crb_deb_s",
    "lb_deb_s",
    "crb_peb_var_m2",
    "lb_peb_var_m2",
    "crb_aeb_var_rad2",
    "lb_aeb_var_rad2",
    "crb_deb_var_s2",
    "lb_deb_var_s2",
    "pseudo_true_converged",
];

/// fig2 schema: the bound columns, plus the trial columns when `trials > 0`.
pub fn fig2_columns(trials: usize) -> Vec<&'static str> {
    let mut columns = FIG2_BOUND_COLUMNS.to_vec();
    if trials > 0 {
        columns.extend(FIG2_TRIAL_COLUMNS);
    }
    columns
}

fn expect_id(spec: &ExperimentSpec, ids: &[ExperimentId]) -> Result<()> {
    if ids.contains(&spec.id) {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!(
            "runner cannot execute {}",
            spec.id
        )))
    }
}

/// Bounds (and, with trials, estimator RMSEs) over the power sweep. Points
/// run in order; each finished row goes to `sink` before the next starts.
/// Both estimators of point `i` see the same noise, drawn from seeds
/// `seed + i * trials ..`.
pub fn run_fig2(spec: &ExperimentSpec, mut sink: Option<&mut RowSink>) -> Result<Table> {
    expect_id(spec, &[ExperimentId::Fig2])?;
    spec.validate()?;
    let mut table = Table::new(&fig2_columns(spec.trials));

    let base = Scenario::from_config(spec.base.clone())?;
    let dictionaries = if spec.trials > 0 {
        Some((
            GridDictionary::new(ModelKind::Tm, &base, &spec.estimator)?,
            GridDictionary::new(ModelKind::Mm, &base, &spec.estimator)?,
        ))
    } else {
        None
    };

    for (i, &p_dbm) in spec.powers_dbm.iter().enumerate() {
        let scenario = Scenario::from_config(spec.base.clone().with_tx_power_dbm(p_dbm))?;
        let state = StateParams::line_of_sight(spec.position, 0.0, scenario.geometry())?;
        let (crb_tm, crb_mm) = rayon::join(
            || bounds_for_state(ModelKind::Tm, &state, &scenario),
            || bounds_for_state(ModelKind::Mm, &state, &scenario),
        );
        let (crb_tm, crb_mm) = (crb_tm?, crb_mm?);
        let lb = lower_bound_with(&PseudoTrueSearch::new(&scenario), ModelKind::Tm, &state)?;
        if !lb.pseudo_true.converged {
            log::warn!("fig2: pseudo-true search did not converge at P = {p_dbm} dBm");
        }
        let mut row: Vec<Cell> = vec![
            p_dbm.into(),
            crb_tm.peb.into(),
            crb_mm.peb.into(),
            lb.peb().into(),
            lb.position_mcrb.trace().sqrt().into(),
            lb.position_bias.trace().sqrt().into(),
            (crb_tm.peb * crb_tm.peb).into(),
            (crb_mm.peb * crb_mm.peb).into(),
            lb.position_lb.trace().into(),
        ];
        if let Some((d_tm, d_mm)) = &dictionaries {
            let mc = |dict: &GridDictionary| {
                let mc_spec = MonteCarloSpec {
                    data_kind: ModelKind::Tm,
                    estimator_kind: dict.kind(),
                    position: spec.position,
                    n_trials: spec.trials,
                    seed: spec.seed.wrapping_add((i * spec.trials) as u64),
                };
                run_monte_carlo(&scenario, &mc_spec, dict, &spec.estimator)
            };
            let mle = mc(d_tm)?;
            let mmle = mc(d_mm)?;
            row.extend([
                mle.rmse.into(),
                mmle.rmse.into(),
                mle.n_nonconverged.into(),
                mmle.n_nonconverged.into(),
            ]);
        }
        log::info!("fig2: P = {p_dbm:.2} dBm done");
        if let Some(s) = sink.as_deref_mut() {
            s.write(&row)?;
        }
        table.push(row)?;
    }
    Ok(table)
}

fn fig3_row(
    search: &PseudoTrueSearch<'_>,
    kind: ModelKind,
    position: Position,
    spec: &ExperimentSpec,
) -> Result<Vec<Cell>> {
    let m = mismatch_at(search, kind, position, spec.domain)?;
    if !m.lb.pseudo_true.converged {
        log::warn!("fig3: pseudo-true search did not converge for {kind} at {position:?}");
    }
    let crb_var = [
        m.crb.peb * m.crb.peb,
        m.crb.crb_channel[(0, 0)],
        m.crb.crb_channel[(1, 1)],
    ];
    let lb_var = [m.lb.position_lb.trace(), m.lb.lb[(0, 0)], m.lb.lb[(1, 1)]];
    let n = search.scenario().config().n_antennas;
    let mut row: Vec<Cell> = vec![
        n.into(),
        position.norm().into(),
        position.x.into(),
        position.y.into(),
        kind.name().into(),
        m.mme.mme_peb.into(),
        m.mme.mme_aeb.into(),
        m.mme.mme_deb.into(),
    ];
    for i in 0..3 {
        row.push(crb_var[i].sqrt().into());
        row.push(lb_var[i].sqrt().into());
    }
    for i in 0..3 {
        row.push(crb_var[i].into());
        row.push(lb_var[i].into());
    }
    row.push(m.lb.pseudo_true.converged.into());
    Ok(row)
}

/// Long-format MME table: one row per sweep point and true-model variant
/// (TM, TM-SNS, TM-SWM, TM-BSE), in sweep order.
pub fn run_fig3(spec: &ExperimentSpec) -> Result<Table> {
    expect_id(spec, &[ExperimentId::Fig3Array, ExperimentId::Fig3Distance])?;
    spec.validate()?;
    let rows: Vec<Vec<Vec<Cell>>> = match spec.id {
        ExperimentId::Fig3Array => spec
            .array_sizes
            .par_iter()
            .map(|&n| {
                let scenario = Scenario::from_config(spec.base.clone().with_antennas(n))?;
                let search = PseudoTrueSearch::new(&scenario);
                ModelKind::TRUE_MODELS
                    .par_iter()
                    .map(|&k| fig3_row(&search, k, spec.position, spec))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?,
        _ => {
            let scenario = Scenario::from_config(spec.base.clone())?;
            let search = PseudoTrueSearch::new(&scenario);
            spec.distance_positions()
                .par_iter()
                .map(|&p| {
                    ModelKind::TRUE_MODELS
                        .par_iter()
                        .map(|&k| fig3_row(&search, k, p, spec))
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<_>>()?
        }
    };
    let mut table = Table::new(&FIG3_COLUMNS);
    for row in rows.into_iter().flatten() {
        table.push(row)?;
    }
    Ok(table)
}
