//! Fisher information, parameter Jacobians and the derived error bounds.
//!
//! Two parameterizations are used: the state `[p_x, p_y, gain, phase]` and
//! the channel `[aoa, toa, gain, phase]`. Information matrices move between
//! them with `I_s = J_s I_c J_s^T` and `I_c = J_c I_s J_c^T`, where row `i`
//! of `J_s` holds the derivatives of the channel parameters with respect to
//! state parameter `i` (and symmetrically for `J_c`).

use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::channel::{ChannelParams, ModelKind, Position, StateParams, SPEED_OF_LIGHT};
use crate::error::{Error, Result};
use crate::linalg::{crb_from_derivatives, real_gram, symmetric_inverse};
use crate::observation::Scenario;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parameterization {
    /// `[aoa, toa, gain, phase]`
    Channel,
    /// `[p_x, p_y, gain, phase]`
    State,
}

/// A 4x4 Fisher information matrix tagged with its parameterization.
#[derive(Debug, Clone, PartialEq)]
pub struct FimMatrix {
    pub matrix: DMatrix<f64>,
    pub parameterization: Parameterization,
    pub kind: ModelKind,
}

/// `(2 / sigma2) Re{D^H D}` for stacked derivative vectors `D`.
pub fn fim_from_derivatives(derivatives: &[Vec<Complex64>], sigma2: f64) -> DMatrix<f64> {
    real_gram(derivatives) * (2.0 / sigma2)
}

fn check_finite(m: DMatrix<f64>) -> Result<DMatrix<f64>> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(m)
    } else {
        Err(Error::NonFinite("Fisher information"))
    }
}

/// FIM in state parameters, computed from the state derivatives directly.
pub fn fim_state(kind: ModelKind, state: &StateParams, scenario: &Scenario) -> Result<FimMatrix> {
    let d = scenario.state_jacobian(kind, state)?;
    Ok(FimMatrix {
        matrix: check_finite(fim_from_derivatives(&d, scenario.noise_variance()))?,
        parameterization: Parameterization::State,
        kind,
    })
}

/// FIM in channel parameters, computed from the channel derivatives directly.
pub fn fim_channel(
    kind: ModelKind,
    theta: &ChannelParams,
    scenario: &Scenario,
) -> Result<FimMatrix> {
    let d = scenario.channel_jacobian(kind, theta)?;
    Ok(FimMatrix {
        matrix: check_finite(fim_from_derivatives(&d, scenario.noise_variance()))?,
        parameterization: Parameterization::Channel,
        kind,
    })
}

/// Dispatches on the requested parameterization.
pub fn fim(
    kind: ModelKind,
    state: &StateParams,
    parameterization: Parameterization,
    scenario: &Scenario,
) -> Result<FimMatrix> {
    match parameterization {
        Parameterization::State => fim_state(kind, state, scenario),
        Parameterization::Channel => {
            fim_channel(kind, &ChannelParams::from_state(state)?, scenario)
        }
    }
}

/// Position block of `J_c`: entry `(i, j)` is `dp_j / d theta_i` for
/// `theta = (aoa, toa)`.
pub fn position_jacobian_channel(aoa: f64, toa: f64) -> Result<DMatrix<f64>> {
    if !(toa > 0.0) || !toa.is_finite() || !aoa.is_finite() {
        return Err(Error::OutOfRange {
            what: "toa",
            value: toa,
        });
    }
    let (s, c) = aoa.sin_cos();
    let r = SPEED_OF_LIGHT * toa;
    Ok(DMatrix::from_row_slice(
        2,
        2,
        &[-r * s, r * c, SPEED_OF_LIGHT * c, SPEED_OF_LIGHT * s],
    ))
}

/// Position block of `J_s`: entry `(i, j)` is `d theta_j / dp_i`, with
/// `d aoa / dp = [-sin, cos] / (c tau)` and `d toa / dp = p / (c |p|)`.
pub fn position_jacobian_state(aoa: f64, toa: f64) -> Result<DMatrix<f64>> {
    if !(toa > 0.0) || !toa.is_finite() || !aoa.is_finite() {
        return Err(Error::OutOfRange {
            what: "toa",
            value: toa,
        });
    }
    let (s, c) = aoa.sin_cos();
    let r = SPEED_OF_LIGHT * toa;
    Ok(DMatrix::from_row_slice(
        2,
        2,
        &[-s / r, c / SPEED_OF_LIGHT, c / r, s / SPEED_OF_LIGHT],
    ))
}

fn embed(block: DMatrix<f64>) -> DMatrix<f64> {
    let mut j = DMatrix::identity(4, 4);
    j.view_mut((0, 0), (2, 2)).copy_from(&block);
    j
}

/// Full `J_s` (so that `I_s = J_s I_c J_s^T`), evaluated at `theta`.
pub fn jacobian_state_from_channel(theta: &ChannelParams) -> Result<DMatrix<f64>> {
    Ok(embed(position_jacobian_state(theta.aoa, theta.toa)?))
}

/// Full `J_c` (so that `I_c = J_c I_s J_c^T`), evaluated at the state.
pub fn jacobian_channel_from_state(state: &StateParams) -> Result<DMatrix<f64>> {
    let theta = ChannelParams::from_state(state)?;
    Ok(embed(position_jacobian_channel(theta.aoa, theta.toa)?))
}

/// Moves an information matrix to the other parameterization.
pub fn transform_fim(fim: &FimMatrix, state: &StateParams) -> Result<FimMatrix> {
    let theta = ChannelParams::from_state(state)?;
    let (j, target) = match fim.parameterization {
        Parameterization::Channel => (
            jacobian_state_from_channel(&theta)?,
            Parameterization::State,
        ),
        Parameterization::State => (
            jacobian_channel_from_state(state)?,
            Parameterization::Channel,
        ),
    };
    Ok(FimMatrix {
        matrix: &j * &fim.matrix * j.transpose(),
        parameterization: target,
        kind: fim.kind,
    })
}

/// Position, angle and delay error bounds with the matrices they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub kind: ModelKind,
    pub position: Position,
    pub tx_power_dbm: f64,
    /// Root of the trace of the position block of `I_s^{-1}`, meters.
    pub peb: f64,
    /// Radians.
    pub aeb: f64,
    /// Seconds.
    pub deb: f64,
    pub fim_state: FimMatrix,
    pub fim_channel: FimMatrix,
    /// `I_s^{-1}`.
    pub crb_state: DMatrix<f64>,
    /// `I_c^{-1}`.
    pub crb_channel: DMatrix<f64>,
}

impl BoundReport {
    pub const CSV_HEADER: [&'static str; 7] =
        ["model", "px", "py", "P_dbm", "peb_m", "aeb_rad", "deb_s"];

    pub fn csv_record(&self) -> [String; 7] {
        [
            self.kind.name().to_string(),
            format!("{:.16e}", self.position.x),
            format!("{:.16e}", self.position.y),
            format!("{:.16e}", self.tx_power_dbm),
            format!("{:.16e}", self.peb),
            format!("{:.16e}", self.aeb),
            format!("{:.16e}", self.deb),
        ]
    }
}

impl fmt::Display for BoundReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} p=({:.4}, {:.4}) P={:.1} dBm: PEB {:.4e} m, AEB {:.4e} rad, DEB {:.4e} s",
            self.kind,
            self.position.x,
            self.position.y,
            self.tx_power_dbm,
            self.peb,
            self.aeb,
            self.deb
        )
    }
}

fn root(v: f64, what: &'static str) -> Result<f64> {
    if v.is_finite() && v >= 0.0 {
        Ok(v.sqrt())
    } else {
        Err(Error::NonFinite(what))
    }
}

fn report(
    fim_state: FimMatrix,
    fim_channel: FimMatrix,
    crb_state: DMatrix<f64>,
    crb_channel: DMatrix<f64>,
    position: Position,
    tx_power_dbm: f64,
) -> Result<BoundReport> {
    Ok(BoundReport {
        kind: fim_state.kind,
        position,
        tx_power_dbm,
        peb: root(crb_state[(0, 0)] + crb_state[(1, 1)], "PEB")?,
        aeb: root(crb_channel[(0, 0)], "AEB")?,
        deb: root(crb_channel[(1, 1)], "DEB")?,
        fim_state,
        fim_channel,
        crb_state,
        crb_channel,
    })
}

/// PEB, AEB and DEB from the two information matrices.
///
/// The position bound is taken from the position block of the full inverse,
/// so the unknown gain and phase act as nuisance parameters.
pub fn error_bounds(
    fim_state: FimMatrix,
    fim_channel: FimMatrix,
    position: Position,
    tx_power_dbm: f64,
) -> Result<BoundReport> {
    let crb_state = symmetric_inverse(&fim_state.matrix)?;
    let crb_channel = symmetric_inverse(&fim_channel.matrix)?;
    report(
        fim_state,
        fim_channel,
        crb_state,
        crb_channel,
        position,
        tx_power_dbm,
    )
}

/// Bounds at a line-of-sight position with free-space gain and zero phase.
pub fn bounds_at(kind: ModelKind, position: Position, scenario: &Scenario) -> Result<BoundReport> {
    let state = StateParams::line_of_sight(position, 0.0, scenario.geometry())?;
    bounds_for_state(kind, &state, scenario)
}

/// Same as [`error_bounds`] but inverting through a QR factorization of the
/// stacked derivatives, in both parameterizations.
///
/// The far-field model is differentiated in channel parameters and mapped to
/// the state; all other kinds go the other way.
pub fn bounds_for_state(
    kind: ModelKind,
    state: &StateParams,
    scenario: &Scenario,
) -> Result<BoundReport> {
    let sigma2 = scenario.noise_variance();
    let theta = ChannelParams::from_state(state)?;
    let (ds, dc) = if kind == ModelKind::Mm {
        let dc = scenario.channel_jacobian(kind, &theta)?;
        let js = jacobian_state_from_channel(&theta)?;
        (mix(&js, &dc), dc.to_vec())
    } else {
        let ds = scenario.state_jacobian(kind, state)?;
        let jc = jacobian_channel_from_state(state)?;
        let dc = mix(&jc, &ds);
        (ds.to_vec(), dc)
    };
    let fim_state = FimMatrix {
        matrix: check_finite(fim_from_derivatives(&ds, sigma2))?,
        parameterization: Parameterization::State,
        kind,
    };
    let fim_channel = FimMatrix {
        matrix: check_finite(fim_from_derivatives(&dc, sigma2))?,
        parameterization: Parameterization::Channel,
        kind,
    };
    let crb_state = crb_from_derivatives(&ds, sigma2)?;
    let crb_channel = crb_from_derivatives(&dc, sigma2)?;
    report(
        fim_state,
        fim_channel,
        crb_state,
        crb_channel,
        state.position,
        scenario.config().tx_power_dbm(),
    )
}

/// Rows of `j` applied to the derivative vectors: `out_i = sum_j J_ij d_j`.
pub fn mix(j: &DMatrix<f64>, d: &[Vec<Complex64>]) -> Vec<Vec<Complex64>> {
    (0..j.nrows())
        .map(|i| {
            let mut out = vec![Complex64::new(0.0, 0.0); d[0].len()];
            for (k, col) in d.iter().enumerate() {
                let w = j[(i, k)];
                if w != 0.0 {
                    out.iter_mut().zip(col).for_each(|(o, v)| *o += v * w);
                }
            }
            out
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::ScenarioConfig;
    use crate::linalg::{is_psd, is_symmetric};
    use proptest::prelude::*;

    fn default_scenario(p_dbm: f64) -> Scenario {
        Scenario::from_config(ScenarioConfig::default().with_tx_power_dbm(p_dbm)).unwrap()
    }

    #[test]
    fn reference_crbs_at_ten_dbm() {
        let sc = default_scenario(10.0);
        let p = Position::new(2.0, 2.0);
        let tm = bounds_at(ModelKind::Tm, p, &sc).unwrap();
        let mm = bounds_at(ModelKind::Mm, p, &sc).unwrap();
        assert!((tm.peb / 7.934e-3 - 1.0).abs() < 0.02, "{tm}");
        assert!((mm.peb / 7.925e-3 - 1.0).abs() < 0.02, "{mm}");
        let tm30 = bounds_at(ModelKind::Tm, p, &default_scenario(30.0)).unwrap();
        assert!((tm30.peb / tm.peb - 0.1).abs() < 1e-9);
    }

    #[test]
    fn axis_aligned_jacobian() {
        let tau = 1e-8;
        let jc = position_jacobian_channel(0.0, tau).unwrap();
        assert_eq!(jc[(0, 0)], 0.0);
        assert_eq!(jc[(0, 1)], SPEED_OF_LIGHT * tau);
        assert_eq!(jc[(1, 0)], SPEED_OF_LIGHT);
        assert!(jc[(1, 1)].abs() < 1e-300);
        assert!(position_jacobian_state(0.3, 0.0).is_err());
    }

    #[test]
    fn power_scaling_and_transmissions() {
        let p = Position::new(1.5, -0.7);
        let a = bounds_at(ModelKind::Tm, p, &default_scenario(10.0)).unwrap();
        let b = bounds_at(
            ModelKind::Tm,
            p,
            &default_scenario(10.0 + 10.0 * 4f64.log10()),
        )
        .unwrap();
        let (fa, fb) = (&a.fim_state.matrix, &b.fim_state.matrix);
        for i in 0..4 {
            for j in 0..4 {
                let tol = 1e-9 * (fb[(i, i)] * fb[(j, j)]).sqrt();
                assert!((fb[(i, j)] - 4.0 * fa[(i, j)]).abs() <= tol);
            }
        }

        let cfg3 = ScenarioConfig {
            n_transmissions: 3,
            ..ScenarioConfig::default()
        };
        let c = bounds_at(ModelKind::Tm, p, &Scenario::from_config(cfg3).unwrap()).unwrap();
        let d = bounds_at(ModelKind::Tm, p, &default_scenario(20.0)).unwrap();
        let diff = (&c.fim_state.matrix - &d.fim_state.matrix * 3.0).amax();
        assert!(diff <= 1e-12 * c.fim_state.matrix.amax());
    }

    #[test]
    fn two_path_consistency_for_tm() {
        let sc = default_scenario(20.0);
        let state =
            StateParams::line_of_sight(Position::new(1.0, 0.8), 0.4, sc.geometry()).unwrap();
        let theta = ChannelParams::from_state(&state).unwrap();
        let direct_c = fim_channel(ModelKind::Tm, &theta, &sc).unwrap();
        let via_s = transform_fim(&fim_state(ModelKind::Tm, &state, &sc).unwrap(), &state).unwrap();
        let rel = (&direct_c.matrix - &via_s.matrix).amax() / direct_c.matrix.amax();
        assert!(rel < 1e-10, "{rel}");
        // PEB from state derivatives vs from channel derivatives mapped back
        let ds = sc.state_jacobian(ModelKind::Tm, &state).unwrap();
        let dc = sc.channel_jacobian(ModelKind::Tm, &theta).unwrap();
        let sigma2 = sc.noise_variance();
        let a = crb_from_derivatives(&ds, sigma2).unwrap();
        let jc = jacobian_channel_from_state(&state).unwrap();
        let b = jc.transpose() * crb_from_derivatives(&dc, sigma2).unwrap() * &jc;
        let peb_a = (a[(0, 0)] + a[(1, 1)]).sqrt();
        let peb_b = (b[(0, 0)] + b[(1, 1)]).sqrt();
        assert!((peb_a / peb_b - 1.0).abs() < 1e-10, "{peb_a} {peb_b}");
        let via_fim = error_bounds(
            fim_state(ModelKind::Tm, &state, &sc).unwrap(),
            direct_c,
            state.position,
            20.0,
        )
        .unwrap();
        assert!((via_fim.peb / peb_a - 1.0).abs() < 1e-8);
    }

    #[test]
    fn csv_row_shape() {
        let r = bounds_at(
            ModelKind::Mm,
            Position::new(2.0, 2.0),
            &default_scenario(10.0),
        )
        .unwrap();
        assert_eq!(r.csv_record()[0], "MM");
        assert_eq!(
            BoundReport::CSV_HEADER.join(","),
            "model,px,py,P_dbm,peb_m,aeb_rad,deb_s"
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn fim_symmetric_psd(x in 0.2f64..8.0, y in -4.0f64..4.0, xi in -3.0f64..3.0, k in 0usize..5) {
            let cfg = ScenarioConfig::default().with_antennas(16);
            let sc = Scenario::from_config(cfg).unwrap();
            let state = StateParams::line_of_sight(Position::new(x, y), xi, sc.geometry()).unwrap();
            let kind = ModelKind::ALL[k];
            for par in [Parameterization::State, Parameterization::Channel] {
                let f = fim(kind, &state, par, &sc).unwrap();
                prop_assert!(is_symmetric(&f.matrix, 1e-10));
                prop_assert!(is_psd(&f.matrix, 1e-10));
            }
        }

        #[test]
        fn jacobians_are_mutual_inverses(aoa in -1.5f64..1.5, r in 0.05f64..50.0) {
            let toa = r / SPEED_OF_LIGHT;
            let js = position_jacobian_state(aoa, toa).unwrap();
            let jc = position_jacobian_channel(aoa, toa).unwrap();
            let prod = &js * &jc;
            prop_assert!((prod - DMatrix::<f64>::identity(2, 2)).amax() < 1e-12);
        }
    }
}
