use std::f64::consts::{FRAC_PI_2, PI, TAU};

use nalgebra::Vector2;
use num_complex::Complex64;

use super::config::{ScenarioConfig, SPEED_OF_LIGHT};
use crate::error::{Error, Result};

/// A 2D position in meters, array centre at the origin.
pub type Position = Vector2<f64>;

/// Uniform linear array on the y-axis with half-wavelength spacing.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayGeometry {
    positions: Vec<Position>,
    aperture: f64,
    carrier_wavelength: f64,
}

impl ArrayGeometry {
    pub fn positions(&self) -> &[Position] {
        &self.positions
    }

    pub fn n_antennas(&self) -> usize {
        self.positions.len()
    }

    /// Largest inter-element distance `R`.
    pub fn aperture(&self) -> f64 {
        self.aperture
    }

    pub fn carrier_wavelength(&self) -> f64 {
        self.carrier_wavelength
    }
}

/// Element `n` (1-based) sits at `[0, (2n - N - 1) * lambda_c / 4]`.
pub fn antenna_positions(config: &ScenarioConfig) -> ArrayGeometry {
    let n_ant = config.n_antennas;
    let lambda = config.carrier_wavelength();
    let positions = (1..=n_ant)
        .map(|n| Position::new(0.0, element_offset(n, n_ant) * lambda / 4.0))
        .collect();
    ArrayGeometry {
        positions,
        aperture: n_ant.saturating_sub(1) as f64 * lambda / 2.0,
        carrier_wavelength: lambda,
    }
}

/// `2n - N - 1` for 1-based `n`.
pub(crate) fn element_offset(n: usize, n_ant: usize) -> f64 {
    (2 * n) as f64 - n_ant as f64 - 1.0
}

/// Angle of arrival and time of arrival of a UE at `p`.
///
/// The UE must sit in the open front half-plane `p_x > 0`.
pub fn params_from_position(p: &Position) -> Result<(f64, f64)> {
    let r = p.norm();
    if !(r > 0.0) {
        return Err(Error::DegenerateGeometry("UE at the array centre".into()));
    }
    if !(p.x > 0.0) {
        return Err(Error::OutOfRange {
            what: "p_x (UE must be in front of the array)",
            value: p.x,
        });
    }
    Ok((p.y.atan2(p.x), r / SPEED_OF_LIGHT))
}

/// `p = tau * c * [cos(aoa), sin(aoa)]`.
pub fn position_from_params(aoa: f64, toa: f64) -> Result<Position> {
    check_aoa(aoa)?;
    if !(toa > 0.0 && toa.is_finite()) {
        return Err(Error::OutOfRange {
            what: "time of arrival",
            value: toa,
        });
    }
    let r = toa * SPEED_OF_LIGHT;
    Ok(Position::new(r * aoa.cos(), r * aoa.sin()))
}

fn check_aoa(aoa: f64) -> Result<()> {
    if !(aoa > -FRAC_PI_2 && aoa < FRAC_PI_2) {
        return Err(Error::OutOfRange {
            what: "angle of arrival",
            value: aoa,
        });
    }
    Ok(())
}

/// Free-space path gain `lambda_c / (4 pi |p|) * exp(-j xi)`.
pub fn path_gain(p: &Position, phase: f64, geometry: &ArrayGeometry) -> Result<Complex64> {
    let r = p.norm();
    if !(r > 0.0) {
        return Err(Error::DegenerateGeometry("UE at the array centre".into()));
    }
    let rho = geometry.carrier_wavelength / (4.0 * PI * r);
    Ok(Complex64::from_polar(rho, -phase))
}

/// Wraps a phase into `[0, 2 pi)`.
pub fn wrap_phase(xi: f64) -> f64 {
    let w = xi.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Wraps a phase difference into `(-pi, pi]`.
pub fn wrap_phase_difference(d: f64) -> f64 {
    let w = (d + PI).rem_euclid(TAU) - PI;
    if w == -PI {
        PI
    } else {
        w
    }
}

/// Channel-domain parameter vector `[aoa, toa, gain, phase]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelParams {
    /// rad
    pub aoa: f64,
    /// s
    pub toa: f64,
    pub gain: f64,
    /// rad
    pub phase: f64,
}

/// State-domain parameter vector `[p_x, p_y, gain, phase]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateParams {
    pub position: Position,
    pub gain: f64,
    pub phase: f64,
}

impl ChannelParams {
    pub fn new(aoa: f64, toa: f64, gain: f64, phase: f64) -> Result<Self> {
        check_aoa(aoa)?;
        if !(toa > 0.0) {
            return Err(Error::OutOfRange {
                what: "time of arrival",
                value: toa,
            });
        }
        if !(gain > 0.0) {
            return Err(Error::OutOfRange {
                what: "gain magnitude",
                value: gain,
            });
        }
        Ok(ChannelParams {
            aoa,
            toa,
            gain,
            phase: wrap_phase(phase),
        })
    }

    pub fn from_state(state: &StateParams) -> Result<Self> {
        let (aoa, toa) = params_from_position(&state.position)?;
        Self::new(aoa, toa, state.gain, state.phase)
    }

    pub fn to_state(&self) -> Result<StateParams> {
        Ok(StateParams {
            position: position_from_params(self.aoa, self.toa)?,
            gain: self.gain,
            phase: self.phase,
        })
    }

    pub fn complex_gain(&self) -> Complex64 {
        Complex64::from_polar(self.gain, -self.phase)
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.aoa, self.toa, self.gain, self.phase]
    }
}

impl StateParams {
    pub fn new(position: Position, gain: f64, phase: f64) -> Result<Self> {
        params_from_position(&position)?;
        if !(gain > 0.0) {
            return Err(Error::OutOfRange {
                what: "gain magnitude",
                value: gain,
            });
        }
        Ok(StateParams {
            position,
            gain,
            phase: wrap_phase(phase),
        })
    }

    /// LOS state whose gain magnitude follows the free-space law.
    pub fn line_of_sight(position: Position, phase: f64, geometry: &ArrayGeometry) -> Result<Self> {
        let alpha = path_gain(&position, phase, geometry)?;
        Self::new(position, alpha.norm(), phase)
    }

    pub fn complex_gain(&self) -> Complex64 {
        Complex64::from_polar(self.gain, -self.phase)
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.position.x, self.position.y, self.gain, self.phase]
    }
}

/// Inner (Fresnel) and outer (Fraunhofer) near-field radii
/// `(0.62 sqrt(R^3 / lambda_c), 2 R^2 / lambda_c)`.
pub fn fresnel_fraunhofer(geometry: &ArrayGeometry) -> (f64, f64) {
    let r = geometry.aperture;
    let lambda = geometry.carrier_wavelength;
    (0.62 * (r.powi(3) / lambda).sqrt(), 2.0 * r * r / lambda)
}
