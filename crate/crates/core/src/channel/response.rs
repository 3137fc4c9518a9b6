use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;

use super::config::{ScenarioConfig, SPEED_OF_LIGHT};
use super::geometry::{
    element_offset, params_from_position, ArrayGeometry, ChannelParams, Position, StateParams,
};
use crate::error::{Error, Result};

const J: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Channel model variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    /// Far-field, narrowband, stationary model.
    Mm,
    /// Near-field wideband model with all three impairments.
    Tm,
    /// Far-field model plus per-antenna/per-subcarrier amplitudes only.
    TmSns,
    /// Spherical wavefront at the carrier wavelength only.
    TmSwm,
    /// Frequency-dependent far-field steering only.
    TmBse,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::Mm,
        ModelKind::Tm,
        ModelKind::TmSns,
        ModelKind::TmSwm,
        ModelKind::TmBse,
    ];

    /// The true-model family evaluated against the mismatched model.
    pub const TRUE_MODELS: [ModelKind; 4] = [
        ModelKind::Tm,
        ModelKind::TmSns,
        ModelKind::TmSwm,
        ModelKind::TmBse,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Mm => "MM",
            ModelKind::Tm => "TM",
            ModelKind::TmSns => "TM-SNS",
            ModelKind::TmSwm => "TM-SWM",
            ModelKind::TmBse => "TM-BSE",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        Ok(match norm.as_str() {
            "mm" => ModelKind::Mm,
            "tm" => ModelKind::Tm,
            "tm-sns" | "sns" => ModelKind::TmSns,
            "tm-swm" | "swm" => ModelKind::TmSwm,
            "tm-bse" | "bse" => ModelKind::TmBse,
            _ => return Err(Error::InvalidConfig(format!("unknown model kind `{s}`"))),
        })
    }
}

/// Far-field steering vector, element `n` is `exp(j pi (2n-N-1) sin(aoa) / 2)`.
pub fn steering_vector(aoa: f64, n_antennas: usize) -> Vec<Complex64> {
    let s = aoa.sin();
    (1..=n_antennas)
        .map(|n| Complex64::cis(PI * element_offset(n, n_antennas) * s / 2.0))
        .collect()
}

/// Frequency-dependent steering vector of subcarrier `k`.
pub fn steering_vector_bse(aoa: f64, k: usize, config: &ScenarioConfig) -> Result<Vec<Complex64>> {
    let ratio = config.subcarrier_freq(k)? / config.carrier_freq;
    let s = aoa.sin() * ratio;
    let n_ant = config.n_antennas;
    Ok((1..=n_ant)
        .map(|n| Complex64::cis(PI * element_offset(n, n_ant) * s / 2.0))
        .collect())
}

/// Delay phasor `exp(-j 2 pi |p| / lambda_k)`, carrier term included.
pub fn delay_term(p: &Position, k: usize, config: &ScenarioConfig) -> Result<Complex64> {
    let f = config.subcarrier_freq(k)?;
    Ok(Complex64::cis(-2.0 * PI * f * p.norm() / SPEED_OF_LIGHT))
}

/// `|p - b_n|` together with `|p - b_n| - |p|` evaluated without cancellation.
fn element_range(p: &Position, b: &Position, r: f64) -> Result<(f64, f64)> {
    let v = p - b;
    let rn = v.norm();
    if !(rn > 0.0) {
        return Err(Error::DegenerateGeometry(
            "UE coincides with an antenna".into(),
        ));
    }
    let diff = (b.dot(b) - 2.0 * p.dot(b)) / (rn + r);
    Ok((rn, diff))
}

fn antenna(geometry: &ArrayGeometry, n: usize) -> Result<&Position> {
    n.checked_sub(1)
        .and_then(|i| geometry.positions().get(i))
        .ok_or(Error::OutOfRange {
            what: "antenna index",
            value: n as f64,
        })
}

/// Amplitude factor `lambda_k |p| / (lambda_c |p - b_n|)` of antenna `n`.
pub fn sns_amplitude(
    p: &Position,
    k: usize,
    n: usize,
    geometry: &ArrayGeometry,
    config: &ScenarioConfig,
) -> Result<f64> {
    let ratio = config.carrier_freq / config.subcarrier_freq(k)?;
    let b = antenna(geometry, n)?;
    let (rn, _) = element_range(p, b, p.norm())?;
    Ok(ratio * p.norm() / rn)
}

/// Spherical-wave phase `exp(-j 2 pi (|p - b_n| - |p|) / lambda_k)`.
pub fn spherical_phase(
    p: &Position,
    k: usize,
    n: usize,
    geometry: &ArrayGeometry,
    config: &ScenarioConfig,
) -> Result<Complex64> {
    let f = config.subcarrier_freq(k)?;
    let b = antenna(geometry, n)?;
    let (_, diff) = element_range(p, b, p.norm())?;
    Ok(Complex64::cis(-2.0 * PI * f * diff / SPEED_OF_LIGHT))
}

fn check_geometry(geometry: &ArrayGeometry, config: &ScenarioConfig) -> Result<()> {
    if geometry.n_antennas() != config.n_antennas {
        return Err(Error::InvalidConfig(format!(
            "geometry has {} elements, config {}",
            geometry.n_antennas(),
            config.n_antennas
        )));
    }
    Ok(())
}

/// Channel vector `h_k` of the selected model at subcarrier `k`.
pub fn channel_vector(
    kind: ModelKind,
    state: &StateParams,
    k: usize,
    geometry: &ArrayGeometry,
    config: &ScenarioConfig,
) -> Result<Vec<Complex64>> {
    check_geometry(geometry, config)?;
    let f_k = config.subcarrier_freq(k)?;
    let p = &state.position;
    params_from_position(p)?;
    let r = p.norm();
    let alpha = state.complex_gain();
    let kappa_k = 2.0 * PI * f_k / SPEED_OF_LIGHT;
    let kappa_c = 2.0 * PI * config.carrier_freq / SPEED_OF_LIGHT;
    let wl_ratio = f_k / config.carrier_freq;
    let sin_aoa = p.y / r;
    let n_ant = config.n_antennas;
    let base = alpha * Complex64::cis(-kappa_k * r);

    let mut h = Vec::with_capacity(n_ant);
    for (i, b) in geometry.positions().iter().enumerate() {
        let off = element_offset(i + 1, n_ant);
        let elem = match kind {
            ModelKind::Mm => Complex64::cis(PI * off * sin_aoa / 2.0),
            ModelKind::TmBse => Complex64::cis(PI * off * sin_aoa * wl_ratio / 2.0),
            ModelKind::TmSns => {
                let (rn, _) = element_range(p, b, r)?;
                Complex64::cis(PI * off * sin_aoa / 2.0) * (r / (wl_ratio * rn))
            }
            ModelKind::TmSwm => {
                let (_, diff) = element_range(p, b, r)?;
                Complex64::cis(-kappa_c * diff)
            }
            ModelKind::Tm => {
                let (rn, diff) = element_range(p, b, r)?;
                Complex64::cis(-kappa_k * diff) * (r / (wl_ratio * rn))
            }
        };
        h.push(base * elem);
    }
    Ok(h)
}

/// Far-field channel vector written directly in channel parameters.
pub fn mm_channel_vector(
    theta: &ChannelParams,
    k: usize,
    config: &ScenarioConfig,
) -> Result<Vec<Complex64>> {
    let f_k = config.subcarrier_freq(k)?;
    let base = theta.complex_gain() * Complex64::cis(-2.0 * PI * f_k * theta.toa);
    Ok(steering_vector(theta.aoa, config.n_antennas)
        .into_iter()
        .map(|a| base * a)
        .collect())
}

/// Derivatives of `h_k` with respect to `[p_x, p_y, gain, phase]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateDerivatives {
    pub px: Vec<Complex64>,
    pub py: Vec<Complex64>,
    pub gain: Vec<Complex64>,
    pub phase: Vec<Complex64>,
}

impl StateDerivatives {
    pub fn as_array(&self) -> [&[Complex64]; 4] {
        [&self.px, &self.py, &self.gain, &self.phase]
    }
}

/// Derivatives of `h_k` with respect to `[aoa, toa, gain, phase]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelDerivatives {
    pub aoa: Vec<Complex64>,
    pub toa: Vec<Complex64>,
    pub gain: Vec<Complex64>,
    pub phase: Vec<Complex64>,
}

impl ChannelDerivatives {
    pub fn as_array(&self) -> [&[Complex64]; 4] {
        [&self.aoa, &self.toa, &self.gain, &self.phase]
    }
}

fn gain_derivatives(h: &[Complex64], gain: f64) -> (Vec<Complex64>, Vec<Complex64>) {
    (
        h.iter().map(|v| v / gain).collect(),
        h.iter().map(|v| -J * v).collect(),
    )
}

/// Closed-form derivatives of the full near-field model with respect to the
/// state: amplitude, spherical-phase and delay terms combined by the product
/// rule.
pub fn tm_state_derivatives(
    state: &StateParams,
    k: usize,
    geometry: &ArrayGeometry,
    config: &ScenarioConfig,
) -> Result<StateDerivatives> {
    let h = channel_vector(ModelKind::Tm, state, k, geometry, config)?;
    let p = state.position;
    let r = p.norm();
    let lambda_k = config.subcarrier_wavelength(k)?;
    let lambda_c = config.carrier_wavelength();
    let alpha = state.complex_gain();
    let kappa = 2.0 * PI / lambda_k;
    let u = p / r;
    let mut px = Vec::with_capacity(h.len());
    let mut py = Vec::with_capacity(h.len());
    for (n, (b, &hn)) in geometry.positions().iter().zip(&h).enumerate() {
        let v = p - b;
        let rn = v.norm();
        let c_kn = lambda_k * r / (lambda_c * rn);
        let alpha_kn = alpha * c_kn;
        let d_kn = spherical_phase(&p, k, n + 1, geometry, config)?;
        let big_d = Complex64::cis(-kappa * r);
        // d alpha_{k,n} / dp
        let d_alpha = (p / (r * rn) - v * r / rn.powi(3)) * (lambda_k / lambda_c);
        // d d_{k,n} / dp
        let d_sph = (v / rn - u) * (-kappa);
        // d D_k / dp
        let d_delay = u * (-kappa);
        let mut grad = [Complex64::new(0.0, 0.0); 2];
        for (axis, g) in grad.iter_mut().enumerate() {
            *g = hn / alpha_kn * (alpha * d_alpha[axis])
                + hn / d_kn * (J * d_kn * d_sph[axis])
                + hn / big_d * (J * big_d * d_delay[axis]);
        }
        px.push(grad[0]);
        py.push(grad[1]);
    }
    let (gain, phase) = gain_derivatives(&h, state.gain);
    Ok(StateDerivatives {
        px,
        py,
        gain,
        phase,
    })
}

/// State derivatives for any model kind. The full near-field model uses
/// [`tm_state_derivatives`]; the others differentiate the log of each
/// element, `dh/dp = h * d(ln A + j Phi)/dp`.
pub fn state_derivatives(
    kind: ModelKind,
    state: &StateParams,
    k: usize,
    geometry: &ArrayGeometry,
    config: &ScenarioConfig,
) -> Result<StateDerivatives> {
    if kind == ModelKind::Tm {
        return tm_state_derivatives(state, k, geometry, config);
    }
    let h = channel_vector(kind, state, k, geometry, config)?;
    let p = state.position;
    let r = p.norm();
    let f_k = config.subcarrier_freq(k)?;
    let kappa_k = 2.0 * PI * f_k / SPEED_OF_LIGHT;
    let kappa_c = 2.0 * PI * config.carrier_freq / SPEED_OF_LIGHT;
    let u = p / r;
    // d sin(aoa) / dp
    let d_sin = Position::new(-p.x * p.y, p.x * p.x) / r.powi(3);
    let n_ant = config.n_antennas;
    let mut px = Vec::with_capacity(h.len());
    let mut py = Vec::with_capacity(h.len());
    for (i, (b, &hn)) in geometry.positions().iter().zip(&h).enumerate() {
        let off = element_offset(i + 1, n_ant);
        let steer = d_sin * (PI * off / 2.0);
        // (real log-amplitude gradient, phase gradient)
        let (amp, phase) = match kind {
            ModelKind::Mm => (Position::zeros(), steer),
            ModelKind::TmBse => (Position::zeros(), steer * (f_k / config.carrier_freq)),
            ModelKind::TmSns => {
                let v = p - b;
                (u / r - v / v.norm_squared(), steer)
            }
            ModelKind::TmSwm => {
                let v = p - b;
                (Position::zeros(), (v / v.norm() - u) * (-kappa_c))
            }
            ModelKind::Tm => unreachable!(),
        };
        let total_phase = phase - u * kappa_k;
        px.push(hn * Complex64::new(amp.x, total_phase.x));
        py.push(hn * Complex64::new(amp.y, total_phase.y));
    }
    let (gain, phase) = gain_derivatives(&h, state.gain);
    Ok(StateDerivatives {
        px,
        py,
        gain,
        phase,
    })
}

/// Per-element log-derivative multipliers of the far-field model in channel
/// parameters: `dh/dtheta_i = g_i * h`.
fn mm_log_derivatives(
    theta: &ChannelParams,
    k: usize,
    config: &ScenarioConfig,
) -> Result<[Vec<Complex64>; 4]> {
    let f_k = config.subcarrier_freq(k)?;
    let n_ant = config.n_antennas;
    let cos = theta.aoa.cos();
    let g_aoa = (1..=n_ant)
        .map(|n| J * (PI * element_offset(n, n_ant) * cos / 2.0))
        .collect();
    let g_toa = vec![-J * (2.0 * PI * f_k); n_ant];
    let g_gain = vec![Complex64::new(1.0 / theta.gain, 0.0); n_ant];
    let g_phase = vec![-J; n_ant];
    Ok([g_aoa, g_toa, g_gain, g_phase])
}

/// First derivatives of the far-field model in channel parameters.
pub fn mm_param_derivatives(
    theta: &ChannelParams,
    k: usize,
    config: &ScenarioConfig,
) -> Result<ChannelDerivatives> {
    let h = mm_channel_vector(theta, k, config)?;
    let [ga, gt, gg, gp] = mm_log_derivatives(theta, k, config)?;
    let mul = |g: Vec<Complex64>| g.iter().zip(&h).map(|(a, b)| a * b).collect();
    Ok(ChannelDerivatives {
        aoa: mul(ga),
        toa: mul(gt),
        gain: mul(gg),
        phase: mul(gp),
    })
}

/// Second derivatives of the far-field model in channel parameters, indexed
/// `[i][j]` in the order `[aoa, toa, gain, phase]`.
pub fn mm_param_second_derivatives(
    theta: &ChannelParams,
    k: usize,
    config: &ScenarioConfig,
) -> Result<[[Vec<Complex64>; 4]; 4]> {
    let h = mm_channel_vector(theta, k, config)?;
    let g = mm_log_derivatives(theta, k, config)?;
    let n_ant = config.n_antennas;
    let sin = theta.aoa.sin();
    Ok(std::array::from_fn(|i| {
        std::array::from_fn(|j| {
            (0..n_ant)
                .map(|n| {
                    if i == 2 && j == 2 {
                        // linear in the gain magnitude
                        return Complex64::new(0.0, 0.0);
                    }
                    let mut m = g[i][n] * g[j][n];
                    if i == 0 && j == 0 {
                        m += -J * (PI * element_offset(n + 1, n_ant) * sin / 2.0);
                    }
                    m * h[n]
                })
                .collect()
        })
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::geometry::antenna_positions;
    use crate::channel::SubcarrierGrid;
    use proptest::prelude::*;

    fn setup(n: usize) -> (ScenarioConfig, ArrayGeometry) {
        let cfg = ScenarioConfig::default().with_antennas(n);
        let geo = antenna_positions(&cfg);
        (cfg, geo)
    }

    fn los(p: Position, geo: &ArrayGeometry) -> StateParams {
        StateParams::line_of_sight(p, 0.3, geo).unwrap()
    }

    #[test]
    fn broadside_steering_is_all_ones() {
        for n in [1, 2, 7, 64] {
            assert!(steering_vector(0.0, n)
                .iter()
                .all(|a| (a - 1.0).norm() < 1e-15));
        }
        let a = steering_vector(PI / 2.0, 2);
        assert!((a[0] + J).norm() < 1e-15);
        assert!((a[1] - J).norm() < 1e-15);
    }

    #[test]
    fn steering_matches_far_field_limit() {
        let (cfg, geo) = setup(64);
        let aoa = PI / 4.0;
        let p = Position::new(aoa.cos(), aoa.sin()) * 1000.0;
        let a = steering_vector(aoa, 64);
        let lc = geo.carrier_wavelength();
        for (n, b) in geo.positions().iter().enumerate() {
            let exact = Complex64::cis(-2.0 * PI / lc * ((p - b).norm() - p.norm()));
            assert!((exact / a[n]).arg().abs() < 1e-3);
        }
        assert_eq!(cfg.n_antennas, 64);
    }

    #[test]
    fn beam_squint_steering() {
        let (mut cfg, _) = setup(64);
        assert!(steering_vector_bse(0.0, 3, &cfg)
            .unwrap()
            .iter()
            .all(|a| (a - 1.0).norm() < 1e-15));
        assert!(steering_vector_bse(0.1, 0, &cfg).is_err());
        assert!(steering_vector_bse(0.1, 11, &cfg).is_err());

        // first subcarrier on the carrier: no squint
        let flat = steering_vector_bse(0.4, 1, &cfg).unwrap();
        let plain = steering_vector(0.4, 64);
        for (a, b) in flat.iter().zip(&plain) {
            assert!((a - b).norm() < 1e-14);
        }

        cfg.subcarrier_grid = SubcarrierGrid::AboveCarrier;
        let ratio = 1.0 + 400e6 / 140e9;
        assert!(
            (cfg.subcarrier_freq(10).unwrap() / cfg.carrier_freq - 1.002_857_142_857).abs() < 1e-12
        );
        let aoa = 0.01;
        let sq = steering_vector_bse(aoa, 10, &cfg).unwrap();
        // element 64 phase: pi * 63 * sin(aoa) * ratio / 2 (< pi, no wrap)
        let want = PI * 63.0 * aoa.sin() * ratio / 2.0;
        assert!((sq[63].arg() - want).abs() < 1e-12);
    }

    #[test]
    fn delay_term_phase() {
        let (cfg, _) = setup(64);
        let lambda1 = cfg.subcarrier_wavelength(1).unwrap();
        let d = delay_term(&Position::new(7.0 * lambda1, 0.0), 1, &cfg).unwrap();
        assert!((d - 1.0).norm() < 1e-12);
        let d = delay_term(&Position::new(1e-30, 0.0), 4, &cfg).unwrap();
        assert!((d - 1.0).norm() < 1e-15);

        let cfg = ScenarioConfig {
            subcarrier_grid: SubcarrierGrid::AboveCarrier,
            ..cfg
        };
        let r = 8f64.sqrt();
        let d = delay_term(&Position::new(2.0, 2.0), 1, &cfg).unwrap();
        let want = (-2.0 * PI * (140e9 + 40e6) * r / SPEED_OF_LIGHT).rem_euclid(2.0 * PI);
        let got = d.arg().rem_euclid(2.0 * PI);
        assert!((got - want).abs() < 1e-9, "{got} {want}");
    }

    #[test]
    fn amplitude_factor() {
        let (cfg, geo) = setup(65);
        // element 33 of 65 is at the origin
        assert_eq!(geo.positions()[32], Position::zeros());
        let c = sns_amplitude(&Position::new(0.3, 0.1), 1, 33, &geo, &cfg).unwrap();
        assert!((c - 1.0).abs() < 1e-15);
        let far = sns_amplitude(&Position::new(1e7, 0.0), 5, 1, &geo, &cfg).unwrap();
        let ratio = cfg.subcarrier_wavelength(5).unwrap() / cfg.carrier_wavelength();
        assert!((far - ratio).abs() < 1e-12);

        let (cfg, geo) = setup(64);
        let p = Position::new(0.25, 0.0);
        let b = geo.positions()[63];
        let oracle = (cfg.subcarrier_wavelength(1).unwrap() * (p.x * p.x).sqrt())
            / (cfg.carrier_wavelength() * ((p.x - b.x).powi(2) + (p.y - b.y).powi(2)).sqrt());
        let c = sns_amplitude(&p, 1, 64, &geo, &cfg).unwrap();
        assert!((c - oracle).abs() < 1e-15);

        let err = sns_amplitude(&geo.positions()[3].clone(), 1, 4, &geo, &cfg);
        assert!(matches!(err, Err(Error::DegenerateGeometry(_))));
    }

    #[test]
    fn spherical_phase_properties() {
        let (cfg, geo) = setup(65);
        let d = spherical_phase(&Position::new(1.0, 0.5), 2, 33, &geo, &cfg).unwrap();
        assert!((d - 1.0).norm() < 1e-15);

        let (cfg, geo) = setup(64);
        let aoa = PI / 4.0;
        let p = Position::new(aoa.cos(), aoa.sin()) * 1000.0;
        let a = steering_vector(aoa, 64);
        for n in 1..=64 {
            let d = spherical_phase(&p, 1, n, &geo, &cfg).unwrap();
            assert!((d / a[n - 1]).arg().abs() < 1e-3);
        }
        let p = Position::new(1.3, 0.0);
        for n in 1..=64 {
            let lhs = spherical_phase(&p, 3, n, &geo, &cfg).unwrap();
            let rhs = spherical_phase(&p, 3, 65 - n, &geo, &cfg).unwrap();
            assert!((lhs - rhs).norm() < 1e-12);
        }
    }

    /// Scalar-loop oracle of the near-field model written from the element
    /// formulas with explicit norms.
    fn tm_oracle(p: Position, rho: f64, xi: f64, k: usize, cfg: &ScenarioConfig) -> Vec<Complex64> {
        let c = SPEED_OF_LIGHT;
        let lc = c / cfg.carrier_freq;
        let fk = cfg.subcarrier_freq(k).unwrap();
        let lk = c / fk;
        let n_ant = cfg.n_antennas;
        let r = (p.x * p.x + p.y * p.y).sqrt();
        (1..=n_ant)
            .map(|n| {
                let by = (2.0 * n as f64 - n_ant as f64 - 1.0) * lc / 4.0;
                let rn = (p.x * p.x + (p.y - by) * (p.y - by)).sqrt();
                let amp = rho * lk * r / (lc * rn);
                let ph = -xi - 2.0 * PI / lk * (rn - r) - 2.0 * PI / lk * r;
                Complex64::from_polar(amp, ph)
            })
            .collect()
    }

    #[test]
    fn tm_matches_scalar_oracle() {
        let (cfg, geo) = setup(64);
        let state = los(Position::new(2.0, 2.0), &geo);
        let h = channel_vector(ModelKind::Tm, &state, 5, &geo, &cfg).unwrap();
        let o = tm_oracle(state.position, state.gain, state.phase, 5, &cfg);
        for (a, b) in h.iter().zip(&o) {
            assert!((a - b).norm() <= 1e-11 * b.norm(), "{a} {b}");
        }
    }

    #[test]
    fn single_antenna_collapse() {
        let (cfg, geo) = setup(1);
        let state = los(Position::new(1.5, -0.4), &geo);
        for k in 1..=cfg.n_subcarriers {
            let reference = channel_vector(ModelKind::Mm, &state, k, &geo, &cfg).unwrap();
            for kind in ModelKind::ALL {
                let h = channel_vector(kind, &state, k, &geo, &cfg).unwrap();
                let c_scale = if matches!(kind, ModelKind::Tm | ModelKind::TmSns) {
                    cfg.subcarrier_wavelength(k).unwrap() / cfg.carrier_wavelength()
                } else {
                    1.0
                };
                assert!((h[0] - reference[0] * c_scale).norm() < 1e-15 * reference[0].norm());
            }
        }
    }

    #[test]
    fn far_field_narrowband_limit() {
        let cfg = ScenarioConfig::default().with_bandwidth(1e3);
        let geo = antenna_positions(&cfg);
        let (_, df) = fresnel_fraunhofer_for(&geo);
        let aoa = 0.3f64;
        let mut last = f64::INFINITY;
        for scale in [10.0, 100.0, 1000.0] {
            let p = Position::new(aoa.cos(), aoa.sin()) * (scale * df);
            let state = los(p, &geo);
            let mut sup = 0.0f64;
            for k in 1..=cfg.n_subcarriers {
                let tm = channel_vector(ModelKind::Tm, &state, k, &geo, &cfg).unwrap();
                let mm = channel_vector(ModelKind::Mm, &state, k, &geo, &cfg).unwrap();
                for (a, b) in tm.iter().zip(&mm) {
                    sup = sup.max((a - b).norm() / b.norm());
                }
            }
            assert!(sup < last);
            last = sup;
        }
        let p = Position::new(aoa.cos(), aoa.sin()) * 1000.0;
        let state = los(p, &geo);
        let tm = channel_vector(ModelKind::Tm, &state, 3, &geo, &cfg).unwrap();
        let mm = channel_vector(ModelKind::Mm, &state, 3, &geo, &cfg).unwrap();
        let diff: f64 = tm
            .iter()
            .zip(&mm)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        let norm: f64 = mm.iter().map(|b| b.norm_sqr()).sum::<f64>().sqrt();
        assert!(diff / norm < 1e-3, "{}", diff / norm);
    }

    fn fresnel_fraunhofer_for(geo: &ArrayGeometry) -> (f64, f64) {
        crate::channel::fresnel_fraunhofer(geo)
    }

    #[test]
    fn zero_bandwidth_collapse() {
        let mut cfg = ScenarioConfig::default();
        cfg.subcarrier_grid = SubcarrierGrid::FromCarrier;
        let geo = antenna_positions(&cfg);
        let state = los(Position::new(0.8, 0.6), &geo);
        // k = 1 sits on the carrier
        let bse = channel_vector(ModelKind::TmBse, &state, 1, &geo, &cfg).unwrap();
        let mm = channel_vector(ModelKind::Mm, &state, 1, &geo, &cfg).unwrap();
        let tm = channel_vector(ModelKind::Tm, &state, 1, &geo, &cfg).unwrap();
        let r = state.position.norm();
        for (n, b) in geo.positions().iter().enumerate() {
            assert!((bse[n] - mm[n]).norm() < 1e-15 * mm[n].norm());
            let rn = (state.position - b).norm();
            assert!((tm[n].norm() - state.gain * r / rn).abs() < 1e-13 * state.gain);
        }
    }

    #[test]
    fn mirror_symmetry_on_axis() {
        let (cfg, geo) = setup(16);
        let state = StateParams::new(Position::new(0.9, 0.0), 1e-4, 0.0).unwrap();
        for kind in [ModelKind::Mm, ModelKind::TmSwm] {
            let h = channel_vector(kind, &state, 2, &geo, &cfg).unwrap();
            for n in 0..16 {
                assert!((h[n] - h[15 - n]).norm() < 1e-12 * h[n].norm());
            }
        }
    }

    #[test]
    fn mm_parameter_forms_agree() {
        let (cfg, geo) = setup(64);
        let state = los(Position::new(2.0, 2.0), &geo);
        let theta = ChannelParams::from_state(&state).unwrap();
        for k in [1, 7, 10] {
            let a = channel_vector(ModelKind::Mm, &state, k, &geo, &cfg).unwrap();
            let b = mm_channel_vector(&theta, k, &cfg).unwrap();
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).norm() < 1e-11 * y.norm());
            }
        }
    }

    #[test]
    fn derivative_closed_forms() {
        let (cfg, geo) = setup(64);
        let state = los(Position::new(2.0, 2.0), &geo);
        let h = channel_vector(ModelKind::Tm, &state, 4, &geo, &cfg).unwrap();
        let d = tm_state_derivatives(&state, 4, &geo, &cfg).unwrap();
        for n in 0..64 {
            assert!((d.phase[n] + J * h[n]).norm() < 1e-15 * h[n].norm());
            assert!((d.gain[n] - h[n] / state.gain).norm() < 1e-12 * h[n].norm() / state.gain);
        }

        let theta = ChannelParams::new(0.0, 1e-8, 1.0, 0.0).unwrap();
        let d = mm_param_derivatives(&theta, 1, &cfg).unwrap();
        let h = mm_channel_vector(&theta, 1, &cfg).unwrap();
        for n in 0..64 {
            let want = J * (PI * element_offset(n + 1, 64) / 2.0) * h[n];
            assert!((d.aoa[n] - want).norm() < 1e-12);
        }
        let (cfg7, _) = setup(7);
        let d = mm_param_derivatives(&ChannelParams::new(0.4, 1e-8, 1.0, 0.0).unwrap(), 2, &cfg7)
            .unwrap();
        assert_eq!(d.aoa[3], Complex64::new(0.0, 0.0));
    }

    #[test]
    fn single_antenna_derivative_is_delay_only() {
        let (cfg, geo) = setup(1);
        let state = los(Position::new(1.0, 0.7), &geo);
        let d = tm_state_derivatives(&state, 3, &geo, &cfg).unwrap();
        let h = channel_vector(ModelKind::Tm, &state, 3, &geo, &cfg).unwrap();
        let kappa = 2.0 * PI / cfg.subcarrier_wavelength(3).unwrap();
        let u = state.position / state.position.norm();
        assert!((d.px[0] - h[0] * (-J * kappa * u.x)).norm() < 1e-12 * d.px[0].norm());
        assert!((d.py[0] - h[0] * (-J * kappa * u.y)).norm() < 1e-12 * d.py[0].norm());
    }

    #[test]
    fn kind_names_round_trip() {
        for kind in ModelKind::ALL {
            assert_eq!(kind.name().parse::<ModelKind>().unwrap(), kind);
        }
        assert!("tm-xyz".parse::<ModelKind>().is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn phase_factors_have_unit_modulus(aoa in -1.5f64..1.5, x in 0.05f64..30.0, y in -20.0f64..20.0, k in 1usize..=10) {
            let (cfg, geo) = setup(64);
            let p = Position::new(x, y);
            for a in steering_vector(aoa, 64) {
                prop_assert!((a.norm() - 1.0).abs() < 1e-14);
            }
            for a in steering_vector_bse(aoa, k, &cfg).unwrap() {
                prop_assert!((a.norm() - 1.0).abs() < 1e-14);
            }
            prop_assert!((delay_term(&p, k, &cfg).unwrap().norm() - 1.0).abs() < 1e-14);
            for n in [1, 20, 64] {
                prop_assert!((spherical_phase(&p, k, n, &geo, &cfg).unwrap().norm() - 1.0).abs() < 1e-14);
            }
        }

        #[test]
        fn single_antenna_models_coincide(x in 0.05f64..30.0, y in -20.0f64..20.0) {
            let mut cfg = ScenarioConfig::default().with_antennas(1);
            cfg.subcarrier_grid = SubcarrierGrid::FromCarrier;
            let geo = antenna_positions(&cfg);
            let state = los(Position::new(x, y), &geo);
            let reference = channel_vector(ModelKind::Mm, &state, 1, &geo, &cfg).unwrap();
            for kind in ModelKind::ALL {
                let h = channel_vector(kind, &state, 1, &geo, &cfg).unwrap();
                prop_assert!((h[0] - reference[0]).norm() <= 1e-14 * reference[0].norm());
            }
        }
    }
}
