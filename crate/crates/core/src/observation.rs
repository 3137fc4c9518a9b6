//! Pilot and combiner synthesis, stacked noise-free means, and noisy samples.
//!
//! Stacked vectors are laid out transmission-major, then subcarrier, then
//! combiner output: entry `((g - 1) * K + (k - 1)) * M + (m - 1)` holds
//! `y_{g,k}[m]`.

use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::channel::{
    antenna_positions, channel_vector, mm_channel_vector, mm_param_derivatives,
    mm_param_second_derivatives, state_derivatives, ArrayGeometry, ChannelParams, ModelKind,
    ScenarioConfig, StateParams, SPEED_OF_LIGHT,
};
use crate::error::{Error, Result};

/// Combiner architecture at the base station.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CombinerMode {
    /// One RF chain per antenna, identity combiner (`M = N`).
    Digital,
    /// A single RF chain behind random phase shifters (`M = 1`).
    Analog,
}

impl CombinerMode {
    /// Picks the mode implied by `n_rfc`: `M = N` is digital, `M = 1` analog.
    pub fn infer(config: &ScenarioConfig) -> Result<Self> {
        if config.n_rfc == config.n_antennas {
            Ok(CombinerMode::Digital)
        } else if config.n_rfc == 1 {
            Ok(CombinerMode::Analog)
        } else {
            Err(Error::CombinerMode {
                mode: "hybrid",
                n_antennas: config.n_antennas,
                n_rfc: config.n_rfc,
            })
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CombinerMode::Digital => "digital",
            CombinerMode::Analog => "analog",
        }
    }
}

/// Per-transmission combining matrices `W_g` (N x M), each with orthonormal
/// columns.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinerSet {
    mode: CombinerMode,
    matrices: Vec<DMatrix<Complex64>>,
}

impl CombinerSet {
    pub fn mode(&self) -> CombinerMode {
        self.mode
    }

    pub fn matrices(&self) -> &[DMatrix<Complex64>] {
        &self.matrices
    }

    pub fn n_outputs(&self) -> usize {
        self.matrices.first().map_or(0, |w| w.ncols())
    }

    /// `W_g^T h` for transmission `g` (0-based).
    pub(crate) fn combine_into(
        &self,
        g: usize,
        h: &[Complex64],
        scale: Complex64,
        out: &mut Vec<Complex64>,
    ) {
        match self.mode {
            CombinerMode::Digital => out.extend(h.iter().map(|v| v * scale)),
            CombinerMode::Analog => {
                let w = &self.matrices[g];
                for m in 0..w.ncols() {
                    let acc: Complex64 = w.column(m).iter().zip(h).map(|(a, b)| a * b).sum();
                    out.push(acc * scale);
                }
            }
        }
    }
}

/// Builds the combiner set. Digital mode yields identities; analog mode draws
/// `exp(j phi) / sqrt(N)` entries with `phi` uniform on `[0, 2 pi)` from a
/// ChaCha8 stream seeded by `seed` (stream id 1, so it never overlaps the
/// noise streams).
pub fn make_combiners(
    config: &ScenarioConfig,
    mode: CombinerMode,
    seed: u64,
) -> Result<CombinerSet> {
    let n = config.n_antennas;
    let m = config.n_rfc;
    let g = config.n_transmissions;
    let matrices = match mode {
        CombinerMode::Digital => {
            if m != n {
                return Err(Error::CombinerMode {
                    mode: "digital",
                    n_antennas: n,
                    n_rfc: m,
                });
            }
            vec![DMatrix::identity(n, n); g]
        }
        CombinerMode::Analog => {
            if m != 1 {
                return Err(Error::CombinerMode {
                    mode: "analog",
                    n_antennas: n,
                    n_rfc: m,
                });
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(1);
            let scale = 1.0 / (n as f64).sqrt();
            (0..g)
                .map(|_| {
                    DMatrix::from_fn(n, 1, |_, _| {
                        Complex64::from_polar(scale, rng.random::<f64>() * TAU)
                    })
                })
                .collect()
        }
    };
    Ok(CombinerSet { mode, matrices })
}

/// Pilot symbols `x_{g,k}`, all equal to `sqrt(P)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotSet {
    symbols: Vec<Complex64>,
    n_subcarriers: usize,
}

impl PilotSet {
    pub fn constant(config: &ScenarioConfig) -> Self {
        let x = Complex64::new(config.tx_power.sqrt(), 0.0);
        PilotSet {
            symbols: vec![x; config.n_transmissions * config.n_subcarriers],
            n_subcarriers: config.n_subcarriers,
        }
    }

    /// Symbol at 1-based `(g, k)`.
    pub fn symbol(&self, g: usize, k: usize) -> Complex64 {
        self.symbols[(g - 1) * self.n_subcarriers + (k - 1)]
    }
}

/// Receiver noise variance in watts.
pub fn noise_variance(config: &ScenarioConfig) -> f64 {
    config.noise_variance()
}

/// Everything needed to evaluate stacked observations of one scenario:
/// configuration, array, combiners and pilots.
#[derive(Debug, Clone)]
pub struct Scenario {
    config: ScenarioConfig,
    geometry: ArrayGeometry,
    combiners: CombinerSet,
    pilots: PilotSet,
}

impl Scenario {
    pub fn new(config: ScenarioConfig, mode: CombinerMode) -> Result<Self> {
        config.validate()?;
        let geometry = antenna_positions(&config);
        let combiners = make_combiners(&config, mode, config.seed)?;
        let pilots = PilotSet::constant(&config);
        Ok(Scenario {
            config,
            geometry,
            combiners,
            pilots,
        })
    }

    /// Builds with the mode implied by `n_rfc`.
    pub fn from_config(config: ScenarioConfig) -> Result<Self> {
        let mode = CombinerMode::infer(&config)?;
        Self::new(config, mode)
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn geometry(&self) -> &ArrayGeometry {
        &self.geometry
    }

    pub fn combiners(&self) -> &CombinerSet {
        &self.combiners
    }

    pub fn pilots(&self) -> &PilotSet {
        &self.pilots
    }

    pub fn noise_variance(&self) -> f64 {
        self.config.noise_variance()
    }

    /// Length `G * K * M` of a stacked observation.
    pub fn observation_len(&self) -> usize {
        self.config.n_transmissions * self.config.n_subcarriers * self.combiners.n_outputs()
    }

    /// Stacks per-subcarrier array vectors `v_k` (index `k - 1`) into
    /// `W_g^T v_k x_{g,k}`.
    pub fn stack(&self, per_subcarrier: &[Vec<Complex64>]) -> Vec<Complex64> {
        let mut out = Vec::with_capacity(self.observation_len());
        for g in 1..=self.config.n_transmissions {
            for (k, v) in per_subcarrier.iter().enumerate() {
                self.combiners
                    .combine_into(g - 1, v, self.pilots.symbol(g, k + 1), &mut out);
            }
        }
        out
    }

    fn per_subcarrier<T>(&self, mut f: impl FnMut(usize) -> Result<T>) -> Result<Vec<T>> {
        (1..=self.config.n_subcarriers).map(&mut f).collect()
    }

    /// Stacked noise-free mean of the chosen model.
    pub fn mean(&self, kind: ModelKind, state: &StateParams) -> Result<Vec<Complex64>> {
        let hs =
            self.per_subcarrier(|k| channel_vector(kind, state, k, &self.geometry, &self.config))?;
        Ok(self.stack(&hs))
    }

    /// Stacked mean of the far-field model in channel parameters.
    pub fn mean_mm(&self, theta: &ChannelParams) -> Result<Vec<Complex64>> {
        let hs = self.per_subcarrier(|k| mm_channel_vector(theta, k, &self.config))?;
        Ok(self.stack(&hs))
    }

    /// Stacked derivatives of the mean with respect to
    /// `[p_x, p_y, gain, phase]`.
    pub fn state_jacobian(
        &self,
        kind: ModelKind,
        state: &StateParams,
    ) -> Result<[Vec<Complex64>; 4]> {
        let ds = self
            .per_subcarrier(|k| state_derivatives(kind, state, k, &self.geometry, &self.config))?;
        Ok(std::array::from_fn(|i| {
            let cols: Vec<Vec<Complex64>> = ds.iter().map(|d| d.as_array()[i].to_vec()).collect();
            self.stack(&cols)
        }))
    }

    /// Stacked derivatives of the mean with respect to
    /// `[aoa, toa, gain, phase]`.
    ///
    /// The far-field model is differentiated directly; the position-based
    /// models go through `dp/d(aoa) = c tau [-sin, cos]` and
    /// `dp/d(toa) = c [cos, sin]`.
    pub fn channel_jacobian(
        &self,
        kind: ModelKind,
        theta: &ChannelParams,
    ) -> Result<[Vec<Complex64>; 4]> {
        if kind == ModelKind::Mm {
            let ds = self.per_subcarrier(|k| mm_param_derivatives(theta, k, &self.config))?;
            return Ok(std::array::from_fn(|i| {
                let cols: Vec<Vec<Complex64>> =
                    ds.iter().map(|d| d.as_array()[i].to_vec()).collect();
                self.stack(&cols)
            }));
        }
        let state = theta.to_state()?;
        let [dx, dy, dg, dp] = self.state_jacobian(kind, &state)?;
        let (s, c) = theta.aoa.sin_cos();
        let r = SPEED_OF_LIGHT * theta.toa;
        let d_aoa = dx
            .iter()
            .zip(&dy)
            .map(|(a, b)| a * (-r * s) + b * (r * c))
            .collect();
        let d_toa = dx
            .iter()
            .zip(&dy)
            .map(|(a, b)| (a * c + b * s) * SPEED_OF_LIGHT)
            .collect();
        Ok([d_aoa, d_toa, dg, dp])
    }

    /// Stacked second derivatives of the far-field mean, `[i][j]`.
    pub fn mm_hessian(&self, theta: &ChannelParams) -> Result<[[Vec<Complex64>; 4]; 4]> {
        let ds = self.per_subcarrier(|k| mm_param_second_derivatives(theta, k, &self.config))?;
        Ok(std::array::from_fn(|i| {
            std::array::from_fn(|j| {
                let cols: Vec<Vec<Complex64>> = ds.iter().map(|d| d[i][j].clone()).collect();
                self.stack(&cols)
            })
        }))
    }

    /// Noise-free mean and one noisy draw.
    pub fn observe(
        &self,
        kind: ModelKind,
        state: &StateParams,
        seed: u64,
    ) -> Result<ObservationSet> {
        let mean = self.mean(kind, state)?;
        let sigma2 = self.noise_variance();
        let samples = sample_observation(&mean, sigma2, seed);
        Ok(ObservationSet {
            mean,
            samples,
            noise_variance: sigma2,
            n_transmissions: self.config.n_transmissions,
            n_subcarriers: self.config.n_subcarriers,
            n_outputs: self.combiners.n_outputs(),
        })
    }
}

/// Free-function form of [`Scenario::mean`] with explicit parts.
pub fn noise_free_observation(
    kind: ModelKind,
    state: &StateParams,
    combiners: &CombinerSet,
    pilots: &PilotSet,
    config: &ScenarioConfig,
) -> Result<Vec<Complex64>> {
    let geometry = antenna_positions(config);
    let mut out = Vec::new();
    let hs: Vec<Vec<Complex64>> = (1..=config.n_subcarriers)
        .map(|k| channel_vector(kind, state, k, &geometry, config))
        .collect::<Result<_>>()?;
    for g in 1..=config.n_transmissions {
        for (k, h) in hs.iter().enumerate() {
            combiners.combine_into(g - 1, h, pilots.symbol(g, k + 1), &mut out);
        }
    }
    Ok(out)
}

/// Adds circularly-symmetric complex Gaussian noise of variance `sigma2` per
/// entry (each real part `N(0, sigma2 / 2)`).
///
/// The noise is drawn directly in the combiner-output domain: for unitary
/// `W_g` the combined noise `W_g^T n` has the same distribution. Draws come
/// from ChaCha8 seeded with `seed` (stream 0), real part first.
pub fn sample_observation(mean: &[Complex64], sigma2: f64, seed: u64) -> Vec<Complex64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sd = (sigma2 / 2.0).sqrt();
    mean.iter()
        .map(|mu| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            mu + Complex64::new(re * sd, im * sd)
        })
        .collect()
}

/// Stacked noise-free mean and noisy samples of one realization.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    pub mean: Vec<Complex64>,
    pub samples: Vec<Complex64>,
    pub noise_variance: f64,
    pub n_transmissions: usize,
    pub n_subcarriers: usize,
    pub n_outputs: usize,
}

impl ObservationSet {
    pub fn index(&self, g: usize, k: usize, m: usize) -> usize {
        ((g - 1) * self.n_subcarriers + (k - 1)) * self.n_outputs + (m - 1)
    }

    /// The `(g, k)` block of samples (1-based).
    pub fn sample_block(&self, g: usize, k: usize) -> &[Complex64] {
        let start = self.index(g, k, 1);
        &self.samples[start..start + self.n_outputs]
    }

    pub fn mean_block(&self, g: usize, k: usize) -> &[Complex64] {
        let start = self.index(g, k, 1);
        &self.mean[start..start + self.n_outputs]
    }

    /// Writes the text dump: a dimension line, then one row per entry
    /// `g k m mean_re mean_im sample_re sample_im` in stacking order, with
    /// 1-based indices and 17 significant digits.
    pub fn write_dump<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# nearfield-mcrb observation dump v1")?;
        writeln!(w, "# G K M noise_variance")?;
        writeln!(
            w,
            "{} {} {} {:.16e}",
            self.n_transmissions, self.n_subcarriers, self.n_outputs, self.noise_variance
        )?;
        writeln!(w, "# g k m mean_re mean_im sample_re sample_im")?;
        let mut line = String::new();
        for g in 1..=self.n_transmissions {
            for k in 1..=self.n_subcarriers {
                for m in 1..=self.n_outputs {
                    let i = self.index(g, k, m);
                    line.clear();
                    let (mu, y) = (self.mean[i], self.samples[i]);
                    let _ = write!(
                        line,
                        "{g} {k} {m} {:.16e} {:.16e} {:.16e} {:.16e}",
                        mu.re, mu.im, y.re, y.im
                    );
                    writeln!(w, "{line}")?;
                }
            }
        }
        Ok(())
    }

    pub fn read_dump<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r
            .lines()
            .map(|l| l.map_err(|e| Error::Parse(e.to_string())))
            .filter(
                |l| !matches!(l, Ok(s) if s.trim_start().starts_with('#') || s.trim().is_empty()),
            );
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("missing dimension line".into()))??;
        let dims: Vec<&str> = header.split_whitespace().collect();
        if dims.len() != 4 {
            return Err(Error::Parse(format!("bad dimension line `{header}`")));
        }
        let num = |s: &str| {
            s.parse::<usize>()
                .map_err(|e| Error::Parse(format!("{s}: {e}")))
        };
        let flt = |s: &str| {
            s.parse::<f64>()
                .map_err(|e| Error::Parse(format!("{s}: {e}")))
        };
        let (g_n, k_n, m_n) = (num(dims[0])?, num(dims[1])?, num(dims[2])?);
        let noise_variance = flt(dims[3])?;
        let len = g_n * k_n * m_n;
        let mut mean = Vec::with_capacity(len);
        let mut samples = Vec::with_capacity(len);
        for (expected, line) in (0..len).zip(&mut lines) {
            let line = line?;
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 7 {
                return Err(Error::Parse(format!("bad row `{line}`")));
            }
            let (g, k, m) = (num(f[0])?, num(f[1])?, num(f[2])?);
            if ((g - 1) * k_n + (k - 1)) * m_n + (m - 1) != expected {
                return Err(Error::Parse(format!("row out of order: {g} {k} {m}")));
            }
            mean.push(Complex64::new(flt(f[3])?, flt(f[4])?));
            samples.push(Complex64::new(flt(f[5])?, flt(f[6])?));
        }
        if mean.len() != len {
            return Err(Error::Parse(format!(
                "expected {len} rows, got {}",
                mean.len()
            )));
        }
        Ok(ObservationSet {
            mean,
            samples,
            noise_variance,
            n_transmissions: g_n,
            n_subcarriers: k_n,
            n_outputs: m_n,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::Position;

    fn analog_config(n: usize, g: usize) -> ScenarioConfig {
        ScenarioConfig {
            n_antennas: n,
            n_rfc: 1,
            n_transmissions: g,
            ..ScenarioConfig::default()
        }
    }

    #[test]
    fn digital_combiner_is_identity() {
        let cfg = ScenarioConfig::default();
        let set = make_combiners(&cfg, CombinerMode::Digital, 0).unwrap();
        assert_eq!(set.matrices().len(), 1);
        assert_eq!(set.matrices()[0], DMatrix::identity(64, 64));
    }

    #[test]
    fn analog_combiners_are_unitary_and_seeded() {
        let cfg = analog_config(4, 5);
        let a = make_combiners(&cfg, CombinerMode::Analog, 11).unwrap();
        for w in a.matrices() {
            let gram = w.adjoint() * w;
            assert!((gram[(0, 0)] - 1.0).norm() < 1e-12);
        }
        assert_eq!(a, make_combiners(&cfg, CombinerMode::Analog, 11).unwrap());
        assert_ne!(a, make_combiners(&cfg, CombinerMode::Analog, 12).unwrap());
    }

    #[test]
    fn mode_consistency_enforced() {
        let cfg = analog_config(4, 1);
        assert!(make_combiners(&cfg, CombinerMode::Digital, 0).is_err());
        let cfg = ScenarioConfig::default();
        assert!(make_combiners(&cfg, CombinerMode::Analog, 0).is_err());
        let hybrid = ScenarioConfig {
            n_rfc: 8,
            ..ScenarioConfig::default()
        };
        assert!(CombinerMode::infer(&hybrid).is_err());
    }

    #[test]
    fn digital_mean_is_channel_times_pilot() {
        let sc = Scenario::from_config(ScenarioConfig::default()).unwrap();
        let state =
            StateParams::line_of_sight(Position::new(2.0, 2.0), 0.0, sc.geometry()).unwrap();
        let mu = sc.mean(ModelKind::Tm, &state).unwrap();
        let x = sc.config().tx_power.sqrt();
        for k in 1..=10 {
            let h = channel_vector(ModelKind::Tm, &state, k, sc.geometry(), sc.config()).unwrap();
            for n in 0..64 {
                assert_eq!(mu[(k - 1) * 64 + n], h[n] * x);
            }
        }
    }

    #[test]
    fn mean_matches_scalar_loop() {
        let cfg = analog_config(8, 3);
        let sc = Scenario::from_config(cfg.clone()).unwrap();
        let state =
            StateParams::line_of_sight(Position::new(2.0, 2.0), 0.7, sc.geometry()).unwrap();
        let mu = sc.mean(ModelKind::Mm, &state).unwrap();
        let free = noise_free_observation(ModelKind::Mm, &state, sc.combiners(), sc.pilots(), &cfg)
            .unwrap();
        assert_eq!(mu, free);
        // scalar loop over g, k, n
        let (aoa, tau) = crate::channel::params_from_position(&state.position).unwrap();
        let alpha = state.complex_gain();
        for g in 0..3 {
            for k in 1..=cfg.n_subcarriers {
                let fk = cfg.subcarrier_freq(k).unwrap();
                let mut acc = Complex64::new(0.0, 0.0);
                for n in 1..=8 {
                    let off = (2 * n) as f64 - 9.0;
                    let a = Complex64::cis(std::f64::consts::PI * off * aoa.sin() / 2.0);
                    let d = Complex64::cis(-TAU * fk * tau);
                    acc += sc.combiners().matrices()[g][(n - 1, 0)] * alpha * a * d;
                }
                acc *= cfg.tx_power.sqrt();
                let got = mu[g * cfg.n_subcarriers + (k - 1)];
                assert!((got - acc).norm() <= 1e-11 * acc.norm());
            }
        }
    }

    #[test]
    fn mean_scales_with_power() {
        let sc = Scenario::from_config(ScenarioConfig::default()).unwrap();
        let sc4 = Scenario::from_config(
            ScenarioConfig::default().with_tx_power_dbm(20.0 + 10.0 * 2f64.log10()),
        )
        .unwrap();
        let state =
            StateParams::line_of_sight(Position::new(1.0, -0.5), 0.0, sc.geometry()).unwrap();
        let e1: f64 = sc
            .mean(ModelKind::Tm, &state)
            .unwrap()
            .iter()
            .map(|v| v.norm_sqr())
            .sum();
        let e2: f64 = sc4
            .mean(ModelKind::Tm, &state)
            .unwrap()
            .iter()
            .map(|v| v.norm_sqr())
            .sum();
        assert!((e2 / e1 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn noise_sampling() {
        let mean = vec![Complex64::new(1.0, -2.0); 16];
        assert_eq!(sample_observation(&mean, 0.0, 3), mean);
        assert_eq!(
            sample_observation(&mean, 1.0, 3),
            sample_observation(&mean, 1.0, 3)
        );
        assert_ne!(
            sample_observation(&mean, 1.0, 3),
            sample_observation(&mean, 1.0, 4)
        );

        let sigma2 = 2.5e-3;
        let zeros = vec![Complex64::new(0.0, 0.0); 64];
        let draws = 10_000;
        let total: f64 = (0..draws)
            .map(|s| {
                sample_observation(&zeros, sigma2, s)
                    .iter()
                    .map(|v| v.norm_sqr())
                    .sum::<f64>()
            })
            .sum();
        let per_entry = total / (draws as f64 * 64.0);
        assert!((per_entry / sigma2 - 1.0).abs() < 0.03, "{per_entry}");
    }

    #[test]
    fn combined_noise_is_white() {
        // analog single output: empirical variance of W^T n equals sigma2
        let cfg = analog_config(16, 1);
        let set = make_combiners(&cfg, CombinerMode::Analog, 5).unwrap();
        let w = &set.matrices()[0];
        let sigma2 = 0.7;
        let zeros = vec![Complex64::new(0.0, 0.0); 16];
        let mut acc = 0.0;
        let draws = 10_000;
        for s in 0..draws {
            let n = sample_observation(&zeros, sigma2, s);
            let y: Complex64 = w.column(0).iter().zip(&n).map(|(a, b)| a * b).sum();
            acc += y.norm_sqr();
        }
        assert!((acc / draws as f64 / sigma2 - 1.0).abs() < 0.05);
    }

    #[test]
    fn dump_round_trip_and_ordering() {
        let cfg = analog_config(4, 2);
        let sc = Scenario::from_config(cfg).unwrap();
        let state =
            StateParams::line_of_sight(Position::new(1.0, 0.2), 0.0, sc.geometry()).unwrap();
        let obs = sc.observe(ModelKind::Tm, &state, 9).unwrap();
        let mut buf = Vec::new();
        obs.write_dump(&mut buf).unwrap();
        let back = ObservationSet::read_dump(&buf[..]).unwrap();
        assert_eq!(back, obs);
        // unstacking covers every entry exactly once
        let mut seen = vec![false; obs.mean.len()];
        for g in 1..=2 {
            for k in 1..=10 {
                seen[obs.index(g, k, 1)] = true;
                assert_eq!(obs.sample_block(g, k).len(), 1);
            }
        }
        assert!(seen.into_iter().all(|s| s));
        assert!(ObservationSet::read_dump(&b"1 1 1 0.5\n1 1 1 0 0\n"[..]).is_err());
    }
}
