use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};

/// Speed of light in vacuum (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Converts a power in dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0) * 1e-3
}

/// Converts a power in watts to dBm.
pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * (watts * 1e3).log10()
}

/// Placement of the K subcarriers relative to the carrier.
///
/// For subcarrier index `k` in `1..=K` the frequency is
/// `f_c + (k - 1) * spacing` under [`SubcarrierGrid::FromCarrier`] and
/// `f_c + k * spacing` under [`SubcarrierGrid::AboveCarrier`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubcarrierGrid {
    /// First subcarrier sits on the carrier.
    #[default]
    FromCarrier,
    /// First subcarrier sits one spacing above the carrier.
    AboveCarrier,
}

impl SubcarrierGrid {
    fn offset(self) -> f64 {
        match self {
            SubcarrierGrid::FromCarrier => 1.0,
            SubcarrierGrid::AboveCarrier => 0.0,
        }
    }
}

/// Physical and waveform constants of one localization scenario.
///
/// All quantities are stored in linear SI units; the dB-valued constructors
/// and accessors exist for the configuration boundary only.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub n_antennas: usize,
    pub n_rfc: usize,
    pub n_transmissions: usize,
    pub n_subcarriers: usize,
    /// Hz
    pub carrier_freq: f64,
    /// Hz
    pub bandwidth: f64,
    /// Average transmit power per pilot symbol (W).
    pub tx_power: f64,
    /// Noise power spectral density (W/Hz).
    pub noise_psd: f64,
    pub noise_figure_db: f64,
    pub seed: u64,
    pub subcarrier_grid: SubcarrierGrid,
}

impl Default for ScenarioConfig {
    /// 64-element digital array at 140 GHz, 400 MHz over 10 subcarriers,
    /// one transmission at 20 dBm.
    fn default() -> Self {
        ScenarioConfig {
            n_antennas: 64,
            n_rfc: 64,
            n_transmissions: 1,
            n_subcarriers: 10,
            carrier_freq: 140e9,
            bandwidth: 400e6,
            tx_power: dbm_to_watts(20.0),
            noise_psd: dbm_to_watts(-173.855),
            noise_figure_db: 10.0,
            seed: 0,
            subcarrier_grid: SubcarrierGrid::FromCarrier,
        }
    }
}

impl ScenarioConfig {
    pub fn with_tx_power_dbm(mut self, dbm: f64) -> Self {
        self.tx_power = dbm_to_watts(dbm);
        self
    }

    /// Resizes the array. A fully digital configuration (`M = N`) stays
    /// fully digital.
    pub fn with_antennas(mut self, n: usize) -> Self {
        if self.n_rfc == self.n_antennas {
            self.n_rfc = n;
        }
        self.n_antennas = n;
        self
    }

    pub fn with_bandwidth(mut self, hz: f64) -> Self {
        self.bandwidth = hz;
        self
    }

    pub fn tx_power_dbm(&self) -> f64 {
        watts_to_dbm(self.tx_power)
    }

    pub fn subcarrier_spacing(&self) -> f64 {
        self.bandwidth / self.n_subcarriers as f64
    }

    pub fn carrier_wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_freq
    }

    /// Frequency of subcarrier `k` (1-based).
    pub fn subcarrier_freq(&self, k: usize) -> Result<f64> {
        self.check_subcarrier(k)?;
        Ok(self.subcarrier_freq_unchecked(k))
    }

    pub(crate) fn subcarrier_freq_unchecked(&self, k: usize) -> f64 {
        self.carrier_freq + (k as f64 - self.subcarrier_grid.offset()) * self.subcarrier_spacing()
    }

    /// Wavelength of subcarrier `k`, always `c / f_k`.
    pub fn subcarrier_wavelength(&self, k: usize) -> Result<f64> {
        Ok(SPEED_OF_LIGHT / self.subcarrier_freq(k)?)
    }

    pub(crate) fn check_subcarrier(&self, k: usize) -> Result<()> {
        if k == 0 || k > self.n_subcarriers {
            return Err(Error::SubcarrierOutOfRange {
                k,
                max: self.n_subcarriers,
            });
        }
        Ok(())
    }

    /// Receiver noise variance `N0 * W * 10^(NF/10)` in watts.
    pub fn noise_variance(&self) -> f64 {
        self.noise_psd * self.bandwidth * 10f64.powf(self.noise_figure_db / 10.0)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n_antennas == 0 {
            return bad("n_antennas must be at least 1".into());
        }
        if self.n_rfc == 0 || self.n_rfc > self.n_antennas {
            return bad(format!(
                "n_rfc must lie in 1..={}, got {}",
                self.n_antennas, self.n_rfc
            ));
        }
        if self.n_transmissions == 0 {
            return bad("n_transmissions must be at least 1".into());
        }
        if self.n_subcarriers == 0 {
            return bad("n_subcarriers must be at least 1".into());
        }
        for (name, v) in [
            ("carrier_freq", self.carrier_freq),
            ("bandwidth", self.bandwidth),
            ("tx_power", self.tx_power),
            ("noise_psd", self.noise_psd),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive and finite, got {v}"));
            }
        }
        if !self.noise_figure_db.is_finite() {
            return bad("noise_figure_db must be finite".into());
        }
        let span = self.subcarrier_spacing() * self.n_subcarriers as f64;
        if (span - self.bandwidth).abs() > 4.0 * f64::EPSILON * self.bandwidth {
            return bad(format!(
                "subcarrier spacing times K ({span}) differs from bandwidth"
            ));
        }
        if !(self.noise_variance() > 0.0) {
            return bad("noise variance must be positive".into());
        }
        Ok(())
    }

    /// Parses a flat `key = value` file. Keys that are absent keep their
    /// default value; unknown keys are rejected.
    pub fn from_kv_str(text: &str, origin: &Path) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
                .unwrap_or(0);
            Error::ConfigSyntax {
                path: origin.to_path_buf(),
                line,
                message: e.message().to_string(),
            }
        })?;
        let cfg = raw.into_config();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_kv_str(&text, path)
    }

    /// Renders the configuration in the same key-value format `load` reads.
    pub fn to_kv_string(&self) -> String {
        let grid = match self.subcarrier_grid {
            SubcarrierGrid::FromCarrier => "from_carrier",
            SubcarrierGrid::AboveCarrier => "above_carrier",
        };
        format!(
            "n_antennas = {}\nn_rfc = {}\nn_transmissions = {}\nn_subcarriers = {}\n\
             carrier_freq_hz = {:e}\nbandwidth_hz = {:e}\ntx_power_dbm = {:?}\n\
             noise_psd_dbm_hz = {:?}\nnoise_figure_db = {:?}\nseed = {}\nsubcarrier_grid = \"{}\"\n",
            self.n_antennas,
            self.n_rfc,
            self.n_transmissions,
            self.n_subcarriers,
            self.carrier_freq,
            self.bandwidth,
            self.tx_power_dbm(),
            watts_to_dbm(self.noise_psd),
            self.noise_figure_db,
            self.seed,
            grid
        )
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    n_antennas: Option<usize>,
    n_rfc: Option<usize>,
    n_transmissions: Option<usize>,
    n_subcarriers: Option<usize>,
    carrier_freq_hz: Option<f64>,
    bandwidth_hz: Option<f64>,
    tx_power_dbm: Option<f64>,
    noise_psd_dbm_hz: Option<f64>,
    noise_figure_db: Option<f64>,
    seed: Option<u64>,
    subcarrier_grid: Option<SubcarrierGrid>,
}

impl RawConfig {
    fn into_config(self) -> ScenarioConfig {
        let d = ScenarioConfig::default();
        let n_antennas = self.n_antennas.unwrap_or(d.n_antennas);
        ScenarioConfig {
            n_antennas,
            n_rfc: self.n_rfc.unwrap_or(n_antennas),
            n_transmissions: self.n_transmissions.unwrap_or(d.n_transmissions),
            n_subcarriers: self.n_subcarriers.unwrap_or(d.n_subcarriers),
            carrier_freq: self.carrier_freq_hz.unwrap_or(d.carrier_freq),
            bandwidth: self.bandwidth_hz.unwrap_or(d.bandwidth),
            tx_power: self.tx_power_dbm.map(dbm_to_watts).unwrap_or(d.tx_power),
            noise_psd: self
                .noise_psd_dbm_hz
                .map(dbm_to_watts)
                .unwrap_or(d.noise_psd),
            noise_figure_db: self.noise_figure_db.unwrap_or(d.noise_figure_db),
            seed: self.seed.unwrap_or(d.seed),
            subcarrier_grid: self.subcarrier_grid.unwrap_or_default(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid() {
        ScenarioConfig::default().validate().unwrap();
    }

    #[test]
    fn spacing_times_k_is_bandwidth() {
        let cfg = ScenarioConfig::default();
        assert_eq!(
            cfg.subcarrier_spacing() * cfg.n_subcarriers as f64,
            cfg.bandwidth
        );
    }

    #[test]
    fn subcarrier_grids() {
        let mut cfg = ScenarioConfig::default();
        assert_eq!(cfg.subcarrier_freq(1).unwrap(), 140e9);
        assert_eq!(cfg.subcarrier_freq(10).unwrap(), 140e9 + 9.0 * 40e6);
        cfg.subcarrier_grid = SubcarrierGrid::AboveCarrier;
        assert_eq!(cfg.subcarrier_freq(1).unwrap(), 140e9 + 40e6);
        assert!(matches!(
            cfg.subcarrier_freq(11),
            Err(Error::SubcarrierOutOfRange { k: 11, max: 10 })
        ));
        assert!(cfg.subcarrier_freq(0).is_err());
    }

    #[test]
    fn rejects_invalid() {
        let mut cfg = ScenarioConfig::default();
        cfg.n_rfc = 65;
        assert!(cfg.validate().is_err());
        let mut cfg = ScenarioConfig::default();
        cfg.bandwidth = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = ScenarioConfig::default();
        cfg.n_transmissions = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = ScenarioConfig::default();
        cfg.tx_power = -1.0;
        assert!(cfg.validate().unwrap_err().is_config());
    }

    #[test]
    fn noise_variance_db_arithmetic() {
        // -173.855 dBm/Hz + 10 dB + 10 log10(4e8) = -77.834 dBm
        let cfg = ScenarioConfig::default();
        let expected = 10f64.powf((-173.855 + 10.0 + 10.0 * 4e8f64.log10()) / 10.0) * 1e-3;
        assert!((cfg.noise_variance() / expected - 1.0).abs() < 1e-12);
        assert!((cfg.noise_variance() - 1.6465e-11).abs() < 1e-14);

        let mut flat = cfg.clone();
        flat.noise_figure_db = 0.0;
        assert_eq!(flat.noise_variance(), flat.noise_psd * flat.bandwidth);

        let half = cfg.clone().with_bandwidth(200e6);
        assert!((half.noise_variance() * 2.0 / cfg.noise_variance() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn parses_key_value_file() {
        let text = "n_antennas = 32\nn_rfc = 1\nn_transmissions = 50\nn_subcarriers = 10\n\
                    carrier_freq_hz = 140e9\nbandwidth_hz = 100e6\ntx_power_dbm = 30\n\
                    noise_psd_dbm_hz = -173.855\nnoise_figure_db = 10\nseed = 7\n";
        let cfg = ScenarioConfig::from_kv_str(text, Path::new("x.cfg")).unwrap();
        assert_eq!(cfg.n_antennas, 32);
        assert_eq!(cfg.n_rfc, 1);
        assert_eq!(cfg.n_transmissions, 50);
        assert_eq!(cfg.bandwidth, 100e6);
        assert_eq!(cfg.seed, 7);
        assert!((cfg.tx_power - 1.0).abs() < 1e-15);

        let back = ScenarioConfig::from_kv_str(&cfg.to_kv_string(), Path::new("y")).unwrap();
        assert_eq!(back.n_antennas, cfg.n_antennas);
        assert!((back.tx_power / cfg.tx_power - 1.0).abs() < 1e-12);
    }

    #[test]
    fn config_errors_carry_line() {
        let err =
            ScenarioConfig::from_kv_str("n_antennas = 4\nbogus = 1\n", Path::new("c")).unwrap_err();
        match err {
            Error::ConfigSyntax { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        let err =
            ScenarioConfig::from_kv_str("n_antennas = 4\nn_rfc = 8\n", Path::new("c")).unwrap_err();
        assert!(err.is_config());
    }
}
