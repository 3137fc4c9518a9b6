//! Scenario sweeps behind each figure, and their tabular output.
//!
//! Every runner validates the whole sweep before computing anything, spreads
//! sweep points over the rayon pool and assembles rows in sweep order, so a
//! given spec always produces the same bytes.

mod maps;
mod sweeps;
mod table;

use std::f64::consts::FRAC_PI_4;
use std::fmt;
use std::str::FromStr;

pub use maps::{
    run_fig4, run_fig5, write_contours, Fig5Result, MapResult, Metric, Variant, CONTOUR_LEVEL_DB,
    MAP_HEADER,
};
pub use sweeps::{
    fig2_columns, run_fig2, run_fig3, FIG2_BOUND_COLUMNS, FIG2_TRIAL_COLUMNS, FIG3_COLUMNS,
};
pub use table::{Cell, Format, RowSink, Table};

use crate::channel::{Position, ScenarioConfig};
use crate::error::{Error, Result};
use crate::estimators::EstimatorConfig;
use crate::mcrb::MmeDomain;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentId {
    Fig2,
    Fig3Array,
    Fig3Distance,
    Fig4Map,
    Fig5Variants,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 5] = [
        ExperimentId::Fig2,
        ExperimentId::Fig3Array,
        ExperimentId::Fig3Distance,
        ExperimentId::Fig4Map,
        ExperimentId::Fig5Variants,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentId::Fig2 => "fig2",
            ExperimentId::Fig3Array => "fig3_array",
            ExperimentId::Fig3Distance => "fig3_distance",
            ExperimentId::Fig4Map => "fig4_map",
            ExperimentId::Fig5Variants => "fig5_variants",
        }
    }
}

impl fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ExperimentId::ALL
            .into_iter()
            .find(|id| id.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown experiment `{s}`")))
    }
}

/// Rectilinear grid of positions, both ends included.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapGrid {
    pub x: (f64, f64),
    pub y: (f64, f64),
    pub nx: usize,
    pub ny: usize,
}

impl Default for MapGrid {
    fn default() -> Self {
        MapGrid {
            x: (0.1, 6.0),
            y: (-3.0, 3.0),
            nx: 60,
            ny: 60,
        }
    }
}

impl MapGrid {
    pub fn xs(&self) -> Vec<f64> {
        linspace(self.x.0, self.x.1, self.nx)
    }

    pub fn ys(&self) -> Vec<f64> {
        linspace(self.y.0, self.y.1, self.ny)
    }

    fn validate(&self) -> Result<()> {
        let ok = self.nx >= 2
            && self.ny >= 2
            && self.x.0 > 0.0
            && self.x.1 > self.x.0
            && self.y.1 > self.y.0
            && self.x.1.is_finite()
            && self.y.0.is_finite()
            && self.y.1.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "map grid must have x > 0, increasing axes and at least 2 x 2 points, got {self:?}"
            )))
        }
    }
}

/// `n` evenly spaced values from `a` to `b`.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => (0..n)
            .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

/// `n` log-spaced values from `a` to `b`.
pub fn logspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    linspace(a.ln(), b.ln(), n)
        .into_iter()
        .map(f64::exp)
        .collect()
}

/// Everything needed to run one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub id: ExperimentId,
    pub base: ScenarioConfig,
    /// Monte-Carlo trials per estimator and sweep point (fig2 only).
    pub trials: usize,
    pub seed: u64,
    pub domain: MmeDomain,
    pub estimator: EstimatorConfig,
    /// UE position for fig2 and the array sweep.
    pub position: Position,
    /// dBm
    pub powers_dbm: Vec<f64>,
    pub array_sizes: Vec<usize>,
    /// Meters along the `pi/4` ray.
    pub distances: Vec<f64>,
    pub map: MapGrid,
}

impl ExperimentSpec {
    /// Default sweep for `id`. fig3 runs at 100 MHz, everything else at the
    /// default scenario.
    pub fn new(id: ExperimentId) -> Self {
        let mut base = ScenarioConfig::default();
        if matches!(id, ExperimentId::Fig3Array | ExperimentId::Fig3Distance) {
            base.bandwidth = 100e6;
        }
        ExperimentSpec {
            id,
            base,
            trials: if id == ExperimentId::Fig2 { 500 } else { 0 },
            seed: 0,
            domain: MmeDomain::default(),
            estimator: EstimatorConfig::default(),
            position: Position::new(2.0, 2.0),
            powers_dbm: linspace(-10.0, 30.0, 15),
            array_sizes: vec![4, 9, 16, 25, 36, 49, 64, 81, 100, 121, 144],
            distances: logspace(0.25, 10.0, 40),
            map: MapGrid::default(),
        }
    }

    /// Same experiment on a caller-supplied base scenario.
    pub fn with_base(mut self, base: ScenarioConfig) -> Self {
        self.base = base;
        self
    }

    /// Positions of the distance sweep.
    pub fn distance_positions(&self) -> Vec<Position> {
        self.distances
            .iter()
            .map(|&d| Position::new(d * FRAC_PI_4.cos(), d * FRAC_PI_4.sin()))
            .collect()
    }

    /// Checks every scenario the sweep will touch.
    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        self.estimator.validate()?;
        let finite_pos = |p: &Position| p.x.is_finite() && p.y.is_finite() && p.x > 0.0;
        match self.id {
            ExperimentId::Fig2 => {
                if self.powers_dbm.is_empty() || self.powers_dbm.iter().any(|p| !p.is_finite()) {
                    return Err(Error::InvalidConfig(
                        "power sweep must be non-empty and finite".into(),
                    ));
                }
                if !finite_pos(&self.position) {
                    return Err(Error::InvalidConfig(
                        "UE must sit in front of the array (x > 0)".into(),
                    ));
                }
            }
            ExperimentId::Fig3Array => {
                if self.array_sizes.is_empty() {
                    return Err(Error::InvalidConfig("array sweep is empty".into()));
                }
                if !finite_pos(&self.position) {
                    return Err(Error::InvalidConfig(
                        "UE must sit in front of the array (x > 0)".into(),
                    ));
                }
                for &n in &self.array_sizes {
                    self.base.clone().with_antennas(n).validate()?;
                }
            }
            ExperimentId::Fig3Distance => {
                if self.distances.is_empty()
                    || self.distances.iter().any(|d| !(*d > 0.0 && d.is_finite()))
                {
                    return Err(Error::InvalidConfig(
                        "distances must be positive and finite".into(),
                    ));
                }
            }
            ExperimentId::Fig4Map => self.map.validate()?,
            ExperimentId::Fig5Variants => {
                self.map.validate()?;
                for v in Variant::standard(&self.base) {
                    v.config.validate()?;
                }
            }
        }
        Ok(())
    }
}
