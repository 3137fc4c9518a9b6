//! Position maps of the mismatch error (fig4) and their scenario variants
//! (fig5).

use std::io::Write;

use rayon::prelude::*;

use super::table::{Cell, Format, Table};
use super::{ExperimentId, ExperimentSpec, MapGrid};
use crate::channel::{ModelKind, Position, ScenarioConfig};
use crate::error::{Error, Result};
use crate::mcrb::{
    mismatch_at, mismatch_boundary, GridField, MmeDomain, Polyline, PseudoTrueSearch,
};
use crate::observation::Scenario;

/// Level of the mismatch boundary.
pub const CONTOUR_LEVEL_DB: f64 = -3.0;

pub const MAP_HEADER: [&str; 5] = ["px", "py", "mme_peb_db", "mme_aeb_db", "mme_deb_db"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Peb,
    Aeb,
    Deb,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Peb, Metric::Aeb, Metric::Deb];

    pub fn column(self) -> &'static str {
        match self {
            Metric::Peb => "mme_peb_db",
            Metric::Aeb => "mme_aeb_db",
            Metric::Deb => "mme_deb_db",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

/// MME of TM data under the far-field model over a position grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MapResult {
    /// One field per [`Metric`], in [`Metric::ALL`] order.
    pub fields: [GridField; 3],
    /// Boundaries at [`CONTOUR_LEVEL_DB`], per metric.
    pub contours: [Vec<Polyline>; 3],
    /// Grid points where the analysis failed; their values are NaN.
    pub skipped: Vec<Position>,
}

impl MapResult {
    pub fn field(&self, m: Metric) -> &GridField {
        &self.fields[m.index()]
    }

    pub fn contour(&self, m: Metric) -> &[Polyline] {
        &self.contours[m.index()]
    }

    /// Area (m^2) where the metric is at or above the boundary level.
    pub fn area(&self, m: Metric) -> f64 {
        self.field(m).area_above(CONTOUR_LEVEL_DB)
    }

    /// Rows of [`MAP_HEADER`], x fastest.
    pub fn table(&self) -> Table {
        let mut t = Table::new(&MAP_HEADER);
        let f = &self.fields[0];
        for (j, &y) in f.ys.iter().enumerate() {
            for (i, &x) in f.xs.iter().enumerate() {
                let mut row: Vec<Cell> = vec![x.into(), y.into()];
                row.extend(self.fields.iter().map(|g| Cell::from(g.at(i, j))));
                t.rows.push(row);
            }
        }
        t
    }

    fn compute(config: ScenarioConfig, grid: &MapGrid, domain: MmeDomain) -> Result<Self> {
        let scenario = Scenario::from_config(config)?;
        let search = PseudoTrueSearch::new(&scenario);
        let (xs, ys) = (grid.xs(), grid.ys());
        let points: Vec<Position> = ys
            .iter()
            .flat_map(|&y| xs.iter().map(move |&x| Position::new(x, y)))
            .collect();
        let values: Vec<Option<[f64; 3]>> = points
            .par_iter()
            .map(|&p| match mismatch_at(&search, ModelKind::Tm, p, domain) {
                Ok(m) => Some([m.mme.mme_peb, m.mme.mme_aeb, m.mme.mme_deb]),
                Err(e) => {
                    log::warn!("map point ({:.4}, {:.4}) skipped: {e}", p.x, p.y);
                    None
                }
            })
            .collect();
        let skipped = points
            .iter()
            .zip(&values)
            .filter(|(_, v)| v.is_none())
            .map(|(p, _)| *p)
            .collect();
        let field = |m: usize| {
            let v = values
                .iter()
                .map(|v| v.map_or(f64::NAN, |a| a[m]))
                .collect();
            GridField::new(xs.clone(), ys.clone(), v)
        };
        let fields = [field(0)?, field(1)?, field(2)?];
        let contours = [0, 1, 2].map(|m| mismatch_boundary(&fields[m], CONTOUR_LEVEL_DB));
        Ok(MapResult {
            fields,
            contours,
            skipped,
        })
    }
}

/// Writes the contours of `maps` as text blocks (`# ...` header, then one
/// `x y` pair per line, blank line between pieces) or as a JSON array.
pub fn write_contours<W: Write>(mut w: W, map: &MapResult, format: Format) -> std::io::Result<()> {
    let pieces: Vec<(Metric, usize, &Polyline)> = Metric::ALL
        .iter()
        .flat_map(|&m| {
            map.contour(m)
                .iter()
                .enumerate()
                .map(move |(i, p)| (m, i, p))
        })
        .collect();
    match format {
        Format::Csv => {
            for (m, i, p) in pieces {
                writeln!(
                    w,
                    "# metric={} level={CONTOUR_LEVEL_DB} piece={i} closed={} points={}",
                    m.column(),
                    p.closed,
                    p.points.len()
                )?;
                for (x, y) in &p.points {
                    writeln!(w, "{x:.16e} {y:.16e}")?;
                }
                writeln!(w)?;
            }
        }
        Format::Json => {
            writeln!(w, "[")?;
            let n = pieces.len();
            for (k, (m, i, p)) in pieces.into_iter().enumerate() {
                let pts: Vec<String> = p
                    .points
                    .iter()
                    .map(|(x, y)| format!("[{x:.16e}, {y:.16e}]"))
                    .collect();
                let sep = if k + 1 == n { "" } else { "," };
                writeln!(
                    w,
                    "  {{\"metric\": \"{}\", \"level\": {CONTOUR_LEVEL_DB:.1}, \"piece\": {i}, \"closed\": {}, \"points\": [{}]}}{sep}",
                    m.column(),
                    p.closed,
                    pts.join(", ")
                )?;
            }
            writeln!(w, "]")?;
        }
    }
    Ok(())
}

/// MME map and contours for the base scenario of `spec`.
pub fn run_fig4(spec: &ExperimentSpec) -> Result<MapResult> {
    if spec.id != ExperimentId::Fig4Map {
        return Err(Error::InvalidConfig(format!(
            "runner cannot execute {}",
            spec.id
        )));
    }
    spec.validate()?;
    MapResult::compute(spec.base.clone(), &spec.map, spec.domain)
}

/// A named change to the baseline scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Variant {
    pub name: &'static str,
    pub config: ScenarioConfig,
}

impl Variant {
    /// Higher power, analog combining over 50 transmissions, half the array,
    /// a quarter of the bandwidth.
    pub fn standard(base: &ScenarioConfig) -> Vec<Variant> {
        let mut analog = base.clone();
        analog.n_rfc = 1;
        analog.n_transmissions = 50;
        vec![
            Variant {
                name: "p30",
                config: base.clone().with_tx_power_dbm(30.0),
            },
            Variant {
                name: "analog_g50",
                config: analog,
            },
            Variant {
                name: "n32",
                config: base.clone().with_antennas(32),
            },
            Variant {
                name: "w100",
                config: base.clone().with_bandwidth(100e6),
            },
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fig5Result {
    pub baseline: MapResult,
    pub variants: Vec<(Variant, MapResult)>,
    /// One row per scenario, baseline first.
    pub summary: Table,
}

impl Fig5Result {
    pub const SUMMARY_HEADER: [&'static str; 7] = [
        "variant",
        "area_peb_m2",
        "area_aeb_m2",
        "area_deb_m2",
        "area_peb_ratio",
        "pieces_peb",
        "skipped",
    ];

    pub fn variant(&self, name: &str) -> Option<&MapResult> {
        self.variants
            .iter()
            .find(|(v, _)| v.name == name)
            .map(|(_, m)| m)
    }

    /// Variant map with an extra `rel_mme_peb_db` column, the change of
    /// MME-PEB against the baseline.
    pub fn relative_table(&self, map: &MapResult) -> Table {
        let mut t = map.table();
        t.columns.push("rel_mme_peb_db".into());
        for (row, base) in t
            .rows
            .iter_mut()
            .zip(&self.baseline.field(Metric::Peb).values)
        {
            let v = row[2].as_f64().unwrap_or(f64::NAN);
            row.push((v - base).into());
        }
        t
    }
}

/// Baseline map plus the four standard variants, with their `-3 dB` areas.
pub fn run_fig5(spec: &ExperimentSpec) -> Result<Fig5Result> {
    if spec.id != ExperimentId::Fig5Variants {
        return Err(Error::InvalidConfig(format!(
            "runner cannot execute {}",
            spec.id
        )));
    }
    spec.validate()?;
    let baseline = MapResult::compute(spec.base.clone(), &spec.map, spec.domain)?;
    let mut variants = Vec::new();
    for v in Variant::standard(&spec.base) {
        log::info!("fig5: variant {}", v.name);
        let map = MapResult::compute(v.config.clone(), &spec.map, spec.domain)?;
        variants.push((v, map));
    }
    let base_area = baseline.area(Metric::Peb);
    let mut summary = Table::new(&Fig5Result::SUMMARY_HEADER);
    let entries =
        std::iter::once(("baseline", &baseline)).chain(variants.iter().map(|(v, m)| (v.name, m)));
    for (name, m) in entries {
        let a = Metric::ALL.map(|k| m.area(k));
        summary.push(vec![
            name.into(),
            a[0].into(),
            a[1].into(),
            a[2].into(),
            (a[0] / base_area).into(),
            m.contour(Metric::Peb).len().into(),
            m.skipped.len().into(),
        ])?;
    }
    Ok(Fig5Result {
        baseline,
        variants,
        summary,
    })
}
