//! `nfmcrb`: runs the figure sweeps and single-point analyses and writes
//! plot-ready tables.
//!
//! Exit status is 0 on success, 2 for configuration or I/O problems and 3
//! for numerical failures.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nearfield_mcrb::bounds::{bounds_for_state, BoundReport};
use nearfield_mcrb::channel::{ModelKind, Position, StateParams};
use nearfield_mcrb::estimators::{run_monte_carlo, GridDictionary, MonteCarloSpec, TrialRecord};
use nearfield_mcrb::experiments::{
    fig2_columns, run_fig2, run_fig3, run_fig4, run_fig5, write_contours, Cell, ExperimentId,
    ExperimentSpec, Format, MapResult, RowSink, Table,
};
use nearfield_mcrb::mcrb::{mismatch_at, MmeDomain, PseudoTrueSearch};
use nearfield_mcrb::observation::Scenario;
use nearfield_mcrb::{Error, Result, ScenarioConfig};

#[derive(Parser, Debug)]
#[command(
    name = "nfmcrb",
    version,
    about = "Near-field localization bounds and model-mismatch sweeps"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Scenario file (TOML); replaces the base scenario of every experiment.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for noise and analog combiners.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true, value_enum, default_value_t = OutFormat::Csv)]
    format: OutFormat,
    /// Monte-Carlo trials (fig2 defaults to 500, estimate to 100).
    #[arg(long, global = true)]
    trials: Option<usize>,
    #[arg(long = "mme-domain", global = true, value_enum, default_value_t = Domain::Rmse)]
    mme_domain: Domain,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum OutFormat {
    Csv,
    Json,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum Domain {
    Variance,
    Rmse,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum Sweep {
    Array,
    Distance,
    Both,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum Kind {
    Mm,
    Tm,
    TmSns,
    TmSwm,
    TmBse,
}

impl From<Kind> for ModelKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Mm => ModelKind::Mm,
            Kind::Tm => ModelKind::Tm,
            Kind::TmSns => ModelKind::TmSns,
            Kind::TmSwm => ModelKind::TmSwm,
            Kind::TmBse => ModelKind::TmBse,
        }
    }
}

#[derive(Args, Debug, Clone, Copy)]
struct Point {
    /// UE x coordinate (m).
    #[arg(long, default_value_t = 2.0, allow_negative_numbers = true)]
    px: f64,
    /// UE y coordinate (m).
    #[arg(long, default_value_t = 2.0, allow_negative_numbers = true)]
    py: f64,
    /// Transmit power (dBm); defaults to the scenario's.
    #[arg(long = "power-dbm", allow_negative_numbers = true)]
    power_dbm: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Bounds and estimator RMSE over transmit power.
    Fig2,
    /// MME of each impairment over array size and/or distance.
    Fig3 {
        #[arg(long, value_enum, default_value_t = Sweep::Both)]
        sweep: Sweep,
    },
    /// MME maps over a position grid with -3 dB contours.
    Fig4 {
        #[command(flatten)]
        grid: GridArgs,
    },
    /// fig4 maps for the four scenario variants and their areas.
    Fig5 {
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Error bounds of every model at one position.
    Bounds {
        #[command(flatten)]
        point: Point,
    },
    /// Far-field lower bound and MME at one position.
    Mcrb {
        #[command(flatten)]
        point: Point,
        /// Model generating the data.
        #[arg(long, value_enum, default_value_t = Kind::Tm)]
        truth: Kind,
    },
    /// Monte-Carlo position estimation with a per-trial dump.
    Estimate {
        #[command(flatten)]
        point: Point,
        /// Model generating the data.
        #[arg(long, value_enum, default_value_t = Kind::Tm)]
        data: Kind,
        /// Model assumed by the estimator.
        #[arg(long, value_enum, default_value_t = Kind::Tm)]
        estimator: Kind,
        /// Half-width of the angle grid (degrees).
        #[arg(long = "aoa-limit-deg", default_value_t = 89.0)]
        aoa_limit_deg: f64,
    },
}

#[derive(Args, Debug, Clone, Copy)]
struct GridArgs {
    #[arg(long, default_value_t = 60)]
    nx: usize,
    #[arg(long, default_value_t = 60)]
    ny: usize,
    #[arg(long = "x-min", default_value_t = 0.1)]
    x_min: f64,
    #[arg(long = "x-max", default_value_t = 6.0)]
    x_max: f64,
    #[arg(long = "y-min", default_value_t = -3.0, allow_negative_numbers = true)]
    y_min: f64,
    #[arg(long = "y-max", default_value_t = 3.0, allow_negative_numbers = true)]
    y_max: f64,
}

struct Ctx {
    base: Option<ScenarioConfig>,
    seed: u64,
    out: PathBuf,
    format: Format,
    trials: Option<usize>,
    domain: MmeDomain,
}

impl Ctx {
    fn spec(&self, id: ExperimentId) -> ExperimentSpec {
        let mut spec = ExperimentSpec::new(id);
        if let Some(base) = &self.base {
            spec.base = base.clone();
        }
        spec.base.seed = self.seed;
        spec.seed = self.seed;
        spec.domain = self.domain;
        if let Some(t) = self.trials {
            spec.trials = t;
        }
        spec
    }

    fn scenario_config(&self, point: &Point) -> ScenarioConfig {
        let mut cfg = self.base.clone().unwrap_or_default();
        cfg.seed = self.seed;
        if let Some(p) = point.power_dbm {
            cfg = cfg.with_tx_power_dbm(p);
        }
        cfg
    }

    fn save(&self, table: &Table, stem: &str) -> Result<()> {
        let path = table.save(&self.out, stem, self.format)?;
        println!("wrote {}", path.display());
        Ok(())
    }

    fn save_map(&self, map: &MapResult, table: &Table, stem: &str) -> Result<()> {
        self.save(table, &format!("{stem}_map"))?;
        let ext = match self.format {
            Format::Csv => "txt",
            Format::Json => "json",
        };
        let path = self.out.join(format!("{stem}_contours.{ext}"));
        let file = fs::File::create(&path).map_err(|e| io_error(&path, e))?;
        write_contours(std::io::BufWriter::new(file), map, self.format)
            .map_err(|e| io_error(&path, e))?;
        println!("wrote {}", path.display());
        Ok(())
    }
}

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn apply_grid(spec: &mut ExperimentSpec, g: &GridArgs) {
    spec.map.nx = g.nx;
    spec.map.ny = g.ny;
    spec.map.x = (g.x_min, g.x_max);
    spec.map.y = (g.y_min, g.y_max);
}

fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    if let Some(n) = g.threads {
        if n == 0 {
            return Err(Error::InvalidConfig("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    }
    let base = g.config.as_ref().map(ScenarioConfig::load).transpose()?;
    let ctx = Ctx {
        base,
        seed: g.seed,
        out: g.out.clone(),
        format: match g.format {
            OutFormat::Csv => Format::Csv,
            OutFormat::Json => Format::Json,
        },
        trials: g.trials,
        domain: match g.mme_domain {
            Domain::Variance => MmeDomain::Variance,
            Domain::Rmse => MmeDomain::Rmse,
        },
    };
    fs::create_dir_all(&ctx.out).map_err(|e| io_error(&ctx.out, e))?;

    match cli.command {
        Command::Fig2 => {
            let spec = ctx.spec(ExperimentId::Fig2);
            spec.validate()?;
            let partial = ctx.out.join("fig2.partial.csv");
            let table = {
                let mut sink = RowSink::create(&partial, &fig2_columns(spec.trials))?;
                run_fig2(&spec, Some(&mut sink))?
            };
            ctx.save(&table, "fig2")?;
            fs::remove_file(&partial).map_err(|e| io_error(&partial, e))?;
        }
        Command::Fig3 { sweep } => {
            let ids: &[ExperimentId] = match sweep {
                Sweep::Array => &[ExperimentId::Fig3Array],
                Sweep::Distance => &[ExperimentId::Fig3Distance],
                Sweep::Both => &[ExperimentId::Fig3Array, ExperimentId::Fig3Distance],
            };
            for &id in ids {
                let table = run_fig3(&ctx.spec(id))?;
                ctx.save(&table, id.name())?;
            }
        }
        Command::Fig4 { grid } => {
            let mut spec = ctx.spec(ExperimentId::Fig4Map);
            apply_grid(&mut spec, &grid);
            let map = run_fig4(&spec)?;
            if !map.skipped.is_empty() {
                log::warn!("{} grid points skipped", map.skipped.len());
            }
            ctx.save_map(&map, &map.table(), "fig4")?;
        }
        Command::Fig5 { grid } => {
            let mut spec = ctx.spec(ExperimentId::Fig5Variants);
            apply_grid(&mut spec, &grid);
            let res = run_fig5(&spec)?;
            ctx.save_map(&res.baseline, &res.baseline.table(), "fig5_baseline")?;
            for (v, map) in &res.variants {
                ctx.save_map(map, &res.relative_table(map), &format!("fig5_{}", v.name))?;
            }
            ctx.save(&res.summary, "fig5_summary")?;
        }
        Command::Bounds { point } => {
            let scenario = Scenario::from_config(ctx.scenario_config(&point))?;
            let state = StateParams::line_of_sight(
                Position::new(point.px, point.py),
                0.0,
                scenario.geometry(),
            )?;
            let mut table = Table::new(&BoundReport::CSV_HEADER);
            for kind in ModelKind::ALL {
                let r = bounds_for_state(kind, &state, &scenario)?;
                println!("{r}");
                table.push(vec![
                    Cell::from(kind.name()),
                    point.px.into(),
                    point.py.into(),
                    r.tx_power_dbm.into(),
                    r.peb.into(),
                    r.aeb.into(),
                    r.deb.into(),
                ])?;
            }
            ctx.save(&table, "bounds")?;
        }
        Command::Mcrb { point, truth } => {
            let scenario = Scenario::from_config(ctx.scenario_config(&point))?;
            let search = PseudoTrueSearch::new(&scenario);
            let m = mismatch_at(
                &search,
                truth.into(),
                Position::new(point.px, point.py),
                ctx.domain,
            )?;
            let theta0 = &m.lb.pseudo_true.theta0;
            let mut table = Table::new(&[
                "model",
                "px",
                "py",
                "P_dbm",
                "crb_peb_m",
                "lb_peb_m",
                "mcrb_peb_m",
                "bias_peb_m",
                "mme_peb_db",
                "mme_aeb_db",
                "mme_deb_db",
                "aoa0_deg",
                "toa0_s",
                "converged",
            ]);
            table.push(vec![
                ModelKind::from(truth).name().into(),
                point.px.into(),
                point.py.into(),
                scenario.config().tx_power_dbm().into(),
                m.crb.peb.into(),
                m.lb.peb().into(),
                m.lb.position_mcrb.trace().sqrt().into(),
                m.lb.position_bias.trace().sqrt().into(),
                m.mme.mme_peb.into(),
                m.mme.mme_aeb.into(),
                m.mme.mme_deb.into(),
                theta0.aoa.to_degrees().into(),
                theta0.toa.into(),
                m.lb.pseudo_true.converged.into(),
            ])?;
            println!(
                "CRB {:.4e} m, LB {:.4e} m, MME-PEB {:.2} dB ({})",
                m.crb.peb,
                m.lb.peb(),
                m.mme.mme_peb,
                ctx.domain
            );
            ctx.save(&table, "mcrb")?;
        }
        Command::Estimate {
            point,
            data,
            estimator,
            aoa_limit_deg,
        } => {
            if !(aoa_limit_deg > 0.0 && aoa_limit_deg < 90.0) {
                return Err(Error::InvalidConfig(
                    "--aoa-limit-deg must lie in (0, 90)".into(),
                ));
            }
            let scenario = Scenario::from_config(ctx.scenario_config(&point))?;
            let mut est = nearfield_mcrb::estimators::EstimatorConfig::default();
            let lim = aoa_limit_deg.to_radians();
            est.aoa_range = (-lim, lim);
            est.validate()?;
            let dict = GridDictionary::new(estimator.into(), &scenario, &est)?;
            let spec = MonteCarloSpec {
                data_kind: data.into(),
                estimator_kind: estimator.into(),
                position: Position::new(point.px, point.py),
                n_trials: ctx.trials.unwrap_or(100),
                seed: ctx.seed,
            };
            let report = run_monte_carlo(&scenario, &spec, &dict, &est)?;
            let mut table = Table::new(&TrialRecord::CSV_HEADER);
            for t in &report.trials {
                table.push(vec![
                    t.trial.into(),
                    Cell::Int(t.result.seed as i64),
                    t.result.estimate.x.into(),
                    t.result.estimate.y.into(),
                    t.error.into(),
                    t.result.converged.into(),
                    t.result.iterations.into(),
                ])?;
            }
            println!(
                "{}: RMSE {:.4e} m over {} trials, {} not converged",
                report.descriptor, report.rmse, report.n_trials, report.n_nonconverged
            );
            ctx.save(&table, "estimate_trials")?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config() || matches!(e, Error::Io { .. } | Error::Csv(_)) {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}
