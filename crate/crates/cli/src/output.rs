//! Files written by the subcommands.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use powerflow::flow::{BoundsReport, MonitorRecord, RunObserver, ToleranceModel};
use powerflow::lagrangian::ResidualReport;
use powerflow::{geometry, tolerances, GraphState};
use serde::Serialize;

use crate::config::RunConfig;

pub const MONITORS_FILE: &str = "monitors.ndjson";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const RESIDUALS_FILE: &str = "residuals.csv";
pub const SLOPES_FILE: &str = "slopes.json";
pub const SWEEP_FILE: &str = "sweep.json";

/// Streams monitor rows to `monitors.ndjson` and snapshots to
/// `snapshots/u_<step>.csv` as the run records them.
pub struct RunWriter {
    monitors: BufWriter<File>,
    snapshot_dir: PathBuf,
    error: Option<io::Error>,
}

impl RunWriter {
    pub fn create(dir: &Path) -> io::Result<Self> {
        fs::create_dir_all(dir)?;
        let snapshot_dir = dir.join("snapshots");
        fs::create_dir_all(&snapshot_dir)?;
        Ok(Self {
            monitors: BufWriter::new(File::create(dir.join(MONITORS_FILE))?),
            snapshot_dir,
            error: None,
        })
    }

    fn write_record(&mut self, record: &MonitorRecord, state: &GraphState) -> io::Result<()> {
        serde_json::to_writer(&mut self.monitors, record)?;
        self.monitors.write_all(b"\n")?;
        let path = self.snapshot_dir.join(format!("u_{}.csv", record.step));
        write_snapshot(&path, state)
    }

    pub fn finish(mut self) -> io::Result<()> {
        if let Some(e) = self.error.take() {
            return Err(e);
        }
        self.monitors.flush()
    }
}

impl RunObserver for RunWriter {
    fn on_record(&mut self, record: &MonitorRecord, state: &GraphState) {
        if self.error.is_none() {
            if let Err(e) = self.write_record(record, state) {
                self.error = Some(e);
            }
        }
    }
}

/// Node coordinates and heights, one row per node.
pub fn write_snapshot(path: &Path, state: &GraphState) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let grid = &state.grid;
    if grid.n() == 1 {
        writeln!(w, "x1,u")?;
    } else {
        writeln!(w, "x1,x2,u")?;
    }
    for (k, u) in state.u.iter().enumerate() {
        let x = grid.coords(k);
        if grid.n() == 1 {
            writeln!(w, "{},{}", x[0], u)?;
        } else {
            writeln!(w, "{},{},{}", x[0], x[1], u)?;
        }
    }
    w.flush()
}

#[derive(Debug, Serialize)]
pub struct ToleranceConstants {
    pub admissibility_slack: f64,
    pub bound_tol_c: f64,
    pub spacelike_guard: f64,
    pub dt_floor: f64,
    pub eps_stationary: f64,
    pub exact_residual: f64,
    pub min_slope_dt: f64,
    pub min_slope_h: f64,
}

impl ToleranceConstants {
    pub fn current(eps_stationary: f64) -> Self {
        Self {
            admissibility_slack: tolerances::ADMISSIBILITY_SLACK,
            bound_tol_c: tolerances::BOUND_TOL_C,
            spacelike_guard: geometry::SPACELIKE_GUARD,
            dt_floor: powerflow::flow::DT_FLOOR,
            eps_stationary,
            exact_residual: tolerances::EXACT_RESIDUAL,
            min_slope_dt: tolerances::MIN_SLOPE_DT,
            min_slope_h: tolerances::MIN_SLOPE_H,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct RunManifest<'a> {
    pub version: &'static str,
    pub config: &'a RunConfig,
    pub seed: u64,
    pub termination: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub abort_reason: Option<String>,
    pub steps: usize,
    pub t_final: f64,
    pub lambda: f64,
    pub tolerances: ToleranceConstants,
    pub tolerance_model: ToleranceModel,
    pub bounds: Option<BoundsReport>,
    pub wall_time_s: f64,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()
}

/// `identity,fixture,series,dt,h,max_residual` rows for every sweep point.
pub fn write_residuals(path: &Path, reports: &[ResidualReport]) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "identity,fixture,series,dt,h,max_residual")?;
    for r in reports {
        for (series, points) in [("dt", &r.dt_series), ("h", &r.h_series), ("joint", &r.joint_series)] {
            for pt in points {
                writeln!(
                    w,
                    "{},{},{},{},{},{}",
                    r.identity.name(),
                    r.fixture.name(),
                    series,
                    pt.dt,
                    pt.h,
                    pt.max_residual
                )?;
            }
        }
    }
    w.flush()
}

#[derive(Debug, Serialize)]
pub struct SlopeEntry {
    pub identity: &'static str,
    pub fixture: &'static str,
    pub slope_dt: Option<f64>,
    pub slope_h: Option<f64>,
    pub exact: bool,
    pub exact_in_dt: bool,
    pub passed: bool,
}

impl From<&ResidualReport> for SlopeEntry {
    fn from(r: &ResidualReport) -> Self {
        Self {
            identity: r.identity.name(),
            fixture: r.fixture.name(),
            slope_dt: r.slope_dt,
            slope_h: r.slope_h,
            exact: r.exact,
            exact_in_dt: r.exact_in_dt,
            passed: r.passed,
        }
    }
}
