//! Subcommands behind the `powerflow` binary: `run`, `verify` and
//! `sweep-tau`. Each returns the process exit code.

pub mod config;
pub mod output;

use std::path::{Path, PathBuf};
use std::time::Instant;

use powerflow::flow::{self, check_bounds, run_observed, tau_sweep, ToleranceModel};
use powerflow::lagrangian::{verify_identity, Fixture, Identity, RefinementPlan};
use powerflow::Termination;
use serde::Serialize;

use config::RunConfig;
use output::{RunManifest, RunWriter, SlopeEntry, ToleranceConstants};

/// Exit code for malformed configuration or arguments.
pub const EXIT_CONFIG: i32 = 2;
/// Exit code for a run that aborted or a check that failed.
pub const EXIT_FAILURE: i32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            _ => EXIT_FAILURE,
        }
    }
}

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Default)]
pub struct Common {
    pub out: Option<PathBuf>,
    pub seed: u64,
    pub quiet: bool,
}

impl Common {
    fn note(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }
}

/// Integrate one configured flow, streaming monitors and snapshots.
pub fn cmd_run(config_path: &Path, common: &Common) -> Result<i32, CliError> {
    let cfg = RunConfig::load(config_path)?;
    let flow_cfg = cfg.flow_config()?;
    let initial = cfg.initial_state(common.seed)?;
    let dir = cfg.output_dir(common.out.as_deref());

    let started = Instant::now();
    let mut writer = RunWriter::create(&dir)?;
    let outcome = run_observed(&initial, &flow_cfg, &mut writer)
        .map_err(|e| CliError::Runtime(format!("initial data rejected: {e}")))?;
    writer.finish()?;
    let wall = started.elapsed().as_secs_f64();

    let model = ToleranceModel::for_run(&outcome);
    let bounds = check_bounds(&outcome.monitors, outcome.lambda, flow_cfg.p, model).ok();
    let abort_reason = match &outcome.termination {
        Termination::Aborted(e) => Some(e.to_string()),
        _ => None,
    };
    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION"),
        config: &cfg,
        seed: common.seed,
        termination: outcome.termination.label(),
        abort_reason: abort_reason.clone(),
        steps: outcome.steps,
        t_final: outcome.final_state.t,
        lambda: outcome.lambda,
        tolerances: ToleranceConstants::current(flow_cfg.eps_stationary),
        tolerance_model: model,
        bounds,
        wall_time_s: wall,
    };
    output::write_json(&dir.join(output::MANIFEST_FILE), &manifest)?;

    common.note(format!(
        "{} after {} steps at t = {:.6} (sup H = {:.6e}); output in {}",
        outcome.termination.label(),
        outcome.steps,
        outcome.final_state.t,
        outcome.monitors.last().map_or(f64::NAN, |m| m.sup_h),
        dir.display()
    ));
    match abort_reason {
        Some(reason) => {
            eprintln!("aborted: {reason}");
            Ok(EXIT_FAILURE)
        }
        None => Ok(0),
    }
}

/// Comma-separated identity names, or `all`.
pub fn parse_identities(selector: &str) -> Result<Vec<Identity>, CliError> {
    if selector.trim() == "all" {
        return Ok(Identity::ALL.to_vec());
    }
    let ids = selector
        .split(',')
        .map(|s| s.trim().parse::<Identity>().map_err(|e| CliError::Config(e.to_string())))
        .collect::<Result<Vec<_>, _>>()?;
    if ids.is_empty() {
        return Err(CliError::Config("no identity selected".into()));
    }
    Ok(ids)
}

pub fn parse_fixtures(selector: &str) -> Result<Vec<Fixture>, CliError> {
    if selector.trim() == "all" {
        return Ok(Fixture::ALL.to_vec());
    }
    selector
        .split(',')
        .map(|s| s.trim().parse::<Fixture>().map_err(|e| CliError::Config(e.to_string())))
        .collect()
}

/// Residual sweeps for the selected identities; exit 0 iff every slope meets
/// its threshold.
pub fn cmd_verify(identities: &str, fixtures: &str, levels: usize, common: &Common) -> Result<i32, CliError> {
    let ids = parse_identities(identities)?;
    let fxs = parse_fixtures(fixtures)?;
    let plan = RefinementPlan::with_levels(levels);
    plan.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let dir = common.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&dir)?;

    let mut reports = Vec::new();
    for &fx in &fxs {
        for &id in &ids {
            let r = verify_identity(id, fx, &plan).map_err(|e| CliError::Runtime(e.to_string()))?;
            common.note(format!(
                "{:<17} {:<17} dt-slope {:<8} h-slope {:<8} {}",
                id.name(),
                fx.name(),
                fmt_slope(r.slope_dt, r.exact || r.exact_in_dt),
                fmt_slope(r.slope_h, r.exact),
                if r.passed { "ok" } else { "FAILED" }
            ));
            reports.push(r);
        }
    }
    output::write_residuals(&dir.join(output::RESIDUALS_FILE), &reports)?;
    let slopes: Vec<SlopeEntry> = reports.iter().map(SlopeEntry::from).collect();
    output::write_json(&dir.join(output::SLOPES_FILE), &slopes)?;
    Ok(if reports.iter().all(|r| r.passed) { 0 } else { EXIT_FAILURE })
}

fn fmt_slope(s: Option<f64>, exact: bool) -> String {
    match (s, exact) {
        (_, true) => "exact".into(),
        (Some(v), _) => format!("{v:.3}"),
        (None, _) => "n/a".into(),
    }
}

#[derive(Serialize)]
struct SweepFile<'a> {
    version: &'static str,
    config: &'a RunConfig,
    taus: &'a [f64],
    report: &'a flow::SweepReport,
}

/// Run to stationarity for each regularizer; exit 0 iff the limits behave
/// like a Cauchy sequence.
pub fn cmd_sweep_tau(config_path: &Path, taus: &[f64], common: &Common) -> Result<i32, CliError> {
    flow::validate_taus(taus).map_err(|e| CliError::Config(e.to_string()))?;
    let cfg = RunConfig::load(config_path)?;
    let flow_cfg = cfg.flow_config()?;
    let initial = cfg.initial_state(common.seed)?;
    let dir = cfg.output_dir(common.out.as_deref());
    std::fs::create_dir_all(&dir)?;

    let report = tau_sweep(&initial, &flow_cfg, taus).map_err(|e| CliError::Runtime(e.to_string()))?;
    for e in &report.entries {
        common.note(format!(
            "tau = {:<8} {:<14} t = {:<10.4} mean u = {:.6}",
            e.tau, e.termination, e.t_final, e.mean_u
        ));
    }
    common.note(format!("distances {:?}, cauchy = {}", report.distances, report.cauchy));
    if let Some(reason) = &report.aborted {
        eprintln!("aborted: {reason}");
    }
    let file = SweepFile {
        version: env!("CARGO_PKG_VERSION"),
        config: &cfg,
        taus,
        report: &report,
    };
    output::write_json(&dir.join(output::SWEEP_FILE), &file)?;
    Ok(if report.cauchy { 0 } else { EXIT_FAILURE })
}
