use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use quadsmc::config::ConfigFile;
use quadsmc::sim::{compute_metrics, run_partial, Metrics, Scenario, SimError};
use quadsmc::trace::write_trace_file;

use crate::{plot, CliError};

/// Written next to each trace as `<stem>.report.json`.
#[derive(Debug, Serialize)]
pub struct RunReport {
    pub tool: String,
    pub version: String,
    pub config_path: String,
    /// Effective configuration with every default resolved.
    pub config: ConfigFile,
    pub status: RunStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Absent when the run aborted before the first sample.
    pub metrics: Option<Metrics>,
    pub wall_clock_s: f64,
    pub trace: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    Ok,
    Aborted,
}

struct Job {
    source: PathBuf,
    stem: String,
    config: ConfigFile,
    scenario: Scenario,
    trace_path: PathBuf,
    report_path: PathBuf,
}

fn prepare(path: &Path, out: &Path, dt: Option<f64>) -> Result<Job, CliError> {
    let fail = |e: &dyn std::fmt::Display| CliError::Config(format!("{}: {e}", path.display()));
    let mut config = ConfigFile::load(path).map_err(|e| fail(&e))?;
    if let Some(dt) = dt {
        config.simulation.dt = dt;
    }
    let config = config.effective().map_err(|e| fail(&e))?;
    let scenario = config.to_scenario().map_err(|e| fail(&e))?;
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "scenario".into());
    let trace_path = out.join(config.output.trace.clone().unwrap_or(format!("{stem}.csv")));
    let report_path = out.join(
        config
            .output
            .report
            .clone()
            .unwrap_or(format!("{stem}.report.json")),
    );
    Ok(Job {
        source: path.to_path_buf(),
        stem,
        config,
        scenario,
        trace_path,
        report_path,
    })
}

fn abort_message(e: &SimError) -> String {
    match e {
        SimError::Infeasible(inner) => format!("check_feasible failed: {inner}"),
        other => other.to_string(),
    }
}

fn execute(job: &Job, out: &Path) -> Result<String, CliError> {
    let io = |p: &Path, e: &dyn std::fmt::Display| CliError::Io(format!("{}: {e}", p.display()));
    let start = Instant::now();
    let (trace, err) = run_partial(&job.scenario);
    let wall = start.elapsed().as_secs_f64();

    let metrics = (!trace.is_empty()).then(|| compute_metrics(&trace, &job.scenario));
    if !trace.is_empty() {
        write_trace_file(&trace, &job.trace_path).map_err(|e| io(&job.trace_path, &e))?;
    }
    let report = RunReport {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config_path: job.source.display().to_string(),
        config: job.config.clone(),
        status: if err.is_some() { RunStatus::Aborted } else { RunStatus::Ok },
        error: err.as_ref().map(abort_message),
        metrics: metrics.clone(),
        wall_clock_s: wall,
        trace: job.trace_path.display().to_string(),
    };
    let text = serde_json::to_string_pretty(&report).expect("report serializes");
    fs::write(&job.report_path, text + "\n").map_err(|e| io(&job.report_path, &e))?;

    if let Some(e) = err {
        return Err(CliError::Abort(format!(
            "{}: {}",
            job.source.display(),
            abort_message(&e)
        )));
    }
    if job.config.output.plot {
        plot::plot_file(&job.trace_path, job.config.output.decimate, out, &job.stem)?;
    }
    let m = metrics.expect("completed run has samples");
    Ok(format!(
        "{}: {} samples in {wall:.2} s, |P~(end)| = {:.3e} m, t_r = {}",
        job.source.display(),
        m.samples,
        m.final_position_error,
        m.reaching_time
            .map_or("not reached".to_string(), |t| format!("{t:.3} s"))
    ))
}

/// Validates every config first; any invalid one stops the batch before
/// simulation starts.
pub fn cmd_run(configs: &[PathBuf], out: &Path, dt: Option<f64>) -> Result<(), CliError> {
    let jobs = configs
        .iter()
        .map(|p| prepare(p, out, dt))
        .collect::<Result<Vec<_>, _>>()?;
    let mut seen = HashSet::new();
    for j in &jobs {
        for p in [&j.trace_path, &j.report_path] {
            if !seen.insert(p.clone()) {
                return Err(CliError::Config(format!(
                    "{}: output {} collides with another run",
                    j.source.display(),
                    p.display()
                )));
            }
        }
    }
    fs::create_dir_all(out).map_err(|e| CliError::Io(format!("{}: {e}", out.display())))?;

    let results: Vec<Result<String, CliError>> = jobs.par_iter().map(|j| execute(j, out)).collect();
    let mut errors = Vec::new();
    for r in results {
        match r {
            Ok(line) => println!("{line}"),
            Err(e) => errors.push(e),
        }
    }
    if errors.len() <= 1 {
        return errors.pop().map_or(Ok(()), Err);
    }
    for e in &errors {
        eprintln!("error: {e}");
    }
    let code = errors.iter().map(CliError::exit_code).max().unwrap_or(1);
    let summary = format!("{} of {} runs failed", errors.len(), jobs.len());
    Err(if code == 3 { CliError::Abort(summary) } else { CliError::Io(summary) })
}
