//! Running one scenario and turning it into output files.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use redsim_core::metrics::{metrics_csv, summary_table, MetricsError, RunSummary};
use redsim_core::netsim::ScenarioError;
use redsim_core::simulate;
use thiserror::Error;

use crate::scenario_file::{render_scenario, ScenarioFile};
use crate::VERSION_STRING;

pub const METRICS_FILE: &str = "metrics.csv";
pub const SUMMARY_TXT: &str = "summary.txt";
pub const SUMMARY_CSV: &str = "summary.csv";
pub const TRACE_FILE: &str = "trace.csv";
pub const MANIFEST_FILE: &str = "manifest.scn";

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("packet conservation violated for flows {0:?}")]
    Conservation(Vec<u32>),
}

/// Everything a finished run contributes to reports.
#[derive(Debug, Clone)]
pub struct CellOutcome {
    pub id: String,
    pub summary: RunSummary,
    pub trace_csv: Option<String>,
    pub events: u64,
    /// Host time spent in the simulation. Never written to outputs.
    pub wall: Duration,
}

/// Simulates `file` and audits the per-flow packet ledgers.
pub fn execute(file: &ScenarioFile) -> Result<CellOutcome, RunError> {
    let started = Instant::now();
    let result = simulate(&file.scenario)?;
    let wall = started.elapsed();
    let bad = result.conservation_violations();
    if !bad.is_empty() {
        return Err(RunError::Conservation(bad));
    }
    let summary = result.summary(&file.id)?;
    let trace_csv = file.scenario.trace_interval.map(|_| result.trace.to_csv());
    Ok(CellOutcome {
        id: file.id.clone(),
        summary,
        trace_csv,
        events: result.events,
        wall,
    })
}

/// Output files as `(relative path, contents)`, in write order.
pub type Artifacts = Vec<(String, String)>;

pub fn manifest_text(kind: &str, file: &ScenarioFile, artifact_names: &[String], extra: &[String]) -> String {
    let mut out = format!("# redsim {kind} manifest\n# tool_version = {VERSION_STRING}\n");
    out.push_str(&format!("# seed = {}\n", file.scenario.seed));
    out.push_str(&format!("# artifacts = {}\n", artifact_names.join(", ")));
    for line in extra {
        out.push_str(&format!("# {line}\n"));
    }
    out.push('\n');
    out.push_str(&render_scenario(file));
    out
}

/// Files written by `redsim run`.
pub fn run_artifacts(file: &ScenarioFile, outcome: &CellOutcome) -> Artifacts {
    let runs = [outcome.summary.clone()];
    let report = summary_table(&runs);
    let mut files = vec![
        (METRICS_FILE.to_string(), metrics_csv(&runs)),
        (SUMMARY_TXT.to_string(), report.text),
        (SUMMARY_CSV.to_string(), report.csv),
    ];
    if let Some(trace) = &outcome.trace_csv {
        files.push((TRACE_FILE.to_string(), trace.clone()));
    }
    let mut names: Vec<String> = files.iter().map(|(n, _)| n.clone()).collect();
    names.push(MANIFEST_FILE.to_string());
    files.push((MANIFEST_FILE.to_string(), manifest_text("run", file, &names, &[])));
    files
}

/// Writes every artifact or none of them: contents go to temporary files
/// first and are renamed into place only after all writes succeed.
pub fn write_artifacts(dir: &Path, files: &[(String, String)]) -> io::Result<Vec<PathBuf>> {
    let mut staged: Vec<(PathBuf, PathBuf)> = Vec::new();
    let result = (|| {
        for (name, contents) in files {
            let target = dir.join(name);
            let parent = target.parent().unwrap_or(dir).to_path_buf();
            fs::create_dir_all(&parent)?;
            let file_name = target
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            let tmp = parent.join(format!(".{file_name}.partial"));
            staged.push((tmp.clone(), target));
            fs::write(&tmp, contents)?;
        }
        for (tmp, target) in &staged {
            fs::rename(tmp, target)?;
        }
        Ok(staged.iter().map(|(_, t)| t.clone()).collect())
    })();
    if result.is_err() {
        for (tmp, _) in &staged {
            let _ = fs::remove_file(tmp);
        }
    }
    result
}
