use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use clusterbo::report::RunReport;

pub const REPORT_FILE: &str = "report.json";
pub const TRIAL_LOG_FILE: &str = "trials.log";
pub const CURVE_FILE: &str = "curve.csv";

/// Writes `contents` next to `path` and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.persist(path)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// One JSON object per line: the plan, then trials and stage transitions in
/// order. Wall-clock times are left out so that reruns match byte for byte.
pub fn trial_log(report: &RunReport) -> Result<String> {
    let mut out = String::new();
    for entry in report.log_entries() {
        out.push_str(&serde_json::to_string(&entry)?);
        out.push('\n');
    }
    Ok(out)
}

/// `trial,best_so_far`, one row per trial; the value is empty until the
/// first feasible evaluation.
pub fn curve_csv(report: &RunReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["trial", "best_so_far"])?;
    for t in &report.trials {
        let best = t.best_so_far.map(|b| b.to_string()).unwrap_or_default();
        w.write_record([t.trial.to_string(), best])?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

pub fn write_run(report: &RunReport, dir: &Path) -> Result<()> {
    write_atomic(
        &dir.join(REPORT_FILE),
        serde_json::to_string_pretty(report)?.as_bytes(),
    )?;
    write_atomic(&dir.join(TRIAL_LOG_FILE), trial_log(report)?.as_bytes())?;
    write_atomic(&dir.join(CURVE_FILE), curve_csv(report)?.as_bytes())?;
    Ok(())
}
