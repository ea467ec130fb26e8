//! Output files of a run.
//!
//! | file              | contents                                                   |
//! |-------------------|------------------------------------------------------------|
//! | `manifest.txt`    | resolved configuration, loadable with `likefree run`       |
//! | `samples.csv`     | `theta_1..theta_d,raw_weight,normalised_weight`            |
//! | `diagnostics.txt` | `key = value` run statistics, written on failure as well   |
//! | `trace.csv`       | chains: `iteration,theta_1..,kernel_mass,accepted,h,cumulative_simulator_calls` |
//! | `stage_log.csv`   | population samplers: one row per stage                     |
//! | `error.json`      | failures only: `{status, class, exit_code, message}`       |

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use likefree_core::{normalise_weights, AbcError};
use serde_json::json;

use crate::config::{Renderer, RunConfiguration};
use crate::run::{error_class, execute, exit_code, LogTable, RunFailure, SampleTable};
use crate::summary::{fmt_value, samples_header};

pub const SAMPLES_FILE: &str = "samples.csv";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.txt";
pub const MANIFEST_FILE: &str = "manifest.txt";
pub const ERROR_FILE: &str = "error.json";

/// How a run ended.
#[derive(Debug)]
pub struct RunReport {
    pub exit_code: i32,
    pub output_dir: PathBuf,
    /// The machine-readable error record, for failed runs.
    pub error: Option<serde_json::Value>,
    /// Diagnostics as written.
    pub diagnostics: Vec<(String, String)>,
}

fn write_csv(path: &Path, header: &[String], rows: impl Iterator<Item = Vec<String>>) -> io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()
}

pub fn write_samples(path: &Path, table: &SampleTable) -> Result<(), AbcError> {
    let normalised = normalise_weights(&table.raw_weights)?;
    let rows = table.thetas.iter().zip(&table.raw_weights).zip(&normalised).map(|((theta, raw), w)| {
        let mut row: Vec<String> = theta.iter().map(|x| fmt_value(*x)).collect();
        row.push(fmt_value(*raw));
        row.push(fmt_value(*w));
        row
    });
    write_csv(path, &samples_header(table.dim), rows).map_err(io_error)
}

fn write_log(dir: &Path, log: &LogTable) -> io::Result<()> {
    write_csv(&dir.join(log.file_name), &log.header, log.rows.iter().cloned())
}

fn write_key_values(path: &Path, entries: &[(String, String)]) -> io::Result<()> {
    let mut r = Renderer::default();
    for (k, v) in entries {
        r.entry(k, v.replace('"', "'"));
    }
    fs::write(path, r.finish())
}

/// Parse a diagnostics file back into its pairs.
pub fn read_diagnostics(path: &Path) -> io::Result<Vec<(String, String)>> {
    let text = fs::read_to_string(path)?;
    let doc = crate::config::Document::parse(&text).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e.to_string()))?;
    Ok(doc.sections[0].entries.iter().map(|e| (e.key.clone(), e.value.clone())).collect())
}

pub fn manifest_text(cfg: &RunConfiguration) -> String {
    let mut r = Renderer::default();
    r.comment(&format!(
        "likefree run manifest\nengine likefree-core {}\nreproduce with: likefree run {MANIFEST_FILE}",
        env!("CARGO_PKG_VERSION")
    ));
    cfg.render_into(&mut r);
    r.finish()
}

fn io_error(e: io::Error) -> AbcError {
    AbcError::InvalidInput(format!("i/o error: {e}"))
}

fn error_record(error: &AbcError) -> serde_json::Value {
    json!({
        "status": "error",
        "class": error_class(error),
        "exit_code": exit_code(error),
        "message": error.to_string(),
    })
}

/// Write everything except `error.json` for a run that produced output.
fn write_success(cfg: &RunConfiguration, dir: &Path) -> Result<Vec<(String, String)>, RunFailure> {
    let out = execute(cfg).map_err(|error| RunFailure { error, partial: Vec::new() })?;
    let mut diagnostics = out.diagnostics(cfg)?;
    diagnostics.insert(0, ("status".into(), "ok".into()));
    let fail = |error: AbcError| RunFailure { error, partial: diagnostics.clone() };
    write_samples(&dir.join(SAMPLES_FILE), &out.samples).map_err(fail)?;
    if let Some(log) = &out.log {
        write_log(dir, log).map_err(io_error).map_err(fail)?;
    }
    write_key_values(&dir.join(DIAGNOSTICS_FILE), &diagnostics).map_err(io_error).map_err(fail)?;
    Ok(diagnostics)
}

/// Run `cfg` and write its artifacts into `cfg.output_dir`.
pub fn run_to_dir(cfg: &RunConfiguration) -> RunReport {
    let dir = cfg.output_dir.clone();
    let prepared = fs::create_dir_all(&dir)
        .and_then(|_| {
            // Stale results from an earlier run in the same directory would be misleading.
            for f in [SAMPLES_FILE, DIAGNOSTICS_FILE, ERROR_FILE, "trace.csv", "stage_log.csv"] {
                match fs::remove_file(dir.join(f)) {
                    Err(e) if e.kind() != io::ErrorKind::NotFound => return Err(e),
                    _ => {}
                }
            }
            fs::write(dir.join(MANIFEST_FILE), manifest_text(cfg))
        })
        .map_err(io_error);
    let result = match prepared {
        Ok(()) => write_success(cfg, &dir),
        Err(error) => Err(RunFailure { error, partial: Vec::new() }),
    };
    match result {
        Ok(diagnostics) => RunReport { exit_code: 0, output_dir: dir, error: None, diagnostics },
        Err(RunFailure { error, partial }) => {
            let record = error_record(&error);
            let mut diagnostics = vec![("status".to_string(), "failed".to_string())];
            if partial.is_empty() {
                diagnostics.push(("sampler".into(), cfg.sampler.kind().to_string()));
                diagnostics.push(("seed".into(), cfg.seed.to_string()));
            }
            diagnostics.extend(partial.into_iter().filter(|(k, _)| k != "status"));
            diagnostics.push(("error_class".into(), error_class(&error).to_string()));
            diagnostics.push(("error".into(), error.to_string()));
            // Best effort: the directory itself may be what failed.
            let _ = write_key_values(&dir.join(DIAGNOSTICS_FILE), &diagnostics);
            let _ = fs::write(dir.join(ERROR_FILE), format!("{record}\n"));
            RunReport { exit_code: exit_code(&error), output_dir: dir, error: Some(record), diagnostics }
        }
    }
}
