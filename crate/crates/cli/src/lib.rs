//! Batch driver for the spectral Φ⁴ studies.
//!
//! A run reads a flat config, executes one study, and writes
//! `{study}_{table}.csv` tables, optional binary paths, and a
//! `{study}_summary.json` holding the config echo and every check.

pub mod config;
pub mod error;
pub mod report;
pub mod studies;

use std::fs;
use std::path::Path;

use hphi4_core::diagrams::persist_driver_set;
use hphi4_core::noise::{write_path, GENERATOR_ID};

pub use config::Config;
pub use error::CliError;
pub use report::{verify, Check, Comparator, Summary, Table};
pub use studies::STUDIES;

/// Runs `study` and writes its artifacts under `out`.
///
/// The summary is written even when checks fail; callers decide the
/// exit status from [`Summary::failed`].
pub fn run(study: &str, cfg: &Config, out: &Path) -> Result<Summary, CliError> {
    if !STUDIES.contains(&study) {
        return Err(CliError::config(
            None,
            study,
            &format!("unknown study; expected one of {}", STUDIES.join(", ")),
        ));
    }
    let res = studies::run_study(study, cfg)?;
    fs::create_dir_all(out).map_err(|e| CliError::Io(format!("{}: {e}", out.display())))?;
    let mut outputs = Vec::new();
    for t in &res.tables {
        let name = format!("{study}_{}.csv", t.name);
        t.write(&out.join(&name))?;
        outputs.push(name);
    }
    for p in &res.paths {
        write_path(&out.join(&p.file), &p.header, &p.path)?;
        outputs.push(p.file.clone());
    }
    for (set, seed, replica) in &res.driver_sets {
        let m = persist_driver_set(&out.join("drivers"), set, *seed, *replica)?;
        let rel = m.strip_prefix(out).unwrap_or(&m);
        outputs.push(rel.display().to_string());
    }
    let summary = Summary {
        study: study.to_string(),
        config: cfg.echo(),
        generator: format!("hphi4 {} / {GENERATOR_ID}", env!("CARGO_PKG_VERSION")),
        checks: res.checks,
        results: res.results,
        outputs,
    };
    summary.write(&out.join(format!("{study}_summary.json")))?;
    Ok(summary)
}
