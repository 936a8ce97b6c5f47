use std::fs;
use std::io::{self, Write};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::{Breach, Command, Flags};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

pub struct Table {
    pub file: &'static str,
    pub csv: String,
}

/// What a command produced, before it is written out.
pub struct Outcome {
    /// Effective configuration after command-line overrides.
    pub config: Value,
    pub seed: Option<u64>,
    pub result: Value,
    pub tables: Vec<Table>,
    pub summary: String,
    pub breaches: Vec<String>,
    pub started: Instant,
}

#[derive(Serialize)]
pub struct RunReport<'a> {
    pub schema_version: u32,
    pub command: &'a str,
    pub version: &'a str,
    pub config_hash: String,
    pub config: &'a Value,
    pub seed: Option<u64>,
    pub workers: usize,
    pub ok: bool,
    pub breaches: &'a [String],
    pub timing: Timing,
    pub result: &'a Value,
}

#[derive(Serialize)]
pub struct Timing {
    pub elapsed_ms: f64,
}

pub fn to_csv<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    Ok(String::from_utf8(w.into_inner().context("flushing CSV")?)?)
}

pub fn config_hash(config: &Value) -> String {
    let digest = Sha256::digest(config.to_string().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes to stdout; a closed pipe (for example `| head`) is not an error.
fn write_stdout(text: &str) -> Result<()> {
    let mut lock = io::stdout().lock();
    match lock.write_all(text.as_bytes()).and_then(|_| lock.flush()) {
        Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

pub fn emit(command: Command, flags: &Flags, workers: usize, out: Outcome) -> Result<()> {
    let report = RunReport {
        schema_version: REPORT_SCHEMA_VERSION,
        command: command.name(),
        version: env!("CARGO_PKG_VERSION"),
        config_hash: config_hash(&out.config),
        config: &out.config,
        seed: out.seed,
        workers,
        ok: out.breaches.is_empty(),
        breaches: &out.breaches,
        timing: Timing {
            elapsed_ms: out.started.elapsed().as_secs_f64() * 1e3,
        },
        result: &out.result,
    };
    let text = serde_json::to_string_pretty(&report)?;
    match &flags.out {
        Some(dir) => {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            fs::write(dir.join("report.json"), format!("{text}\n"))?;
            for t in &out.tables {
                fs::write(dir.join(t.file), &t.csv)?;
            }
            write_stdout(&format!("{}report written to {}\n", out.summary, dir.join("report.json").display()))?;
        }
        None => write_stdout(&format!("{text}\n"))?,
    }
    if out.breaches.is_empty() {
        Ok(())
    } else {
        Err(Breach(out.breaches.join("; ")).into())
    }
}
