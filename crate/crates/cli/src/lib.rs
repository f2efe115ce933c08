//! Command-line driver: configuration parsing, experiment orchestration and
//! CSV/JSON export.

// `!(x > 0.0)` is deliberate: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod output;

use std::path::PathBuf;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::json;

use crate::commands::{Failure, Report};
use crate::config::{parse_config, Config};
use crate::output::OutputDir;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum VerifyKind {
    Mckean,
    Moments,
    Lemmas,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "name", content = "target")]
pub enum Command {
    Solve,
    Bbm,
    Theory,
    Front,
    Verify(VerifyKind),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunManifest {
    pub command: Command,
    pub config_path: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: u64,
    pub overrides: Vec<String>,
    pub threads: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub exit_code: i32,
    pub reason: Option<String>,
}

fn load(manifest: &RunManifest) -> Result<Config, Failure> {
    let text = match &manifest.config_path {
        Some(p) => {
            std::fs::read_to_string(p).map_err(|e| Failure::Config(format!("cannot read {}: {e}", p.display())))?
        }
        None => String::new(),
    };
    parse_config(&text, &manifest.overrides).map_err(|e| Failure::Config(e.to_string()))
}

fn dispatch(command: Command, cfg: &Config, seed: u64, out: &mut OutputDir) -> Result<Report, Failure> {
    match command {
        Command::Solve => commands::solve(cfg, out),
        Command::Front => commands::front(cfg, out),
        Command::Bbm => commands::bbm(cfg, seed, out),
        Command::Theory => commands::theory_cmd(cfg, out),
        Command::Verify(VerifyKind::Mckean) => commands::verify_mckean(cfg, seed, out),
        Command::Verify(VerifyKind::Moments) => commands::verify_moments(cfg, seed, out),
        Command::Verify(VerifyKind::Lemmas) => commands::verify_lemmas(cfg, seed, out),
    }
}

/// Runs one manifest. Exit codes: 0 success, 1 configuration error,
/// 2 numerical failure, 3 verification failure.
pub fn run_command(manifest: &RunManifest) -> Outcome {
    let mut out = match OutputDir::create(&manifest.out) {
        Ok(o) => o,
        Err(e) => return Outcome { exit_code: 1, reason: Some(format!("cannot create output directory: {e}")) },
    };
    let config = load(manifest);
    let (echo, result) = match &config {
        Ok(cfg) => (Some(cfg.to_toml()), dispatch(manifest.command, cfg, manifest.seed, &mut out)),
        Err(f) => (None, Err(f.clone())),
    };
    let (status, exit_code, reason, summary) = match result {
        Ok(Report { summary, failed: None }) => ("ok", 0, None, summary),
        Ok(Report { summary, failed: Some(r) }) => ("verification-failure", 3, Some(r), summary),
        Err(f) => (f.status(), f.exit_code(), Some(f.reason().to_string()), serde_json::Value::Null),
    };
    let created = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let finished = out.finish(|files| {
        json!({
            "manifest": manifest,
            "config": echo,
            "status": status,
            "exit_code": exit_code,
            "reason": reason,
            "outputs": files,
            "summary": summary,
            "created_unix": created,
        })
    });
    match finished {
        Ok(_) => Outcome { exit_code, reason },
        Err(e) => Outcome {
            exit_code: if exit_code == 0 { 1 } else { exit_code },
            reason: Some(format!("cannot finalize output: {e}")),
        },
    }
}
