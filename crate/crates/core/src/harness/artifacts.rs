//! Trace files written for every run.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use super::plant::VoltageRow;
use super::report::{ElectionRecord, RunReport};
use crate::chain::Block;
use crate::control::DerId;
use crate::costs::CostRow;
use crate::digest::Hash32;

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

pub const ARTIFACTS: [&str; 5] =
    ["voltage_trace.csv", "election_trace.csv", "cost_report.csv", "chain_dump.jsonl", "summary.json"];

#[derive(Serialize)]
struct DumpUpdate {
    kind: String,
    author: DerId,
    period: u64,
    amount: Option<u64>,
}

#[derive(Serialize)]
struct DumpBlock {
    height: u64,
    hash: Hash32,
    parent: Hash32,
    miner: DerId,
    n_updates: usize,
    updates: Vec<DumpUpdate>,
}

pub fn chain_dump_line(b: &Block) -> String {
    let dump = DumpBlock {
        height: b.height,
        hash: b.hash,
        parent: b.parent,
        miner: b.miner,
        n_updates: b.updates.len(),
        updates: b
            .updates
            .iter()
            .map(|u| DumpUpdate {
                kind: u.kind().to_string(),
                author: u.author,
                period: u.period,
                amount: u.action.amount().map(|c| c.0),
            })
            .collect(),
    };
    serde_json::to_string(&dump).expect("dump is serializable")
}

fn csv<T>(header: &str, rows: &[T], line: fn(&T) -> String) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(header);
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{}", line(r));
    }
    out
}

/// Writes all trace files into `dir` (created if missing) and returns their
/// paths. Output is a pure function of the report.
pub fn emit_artifacts(report: &RunReport, dir: &Path) -> Result<Vec<PathBuf>, ArtifactError> {
    let io = |path: &Path| {
        let path = path.display().to_string();
        move |source| ArtifactError::Io { path, source }
    };
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    let mut dump = String::new();
    for b in &report.chain_dump {
        dump.push_str(&chain_dump_line(b));
        dump.push('\n');
    }
    let mut summary = serde_json::to_string_pretty(&report.summary()).expect("summary is serializable");
    summary.push('\n');
    let contents = [
        csv(VoltageRow::HEADER, &report.voltage, VoltageRow::to_csv),
        csv(ElectionRecord::HEADER, &report.elections, ElectionRecord::to_csv),
        csv(CostRow::HEADER, &report.costs.rows, CostRow::to_csv),
        dump,
        summary,
    ];
    let mut paths = Vec::new();
    for (name, body) in ARTIFACTS.iter().zip(contents) {
        let path = dir.join(name);
        std::fs::write(&path, body).map_err(io(&path))?;
        paths.push(path);
    }
    Ok(paths)
}
