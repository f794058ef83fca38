//! Fixed-schema CSV output for sweep cells.
//!
//! One file per cell. Each seed contributes its per-stride metric rows
//! followed by one summary row. Schema (versioned, see `CSV_HEADER`):
//!
//! ```text
//! step,t,grad_phi_sq,moreau_grad_sq,phi_gap,delta_x,delta_y,comm_rounds_so_far
//! ```
//!
//! For metric rows `step` is the 1-based record ordinal within the seed
//! block and `t` the iteration index. The summary row has `step = summary`,
//! `t = seed`, time-means in the metric columns (final value for phi_gap)
//! and total communication rounds in the last column. Missing metrics are
//! written as empty fields, never zeros, so they cannot corrupt rate fits.
//! Output is RFC-4180 with '.' decimals and LF line endings; all runs are
//! deterministic so reruns produce byte-identical files.

use crate::algorithms::Trace;
use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "step,t,grad_phi_sq,moreau_grad_sq,phi_gap,delta_x,delta_y,comm_rounds_so_far";

fn field(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x}"),
        None => String::new(),
    }
}

/// Serializes one cell: per-seed metric rows plus a summary row per seed.
pub fn write_cell_csv(traces: &[(u64, Trace)]) -> String {
    let mut out = String::new();
    out.push_str(CSV_HEADER);
    out.push('\n');
    for (seed, trace) in traces {
        for (ordinal, r) in trace.records.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                ordinal + 1,
                r.step,
                field(r.grad_phi_norm_sq),
                field(r.moreau_grad_norm_sq),
                field(r.phi_gap),
                r.sync_err_x,
                r.sync_err_y,
                r.comm_rounds
            ));
        }
        let s = &trace.summary;
        out.push_str(&format!(
            "summary,{},{},{},{},{},{},{}\n",
            seed,
            field(s.time_mean_grad_phi_sq),
            field(s.time_mean_moreau_sq),
            field(trace.records.last().and_then(|r| r.phi_gap)),
            s.time_mean_sync_x,
            s.time_mean_sync_y,
            s.comm_rounds
        ));
    }
    out
}

/// One parsed metric row.
#[derive(Clone, Debug)]
pub struct CsvRow {
    pub ordinal: usize,
    pub t: usize,
    pub grad_phi_sq: Option<f64>,
    pub moreau_grad_sq: Option<f64>,
    pub phi_gap: Option<f64>,
    pub delta_x: f64,
    pub delta_y: f64,
    pub comm_rounds: f64,
}

/// Rows and summary of one seed inside a cell file.
#[derive(Clone, Debug)]
pub struct SeedBlock {
    pub seed: u64,
    pub rows: Vec<CsvRow>,
}

fn parse_opt(s: &str, line: usize) -> Result<Option<f64>> {
    if s.is_empty() {
        return Ok(None);
    }
    s.parse::<f64>()
        .map(Some)
        .map_err(|e| Error::InvalidConfig(format!("csv line {line}: bad float '{s}': {e}")))
}

fn parse_req(s: &str, line: usize) -> Result<f64> {
    parse_opt(s, line)?
        .ok_or_else(|| Error::InvalidConfig(format!("csv line {line}: missing required field")))
}

/// Parses a cell file back into per-seed blocks.
pub fn parse_cell_csv(text: &str) -> Result<Vec<SeedBlock>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == CSV_HEADER => {}
        other => {
            return Err(Error::InvalidConfig(format!(
                "unexpected csv header: {:?}",
                other.map(|(_, h)| h)
            )))
        }
    }
    let mut blocks = Vec::new();
    let mut current: Vec<CsvRow> = Vec::new();
    for (idx, line) in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(Error::InvalidConfig(format!(
                "csv line {idx}: expected 8 fields, got {}",
                fields.len()
            )));
        }
        if fields[0] == "summary" {
            let seed: u64 = fields[1]
                .parse()
                .map_err(|e| Error::InvalidConfig(format!("csv line {idx}: bad seed: {e}")))?;
            blocks.push(SeedBlock {
                seed,
                rows: std::mem::take(&mut current),
            });
        } else {
            current.push(CsvRow {
                ordinal: fields[0]
                    .parse()
                    .map_err(|e| Error::InvalidConfig(format!("csv line {idx}: bad ordinal: {e}")))?,
                t: fields[1]
                    .parse()
                    .map_err(|e| Error::InvalidConfig(format!("csv line {idx}: bad step: {e}")))?,
                grad_phi_sq: parse_opt(fields[2], idx)?,
                moreau_grad_sq: parse_opt(fields[3], idx)?,
                phi_gap: parse_opt(fields[4], idx)?,
                delta_x: parse_req(fields[5], idx)?,
                delta_y: parse_req(fields[6], idx)?,
                comm_rounds: parse_req(fields[7], idx)?,
            });
        }
    }
    if !current.is_empty() {
        return Err(Error::InvalidConfig(
            "trailing metric rows without a summary row".into(),
        ));
    }
    Ok(blocks)
}
