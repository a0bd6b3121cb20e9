//! CSV writers. Line 1 of every file is a `#` comment carrying the schema
//! version, tool version and config hash; the resolved config follows as
//! further `#` lines, then the column header.

use crate::config::ConfigFile;
use scfde::powalloc::TraceRow;
use scfde::simulator::{Design, MetricsRecord};
use std::fmt::Write as _;

pub const SCHEMA_VERSION: u32 = 1;
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn preamble(kind: &str, file: &ConfigFile) -> String {
    let mut out = format!(
        "# scfde {kind} schema_version={SCHEMA_VERSION} tool_version={TOOL_VERSION} config_sha256={}\n",
        file.hash()
    );
    for line in file.canonical().lines().filter(|l| !l.is_empty()) {
        let _ = writeln!(out, "# {line}");
    }
    out
}

fn stream_columns(prefix: &str, m: usize) -> impl Iterator<Item = String> + '_ {
    (0..m).map(move |s| format!("{prefix}_{s}"))
}

pub fn sweep_header(m: usize) -> String {
    let mut cols: Vec<String> =
        ["config_sha256", "scheme", "criterion", "receiver", "source_snr_db", "relay_snr_db", "ber", "ber_std_err"]
            .into_iter()
            .map(String::from)
            .collect();
    cols.extend(stream_columns("empirical_mse", m));
    cols.extend(stream_columns("empirical_mse_std_err", m));
    cols.extend(stream_columns("analytic_mse", m));
    cols.extend(
        ["capacity", "gmse_objective", "solver_iterations", "realizations", "skipped", "blocks", "bits", "bit_errors"]
            .into_iter()
            .map(String::from),
    );
    cols.join(",")
}

fn num(v: f64) -> String {
    format!("{v:e}")
}

pub fn sweep_row(hash: &str, source_snr_db: f64, r: &MetricsRecord) -> String {
    let d = r.design;
    let mut cols = vec![
        hash.to_string(),
        d.scheme.to_string(),
        d.criterion.to_string(),
        d.receiver.to_string(),
        num(source_snr_db),
        num(r.relay_snr_db),
        num(r.ber),
        num(r.ber_std_err),
    ];
    cols.extend(r.empirical_mse.mean.iter().map(|&v| num(v)));
    cols.extend(r.empirical_mse.std_err.iter().map(|&v| num(v)));
    cols.extend(r.analytic_mse.iter().map(|&v| num(v)));
    cols.extend([
        num(r.capacity),
        num(r.gmse_objective),
        num(r.mean_solver_iterations),
        r.realizations.to_string(),
        r.skipped.to_string(),
        r.blocks.to_string(),
        r.bits.to_string(),
        r.bit_errors.to_string(),
    ]);
    cols.join(",")
}

pub fn trace_header() -> String {
    format!("scheme,criterion,receiver,relay_snr_db,{}", TraceRow::CSV_HEADER)
}

pub fn trace_row(design: &Design, relay_snr_db: f64, row: &TraceRow) -> String {
    format!("{},{},{},{},{}", design.scheme, design.criterion, design.receiver, num(relay_snr_db), row.to_csv())
}
