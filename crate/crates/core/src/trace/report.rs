// SPDX-License-Identifier: Apache-2.0

//! Report rendering: serialize [`StageReport`] and [`OverheadReport`] to
//! CSV (display-oriented) or JSON (full precision, machine-oriented).

use std::fmt;
use std::str::FromStr;

use super::analyze::{OverheadReport, Stat, StageReport};

/// Output encoding for rendered reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl fmt::Display for ReportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Json => "json",
        })
    }
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<ReportFormat, String> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(format!("unknown report format {other:?} (expected csv or json)")),
        }
    }
}

/// Format a raw instruction count in millions: two decimals, then drop a
/// single trailing zero (at least one decimal always remains). This matches
/// the precision convention of the reference measurement tables:
/// `105.9`, `0.15`, `240.14`, `0.04`.
pub fn format_millions(instructions: f64) -> String {
    let mut s = format!("{:.2}", instructions / 1_000_000.0);
    if s.ends_with('0') {
        s.pop();
    }
    s
}

/// Quote a CSV field only when it needs it.
fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Render an aggregated run report.
///
/// CSV is long-format, one row per measured quantity, raw instruction
/// units: `kind,label,mean,stddev,min,max` with `kind` one of `stage`,
/// `context`, `total`. JSON is the full structure, full precision.
pub fn render_stage_report(report: &StageReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            let mut s =
                serde_json::to_string_pretty(report).expect("report serialization cannot fail");
            s.push('\n');
            s
        }
        ReportFormat::Csv => {
            let mut out = String::from("kind,label,mean,stddev,min,max\n");
            let mut push = |kind: &str, label: &str, stat: &Stat| {
                out.push_str(&format!(
                    "{kind},{},{},{},{},{}\n",
                    csv_field(label),
                    stat.mean,
                    stat.stddev,
                    stat.min,
                    stat.max
                ));
            };
            for (stage, stat) in &report.per_stage {
                push("stage", stage, stat);
            }
            for (ctx, stat) in &report.per_context {
                push("context", ctx, stat);
            }
            push("total", "total", &report.total);
            out
        }
    }
}

/// Render a realm-vs-normal overhead report.
///
/// CSV is one wide row mirroring the published comparison tables: the
/// normal-world block, then the realm block (means in millions of
/// instructions), then the total overhead as an integer percentage. JSON
/// is the row list, full precision.
pub fn render_overhead(report: &OverheadReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            let mut s =
                serde_json::to_string_pretty(report).expect("report serialization cannot fail");
            s.push('\n');
            s
        }
        ReportFormat::Csv => {
            let mut header = Vec::new();
            let mut values = Vec::new();
            for row in &report.rows {
                header.push(csv_field(&format!("nw_{}", row.label)));
                values.push(format_millions(row.nw_mean));
            }
            for row in &report.rows {
                header.push(csv_field(&format!("realm_{}", row.label)));
                values.push(format_millions(row.realm_mean));
            }
            header.push("overhead_pct".to_string());
            let total_ovh = report
                .rows
                .iter()
                .find(|r| r.label == "total")
                .map(|r| r.overhead_pct)
                .unwrap_or(0.0);
            values.push(format!("{total_ovh:.0}"));
            format!("{}\n{}\n", header.join(","), values.join(","))
        }
    }
}
