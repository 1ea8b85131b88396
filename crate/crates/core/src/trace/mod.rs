// SPDX-License-Identifier: Apache-2.0

//! Marker-annotated instruction-trace parsing and analysis.
//!
//! Traces are line-oriented text. Each line reports the core's cumulative
//! instruction counter, its security state and exception level, a program
//! counter, and the instruction mnemonic:
//!
//! ```text
//! # comment lines and blank lines are skipped
//! 1000 RL EL0 0x400000 ADD X0, X0, X1
//! 1001 RL EL0 0x400004 MOV X8, #1
//! ```
//!
//! The counter is *global*: it keeps advancing while tracing is toggled
//! off. A line's delta (counter minus the previous instruction line's
//! counter) is attributed to the context the line reports, so a sparse
//! trace — one line summarizing a run of instructions — analyzes exactly
//! like a dense one.
//!
//! Two marker families, recognized by exact mnemonic match:
//!
//! - the *toggle* marker (default `HLT 0x1337`) flips tracing on/off;
//!   tracing starts enabled, and instructions inside an off-span never
//!   reach any report;
//! - *stage* markers (default `MOV X8, #1` … `MOV X8, #8`) bracket the
//!   four service stages, odd immediate = begin, even = end.
//!
//! Parsing is streaming ([`parse::TraceReader`] works line by line off any
//! `BufRead`), so memory use is independent of trace length. Analysis
//! ([`analyze`]) segments stages, attributes instruction counts to
//! (world, exception-level) contexts, aggregates repeated runs, and
//! computes realm-vs-normal overhead tables ([`report`]).

pub mod analyze;
pub mod parse;
pub mod report;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::world::{ExceptionLevel, SecurityState};

pub use analyze::{
    aggregate, analyze, attribute, overhead, segment, AnalyzeError, Analyzer, OverheadReport,
    OverheadRow, Stat, StageReport, TraceAnalysis,
};
pub use parse::{parse_trace, ParseError, ParseMode, TraceReader};
pub use report::{format_millions, render_overhead, render_stage_report, ReportFormat};

/// Canonical names of the four service stages, in execution order.
pub const STAGE_NAMES: [&str; 4] = [
    "model_init",
    "read_input",
    "inference_compute",
    "write_output",
];

/// An execution context: which world and exception level the core was in.
pub type Context = (SecurityState, ExceptionLevel);

/// Render a context as the stable label used in reports, e.g. `realm/EL0`.
pub fn context_label(ctx: Context) -> String {
    format!("{}/{}", ctx.0, ctx.1)
}

/// Whether a stage marker opens or closes its stage window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Edge {
    Begin,
    End,
}

/// Classification of one trace line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EventKind {
    /// Ordinary instruction (or a sparse line summarizing a run of them).
    Instruction,
    /// Tracing toggle marker; flips the enabled state after this line.
    ToggleMarker,
    /// Stage boundary marker.
    StageMarker { stage: String, edge: Edge },
}

/// One parsed trace line that survived toggle filtering.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEvent {
    /// Total instructions executed so far, including while tracing was off.
    pub cumulative: u64,
    pub world: SecurityState,
    pub el: ExceptionLevel,
    pub kind: EventKind,
}

/// How a mnemonic maps onto a stage boundary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StagePattern {
    pub stage: String,
    pub edge: Edge,
}

/// Marker recognition table: exact mnemonic text → meaning.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarkerConfig {
    /// Mnemonic that flips tracing on/off.
    pub toggle_pattern: String,
    /// Mnemonic → stage boundary. Keys must not collide with
    /// `toggle_pattern`.
    pub stage_patterns: BTreeMap<String, StagePattern>,
}

impl MarkerConfig {
    /// The built-in convention: `HLT 0x1337` toggles tracing and
    /// `MOV X8, #1` … `MOV X8, #8` bracket the four stages (odd = begin,
    /// even = end).
    pub fn builtin() -> MarkerConfig {
        let mut stage_patterns = BTreeMap::new();
        for (i, stage) in STAGE_NAMES.iter().enumerate() {
            stage_patterns.insert(
                format!("MOV X8, #{}", 2 * i + 1),
                StagePattern {
                    stage: (*stage).to_string(),
                    edge: Edge::Begin,
                },
            );
            stage_patterns.insert(
                format!("MOV X8, #{}", 2 * i + 2),
                StagePattern {
                    stage: (*stage).to_string(),
                    edge: Edge::End,
                },
            );
        }
        MarkerConfig {
            toggle_pattern: "HLT 0x1337".to_string(),
            stage_patterns,
        }
    }

    /// Check the mutual-exclusion invariant; call after deserializing a
    /// user-supplied config.
    pub fn validate(&self) -> Result<(), MarkerConfigError> {
        if self.stage_patterns.contains_key(&self.toggle_pattern) {
            return Err(MarkerConfigError {
                pattern: self.toggle_pattern.clone(),
            });
        }
        Ok(())
    }

    /// Classify a mnemonic.
    pub fn classify(&self, mnemonic: &str) -> EventKind {
        if mnemonic == self.toggle_pattern {
            return EventKind::ToggleMarker;
        }
        match self.stage_patterns.get(mnemonic) {
            Some(p) => EventKind::StageMarker {
                stage: p.stage.clone(),
                edge: p.edge,
            },
            None => EventKind::Instruction,
        }
    }

    /// Mnemonic for a stage boundary, if the config defines one.
    pub fn pattern_for(&self, stage: &str, edge: Edge) -> Option<&str> {
        self.stage_patterns
            .iter()
            .find(|(_, p)| p.stage == stage && p.edge == edge)
            .map(|(k, _)| k.as_str())
    }
}

impl Default for MarkerConfig {
    fn default() -> MarkerConfig {
        MarkerConfig::builtin()
    }
}

/// A marker pattern was declared as both toggle and stage boundary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MarkerConfigError {
    pub pattern: String,
}

impl fmt::Display for MarkerConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "marker pattern {:?} is declared as both toggle and stage boundary",
            self.pattern
        )
    }
}

impl std::error::Error for MarkerConfigError {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_config_is_valid_and_classifies() {
        let cfg = MarkerConfig::builtin();
        cfg.validate().unwrap();
        assert_eq!(cfg.classify("HLT 0x1337"), EventKind::ToggleMarker);
        assert_eq!(
            cfg.classify("MOV X8, #1"),
            EventKind::StageMarker {
                stage: "model_init".into(),
                edge: Edge::Begin
            }
        );
        assert_eq!(
            cfg.classify("MOV X8, #8"),
            EventKind::StageMarker {
                stage: "write_output".into(),
                edge: Edge::End
            }
        );
        assert_eq!(cfg.classify("ADD X0, X0, X1"), EventKind::Instruction);
        // Near-misses are ordinary instructions, not markers.
        assert_eq!(cfg.classify("MOV X8, #9"), EventKind::Instruction);
        assert_eq!(cfg.classify("HLT 0x1338"), EventKind::Instruction);
        assert_eq!(cfg.pattern_for("read_input", Edge::Begin), Some("MOV X8, #3"));
    }

    #[test]
    fn colliding_patterns_rejected() {
        let mut cfg = MarkerConfig::builtin();
        cfg.toggle_pattern = "MOV X8, #1".to_string();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn config_json_round_trips() {
        let cfg = MarkerConfig::builtin();
        let json = serde_json::to_string_pretty(&cfg).unwrap();
        let back: MarkerConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, cfg);
    }
}
