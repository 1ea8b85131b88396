// SPDX-License-Identifier: Apache-2.0

//! Render a [`SimResult`] as a synthetic instruction trace.
//!
//! The emitted text is valid input for the `trace` module and analyzes
//! back to the result exactly: one summarizing instruction line per
//! non-zero (stage, context) cell, bracketed by the stage's begin/end
//! markers. A baseline instruction line at counter 0 anchors delta
//! attribution; markers are emitted with a zero delta so they never carry
//! instruction counts. The final line's cumulative counter equals the
//! result's total.

use std::fmt;
use std::fmt::Write as _;

use crate::trace::{Edge, EventKind, MarkerConfig};
use crate::world::{ExceptionLevel, SecurityState};

use super::SimResult;

/// The marker table cannot express a stage present in the result.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EmitError {
    MissingPattern { stage: String, edge: Edge },
}

impl fmt::Display for EmitError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EmitError::MissingPattern { stage, edge } => write!(
                f,
                "marker config has no {} pattern for stage {stage:?}",
                match edge {
                    Edge::Begin => "begin",
                    Edge::End => "end",
                }
            ),
        }
    }
}

impl std::error::Error for EmitError {}

/// An instruction mnemonic the marker table will not misread as a marker.
fn plain_mnemonic(markers: &MarkerConfig) -> String {
    for candidate in ["NOP", "MOV X0, X0", "ADD X0, X0, #0"] {
        if matches!(markers.classify(candidate), EventKind::Instruction) {
            return candidate.to_string();
        }
    }
    // Degenerate configs: extend until free.
    let mut s = "NOP".to_string();
    while !matches!(markers.classify(&s), EventKind::Instruction) {
        s.push('_');
    }
    s
}

/// Serialize `result` as trace text whose analysis reproduces it exactly.
pub fn emit_trace(result: &SimResult, markers: &MarkerConfig) -> Result<String, EmitError> {
    // Fail before emitting anything if a stage has no marker vocabulary.
    for stage in &result.stages {
        for edge in [Edge::Begin, Edge::End] {
            if markers.pattern_for(stage, edge).is_none() {
                return Err(EmitError::MissingPattern {
                    stage: stage.clone(),
                    edge,
                });
            }
        }
    }

    let mnemonic = plain_mnemonic(markers);
    let mut out = String::new();
    let mut cumulative: u64 = 0;
    let mut line_no: u64 = 0;
    // Markers inherit the context of whatever ran last, like real sentinel
    // instructions would; the baseline anchors that at the hypervisor.
    let mut ctx = (SecurityState::Normal, ExceptionLevel::El2);

    let line = |cum: u64,
                (world, el): (SecurityState, ExceptionLevel),
                text: &str,
                out: &mut String,
                line_no: &mut u64| {
        writeln!(
            out,
            "{cum} {} {} {:#x} {text}",
            world.code(),
            el.code(),
            0x1000u64 + 4 * *line_no
        )
        .expect("string write");
        *line_no += 1;
    };

    // Baseline instruction: contributes nothing, establishes the counter.
    line(cumulative, ctx, &mnemonic, &mut out, &mut line_no);

    for stage in &result.stages {
        let begin = markers
            .pattern_for(stage, Edge::Begin)
            .expect("checked above")
            .to_string();
        let end = markers
            .pattern_for(stage, Edge::End)
            .expect("checked above")
            .to_string();
        line(cumulative, ctx, &begin, &mut out, &mut line_no);
        for cell in result.cells.iter().filter(|c| &c.stage == stage) {
            if cell.instructions == 0 {
                continue;
            }
            cumulative += cell.instructions;
            ctx = (cell.world, cell.el);
            line(cumulative, ctx, &mnemonic, &mut out, &mut line_no);
        }
        line(cumulative, ctx, &end, &mut out, &mut line_no);
    }
    Ok(out)
}
