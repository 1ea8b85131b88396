// SPDX-License-Identifier: Apache-2.0

//! Streaming trace parser.
//!
//! [`TraceReader`] wraps any `BufRead` and yields [`TraceEvent`]s one line
//! at a time, so multi-gigabyte traces parse in constant memory. It owns
//! the toggle state: instruction and stage-marker lines inside an off-span
//! are discarded here and never reach analysis, while toggle markers
//! themselves are always yielded (downstream gap accounting needs their
//! counter values).
//!
//! Malformed input surfaces as [`ParseError`] with a 1-based line number.
//! In [`ParseMode::Strict`] the first error ends the stream; in
//! [`ParseMode::Lenient`] offending lines are skipped and counted.

use std::fmt;
use std::io::BufRead;

use super::{EventKind, MarkerConfig, TraceEvent};
use crate::world::{ExceptionLevel, SecurityState};

/// A malformed trace line (or an I/O failure while reading it).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    /// 1-based line number in the input.
    pub line: usize,
    pub reason: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "trace line {}: {}", self.line, self.reason)
    }
}

impl std::error::Error for ParseError {}

/// Error-handling policy for malformed lines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ParseMode {
    /// First malformed line aborts the stream.
    #[default]
    Strict,
    /// Malformed lines are skipped and counted; see
    /// [`TraceReader::skipped_lines`].
    Lenient,
}

/// Iterator over the kept events of one trace.
pub struct TraceReader<R> {
    input: R,
    markers: MarkerConfig,
    mode: ParseMode,
    line_no: usize,
    enabled: bool,
    /// Highest counter seen on any well-formed line (markers included).
    last_cumulative: Option<u64>,
    /// Counter of the previous instruction line, kept or discarded — the
    /// strict-monotonicity check spans off-spans too, because the counter
    /// is global.
    last_instruction: Option<u64>,
    skipped: usize,
    fused: bool,
    buf: String,
}

impl<R: BufRead> TraceReader<R> {
    pub fn new(input: R, markers: MarkerConfig, mode: ParseMode) -> TraceReader<R> {
        TraceReader {
            input,
            markers,
            mode,
            line_no: 0,
            enabled: true,
            last_cumulative: None,
            last_instruction: None,
            skipped: 0,
            fused: false,
            buf: String::new(),
        }
    }

    /// Lines skipped so far in lenient mode.
    pub fn skipped_lines(&self) -> usize {
        self.skipped
    }

    /// True while tracing is toggled on at the current stream position.
    pub fn tracing_enabled(&self) -> bool {
        self.enabled
    }

    fn fail(&self, reason: impl Into<String>) -> ParseError {
        ParseError {
            line: self.line_no,
            reason: reason.into(),
        }
    }

    /// Parse one non-comment line into an event, enforcing counter
    /// monotonicity but not yet applying toggle filtering.
    fn parse_line(&mut self, line: &str) -> Result<TraceEvent, ParseError> {
        let mut fields = line.split_whitespace();
        let cumulative: u64 = fields
            .next()
            .ok_or_else(|| self.fail("empty line"))?
            .parse()
            .map_err(|e| self.fail(format!("bad cumulative counter: {e}")))?;
        let world_code = fields
            .next()
            .ok_or_else(|| self.fail("missing security state"))?;
        let world = SecurityState::from_code(world_code)
            .ok_or_else(|| self.fail(format!("unknown security state {world_code:?}")))?;
        let el_code = fields
            .next()
            .ok_or_else(|| self.fail("missing exception level"))?;
        let el = ExceptionLevel::from_code(el_code)
            .ok_or_else(|| self.fail(format!("unknown exception level {el_code:?}")))?;
        let pc = fields.next().ok_or_else(|| self.fail("missing pc"))?;
        u64::from_str_radix(pc.trim_start_matches("0x"), 16)
            .map_err(|e| self.fail(format!("bad pc: {e}")))?;

        // Mnemonic: the rest of the line, whitespace-normalized so marker
        // matching is insensitive to column alignment.
        let mnemonic = fields.collect::<Vec<_>>().join(" ");
        if mnemonic.is_empty() {
            return Err(self.fail("missing mnemonic"));
        }
        let kind = self.markers.classify(&mnemonic);

        // The counter never runs backwards, and ordinary instructions must
        // advance it; markers may repeat the current value.
        if let Some(last) = self.last_cumulative {
            if cumulative < last {
                return Err(self.fail(format!(
                    "cumulative counter went backwards ({cumulative} after {last})"
                )));
            }
        }
        if kind == EventKind::Instruction {
            if let Some(last) = self.last_instruction {
                if cumulative <= last {
                    return Err(self.fail(format!(
                        "cumulative counter not strictly increasing across instructions \
                         ({cumulative} after {last})"
                    )));
                }
            }
            self.last_instruction = Some(cumulative);
        }
        self.last_cumulative = Some(cumulative);

        Ok(TraceEvent {
            cumulative,
            world,
            el,
            kind,
        })
    }
}

impl<R: BufRead> Iterator for TraceReader<R> {
    type Item = Result<TraceEvent, ParseError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.fused {
            return None;
        }
        loop {
            self.buf.clear();
            match self.input.read_line(&mut self.buf) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => {
                    self.fused = true;
                    self.line_no += 1;
                    return Some(Err(self.fail(format!("read error: {e}"))));
                }
            }
            self.line_no += 1;
            let line = self.buf.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let buf = std::mem::take(&mut self.buf);
            let parsed = self.parse_line(buf.trim());
            self.buf = buf;
            match parsed {
                Ok(event) => {
                    if event.kind == EventKind::ToggleMarker {
                        // Toggle markers are always yielded; the flip takes
                        // effect after the marker line itself.
                        self.enabled = !self.enabled;
                        return Some(Ok(event));
                    }

                    if !self.enabled {
                        continue; // discarded: outside an enabled span
                    }
                    return Some(Ok(event));
                }
                Err(e) => match self.mode {
                    ParseMode::Strict => {
                        self.fused = true;
                        return Some(Err(e));
                    }
                    ParseMode::Lenient => {
                        self.skipped += 1;
                        continue;
                    }
                },
            }
        }
    }
}

/// Parse an entire in-memory trace, collecting kept events. Convenience for
/// tests and small inputs; large traces should iterate [`TraceReader`].
pub fn parse_trace(
    text: &str,
    markers: &MarkerConfig,
    mode: ParseMode,
) -> Result<Vec<TraceEvent>, ParseError> {
    TraceReader::new(text.as_bytes(), markers.clone(), mode).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::Edge;

    fn parse(text: &str) -> Result<Vec<TraceEvent>, ParseError> {
        parse_trace(text, &MarkerConfig::builtin(), ParseMode::Strict)
    }

    #[test]
    fn three_line_fixture() {
        let events = parse(
            "# demo trace\n\
             100 RL EL0 0x400000 ADD X0, X0, X1\n\
             200 RL EL1 0x400004 LDR X1, [X2]\n\
             200 RL EL1 0x400008 MOV X8, #1\n",
        )
        .unwrap();
        assert_eq!(events.len(), 3);
        assert_eq!(events[0].cumulative, 100);
        assert_eq!(events[0].world, SecurityState::Realm);
        assert_eq!(events[0].el, ExceptionLevel::El0);
        assert_eq!(events[0].kind, EventKind::Instruction);
        assert_eq!(events[1].el, ExceptionLevel::El1);
        assert_eq!(
            events[2].kind,
            EventKind::StageMarker {
                stage: "model_init".into(),
                edge: Edge::Begin
            }
        );
        // Markers may repeat the instruction counter.
        assert_eq!(events[2].cumulative, 200);
    }

    #[test]
    fn non_monotonic_counter_is_an_error() {
        let err = parse(
            "100 NS EL0 0x0 NOP\n\
             99 NS EL0 0x4 NOP\n",
        )
        .unwrap_err();
        assert_eq!(err.line, 2);
        assert!(err.reason.contains("backwards"), "{}", err.reason);

        // Equal counters on two instructions are also rejected.
        let err = parse(
            "100 NS EL0 0x0 NOP\n\
             100 NS EL0 0x4 NOP\n",
        )
        .unwrap_err();
        assert!(err.reason.contains("strictly increasing"), "{}", err.reason);
    }

    #[test]
    fn malformed_lines_reported_with_line_number() {
        for (text, needle) in [
            ("abc NS EL0 0x0 NOP", "bad cumulative"),
            ("1 XX EL0 0x0 NOP", "unknown security state"),
            ("1 NS EL9 0x0 NOP", "unknown exception level"),
            ("1 NS EL0 zz NOP", "bad pc"),
            ("1 NS EL0 0x0", "missing mnemonic"),
            ("1 NS", "missing exception level"),
        ] {
            let text = format!("# leading comment\n{text}\n");
            let err = parse(&text).unwrap_err();
            assert_eq!(err.line, 2, "{text:?}");
            assert!(err.reason.contains(needle), "{:?} → {}", text, err.reason);
        }
    }

    #[test]
    fn lenient_mode_skips_and_counts() {
        let mut reader = TraceReader::new(
            "100 NS EL0 0x0 NOP\n\
             broken line\n\
             50 NS EL0 0x4 NOP\n\
             200 NS EL0 0x8 NOP\n"
                .as_bytes(),
            MarkerConfig::builtin(),
            ParseMode::Lenient,
        );
        let events: Vec<_> = reader.by_ref().collect::<Result<_, _>>().unwrap();
        assert_eq!(events.len(), 2);
        assert_eq!(events[1].cumulative, 200);
        assert_eq!(reader.skipped_lines(), 2); // malformed + non-monotonic
    }

    #[test]
    fn toggle_discards_in_between_events() {
        let events = parse(
            "100 RL EL0 0x0 NOP\n\
             110 RL EL0 0x4 HLT 0x1337\n\
             500 NS EL2 0x8 NOP\n\
             900 RL EL0 0xc MOV X8, #1\n\
             1000 RL EL0 0x10 HLT 0x1337\n\
             1100 RL EL0 0x14 NOP\n",
        )
        .unwrap();
        // Kept: instruction, toggle-off, toggle-on, instruction. The
        // instruction and the stage marker inside the off-span are gone.
        assert_eq!(events.len(), 4);
        assert_eq!(events[1].kind, EventKind::ToggleMarker);
        assert_eq!(events[2].kind, EventKind::ToggleMarker);
        assert_eq!(events[2].cumulative, 1000);
        assert_eq!(events[3].cumulative, 1100);
    }

    #[test]
    fn counter_monotonicity_enforced_across_off_spans() {
        // The counter is global: an instruction inside an off-span still
        // advances it, and a later regression is an error even though the
        // offending line would have been discarded.
        let err = parse(
            "100 RL EL0 0x0 NOP\n\
             110 RL EL0 0x4 HLT 0x1337\n\
             500 NS EL2 0x8 NOP\n\
             400 NS EL2 0xc NOP\n",
        )
        .unwrap_err();
        assert_eq!(err.line, 4);
    }

    #[test]
    fn pc_prefix_is_optional() {
        let events = parse("1 NS EL0 400000 NOP\n").unwrap();
        assert_eq!(events.len(), 1);
    }
}
