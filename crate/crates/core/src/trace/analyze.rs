// SPDX-License-Identifier: Apache-2.0

//! Trace analysis: stage segmentation, per-context attribution, cross-run
//! aggregation, and overhead computation.
//!
//! Attribution is delta-based. Within each enabled span, the first
//! instruction line is the baseline and contributes nothing; every later
//! instruction line contributes `cumulative − previous instruction's
//! cumulative` to the context *it* reports. Toggling tracing off and on
//! resets the baseline, so instructions executed inside an off-span are
//! never attributed to anything. Marker lines never contribute counts (the
//! emitter writes them with a zero delta), but stage markers' counter
//! values bound the stage windows, and toggle markers' counter values
//! measure the gap to subtract from a window that spans an off-period.

use std::collections::BTreeMap;
use std::fmt;

use super::{context_label, Context, Edge, EventKind, TraceEvent};

/// Structural errors in a trace's marker layout or in multi-run input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AnalyzeError {
    /// A stage end without a matching begin, or a begin left open at end
    /// of trace.
    UnbalancedMarkers { stage: String },
    /// A stage begin while another stage window is still open.
    OverlappingStages { open: String, new: String },
    /// No runs to aggregate.
    EmptyInput,
    /// Runs disagree on their stage sets.
    StageMismatch { missing: String },
    /// Overhead against a zero normal-world mean is undefined.
    DivisionByZero { label: String },
}

impl fmt::Display for AnalyzeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AnalyzeError::UnbalancedMarkers { stage } => {
                write!(f, "unbalanced begin/end markers for stage {stage:?}")
            }
            AnalyzeError::OverlappingStages { open, new } => {
                write!(f, "stage {new:?} begins while {open:?} is still open")
            }
            AnalyzeError::EmptyInput => write!(f, "no runs to aggregate"),
            AnalyzeError::StageMismatch { missing } => {
                write!(f, "runs disagree on stage sets (missing {missing:?})")
            }
            AnalyzeError::DivisionByZero { label } => {
                write!(f, "normal-world mean for {label:?} is zero; overhead undefined")
            }
        }
    }
}

impl std::error::Error for AnalyzeError {}

/// Everything one pass over a trace produces.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TraceAnalysis {
    /// Instruction counts per (world, exception level).
    pub per_context: BTreeMap<Context, u64>,
    /// Instruction counts per stage window (toggle gaps subtracted).
    pub per_stage: BTreeMap<String, u64>,
    /// Σ of `per_context` — every instruction attributed in enabled spans.
    pub attributed_total: u64,
    /// Counter value of the last event seen, if any.
    pub final_cumulative: Option<u64>,
}

/// One-pass, streaming trace analyzer. Feed kept events in order via
/// [`push`](Self::push), then call [`finish`](Self::finish).
#[derive(Debug, Default)]
pub struct Analyzer {
    analysis: TraceAnalysis,
    /// Baseline for delta attribution; `None` right after an enable toggle.
    prev_instruction: Option<u64>,
    /// Currently open stage window: (stage, begin counter, off-gap so far).
    open_stage: Option<(String, u64, u64)>,
    /// Tracing state; toggles arrive in-stream. Counter value of the
    /// disable marker is carried until the matching enable.
    disabled_since: Option<u64>,
}

impl Analyzer {
    pub fn new() -> Analyzer {
        Analyzer::default()
    }

    pub fn push(&mut self, event: &TraceEvent) -> Result<(), AnalyzeError> {
        self.analysis.final_cumulative = Some(event.cumulative);
        match &event.kind {
            EventKind::Instruction => {
                if let Some(prev) = self.prev_instruction {
                    let delta = event.cumulative - prev;
                    *self
                        .analysis
                        .per_context
                        .entry((event.world, event.el))
                        .or_insert(0) += delta;
                    self.analysis.attributed_total += delta;
                }
                self.prev_instruction = Some(event.cumulative);
            }
            EventKind::ToggleMarker => {
                match self.disabled_since.take() {
                    None => {
                        // Going dark: remember where, and stop attributing.
                        self.disabled_since = Some(event.cumulative);
                    }
                    Some(off_at) => {
                        // Back on: instructions executed while off are a
                        // gap, both for attribution (baseline reset) and
                        // for any open stage window.
                        let gap = event.cumulative - off_at;
                        if let Some((_, _, window_gap)) = self.open_stage.as_mut() {
                            *window_gap += gap;
                        }
                        self.prev_instruction = None;
                    }
                }
            }
            EventKind::StageMarker { stage, edge } => match edge {
                Edge::Begin => {
                    if let Some((open, _, _)) = &self.open_stage {
                        return Err(AnalyzeError::OverlappingStages {
                            open: open.clone(),
                            new: stage.clone(),
                        });
                    }
                    self.open_stage = Some((stage.clone(), event.cumulative, 0));
                }
                Edge::End => {
                    let Some((open, begin, gap)) = self.open_stage.take() else {
                        return Err(AnalyzeError::UnbalancedMarkers {
                            stage: stage.clone(),
                        });
                    };
                    if open != *stage {
                        return Err(AnalyzeError::UnbalancedMarkers {
                            stage: stage.clone(),
                        });
                    }
                    // Repeated windows for the same stage accumulate.
                    *self.analysis.per_stage.entry(open).or_insert(0) +=
                        (event.cumulative - begin) - gap;
                }
            },
        }
        Ok(())
    }

    pub fn finish(self) -> Result<TraceAnalysis, AnalyzeError> {
        if let Some((stage, _, _)) = self.open_stage {
            return Err(AnalyzeError::UnbalancedMarkers { stage });
        }
        Ok(self.analysis)
    }
}

/// Analyze a whole event sequence in one call.
pub fn analyze<'a>(
    events: impl IntoIterator<Item = &'a TraceEvent>,
) -> Result<TraceAnalysis, AnalyzeError> {
    let mut analyzer = Analyzer::new();
    for event in events {
        analyzer.push(event)?;
    }
    analyzer.finish()
}

/// Per-(world, EL) instruction counts of an event sequence.
pub fn attribute<'a>(
    events: impl IntoIterator<Item = &'a TraceEvent>,
) -> BTreeMap<Context, u64> {
    // Attribution alone cannot fail: marker-structure errors only concern
    // stage windows, which this view ignores.
    let mut analyzer = Analyzer::new();
    for event in events {
        if let EventKind::StageMarker { .. } = event.kind {
            continue;
        }
        analyzer.push(event).expect("non-stage events cannot fail");
    }
    analyzer.analysis.per_context
}

/// Per-stage instruction counts. Every name in `expected_stages` appears in
/// the result (zero when its window never opened); observed stages outside
/// the expected set are reported too.
pub fn segment<'a>(
    events: impl IntoIterator<Item = &'a TraceEvent>,
    expected_stages: &[&str],
) -> Result<BTreeMap<String, u64>, AnalyzeError> {
    let mut per_stage = analyze(events)?.per_stage;
    for stage in expected_stages {
        per_stage.entry((*stage).to_string()).or_insert(0);
    }
    Ok(per_stage)
}

/// Sample mean and standard deviation of one measured quantity across runs.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Stat {
    /// Mean, in raw instructions.
    pub mean: f64,
    /// Sample (n−1) standard deviation; 0 for a single run.
    pub stddev: f64,
    pub min: u64,
    pub max: u64,
}

impl Stat {
    fn from_samples(samples: &[u64]) -> Stat {
        let n = samples.len() as f64;
        let mean = samples.iter().map(|s| *s as f64).sum::<f64>() / n;
        let stddev = if samples.len() < 2 {
            0.0
        } else {
            let var = samples
                .iter()
                .map(|s| (*s as f64 - mean).powi(2))
                .sum::<f64>()
                / (n - 1.0);
            var.sqrt()
        };
        Stat {
            mean,
            stddev,
            min: *samples.iter().min().expect("non-empty"),
            max: *samples.iter().max().expect("non-empty"),
        }
    }
}

/// Aggregated statistics across repeated runs of the same scenario.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct StageReport {
    pub run_count: usize,
    /// Set when `run_count == 1`: the zero standard deviations are
    /// placeholders, not evidence of perfect repeatability.
    pub single_run: bool,
    /// Per-stage statistics, keyed by stage name.
    pub per_stage: BTreeMap<String, Stat>,
    /// Per-context statistics, keyed by `world/EL` label.
    pub per_context: BTreeMap<String, Stat>,
    /// Statistics of the per-run attributed totals.
    pub total: Stat,
}

/// Aggregate repeated runs into per-stage / per-context sample statistics.
/// All runs must share one stage set; permuting the runs does not change
/// the result.
pub fn aggregate(runs: &[TraceAnalysis]) -> Result<StageReport, AnalyzeError> {
    let Some(first) = runs.first() else {
        return Err(AnalyzeError::EmptyInput);
    };
    for run in runs {
        for (a, b) in [(first, run), (run, first)] {
            if let Some(stage) = a.per_stage.keys().find(|s| !b.per_stage.contains_key(*s)) {
                return Err(AnalyzeError::StageMismatch {
                    missing: stage.clone(),
                });
            }
        }
    }

    let mut per_stage = BTreeMap::new();
    for stage in first.per_stage.keys() {
        let samples: Vec<u64> = runs.iter().map(|r| r.per_stage[stage]).collect();
        per_stage.insert(stage.clone(), Stat::from_samples(&samples));
    }

    // Context sets may legitimately differ between runs (a context with no
    // attributed instructions is simply absent); missing means zero.
    let mut contexts: Vec<Context> = Vec::new();
    for run in runs {
        for ctx in run.per_context.keys() {
            if !contexts.contains(ctx) {
                contexts.push(*ctx);
            }
        }
    }
    contexts.sort();
    let mut per_context = BTreeMap::new();
    for ctx in contexts {
        let samples: Vec<u64> = runs
            .iter()
            .map(|r| r.per_context.get(&ctx).copied().unwrap_or(0))
            .collect();
        per_context.insert(context_label(ctx), Stat::from_samples(&samples));
    }

    let totals: Vec<u64> = runs.iter().map(|r| r.attributed_total).collect();
    Ok(StageReport {
        run_count: runs.len(),
        single_run: runs.len() == 1,
        per_stage,
        per_context,
        total: Stat::from_samples(&totals),
    })
}

/// One line of an overhead table.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct OverheadRow {
    /// Stage name, or `"total"` for the closing row.
    pub label: String,
    /// Realm mean, raw instructions.
    pub realm_mean: f64,
    /// Normal-world mean, raw instructions.
    pub nw_mean: f64,
    /// `(realm − nw) / nw × 100`.
    pub overhead_pct: f64,
}

/// Realm-vs-normal overhead, one row per stage plus a total row.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct OverheadReport {
    pub rows: Vec<OverheadRow>,
}

impl OverheadReport {
    pub fn row(&self, label: &str) -> Option<&OverheadRow> {
        self.rows.iter().find(|r| r.label == label)
    }
}

fn overhead_pct(realm: f64, nw: f64, label: &str) -> Result<f64, AnalyzeError> {
    if nw == 0.0 {
        return Err(AnalyzeError::DivisionByZero {
            label: label.to_string(),
        });
    }
    Ok((realm - nw) / nw * 100.0)
}

/// Compare a realm report against a normal-world baseline. Stage rows come
/// out in canonical service order where applicable (other stages follow
/// alphabetically), with the total row last.
pub fn overhead(realm: &StageReport, nw: &StageReport) -> Result<OverheadReport, AnalyzeError> {
    if let Some(stage) = realm
        .per_stage
        .keys()
        .find(|s| !nw.per_stage.contains_key(*s))
        .or_else(|| {
            nw.per_stage
                .keys()
                .find(|s| !realm.per_stage.contains_key(*s))
        })
    {
        return Err(AnalyzeError::StageMismatch {
            missing: stage.clone(),
        });
    }

    let mut stages: Vec<&String> = realm.per_stage.keys().collect();
    stages.sort_by_key(|s| {
        super::STAGE_NAMES
            .iter()
            .position(|c| c == s)
            .unwrap_or(super::STAGE_NAMES.len())
    });

    let mut rows = Vec::with_capacity(stages.len() + 1);
    for stage in stages {
        let r = realm.per_stage[stage].mean;
        let n = nw.per_stage[stage].mean;
        rows.push(OverheadRow {
            label: stage.clone(),
            realm_mean: r,
            nw_mean: n,
            overhead_pct: overhead_pct(r, n, stage)?,
        });
    }
    rows.push(OverheadRow {
        label: "total".to_string(),
        realm_mean: realm.total.mean,
        nw_mean: nw.total.mean,
        overhead_pct: overhead_pct(realm.total.mean, nw.total.mean, "total")?,
    });
    Ok(OverheadReport { rows })
}
