// SPDX-License-Identifier: Apache-2.0

//! Round-trip property: any well-formed simulation result, emitted as a
//! marker-annotated trace and re-analyzed, reproduces its own stage and
//! context breakdowns exactly.

use proptest::prelude::*;

use ccabench_core::sim::emit_trace;
use ccabench_core::trace::{analyze, parse_trace, MarkerConfig, ParseMode, STAGE_NAMES};
use ccabench_core::world::{ExceptionLevel, SecurityState};
use ccabench_core::SimResult;
use ccabench_core::sim::SimCell;

const WORLDS: [SecurityState; 4] = [
    SecurityState::Normal,
    SecurityState::Secure,
    SecurityState::Realm,
    SecurityState::Root,
];
const ELS: [ExceptionLevel; 4] = [
    ExceptionLevel::El0,
    ExceptionLevel::El1,
    ExceptionLevel::El2,
    ExceptionLevel::El3,
];

/// Build a well-formed result: canonical stage subset, cells keyed by
/// (stage, world, EL) in canonical order, total = Σ cells.
fn arb_result() -> impl Strategy<Value = SimResult> {
    (
        proptest::collection::vec(any::<bool>(), 4),
        proptest::collection::btree_map(
            (0usize..4, 0usize..4, 0usize..4),
            0u64..2_000_000_000,
            0..24,
        ),
        0u64..1_000,
    )
        .prop_map(|(mask, raw, exits)| {
            let stages: Vec<String> = STAGE_NAMES
                .iter()
                .enumerate()
                .filter(|(i, _)| mask[*i])
                .map(|(_, s)| s.to_string())
                .collect();
            let mut cells = Vec::new();
            for ((si, wi, ei), instructions) in raw {
                if instructions == 0 || !mask[si] {
                    continue;
                }
                cells.push(SimCell {
                    stage: STAGE_NAMES[si].to_string(),
                    world: WORLDS[wi],
                    el: ELS[ei],
                    instructions,
                });
            }
            let total = cells.iter().map(|c| c.instructions).sum();
            SimResult {
                stages,
                cells,
                total,
                exits,
            }
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn emit_parse_analyze_is_lossless(result in arb_result()) {
        let markers = MarkerConfig::builtin();
        let text = emit_trace(&result, &markers).expect("emit");
        // Emission is deterministic.
        prop_assert_eq!(&text, &emit_trace(&result, &markers).expect("emit"));

        let events = parse_trace(&text, &markers, ParseMode::Strict).expect("parse");
        let analysis = analyze(events.iter()).expect("analyze");

        prop_assert_eq!(analysis.per_stage, result.per_stage());
        prop_assert_eq!(analysis.per_context, result.per_context());
        prop_assert_eq!(analysis.attributed_total, result.total);
        prop_assert_eq!(analysis.final_cumulative, Some(result.total));
    }
}

#[test]
fn empty_result_emits_a_parseable_baseline_trace() {
    let markers = MarkerConfig::builtin();
    let result = SimResult::default();
    let text = emit_trace(&result, &markers).expect("emit");
    let events = parse_trace(&text, &markers, ParseMode::Strict).expect("parse");
    let analysis = analyze(events.iter()).expect("analyze");
    assert!(analysis.per_stage.is_empty());
    assert!(analysis.per_context.is_empty());
    assert_eq!(analysis.attributed_total, 0);
    assert_eq!(analysis.final_cumulative, Some(0));
}

#[test]
fn sixteen_context_result_round_trips() {
    // One stage touching every (world, EL) pair exactly once.
    let mut cells = Vec::new();
    let mut n = 1u64;
    for world in WORLDS {
        for el in ELS {
            cells.push(SimCell {
                stage: "inference_compute".to_string(),
                world,
                el,
                instructions: n,
            });
            n *= 3;
        }
    }
    let total = cells.iter().map(|c| c.instructions).sum();
    let result = SimResult {
        stages: vec!["inference_compute".to_string()],
        cells,
        total,
        exits: 0,
    };
    let markers = MarkerConfig::builtin();
    let text = emit_trace(&result, &markers).expect("emit");
    let events = parse_trace(&text, &markers, ParseMode::Strict).expect("parse");
    let analysis = analyze(events.iter()).expect("analyze");
    assert_eq!(analysis.per_context, result.per_context());
    assert_eq!(analysis.per_context.len(), 16);
    assert_eq!(analysis.attributed_total, total);
}
