// SPDX-License-Identifier: Apache-2.0

//! Throughput of the trace parser and the parse→analyze pipeline on large
//! synthetic marker-annotated traces.

use std::fmt::Write as _;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ccabench_core::trace::{analyze, parse_trace, MarkerConfig, ParseMode, STAGE_NAMES};

const CONTEXTS: [(&str, &str); 8] = [
    ("NS", "EL0"),
    ("NS", "EL1"),
    ("NS", "EL2"),
    ("RL", "EL0"),
    ("RL", "EL1"),
    ("RL", "EL2"),
    ("RT", "EL3"),
    ("S", "EL1"),
];

/// One baseline line, then each canonical stage as a marker-delimited
/// window of `lines_per_stage` randomized instruction lines.
fn synth_trace(lines_per_stage: usize, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = String::new();
    let mut cumulative: u64 = 0;
    let mut pc: u64 = 0x1000;
    let mut last = ("NS", "EL2");

    let line = |out: &mut String,
                cumulative: u64,
                (world, el): (&str, &str),
                pc: &mut u64,
                disasm: &str| {
        writeln!(out, "{cumulative} {world} {el} {pc:#x} {disasm}").unwrap();
        *pc += 4;
    };

    line(&mut out, 0, last, &mut pc, "NOP");
    for (i, _stage) in STAGE_NAMES.iter().enumerate() {
        line(
            &mut out,
            cumulative,
            last,
            &mut pc,
            &format!("MOV X8, #{}", 2 * i + 1),
        );
        for _ in 0..lines_per_stage {
            cumulative += rng.gen_range(1..10_000);
            last = CONTEXTS[rng.gen_range(0..CONTEXTS.len())];
            line(&mut out, cumulative, last, &mut pc, "NOP");
        }
        line(
            &mut out,
            cumulative,
            last,
            &mut pc,
            &format!("MOV X8, #{}", 2 * i + 2),
        );
    }
    out
}

fn bench_parse(c: &mut Criterion) {
    let markers = MarkerConfig::builtin();
    let mut group = c.benchmark_group("parse_trace");
    for lines_per_stage in [2_500usize, 25_000] {
        let text = synth_trace(lines_per_stage, 7);
        let total_lines = 4 * lines_per_stage + 9;
        group.throughput(Throughput::Bytes(text.len() as u64));
        group.bench_with_input(
            BenchmarkId::new("strict", total_lines),
            &text,
            |b, text| {
                b.iter(|| parse_trace(text, &markers, ParseMode::Strict).unwrap());
            },
        );
        group.bench_with_input(
            BenchmarkId::new("strict_then_analyze", total_lines),
            &text,
            |b, text| {
                b.iter(|| {
                    let events = parse_trace(text, &markers, ParseMode::Strict).unwrap();
                    analyze(events.iter()).unwrap()
                });
            },
        );
    }
    group.finish();
}

criterion_group!(benches, bench_parse);
criterion_main!(benches);
