// SPDX-License-Identifier: Apache-2.0

//! Acceptance gate: the nine shipped criteria, one test each.
//!
//! Every test prints a single `criterion N …: PASS/FAIL` line (run with
//! `cargo test --test acceptance -- --nocapture` to see them) and enforces
//! its stated runtime limit. Criteria that compare against the published
//! reference tables use the exact integers transcribed in
//! `ccabench_core::sim::refdata`; the two known misprints in the published
//! percentage columns (service setting 3 and boot setting 5) are asserted
//! against their recomputed values and flagged with NOTE lines instead of
//! being silently absorbed.

use std::panic::AssertUnwindSafe;
use std::path::PathBuf;
use std::process::Command;
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestError, TestRng, TestRunner};

use ccabench_core::crypto::HmacKey;
use ccabench_core::realm::verify_token;
use ccabench_core::sim::refdata;
use ccabench_core::sim::{derive_workload, emit_trace, SimCell, DEFAULT_TIMERS};
use ccabench_core::sim::{fit_cost_model, CostModel};
use ccabench_core::trace::{analyze, parse_trace, MarkerConfig, ParseMode, STAGE_NAMES};
use ccabench_core::world::{gpc_check, AccessDecision, ExceptionLevel};
use ccabench_core::{
    count_exits, run_demo, simulate_boot, simulate_service, AttestationToken, DemoConfig,
    DemoOutcome, DeploymentKind, GranuleProtectionTable, Measurement, Nonce, PasTag,
    PlatformClaims, RealmDescriptor, RejectReason, SecurityState, SimResult, TimerConfig,
    UsagePolicy, Verdict, WorkloadProfile,
};

/// Run one criterion body under a wall-clock budget, printing exactly one
/// PASS/FAIL line. Assertion failures inside the body are re-raised so the
/// test still fails normally.
fn gate(name: &str, limit: Option<Duration>, body: impl FnOnce()) {
    let start = Instant::now();
    let result = std::panic::catch_unwind(AssertUnwindSafe(body));
    let elapsed = start.elapsed();
    let budget = match limit {
        Some(limit) => format!("{elapsed:.2?} of {limit:?} budget"),
        None => format!("{elapsed:.2?}"),
    };
    let overtime = limit.is_some_and(|limit| elapsed > limit);
    match (&result, overtime) {
        (Ok(()), false) => println!("{name}: PASS ({budget})"),
        (Ok(()), true) => println!("{name}: FAIL — over time budget ({budget})"),
        (Err(_), _) => println!("{name}: FAIL ({budget})"),
    }
    if let Err(payload) = result {
        std::panic::resume_unwind(payload);
    }
    assert!(!overtime, "{name}: runtime {elapsed:?} exceeds {limit:?}");
}

fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

/// A deterministic property-test driver so acceptance runs are repeatable.
fn runner(cases: u32) -> TestRunner {
    TestRunner::new_with_rng(
        Config {
            cases,
            // Deterministic seed ⇒ no failure-persistence files needed.
            failure_persistence: None,
            ..Config::default()
        },
        TestRng::from_seed(RngAlgorithm::ChaCha, &[7u8; 32]),
    )
}

fn expect_pass<T: std::fmt::Debug>(what: &str, result: Result<(), TestError<T>>) {
    if let Err(err) = result {
        panic!("{what}: {err}");
    }
}

// --- criterion 1 -----------------------------------------------------------

/// Exhaustive access-matrix check: all 16 (security state, PAS) pairs must
/// match the published table with zero tolerance.
#[test]
fn criterion_1_access_matrix_exhaustive() {
    gate(
        "criterion 1 (access matrix, 16 pairs, 0 tolerance)",
        Some(Duration::from_secs(1)),
        || {
            // The published table, transcribed independently of the
            // implementation: normal-PAS is readable from every state, Root
            // reads everything, and Secure/Realm additionally read only
            // their own PAS.
            let published = |requester: SecurityState, target: PasTag| -> AccessDecision {
                use AccessDecision::*;
                use PasTag::*;
                use SecurityState::*;
                match (requester, target) {
                    (_, NormalPas) => Allow,
                    (Root, _) => Allow,
                    (Secure, SecurePas) => Allow,
                    (Realm, RealmPas) => Allow,
                    _ => Deny,
                }
            };
            let mut checked = 0;
            for requester in SecurityState::ALL {
                for target in PasTag::ALL {
                    assert_eq!(
                        gpc_check(requester, target),
                        published(requester, target),
                        "({requester:?}, {target:?})"
                    );
                    checked += 1;
                }
            }
            assert_eq!(checked, 16);
        },
    );
}

// --- criterion 2 -----------------------------------------------------------

/// Attestation robustness: every single-byte flip of a serialized token is
/// rejected (decode failure or verification rejection both count); the
/// genuine token passes; a replayed token fails the freshness check.
#[test]
fn criterion_2_token_tamper_sweep() {
    gate(
        "criterion 2 (token tamper sweep, every byte position)",
        Some(Duration::from_secs(10)),
        || {
            let mut gpt = GranuleProtectionTable::new(8);
            let mut realm =
                RealmDescriptor::create(b"acceptance image", UsagePolicy::unlimited());
            realm.populate(&mut gpt, 0, 0, b"kernel page").unwrap();
            realm.populate(&mut gpt, 1, 1, b"fs page").unwrap();
            realm.activate().unwrap();

            let platform = PlatformClaims {
                monitor_digest: Measurement(ccabench_core::crypto::sha256(b"monitor fw")),
                rmm_digest: Measurement(ccabench_core::crypto::sha256(b"rmm fw")),
            };
            let key = HmacKey::new(*b"acceptance-gate-signing-key-0001");
            let nonce = Nonce([7u8; 16]);
            let token = realm.attest(nonce, &platform, &key).unwrap();

            let bytes = token.to_bytes();
            assert_eq!(bytes.len(), 164, "fixture token must be 164 bytes");

            // Genuine token: accepted.
            assert_eq!(
                verify_token(&token, realm.measurement(), &platform, nonce, &key),
                Verdict::Accept
            );

            // Single-byte flips: all 164 positions must be rejected, either
            // because the framing no longer decodes or because verification
            // fails.
            let mut rejected = 0;
            for position in 0..bytes.len() {
                let mut tampered = bytes.clone();
                tampered[position] ^= 0xff;
                match AttestationToken::from_bytes(&tampered) {
                    Err(_) => rejected += 1,
                    Ok(decoded) => {
                        match verify_token(&decoded, realm.measurement(), &platform, nonce, &key)
                        {
                            Verdict::Reject(_) => rejected += 1,
                            Verdict::Accept => {
                                panic!("flip at byte {position} was accepted")
                            }
                        }
                    }
                }
            }
            assert_eq!(rejected, bytes.len(), "every flip must be rejected");

            // Replay: the verifier expects a fresh nonce; the captured token
            // carries the old one.
            let fresh = Nonce([8u8; 16]);
            assert_eq!(
                verify_token(&token, realm.measurement(), &platform, fresh, &key),
                Verdict::Reject(RejectReason::StaleNonce)
            );
        },
    );
}

// --- criterion 3 -----------------------------------------------------------

/// Confidentiality scan: after each full demo run with a randomized 1 MiB
/// model, no 64-byte window of the delivered weights appears in any
/// normal-readable byte region. 20 seeded trials, zero hits.
#[test]
fn criterion_3_confidentiality_scan() {
    gate(
        "criterion 3 (confidentiality scan, 1 MiB model, 20 seeds)",
        Some(Duration::from_secs(30)),
        || {
            for seed in 0..20 {
                let mut config = DemoConfig::new(seed);
                config.model_bytes = 1 << 20;
                config.total_pages = 1024;
                let report = run_demo(&config).unwrap();
                assert!(
                    matches!(report.outcome, DemoOutcome::Completed { .. }),
                    "seed {seed}: demo did not complete"
                );
                assert!(report.scan.regions_scanned > 0, "seed {seed}: empty scan");
                assert!(
                    report.scan.clean(),
                    "seed {seed}: {} scan hit(s): {:?}",
                    report.scan.hits.len(),
                    report.scan.hits
                );
            }
        },
    );
}

// --- criterion 4 -----------------------------------------------------------

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

/// Well-formed simulation results: a canonical stage subset with cells in
/// canonical (stage, world, EL) order and total = Σ cells. Mirrors the
/// strategy used by the core round-trip property suite.
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

/// Trace-analyzer fidelity: the CLI reproduces the published per-context
/// attribution exactly on the bundled reference trace, and emit → parse →
/// analyze is lossless for 1000 randomized results.
#[test]
fn criterion_4_trace_analyzer_fidelity() {
    gate("criterion 4 (trace analyzer fidelity)", None, || {
        // Part 1: the `analyze` subcommand on the bundled fixture.
        let fixture = fixtures_dir().join("traces/attribution_reference.trace");
        let output = Command::new(env!("CARGO_BIN_EXE_ccabench"))
            .arg("analyze")
            .arg(&fixture)
            .output()
            .expect("run ccabench analyze");
        assert!(
            output.status.success(),
            "analyze failed: {}",
            String::from_utf8_lossy(&output.stderr)
        );
        let stdout = String::from_utf8(output.stdout).unwrap();
        let expected = [
            "context,normal/EL0,40000,0,40000,40000",
            "context,normal/EL2,16840000,0,16840000,16840000",
            "context,realm/EL0,240140000,0,240140000,240140000",
            "context,realm/EL1,24680000,0,24680000,24680000",
            "context,realm/EL2,41180000,0,41180000,41180000",
            "context,root/EL3,5130000,0,5130000,5130000",
        ];
        for line in expected {
            assert!(stdout.lines().any(|l| l == line), "missing line: {line}");
        }
        assert_eq!(
            stdout.lines().filter(|l| l.starts_with("context,")).count(),
            expected.len(),
            "exactly six contexts expected"
        );

        // Part 2: round-trip property over 1000 randomized results. The
        // wire trace carries stage windows and context attribution (not the
        // bookkeeping exit counter), so equality is checked on the stage
        // and context breakdowns and the total.
        let markers = MarkerConfig::builtin();
        expect_pass(
            "round-trip property",
            runner(1000).run(&arb_result(), |result| {
                let text = emit_trace(&result, &markers).expect("emit");
                let events = parse_trace(&text, &markers, ParseMode::Strict).expect("parse");
                let analysis = analyze(events.iter()).expect("analyze");
                prop_assert_eq!(&analysis.per_stage, &result.per_stage());
                prop_assert_eq!(&analysis.per_context, &result.per_context());
                prop_assert_eq!(analysis.attributed_total, result.total);
                prop_assert_eq!(analysis.final_cumulative, Some(result.total));
                Ok(())
            }),
        );
    });
}

// --- criterion 5 -----------------------------------------------------------

fn overhead_pct(realm: u64, normal: u64) -> f64 {
    (realm as f64 - normal as f64) / normal as f64 * 100.0
}

/// Overhead arithmetic: recomputed overhead percentages for all 8 published
/// service pairs and all 8 boot/teardown pairs sit within ±1 percentage
/// point of the printed column — except the two documented misprints, which
/// are pinned to their recomputed values and reported as NOTEs.
#[test]
fn criterion_5_published_overhead_arithmetic() {
    gate("criterion 5 (published overhead arithmetic, 16 pairs)", None, || {
        let mut outside: Vec<String> = Vec::new();

        for record in &refdata::SERVICE {
            let recomputed = overhead_pct(record.realm_total, record.normal_total);
            let printed = record.printed_overhead_pct as f64;
            if (recomputed - printed).abs() > 1.0 {
                outside.push(format!("service {}", record.setting));
            }
        }
        for record in &refdata::SETUP {
            let boot = overhead_pct(record.realm_boot, record.normal_boot);
            if (boot - record.printed_boot_overhead_pct as f64).abs() > 1.0 {
                outside.push(format!("boot {}", record.setting));
            }
            let teardown = overhead_pct(record.realm_teardown, record.normal_teardown);
            if (teardown - record.printed_teardown_overhead_pct as f64).abs() > 1.0 {
                outside.push(format!("teardown {}", record.setting));
            }
        }

        // Exactly the two documented rounding inconsistencies fall outside
        // the ±1-point band; everything else (14 of 16 pairs) is inside.
        assert_eq!(
            outside,
            vec!["service 3".to_string(), "boot 5".to_string()],
            "unexpected overhead outliers"
        );

        // Pin the recomputed values for the two misprints so a regression
        // in the reference tables cannot slip through silently.
        let service3 = refdata::service_record(3).unwrap();
        let s3 = overhead_pct(service3.realm_total, service3.normal_total);
        assert!(
            (s3 - 21.9163).abs() < 5e-3,
            "setting 3 service overhead recomputes to {s3:.4}"
        );
        let setup5 = refdata::SETUP.iter().find(|r| r.setting == 5).unwrap();
        let b5 = overhead_pct(setup5.realm_boot, setup5.normal_boot);
        assert!(
            (b5 - 1810.3331).abs() < 5e-3,
            "setting 5 boot overhead recomputes to {b5:.4}"
        );
        println!(
            "  NOTE: setting 3 service overhead recomputes to {s3:.2}% \
             but the published column prints {}%",
            service3.printed_overhead_pct
        );
        println!(
            "  NOTE: setting 5 boot overhead recomputes to {b5:.2}% \
             but the published column prints {}%",
            setup5.printed_boot_overhead_pct
        );
    });
}

// --- criterion 6 -----------------------------------------------------------

/// Held-out calibration: the cost model is fit on setting 2 and the
/// attribution table only; realm totals for the other seven settings are
/// genuine predictions and must land within ±15%, with the predicted
/// overhead percentage inside the observed 17–22% band for ≥ 6 of 8
/// settings.
#[test]
fn criterion_6_held_out_calibration() {
    gate(
        "criterion 6 (held-out calibration, ±15%, 17–22% band ≥ 6/8)",
        Some(Duration::from_secs(60)),
        || {
            let cost = fit_cost_model();
            assert_eq!(
                cost,
                CostModel::calibrated(),
                "the shipped calibration must equal a fresh fit"
            );

            let mut in_band = 0;
            for record in &refdata::SERVICE {
                let wl = derive_workload(record, &cost, DEFAULT_TIMERS);
                let realm =
                    simulate_service(&wl, DeploymentKind::RealmVM, DEFAULT_TIMERS, &cost);
                let nw =
                    simulate_service(&wl, DeploymentKind::NormalWorldVM, DEFAULT_TIMERS, &cost);
                let ovh = overhead_pct(realm.total, nw.total);
                if (17.0..=22.0).contains(&ovh) {
                    in_band += 1;
                }
                if record.setting == 2 {
                    // The fit input, not a prediction.
                    continue;
                }
                let rel = (realm.total as f64 - record.realm_total as f64)
                    / record.realm_total as f64;
                assert!(
                    rel.abs() <= 0.15,
                    "setting {}: predicted realm total off by {:+.1}%",
                    record.setting,
                    rel * 100.0
                );
            }
            assert!(
                in_band >= 6,
                "only {in_band}/8 predicted overheads inside 17–22%"
            );
        },
    );
}

// --- criterion 7 -----------------------------------------------------------

fn arb_cost() -> impl Strategy<Value = CostModel> {
    (
        1_000u64..2_000_000_000,
        0u64..100_000,
        0u64..100_000,
        0u64..100_000,
        0u64..100_000,
        0u64..10_000,
        0u64..100_000,
        1u64..100_000,
        0u64..100_000,
        0u64..1_000_000,
        0u64..1_000_000,
    )
        .prop_map(
            |(
                ips,
                c_hyp,
                c_rmm_entry,
                c_rmm_exit,
                c_mon,
                c_io_nw,
                io_extra,
                c_delegate,
                c_undelegate,
                c_boot_base_nw,
                c_boot_base_realm,
            )| CostModel {
                ips,
                c_hyp,
                c_rmm_entry,
                c_rmm_exit,
                c_mon,
                c_io_nw,
                c_io_realm: c_io_nw + io_extra,
                c_delegate,
                c_undelegate,
                c_boot_base_nw,
                c_boot_base_realm,
            },
        )
}

fn arb_workload() -> impl Strategy<Value = WorkloadProfile> {
    (
        0u64..10_000_000_000,
        0u64..100_000_000,
        0u64..100_000_000_000,
        0u64..100_000_000,
        0u64..10_000,
        0u64..10_000,
        0u64..1_000_000,
    )
        .prop_map(
            |(model_init, read_input, inference_compute, write_output, pin, pout, boot)| {
                WorkloadProfile {
                    model_init,
                    read_input,
                    inference_compute,
                    write_output,
                    io_pages_in: pin,
                    io_pages_out: pout,
                    boot_pages: boot,
                }
            },
        )
}

fn arb_timers() -> impl Strategy<Value = TimerConfig> {
    (1u64..100_000, 1u64..100_000).prop_map(|(el1_hz, el2_hz)| TimerConfig { el1_hz, el2_hz })
}

const BOTH_KINDS: [DeploymentKind; 2] = [DeploymentKind::RealmVM, DeploymentKind::NormalWorldVM];

/// Simulator properties at acceptance volume: additivity, realm dominance,
/// timer monotonicity, and zero-exception equality over 10,000 randomized
/// cases each.
#[test]
fn criterion_7_simulator_properties_10k() {
    gate(
        "criterion 7 (simulator properties, 4 × 10,000 cases)",
        None,
        || {
            expect_pass(
                "additivity",
                runner(10_000).run(
                    &(arb_workload(), arb_timers(), arb_cost()),
                    |(wl, timers, cost)| {
                        for kind in BOTH_KINDS {
                            let r = simulate_service(&wl, kind, timers, &cost);
                            prop_assert_eq!(r.total, r.per_stage().values().sum::<u64>());
                            prop_assert_eq!(r.total, r.per_context().values().sum::<u64>());
                        }
                        Ok(())
                    },
                ),
            );

            expect_pass(
                "realm dominance",
                runner(10_000).run(
                    &(arb_workload(), arb_timers(), arb_cost()),
                    |(wl, timers, cost)| {
                        let realm = simulate_service(&wl, DeploymentKind::RealmVM, timers, &cost);
                        let nw =
                            simulate_service(&wl, DeploymentKind::NormalWorldVM, timers, &cost);
                        prop_assert!(realm.total >= nw.total);
                        let io_pages = wl.io_pages_in + wl.io_pages_out;
                        let io_premium = cost.c_io_realm - cost.c_io_nw;
                        if (realm.exits > 0 && cost.realm_exit_surcharge() > 0)
                            || (io_pages > 0 && io_premium > 0)
                        {
                            prop_assert!(realm.total > nw.total);
                        }
                        Ok(())
                    },
                ),
            );

            expect_pass(
                "timer monotonicity",
                runner(10_000).run(
                    &(arb_workload(), arb_timers(), arb_cost(), 1u64..1000),
                    |(wl, timers, cost, bump)| {
                        for kind in BOTH_KINDS {
                            let base = simulate_service(&wl, kind, timers, &cost).total;
                            let el1 = TimerConfig {
                                el1_hz: timers.el1_hz + bump,
                                ..timers
                            };
                            let el2 = TimerConfig {
                                el2_hz: timers.el2_hz + bump,
                                ..timers
                            };
                            prop_assert!(simulate_service(&wl, kind, el1, &cost).total >= base);
                            prop_assert!(simulate_service(&wl, kind, el2, &cost).total >= base);
                        }
                        Ok(())
                    },
                ),
            );

            expect_pass(
                "zero-exception equality",
                runner(10_000).run(
                    &(
                        0u64..1000,
                        (1u64..100, 1u64..100)
                            .prop_map(|(a, b)| TimerConfig { el1_hz: a, el2_hz: b }),
                        arb_cost(),
                    ),
                    |(guest, timers, cost)| {
                        // Pin ips high enough that `guest` never reaches
                        // one timer tick.
                        let cost = CostModel {
                            ips: 1_000_000_000,
                            ..cost
                        };
                        prop_assert_eq!(count_exits(guest, timers, cost.ips), 0);
                        let wl = WorkloadProfile {
                            inference_compute: guest,
                            ..WorkloadProfile::default()
                        };
                        let realm = simulate_service(&wl, DeploymentKind::RealmVM, timers, &cost);
                        let nw =
                            simulate_service(&wl, DeploymentKind::NormalWorldVM, timers, &cost);
                        prop_assert_eq!(realm.exits, 0);
                        prop_assert_eq!(realm.total, nw.total);
                        prop_assert_eq!(realm.total, guest);
                        Ok(())
                    },
                ),
            );
        },
    );
}

// --- criterion 8 -----------------------------------------------------------

/// Boot scaling: realm boot cost is strictly increasing in page count, and
/// the calibrated model reproduces the published boot ordering
/// ② < ⑥ < ④ < ⑤ with no excluded pairs.
#[test]
fn criterion_8_boot_scaling_and_ordering() {
    gate("criterion 8 (boot scaling and published ordering)", None, || {
        let cost = CostModel::calibrated();

        // Strict monotonicity over a dense range …
        for pages in 0..4096u64 {
            assert!(
                simulate_boot(pages + 1, DeploymentKind::RealmVM, &cost)
                    > simulate_boot(pages, DeploymentKind::RealmVM, &cost),
                "boot cost not strictly increasing at {pages} pages"
            );
        }
        // … and across widely spaced page counts, including the published
        // settings' sizes.
        let spot = [
            4_096u64, 10_000, 102_400, 256_000, 512_000, 1_024_000, 10_000_000,
        ];
        for pair in spot.windows(2) {
            assert!(
                simulate_boot(pair[1], DeploymentKind::RealmVM, &cost)
                    > simulate_boot(pair[0], DeploymentKind::RealmVM, &cost),
                "boot cost not increasing from {} to {} pages",
                pair[0],
                pair[1]
            );
        }

        // Published ordering across the four measured settings.
        let boot = |setting: u8| {
            let pages = refdata::service_record(setting).unwrap().boot_pages();
            simulate_boot(pages, DeploymentKind::RealmVM, &cost)
        };
        assert!(boot(2) < boot(6), "② must boot faster than ⑥");
        assert!(boot(6) < boot(4), "⑥ must boot faster than ④");
        assert!(boot(4) < boot(5), "④ must boot faster than ⑤");
    });
}

// --- criterion 9 -----------------------------------------------------------

/// Usage-policy enforcement: with max_inferences = N, query N+1 is refused
/// as expired and the post-mortem scan confirms every former realm granule
/// is normal-PAS and zero-filled.
#[test]
fn criterion_9_usage_policy_enforcement() {
    gate(
        "criterion 9 (usage policy, N ∈ {1, 2, 10})",
        None,
        || {
            for n in [1u64, 2, 10] {
                let mut config = DemoConfig::new(40 + n);
                config.policy = UsagePolicy {
                    max_inferences: Some(n),
                    valid_until: None,
                };
                config.query_count = (n + 1) as u32;
                let report = run_demo(&config).unwrap();

                match &report.outcome {
                    DemoOutcome::Completed {
                        answers, expired, ..
                    } => {
                        assert!(expired, "N = {n}: policy expiry not reported");
                        assert_eq!(
                            answers.len(),
                            n as usize,
                            "N = {n}: exactly N queries must be answered"
                        );
                    }
                    other => panic!("N = {n}: unexpected outcome {other:?}"),
                }
                let refusal = format!("query {} refused", n + 1);
                assert!(
                    report.events.iter().any(|e| e.contains(&refusal)),
                    "N = {n}: no refusal event for query {}",
                    n + 1
                );
                assert!(
                    !report.realm_granules.is_empty(),
                    "N = {n}: post-mortem scan has no granules to check"
                );
                assert!(
                    report.scrub_verified,
                    "N = {n}: former realm granules not normal-PAS and zeroed"
                );
            }
        },
    );
}
