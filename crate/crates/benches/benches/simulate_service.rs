// SPDX-License-Identifier: Apache-2.0

//! Cost of one simulated service run per reference setting, of boot
//! simulation at the published VM sizes, and of the calibration fit.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use ccabench_core::sim::{derive_workload, fit_cost_model, refdata, DEFAULT_TIMERS};
use ccabench_core::{simulate_boot, simulate_service, CostModel, DeploymentKind};

fn bench_service(c: &mut Criterion) {
    let cost = CostModel::calibrated();
    let mut group = c.benchmark_group("simulate_service");
    for record in &refdata::SERVICE {
        let wl = derive_workload(record, &cost, DEFAULT_TIMERS);
        group.bench_with_input(BenchmarkId::from_parameter(record.slug), &wl, |b, wl| {
            b.iter(|| simulate_service(wl, DeploymentKind::RealmVM, DEFAULT_TIMERS, &cost));
        });
    }
    group.finish();
}

fn bench_boot(c: &mut Criterion) {
    let cost = CostModel::calibrated();
    let mut group = c.benchmark_group("simulate_boot");
    for record in refdata::SETUP.iter() {
        let pages = refdata::service_record(record.setting)
            .expect("setup settings all have service records")
            .boot_pages();
        group.bench_with_input(BenchmarkId::from_parameter(pages), &pages, |b, &pages| {
            b.iter(|| simulate_boot(pages, DeploymentKind::RealmVM, &cost));
        });
    }
    group.finish();
}

fn bench_fit(c: &mut Criterion) {
    c.bench_function("fit_cost_model", |b| b.iter(fit_cost_model));
}

criterion_group!(benches, bench_service, bench_boot, bench_fit);
criterion_main!(benches);
