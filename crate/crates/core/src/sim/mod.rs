// SPDX-License-Identifier: Apache-2.0

//! Deterministic exit-overhead simulator.
//!
//! The model is deliberately small: a guest executes a known number of
//! instructions per service stage; two periodic timers (the guest kernel's
//! EL1 timer and the hypervisor's EL2 timer) force VM exits as virtual time
//! advances; every exit costs a fixed number of handler instructions whose
//! size and attribution depend on whether the guest is a normal-world VM
//! (hypervisor only) or a realm VM (RMM entry/exit plus hypervisor plus
//! monitor world-switches). I/O stages additionally pay a per-page copy
//! cost, larger for realms because every buffer crosses the
//! protected/unprotected boundary. Boot and teardown add per-page
//! delegation and reclaim costs on the realm side.
//!
//! Handler instructions do not advance virtual time, so exit counts depend
//! only on guest instructions and timer frequencies — no fixed-point
//! feedback. All arithmetic is integer; identical inputs give identical
//! results. Counts saturate at `u64::MAX` instead of overflowing.
//!
//! [`calibrate`] fits the per-event costs against the bundled reference
//! measurements in [`refdata`]; [`emit`] renders any [`SimResult`] as a
//! synthetic instruction trace for the `trace` module.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::trace::{Context, STAGE_NAMES};
use crate::world::{ExceptionLevel, SecurityState};

pub mod calibrate;
pub mod emit;
pub mod refdata;

pub use calibrate::{derive_workload, fit_cost_model, DEFAULT_IPS, DEFAULT_TIMERS};
pub use emit::{emit_trace, EmitError};

/// Which deployment path a simulated VM takes on every exception.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeploymentKind {
    /// Confidential VM: exits are mediated by the RMM and the monitor.
    RealmVM,
    /// Plain VM: the hypervisor receives every exit directly.
    NormalWorldVM,
}

impl DeploymentKind {
    /// The world the guest's own instructions execute in.
    pub fn world(self) -> SecurityState {
        match self {
            DeploymentKind::RealmVM => SecurityState::Realm,
            DeploymentKind::NormalWorldVM => SecurityState::Normal,
        }
    }
}

impl fmt::Display for DeploymentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DeploymentKind::RealmVM => "realm",
            DeploymentKind::NormalWorldVM => "normal",
        })
    }
}

/// Periodic timer frequencies driving VM exits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimerConfig {
    /// Guest kernel timer (Hz).
    pub el1_hz: u64,
    /// Hypervisor timer (Hz).
    pub el2_hz: u64,
}

impl TimerConfig {
    pub fn new(el1_hz: u64, el2_hz: u64) -> Result<TimerConfig, SimConfigError> {
        let t = TimerConfig { el1_hz, el2_hz };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<(), SimConfigError> {
        if self.el1_hz == 0 || self.el2_hz == 0 {
            return Err(SimConfigError::NonPositiveTimer);
        }
        Ok(())
    }
}

impl Default for TimerConfig {
    /// The calibration reference point: 100 Hz guest timer, 1 kHz
    /// hypervisor timer.
    fn default() -> TimerConfig {
        calibrate::DEFAULT_TIMERS
    }
}

/// Per-stage guest work and page counts for one inference service.
///
/// Stage fields are *guest* instruction counts — what the VM itself
/// executes, excluding exception handlers (the simulator adds those) and
/// excluding per-page I/O costs (`io_pages_in`/`io_pages_out` drive those).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadProfile {
    pub model_init: u64,
    pub read_input: u64,
    pub inference_compute: u64,
    pub write_output: u64,
    /// Pages copied in during `read_input`.
    pub io_pages_in: u64,
    /// Pages copied out during `write_output`.
    pub io_pages_out: u64,
    /// Pages the VM's memory occupies (delegated one by one at realm boot).
    pub boot_pages: u64,
}

impl WorkloadProfile {
    /// Guest instructions of one stage, by canonical stage name.
    pub fn stage_instructions(&self, stage: &str) -> Option<u64> {
        match stage {
            "model_init" => Some(self.model_init),
            "read_input" => Some(self.read_input),
            "inference_compute" => Some(self.inference_compute),
            "write_output" => Some(self.write_output),
            _ => None,
        }
    }
}

/// Per-event instruction costs of the simulated platform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostModel {
    /// Guest instructions per virtual second (converts instructions to
    /// timer ticks).
    pub ips: u64,
    /// Hypervisor instructions per exit (both kinds of VM).
    pub c_hyp: u64,
    /// RMM instructions per realm exit / re-entry.
    pub c_rmm_entry: u64,
    pub c_rmm_exit: u64,
    /// Monitor world-switch instructions per realm exit.
    pub c_mon: u64,
    /// Per-page I/O copy cost for a normal-world VM.
    pub c_io_nw: u64,
    /// Per-page I/O cost for a realm VM (bounce through unprotected
    /// memory); must be ≥ `c_io_nw`.
    pub c_io_realm: u64,
    /// Per-page delegation cost at realm boot; must be > 0.
    pub c_delegate: u64,
    /// Per-page reclaim/scrub cost at realm teardown.
    pub c_undelegate: u64,
    /// Fixed boot cost (firmware + kernel) per kind.
    pub c_boot_base_nw: u64,
    pub c_boot_base_realm: u64,
}

impl CostModel {
    /// The bundled calibrated model (identical to what
    /// [`fit_cost_model`] computes from [`refdata`]).
    pub fn calibrated() -> CostModel {
        CostModel {
            ips: 1_000_000_000,
            c_hyp: 54_552,
            c_rmm_entry: 79_103,
            c_rmm_exit: 79_103,
            c_mon: 19_708,
            c_io_nw: 4_096,
            c_io_realm: 16_979,
            c_delegate: 66_811,
            c_undelegate: 6_054,
            c_boot_base_nw: 788_700_000,
            c_boot_base_realm: 788_700_000,
        }
    }

    pub fn validate(&self) -> Result<(), SimConfigError> {
        if self.ips == 0 {
            return Err(SimConfigError::ZeroIps);
        }
        if self.c_io_realm < self.c_io_nw {
            return Err(SimConfigError::IoCostOrdering {
                realm: self.c_io_realm,
                nw: self.c_io_nw,
            });
        }
        if self.c_delegate == 0 {
            return Err(SimConfigError::ZeroDelegate);
        }
        Ok(())
    }

    /// Handler instructions per exit beyond the hypervisor's share —
    /// the realm-only RMM + monitor surcharge.
    pub fn realm_exit_surcharge(&self) -> u64 {
        self.c_rmm_entry
            .saturating_add(self.c_rmm_exit)
            .saturating_add(self.c_mon)
    }
}

/// Invalid simulator configuration (timers or cost model).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimConfigError {
    NonPositiveTimer,
    ZeroIps,
    IoCostOrdering { realm: u64, nw: u64 },
    ZeroDelegate,
}

impl fmt::Display for SimConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SimConfigError::NonPositiveTimer => {
                write!(f, "timer frequencies must both be at least 1 Hz")
            }
            SimConfigError::ZeroIps => write!(f, "ips must be positive"),
            SimConfigError::IoCostOrdering { realm, nw } => write!(
                f,
                "c_io_realm ({realm}) must be at least c_io_nw ({nw})"
            ),
            SimConfigError::ZeroDelegate => write!(f, "c_delegate must be positive"),
        }
    }
}

impl std::error::Error for SimConfigError {}

/// One cell of a simulation result: instructions one stage spent in one
/// execution context. Cells are the full joint breakdown; per-stage and
/// per-context views are marginals over them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimCell {
    pub stage: String,
    pub world: SecurityState,
    pub el: ExceptionLevel,
    pub instructions: u64,
}

/// Outcome of a simulation: instruction counts broken down jointly by
/// stage and execution context, plus the exit count.
///
/// Invariant: `total` equals the sum over `cells`, hence also the sum of
/// either marginal ([`per_stage`](Self::per_stage) /
/// [`per_context`](Self::per_context)). Cells are non-zero and canonically
/// ordered (stage order, then world, then EL), so equal results compare
/// equal structurally.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SimResult {
    /// Stage names in execution order (kept even when a stage cost 0).
    pub stages: Vec<String>,
    pub cells: Vec<SimCell>,
    pub total: u64,
    pub exits: u64,
}

impl SimResult {
    /// Instructions per stage; every listed stage appears, zero included.
    pub fn per_stage(&self) -> BTreeMap<String, u64> {
        let mut map: BTreeMap<String, u64> =
            self.stages.iter().map(|s| (s.clone(), 0)).collect();
        for cell in &self.cells {
            *map.entry(cell.stage.clone()).or_insert(0) += cell.instructions;
        }
        map
    }

    /// Instructions per (world, exception level); non-zero entries only.
    pub fn per_context(&self) -> BTreeMap<Context, u64> {
        let mut map = BTreeMap::new();
        for cell in &self.cells {
            *map.entry((cell.world, cell.el)).or_insert(0) += cell.instructions;
        }
        map
    }

    /// Sum this result into `self` stage-by-stage (used to compose a
    /// service from its stages). Stage order follows first appearance.
    pub fn absorb(&mut self, other: SimResult) {
        for stage in other.stages {
            if !self.stages.contains(&stage) {
                self.stages.push(stage);
            }
        }
        for cell in other.cells {
            match self.cells.iter_mut().find(|c| {
                c.stage == cell.stage && c.world == cell.world && c.el == cell.el
            }) {
                Some(existing) => {
                    existing.instructions =
                        existing.instructions.saturating_add(cell.instructions)
                }
                None => self.cells.push(cell),
            }
        }
        self.normalize();
        self.total = self.cells.iter().fold(0u64, |acc, c| {
            acc.saturating_add(c.instructions)
        });
        self.exits = self.exits.saturating_add(other.exits);
    }

    /// Restore canonical cell order (stage appearance order, then context).
    fn normalize(&mut self) {
        let index = |stage: &str| {
            self.stages
                .iter()
                .position(|s| s == stage)
                .unwrap_or(self.stages.len())
        };
        self.cells
            .sort_by_key(|c| (index(&c.stage), c.world, c.el));
    }
}

/// Builder enforcing the SimResult invariants by construction.
struct ResultBuilder {
    stages: Vec<String>,
    map: BTreeMap<(usize, Context), u64>,
    exits: u64,
}

impl ResultBuilder {
    fn new() -> ResultBuilder {
        ResultBuilder {
            stages: Vec::new(),
            map: BTreeMap::new(),
            exits: 0,
        }
    }

    fn stage(&mut self, name: &str) -> usize {
        match self.stages.iter().position(|s| s == name) {
            Some(i) => i,
            None => {
                self.stages.push(name.to_string());
                self.stages.len() - 1
            }
        }
    }

    fn add(&mut self, stage: usize, ctx: Context, instructions: u64) {
        if instructions == 0 {
            return;
        }
        let slot = self.map.entry((stage, ctx)).or_insert(0);
        *slot = slot.saturating_add(instructions);
    }

    fn finish(self) -> SimResult {
        let mut total: u64 = 0;
        let mut cells = Vec::with_capacity(self.map.len());
        for ((stage, (world, el)), instructions) in self.map {
            total = total.saturating_add(instructions);
            cells.push(SimCell {
                stage: self.stages[stage].clone(),
                world,
                el,
                instructions,
            });
        }
        SimResult {
            stages: self.stages,
            cells,
            total,
            exits: self.exits,
        }
    }
}

/// Timer-driven VM exits caused by `guest_instructions` of guest work.
///
/// Virtual time = instructions / ips; each timer fires ⌊time × hz⌋ times.
/// Handler instructions never advance virtual time.
pub fn count_exits(guest_instructions: u64, timers: TimerConfig, ips: u64) -> u64 {
    assert!(ips > 0, "ips must be positive");
    let ticks = |hz: u64| -> u64 {
        let t = u128::from(guest_instructions) * u128::from(hz) / u128::from(ips);
        u64::try_from(t).unwrap_or(u64::MAX)
    };
    ticks(timers.el1_hz).saturating_add(ticks(timers.el2_hz))
}

/// Guest instructions split across EL0 (applications) and EL1 (kernel).
/// The 90:10 ratio matches the reference per-EL attribution measurements.
fn split_guest(guest: u64) -> (u64, u64) {
    let el0 = u64::try_from(u128::from(guest) * 9 / 10).unwrap_or(u64::MAX);
    (el0, guest - el0)
}

fn add_exit_costs(
    b: &mut ResultBuilder,
    stage: usize,
    kind: DeploymentKind,
    exits: u64,
    cost: &CostModel,
) {
    let times = |c: u64| -> u64 {
        u64::try_from(u128::from(exits) * u128::from(c)).unwrap_or(u64::MAX)
    };
    // Every exit reaches the hypervisor. A realm exit additionally runs
    // the RMM on the way out and back in, and the monitor for the two
    // world switches.
    b.add(
        stage,
        (SecurityState::Normal, ExceptionLevel::El2),
        times(cost.c_hyp),
    );
    if kind == DeploymentKind::RealmVM {
        b.add(
            stage,
            (SecurityState::Realm, ExceptionLevel::El2),
            times(cost.c_rmm_entry.saturating_add(cost.c_rmm_exit)),
        );
        b.add(
            stage,
            (SecurityState::Root, ExceptionLevel::El3),
            times(cost.c_mon),
        );
    }
    b.exits = b.exits.saturating_add(exits);
}

/// Simulate one stage of pure guest work (no I/O): the guest instructions
/// plus the exit handlers they trigger.
pub fn simulate_stage(
    stage: &str,
    guest_instructions: u64,
    kind: DeploymentKind,
    timers: TimerConfig,
    cost: &CostModel,
) -> SimResult {
    let mut b = ResultBuilder::new();
    let idx = b.stage(stage);
    let (el0, el1) = split_guest(guest_instructions);
    b.add(idx, (kind.world(), ExceptionLevel::El0), el0);
    b.add(idx, (kind.world(), ExceptionLevel::El1), el1);
    let exits = count_exits(guest_instructions, timers, cost.ips);
    add_exit_costs(&mut b, idx, kind, exits, cost);
    b.finish()
}

/// Instructions spent copying `pages` across the VM boundary.
pub fn simulate_io(pages: u64, kind: DeploymentKind, cost: &CostModel) -> u64 {
    let per_page = match kind {
        DeploymentKind::RealmVM => cost.c_io_realm,
        DeploymentKind::NormalWorldVM => cost.c_io_nw,
    };
    u64::try_from(u128::from(pages) * u128::from(per_page)).unwrap_or(u64::MAX)
}

/// Where I/O cost lands: the normal-world share is the plain copy the
/// hypervisor does for any VM; a realm's surcharge is RMM-side copying
/// through the unprotected bounce region.
fn add_io_costs(
    b: &mut ResultBuilder,
    stage: usize,
    pages: u64,
    kind: DeploymentKind,
    cost: &CostModel,
) {
    let total = simulate_io(pages, kind, cost);
    let nw_share = simulate_io(pages, DeploymentKind::NormalWorldVM, cost);
    match kind {
        DeploymentKind::NormalWorldVM => {
            b.add(stage, (SecurityState::Normal, ExceptionLevel::El2), total);
        }
        DeploymentKind::RealmVM => {
            b.add(stage, (SecurityState::Normal, ExceptionLevel::El2), nw_share);
            b.add(
                stage,
                (SecurityState::Realm, ExceptionLevel::El2),
                total - nw_share,
            );
        }
    }
}

/// Simulate a whole inference service: the four stages in order, with I/O
/// page costs folded into `read_input` and `write_output`.
pub fn simulate_service(
    workload: &WorkloadProfile,
    kind: DeploymentKind,
    timers: TimerConfig,
    cost: &CostModel,
) -> SimResult {
    let mut b = ResultBuilder::new();
    for name in STAGE_NAMES {
        let guest = workload
            .stage_instructions(name)
            .expect("canonical stage names");
        let idx = b.stage(name);
        let (el0, el1) = split_guest(guest);
        b.add(idx, (kind.world(), ExceptionLevel::El0), el0);
        b.add(idx, (kind.world(), ExceptionLevel::El1), el1);
        let exits = count_exits(guest, timers, cost.ips);
        add_exit_costs(&mut b, idx, kind, exits, cost);
        match name {
            "read_input" => add_io_costs(&mut b, idx, workload.io_pages_in, kind, cost),
            "write_output" => add_io_costs(&mut b, idx, workload.io_pages_out, kind, cost),
            _ => {}
        }
    }
    b.finish()
}

/// Instructions to boot the VM. A realm pays the fixed base plus one
/// delegation per page; a normal-world VM pays only its base.
pub fn simulate_boot(boot_pages: u64, kind: DeploymentKind, cost: &CostModel) -> u64 {
    match kind {
        DeploymentKind::NormalWorldVM => cost.c_boot_base_nw,
        DeploymentKind::RealmVM => {
            let delegations =
                u64::try_from(u128::from(boot_pages) * u128::from(cost.c_delegate))
                    .unwrap_or(u64::MAX);
            cost.c_boot_base_realm.saturating_add(delegations)
        }
    }
}

/// Instructions to tear the VM down. Only a realm pays anything here: one
/// undelegate-and-scrub per page. (The model has no fixed teardown base.)
pub fn simulate_teardown(pages: u64, kind: DeploymentKind, cost: &CostModel) -> u64 {
    match kind {
        DeploymentKind::NormalWorldVM => 0,
        DeploymentKind::RealmVM => {
            u64::try_from(u128::from(pages) * u128::from(cost.c_undelegate))
                .unwrap_or(u64::MAX)
        }
    }
}
