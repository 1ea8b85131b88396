// SPDX-License-Identifier: Apache-2.0

//! Desk-scale model of confidential on-device inference on an Arm-CCA-style
//! machine.
//!
//! The crate has five layers, each usable on its own:
//!
//! - [`world`] — security states, PAS tags, the granule protection check,
//!   and page delegation: the isolation substrate.
//! - [`realm`] — realm VM lifecycle with measured population and
//!   attestation token issue/verify.
//! - [`protocol`] — the three-party (verifier, client device, model
//!   provider) attestation-gated deployment pipeline, with confidentiality
//!   scanning of everything the normal world can read.
//! - [`sim`] — deterministic exit-overhead simulator: guest work, timer
//!   exits, RMM/monitor handler costs, I/O amplification, boot/teardown;
//!   calibrated against reference FVP measurements in [`sim::refdata`].
//! - [`trace`] — parser and analyzer for marker-annotated instruction
//!   traces: stage segmentation, per-(world, EL) attribution, cross-run
//!   aggregation, and realm-vs-normal overhead reports.
//!
//! The `ccabench` binary fronts all of it; this library is the actual
//! implementation and the target of the test suites.

pub mod crypto;
pub mod protocol;
pub mod realm;
pub mod sim;
pub mod trace;
pub mod world;

pub use protocol::{
    run_demo, DemoConfig, DemoOutcome, DemoReport, DemoTransport, ModelBlob, ProtocolError,
    ProtocolMessage, RealmImage, ScanReport, SharedFs, TamperMode, WeightIndex,
};
pub use sim::{
    count_exits, simulate_boot, simulate_io, simulate_service, simulate_stage, simulate_teardown,
    CostModel, DeploymentKind, SimResult, TimerConfig, WorkloadProfile,
};
pub use realm::{
    AttestationToken, Measurement, Nonce, PlatformClaims, RealmDescriptor, RealmError, RealmState,
    RejectReason, UsagePolicy, Verdict,
};
pub use world::{
    gpc_check, AccessDecision, ExceptionLevel, GranuleProtectionTable, PasTag, SecurityState,
    WorldError, PAGE_SIZE,
};
