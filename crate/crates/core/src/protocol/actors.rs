// SPDX-License-Identifier: Apache-2.0

//! The three parties and the demo driver that runs the full pipeline.
//!
//! Each party is a sequential actor owning its state exclusively:
//!
//! - [`Verifier`] serves published realm images (step 1).
//! - [`Provider`] runs the session state machine: challenge, token
//!   verification, model delivery gated on acceptance, update queries
//!   (steps 3–5 and 8). Delivery is the `Accept` branch of the machine,
//!   so a model message without a preceding accepted attestation is
//!   unrepresentable, not merely checked.
//! - The client is a set of free functions ([`client_boot`],
//!   [`install_model`], [`nw_submit_query`], [`realm_answer`], …) driven
//!   by [`run_demo`], because the device holds all the mutable platform
//!   state (granule table, realm, shared filesystem).
//!
//! [`run_demo`] can run the server parties on the caller's thread
//! (lock-step, pumping each server exactly when its message is queued)
//! or on their own threads; the observable wire transcript is identical
//! in both modes, and a test holds that equality.

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::thread;

use crate::crypto::{sha256_parts, HmacKey};
use crate::realm::{
    verify_token, AttestationToken, Measurement, Nonce, PlatformClaims, RealmDescriptor,
    RealmError, RealmState, RejectReason, UsagePolicy, Verdict, NONCE_LEN,
};
use crate::world::{GranuleProtectionTable, PasTag, SecurityState};

use super::scan::{scan_normal_world, ScanReport, WeightIndex};
use super::shared_fs::SharedFs;
use super::transport::{duplex_pair, Channel, SocketChannel, TransportError};
use super::wire::encode_frame;
use super::{
    page_chunks, pages_for, ErrorCode, ModelBlob, ProtocolError, ProtocolMessage, RealmImage,
};

/// Deterministic byte stream for demo artifacts and test fixtures:
/// SHA-256 blocks over `(seed, label, block counter)`.
pub fn derive_bytes(seed: u64, label: &str, len: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(len.next_multiple_of(32));
    let mut counter = 0u64;
    while out.len() < len {
        out.extend_from_slice(&sha256_parts(&[
            &seed.to_be_bytes(),
            label.as_bytes(),
            &counter.to_be_bytes(),
        ]));
        counter += 1;
    }
    out.truncate(len);
    out
}

/// One of the three protocol parties.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Party {
    Client,
    Verifier,
    Provider,
}

impl std::fmt::Display for Party {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Party::Client => "client",
            Party::Verifier => "verifier",
            Party::Provider => "provider",
        })
    }
}

/// One sent message as an observer on the wire would record it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TranscriptEntry {
    pub from: Party,
    pub to: Party,
    /// Message variant name.
    pub kind: &'static str,
    /// Pipeline step (1–8); 0 for `Error`, which belongs to whatever
    /// phase refused.
    pub step: u8,
    /// The exact frame bytes that crossed the link.
    pub frame: Vec<u8>,
    /// True when the link models post-handshake TLS ciphertext: the
    /// bytes are not normal-world-visible plaintext.
    pub opaque: bool,
}

/// Channel wrapper that appends every *sent* message to a shared
/// transcript. Each message is recorded exactly once, by its sender, so
/// the log order is the wire order.
pub struct RecordingChannel {
    inner: Box<dyn Channel>,
    log: Arc<Mutex<Vec<TranscriptEntry>>>,
    from: Party,
    to: Party,
    /// Provider links model TLS: everything after the step-3 `Hello`
    /// is ciphertext to an observer.
    tls: bool,
}

impl RecordingChannel {
    pub fn new(
        inner: Box<dyn Channel>,
        log: Arc<Mutex<Vec<TranscriptEntry>>>,
        from: Party,
        to: Party,
        tls: bool,
    ) -> RecordingChannel {
        RecordingChannel {
            inner,
            log,
            from,
            to,
            tls,
        }
    }
}

impl Channel for RecordingChannel {
    fn send(&mut self, msg: &ProtocolMessage) -> Result<(), TransportError> {
        // Record *before* the frame enters the channel: the receiver can
        // only react to — and log — its response after the frame is
        // transmitted, so logging first makes the log order the causal
        // wire order even with the parties on separate threads.
        let entry = TranscriptEntry {
            from: self.from,
            to: self.to,
            kind: msg.kind(),
            step: msg.step().unwrap_or(0),
            frame: encode_frame(msg),
            opaque: self.tls && !matches!(msg, ProtocolMessage::Hello),
        };
        self.log.lock().expect("transcript lock").push(entry);
        self.inner.send(msg)
    }

    fn recv(&mut self) -> Result<ProtocolMessage, TransportError> {
        self.inner.recv()
    }
}

/// Normal-world page allocator: hands out normal-PAS pages for
/// delegation, skipping a reserved set (the shared-filesystem pages) and
/// starting from a caller-chosen cursor so layouts vary run to run.
pub struct PageAllocator {
    cursor: u64,
    reserved: BTreeSet<u64>,
}

impl PageAllocator {
    pub fn new(start: u64, reserved: impl IntoIterator<Item = u64>) -> PageAllocator {
        PageAllocator {
            cursor: start,
            reserved: reserved.into_iter().collect(),
        }
    }

    /// Pages this allocator could still hand out.
    pub fn available(&self, gpt: &GranuleProtectionTable) -> u64 {
        (0..gpt.total_pages())
            .filter(|page| {
                !self.reserved.contains(page) && gpt.pas_of(*page) == Ok(PasTag::NormalPas)
            })
            .count() as u64
    }

    /// Next allocatable page at or after the cursor, wrapping once.
    pub fn next(&mut self, gpt: &GranuleProtectionTable) -> Option<u64> {
        let total = gpt.total_pages();
        if total == 0 {
            return None;
        }
        let start = self.cursor % total;
        for offset in 0..total {
            let page = (start + offset) % total;
            if self.reserved.contains(&page) {
                continue;
            }
            if gpt.pas_of(page) == Ok(PasTag::NormalPas) {
                self.cursor = (page + 1) % total;
                return Some(page);
            }
        }
        None
    }
}

// ---------------------------------------------------------------------
// Verifier
// ---------------------------------------------------------------------

/// Image registry: publishes realm images with their reference
/// measurements (step 1).
#[derive(Default)]
pub struct Verifier {
    images: std::collections::BTreeMap<String, RealmImage>,
}

impl Verifier {
    pub fn new() -> Verifier {
        Verifier::default()
    }

    pub fn publish(&mut self, image: RealmImage) {
        self.images.insert(image.image_id.clone(), image);
    }

    /// Pure request → response map: `FetchImage` for a registered id
    /// returns the image with its published measurement; unknown ids
    /// draw `Error(UnknownImage)`; anything else is out of order.
    pub fn respond(&self, request: &ProtocolMessage) -> ProtocolMessage {
        match request {
            ProtocolMessage::FetchImage(image_id) => match self.images.get(image_id) {
                Some(image) => ProtocolMessage::Image(image.clone()),
                None => ProtocolMessage::Error(ErrorCode::UnknownImage),
            },
            _ => ProtocolMessage::Error(ErrorCode::OutOfOrder),
        }
    }

    /// Answer exactly one queued request; a closed link is a no-op.
    pub fn serve_one(&self, chan: &mut dyn Channel) -> Result<(), ProtocolError> {
        match chan.recv() {
            Ok(request) => {
                chan.send(&self.respond(&request))?;
                Ok(())
            }
            Err(TransportError::Closed) => Ok(()),
            Err(err) => Err(err.into()),
        }
    }

    /// Answer requests until the peer hangs up; returns how many were
    /// served.
    pub fn serve(&self, chan: &mut dyn Channel) -> Result<u64, ProtocolError> {
        let mut served = 0;
        loop {
            match chan.recv() {
                Ok(request) => {
                    chan.send(&self.respond(&request))?;
                    served += 1;
                }
                Err(TransportError::Closed) => return Ok(served),
                Err(err) => return Err(err.into()),
            }
        }
    }
}

// ---------------------------------------------------------------------
// Provider
// ---------------------------------------------------------------------

/// What the provider demands of a realm before releasing weights. The
/// provider pins both the realm measurement and the platform firmware
/// claims; an alternative split would give the firmware pin to the
/// verifier, but nothing here depends on which party holds it.
#[derive(Debug, Clone, Copy)]
pub struct ProviderExpectations {
    pub measurement: Measurement,
    pub platform: PlatformClaims,
}

/// Where a provider session currently stands.
#[derive(Clone, Copy)]
enum Phase {
    AwaitHello,
    AwaitEvidence(Nonce),
    Established,
}

impl Phase {
    fn name(self) -> &'static str {
        match self {
            Phase::AwaitHello => "awaiting hello",
            Phase::AwaitEvidence(_) => "awaiting evidence",
            Phase::Established => "session established",
        }
    }
}

/// How a provider session ended.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SessionOutcome {
    /// Attestation accepted; model delivered; link served until close.
    Delivered { updates_served: u32 },
    /// Evidence refused; no model bytes were sent.
    Rejected(RejectReason),
    /// Peer hung up before presenting evidence.
    Disconnected,
}

/// Model owner: challenges realms, verifies their tokens, and releases
/// weights only on acceptance (steps 3–5, 8).
pub struct Provider {
    model: ModelBlob,
    version: u32,
    /// Applied right after the next delivery, so an update becomes
    /// available mid-session deterministically.
    staged_update: Option<(ModelBlob, u32)>,
    expectations: ProviderExpectations,
    token_key: HmacKey,
    nonce_seed: [u8; 32],
    nonce_counter: u64,
    phase: Phase,
    updates_served: u32,
}

impl Provider {
    pub fn new(
        model: ModelBlob,
        version: u32,
        expectations: ProviderExpectations,
        token_key: HmacKey,
        nonce_seed: [u8; 32],
    ) -> Provider {
        Provider {
            model,
            version,
            staged_update: None,
            expectations,
            token_key,
            nonce_seed,
            nonce_counter: 0,
            phase: Phase::AwaitHello,
            updates_served: 0,
        }
    }

    /// Stage a newer model to publish immediately after the next
    /// delivery completes.
    pub fn stage_update(&mut self, model: ModelBlob, version: u32) {
        self.staged_update = Some((model, version));
    }

    pub fn version(&self) -> u32 {
        self.version
    }

    /// Reset session-scoped state for a fresh connection. The nonce
    /// counter deliberately survives, so challenges never repeat across
    /// sessions.
    pub fn begin_session(&mut self) {
        self.phase = Phase::AwaitHello;
        self.updates_served = 0;
    }

    fn fresh_nonce(&mut self) -> Nonce {
        let digest = sha256_parts(&[&self.nonce_seed, &self.nonce_counter.to_be_bytes()]);
        self.nonce_counter += 1;
        Nonce(digest[..NONCE_LEN].try_into().expect("nonce fits in digest"))
    }

    /// Outcome implied by the peer closing the link in the current phase.
    pub fn close_outcome(&self) -> SessionOutcome {
        match self.phase {
            Phase::Established => SessionOutcome::Delivered {
                updates_served: self.updates_served,
            },
            _ => SessionOutcome::Disconnected,
        }
    }

    fn out_of_order(
        &mut self,
        chan: &mut dyn Channel,
        got: &'static str,
    ) -> Result<Option<SessionOutcome>, ProtocolError> {
        chan.send(&ProtocolMessage::Error(ErrorCode::OutOfOrder))?;
        Err(ProtocolError::OutOfOrder {
            state: self.phase.name(),
            got,
        })
    }

    /// Advance the session by one incoming message. Returns
    /// `Some(outcome)` when the session reached a terminal state (a
    /// rejection); protocol violations are answered on the wire and then
    /// surfaced as local errors.
    pub fn handle(
        &mut self,
        msg: ProtocolMessage,
        chan: &mut dyn Channel,
    ) -> Result<Option<SessionOutcome>, ProtocolError> {
        match msg {
            ProtocolMessage::Hello => match self.phase {
                Phase::AwaitHello => {
                    let nonce = self.fresh_nonce();
                    chan.send(&ProtocolMessage::Challenge(nonce))?;
                    self.phase = Phase::AwaitEvidence(nonce);
                    Ok(None)
                }
                _ => self.out_of_order(chan, "Hello"),
            },
            ProtocolMessage::Evidence(token) => match self.phase {
                Phase::AwaitEvidence(expected_nonce) => {
                    let verdict = verify_token(
                        &token,
                        self.expectations.measurement,
                        &self.expectations.platform,
                        expected_nonce,
                        &self.token_key,
                    );
                    match verdict {
                        Verdict::Accept => {
                            chan.send(&ProtocolMessage::ModelDelivery(self.model.clone(), true))?;
                            self.phase = Phase::Established;
                            if let Some((model, version)) = self.staged_update.take() {
                                self.model = model;
                                self.version = version;
                            }
                            Ok(None)
                        }
                        Verdict::Reject(reason) => {
                            chan.send(&ProtocolMessage::Error(ErrorCode::AttestationRejected(
                                reason,
                            )))?;
                            self.phase = Phase::AwaitHello;
                            Ok(Some(SessionOutcome::Rejected(reason)))
                        }
                    }
                }
                _ => self.out_of_order(chan, "Evidence"),
            },
            ProtocolMessage::UpdateQuery(model_id, version) => match self.phase {
                Phase::Established => {
                    let newer = model_id == self.model.model_id && version < self.version;
                    let reply = newer.then(|| self.model.clone());
                    chan.send(&ProtocolMessage::UpdateReply(reply))?;
                    self.updates_served += 1;
                    Ok(None)
                }
                _ => {
                    chan.send(&ProtocolMessage::Error(ErrorCode::SessionRequired))?;
                    Err(ProtocolError::SessionRequired { got: "UpdateQuery" })
                }
            },
            other => {
                let got = other.kind();
                self.out_of_order(chan, got)
            }
        }
    }

    /// Run one full session: reset, then process messages until the
    /// session terminates (rejection) or the peer hangs up.
    pub fn serve(&mut self, chan: &mut dyn Channel) -> Result<SessionOutcome, ProtocolError> {
        self.begin_session();
        loop {
            match chan.recv() {
                Ok(msg) => {
                    if let Some(outcome) = self.handle(msg, chan)? {
                        return Ok(outcome);
                    }
                }
                Err(TransportError::Closed) => return Ok(self.close_outcome()),
                Err(err) => return Err(err.into()),
            }
        }
    }
}

// ---------------------------------------------------------------------
// Client operations
// ---------------------------------------------------------------------

/// Client-side device configuration.
pub struct ClientConfig {
    pub policy: UsagePolicy,
    /// Firmware claims the device's tokens will carry.
    pub platform: PlatformClaims,
    /// Token-signing key (the platform attestation key).
    pub platform_key: HmacKey,
    /// Fingerprint of the provider's static identity key — the TLS pin
    /// from the device's provisioning. The null-cipher channel gives it
    /// nothing to check against at runtime; it is carried as
    /// configuration and logged.
    pub provider_pin: Measurement,
}

fn unexpected(state: &'static str, msg: &ProtocolMessage) -> ProtocolError {
    ProtocolError::OutOfOrder {
        state,
        got: msg.kind(),
    }
}

/// Step 1, receive half: the verifier's answer to `FetchImage`.
pub fn expect_image(chan: &mut dyn Channel, image_id: &str) -> Result<RealmImage, ProtocolError> {
    match chan.recv()? {
        ProtocolMessage::Image(image) => Ok(image),
        ProtocolMessage::Error(ErrorCode::UnknownImage) => Err(ProtocolError::UnknownImage {
            image_id: image_id.to_owned(),
        }),
        ProtocolMessage::Error(code) => Err(ProtocolError::PeerError(code)),
        other => Err(unexpected("awaiting image", &other)),
    }
}

/// Step 2: create a realm from the image, populate every payload chunk
/// in canonical order onto freshly delegated granules, and activate.
/// The client does *not* cross-check the resulting measurement — a
/// tampered image boots fine and is caught by the provider's token
/// verification later.
pub fn client_boot(
    gpt: &mut GranuleProtectionTable,
    alloc: &mut PageAllocator,
    image: &RealmImage,
    policy: UsagePolicy,
) -> Result<RealmDescriptor, ProtocolError> {
    let needed = image.pages_needed();
    let available = alloc.available(gpt);
    if needed > available {
        return Err(ProtocolError::OutOfPages { needed, available });
    }
    let mut realm = RealmDescriptor::create(image.image_id.as_bytes(), policy);
    for (ipa, chunk) in page_chunks(&image.payload) {
        let page = alloc
            .next(gpt)
            .ok_or(ProtocolError::OutOfPages { needed, available })?;
        realm.populate(gpt, page, ipa, chunk)?;
    }
    realm.activate()?;
    Ok(realm)
}

/// Step 4, receive half: the provider's challenge.
pub fn expect_challenge(chan: &mut dyn Channel) -> Result<Nonce, ProtocolError> {
    match chan.recv()? {
        ProtocolMessage::Challenge(nonce) => Ok(nonce),
        ProtocolMessage::Error(code) => Err(ProtocolError::PeerError(code)),
        other => Err(unexpected("awaiting challenge", &other)),
    }
}

/// Step 5, receive half: the model, or the provider's rejection.
pub fn expect_delivery(chan: &mut dyn Channel) -> Result<ModelBlob, ProtocolError> {
    match chan.recv()? {
        ProtocolMessage::ModelDelivery(blob, _encrypted) => Ok(blob),
        ProtocolMessage::Error(ErrorCode::AttestationRejected(reason)) => {
            Err(ProtocolError::Rejected(reason))
        }
        ProtocolMessage::Error(code) => Err(ProtocolError::PeerError(code)),
        other => Err(unexpected("awaiting model delivery", &other)),
    }
}

/// Step 5, landing half: write the weights chunk by chunk into freshly
/// delegated realm granules. Returns the granules used — always
/// `⌈size/4096⌉` of them.
pub fn install_model(
    realm: &mut RealmDescriptor,
    gpt: &mut GranuleProtectionTable,
    alloc: &mut PageAllocator,
    blob: &ModelBlob,
) -> Result<Vec<u64>, ProtocolError> {
    let needed = pages_for(blob.weights.len());
    let available = alloc.available(gpt);
    if needed > available {
        return Err(ProtocolError::OutOfPages { needed, available });
    }
    let mut pages = Vec::with_capacity(needed as usize);
    for (_ipa, chunk) in page_chunks(&blob.weights) {
        let page = alloc
            .next(gpt)
            .ok_or(ProtocolError::OutOfPages { needed, available })?;
        realm.install_data_page(gpt, page, chunk)?;
        pages.push(page);
    }
    Ok(pages)
}

/// Step 8, receive half: the provider's update decision.
pub fn expect_update_reply(chan: &mut dyn Channel) -> Result<Option<ModelBlob>, ProtocolError> {
    match chan.recv()? {
        ProtocolMessage::UpdateReply(reply) => Ok(reply),
        ProtocolMessage::Error(code) => Err(ProtocolError::PeerError(code)),
        other => Err(unexpected("awaiting update reply", &other)),
    }
}

/// Step 6: the realm announces readiness by raising the shared flag.
pub fn announce_ready(
    shared: &SharedFs,
    gpt: &mut GranuleProtectionTable,
) -> Result<(), ProtocolError> {
    shared.set_ready(gpt, SecurityState::Realm, true)?;
    Ok(())
}

/// Step 7, normal-world half: drop a query into the input slot.
/// Refused before the readiness announcement.
pub fn nw_submit_query(
    shared: &SharedFs,
    gpt: &mut GranuleProtectionTable,
    input: &[u8],
) -> Result<(), ProtocolError> {
    if !shared.is_ready(gpt, SecurityState::Normal)? {
        return Err(ProtocolError::NotReady);
    }
    shared.write_input(gpt, SecurityState::Normal, input)?;
    Ok(())
}

/// Step 7, realm half: take the pending query, count it against the
/// usage policy, run inference, and write the answer. Returns `false`
/// when no query is pending. On a policy bound the realm destroys
/// itself — scrubbing every granule — lowers the flag, and reports
/// [`ProtocolError::Expired`].
pub fn realm_answer(
    realm: &mut RealmDescriptor,
    gpt: &mut GranuleProtectionTable,
    shared: &SharedFs,
    infer: impl FnOnce(&[u8]) -> Vec<u8>,
    now: u64,
) -> Result<bool, ProtocolError> {
    let Some(input) = shared.take_input(gpt, SecurityState::Realm)? else {
        return Ok(false);
    };
    match realm.record_inference(now) {
        Ok(()) => {}
        Err(RealmError::LimitExceeded) => {
            realm.destroy(gpt)?;
            shared.set_ready(gpt, SecurityState::Normal, false)?;
            return Err(ProtocolError::Expired);
        }
        Err(err) => return Err(err.into()),
    }
    let output = infer(&input);
    shared.write_output(gpt, SecurityState::Realm, &output)?;
    Ok(true)
}

/// Step 7, normal-world half: collect the answer, if one is waiting.
pub fn nw_collect_answer(
    shared: &SharedFs,
    gpt: &mut GranuleProtectionTable,
) -> Result<Option<Vec<u8>>, ProtocolError> {
    Ok(shared.take_output(gpt, SecurityState::Normal)?)
}

// ---------------------------------------------------------------------
// Demo driver
// ---------------------------------------------------------------------

/// Which protocol element the demo corrupts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TamperMode {
    /// Flip a byte of the fetched image before boot; the realm
    /// measurement then disagrees with the published one.
    Image,
    /// Flip a byte of the token signature before presenting it.
    Token,
    /// Present evidence captured under an earlier session's challenge.
    Replay,
}

impl std::str::FromStr for TamperMode {
    type Err = String;

    fn from_str(s: &str) -> Result<TamperMode, String> {
        match s {
            "image" => Ok(TamperMode::Image),
            "token" => Ok(TamperMode::Token),
            "replay" => Ok(TamperMode::Replay),
            other => Err(format!(
                "unknown tamper mode {other:?} (expected image, token, or replay)"
            )),
        }
    }
}

impl std::fmt::Display for TamperMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TamperMode::Image => "image",
            TamperMode::Token => "token",
            TamperMode::Replay => "replay",
        })
    }
}

/// Which transport carries the two links.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DemoTransport {
    /// In-process duplex queues (default).
    Queues,
    /// Loopback TCP. Stream buffering makes single-threaded pumping
    /// deadlock-prone for large frames, so this transport always runs
    /// the servers on threads.
    Sockets,
}

impl std::str::FromStr for DemoTransport {
    type Err = String;

    fn from_str(s: &str) -> Result<DemoTransport, String> {
        match s {
            "queue" | "queues" => Ok(DemoTransport::Queues),
            "socket" | "sockets" => Ok(DemoTransport::Sockets),
            other => Err(format!(
                "unknown transport {other:?} (expected queue or socket)"
            )),
        }
    }
}

/// Everything [`run_demo`] needs. Field defaults come from
/// [`DemoConfig::new`]; construct with that and override fields.
#[derive(Debug, Clone)]
pub struct DemoConfig {
    /// Seed for every derived artifact: payloads, weights, keys, page
    /// layout.
    pub seed: u64,
    /// Size of the simulated physical memory, in pages.
    pub total_pages: u64,
    /// Realm image payload size in bytes.
    pub image_bytes: usize,
    /// Model weight size in bytes.
    pub model_bytes: usize,
    /// Number of inference queries the normal world submits.
    pub query_count: u32,
    /// Usage policy the realm is created under.
    pub policy: UsagePolicy,
    /// Corrupt one protocol element to watch the pipeline refuse it.
    pub tamper: Option<TamperMode>,
    /// Run verifier and provider on their own threads instead of
    /// lock-step on the caller's thread.
    pub threaded: bool,
    pub transport: DemoTransport,
    /// Back the shared filesystem with this directory instead of
    /// normal-PAS pages.
    pub shared_dir: Option<PathBuf>,
    /// Provider gains a newer model version right after delivery, so
    /// the step-8 poll returns an update.
    pub update_available: bool,
}

impl DemoConfig {
    pub fn new(seed: u64) -> DemoConfig {
        DemoConfig {
            seed,
            total_pages: 512,
            image_bytes: 10_000,
            model_bytes: 64 * 1024,
            query_count: 3,
            policy: UsagePolicy::unlimited(),
            tamper: None,
            threaded: false,
            transport: DemoTransport::Queues,
            shared_dir: None,
            update_available: false,
        }
    }
}

/// How the pipeline ended, from the device's point of view.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DemoOutcome {
    /// Model delivered; queries answered (identity inference).
    Completed {
        answers: Vec<Vec<u8>>,
        /// The usage policy ran out mid-way and the realm destroyed
        /// itself.
        expired: bool,
        /// The step-8 poll returned a newer model and it was installed.
        update_installed: bool,
    },
    /// The provider refused the realm's evidence; no model bytes moved.
    Rejected(RejectReason),
}

/// Full record of one pipeline run.
#[derive(Debug)]
pub struct DemoReport {
    pub outcome: DemoOutcome,
    /// Every message sent on either link, in wire order.
    pub transcript: Vec<TranscriptEntry>,
    /// Client-side milestones, human-readable.
    pub events: Vec<String>,
    /// Confidentiality scan over normal-world pages, shared files, and
    /// plaintext frames, taken while the weights were still resident.
    pub scan: ScanReport,
    /// The verifier's reference measurement for the image.
    pub published_measurement: Measurement,
    /// What the booted realm actually measured.
    pub realm_measurement: Measurement,
    /// Granules that held model weights.
    pub model_pages: Vec<u64>,
    /// Every granule the realm owned before teardown.
    pub realm_granules: Vec<u64>,
    /// After teardown, all former realm granules were normal-PAS and
    /// zero-filled.
    pub scrub_verified: bool,
}

fn hex_prefix(measurement: &Measurement) -> String {
    measurement
        .as_bytes()
        .iter()
        .take(6)
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn u64_from(bytes: &[u8]) -> u64 {
    u64::from_be_bytes(bytes[..8].try_into().expect("8 bytes"))
}

/// Seed-dependent distinct page picks for the shared region.
fn pick_distinct_pages(seed: u64, total_pages: u64, count: usize) -> Vec<u64> {
    let raw = derive_bytes(seed, "shared-layout", count * 8);
    let mut picks = Vec::with_capacity(count);
    for i in 0..count {
        let mut page = u64_from(&raw[i * 8..]) % total_pages;
        while picks.contains(&page) {
            page = (page + 1) % total_pages;
        }
        picks.push(page);
    }
    picks
}

fn make_link(
    transport: DemoTransport,
    log: &Arc<Mutex<Vec<TranscriptEntry>>>,
    client_of: Party,
    tls: bool,
) -> Result<(RecordingChannel, RecordingChannel), ProtocolError> {
    let (client_end, server_end): (Box<dyn Channel>, Box<dyn Channel>) = match transport {
        DemoTransport::Queues => {
            let (a, b) = duplex_pair();
            (Box::new(a), Box::new(b))
        }
        DemoTransport::Sockets => {
            let (a, b) = SocketChannel::loopback_pair().map_err(TransportError::Io)?;
            (Box::new(a), Box::new(b))
        }
    };
    Ok((
        RecordingChannel::new(client_end, Arc::clone(log), Party::Client, client_of, tls),
        RecordingChannel::new(server_end, Arc::clone(log), client_of, Party::Client, tls),
    ))
}

/// Pump one queued request through the verifier when it runs lock-step.
fn pump_verifier(
    verifier: &Verifier,
    server: &mut Option<RecordingChannel>,
) -> Result<(), ProtocolError> {
    if let Some(chan) = server.as_mut() {
        verifier.serve_one(chan)?;
    }
    Ok(())
}

/// Pump one queued message through the provider when it runs lock-step.
fn pump_provider(
    provider: &mut Option<Provider>,
    servers: &mut [Option<RecordingChannel>],
    session: usize,
) -> Result<(), ProtocolError> {
    if let Some(p) = provider.as_mut() {
        let chan = servers[session]
            .as_mut()
            .expect("lock-step server channel present");
        match chan.recv() {
            Ok(msg) => {
                p.handle(msg, chan)?;
            }
            Err(TransportError::Closed) => {}
            Err(err) => return Err(err.into()),
        }
    }
    Ok(())
}

/// Drive the full eight-step pipeline and report everything observable.
///
/// Attestation rejections are reported as
/// [`DemoOutcome::Rejected`], not as errors — watching the pipeline
/// refuse tampered evidence is the point of the tamper modes. `Err` is
/// reserved for infrastructure failures.
pub fn run_demo(config: &DemoConfig) -> Result<DemoReport, ProtocolError> {
    assert!(config.total_pages >= 8, "demo needs at least 8 pages");
    assert!(config.image_bytes >= 1, "demo needs a non-empty image");
    assert!(config.model_bytes >= 1, "demo needs a non-empty model");
    // Stream sockets buffer; pumping them single-threaded can deadlock
    // on large frames, so that combination is promoted to threads.
    let threaded = config.threaded || config.transport == DemoTransport::Sockets;
    let seed = config.seed;

    // --- Artifacts, all derived from the seed -------------------------
    let image = RealmImage::build(
        "attested-inference-stack",
        derive_bytes(seed, "image-payload", config.image_bytes),
    );
    let model_v1 = ModelBlob::new(
        "desk-model",
        derive_bytes(seed, "model-weights-v1", config.model_bytes),
    );
    let model_v2 = ModelBlob::new(
        "desk-model",
        derive_bytes(seed, "model-weights-v2", config.model_bytes),
    );
    let platform = PlatformClaims {
        monitor_digest: Measurement(sha256_parts(&[b"monitor firmware", &seed.to_be_bytes()])),
        rmm_digest: Measurement(sha256_parts(&[b"rmm firmware", &seed.to_be_bytes()])),
    };
    let platform_key = HmacKey::new(derive_bytes(seed, "platform-attestation-key", 32));
    let provider_identity = derive_bytes(seed, "provider-identity-key", 32);
    let client_config = ClientConfig {
        policy: config.policy,
        platform,
        platform_key,
        provider_pin: Measurement(crate::crypto::sha256(&provider_identity)),
    };
    let inputs: Vec<Vec<u8>> = (0..config.query_count)
        .map(|i| derive_bytes(seed, &format!("query-{i}"), 32 + 16 * i as usize))
        .collect();

    // --- Device memory and shared filesystem --------------------------
    let mut gpt = GranuleProtectionTable::new(config.total_pages);
    let (shared, reserved) = match &config.shared_dir {
        Some(dir) => (SharedFs::dir(dir)?, Vec::new()),
        None => {
            let picks = pick_distinct_pages(seed, config.total_pages, 3);
            let fs = SharedFs::pages(&gpt, vec![picks[0]], vec![picks[1]], picks[2])?;
            (fs, picks)
        }
    };
    let mut alloc = PageAllocator::new(
        u64_from(&derive_bytes(seed, "alloc-start", 8)) % config.total_pages,
        reserved.iter().copied(),
    );

    // --- Parties -------------------------------------------------------
    let mut verifier = Verifier::new();
    verifier.publish(image.clone());
    let expectations = ProviderExpectations {
        measurement: image.published_measurement,
        platform,
    };
    let mut provider = Provider::new(
        model_v1.clone(),
        1,
        expectations,
        client_config.platform_key.clone(),
        derive_bytes(seed, "nonce-seed", 32)
            .try_into()
            .expect("32 bytes"),
    );
    if config.update_available {
        provider.stage_update(model_v2.clone(), 2);
    }

    // --- Links ----------------------------------------------------------
    let log: Arc<Mutex<Vec<TranscriptEntry>>> = Arc::default();
    let sessions = if config.tamper == Some(TamperMode::Replay) {
        2
    } else {
        1
    };
    let (v_client, v_server) = make_link(config.transport, &log, Party::Verifier, false)?;
    let mut v_client = Some(v_client);
    let mut p_clients: Vec<Option<RecordingChannel>> = Vec::new();
    let mut p_servers_all: Vec<RecordingChannel> = Vec::new();
    for _ in 0..sessions {
        let (c, s) = make_link(config.transport, &log, Party::Provider, true)?;
        p_clients.push(Some(c));
        p_servers_all.push(s);
    }

    let mut events: Vec<String> = Vec::new();
    events.push(format!(
        "provider identity pin {} (null-cipher link: pin carried as configuration)",
        hex_prefix(&client_config.provider_pin)
    ));

    thread::scope(|scope| -> Result<DemoReport, ProtocolError> {
        // Server placement: threads take the server channel ends and the
        // provider itself; lock-step keeps them local and pumps inline.
        let mut v_server_local: Option<RecordingChannel> = None;
        let mut p_servers_local: Vec<Option<RecordingChannel>> = Vec::new();
        let mut provider_local: Option<Provider> = None;
        let mut verifier_handle = None;
        let mut provider_handle = None;
        if threaded {
            let verifier_ref = &verifier;
            let mut vs = v_server;
            verifier_handle = Some(scope.spawn(move || verifier_ref.serve(&mut vs)));
            let mut moved_provider = provider;
            let server_ends = p_servers_all;
            provider_handle = Some(scope.spawn(
                move || -> Result<Vec<SessionOutcome>, ProtocolError> {
                    let mut outcomes = Vec::new();
                    for mut chan in server_ends {
                        outcomes.push(moved_provider.serve(&mut chan)?);
                    }
                    Ok(outcomes)
                },
            ));
        } else {
            v_server_local = Some(v_server);
            p_servers_local = p_servers_all.into_iter().map(Some).collect();
            provider_local = Some(provider);
        }

        // --- Step 1: fetch the image -----------------------------------
        {
            let chan = v_client.as_mut().expect("verifier link open");
            chan.send(&ProtocolMessage::FetchImage(image.image_id.clone()))?;
            pump_verifier(&verifier, &mut v_server_local)?;
        }
        let mut fetched = expect_image(
            v_client.as_mut().expect("verifier link open"),
            &image.image_id,
        )?;
        events.push(format!(
            "step 1: fetched image {:?} ({} bytes, published measurement {})",
            fetched.image_id,
            fetched.payload.len(),
            hex_prefix(&fetched.published_measurement)
        ));
        // Hang up the verifier link before any provider traffic.
        v_client = None;
        let _ = v_server_local.take();
        let _ = &v_client;

        if config.tamper == Some(TamperMode::Image) {
            fetched.payload[0] ^= 0x01;
            events.push("tamper: flipped image payload byte 0 before boot".to_owned());
        }

        // --- Step 2: boot the realm -------------------------------------
        let mut realm = client_boot(&mut gpt, &mut alloc, &fetched, client_config.policy)?;
        let measurement_matches = realm.measurement() == image.published_measurement;
        events.push(format!(
            "step 2: realm {} active over {} granules; measurement {} published value",
            realm.id(),
            realm.granules().len(),
            if measurement_matches {
                "matches"
            } else {
                "DIFFERS from"
            }
        ));
        for page in shared.backing_pages() {
            realm.add_unprotected_page(&gpt, page)?;
        }
        let mut realm_granules = realm.granules().to_vec();

        // --- Steps 3–5: attested sessions --------------------------------
        let mut rejection: Option<RejectReason> = None;
        let mut delivered: Option<ModelBlob> = None;
        let mut captured_token: Option<AttestationToken> = None;
        for session in 0..sessions {
            if let Some(p) = provider_local.as_mut() {
                p.begin_session();
            }
            {
                let chan: &mut dyn Channel = p_clients[session].as_mut().expect("link open");
                chan.send(&ProtocolMessage::Hello)?;
            }
            events.push(format!("step 3: hello sent (session {})", session + 1));
            pump_provider(&mut provider_local, &mut p_servers_local, session)?;
            let nonce = expect_challenge(p_clients[session].as_mut().expect("link open"))?;

            if config.tamper == Some(TamperMode::Replay) && session == 0 {
                // Capture valid evidence under this session's challenge,
                // then walk away; the replay happens in session 2.
                captured_token =
                    Some(realm.attest(nonce, &client_config.platform, &client_config.platform_key)?);
                events.push(
                    "step 4: evidence captured for replay; abandoning session 1".to_owned(),
                );
                p_clients[session] = None;
                p_servers_local.get_mut(session).map(|s| *s = None);
                continue;
            }

            let mut token = match captured_token.take() {
                Some(old) => {
                    events.push(
                        "tamper: presenting session 1 evidence against session 2 challenge"
                            .to_owned(),
                    );
                    old
                }
                None => realm.attest(nonce, &client_config.platform, &client_config.platform_key)?,
            };
            if config.tamper == Some(TamperMode::Token) {
                token.signature[0] ^= 0x01;
                events.push("tamper: flipped token signature byte 0".to_owned());
            }
            {
                let chan: &mut dyn Channel = p_clients[session].as_mut().expect("link open");
                chan.send(&ProtocolMessage::Evidence(token))?;
            }
            events.push("step 4: evidence presented".to_owned());
            pump_provider(&mut provider_local, &mut p_servers_local, session)?;
            match expect_delivery(p_clients[session].as_mut().expect("link open")) {
                Ok(blob) => {
                    events.push(format!(
                        "step 5: model {:?} received ({} bytes)",
                        blob.model_id, blob.size_bytes
                    ));
                    delivered = Some(blob);
                }
                Err(ProtocolError::Rejected(reason)) => {
                    events.push(format!("step 5: attestation rejected: {reason}"));
                    rejection = Some(reason);
                }
                Err(err) => return Err(err),
            }
        }
        let last_session = sessions - 1;

        // --- Step 5 landing + steps 6–7 ----------------------------------
        let mut model_pages: Vec<u64> = Vec::new();
        let mut answers: Vec<Vec<u8>> = Vec::new();
        let mut expired = false;
        let mut update_installed = false;
        if let Some(blob) = delivered.as_ref() {
            let pages = install_model(&mut realm, &mut gpt, &mut alloc, blob)?;
            events.push(format!(
                "step 5: {} bytes installed into {} realm granules",
                blob.size_bytes,
                pages.len()
            ));
            model_pages.extend_from_slice(&pages);
            realm_granules = realm.granules().to_vec();

            announce_ready(&shared, &mut gpt)?;
            events.push("step 6: readiness announced".to_owned());

            for (i, input) in inputs.iter().enumerate() {
                nw_submit_query(&shared, &mut gpt, input)?;
                match realm_answer(&mut realm, &mut gpt, &shared, |b| b.to_vec(), i as u64) {
                    Ok(answered) => {
                        assert!(answered, "input slot was filled before realm_answer");
                        let answer = nw_collect_answer(&shared, &mut gpt)?
                            .expect("realm_answer filled the output slot");
                        events.push(format!(
                            "step 7: query {} answered ({} bytes in, {} bytes out)",
                            i + 1,
                            input.len(),
                            answer.len()
                        ));
                        answers.push(answer);
                    }
                    Err(ProtocolError::Expired) => {
                        events.push(format!(
                            "step 7: query {} refused: usage policy exhausted; realm destroyed",
                            i + 1
                        ));
                        expired = true;
                        break;
                    }
                    Err(err) => return Err(err),
                }
            }

            // --- Step 8: update poll (device still alive) ----------------
            if !expired {
                {
                    let chan: &mut dyn Channel = p_clients[last_session].as_mut().expect("open");
                    chan.send(&ProtocolMessage::UpdateQuery(blob.model_id.clone(), 1))?;
                }
                pump_provider(&mut provider_local, &mut p_servers_local, last_session)?;
                match expect_update_reply(p_clients[last_session].as_mut().expect("open"))? {
                    None => events.push("step 8: model is current; no update".to_owned()),
                    Some(newer) => {
                        let pages = install_model(&mut realm, &mut gpt, &mut alloc, &newer)?;
                        events.push(format!(
                            "step 8: update installed ({} bytes into {} more granules)",
                            newer.size_bytes,
                            pages.len()
                        ));
                        model_pages.extend_from_slice(&pages);
                        realm_granules = realm.granules().to_vec();
                        update_installed = true;
                    }
                }
            }
        }

        // Hang up all provider links, then collect the server parties.
        p_clients.clear();
        p_servers_local.clear();
        if let Some(handle) = verifier_handle {
            handle.join().expect("verifier thread")?;
        }
        if let Some(handle) = provider_handle {
            handle.join().expect("provider thread")?;
        }

        // --- Confidentiality scan (weights still resident) ----------------
        let mut secrets = vec![WeightIndex::new("model v1", &model_v1.weights)];
        if config.update_available {
            secrets.push(WeightIndex::new("model v2", &model_v2.weights));
        }
        let transcript = log.lock().expect("transcript lock").clone();
        let mut extra = shared.extra_scan_regions()?;
        for (i, entry) in transcript.iter().enumerate() {
            if !entry.opaque {
                extra.push((
                    format!("wire[{i}] {} {}->{}", entry.kind, entry.from, entry.to),
                    entry.frame.clone(),
                ));
            }
        }
        let scan = scan_normal_world(&gpt, &extra, &secrets);
        events.push(format!(
            "scan: {} regions, {} bytes, {} leaked windows",
            scan.regions_scanned,
            scan.bytes_scanned,
            scan.hits.len()
        ));

        // --- Teardown ------------------------------------------------------
        let realm_measurement = realm.measurement();
        if realm.state() == RealmState::Active {
            realm.destroy(&mut gpt)?;
            events.push(format!(
                "teardown: realm destroyed; {} granules reclaimed",
                realm_granules.len()
            ));
        }
        let scrub_verified = realm_granules.iter().all(|&page| {
            gpt.pas_of(page) == Ok(PasTag::NormalPas)
                && gpt
                    .read_page(SecurityState::Normal, page)
                    .map(|bytes| bytes.iter().all(|b| *b == 0))
                    .unwrap_or(false)
        });

        let outcome = match rejection {
            Some(reason) => DemoOutcome::Rejected(reason),
            None => DemoOutcome::Completed {
                answers,
                expired,
                update_installed,
            },
        };
        Ok(DemoReport {
            outcome,
            transcript,
            events,
            scan,
            published_measurement: image.published_measurement,
            realm_measurement,
            model_pages,
            realm_granules,
            scrub_verified,
        })
    })
}
