// SPDX-License-Identifier: Apache-2.0

//! Three-party model-deployment pipeline gated on realm attestation.
//!
//! The parties — a *verifier* that publishes realm images together with
//! their reference measurements, a *model provider* that releases weights
//! only to attested realms, and a *client device* that boots the realm
//! and runs inference — are mutually distrusting. They exchange
//! [`ProtocolMessage`]s over a [`Channel`](transport::Channel)
//! abstraction, and model confidentiality is enforced by the granule
//! protection table: weights land only in realm-private granules, never
//! in a normal-world page and never in plaintext on the wire.
//!
//! A full deployment runs eight steps:
//!
//! 1. fetch the realm image from the verifier,
//! 2. create and activate a realm from it,
//! 3. connect to the model provider,
//! 4. attest the realm against the provider's challenge,
//! 5. receive the model into realm-private memory,
//! 6. announce readiness through the shared filesystem,
//! 7. answer inference queries via the shared input/output slots,
//! 8. poll the provider for model updates.
//!
//! [`run_demo`](actors::run_demo) drives all eight steps with optional
//! tampering, records a wire transcript, and scans everything the normal
//! world can observe for leaked weight bytes.
//!
//! The provider link models a TLS connection with a null cipher: bytes
//! are not actually encrypted, but every message after the step-3 `Hello`
//! is marked opaque in the transcript and excluded from plaintext
//! visibility, exactly as ciphertext would be. Real TLS is out of scope.

pub mod actors;
pub mod scan;
pub mod shared_fs;
pub mod transport;
pub mod wire;

use std::fmt;

use crate::realm::{
    measure_population, AttestationToken, Measurement, Nonce, RealmError, RejectReason,
};
use crate::world::{WorldError, PAGE_SIZE};

pub use actors::{
    announce_ready, client_boot, derive_bytes, expect_challenge, expect_delivery, expect_image,
    expect_update_reply, install_model, nw_collect_answer, nw_submit_query, realm_answer,
    run_demo, ClientConfig, DemoConfig, DemoOutcome, DemoReport, DemoTransport, PageAllocator,
    Party, Provider, ProviderExpectations, RecordingChannel, SessionOutcome, TamperMode,
    TranscriptEntry, Verifier,
};
pub use scan::{scan_normal_world, ScanHit, ScanReport, WeightIndex, SCAN_WINDOW};
pub use shared_fs::{SharedFs, SharedFsError};
pub use transport::{duplex_pair, Channel, QueueChannel, SocketChannel, TransportError};
pub use wire::{decode_message, encode_frame, encode_message, WireError, MAX_FRAME_LEN};

/// Split a byte blob into page-sized chunks, each paired with its
/// position in the blob (the address the realm sees it at, counted in
/// pages from 0). This is the canonical population order for measuring
/// and for loading: chunk 0, chunk 1, … The final chunk may be short;
/// measurement pads it with zeros to a full granule.
pub fn page_chunks(bytes: &[u8]) -> impl Iterator<Item = (u64, &[u8])> {
    bytes
        .chunks(PAGE_SIZE)
        .enumerate()
        .map(|(ipa, chunk)| (ipa as u64, chunk))
}

/// Number of granules needed to hold `len` bytes.
pub fn pages_for(len: usize) -> u64 {
    len.div_ceil(PAGE_SIZE) as u64
}

/// A bootable realm image as the verifier publishes it: an opaque
/// kernel-plus-filesystem blob and the measurement a correctly booted
/// realm built from it must carry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RealmImage {
    /// Registry name the image is served under.
    pub image_id: String,
    /// Kernel + root filesystem, loaded page by page in chunk order.
    pub payload: Vec<u8>,
    /// Measurement after `create(image_id)` followed by populating every
    /// payload chunk in canonical order.
    pub published_measurement: Measurement,
}

impl RealmImage {
    /// Build an image and compute its published measurement from the
    /// payload. The realm creation parameters are the image id itself,
    /// so the measurement binds both name and content.
    pub fn build(image_id: impl Into<String>, payload: Vec<u8>) -> RealmImage {
        let image_id = image_id.into();
        let published_measurement = measure_population(image_id.as_bytes(), page_chunks(&payload));
        RealmImage {
            image_id,
            payload,
            published_measurement,
        }
    }

    /// Re-measure the payload and compare against the published value.
    /// Image consumers use this as a local integrity check; the
    /// authoritative check is the provider's token verification.
    pub fn verify_payload(&self) -> bool {
        measure_population(self.image_id.as_bytes(), page_chunks(&self.payload))
            == self.published_measurement
    }

    /// Granules a realm booted from this image occupies.
    pub fn pages_needed(&self) -> u64 {
        pages_for(self.payload.len())
    }
}

/// Model weights as the provider ships them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelBlob {
    pub model_id: String,
    /// Opaque weight bytes; the confidentiality target.
    pub weights: Vec<u8>,
    /// Always equals `weights.len()`; carried explicitly so the wire
    /// form can be cross-checked.
    pub size_bytes: u64,
}

impl ModelBlob {
    pub fn new(model_id: impl Into<String>, weights: Vec<u8>) -> ModelBlob {
        let size_bytes = weights.len() as u64;
        ModelBlob {
            model_id: model_id.into(),
            weights,
            size_bytes,
        }
    }
}

/// Error codes that travel on the wire inside [`ProtocolMessage::Error`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCode {
    /// Verifier does not serve the requested image id.
    UnknownImage,
    /// Attestation evidence was refused; carries the verifier's reason.
    AttestationRejected(RejectReason),
    /// The request needs an established (attested) session.
    SessionRequired,
    /// Inference requested before the realm announced readiness.
    NotReady,
    /// The realm's usage policy is exhausted; it has destroyed itself.
    Expired,
    /// Message violates the linear step order of the pipeline.
    OutOfOrder,
}

impl fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ErrorCode::UnknownImage => f.write_str("unknown image"),
            ErrorCode::AttestationRejected(reason) => {
                write!(f, "attestation rejected: {reason}")
            }
            ErrorCode::SessionRequired => f.write_str("session required"),
            ErrorCode::NotReady => f.write_str("not ready"),
            ErrorCode::Expired => f.write_str("usage policy expired"),
            ErrorCode::OutOfOrder => f.write_str("message out of order"),
        }
    }
}

/// Every message the three parties exchange. A session is a linear
/// sequence in step order; anything else draws an
/// [`ErrorCode::OutOfOrder`] reply.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProtocolMessage {
    /// Step 1, client → verifier: request an image by id.
    FetchImage(String),
    /// Step 1, verifier → client: the image and its published measurement.
    Image(RealmImage),
    /// Step 3, client → provider: open a session.
    Hello,
    /// Step 4, provider → client: attestation challenge.
    Challenge(Nonce),
    /// Step 4, client → provider: attestation token over the challenge.
    Evidence(AttestationToken),
    /// Step 5, provider → client: the model; `encrypted` marks the
    /// payload as channel ciphertext (null cipher here).
    ModelDelivery(ModelBlob, bool),
    /// Step 8, client → provider: does `model_id` have something newer
    /// than `version`?
    UpdateQuery(String, u32),
    /// Step 8, provider → client: the newer model, or `None` when the
    /// client is current.
    UpdateReply(Option<ModelBlob>),
    /// Any step: the peer refuses with a reason code.
    Error(ErrorCode),
}

impl ProtocolMessage {
    /// Variant name, for diagnostics and order-violation reports.
    pub fn kind(&self) -> &'static str {
        match self {
            ProtocolMessage::FetchImage(_) => "FetchImage",
            ProtocolMessage::Image(_) => "Image",
            ProtocolMessage::Hello => "Hello",
            ProtocolMessage::Challenge(_) => "Challenge",
            ProtocolMessage::Evidence(_) => "Evidence",
            ProtocolMessage::ModelDelivery(..) => "ModelDelivery",
            ProtocolMessage::UpdateQuery(..) => "UpdateQuery",
            ProtocolMessage::UpdateReply(_) => "UpdateReply",
            ProtocolMessage::Error(_) => "Error",
        }
    }

    /// Pipeline step the message belongs to (1–8). `Error` has no fixed
    /// step of its own.
    pub fn step(&self) -> Option<u8> {
        match self {
            ProtocolMessage::FetchImage(_) | ProtocolMessage::Image(_) => Some(1),
            ProtocolMessage::Hello => Some(3),
            ProtocolMessage::Challenge(_) | ProtocolMessage::Evidence(_) => Some(4),
            ProtocolMessage::ModelDelivery(..) => Some(5),
            ProtocolMessage::UpdateQuery(..) | ProtocolMessage::UpdateReply(_) => Some(8),
            ProtocolMessage::Error(_) => None,
        }
    }
}

/// Everything that can go wrong while running the pipeline.
#[derive(Debug)]
pub enum ProtocolError {
    /// Requested image id is not registered with the verifier.
    UnknownImage { image_id: String },
    /// Not enough normal-world pages to hold the payload.
    OutOfPages { needed: u64, available: u64 },
    /// The local side refused the peer's attestation evidence.
    Rejected(RejectReason),
    /// A session-scoped request arrived without an established session.
    SessionRequired { got: &'static str },
    /// Inference requested before the readiness announcement.
    NotReady,
    /// Usage policy exhausted; the realm destroyed itself.
    Expired,
    /// Message out of place in the linear step order.
    OutOfOrder {
        state: &'static str,
        got: &'static str,
    },
    /// The peer answered with an error code.
    PeerError(ErrorCode),
    /// Transport-level failure (closed channel, framing, I/O).
    Transport(TransportError),
    /// Shared-filesystem failure.
    SharedFs(SharedFsError),
    /// Realm lifecycle failure.
    Realm(RealmError),
    /// Memory-access or delegation failure.
    World(WorldError),
}

impl fmt::Display for ProtocolError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProtocolError::UnknownImage { image_id } => {
                write!(f, "no image registered under id {image_id:?}")
            }
            ProtocolError::OutOfPages { needed, available } => write!(
                f,
                "need {needed} free normal pages but only {available} remain"
            ),
            ProtocolError::Rejected(reason) => write!(f, "attestation rejected: {reason}"),
            ProtocolError::SessionRequired { got } => {
                write!(f, "{got} requires an established session")
            }
            ProtocolError::NotReady => f.write_str("realm has not announced readiness"),
            ProtocolError::Expired => f.write_str("usage policy exhausted; realm destroyed"),
            ProtocolError::OutOfOrder { state, got } => {
                write!(f, "unexpected {got} while {state}")
            }
            ProtocolError::PeerError(code) => write!(f, "peer error: {code}"),
            ProtocolError::Transport(err) => write!(f, "transport: {err}"),
            ProtocolError::SharedFs(err) => write!(f, "shared fs: {err}"),
            ProtocolError::Realm(err) => write!(f, "realm: {err}"),
            ProtocolError::World(err) => write!(f, "world: {err}"),
        }
    }
}

impl std::error::Error for ProtocolError {}

impl From<TransportError> for ProtocolError {
    fn from(err: TransportError) -> ProtocolError {
        ProtocolError::Transport(err)
    }
}

impl From<SharedFsError> for ProtocolError {
    fn from(err: SharedFsError) -> ProtocolError {
        ProtocolError::SharedFs(err)
    }
}

impl From<RealmError> for ProtocolError {
    fn from(err: RealmError) -> ProtocolError {
        ProtocolError::Realm(err)
    }
}

impl From<WorldError> for ProtocolError {
    fn from(err: WorldError) -> ProtocolError {
        ProtocolError::World(err)
    }
}
