// SPDX-License-Identifier: Apache-2.0

//! Realm VM lifecycle: measured population, activation freeze, attestation
//! token issue/verify, and destruction with memory reclaim.
//!
//! A realm is created `New`, populated page by page (each population step
//! extends a hash chain over page number and content), then activated —
//! after which the measurement is frozen and no measured content can be
//! added. An active realm can attest itself: the platform signs a token
//! binding the frozen measurement, the verifier's nonce, and the firmware
//! identity (monitor and RMM digests). Destruction undelegates every owned
//! granule, which scrubs them on the way back to the normal world.
//!
//! The measurement algorithm is this module's own convention (documented in
//! `docs/formats.md`): `m0 = H(params)` and
//! `m' = H(m ‖ be64(page) ‖ H(page_content))` with SHA-256, the page content
//! zero-padded to the full granule. Real platforms hash RMM command
//! structures; only determinism and order sensitivity matter here.

use std::fmt;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::crypto::{sha256, sha256_parts, TokenSigner, TokenVerifier, DIGEST_LEN};
use crate::world::{GranuleProtectionTable, PasTag, SecurityState, WorldError, PAGE_SIZE};

/// Width of an attestation nonce in bytes.
pub const NONCE_LEN: usize = 16;

/// Lifecycle state. Transitions only ever move forward:
/// `New → Active → Terminated`, with `New → Terminated` allowed for
/// never-activated realms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RealmState {
    New,
    Active,
    Terminated,
}

impl fmt::Display for RealmState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            RealmState::New => "new",
            RealmState::Active => "active",
            RealmState::Terminated => "terminated",
        };
        f.write_str(name)
    }
}

/// 32-byte digest pinning a realm's initial contents. Hex-encoded wherever
/// it appears in JSON.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Measurement(pub [u8; DIGEST_LEN]);

impl Measurement {
    pub fn as_bytes(&self) -> &[u8; DIGEST_LEN] {
        &self.0
    }
}

impl fmt::Debug for Measurement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Measurement({self})")
    }
}

impl fmt::Display for Measurement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for byte in self.0 {
            write!(f, "{byte:02x}")?;
        }
        Ok(())
    }
}

fn parse_hex_digest(s: &str) -> Option<[u8; DIGEST_LEN]> {
    if s.len() != DIGEST_LEN * 2 || !s.is_ascii() {
        return None;
    }
    let mut out = [0u8; DIGEST_LEN];
    for (i, chunk) in s.as_bytes().chunks(2).enumerate() {
        let hi = (chunk[0] as char).to_digit(16)?;
        let lo = (chunk[1] as char).to_digit(16)?;
        out[i] = (hi * 16 + lo) as u8;
    }
    Some(out)
}

impl std::str::FromStr for Measurement {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_hex_digest(s)
            .map(Measurement)
            .ok_or_else(|| format!("expected {} hex characters", DIGEST_LEN * 2))
    }
}

impl Serialize for Measurement {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Measurement {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(D::Error::custom)
    }
}

/// Verifier-issued challenge bound into an attestation token.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Nonce(pub [u8; NONCE_LEN]);

impl Nonce {
    pub fn as_bytes(&self) -> &[u8; NONCE_LEN] {
        &self.0
    }
}

/// Identity of the two firmware components a relying party must trust:
/// the EL3 monitor and the realm management monitor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlatformClaims {
    pub monitor_digest: Measurement,
    pub rmm_digest: Measurement,
}

/// Bounds on how long a delivered model may be used. An absent bound means
/// unlimited in that dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct UsagePolicy {
    /// Maximum number of inferences before the realm must be destroyed.
    pub max_inferences: Option<u64>,
    /// Last logical instant (driver-advanced clock, not wall time) at which
    /// inference is still permitted.
    pub valid_until: Option<u64>,
}

impl UsagePolicy {
    pub fn unlimited() -> UsagePolicy {
        UsagePolicy::default()
    }
}

/// Errors from realm lifecycle operations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RealmError {
    /// Measured population attempted after activation.
    RealmSealed,
    /// Operation requires an active realm.
    NotActive { state: RealmState },
    /// Lifecycle transition outside `New → Active → Terminated`.
    InvalidTransition { from: RealmState, to: RealmState },
    /// A usage-policy bound was crossed; the caller must destroy the realm.
    LimitExceeded,
    /// Underlying granule-table failure (delegation, access).
    World(WorldError),
}

impl fmt::Display for RealmError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RealmError::RealmSealed => {
                write!(f, "realm is sealed: population is only valid in the new state")
            }
            RealmError::NotActive { state } => {
                write!(f, "operation requires an active realm (state: {state})")
            }
            RealmError::InvalidTransition { from, to } => {
                write!(f, "invalid lifecycle transition {from} -> {to}")
            }
            RealmError::LimitExceeded => write!(f, "usage policy exhausted"),
            RealmError::World(e) => write!(f, "granule table: {e}"),
        }
    }
}

impl std::error::Error for RealmError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            RealmError::World(e) => Some(e),
            _ => None,
        }
    }
}

impl From<WorldError> for RealmError {
    fn from(e: WorldError) -> RealmError {
        RealmError::World(e)
    }
}

/// A realm VM: lifecycle state, measurement chain, owned granules, and the
/// shared (unprotected) region it exposes to the normal world.
///
/// Lifecycle operations model the privileged hypervisor→RMM→monitor path,
/// so they perform Root-context retagging internally; everything else goes
/// through the granule table's access checks at the appropriate security
/// state.
#[derive(Debug, Clone)]
pub struct RealmDescriptor {
    id: String,
    state: RealmState,
    measurement: Measurement,
    granules: Vec<u64>,
    unprotected_region: Vec<u64>,
    inference_count: u64,
    policy: UsagePolicy,
}

impl RealmDescriptor {
    /// Create a realm in the `New` state. The measurement starts as
    /// `H(params)`; granule set empty; inference counter zero.
    pub fn create(params: &[u8], policy: UsagePolicy) -> RealmDescriptor {
        let measurement = Measurement(sha256(params));
        // Content-derived label; uniqueness is not load-bearing.
        let id = measurement
            .to_string()
            .chars()
            .take(12)
            .collect::<String>();
        RealmDescriptor {
            id,
            state: RealmState::New,
            measurement,
            granules: Vec::new(),
            unprotected_region: Vec::new(),
            inference_count: 0,
            policy,
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn state(&self) -> RealmState {
        self.state
    }

    pub fn measurement(&self) -> Measurement {
        self.measurement
    }

    /// Pages delegated to this realm, in population/installation order.
    pub fn granules(&self) -> &[u64] {
        &self.granules
    }

    /// Normal-PAS pages this realm shares with the normal world.
    pub fn unprotected_region(&self) -> &[u64] {
        &self.unprotected_region
    }

    pub fn inference_count(&self) -> u64 {
        self.inference_count
    }

    pub fn policy(&self) -> UsagePolicy {
        self.policy
    }

    /// Delegate granule `page`, write `content` into it, and extend the
    /// measurement chain. Only valid while `New`.
    ///
    /// The measurement binds `ipa` — the page's address as the realm sees
    /// it (its position in the image, counted from 0) — not the host
    /// granule index, so the same image measures identically wherever the
    /// host happens to place it.
    pub fn populate(
        &mut self,
        gpt: &mut GranuleProtectionTable,
        page: u64,
        ipa: u64,
        content: &[u8],
    ) -> Result<(), RealmError> {
        if self.state != RealmState::New {
            return Err(RealmError::RealmSealed);
        }
        self.claim_page(gpt, page, content)?;
        self.measurement = extend_measurement(self.measurement, ipa, content);
        Ok(())
    }

    /// Move `New → Active`, freezing the measurement.
    pub fn activate(&mut self) -> Result<(), RealmError> {
        if self.state != RealmState::New {
            return Err(RealmError::InvalidTransition {
                from: self.state,
                to: RealmState::Active,
            });
        }
        self.state = RealmState::Active;
        Ok(())
    }

    /// Install an *unmeasured* data page into an active realm.
    ///
    /// This is how post-attestation payloads (delivered model weights)
    /// land in realm-private memory: the guest receives the bytes over its
    /// secure channel and stores them itself, so the boot-time measurement
    /// is unaffected. Runtime measurement extension is deliberately not
    /// modeled.
    pub fn install_data_page(
        &mut self,
        gpt: &mut GranuleProtectionTable,
        page: u64,
        content: &[u8],
    ) -> Result<(), RealmError> {
        if self.state != RealmState::Active {
            return Err(RealmError::NotActive { state: self.state });
        }
        self.claim_page(gpt, page, content)
    }

    fn claim_page(
        &mut self,
        gpt: &mut GranuleProtectionTable,
        page: u64,
        content: &[u8],
    ) -> Result<(), RealmError> {
        gpt.delegate(SecurityState::Root, page, PasTag::RealmPas)?;
        gpt.write_page(SecurityState::Realm, page, content)?;
        self.granules.push(page);
        Ok(())
    }

    /// Register an already-normal page as part of the realm's shared I/O
    /// window. The page keeps its normal tag — both worlds may access it.
    pub fn add_unprotected_page(
        &mut self,
        gpt: &GranuleProtectionTable,
        page: u64,
    ) -> Result<(), RealmError> {
        let pas = gpt.pas_of(page)?;
        if pas != PasTag::NormalPas {
            return Err(RealmError::World(WorldError::InvalidTransition {
                page,
                from: pas,
                to: PasTag::NormalPas,
            }));
        }
        debug_assert!(!self.granules.contains(&page));
        self.unprotected_region.push(page);
        Ok(())
    }

    /// Issue an attestation token: the frozen measurement and the caller's
    /// nonce, platform identity attached, signed over the canonical claims
    /// serialization. Requires `Active`.
    pub fn attest(
        &self,
        nonce: Nonce,
        platform: &PlatformClaims,
        signer: &dyn TokenSigner,
    ) -> Result<AttestationToken, RealmError> {
        if self.state != RealmState::Active {
            return Err(RealmError::NotActive { state: self.state });
        }
        Ok(AttestationToken::issue(
            self.measurement,
            nonce,
            *platform,
            signer,
        ))
    }

    /// Count one inference against the usage policy. `now` is the driver's
    /// logical clock, compared against `valid_until` when that bound is
    /// set. Crossing either bound returns [`RealmError::LimitExceeded`]
    /// without counting, and the caller is expected to destroy the realm.
    pub fn record_inference(&mut self, now: u64) -> Result<(), RealmError> {
        if self.state != RealmState::Active {
            return Err(RealmError::NotActive { state: self.state });
        }
        if let Some(max) = self.policy.max_inferences {
            if self.inference_count >= max {
                return Err(RealmError::LimitExceeded);
            }
        }
        if let Some(until) = self.policy.valid_until {
            if now > until {
                return Err(RealmError::LimitExceeded);
            }
        }
        self.inference_count += 1;
        Ok(())
    }

    /// Terminate the realm and reclaim its memory: every owned granule is
    /// undelegated (scrubbing it), the granule set emptied, and the state
    /// moved to `Terminated`. Valid from `New` or `Active`.
    pub fn destroy(&mut self, gpt: &mut GranuleProtectionTable) -> Result<(), RealmError> {
        if self.state == RealmState::Terminated {
            return Err(RealmError::InvalidTransition {
                from: self.state,
                to: RealmState::Terminated,
            });
        }
        for page in self.granules.drain(..) {
            gpt.undelegate(SecurityState::Root, page)?;
        }
        self.state = RealmState::Terminated;
        Ok(())
    }
}

/// Extend a measurement by one populated page:
/// `H(m ‖ be64(ipa) ‖ H(content zero-padded to a full granule))`.
fn extend_measurement(m: Measurement, ipa: u64, content: &[u8]) -> Measurement {
    let mut padded = [0u8; PAGE_SIZE];
    padded[..content.len()].copy_from_slice(content);
    let content_digest = sha256(&padded);
    Measurement(sha256_parts(&[
        m.as_bytes(),
        &ipa.to_be_bytes(),
        &content_digest,
    ]))
}

/// The measurement a realm would carry after `create(params)` followed by
/// `populate(_, ipa, content)` for each element of `pages` in order — the
/// canonical order being ipa 0, 1, 2, … over the image's page-sized
/// chunks. This is the reference computation image publishers use for
/// their published measurement, and verifiers use to cross-check it.
pub fn measure_population<'a>(
    params: &[u8],
    pages: impl IntoIterator<Item = (u64, &'a [u8])>,
) -> Measurement {
    let mut m = Measurement(sha256(params));
    for (ipa, content) in pages {
        m = extend_measurement(m, ipa, content);
    }
    m
}

/// Reason an attestation token was refused.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RejectReason {
    /// Signature does not verify over the canonical claims.
    BadSignature,
    /// Realm measurement differs from the relying party's expectation.
    MeasurementMismatch,
    /// Firmware (monitor/RMM) digests differ from the expectation.
    PlatformMismatch,
    /// Nonce does not match the outstanding challenge (replay or cross-talk).
    StaleNonce,
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            RejectReason::BadSignature => "bad signature",
            RejectReason::MeasurementMismatch => "measurement mismatch",
            RejectReason::PlatformMismatch => "platform mismatch",
            RejectReason::StaleNonce => "stale nonce",
        };
        f.write_str(name)
    }
}

/// Outcome of token verification.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Accept,
    Reject(RejectReason),
}

/// Signed attestation claims: realm measurement + nonce, platform firmware
/// digests, and a signature over the canonical claims serialization.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttestationToken {
    pub measurement: Measurement,
    pub nonce: Nonce,
    pub platform: PlatformClaims,
    pub signature: Vec<u8>,
}

/// Error decoding a serialized token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenDecodeError {
    /// Byte offset at which decoding failed.
    pub offset: usize,
    pub reason: &'static str,
}

impl fmt::Display for TokenDecodeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "token decode error at byte {}: {}", self.offset, self.reason)
    }
}

impl std::error::Error for TokenDecodeError {}

fn put_field(out: &mut Vec<u8>, field: &[u8]) {
    out.extend_from_slice(&(field.len() as u32).to_be_bytes());
    out.extend_from_slice(field);
}

fn take_field<'a>(
    bytes: &'a [u8],
    offset: &mut usize,
    expected_len: Option<usize>,
) -> Result<&'a [u8], TokenDecodeError> {
    let header = bytes.get(*offset..*offset + 4).ok_or(TokenDecodeError {
        offset: *offset,
        reason: "truncated length prefix",
    })?;
    let len = u32::from_be_bytes(header.try_into().expect("4-byte slice")) as usize;
    if let Some(expected) = expected_len {
        if len != expected {
            return Err(TokenDecodeError {
                offset: *offset,
                reason: "unexpected field length",
            });
        }
    }
    *offset += 4;
    let field = bytes.get(*offset..*offset + len).ok_or(TokenDecodeError {
        offset: *offset,
        reason: "truncated field",
    })?;
    *offset += len;
    Ok(field)
}

impl AttestationToken {
    fn issue(
        measurement: Measurement,
        nonce: Nonce,
        platform: PlatformClaims,
        signer: &dyn TokenSigner,
    ) -> AttestationToken {
        let mut token = AttestationToken {
            measurement,
            nonce,
            platform,
            signature: Vec::new(),
        };
        token.signature = signer.sign(&token.claims_message());
        token
    }

    /// Canonical serialization of the *claims* (everything the signature
    /// covers): measurement, nonce, monitor digest, RMM digest, each as a
    /// 4-byte big-endian length followed by the field bytes.
    pub fn claims_message(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 * 4 + DIGEST_LEN * 3 + NONCE_LEN);
        put_field(&mut out, self.measurement.as_bytes());
        put_field(&mut out, self.nonce.as_bytes());
        put_field(&mut out, self.platform.monitor_digest.as_bytes());
        put_field(&mut out, self.platform.rmm_digest.as_bytes());
        out
    }

    /// Full canonical serialization: the claims followed by the signature,
    /// in the same length-prefixed framing.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.claims_message();
        put_field(&mut out, &self.signature);
        out
    }

    /// Strict inverse of [`to_bytes`](Self::to_bytes): fixed field widths
    /// for the claims, and no trailing bytes tolerated.
    pub fn from_bytes(bytes: &[u8]) -> Result<AttestationToken, TokenDecodeError> {
        let mut offset = 0;
        let measurement = take_field(bytes, &mut offset, Some(DIGEST_LEN))?;
        let nonce = take_field(bytes, &mut offset, Some(NONCE_LEN))?;
        let monitor = take_field(bytes, &mut offset, Some(DIGEST_LEN))?;
        let rmm = take_field(bytes, &mut offset, Some(DIGEST_LEN))?;
        let signature = take_field(bytes, &mut offset, None)?;
        if offset != bytes.len() {
            return Err(TokenDecodeError {
                offset,
                reason: "trailing bytes after token",
            });
        }
        Ok(AttestationToken {
            measurement: Measurement(measurement.try_into().expect("checked length")),
            nonce: Nonce(nonce.try_into().expect("checked length")),
            platform: PlatformClaims {
                monitor_digest: Measurement(monitor.try_into().expect("checked length")),
                rmm_digest: Measurement(rmm.try_into().expect("checked length")),
            },
            signature: signature.to_vec(),
        })
    }
}

/// Verify a token against the relying party's expectations. Checks run in a
/// fixed order — signature, measurement, platform, nonce — and the first
/// failure names the reject reason, so callers get deterministic diagnoses.
pub fn verify_token(
    token: &AttestationToken,
    expected_measurement: Measurement,
    expected_platform: &PlatformClaims,
    expected_nonce: Nonce,
    verifier: &dyn TokenVerifier,
) -> Verdict {
    if !verifier.verify(&token.claims_message(), &token.signature) {
        return Verdict::Reject(RejectReason::BadSignature);
    }
    if token.measurement != expected_measurement {
        return Verdict::Reject(RejectReason::MeasurementMismatch);
    }
    if token.platform != *expected_platform {
        return Verdict::Reject(RejectReason::PlatformMismatch);
    }
    if token.nonce != expected_nonce {
        return Verdict::Reject(RejectReason::StaleNonce);
    }
    Verdict::Accept
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::HmacKey;

    fn platform() -> PlatformClaims {
        PlatformClaims {
            monitor_digest: Measurement(sha256(b"monitor firmware v1")),
            rmm_digest: Measurement(sha256(b"rmm firmware v1")),
        }
    }

    fn key() -> HmacKey {
        HmacKey::new(*b"test platform attestation key 01")
    }

    fn active_realm(gpt: &mut GranuleProtectionTable) -> RealmDescriptor {
        let mut realm = RealmDescriptor::create(b"image config", UsagePolicy::unlimited());
        realm.populate(gpt, 0, 0, b"kernel page").unwrap();
        realm.populate(gpt, 1, 1, b"fs page").unwrap();
        realm.activate().unwrap();
        realm
    }

    #[test]
    fn creation_is_deterministic() {
        let a = RealmDescriptor::create(b"params", UsagePolicy::unlimited());
        let b = RealmDescriptor::create(b"params", UsagePolicy::unlimited());
        let c = RealmDescriptor::create(b"qarams", UsagePolicy::unlimited());
        assert_eq!(a.measurement(), b.measurement());
        assert_ne!(a.measurement(), c.measurement());
        assert_eq!(a.state(), RealmState::New);
        assert_eq!(a.inference_count(), 0);
        assert!(a.granules().is_empty());
    }

    #[test]
    fn population_is_order_sensitive() {
        let mut gpt_a = GranuleProtectionTable::new(4);
        let mut gpt_b = GranuleProtectionTable::new(4);
        let mut a = RealmDescriptor::create(b"p", UsagePolicy::unlimited());
        let mut b = RealmDescriptor::create(b"p", UsagePolicy::unlimited());

        a.populate(&mut gpt_a, 0, 0, b"first").unwrap();
        a.populate(&mut gpt_a, 1, 1, b"second").unwrap();
        b.populate(&mut gpt_b, 1, 1, b"second").unwrap();
        b.populate(&mut gpt_b, 0, 0, b"first").unwrap();
        assert_ne!(a.measurement(), b.measurement());

        // Identical sequences agree, and match the reference computation.
        let mut gpt_c = GranuleProtectionTable::new(4);
        let mut c = RealmDescriptor::create(b"p", UsagePolicy::unlimited());
        c.populate(&mut gpt_c, 0, 0, b"first").unwrap();
        c.populate(&mut gpt_c, 1, 1, b"second").unwrap();
        assert_eq!(a.measurement(), c.measurement());
        assert_eq!(
            a.measurement(),
            measure_population(
                b"p",
                [(0u64, b"first".as_slice()), (1u64, b"second".as_slice())]
            )
        );
    }

    #[test]
    fn populate_after_activate_is_sealed() {
        let mut gpt = GranuleProtectionTable::new(4);
        let mut realm = active_realm(&mut gpt);
        assert_eq!(
            realm.populate(&mut gpt, 3, 3, b"late"),
            Err(RealmError::RealmSealed)
        );
    }

    #[test]
    fn delegation_errors_propagate() {
        let mut gpt = GranuleProtectionTable::new(2);
        gpt.delegate(SecurityState::Root, 0, PasTag::SecurePas)
            .unwrap();
        let mut realm = RealmDescriptor::create(b"p", UsagePolicy::unlimited());
        assert!(matches!(
            realm.populate(&mut gpt, 0, 0, b"x"),
            Err(RealmError::World(WorldError::InvalidTransition { .. }))
        ));
        assert!(realm.granules().is_empty());
    }

    /// Every (state, transition) pair, against the manually enumerated
    /// 3-state machine: New→Active and {New,Active}→Terminated are the only
    /// legal moves.
    #[test]
    fn lifecycle_transition_enumeration() {
        let build = |state: RealmState| {
            let mut gpt = GranuleProtectionTable::new(4);
            let mut realm = RealmDescriptor::create(b"p", UsagePolicy::unlimited());
            match state {
                RealmState::New => {}
                RealmState::Active => realm.activate().unwrap(),
                RealmState::Terminated => realm.destroy(&mut gpt).unwrap(),
            }
            (realm, gpt)
        };

        for state in [RealmState::New, RealmState::Active, RealmState::Terminated] {
            let (mut realm, _) = build(state);
            let activate_ok = realm.activate().is_ok();
            assert_eq!(activate_ok, state == RealmState::New, "activate from {state}");

            let (mut realm, mut gpt) = build(state);
            let destroy_ok = realm.destroy(&mut gpt).is_ok();
            assert_eq!(destroy_ok, state != RealmState::Terminated, "destroy from {state}");
            if destroy_ok {
                assert_eq!(realm.state(), RealmState::Terminated);
            }
        }
    }

    #[test]
    fn attest_requires_active_and_is_deterministic() {
        let mut gpt = GranuleProtectionTable::new(4);
        let new_realm = RealmDescriptor::create(b"p", UsagePolicy::unlimited());
        let nonce = Nonce([7u8; NONCE_LEN]);
        assert!(matches!(
            new_realm.attest(nonce, &platform(), &key()),
            Err(RealmError::NotActive { .. })
        ));

        let realm = active_realm(&mut gpt);
        let t1 = realm.attest(nonce, &platform(), &key()).unwrap();
        let t2 = realm.attest(nonce, &platform(), &key()).unwrap();
        assert_eq!(t1.to_bytes(), t2.to_bytes());
        assert_eq!(t1.measurement, realm.measurement());
    }

    #[test]
    fn verify_covers_every_reject_reason() {
        let mut gpt = GranuleProtectionTable::new(8);
        let realm = active_realm(&mut gpt);
        let nonce = Nonce([1u8; NONCE_LEN]);
        let token = realm.attest(nonce, &platform(), &key()).unwrap();

        assert_eq!(
            verify_token(&token, realm.measurement(), &platform(), nonce, &key()),
            Verdict::Accept
        );

        // Tampered signature.
        let mut bad_sig = token.clone();
        bad_sig.signature[0] ^= 1;
        assert_eq!(
            verify_token(&bad_sig, realm.measurement(), &platform(), nonce, &key()),
            Verdict::Reject(RejectReason::BadSignature)
        );

        // Honest token from a different image: signature valid, wrong
        // measurement.
        let mut gpt2 = GranuleProtectionTable::new(8);
        let mut other = RealmDescriptor::create(b"other image", UsagePolicy::unlimited());
        other.populate(&mut gpt2, 0, 0, b"different kernel").unwrap();
        other.activate().unwrap();
        let other_token = other.attest(nonce, &platform(), &key()).unwrap();
        assert_eq!(
            verify_token(&other_token, realm.measurement(), &platform(), nonce, &key()),
            Verdict::Reject(RejectReason::MeasurementMismatch)
        );

        // Honest token issued by unexpected firmware.
        let rogue_platform = PlatformClaims {
            monitor_digest: Measurement(sha256(b"monitor firmware v2")),
            rmm_digest: platform().rmm_digest,
        };
        let rogue = realm.attest(nonce, &rogue_platform, &key()).unwrap();
        assert_eq!(
            verify_token(&rogue, realm.measurement(), &platform(), nonce, &key()),
            Verdict::Reject(RejectReason::PlatformMismatch)
        );

        // Replay against a fresh challenge.
        let fresh = Nonce([2u8; NONCE_LEN]);
        assert_eq!(
            verify_token(&token, realm.measurement(), &platform(), fresh, &key()),
            Verdict::Reject(RejectReason::StaleNonce)
        );

        // Wrong trust anchor.
        let other_key = HmacKey::new(*b"test platform attestation key 02");
        assert_eq!(
            verify_token(&token, realm.measurement(), &platform(), nonce, &other_key),
            Verdict::Reject(RejectReason::BadSignature)
        );
    }

    #[test]
    fn token_serialization_round_trips() {
        let mut gpt = GranuleProtectionTable::new(4);
        let realm = active_realm(&mut gpt);
        let token = realm
            .attest(Nonce([9u8; NONCE_LEN]), &platform(), &key())
            .unwrap();
        let bytes = token.to_bytes();
        // 5 length prefixes + 3 digests + nonce + 32-byte HMAC signature.
        assert_eq!(bytes.len(), 5 * 4 + 3 * DIGEST_LEN + NONCE_LEN + 32);
        assert_eq!(AttestationToken::from_bytes(&bytes).unwrap(), token);

        // Truncation and trailing garbage are both refused.
        assert!(AttestationToken::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut extended = bytes.clone();
        extended.push(0);
        assert!(AttestationToken::from_bytes(&extended).is_err());
    }

    #[test]
    fn inference_limits_enforced_at_boundary() {
        let mut gpt = GranuleProtectionTable::new(4);
        let mut realm = RealmDescriptor::create(
            b"p",
            UsagePolicy {
                max_inferences: Some(2),
                valid_until: None,
            },
        );
        realm.activate().unwrap();
        assert!(realm.record_inference(0).is_ok());
        assert!(realm.record_inference(1).is_ok());
        assert_eq!(realm.record_inference(2), Err(RealmError::LimitExceeded));
        assert_eq!(realm.inference_count(), 2);
        realm.destroy(&mut gpt).unwrap();
        assert!(matches!(
            realm.record_inference(3),
            Err(RealmError::NotActive { .. })
        ));
    }

    #[test]
    fn unlimited_policy_never_expires() {
        let mut realm = RealmDescriptor::create(b"p", UsagePolicy::unlimited());
        realm.activate().unwrap();
        for now in 0..1000 {
            realm.record_inference(now).unwrap();
        }
        assert_eq!(realm.inference_count(), 1000);
    }

    #[test]
    fn validity_window_enforced() {
        let mut realm = RealmDescriptor::create(
            b"p",
            UsagePolicy {
                max_inferences: None,
                valid_until: Some(5),
            },
        );
        realm.activate().unwrap();
        assert!(realm.record_inference(5).is_ok());
        assert_eq!(realm.record_inference(6), Err(RealmError::LimitExceeded));
    }

    #[test]
    fn destroy_reclaims_and_scrubs_everything() {
        let mut gpt = GranuleProtectionTable::new(16);
        let mut realm = RealmDescriptor::create(b"p", UsagePolicy::unlimited());
        for page in 0..8 {
            realm
                .populate(&mut gpt, page, page, format!("secret {page}").as_bytes())
                .unwrap();
        }
        realm.activate().unwrap();
        let owned: Vec<u64> = realm.granules().to_vec();
        realm.destroy(&mut gpt).unwrap();

        assert!(realm.granules().is_empty());
        for page in owned {
            assert_eq!(gpt.pas_of(page), Ok(PasTag::NormalPas));
            let contents = gpt.read_page(SecurityState::Normal, page).unwrap();
            assert!(contents.iter().all(|b| *b == 0));
        }
        // Double destroy is refused.
        assert!(matches!(
            realm.destroy(&mut gpt),
            Err(RealmError::InvalidTransition { .. })
        ));
    }

    #[test]
    fn destroy_of_new_realm_succeeds() {
        let mut gpt = GranuleProtectionTable::new(4);
        let mut realm = RealmDescriptor::create(b"p", UsagePolicy::unlimited());
        realm.populate(&mut gpt, 0, 0, b"partial").unwrap();
        realm.destroy(&mut gpt).unwrap();
        assert_eq!(realm.state(), RealmState::Terminated);
        assert_eq!(gpt.pas_of(0), Ok(PasTag::NormalPas));
    }

    #[test]
    fn measurement_hex_round_trips() {
        let m = Measurement(sha256(b"x"));
        let s = m.to_string();
        assert_eq!(s.parse::<Measurement>().unwrap(), m);
        let json = serde_json::to_string(&m).unwrap();
        assert_eq!(serde_json::from_str::<Measurement>(&json).unwrap(), m);
        assert!("zz".parse::<Measurement>().is_err());
    }
}
