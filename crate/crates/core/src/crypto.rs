// SPDX-License-Identifier: Apache-2.0

//! Hashing and the pluggable token-signature scheme.
//!
//! Measurements are 32-byte SHA-256 digests. Attestation-token signing is
//! abstracted behind [`TokenSigner`] / [`TokenVerifier`] so deployments can
//! plug in an asymmetric scheme; the default [`HmacKey`] is a deterministic
//! HMAC-SHA-256 stand-in, chosen so token bytes are reproducible in tests.
//! It models the platform signing key shared between the realm management
//! monitor (which signs) and the relying party's trust anchor (which
//! verifies); certificate chains are out of scope.

use hmac::{Hmac, Mac};
use sha2::{Digest, Sha256};

/// Width of every digest in this crate.
pub const DIGEST_LEN: usize = 32;

/// SHA-256 of `data`.
pub fn sha256(data: &[u8]) -> [u8; DIGEST_LEN] {
    let mut hasher = Sha256::new();
    hasher.update(data);
    hasher.finalize().into()
}

/// SHA-256 over the concatenation of `parts`, without materializing it.
pub fn sha256_parts(parts: &[&[u8]]) -> [u8; DIGEST_LEN] {
    let mut hasher = Sha256::new();
    for part in parts {
        hasher.update(part);
    }
    hasher.finalize().into()
}

/// HMAC-SHA-256 of `message` under `key`.
pub fn hmac_sha256(key: &[u8], message: &[u8]) -> [u8; DIGEST_LEN] {
    let mut mac = Hmac::<Sha256>::new_from_slice(key).expect("HMAC accepts any key length");
    mac.update(message);
    mac.finalize().into_bytes().into()
}

/// Signs canonical token claims on behalf of the platform firmware.
pub trait TokenSigner {
    /// Signature over `message`. Must be deterministic for reproducible
    /// token bytes, or the scheme must be documented as probabilistic.
    fn sign(&self, message: &[u8]) -> Vec<u8>;
}

/// Checks a claimed signature on behalf of a relying party.
pub trait TokenVerifier {
    /// True iff `signature` is valid for `message`.
    fn verify(&self, message: &[u8], signature: &[u8]) -> bool;
}

/// Default deterministic scheme: HMAC-SHA-256 under a shared key.
#[derive(Clone)]
pub struct HmacKey {
    key: Vec<u8>,
}

impl HmacKey {
    pub fn new(key: impl Into<Vec<u8>>) -> HmacKey {
        HmacKey { key: key.into() }
    }
}

impl TokenSigner for HmacKey {
    fn sign(&self, message: &[u8]) -> Vec<u8> {
        hmac_sha256(&self.key, message).to_vec()
    }
}

impl TokenVerifier for HmacKey {
    fn verify(&self, message: &[u8], signature: &[u8]) -> bool {
        // Constant-time comparison is deliberately not a goal here: this is
        // a simulator, and the deterministic scheme is a stand-in anyway.
        signature == hmac_sha256(&self.key, message)
    }
}
