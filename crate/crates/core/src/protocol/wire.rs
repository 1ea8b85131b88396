// SPDX-License-Identifier: Apache-2.0

//! Binary wire codec for protocol messages.
//!
//! Every message travels as one frame: a 4-byte big-endian length prefix
//! covering everything after it, then a 1-byte message tag, then the
//! tag-specific payload. Multi-byte integers are big-endian; variable
//! fields carry their own 4-byte length; digests and nonces are raw
//! fixed-width bytes. Both transports share this layout bit for bit;
//! `docs/formats.md` documents it field by field.

use crate::crypto::DIGEST_LEN;
use crate::realm::{AttestationToken, Measurement, Nonce, RejectReason, NONCE_LEN};

use super::{ErrorCode, ModelBlob, ProtocolMessage, RealmImage};

/// Upper bound on a frame body (tag byte + payload). Guards length
/// prefixes read from untrusted peers; generous enough for any model
/// blob the toolkit ships.
pub const MAX_FRAME_LEN: usize = 1 << 28;

const TAG_FETCH_IMAGE: u8 = 1;
const TAG_IMAGE: u8 = 2;
const TAG_HELLO: u8 = 3;
const TAG_CHALLENGE: u8 = 4;
const TAG_EVIDENCE: u8 = 5;
const TAG_MODEL_DELIVERY: u8 = 6;
const TAG_UPDATE_QUERY: u8 = 7;
const TAG_UPDATE_REPLY: u8 = 8;
const TAG_ERROR: u8 = 9;

/// Decoding failure, pinned to the byte where it was detected.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WireError {
    pub offset: usize,
    pub reason: &'static str,
}

impl std::fmt::Display for WireError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "wire error at byte {}: {}", self.offset, self.reason)
    }
}

impl std::error::Error for WireError {}

fn put_u32(out: &mut Vec<u8>, value: u32) {
    out.extend_from_slice(&value.to_be_bytes());
}

fn put_bytes(out: &mut Vec<u8>, bytes: &[u8]) {
    put_u32(out, bytes.len() as u32);
    out.extend_from_slice(bytes);
}

fn put_blob(out: &mut Vec<u8>, blob: &ModelBlob) {
    put_bytes(out, blob.model_id.as_bytes());
    out.extend_from_slice(&blob.size_bytes.to_be_bytes());
    put_bytes(out, &blob.weights);
}

fn error_code_bytes(code: ErrorCode) -> (u8, Option<u8>) {
    match code {
        ErrorCode::UnknownImage => (1, None),
        ErrorCode::AttestationRejected(reason) => {
            let reason = match reason {
                RejectReason::BadSignature => 1,
                RejectReason::MeasurementMismatch => 2,
                RejectReason::PlatformMismatch => 3,
                RejectReason::StaleNonce => 4,
            };
            (2, Some(reason))
        }
        ErrorCode::SessionRequired => (3, None),
        ErrorCode::NotReady => (4, None),
        ErrorCode::Expired => (5, None),
        ErrorCode::OutOfOrder => (6, None),
    }
}

/// Encode a message body: tag byte followed by the payload, without the
/// outer length prefix.
pub fn encode_message(msg: &ProtocolMessage) -> Vec<u8> {
    let mut out = Vec::new();
    match msg {
        ProtocolMessage::FetchImage(image_id) => {
            out.push(TAG_FETCH_IMAGE);
            put_bytes(&mut out, image_id.as_bytes());
        }
        ProtocolMessage::Image(image) => {
            out.push(TAG_IMAGE);
            put_bytes(&mut out, image.image_id.as_bytes());
            put_bytes(&mut out, &image.payload);
            out.extend_from_slice(image.published_measurement.as_bytes());
        }
        ProtocolMessage::Hello => out.push(TAG_HELLO),
        ProtocolMessage::Challenge(nonce) => {
            out.push(TAG_CHALLENGE);
            out.extend_from_slice(nonce.as_bytes());
        }
        ProtocolMessage::Evidence(token) => {
            out.push(TAG_EVIDENCE);
            put_bytes(&mut out, &token.to_bytes());
        }
        ProtocolMessage::ModelDelivery(blob, encrypted) => {
            out.push(TAG_MODEL_DELIVERY);
            put_blob(&mut out, blob);
            out.push(u8::from(*encrypted));
        }
        ProtocolMessage::UpdateQuery(model_id, version) => {
            out.push(TAG_UPDATE_QUERY);
            put_bytes(&mut out, model_id.as_bytes());
            put_u32(&mut out, *version);
        }
        ProtocolMessage::UpdateReply(reply) => {
            out.push(TAG_UPDATE_REPLY);
            match reply {
                None => out.push(0),
                Some(blob) => {
                    out.push(1);
                    put_blob(&mut out, blob);
                }
            }
        }
        ProtocolMessage::Error(code) => {
            out.push(TAG_ERROR);
            let (code_byte, reason_byte) = error_code_bytes(*code);
            out.push(code_byte);
            if let Some(reason) = reason_byte {
                out.push(reason);
            }
        }
    }
    out
}

/// Encode a complete frame: 4-byte big-endian body length, then the body
/// from [`encode_message`].
pub fn encode_frame(msg: &ProtocolMessage) -> Vec<u8> {
    let body = encode_message(msg);
    let mut frame = Vec::with_capacity(4 + body.len());
    put_u32(&mut frame, body.len() as u32);
    frame.extend_from_slice(&body);
    frame
}

struct Cursor<'a> {
    bytes: &'a [u8],
    offset: usize,
}

impl<'a> Cursor<'a> {
    fn new(bytes: &'a [u8]) -> Cursor<'a> {
        Cursor { bytes, offset: 0 }
    }

    fn err<T>(&self, reason: &'static str) -> Result<T, WireError> {
        Err(WireError {
            offset: self.offset,
            reason,
        })
    }

    fn take(&mut self, len: usize, what: &'static str) -> Result<&'a [u8], WireError> {
        match self.bytes.get(self.offset..self.offset + len) {
            Some(slice) => {
                self.offset += len;
                Ok(slice)
            }
            None => self.err(what),
        }
    }

    fn take_u8(&mut self, what: &'static str) -> Result<u8, WireError> {
        Ok(self.take(1, what)?[0])
    }

    fn take_u32(&mut self, what: &'static str) -> Result<u32, WireError> {
        let raw = self.take(4, what)?;
        Ok(u32::from_be_bytes(raw.try_into().expect("4-byte slice")))
    }

    fn take_u64(&mut self, what: &'static str) -> Result<u64, WireError> {
        let raw = self.take(8, what)?;
        Ok(u64::from_be_bytes(raw.try_into().expect("8-byte slice")))
    }

    fn take_bytes(&mut self) -> Result<&'a [u8], WireError> {
        let len = self.take_u32("truncated length prefix")? as usize;
        if len > MAX_FRAME_LEN {
            return self.err("field length exceeds frame cap");
        }
        self.take(len, "truncated variable field")
    }

    fn take_string(&mut self) -> Result<String, WireError> {
        let start = self.offset;
        let raw = self.take_bytes()?;
        match std::str::from_utf8(raw) {
            Ok(s) => Ok(s.to_owned()),
            Err(_) => Err(WireError {
                offset: start,
                reason: "invalid utf-8 in string field",
            }),
        }
    }

    fn take_blob(&mut self) -> Result<ModelBlob, WireError> {
        let model_id = self.take_string()?;
        let size_offset = self.offset;
        let size_bytes = self.take_u64("truncated size field")?;
        let weights = self.take_bytes()?.to_vec();
        if size_bytes != weights.len() as u64 {
            return Err(WireError {
                offset: size_offset,
                reason: "size_bytes disagrees with weights length",
            });
        }
        Ok(ModelBlob {
            model_id,
            weights,
            size_bytes,
        })
    }

    fn finish(&self, msg: ProtocolMessage) -> Result<ProtocolMessage, WireError> {
        if self.offset != self.bytes.len() {
            return self.err("trailing bytes after message");
        }
        Ok(msg)
    }
}

fn decode_error_code(cursor: &mut Cursor<'_>) -> Result<ErrorCode, WireError> {
    let code = cursor.take_u8("truncated error code")?;
    Ok(match code {
        1 => ErrorCode::UnknownImage,
        2 => {
            let reason = match cursor.take_u8("truncated reject reason")? {
                1 => RejectReason::BadSignature,
                2 => RejectReason::MeasurementMismatch,
                3 => RejectReason::PlatformMismatch,
                4 => RejectReason::StaleNonce,
                _ => return cursor.err("unknown reject reason"),
            };
            ErrorCode::AttestationRejected(reason)
        }
        3 => ErrorCode::SessionRequired,
        4 => ErrorCode::NotReady,
        5 => ErrorCode::Expired,
        6 => ErrorCode::OutOfOrder,
        _ => return cursor.err("unknown error code"),
    })
}

/// Decode a message body (tag byte + payload), the inverse of
/// [`encode_message`]. Rejects unknown tags, truncation, inconsistent
/// lengths, and trailing bytes.
pub fn decode_message(body: &[u8]) -> Result<ProtocolMessage, WireError> {
    let mut cursor = Cursor::new(body);
    let tag = cursor.take_u8("empty message body")?;
    match tag {
        TAG_FETCH_IMAGE => {
            let image_id = cursor.take_string()?;
            cursor.finish(ProtocolMessage::FetchImage(image_id))
        }
        TAG_IMAGE => {
            let image_id = cursor.take_string()?;
            let payload = cursor.take_bytes()?.to_vec();
            let digest = cursor.take(DIGEST_LEN, "truncated measurement")?;
            let published_measurement =
                Measurement(digest.try_into().expect("checked length"));
            cursor.finish(ProtocolMessage::Image(RealmImage {
                image_id,
                payload,
                published_measurement,
            }))
        }
        TAG_HELLO => cursor.finish(ProtocolMessage::Hello),
        TAG_CHALLENGE => {
            let raw = cursor.take(NONCE_LEN, "truncated nonce")?;
            let nonce = Nonce(raw.try_into().expect("checked length"));
            cursor.finish(ProtocolMessage::Challenge(nonce))
        }
        TAG_EVIDENCE => {
            let start = cursor.offset + 4;
            let raw = cursor.take_bytes()?;
            let token = AttestationToken::from_bytes(raw).map_err(|err| WireError {
                offset: start + err.offset,
                reason: err.reason,
            })?;
            cursor.finish(ProtocolMessage::Evidence(token))
        }
        TAG_MODEL_DELIVERY => {
            let blob = cursor.take_blob()?;
            let encrypted = match cursor.take_u8("truncated encrypted flag")? {
                0 => false,
                1 => true,
                _ => return cursor.err("invalid encrypted flag"),
            };
            cursor.finish(ProtocolMessage::ModelDelivery(blob, encrypted))
        }
        TAG_UPDATE_QUERY => {
            let model_id = cursor.take_string()?;
            let version = cursor.take_u32("truncated version")?;
            cursor.finish(ProtocolMessage::UpdateQuery(model_id, version))
        }
        TAG_UPDATE_REPLY => {
            let reply = match cursor.take_u8("truncated presence flag")? {
                0 => None,
                1 => Some(cursor.take_blob()?),
                _ => return cursor.err("invalid presence flag"),
            };
            cursor.finish(ProtocolMessage::UpdateReply(reply))
        }
        TAG_ERROR => {
            let code = decode_error_code(&mut cursor)?;
            cursor.finish(ProtocolMessage::Error(code))
        }
        _ => Err(WireError {
            offset: 0,
            reason: "unknown message tag",
        }),
    }
}

/// Validate a frame's length prefix and decode its body. The inverse of
/// [`encode_frame`] for a frame already held in memory.
pub fn decode_frame(frame: &[u8]) -> Result<ProtocolMessage, WireError> {
    let mut cursor = Cursor::new(frame);
    let len = cursor.take_u32("truncated frame length")? as usize;
    if len > MAX_FRAME_LEN {
        return Err(WireError {
            offset: 0,
            reason: "frame length exceeds cap",
        });
    }
    if len != frame.len() - 4 {
        return Err(WireError {
            offset: 0,
            reason: "frame length disagrees with body",
        });
    }
    decode_message(&frame[4..])
}
