//! ICMP-style frames carrying link prices and bandwidth requests.
//!
//! Layout, all fields big-endian:
//!
//! ```text
//!  0      1      2             4             6             8
//! +------+------+-------------+-------------+-------------+
//! | type | code |  checksum   | identifier  |  sequence   |
//! +------+------+-------------+-------------+-------------+
//! |         timestamp (ms)    |     payload (IEEE-754 f64) ...
//! +---------------------------+--------------------------------+
//!  8                          12                              20
//! ```
//!
//! `type` is always 1. `code` 0 is a price notification (payload = link
//! price), `code` 1 a user response (payload = requested bandwidth). The
//! checksum is the internet checksum of the whole frame with the checksum
//! field zeroed.

use std::fmt::Write as _;

use thiserror::Error;

pub const FRAME_LEN: usize = 20;
pub const MSG_TYPE: u8 = 1;
pub const CODE_NOTIFICATION: u8 = 0;
pub const CODE_RESPONSE: u8 = 1;

#[derive(Debug, Error, Clone, Copy, PartialEq)]
pub enum CodecError {
    #[error("frame must be {FRAME_LEN} bytes, got {0}")]
    WrongLength(usize),
    #[error("checksum mismatch: header says {found:#06x}, computed {computed:#06x}")]
    BadChecksum { found: u16, computed: u16 },
    #[error("unsupported message type {0}")]
    WrongType(u8),
    #[error("unsupported code {0}")]
    InvalidCode(u8),
    #[error("payload must be finite, got {0}")]
    NonFinitePayload(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriceMessage {
    pub msg_type: u8,
    pub code: u8,
    /// Filled in by `decode`; ignored by `encode`.
    pub checksum: u16,
    pub identifier: u16,
    pub sequence: u16,
    pub timestamp: u32,
    pub payload: f64,
}

impl PriceMessage {
    pub fn notification(identifier: u16, sequence: u16, timestamp: u32, price: f64) -> Self {
        PriceMessage {
            msg_type: MSG_TYPE,
            code: CODE_NOTIFICATION,
            checksum: 0,
            identifier,
            sequence,
            timestamp,
            payload: price,
        }
    }

    pub fn response(identifier: u16, sequence: u16, timestamp: u32, bandwidth: f64) -> Self {
        PriceMessage {
            code: CODE_RESPONSE,
            ..PriceMessage::notification(identifier, sequence, timestamp, bandwidth)
        }
    }

    pub fn is_notification(&self) -> bool {
        self.code == CODE_NOTIFICATION
    }
}

/// Internet checksum: ones' complement of the ones' complement sum of
/// big-endian 16-bit words. An odd trailing byte is padded with zero.
pub fn checksum(bytes: &[u8]) -> u16 {
    !fold(bytes)
}

fn fold(bytes: &[u8]) -> u16 {
    let mut sum: u32 = 0;
    let mut chunks = bytes.chunks_exact(2);
    for pair in &mut chunks {
        sum += u32::from(u16::from_be_bytes([pair[0], pair[1]]));
    }
    if let [last] = chunks.remainder() {
        sum += u32::from(*last) << 8;
    }
    while sum > 0xffff {
        sum = (sum & 0xffff) + (sum >> 16);
    }
    sum as u16
}

/// True when the folded sum over a frame, checksum included, is `0xffff`.
pub fn verify(bytes: &[u8]) -> bool {
    fold(bytes) == 0xffff
}

pub fn encode(msg: &PriceMessage) -> Result<[u8; FRAME_LEN], CodecError> {
    if msg.msg_type != MSG_TYPE {
        return Err(CodecError::WrongType(msg.msg_type));
    }
    if msg.code > CODE_RESPONSE {
        return Err(CodecError::InvalidCode(msg.code));
    }
    if !msg.payload.is_finite() {
        return Err(CodecError::NonFinitePayload(msg.payload));
    }
    let mut buf = [0u8; FRAME_LEN];
    buf[0] = msg.msg_type;
    buf[1] = msg.code;
    buf[4..6].copy_from_slice(&msg.identifier.to_be_bytes());
    buf[6..8].copy_from_slice(&msg.sequence.to_be_bytes());
    buf[8..12].copy_from_slice(&msg.timestamp.to_be_bytes());
    buf[12..20].copy_from_slice(&msg.payload.to_bits().to_be_bytes());
    let sum = checksum(&buf);
    buf[2..4].copy_from_slice(&sum.to_be_bytes());
    Ok(buf)
}

pub fn decode(bytes: &[u8]) -> Result<PriceMessage, CodecError> {
    if bytes.len() != FRAME_LEN {
        return Err(CodecError::WrongLength(bytes.len()));
    }
    let found = u16::from_be_bytes([bytes[2], bytes[3]]);
    if !verify(bytes) {
        let mut zeroed = [0u8; FRAME_LEN];
        zeroed.copy_from_slice(bytes);
        zeroed[2] = 0;
        zeroed[3] = 0;
        return Err(CodecError::BadChecksum {
            found,
            computed: checksum(&zeroed),
        });
    }
    if bytes[0] != MSG_TYPE {
        return Err(CodecError::WrongType(bytes[0]));
    }
    if bytes[1] > CODE_RESPONSE {
        return Err(CodecError::InvalidCode(bytes[1]));
    }
    let mut payload = [0u8; 8];
    payload.copy_from_slice(&bytes[12..20]);
    Ok(PriceMessage {
        msg_type: bytes[0],
        code: bytes[1],
        checksum: found,
        identifier: u16::from_be_bytes([bytes[4], bytes[5]]),
        sequence: u16::from_be_bytes([bytes[6], bytes[7]]),
        timestamp: u32::from_be_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]),
        payload: f64::from_bits(u64::from_be_bytes(payload)),
    })
}

/// Lowercase hex, no separators.
pub fn to_hex(bytes: &[u8]) -> String {
    let mut out = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        let _ = write!(out, "{b:02x}");
    }
    out
}
