//! Binary frame for gradient packets.
//!
//! ```text
//! magic "DDAL" | version u8 | sender_id u32 | sender_epoch u64 | T f64 | R f64
//! | param_count u32 | param_count x f32 | crc32 u32
//! ```
//!
//! Integers and floats are little-endian; the CRC covers every byte before it.

use std::sync::Arc;

use thiserror::Error;

use crate::knowledge::{AgentId, GradientPacket};
use crate::neural::{GradientVector, ShapeDescriptor};

pub const MAGIC: [u8; 4] = *b"DDAL";
pub const VERSION: u8 = 1;
/// Bytes before the payload.
pub const HEADER_LEN: usize = 4 + 1 + 4 + 8 + 8 + 8 + 4;
pub const CRC_LEN: usize = 4;
/// Upper bound on `param_count` accepted from the wire.
pub const MAX_PARAMS: u32 = 1 << 24;

const COUNT_OFFSET: usize = HEADER_LEN - 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WireError {
    #[error("refusing to encode an empty gradient")]
    EmptyGradient,
    #[error("non-finite {0} cannot be framed")]
    NonFinite(&'static str),
    #[error("frame truncated: need {needed} bytes, have {have}")]
    Truncated { needed: usize, have: usize },
    #[error("frame has {extra} trailing bytes")]
    TrailingBytes { extra: usize },
    #[error("bad magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported frame version {0}")]
    BadVersion(u8),
    #[error("checksum mismatch (frame says {stored:#010x}, computed {computed:#010x})")]
    Checksum { stored: u32, computed: u32 },
    #[error("param count {0} exceeds the frame limit")]
    Oversize(u32),
    #[error("frame carries {actual} parameters, receiver expects {expected}")]
    ShapeMismatch { expected: usize, actual: usize },
    #[error("invalid field: {0}")]
    InvalidField(&'static str),
}

/// Total frame length implied by a header, or an error if the header is
/// unusable for framing.
pub fn frame_len(header: &[u8]) -> Result<usize, WireError> {
    if header.len() < HEADER_LEN {
        return Err(WireError::Truncated {
            needed: HEADER_LEN,
            have: header.len(),
        });
    }
    let magic: [u8; 4] = header[..4].try_into().expect("4 bytes");
    if magic != MAGIC {
        return Err(WireError::BadMagic(magic));
    }
    let count = read_u32(header, COUNT_OFFSET);
    if count > MAX_PARAMS {
        return Err(WireError::Oversize(count));
    }
    Ok(HEADER_LEN + 4 * count as usize + CRC_LEN)
}

pub fn encode(packet: &GradientPacket) -> Result<Vec<u8>, WireError> {
    let values = packet.grad.as_slice();
    if values.is_empty() {
        return Err(WireError::EmptyGradient);
    }
    if values.len() > MAX_PARAMS as usize {
        return Err(WireError::Oversize(values.len() as u32));
    }
    if !(packet.experience.is_finite() && packet.relevance.is_finite()) {
        return Err(WireError::NonFinite("weight"));
    }
    let mut buf = Vec::with_capacity(HEADER_LEN + 4 * values.len() + CRC_LEN);
    buf.extend_from_slice(&MAGIC);
    buf.push(VERSION);
    buf.extend_from_slice(&packet.sender_id.0.to_le_bytes());
    buf.extend_from_slice(&packet.sender_epoch.to_le_bytes());
    buf.extend_from_slice(&packet.experience.to_le_bytes());
    buf.extend_from_slice(&packet.relevance.to_le_bytes());
    buf.extend_from_slice(&(values.len() as u32).to_le_bytes());
    for &v in values {
        let narrow = v as f32;
        if !narrow.is_finite() {
            return Err(WireError::NonFinite("gradient"));
        }
        buf.extend_from_slice(&narrow.to_le_bytes());
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    Ok(buf)
}

/// Decodes one complete frame for a receiver whose networks have `shape`.
pub fn decode(bytes: &[u8], shape: &Arc<ShapeDescriptor>) -> Result<GradientPacket, WireError> {
    let total = frame_len(bytes)?;
    if bytes.len() < total {
        return Err(WireError::Truncated {
            needed: total,
            have: bytes.len(),
        });
    }
    if bytes.len() > total {
        return Err(WireError::TrailingBytes {
            extra: bytes.len() - total,
        });
    }
    let body = &bytes[..total - CRC_LEN];
    let stored = read_u32(bytes, total - CRC_LEN);
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(WireError::Checksum { stored, computed });
    }
    if bytes[4] != VERSION {
        return Err(WireError::BadVersion(bytes[4]));
    }
    let sender_id = read_u32(bytes, 5);
    let sender_epoch = u64::from_le_bytes(bytes[9..17].try_into().expect("8 bytes"));
    let experience = read_f64(bytes, 17);
    let relevance = read_f64(bytes, 25);
    let count = read_u32(bytes, COUNT_OFFSET) as usize;
    if sender_id == 0 {
        return Err(WireError::InvalidField("sender_id"));
    }
    if !(experience > 0.0 && experience.is_finite()) {
        return Err(WireError::InvalidField("T"));
    }
    if !(relevance > 0.0 && relevance.is_finite()) {
        return Err(WireError::InvalidField("R"));
    }
    if count != shape.param_count() {
        return Err(WireError::ShapeMismatch {
            expected: shape.param_count(),
            actual: count,
        });
    }
    let values: Vec<f64> = body[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
        .collect();
    let grad = GradientVector::from_values(Arc::clone(shape), values)
        .map_err(|_| WireError::NonFinite("gradient"))?;
    Ok(GradientPacket {
        sender_id: AgentId(sender_id),
        sender_epoch,
        experience,
        relevance,
        grad,
    })
}

fn read_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"))
}

fn read_f64(bytes: &[u8], at: usize) -> f64 {
    f64::from_le_bytes(bytes[at..at + 8].try_into().expect("8 bytes"))
}
