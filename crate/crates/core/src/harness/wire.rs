//! Framed wire format exchanged between node workers and the fusion center.
//!
//! Every frame is little-endian:
//!
//! ```text
//! offset  size  field
//! 0       4     magic "MPAM"
//! 4       1     version (1)
//! 5       1     msg_type (0 = node -> fusion estimate, 1 = fusion -> node broadcast)
//! 6       2     iteration (u16)
//! 8       2     node_id (u16)
//! 10      4     rate_milli_bits (u32, R_t * 1000 rounded; u32::MAX flags the
//!               idealized infinite-rate lossless mode)
//! 14      4     payload_len (u32)
//! 18      ...   payload
//! ```
//!
//! Payload conventions (not part of the frame itself): a node estimate
//! carries `|r_p|^2` (f64), the measured distortion (f64), the honest rate
//! in bits (f64), then the message entries as f64 for lossless runs or f32
//! otherwise; a broadcast carries the Onsager scalar `g` (f64) followed by
//! the current estimate as f64. A zero-rate round uses an empty payload.

pub const MAGIC: [u8; 4] = *b"MPAM";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 18;

/// Sentinel for an unquantized (infinite-rate) round.
pub const RATE_LOSSLESS: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MsgType {
    /// Node -> fusion quantized estimate.
    NodeEstimate = 0,
    /// Fusion -> node broadcast of (g, x_t).
    Broadcast = 1,
}

impl MsgType {
    fn from_u8(v: u8) -> Result<Self, WireError> {
        match v {
            0 => Ok(MsgType::NodeEstimate),
            1 => Ok(MsgType::Broadcast),
            found => Err(WireError::BadMsgType { found }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WireMessage {
    pub msg_type: MsgType,
    pub iteration: u16,
    pub node_id: u16,
    pub rate_milli_bits: u32,
    pub payload: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WireError {
    #[error("truncated frame: need at least {needed} bytes, got {got}")]
    Truncated { needed: usize, got: usize },
    #[error("bad magic {found:?}")]
    BadMagic { found: [u8; 4] },
    #[error("unsupported version {found}")]
    BadVersion { found: u8 },
    #[error("unknown message type {found}")]
    BadMsgType { found: u8 },
    #[error("length mismatch: header declares {declared} payload bytes, frame carries {actual}")]
    LengthMismatch { declared: usize, actual: usize },
    #[error("payload of {len} bytes exceeds the u32 frame limit")]
    PayloadTooLarge { len: usize },
    #[error("malformed payload: {0}")]
    MalformedPayload(String),
}

/// Converts a schedule rate to the wire representation.
pub fn rate_to_milli_bits(rate_bits: f64) -> u32 {
    if !rate_bits.is_finite() {
        RATE_LOSSLESS
    } else {
        (rate_bits * 1000.0).round().min((RATE_LOSSLESS - 1) as f64) as u32
    }
}

/// Inverse of [`rate_to_milli_bits`].
pub fn milli_bits_to_rate(milli: u32) -> f64 {
    if milli == RATE_LOSSLESS {
        f64::INFINITY
    } else {
        milli as f64 / 1000.0
    }
}

pub fn encode_message(msg: &WireMessage) -> Result<Vec<u8>, WireError> {
    if msg.payload.len() > u32::MAX as usize {
        return Err(WireError::PayloadTooLarge {
            len: msg.payload.len(),
        });
    }
    let mut out = Vec::with_capacity(HEADER_LEN + msg.payload.len());
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(msg.msg_type as u8);
    out.extend_from_slice(&msg.iteration.to_le_bytes());
    out.extend_from_slice(&msg.node_id.to_le_bytes());
    out.extend_from_slice(&msg.rate_milli_bits.to_le_bytes());
    out.extend_from_slice(&(msg.payload.len() as u32).to_le_bytes());
    out.extend_from_slice(&msg.payload);
    Ok(out)
}

pub fn decode_message(bytes: &[u8]) -> Result<WireMessage, WireError> {
    if bytes.len() < HEADER_LEN {
        return Err(WireError::Truncated {
            needed: HEADER_LEN,
            got: bytes.len(),
        });
    }
    let mut magic = [0u8; 4];
    magic.copy_from_slice(&bytes[0..4]);
    if magic != MAGIC {
        return Err(WireError::BadMagic { found: magic });
    }
    if bytes[4] != VERSION {
        return Err(WireError::BadVersion { found: bytes[4] });
    }
    let msg_type = MsgType::from_u8(bytes[5])?;
    let iteration = u16::from_le_bytes([bytes[6], bytes[7]]);
    let node_id = u16::from_le_bytes([bytes[8], bytes[9]]);
    let rate_milli_bits = u32::from_le_bytes([bytes[10], bytes[11], bytes[12], bytes[13]]);
    let declared = u32::from_le_bytes([bytes[14], bytes[15], bytes[16], bytes[17]]) as usize;
    let actual = bytes.len() - HEADER_LEN;
    if declared != actual {
        return Err(WireError::LengthMismatch { declared, actual });
    }
    Ok(WireMessage {
        msg_type,
        iteration,
        node_id,
        rate_milli_bits,
        payload: bytes[HEADER_LEN..].to_vec(),
    })
}

/// Node-estimate payload: `|r|^2`, measured distortion, honest rate, entries.
pub fn encode_node_payload(
    residual_norm_sq: f64,
    distortion: f64,
    honest_rate_bits: f64,
    entries: &[f64],
    wide: bool,
) -> Vec<u8> {
    let width = if wide { 8 } else { 4 };
    let mut out = Vec::with_capacity(24 + entries.len() * width);
    out.extend_from_slice(&residual_norm_sq.to_le_bytes());
    out.extend_from_slice(&distortion.to_le_bytes());
    out.extend_from_slice(&honest_rate_bits.to_le_bytes());
    if wide {
        for &e in entries {
            out.extend_from_slice(&e.to_le_bytes());
        }
    } else {
        for &e in entries {
            out.extend_from_slice(&(e as f32).to_le_bytes());
        }
    }
    out
}

/// Inverse of [`encode_node_payload`]; `expected_len` is the signal length.
pub fn decode_node_payload(
    payload: &[u8],
    expected_len: usize,
    wide: bool,
) -> Result<(f64, f64, f64, Vec<f64>), WireError> {
    let width = if wide { 8 } else { 4 };
    let want = 24 + expected_len * width;
    if payload.len() != want {
        return Err(WireError::MalformedPayload(format!(
            "node payload has {} bytes, expected {want}",
            payload.len()
        )));
    }
    let f64_at = |off: usize| {
        let mut b = [0u8; 8];
        b.copy_from_slice(&payload[off..off + 8]);
        f64::from_le_bytes(b)
    };
    let norm = f64_at(0);
    let distortion = f64_at(8);
    let honest = f64_at(16);
    let mut entries = Vec::with_capacity(expected_len);
    if wide {
        for k in 0..expected_len {
            entries.push(f64_at(24 + 8 * k));
        }
    } else {
        for k in 0..expected_len {
            let off = 24 + 4 * k;
            let mut b = [0u8; 4];
            b.copy_from_slice(&payload[off..off + 4]);
            entries.push(f32::from_le_bytes(b) as f64);
        }
    }
    Ok((norm, distortion, honest, entries))
}

/// Broadcast payload: Onsager scalar then the current estimate (f64).
pub fn encode_broadcast_payload(g: f64, x: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + x.len() * 8);
    out.extend_from_slice(&g.to_le_bytes());
    for &v in x {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_broadcast_payload(payload: &[u8], expected_len: usize) -> Result<(f64, Vec<f64>), WireError> {
    let want = 8 + expected_len * 8;
    if payload.len() != want {
        return Err(WireError::MalformedPayload(format!(
            "broadcast payload has {} bytes, expected {want}",
            payload.len()
        )));
    }
    let mut b = [0u8; 8];
    b.copy_from_slice(&payload[0..8]);
    let g = f64::from_le_bytes(b);
    let mut x = Vec::with_capacity(expected_len);
    for k in 0..expected_len {
        let off = 8 + 8 * k;
        let mut w = [0u8; 8];
        w.copy_from_slice(&payload[off..off + 8]);
        x.push(f64::from_le_bytes(w));
    }
    Ok((g, x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_message(rng: &mut ChaCha8Rng) -> WireMessage {
        let len = rng.random_range(0..64);
        WireMessage {
            msg_type: if rng.random::<bool>() {
                MsgType::NodeEstimate
            } else {
                MsgType::Broadcast
            },
            iteration: rng.random(),
            node_id: rng.random(),
            rate_milli_bits: rng.random(),
            payload: (0..len).map(|_| rng.random()).collect(),
        }
    }

    #[test]
    fn round_trip_many_random_messages() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let msg = random_message(&mut rng);
            let bytes = encode_message(&msg).unwrap();
            assert_eq!(decode_message(&bytes).unwrap(), msg);
        }
    }

    #[test]
    fn decode_rejects_corruption() {
        let msg = WireMessage {
            msg_type: MsgType::NodeEstimate,
            iteration: 3,
            node_id: 1,
            rate_milli_bits: 2000,
            payload: vec![1, 2, 3, 4],
        };
        let good = encode_message(&msg).unwrap();

        let mut bad_magic = good.clone();
        bad_magic[0] ^= 0x01;
        assert!(matches!(decode_message(&bad_magic), Err(WireError::BadMagic { .. })));

        let mut bad_version = good.clone();
        bad_version[4] = 9;
        assert_eq!(decode_message(&bad_version), Err(WireError::BadVersion { found: 9 }));

        let mut bad_type = good.clone();
        bad_type[5] = 7;
        assert_eq!(decode_message(&bad_type), Err(WireError::BadMsgType { found: 7 }));

        // payload_len overstated by one.
        let mut overstated = good.clone();
        let declared = (msg.payload.len() + 1) as u32;
        overstated[14..18].copy_from_slice(&declared.to_le_bytes());
        assert_eq!(
            decode_message(&overstated),
            Err(WireError::LengthMismatch {
                declared: 5,
                actual: 4
            })
        );

        // Trailing garbage is a mismatch too.
        let mut trailing = good.clone();
        trailing.push(0xFF);
        assert!(matches!(
            decode_message(&trailing),
            Err(WireError::LengthMismatch { .. })
        ));

        assert!(matches!(
            decode_message(&good[..10]),
            Err(WireError::Truncated { .. })
        ));
    }

    #[test]
    fn rate_conversion_round_trips() {
        assert_eq!(rate_to_milli_bits(2.0), 2000);
        assert_eq!(rate_to_milli_bits(f64::INFINITY), RATE_LOSSLESS);
        assert_eq!(milli_bits_to_rate(RATE_LOSSLESS), f64::INFINITY);
        assert_eq!(milli_bits_to_rate(1250), 1.25);
    }

    #[test]
    fn payload_round_trips() {
        let entries: Vec<f64> = (0..17).map(|k| k as f64 * 0.25 - 2.0).collect();
        let wide = encode_node_payload(3.5, 0.01, 4.25, &entries, true);
        let (n, d, h, e) = decode_node_payload(&wide, entries.len(), true).unwrap();
        assert_eq!((n, d, h), (3.5, 0.01, 4.25));
        assert_eq!(e, entries);

        // Narrow payloads carry f32 values exactly when inputs are f32-rounded.
        let rounded: Vec<f64> = entries.iter().map(|&v| v as f32 as f64).collect();
        let narrow = encode_node_payload(1.0, 0.0, 2.0, &rounded, false);
        let (_, _, _, e) = decode_node_payload(&narrow, rounded.len(), false).unwrap();
        assert_eq!(e, rounded);

        let (g, x) = decode_broadcast_payload(&encode_broadcast_payload(0.7, &entries), entries.len()).unwrap();
        assert_eq!(g, 0.7);
        assert_eq!(x, entries);

        assert!(decode_node_payload(&wide, entries.len() + 1, true).is_err());
        assert!(decode_broadcast_payload(&[0u8; 4], 0).is_err());
    }
}
