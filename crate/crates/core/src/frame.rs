//! Wire format of forwarded key groups.
//!
//! ```text
//! version(1) | pair_id(2, BE) | group_no(4, BE) | payload_len_bits(2, BE)
//!   | payload (MSB first, zero-padded) | crc32(4, BE) over everything before
//! ```

use crate::bits::BitString;
use crate::error::{Error, Result};

/// Reconciled forwarding: payload is one `L_G`-bit ciphertext.
pub const VERSION_RECONCILED: u8 = 0x01;
/// Simplified forwarding: payload is an encrypted `n`-bit codeword.
pub const VERSION_SIMPLIFIED: u8 = 0x02;

const HEADER_BYTES: usize = 9;
const CRC_BYTES: usize = 4;

/// Fixed header plus CRC, in bits.
pub const OVERHEAD_BITS: usize = 8 * (HEADER_BYTES + CRC_BYTES);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ForwardFrame {
    pub version: u8,
    pub pair_id: u16,
    pub group_no: u32,
    pub payload: BitString,
}

impl ForwardFrame {
    pub fn new(pair_id: u16, group_no: u32, payload: BitString) -> Self {
        Self {
            version: VERSION_RECONCILED,
            pair_id,
            group_no,
            payload,
        }
    }

    pub fn simplified(pair_id: u16, group_no: u32, payload: BitString) -> Self {
        Self {
            version: VERSION_SIMPLIFIED,
            ..Self::new(pair_id, group_no, payload)
        }
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let len = u16::try_from(self.payload.len())
            .map_err(|_| Error::invalid(format!("payload of {} bits exceeds 65535", self.payload.len())))?;
        let mut out = Vec::with_capacity(HEADER_BYTES + self.payload.len().div_ceil(8) + CRC_BYTES);
        out.push(self.version);
        out.extend_from_slice(&self.pair_id.to_be_bytes());
        out.extend_from_slice(&self.group_no.to_be_bytes());
        out.extend_from_slice(&len.to_be_bytes());
        out.extend_from_slice(&self.payload.to_bytes_msb());
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_be_bytes());
        Ok(out)
    }

    /// Header and CRC bits relative to the payload.
    pub fn overhead_ratio(&self) -> f64 {
        overhead_ratio(self.payload.len())
    }
}

pub fn overhead_ratio(payload_bits: usize) -> f64 {
    OVERHEAD_BITS as f64 / payload_bits as f64
}

/// Parses a reconciled-mode frame.
pub fn decode_frame(bytes: &[u8]) -> Result<ForwardFrame> {
    decode_versioned(bytes, VERSION_RECONCILED)
}

/// Parses a frame, accepting only `version`. The CRC is checked before the
/// version byte.
pub fn decode_versioned(bytes: &[u8], version: u8) -> Result<ForwardFrame> {
    if bytes.len() < HEADER_BYTES + CRC_BYTES {
        return Err(Error::MalformedFrame(format!("{} bytes is shorter than a header", bytes.len())));
    }
    let (body, tail) = bytes.split_at(bytes.len() - CRC_BYTES);
    let stored = u32::from_be_bytes(tail.try_into().expect("four bytes"));
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(Error::CorruptFrame { stored, computed });
    }
    if body[0] != version {
        return Err(Error::UnsupportedVersion(body[0]));
    }
    let pair_id = u16::from_be_bytes([body[1], body[2]]);
    let group_no = u32::from_be_bytes([body[3], body[4], body[5], body[6]]);
    let len = u16::from_be_bytes([body[7], body[8]]) as usize;
    let payload = &body[HEADER_BYTES..];
    if payload.len() != len.div_ceil(8) {
        return Err(Error::MalformedFrame(format!(
            "{len} payload bits declared, {} bytes present",
            payload.len()
        )));
    }
    Ok(ForwardFrame {
        version,
        pair_id,
        group_no,
        payload: BitString::from_bytes_msb(payload, len)?,
    })
}
