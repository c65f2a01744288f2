//! Wire format of the classical channel.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "PAQK"
//! 4       1     version (1)
//! 5       1     message type
//! 6       4     payload length, u32 LE
//! 10      n     payload
//! 10+n    4     CRC-32 (IEEE) of bytes 0..10+n, u32 LE
//! ```
//!
//! Payload integers are u32 LE and reals are IEEE-754 binary64 LE. Arrays are
//! a u32 element count followed by the elements.

use std::io::{self, Read, Write};

use thiserror::Error;

pub const MAGIC: [u8; 4] = *b"PAQK";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 10;
pub const CRC_LEN: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum MessageType {
    Hello = 1,
    PacketMeta = 2,
    RevealSet = 3,
    ParamEstimate = 4,
    KeyrateReport = 5,
}

impl MessageType {
    pub fn from_byte(b: u8) -> Option<Self> {
        Some(match b {
            1 => Self::Hello,
            2 => Self::PacketMeta,
            3 => Self::RevealSet,
            4 => Self::ParamEstimate,
            5 => Self::KeyrateReport,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MessageBody {
    Hello {
        v_a: f64,
        packet_size: u32,
        reveal_fraction: f64,
    },
    PacketMeta {
        packet_id: u32,
        pulse_count: u32,
    },
    RevealSet {
        packet_id: u32,
        indices: Vec<u32>,
        /// Interleaved `(x_bh, p_bh)` pairs.
        measurements: Vec<f64>,
    },
    ParamEstimate {
        packet_id: u32,
        theta: f64,
        phi: f64,
        delta: f64,
        t_hat: f64,
        xi_hat: f64,
    },
    KeyrateReport {
        packet_id: u32,
        i_ab: f64,
        chi_be: f64,
        k: f64,
    },
}

impl MessageBody {
    pub fn message_type(&self) -> MessageType {
        match self {
            Self::Hello { .. } => MessageType::Hello,
            Self::PacketMeta { .. } => MessageType::PacketMeta,
            Self::RevealSet { .. } => MessageType::RevealSet,
            Self::ParamEstimate { .. } => MessageType::ParamEstimate,
            Self::KeyrateReport { .. } => MessageType::KeyrateReport,
        }
    }

    /// Packet the message belongs to, if any.
    pub fn packet_id(&self) -> Option<u32> {
        match self {
            Self::Hello { .. } => None,
            Self::PacketMeta { packet_id, .. }
            | Self::RevealSet { packet_id, .. }
            | Self::ParamEstimate { packet_id, .. }
            | Self::KeyrateReport { packet_id, .. } => Some(*packet_id),
        }
    }
}

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("bad magic {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("unsupported version {0}")]
    BadVersion(u8),
    #[error("unknown message type {0}")]
    UnknownType(u8),
    #[error("crc mismatch: frame says {expected:08x}, computed {computed:08x}")]
    CrcMismatch { expected: u32, computed: u32 },
    #[error("truncated frame: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
    #[error("payload of {0} bytes exceeds the u32 length field")]
    PayloadTooLarge(usize),
    #[error("malformed payload: {0}")]
    Malformed(String),
    #[error("{0} trailing bytes after frame")]
    TrailingBytes(usize),
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
}

struct PayloadWriter(Vec<u8>);

impl PayloadWriter {
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn len_prefix(&mut self, n: usize) -> Result<(), FrameError> {
        let n = u32::try_from(n).map_err(|_| FrameError::PayloadTooLarge(n))?;
        self.u32(n);
        Ok(())
    }
}

struct PayloadReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> PayloadReader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], FrameError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| FrameError::Malformed(format!("payload ends at byte {} of {}", self.buf.len(), self.pos + n)))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, FrameError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, FrameError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn count(&mut self, elem_size: usize) -> Result<usize, FrameError> {
        let n = self.u32()? as usize;
        if n.saturating_mul(elem_size) > self.buf.len() - self.pos {
            return Err(FrameError::Malformed(format!("array of {n} elements overruns payload")));
        }
        Ok(n)
    }

    fn finish(self) -> Result<(), FrameError> {
        if self.pos != self.buf.len() {
            return Err(FrameError::Malformed(format!(
                "{} unused payload bytes",
                self.buf.len() - self.pos
            )));
        }
        Ok(())
    }
}

fn encode_payload(body: &MessageBody) -> Result<Vec<u8>, FrameError> {
    let mut w = PayloadWriter(Vec::new());
    match body {
        MessageBody::Hello {
            v_a,
            packet_size,
            reveal_fraction,
        } => {
            w.f64(*v_a);
            w.u32(*packet_size);
            w.f64(*reveal_fraction);
        }
        MessageBody::PacketMeta { packet_id, pulse_count } => {
            w.u32(*packet_id);
            w.u32(*pulse_count);
        }
        MessageBody::RevealSet {
            packet_id,
            indices,
            measurements,
        } => {
            w.u32(*packet_id);
            w.len_prefix(indices.len())?;
            for &i in indices {
                w.u32(i);
            }
            w.len_prefix(measurements.len())?;
            for &m in measurements {
                w.f64(m);
            }
        }
        MessageBody::ParamEstimate {
            packet_id,
            theta,
            phi,
            delta,
            t_hat,
            xi_hat,
        } => {
            w.u32(*packet_id);
            for v in [theta, phi, delta, t_hat, xi_hat] {
                w.f64(*v);
            }
        }
        MessageBody::KeyrateReport {
            packet_id,
            i_ab,
            chi_be,
            k,
        } => {
            w.u32(*packet_id);
            for v in [i_ab, chi_be, k] {
                w.f64(*v);
            }
        }
    }
    Ok(w.0)
}

fn decode_payload(kind: MessageType, payload: &[u8]) -> Result<MessageBody, FrameError> {
    let mut r = PayloadReader { buf: payload, pos: 0 };
    let body = match kind {
        MessageType::Hello => MessageBody::Hello {
            v_a: r.f64()?,
            packet_size: r.u32()?,
            reveal_fraction: r.f64()?,
        },
        MessageType::PacketMeta => MessageBody::PacketMeta {
            packet_id: r.u32()?,
            pulse_count: r.u32()?,
        },
        MessageType::RevealSet => {
            let packet_id = r.u32()?;
            let n = r.count(4)?;
            let indices = (0..n).map(|_| r.u32()).collect::<Result<Vec<_>, _>>()?;
            let m = r.count(8)?;
            let measurements = (0..m).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
            if m != 2 * n {
                return Err(FrameError::Malformed(format!(
                    "{n} revealed indices but {m} measurement values"
                )));
            }
            MessageBody::RevealSet {
                packet_id,
                indices,
                measurements,
            }
        }
        MessageType::ParamEstimate => MessageBody::ParamEstimate {
            packet_id: r.u32()?,
            theta: r.f64()?,
            phi: r.f64()?,
            delta: r.f64()?,
            t_hat: r.f64()?,
            xi_hat: r.f64()?,
        },
        MessageType::KeyrateReport => MessageBody::KeyrateReport {
            packet_id: r.u32()?,
            i_ab: r.f64()?,
            chi_be: r.f64()?,
            k: r.f64()?,
        },
    };
    r.finish()?;
    Ok(body)
}

pub fn encode_frame(body: &MessageBody) -> Result<Vec<u8>, FrameError> {
    let payload = encode_payload(body)?;
    let len = u32::try_from(payload.len()).map_err(|_| FrameError::PayloadTooLarge(payload.len()))?;
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len() + CRC_LEN);
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(body.message_type() as u8);
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(&payload);
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

/// Validated header fields.
struct Header {
    kind: MessageType,
    payload_len: usize,
}

fn parse_header(h: &[u8; HEADER_LEN]) -> Result<Header, FrameError> {
    let magic: [u8; 4] = h[0..4].try_into().unwrap();
    if magic != MAGIC {
        return Err(FrameError::BadMagic(magic));
    }
    if h[4] != VERSION {
        return Err(FrameError::BadVersion(h[4]));
    }
    let kind = MessageType::from_byte(h[5]).ok_or(FrameError::UnknownType(h[5]))?;
    let payload_len = u32::from_le_bytes(h[6..10].try_into().unwrap()) as usize;
    Ok(Header { kind, payload_len })
}

fn check_crc(header: &[u8], payload: &[u8], crc_bytes: &[u8]) -> Result<(), FrameError> {
    let expected = u32::from_le_bytes(crc_bytes.try_into().unwrap());
    let mut hasher = crc32fast::Hasher::new();
    hasher.update(header);
    hasher.update(payload);
    let computed = hasher.finalize();
    if expected != computed {
        return Err(FrameError::CrcMismatch { expected, computed });
    }
    Ok(())
}

/// Decodes exactly one frame occupying all of `bytes`.
pub fn decode_frame(bytes: &[u8]) -> Result<MessageBody, FrameError> {
    let (body, used) = decode_frame_prefix(bytes)?;
    if used != bytes.len() {
        return Err(FrameError::TrailingBytes(bytes.len() - used));
    }
    Ok(body)
}

/// Decodes the frame at the start of `bytes`, returning it and its length.
pub fn decode_frame_prefix(bytes: &[u8]) -> Result<(MessageBody, usize), FrameError> {
    if bytes.len() < HEADER_LEN {
        return Err(FrameError::Truncated {
            needed: HEADER_LEN,
            available: bytes.len(),
        });
    }
    let header = parse_header(bytes[..HEADER_LEN].try_into().unwrap())?;
    let total = HEADER_LEN + header.payload_len + CRC_LEN;
    if bytes.len() < total {
        return Err(FrameError::Truncated {
            needed: total,
            available: bytes.len(),
        });
    }
    let payload = &bytes[HEADER_LEN..HEADER_LEN + header.payload_len];
    check_crc(&bytes[..HEADER_LEN], payload, &bytes[total - CRC_LEN..total])?;
    Ok((decode_payload(header.kind, payload)?, total))
}

pub fn write_frame<W: Write + ?Sized>(w: &mut W, body: &MessageBody) -> Result<(), FrameError> {
    w.write_all(&encode_frame(body)?)?;
    w.flush()?;
    Ok(())
}

/// Reads one frame. `Ok(None)` on a clean end of stream at a frame boundary.
pub fn read_frame<R: Read + ?Sized>(r: &mut R) -> Result<Option<MessageBody>, FrameError> {
    let mut header = [0u8; HEADER_LEN];
    let mut got = 0;
    while got < HEADER_LEN {
        match r.read(&mut header[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => {
                return Err(FrameError::Truncated {
                    needed: HEADER_LEN,
                    available: got,
                })
            }
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let parsed = parse_header(&header)?;
    let mut rest = vec![0u8; parsed.payload_len + CRC_LEN];
    r.read_exact(&mut rest).map_err(|e| {
        if e.kind() == io::ErrorKind::UnexpectedEof {
            FrameError::Truncated {
                needed: HEADER_LEN + rest.len(),
                available: HEADER_LEN,
            }
        } else {
            e.into()
        }
    })?;
    let (payload, crc) = rest.split_at(parsed.payload_len);
    check_crc(&header, payload, crc)?;
    Ok(Some(decode_payload(parsed.kind, payload)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hello() -> MessageBody {
        MessageBody::Hello {
            v_a: 1.16,
            packet_size: 7800,
            reveal_fraction: 0.1,
        }
    }

    #[test]
    fn hello_layout() {
        let f = encode_frame(&hello()).unwrap();
        assert_eq!(&f[..5], &[0x50, 0x41, 0x51, 0x4B, 0x01]);
        assert_eq!(f[5], MessageType::Hello as u8);
        assert_eq!(u32::from_le_bytes(f[6..10].try_into().unwrap()), 20);
        assert_eq!(&f[10..18], &1.16f64.to_le_bytes());
        assert_eq!(f.len(), HEADER_LEN + 20 + CRC_LEN);
        assert_eq!(decode_frame(&f).unwrap(), hello());
    }

    #[test]
    fn empty_reveal_set() {
        let body = MessageBody::RevealSet {
            packet_id: 4,
            indices: vec![],
            measurements: vec![],
        };
        let f = encode_frame(&body).unwrap();
        assert_eq!(&f[HEADER_LEN..f.len() - CRC_LEN], &[4, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0]);
        assert_eq!(decode_frame(&f).unwrap(), body);
    }

    #[test]
    fn corrupted_crc() {
        let mut f = encode_frame(&hello()).unwrap();
        let n = f.len();
        f[n - 1] ^= 0xFF;
        assert!(matches!(decode_frame(&f), Err(FrameError::CrcMismatch { .. })));
        let mut g = encode_frame(&hello()).unwrap();
        g[12] ^= 0x01;
        assert!(matches!(decode_frame(&g), Err(FrameError::CrcMismatch { .. })));
    }

    #[test]
    fn truncated() {
        let f = encode_frame(&hello()).unwrap();
        assert!(matches!(decode_frame(&f[..6]), Err(FrameError::Truncated { .. })));
        assert!(matches!(decode_frame(&f[..f.len() - 1]), Err(FrameError::Truncated { .. })));
        let mut cursor = &f[..f.len() - 2];
        assert!(matches!(read_frame(&mut cursor), Err(FrameError::Truncated { .. })));
        let mut cursor = &f[..4];
        assert!(matches!(read_frame(&mut cursor), Err(FrameError::Truncated { .. })));
    }

    #[test]
    fn bad_magic_and_version() {
        let mut f = encode_frame(&hello()).unwrap();
        f[0] = b'X';
        assert!(matches!(decode_frame(&f), Err(FrameError::BadMagic(_))));
        let mut f = encode_frame(&hello()).unwrap();
        f[4] = 2;
        assert!(matches!(decode_frame(&f), Err(FrameError::BadVersion(2))));
        let mut f = encode_frame(&hello()).unwrap();
        f[5] = 99;
        assert!(matches!(decode_frame(&f), Err(FrameError::UnknownType(99))));
    }

    #[test]
    fn inconsistent_reveal_arrays_rejected() {
        // hand-built payload: one index, three measurement values
        let mut payload = vec![];
        payload.extend_from_slice(&7u32.to_le_bytes());
        payload.extend_from_slice(&1u32.to_le_bytes());
        payload.extend_from_slice(&5u32.to_le_bytes());
        payload.extend_from_slice(&3u32.to_le_bytes());
        for v in [1.0f64, 2.0, 3.0] {
            payload.extend_from_slice(&v.to_le_bytes());
        }
        let mut f = MAGIC.to_vec();
        f.push(VERSION);
        f.push(MessageType::RevealSet as u8);
        f.extend_from_slice(&(payload.len() as u32).to_le_bytes());
        f.extend_from_slice(&payload);
        let crc = crc32fast::hash(&f);
        f.extend_from_slice(&crc.to_le_bytes());
        assert!(matches!(decode_frame(&f), Err(FrameError::Malformed(_))));
    }

    #[test]
    fn stream_reading_and_clean_eof() {
        let mut buf = encode_frame(&hello()).unwrap();
        buf.extend(encode_frame(&MessageBody::PacketMeta { packet_id: 1, pulse_count: 10 }).unwrap());
        let mut cursor = &buf[..];
        assert_eq!(read_frame(&mut cursor).unwrap(), Some(hello()));
        assert!(matches!(read_frame(&mut cursor).unwrap(), Some(MessageBody::PacketMeta { packet_id: 1, .. })));
        assert_eq!(read_frame(&mut cursor).unwrap(), None);
    }
}
