//! Device-to-cloud frame layout. All integers and floats are little-endian.
//!
//! ```text
//! offset  size  field
//!      0     4  magic "AQWM"
//!      4     1  version (1)
//!      5     4  device_id      u32
//!      9     8  window_index   u64
//!     17     2  n              u16
//!     19     2  n_s            u16
//!     21     4  f_s_millihz    u32
//!     25  8*n*n_s payload      f64
//! ```

use thiserror::Error;

use crate::error::{Error, Result};
use crate::signal::SignalFrame;
use crate::sswm::WatermarkParams;

pub const MAGIC: [u8; 4] = *b"AQWM";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 25;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("short header: {got} bytes, need {HEADER_LEN}")]
    ShortHeader { got: usize },
    #[error("bad magic: {found:?}")]
    BadMagic { found: [u8; 4] },
    #[error("unsupported version: {found}")]
    UnsupportedVersion { found: u8 },
    #[error("length mismatch: header implies {expected} bytes, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("invalid header field {field}: {reason}")]
    InvalidField { field: &'static str, reason: String },
}

/// Header fields echoed back by [`decode_frame`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameHeader {
    pub device_id: u32,
    pub window_index: u64,
    pub n: u16,
    pub n_s: u16,
    pub f_s_millihz: u32,
}

impl FrameHeader {
    pub fn sample_rate_hz(&self) -> f64 {
        f64::from(self.f_s_millihz) / 1000.0
    }

    pub fn payload_len(&self) -> usize {
        usize::from(self.n) * usize::from(self.n_s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodedFrame {
    pub frame: SignalFrame,
    pub header: FrameHeader,
}

pub fn millihz(sample_rate_hz: f64) -> Result<u32> {
    let m = (sample_rate_hz * 1000.0).round();
    if !(m >= 1.0 && m <= f64::from(u32::MAX)) {
        return Err(Error::invalid(format!(
            "sample rate {sample_rate_hz} Hz does not fit the millihertz header field"
        )));
    }
    Ok(m as u32)
}

pub fn encode_frame(
    frame: &SignalFrame,
    device_id: u32,
    window_index: u64,
    params: &WatermarkParams,
) -> Result<Vec<u8>> {
    params.validate()?;
    if frame.len() != params.window_len() {
        return Err(Error::shape(format!(
            "frame has {} samples, expected n * n_s = {}",
            frame.len(),
            params.window_len()
        )));
    }
    let n = u16::try_from(params.n).map_err(|_| Error::invalid("n exceeds u16"))?;
    let n_s = u16::try_from(params.n_s).map_err(|_| Error::invalid("n_s exceeds u16"))?;
    let fs = millihz(params.sample_rate_hz)?;

    let mut out = Vec::with_capacity(HEADER_LEN + 8 * frame.len());
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&device_id.to_le_bytes());
    out.extend_from_slice(&window_index.to_le_bytes());
    out.extend_from_slice(&n.to_le_bytes());
    out.extend_from_slice(&n_s.to_le_bytes());
    out.extend_from_slice(&fs.to_le_bytes());
    for x in frame.samples() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_frame(bytes: &[u8]) -> Result<DecodedFrame, CodecError> {
    if bytes.len() < HEADER_LEN {
        return Err(CodecError::ShortHeader { got: bytes.len() });
    }
    let magic: [u8; 4] = bytes[0..4].try_into().expect("4 bytes");
    if magic != MAGIC {
        return Err(CodecError::BadMagic { found: magic });
    }
    if bytes[4] != VERSION {
        return Err(CodecError::UnsupportedVersion { found: bytes[4] });
    }
    let header = FrameHeader {
        device_id: u32::from_le_bytes(bytes[5..9].try_into().expect("4 bytes")),
        window_index: u64::from_le_bytes(bytes[9..17].try_into().expect("8 bytes")),
        n: u16::from_le_bytes(bytes[17..19].try_into().expect("2 bytes")),
        n_s: u16::from_le_bytes(bytes[19..21].try_into().expect("2 bytes")),
        f_s_millihz: u32::from_le_bytes(bytes[21..25].try_into().expect("4 bytes")),
    };
    let expected = HEADER_LEN + 8 * header.payload_len();
    if bytes.len() != expected {
        return Err(CodecError::LengthMismatch {
            expected,
            got: bytes.len(),
        });
    }
    if header.payload_len() == 0 {
        return Err(CodecError::InvalidField {
            field: "n",
            reason: "empty payload".into(),
        });
    }
    if header.f_s_millihz == 0 {
        return Err(CodecError::InvalidField {
            field: "f_s_millihz",
            reason: "must be positive".into(),
        });
    }
    let samples: Vec<f64> = bytes[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let frame = SignalFrame::new(samples, header.sample_rate_hz()).map_err(|e| {
        CodecError::InvalidField {
            field: "payload",
            reason: e.to_string(),
        }
    })?;
    Ok(DecodedFrame { frame, header })
}
