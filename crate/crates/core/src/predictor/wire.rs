//! Binary frames for remote noise prediction.
//!
//! ```text
//! request  = "FCRE" | version u16 | t u32 | batch u32 | channels u32 | height u32 | width u32 | payload
//! response = "FCRE" | version u16 | status u16 | batch u32 | channels u32 | height u32 | width u32 | payload
//! ```
//!
//! All integers are little-endian. The payload is `batch * channels * height * width`
//! little-endian `f32` values, channel-major then row-major within each image.
//! A response with a non-zero status carries zero dimensions and no payload.

use std::io::{self, Read, Write};

use thiserror::Error;

use crate::image::{ImageTensor, Shape};

pub const MAGIC: [u8; 4] = *b"FCRE";
pub const VERSION: u16 = 1;

/// Upper bound on payload values accepted from the wire (1 GiB of `f32`).
pub const MAX_PAYLOAD_VALUES: usize = 1 << 28;

pub const STATUS_OK: u16 = 0;
pub const STATUS_MALFORMED: u16 = 1;
pub const STATUS_UNSUPPORTED_VERSION: u16 = 2;
pub const STATUS_PREDICTOR_FAILURE: u16 = 3;

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("bad magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported protocol version {0}")]
    UnsupportedVersion(u16),
    #[error("frame truncated")]
    Truncated,
    #[error("frame declares {0} payload values, above the limit")]
    PayloadTooLarge(usize),
    #[error("request timed out")]
    Timeout,
    #[error("remote returned status {0}")]
    RemoteStatus(u16),
    #[error("response shape {actual} does not match request shape {expected}")]
    ShapeMismatch { expected: String, actual: String },
    #[error("non-finite value in response payload at index {0}")]
    NonFinite(usize),
    #[error("transport error: {0}")]
    Io(io::Error),
}

impl From<io::Error> for ProtocolError {
    fn from(e: io::Error) -> Self {
        match e.kind() {
            io::ErrorKind::UnexpectedEof => ProtocolError::Truncated,
            io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut => ProtocolError::Timeout,
            _ => ProtocolError::Io(e),
        }
    }
}

/// Dimensions shared by both frame kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchShape {
    pub batch: u32,
    pub channels: u32,
    pub height: u32,
    pub width: u32,
}

impl BatchShape {
    pub fn values(&self) -> usize {
        self.batch as usize * self.channels as usize * self.height as usize * self.width as usize
    }

    fn image_shape(&self) -> Shape {
        Shape::new(self.height as usize, self.width as usize, self.channels as usize)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RequestFrame {
    pub version: u16,
    pub t: u32,
    pub dims: BatchShape,
    pub payload: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResponseFrame {
    pub version: u16,
    pub status: u16,
    pub dims: BatchShape,
    pub payload: Vec<f32>,
}

impl RequestFrame {
    /// Packs a uniformly shaped batch. Returns `None` for an empty or ragged batch.
    pub fn from_batch(t: usize, batch: &[ImageTensor]) -> Option<Self> {
        let shape = batch.first()?.shape();
        if batch.iter().any(|x| x.shape() != shape) {
            return None;
        }
        let dims = BatchShape {
            batch: u32::try_from(batch.len()).ok()?,
            channels: u32::try_from(shape.channels).ok()?,
            height: u32::try_from(shape.height).ok()?,
            width: u32::try_from(shape.width).ok()?,
        };
        let payload = batch
            .iter()
            .flat_map(|x| x.as_slice().iter().map(|&v| v as f32))
            .collect();
        Some(Self {
            version: VERSION,
            t: u32::try_from(t).ok()?,
            dims,
            payload,
        })
    }

    /// Unpacks the payload into images; fails on non-finite values.
    pub fn to_batch(&self) -> Result<Vec<ImageTensor>, ProtocolError> {
        unpack(&self.dims, &self.payload)
    }

    pub fn write_to(&self, w: &mut impl Write) -> io::Result<()> {
        let mut buf = Vec::with_capacity(26 + 4 * self.payload.len());
        buf.extend_from_slice(&MAGIC);
        buf.extend_from_slice(&self.version.to_le_bytes());
        buf.extend_from_slice(&self.t.to_le_bytes());
        put_dims(&mut buf, &self.dims);
        put_payload(&mut buf, &self.payload);
        w.write_all(&buf)?;
        w.flush()
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self, ProtocolError> {
        let version = read_preamble(r)?;
        let t = read_u32(r)?;
        let dims = read_dims(r)?;
        let payload = read_payload(r, &dims)?;
        Ok(Self {
            version,
            t,
            dims,
            payload,
        })
    }
}

impl ResponseFrame {
    pub fn ok(dims: BatchShape, payload: Vec<f32>) -> Self {
        Self {
            version: VERSION,
            status: STATUS_OK,
            dims,
            payload,
        }
    }

    pub fn error(status: u16) -> Self {
        Self {
            version: VERSION,
            status,
            dims: BatchShape {
                batch: 0,
                channels: 0,
                height: 0,
                width: 0,
            },
            payload: Vec::new(),
        }
    }

    pub fn from_batch(batch: &[ImageTensor]) -> Option<Self> {
        RequestFrame::from_batch(0, batch).map(|f| Self::ok(f.dims, f.payload))
    }

    pub fn to_batch(&self) -> Result<Vec<ImageTensor>, ProtocolError> {
        unpack(&self.dims, &self.payload)
    }

    pub fn write_to(&self, w: &mut impl Write) -> io::Result<()> {
        let mut buf = Vec::with_capacity(24 + 4 * self.payload.len());
        buf.extend_from_slice(&MAGIC);
        buf.extend_from_slice(&self.version.to_le_bytes());
        buf.extend_from_slice(&self.status.to_le_bytes());
        put_dims(&mut buf, &self.dims);
        put_payload(&mut buf, &self.payload);
        w.write_all(&buf)?;
        w.flush()
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self, ProtocolError> {
        let version = read_preamble(r)?;
        let status = read_u16(r)?;
        let dims = read_dims(r)?;
        let payload = read_payload(r, &dims)?;
        Ok(Self {
            version,
            status,
            dims,
            payload,
        })
    }
}

fn unpack(dims: &BatchShape, payload: &[f32]) -> Result<Vec<ImageTensor>, ProtocolError> {
    if let Some(i) = payload.iter().position(|v| !v.is_finite()) {
        return Err(ProtocolError::NonFinite(i));
    }
    let shape = dims.image_shape();
    if dims.batch == 0 {
        return Ok(Vec::new());
    }
    let n = shape.len();
    payload
        .chunks(n.max(1))
        .map(|chunk| {
            ImageTensor::new(shape, chunk.iter().map(|&v| f64::from(v)).collect()).map_err(|_| {
                ProtocolError::ShapeMismatch {
                    expected: shape.to_string(),
                    actual: format!("{} values", chunk.len()),
                }
            })
        })
        .collect()
}

fn put_dims(buf: &mut Vec<u8>, d: &BatchShape) {
    for v in [d.batch, d.channels, d.height, d.width] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

fn put_payload(buf: &mut Vec<u8>, payload: &[f32]) {
    for v in payload {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

fn read_preamble(r: &mut impl Read) -> Result<u16, ProtocolError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if magic != MAGIC {
        return Err(ProtocolError::BadMagic(magic));
    }
    let version = read_u16(r)?;
    if version != VERSION {
        return Err(ProtocolError::UnsupportedVersion(version));
    }
    Ok(version)
}

fn read_u16(r: &mut impl Read) -> Result<u16, ProtocolError> {
    let mut b = [0u8; 2];
    r.read_exact(&mut b)?;
    Ok(u16::from_le_bytes(b))
}

fn read_u32(r: &mut impl Read) -> Result<u32, ProtocolError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_dims(r: &mut impl Read) -> Result<BatchShape, ProtocolError> {
    Ok(BatchShape {
        batch: read_u32(r)?,
        channels: read_u32(r)?,
        height: read_u32(r)?,
        width: read_u32(r)?,
    })
}

fn read_payload(r: &mut impl Read, dims: &BatchShape) -> Result<Vec<f32>, ProtocolError> {
    let n = [dims.channels, dims.height, dims.width]
        .iter()
        .try_fold(dims.batch as usize, |acc, &d| acc.checked_mul(d as usize))
        .filter(|&n| n <= MAX_PAYLOAD_VALUES)
        .ok_or(ProtocolError::PayloadTooLarge(usize::MAX))?;
    let mut bytes = vec![0u8; n * 4];
    r.read_exact(&mut bytes)?;
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}
