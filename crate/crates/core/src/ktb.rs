//! KTB tensor files.
//!
//! Layout (all integers little-endian):
//!
//! | bytes      | field                                              |
//! |------------|----------------------------------------------------|
//! | 4          | magic `KTB1`                                       |
//! | 2          | version, `u16` = 1                                 |
//! | 1          | dtype: 0 = complex128, 1 = complex64, 2 = bool byte |
//! | 1          | ndim, `u8`                                         |
//! | 8 × ndim   | extents, `u64`                                     |
//! | ndim       | axis-label codes                                   |
//! | payload    | row-major values; complex as (re, im) pairs        |

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{AxisLabel, BoolTensor, ComplexTensor, C64};

pub const MAGIC: &[u8; 4] = b"KTB1";
pub const VERSION: u16 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dtype {
    Complex128,
    Complex64,
    Bool,
}

impl Dtype {
    pub fn code(self) -> u8 {
        match self {
            Dtype::Complex128 => 0,
            Dtype::Complex64 => 1,
            Dtype::Bool => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Dtype::Complex128),
            1 => Some(Dtype::Complex64),
            2 => Some(Dtype::Bool),
            _ => None,
        }
    }

    pub fn element_size(self) -> usize {
        match self {
            Dtype::Complex128 => 16,
            Dtype::Complex64 => 8,
            Dtype::Bool => 1,
        }
    }
}

/// What a KTB file held.
#[derive(Clone, Debug, PartialEq)]
pub enum StoredTensor {
    /// Complex payload widened to complex128; `dtype` records the on-disk width.
    Complex { tensor: ComplexTensor, dtype: Dtype },
    Bool(BoolTensor),
}

impl StoredTensor {
    pub fn into_complex(self) -> Result<ComplexTensor> {
        match self {
            StoredTensor::Complex { tensor, .. } => Ok(tensor),
            StoredTensor::Bool(_) => Err(Error::Malformed("expected a complex tensor, found boolean".into())),
        }
    }

    pub fn into_bool(self) -> Result<BoolTensor> {
        match self {
            StoredTensor::Bool(t) => Ok(t),
            StoredTensor::Complex { .. } => Err(Error::Malformed("expected a boolean tensor, found complex".into())),
        }
    }
}

fn header(dtype: Dtype, extents: &[usize], labels: &[AxisLabel]) -> Result<Vec<u8>> {
    let ndim = u8::try_from(extents.len()).map_err(|_| Error::Shape("more than 255 axes".into()))?;
    let mut out = Vec::with_capacity(8 + 9 * extents.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(dtype.code());
    out.push(ndim);
    for &e in extents {
        out.extend_from_slice(&(e as u64).to_le_bytes());
    }
    out.extend(labels.iter().map(|l| l.code()));
    Ok(out)
}

/// Encodes a complex tensor at the given precision.
pub fn encode_complex(t: &ComplexTensor, dtype: Dtype) -> Result<Vec<u8>> {
    let mut out = header(dtype, t.extents(), t.labels())?;
    out.reserve(t.len() * dtype.element_size());
    for (i, z) in t.data().iter().enumerate() {
        if !(z.re.is_finite() && z.im.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        match dtype {
            Dtype::Complex128 => {
                out.extend_from_slice(&z.re.to_le_bytes());
                out.extend_from_slice(&z.im.to_le_bytes());
            }
            Dtype::Complex64 => {
                out.extend_from_slice(&(z.re as f32).to_le_bytes());
                out.extend_from_slice(&(z.im as f32).to_le_bytes());
            }
            Dtype::Bool => return Err(Error::Malformed("complex tensor cannot be stored as bool".into())),
        }
    }
    Ok(out)
}

pub fn encode_bool(t: &BoolTensor) -> Result<Vec<u8>> {
    let mut out = header(Dtype::Bool, t.extents(), t.labels())?;
    out.extend(t.data().iter().map(|&b| b as u8));
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<StoredTensor> {
    let fixed = 8;
    if bytes.len() < 4 {
        return Err(Error::Truncated { expected: fixed as u64, found: bytes.len() as u64 });
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::BadMagic {
            expected: String::from_utf8_lossy(MAGIC).into_owned(),
            found: String::from_utf8_lossy(&bytes[..4]).into_owned(),
        });
    }
    if bytes.len() < fixed {
        return Err(Error::Truncated { expected: fixed as u64, found: bytes.len() as u64 });
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(Error::VersionMismatch { expected: VERSION, found: version });
    }
    let dtype = Dtype::from_code(bytes[6]).ok_or_else(|| Error::Malformed(format!("unknown dtype code {}", bytes[6])))?;
    let ndim = bytes[7] as usize;
    let header_len = fixed + 9 * ndim;
    if bytes.len() < header_len {
        return Err(Error::Truncated { expected: header_len as u64, found: bytes.len() as u64 });
    }
    let mut extents = Vec::with_capacity(ndim);
    for i in 0..ndim {
        let off = fixed + 8 * i;
        let e = u64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
        extents.push(usize::try_from(e).map_err(|_| Error::Malformed(format!("extent {e} too large")))?);
    }
    let labels = bytes[fixed + 8 * ndim..header_len]
        .iter()
        .map(|&c| AxisLabel::from_code(c).ok_or_else(|| Error::Malformed(format!("unknown axis code {c}"))))
        .collect::<Result<Vec<_>>>()?;
    let count = extents
        .iter()
        .try_fold(1usize, |acc, &e| acc.checked_mul(e))
        .ok_or_else(|| Error::Malformed("element count overflows".into()))?;
    let payload_len = count as u64 * dtype.element_size() as u64;
    let expected = header_len as u64 + payload_len;
    let found = bytes.len() as u64;
    if found < expected {
        return Err(Error::Truncated { expected, found });
    }
    if found > expected {
        return Err(Error::Malformed(format!("{} trailing bytes after payload", found - expected)));
    }
    let payload = &bytes[header_len..];
    match dtype {
        Dtype::Complex128 => {
            let data = payload
                .chunks_exact(16)
                .map(|c| {
                    C64::new(
                        f64::from_le_bytes(c[..8].try_into().unwrap()),
                        f64::from_le_bytes(c[8..].try_into().unwrap()),
                    )
                })
                .collect();
            Ok(StoredTensor::Complex { tensor: ComplexTensor::new(extents, labels, data)?, dtype })
        }
        Dtype::Complex64 => {
            let data = payload
                .chunks_exact(8)
                .map(|c| {
                    C64::new(
                        f32::from_le_bytes(c[..4].try_into().unwrap()) as f64,
                        f32::from_le_bytes(c[4..].try_into().unwrap()) as f64,
                    )
                })
                .collect();
            Ok(StoredTensor::Complex { tensor: ComplexTensor::new(extents, labels, data)?, dtype })
        }
        Dtype::Bool => {
            let data = payload
                .iter()
                .map(|&b| match b {
                    0 => Ok(false),
                    1 => Ok(true),
                    other => Err(Error::Malformed(format!("boolean byte {other}"))),
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(StoredTensor::Bool(BoolTensor::new(extents, labels, data)?))
        }
    }
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes a complex128 KTB file.
pub fn save_tensor(t: &ComplexTensor, path: impl AsRef<Path>) -> Result<()> {
    write(path.as_ref(), &encode_complex(t, Dtype::Complex128)?)
}

/// Writes a complex64 KTB file (values rounded to f32).
pub fn save_tensor_c64(t: &ComplexTensor, path: impl AsRef<Path>) -> Result<()> {
    write(path.as_ref(), &encode_complex(t, Dtype::Complex64)?)
}

pub fn save_bool(t: &BoolTensor, path: impl AsRef<Path>) -> Result<()> {
    write(path.as_ref(), &encode_bool(t)?)
}

pub fn load_tensor(path: impl AsRef<Path>) -> Result<StoredTensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

pub fn load_complex(path: impl AsRef<Path>) -> Result<ComplexTensor> {
    load_tensor(path)?.into_complex()
}

pub fn load_bool(path: impl AsRef<Path>) -> Result<BoolTensor> {
    load_tensor(path)?.into_bool()
}
