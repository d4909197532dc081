//! KTP1 parameter container.
//!
//! Layout: `b"KTP1"`, u32 LE length of a JSON manifest, the manifest, then
//! every tensor's f64 LE payload concatenated in manifest order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::{NetArch, NetworkParams};
use crate::error::{Error, Result};

pub const KTP_MAGIC: &[u8; 4] = b"KTP1";

#[derive(Clone, Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
    dtype: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Manifest {
    arch: NetArch,
    tensors: Vec<TensorEntry>,
}

pub fn encode_params(params: &NetworkParams) -> Result<Vec<u8>> {
    let mut tensors = Vec::new();
    let mut payload = Vec::new();
    for (name, shape, data) in params.named_tensors() {
        tensors.push(TensorEntry { name, shape, offset: payload.len(), dtype: "f64".into() });
        for v in data {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }
    let header = serde_json::to_vec(&Manifest { arch: params.arch.clone(), tensors })?;
    let mut out = Vec::with_capacity(8 + header.len() + payload.len());
    out.extend_from_slice(KTP_MAGIC);
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&payload);
    Ok(out)
}

pub fn decode_params(bytes: &[u8]) -> Result<NetworkParams> {
    if bytes.len() < 4 || &bytes[..4] != KTP_MAGIC {
        let found = bytes.iter().take(4).map(|b| format!("{b:02x}")).collect::<String>();
        return Err(Error::BadMagic { expected: "KTP1".into(), found });
    }
    if bytes.len() < 8 {
        return Err(Error::Truncated { expected: 8, found: bytes.len() as u64 });
    }
    let hlen = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    if bytes.len() < 8 + hlen {
        return Err(Error::Truncated { expected: (8 + hlen) as u64, found: bytes.len() as u64 });
    }
    let manifest: Manifest = serde_json::from_slice(&bytes[8..8 + hlen])?;
    let payload = &bytes[8 + hlen..];
    let mut params = NetworkParams::init(manifest.arch.clone(), manifest.arch.seed)?;
    let expected: Vec<(String, Vec<usize>)> = params.named_tensors().into_iter().map(|(n, s, _)| (n, s)).collect();
    if expected.len() != manifest.tensors.len() {
        return Err(Error::Malformed(format!(
            "manifest lists {} tensors, architecture needs {}",
            manifest.tensors.len(),
            expected.len()
        )));
    }
    let mut total = 0;
    for ((name, shape), (entry, slot)) in expected.iter().zip(manifest.tensors.iter().zip(params.tensors_mut())) {
        if &entry.name != name || &entry.shape != shape || entry.dtype != "f64" {
            return Err(Error::Malformed(format!("tensor {} does not match expected {name} {shape:?}", entry.name)));
        }
        let end = entry.offset + 8 * slot.len();
        if end > payload.len() {
            return Err(Error::Truncated { expected: (8 + hlen + end) as u64, found: bytes.len() as u64 });
        }
        for (i, v) in slot.iter_mut().enumerate() {
            let o = entry.offset + 8 * i;
            *v = f64::from_le_bytes(payload[o..o + 8].try_into().unwrap());
        }
        total += 8 * slot.len();
    }
    if total != payload.len() {
        return Err(Error::Malformed(format!("{} trailing payload bytes", payload.len() - total)));
    }
    Ok(params)
}

pub fn save_params(path: impl AsRef<Path>, params: &NetworkParams) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_params(params)?).map_err(|e| Error::io(path, e))
}

pub fn load_params(path: impl AsRef<Path>) -> Result<NetworkParams> {
    let path = path.as_ref();
    decode_params(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}
