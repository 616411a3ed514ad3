//! The `.fcnt` tensor format: `"FCNT"`, a version byte, the order `N`, `N`
//! little-endian `u64` dims, then the row-major values as little-endian `f64`.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::DenseTensor;

pub const TENSOR_MAGIC: &[u8; 4] = b"FCNT";
pub const TENSOR_VERSION: u8 = 0x01;

pub fn encode_tensor(t: &DenseTensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(6 + 8 * (t.order() + t.len()));
    out.extend_from_slice(TENSOR_MAGIC);
    out.push(TENSOR_VERSION);
    out.push(t.order() as u8);
    for &d in t.dims() {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for v in t.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_tensor(bytes: &[u8]) -> Result<DenseTensor> {
    if bytes.len() < 6 {
        return Err(Error::Format(format!("{} bytes is too short for a tensor header", bytes.len())));
    }
    if &bytes[..4] != TENSOR_MAGIC {
        return Err(Error::Format(format!("bad magic {:?}", String::from_utf8_lossy(&bytes[..4]))));
    }
    if bytes[4] != TENSOR_VERSION {
        return Err(Error::Format(format!("unsupported tensor file version {}", bytes[4])));
    }
    let order = bytes[5] as usize;
    let header = 6 + 8 * order;
    if bytes.len() < header {
        return Err(Error::Format(format!(
            "header declares order {order} but the file ends after {} bytes",
            bytes.len()
        )));
    }
    let mut dims = Vec::with_capacity(order);
    let mut count: usize = 1;
    for chunk in bytes[6..header].chunks_exact(8) {
        let d = u64::from_le_bytes(chunk.try_into().expect("8-byte chunk"));
        let d = usize::try_from(d).map_err(|_| Error::Format(format!("dimension {d} too large")))?;
        count = count
            .checked_mul(d)
            .ok_or_else(|| Error::Format("dimension product overflows".into()))?;
        dims.push(d);
    }
    let expected = count
        .checked_mul(8)
        .and_then(|n| n.checked_add(header))
        .ok_or_else(|| Error::Format("payload length overflows".into()))?;
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "dims {dims:?} need {expected} bytes, file has {}",
            bytes.len()
        )));
    }
    let data = bytes[header..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    DenseTensor::new(dims, data).map_err(|e| Error::Format(e.to_string()))
}

pub fn write_tensor(path: impl AsRef<Path>, t: &DenseTensor) -> Result<()> {
    fs::write(path, encode_tensor(t))?;
    Ok(())
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<DenseTensor> {
    decode_tensor(&fs::read(path)?)
}
