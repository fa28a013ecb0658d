//! `LDT1` binary tensor container.
//!
//! Layout, all little-endian:
//!
//! ```text
//! magic  4 bytes  "LDT1"
//! dtype  1 byte   0 = f32, 1 = f64
//! rank   u32
//! dims   rank × u64
//! data   row-major scalars, product(dims) × dtype-size bytes
//! ```
//!
//! Loading validates the declared size against the actual payload *before*
//! allocating tensor storage, so malformed headers cannot trigger huge
//! allocations. Save followed by load is a bitwise identity.

use crate::error::{Error, Result};
use crate::tensor::{DenseTensor, Dtype, Scalar};
use std::path::Path;

const MAGIC: &[u8; 4] = b"LDT1";

/// Serialize a tensor to the `LDT1` byte layout.
pub fn encode<S: Scalar>(tensor: &DenseTensor<S>) -> Vec<u8> {
    let header = 4 + 1 + 4 + 8 * tensor.rank();
    let mut out = Vec::with_capacity(header + tensor.numel() * S::DTYPE.size());
    out.extend_from_slice(MAGIC);
    out.push(S::DTYPE.code());
    out.extend_from_slice(&(tensor.rank() as u32).to_le_bytes());
    for &d in tensor.shape() {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for &v in tensor.data() {
        v.write_le(&mut out);
    }
    out
}

/// Parsed header: dtype and shape, plus the payload offset.
struct Header {
    dtype: Dtype,
    shape: Vec<usize>,
    payload_at: usize,
}

/// Validate everything about the header against the byte length on hand.
fn decode_header(bytes: &[u8], path: &Path) -> Result<Header> {
    if bytes.len() < 9 {
        return Err(Error::format(path, format!("file too short for a header: {} bytes", bytes.len())));
    }
    if &bytes[0..4] != MAGIC {
        return Err(Error::format(
            path,
            format!("bad magic {:?}, expected \"LDT1\"", String::from_utf8_lossy(&bytes[0..4])),
        ));
    }
    let dtype = Dtype::from_code(bytes[4])
        .ok_or_else(|| Error::format(path, format!("unknown dtype code {}", bytes[4])))?;
    let rank = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
    let dims_bytes = rank
        .checked_mul(8)
        .ok_or_else(|| Error::format(path, format!("rank {rank} overflows the dims section")))?;
    if bytes.len() < 9 + dims_bytes {
        return Err(Error::format(
            path,
            format!("dims section truncated: rank {rank} needs {dims_bytes} bytes"),
        ));
    }
    let mut shape = Vec::with_capacity(rank);
    let mut numel: u128 = 1;
    for i in 0..rank {
        let off = 9 + i * 8;
        let d = u64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
        if d == 0 {
            return Err(Error::format(path, format!("dims[{i}] is zero")));
        }
        numel = numel.saturating_mul(u128::from(d));
        shape.push(usize::try_from(d).map_err(|_| {
            Error::format(path, format!("dims[{i}] = {d} exceeds the address space"))
        })?);
    }
    // Size check happens on the declared numbers before any data allocation.
    let declared = numel.saturating_mul(dtype.size() as u128);
    let actual = (bytes.len() - 9 - dims_bytes) as u128;
    if declared != actual {
        return Err(Error::format(
            path,
            format!("payload size mismatch: dims {shape:?} declare {declared} bytes, file holds {actual}"),
        ));
    }
    Ok(Header { dtype, shape, payload_at: 9 + dims_bytes })
}

/// Deserialize from the `LDT1` byte layout; the file's dtype must equal `S`.
pub fn decode<S: Scalar>(bytes: &[u8], path: &Path) -> Result<DenseTensor<S>> {
    let header = decode_header(bytes, path)?;
    if header.dtype != S::DTYPE {
        return Err(Error::format(
            path,
            format!("dtype mismatch: file holds {:?}, caller expects {:?}", header.dtype, S::DTYPE),
        ));
    }
    let size = S::DTYPE.size();
    let data = bytes[header.payload_at..]
        .chunks_exact(size)
        .map(S::read_le)
        .collect();
    DenseTensor::from_vec(header.shape, data)
}

/// Deserialize either dtype, widening f32 payloads to f64.
pub fn decode_as_f64(bytes: &[u8], path: &Path) -> Result<DenseTensor<f64>> {
    let header = decode_header(bytes, path)?;
    match header.dtype {
        Dtype::F64 => decode::<f64>(bytes, path),
        Dtype::F32 => Ok(decode::<f32>(bytes, path)?.cast()),
    }
}

/// Write a tensor file.
pub fn save<S: Scalar>(path: impl AsRef<Path>, tensor: &DenseTensor<S>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode(tensor)).map_err(|e| Error::io(path, e))
}

/// Read a tensor file whose dtype matches `S` exactly.
pub fn load<S: Scalar>(path: impl AsRef<Path>) -> Result<DenseTensor<S>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}

/// Read a tensor file of either dtype as f64.
pub fn load_as_f64(path: impl AsRef<Path>) -> Result<DenseTensor<f64>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_as_f64(&bytes, path)
}
