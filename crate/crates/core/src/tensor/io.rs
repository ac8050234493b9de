//! Raw tensor files.
//!
//! Layout: magic `PCDT`, one byte dtype code, one byte rank, `rank`
//! little-endian u64 dimensions, then the elements as little-endian floats
//! in row-major order.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::{DType, Element, Tensor};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"PCDT";

fn ser(msg: impl Into<String>) -> Error {
    Error::Serialization(msg.into())
}

pub fn encode<T: Element>(t: &Tensor<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(6 + 8 * t.rank() + t.numel() * T::DTYPE.size());
    out.extend_from_slice(MAGIC);
    out.push(T::DTYPE.code());
    out.push(t.rank() as u8);
    for &d in t.shape() {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for &x in t.data() {
        x.write_le(&mut out);
    }
    out
}

pub fn write<T: Element>(w: &mut impl Write, t: &Tensor<T>) -> Result<()> {
    w.write_all(&encode(t))?;
    Ok(())
}

pub fn read<T: Element>(r: &mut impl Read) -> Result<Tensor<T>> {
    let mut head = [0u8; 6];
    r.read_exact(&mut head)
        .map_err(|e| ser(format!("truncated tensor header: {e}")))?;
    if &head[..4] != MAGIC {
        return Err(ser(format!("bad tensor magic {:?}", &head[..4])));
    }
    let dtype = DType::from_code(head[4]).ok_or_else(|| ser(format!("unknown dtype code {}", head[4])))?;
    if dtype != T::DTYPE {
        return Err(ser(format!("tensor holds {:?}, expected {:?}", dtype, T::DTYPE)));
    }
    let rank = head[5] as usize;
    let mut shape = Vec::with_capacity(rank);
    let mut buf = [0u8; 8];
    for _ in 0..rank {
        r.read_exact(&mut buf)
            .map_err(|e| ser(format!("truncated tensor dims: {e}")))?;
        shape.push(usize::try_from(u64::from_le_bytes(buf)).map_err(|_| ser("dimension overflow"))?);
    }
    let numel = shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| ser("element count overflow"))?;
    let size = dtype.size();
    let mut raw = vec![0u8; numel.checked_mul(size).ok_or_else(|| ser("size overflow"))?];
    r.read_exact(&mut raw)
        .map_err(|e| ser(format!("truncated tensor data: {e}")))?;
    let data = raw.chunks_exact(size).map(T::read_le).collect();
    Tensor::new(shape, data)
}

pub fn decode<T: Element>(mut bytes: &[u8]) -> Result<Tensor<T>> {
    let t = read(&mut bytes)?;
    if !bytes.is_empty() {
        return Err(ser(format!("{} trailing bytes after tensor", bytes.len())));
    }
    Ok(t)
}

/// Writes `bytes` to a sibling temp file, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| ser(format!("not a file path: {}", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", file_name.to_string_lossy()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn save<T: Element>(path: &Path, t: &Tensor<T>) -> Result<()> {
    write_atomic(path, &encode(t))
}

pub fn load<T: Element>(path: &Path) -> Result<Tensor<T>> {
    decode(&fs::read(path)?)
}
