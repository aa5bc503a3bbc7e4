//! Binary container for named `f32` tensors.
//!
//! Layout: 8-byte magic, little-endian `u64` manifest length, the manifest as
//! UTF-8 JSON, then every tensor's values as concatenated little-endian `f32`.
//! The manifest lists each tensor's name, shape and byte offset into the blob
//! section, plus a free-form `meta` object owned by the caller.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"TLMODEL\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: u64,
    pub len: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub tensors: Vec<TensorEntry>,
    pub meta: serde_json::Value,
}

pub fn write<W: Write>(
    mut out: W,
    meta: serde_json::Value,
    tensors: &[(String, &Tensor)],
) -> Result<()> {
    let mut entries = Vec::with_capacity(tensors.len());
    let mut offset = 0u64;
    for (name, t) in tensors {
        let len = (t.len() * 4) as u64;
        entries.push(TensorEntry {
            name: name.clone(),
            shape: t.shape().to_vec(),
            offset,
            len,
        });
        offset += len;
    }
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        tensors: entries,
        meta,
    };
    let json = serde_json::to_vec(&manifest).map_err(|e| Error::Format(e.to_string()))?;
    let io = |e| Error::io("<checkpoint>", e);
    out.write_all(MAGIC).map_err(io)?;
    out.write_all(&(json.len() as u64).to_le_bytes()).map_err(io)?;
    out.write_all(&json).map_err(io)?;
    let mut buf = Vec::with_capacity(offset as usize);
    for (_, t) in tensors {
        for v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    out.write_all(&buf).map_err(io)?;
    Ok(())
}

pub fn read<R: Read>(mut input: R) -> Result<(serde_json::Value, Vec<(String, Tensor)>)> {
    let io = |e| Error::io("<checkpoint>", e);
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic).map_err(io)?;
    if &magic != MAGIC {
        return Err(Error::Format("not a model checkpoint".into()));
    }
    let mut len = [0u8; 8];
    input.read_exact(&mut len).map_err(io)?;
    let mut json = vec![0u8; u64::from_le_bytes(len) as usize];
    input.read_exact(&mut json).map_err(io)?;
    let manifest: Manifest =
        serde_json::from_slice(&json).map_err(|e| Error::Format(e.to_string()))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint version {}",
            manifest.format_version
        )));
    }
    let mut blob = Vec::new();
    input.read_to_end(&mut blob).map_err(io)?;
    let mut tensors = Vec::with_capacity(manifest.tensors.len());
    for e in manifest.tensors {
        let (start, end) = (e.offset as usize, (e.offset + e.len) as usize);
        let bytes = blob
            .get(start..end)
            .ok_or_else(|| Error::Format(format!("tensor `{}` truncated", e.name)))?;
        let data = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        tensors.push((e.name, Tensor::new(e.shape, data)?));
    }
    Ok((manifest.meta, tensors))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_tensors_and_meta() {
        let a = Tensor::matrix(2, 2, vec![1.0, -2.5, 3.25, f32::MIN_POSITIVE]).unwrap();
        let b = Tensor::row_vector(vec![0.1; 3]);
        let mut buf = Vec::new();
        write(
            &mut buf,
            serde_json::json!({"k": 1}),
            &[("a".into(), &a), ("b".into(), &b)],
        )
        .unwrap();
        let (meta, ts) = read(&buf[..]).unwrap();
        assert_eq!(meta["k"], 1);
        assert_eq!(ts[0], ("a".to_string(), a));
        assert_eq!(ts[1], ("b".to_string(), b));
    }

    #[test]
    fn rejects_foreign_bytes() {
        assert!(matches!(read(&b"NOTAMODELxxxxxxxx"[..]), Err(Error::Format(_))));
    }
}
