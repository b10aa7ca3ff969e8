//! Parameter checkpoint container.
//!
//! Layout: the 8-byte magic `KGDCKPT1`, a little-endian `u64` manifest
//! length, the UTF-8 JSON manifest, then every parameter's values as
//! little-endian `f64` concatenated in manifest order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::param::ParamStore;
use super::tensor::Tensor;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"KGDCKPT1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Offset into the payload, in `f64` elements.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: u32,
    pub params: Vec<ManifestEntry>,
    /// Caller-defined metadata stored alongside the parameters.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<serde_json::Value>,
}

pub fn to_bytes(store: &ParamStore) -> Result<Vec<u8>> {
    to_bytes_with_meta(store, None)
}

pub fn to_bytes_with_meta(store: &ParamStore, meta: Option<serde_json::Value>) -> Result<Vec<u8>> {
    let mut offset = 0;
    let params = store
        .iter()
        .map(|p| {
            let e = ManifestEntry {
                name: p.name.clone(),
                shape: p.value.shape().to_vec(),
                offset,
            };
            offset += p.value.len();
            e
        })
        .collect();
    let manifest = serde_json::to_vec(&Manifest {
        format: 1,
        params,
        meta,
    })?;
    let mut out = Vec::with_capacity(16 + manifest.len() + offset * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(manifest.len() as u64).to_le_bytes());
    out.extend_from_slice(&manifest);
    for p in store.iter() {
        for v in p.value.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

/// Decodes a container into a fresh store (gradients zeroed).
pub fn from_bytes(bytes: &[u8]) -> Result<ParamStore> {
    Ok(from_bytes_with_meta(bytes)?.0)
}

pub fn from_bytes_with_meta(bytes: &[u8]) -> Result<(ParamStore, Option<serde_json::Value>)> {
    let bad = |m: &str| Error::Checkpoint(m.to_string());
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(bad("missing magic header"));
    }
    let mlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let body = bytes.get(16..16 + mlen).ok_or_else(|| bad("truncated manifest"))?;
    let manifest: Manifest = serde_json::from_slice(body)?;
    if manifest.format != 1 {
        return Err(bad(&format!("unsupported format {}", manifest.format)));
    }
    let payload = &bytes[16 + mlen..];
    if !payload.len().is_multiple_of(8) {
        return Err(bad("payload is not a whole number of f64 values"));
    }
    let values: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let mut store = ParamStore::new();
    for e in manifest.params.iter().cloned() {
        let n: usize = e.shape.iter().product();
        let data = values
            .get(e.offset..e.offset + n)
            .ok_or_else(|| bad(&format!("payload too short for `{}`", e.name)))?;
        store.add(e.name, Tensor::new(e.shape, data.to_vec())?);
    }
    Ok((store, manifest.meta))
}

pub fn save(store: &ParamStore, path: &Path) -> Result<()> {
    fs::write(path, to_bytes(store)?).map_err(Error::at(path))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<ParamStore> {
    from_bytes(&fs::read(path).map_err(Error::at(path))?)
}

pub fn save_with_meta(store: &ParamStore, meta: serde_json::Value, path: &Path) -> Result<()> {
    fs::write(path, to_bytes_with_meta(store, Some(meta))?).map_err(Error::at(path))?;
    Ok(())
}

pub fn load_with_meta(path: &Path) -> Result<(ParamStore, Option<serde_json::Value>)> {
    from_bytes_with_meta(&fs::read(path).map_err(Error::at(path))?)
}

/// Overwrites `target` values from `source`, matching by name and shape.
pub fn restore_into(target: &mut ParamStore, source: &ParamStore) -> Result<()> {
    if target.len() != source.len() {
        return Err(Error::Checkpoint(format!(
            "expected {} parameters, checkpoint has {}",
            target.len(),
            source.len()
        )));
    }
    for id in target.ids().collect::<Vec<_>>() {
        let name = target.get(id).name.clone();
        let src = source
            .find(&name)
            .map(|s| source.get(s))
            .ok_or_else(|| Error::Checkpoint(format!("missing parameter `{name}`")))?;
        let dst = target.get_mut(id);
        if src.value.shape() != dst.value.shape() {
            return Err(Error::shape("checkpoint", dst.value.shape(), src.value.shape()));
        }
        dst.value = src.value.clone();
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut store = ParamStore::new();
        store.add("w", Tensor::from_rows(&[vec![1.5, -0.0], vec![f64::MIN_POSITIVE, 3.0]]));
        store.add("blocks", Tensor::new(vec![2, 1, 1], vec![0.1, 0.2]).unwrap());
        let bytes = to_bytes(&store).unwrap();
        let back = from_bytes(&bytes).unwrap();
        assert_eq!(back, store);
        assert_eq!(to_bytes(&back).unwrap(), bytes);
    }

    #[test]
    fn rejects_garbage() {
        assert!(from_bytes(b"not a checkpoint").is_err());
        let mut store = ParamStore::new();
        store.add("w", Tensor::zeros(&[2, 2]));
        let bytes = to_bytes(&store).unwrap();
        assert!(from_bytes(&bytes[..bytes.len() - 3]).is_err());
    }
}
