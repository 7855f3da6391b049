//! Parameter checkpoint files.
//!
//! ```text
//! magic "ECGW1\0" | u32 header_len | JSON header (header_len bytes) | f32 LE blobs
//! ```
//!
//! Tensor byte offsets in the header are relative to the start of the blob
//! section.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::NnError;

pub const CHECKPOINT_MAGIC: &[u8; 6] = b"ECGW1\0";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    networks: Vec<String>,
    meta: serde_json::Value,
    tensors: Vec<TensorEntry>,
}

/// In-memory checkpoint: free-form metadata plus named f32 tensors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub networks: Vec<String>,
    pub meta: serde_json::Value,
    pub tensors: BTreeMap<String, (Vec<usize>, Vec<f32>)>,
}

impl Checkpoint {
    pub fn insert(&mut self, name: impl Into<String>, shape: Vec<usize>, values: Vec<f32>) {
        self.tensors.insert(name.into(), (shape, values));
    }

    pub fn get(&self, name: &str) -> Result<&(Vec<usize>, Vec<f32>), NnError> {
        self.tensors
            .get(name)
            .ok_or_else(|| NnError::Checkpoint(format!("missing tensor {name}")))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut offset = 0u64;
        let mut entries = Vec::with_capacity(self.tensors.len());
        for (name, (shape, values)) in &self.tensors {
            entries.push(TensorEntry {
                name: name.clone(),
                shape: shape.clone(),
                offset,
            });
            offset += values.len() as u64 * 4;
        }
        let header = Header {
            networks: self.networks.clone(),
            meta: self.meta.clone(),
            tensors: entries,
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(10 + json.len() + offset as usize);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, values) in self.tensors.values() {
            for v in values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, NnError> {
        if bytes.len() < 10 || &bytes[..6] != CHECKPOINT_MAGIC {
            return Err(NnError::Checkpoint("bad magic".into()));
        }
        let hlen = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
        let json = bytes
            .get(10..10 + hlen)
            .ok_or_else(|| NnError::Checkpoint("truncated header".into()))?;
        let header: Header = serde_json::from_slice(json).map_err(|e| NnError::Checkpoint(e.to_string()))?;
        let blob = &bytes[10 + hlen..];
        let mut tensors = BTreeMap::new();
        for e in header.tensors {
            let count: usize = e.shape.iter().product();
            let start = e.offset as usize;
            let raw = blob
                .get(start..start + count * 4)
                .ok_or_else(|| NnError::Checkpoint(format!("truncated tensor {}", e.name)))?;
            let values = raw
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
                .collect();
            tensors.insert(e.name, (e.shape, values));
        }
        Ok(Checkpoint {
            networks: header.networks,
            meta: header.meta,
            tensors,
        })
    }
}

pub fn write_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<(), NnError> {
    fs::write(path, ckpt.to_bytes()).map_err(|e| NnError::Checkpoint(format!("{}: {e}", path.display())))
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint, NnError> {
    let bytes = fs::read(path).map_err(|e| NnError::Checkpoint(format!("{}: {e}", path.display())))?;
    Checkpoint::from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bytes_round_trip_and_layout() {
        let mut c = Checkpoint {
            networks: vec!["g".into()],
            meta: serde_json::json!({"mode": "t2t"}),
            ..Default::default()
        };
        c.insert("g.a", vec![2, 3], (0..6).map(|i| i as f32 * 0.5).collect());
        c.insert("g.b", vec![4], vec![1.0, -1.0, 2.5, 0.0]);
        let bytes = c.to_bytes();
        assert_eq!(&bytes[..6], CHECKPOINT_MAGIC);
        let hlen = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
        assert_eq!(bytes.len(), 10 + hlen + 10 * 4);
        assert_eq!(Checkpoint::from_bytes(&bytes).unwrap(), c);
    }

    #[test]
    fn rejects_garbage() {
        assert!(Checkpoint::from_bytes(b"ECGR1\0\0\0\0\0").is_err());
        let mut c = Checkpoint::default();
        c.insert("x", vec![3], vec![1.0, 2.0, 3.0]);
        let mut bytes = c.to_bytes();
        bytes.truncate(bytes.len() - 2);
        assert!(Checkpoint::from_bytes(&bytes).is_err());
    }
}
