// SPDX-License-Identifier: MIT OR Apache-2.0

//! AXIR named-tensor container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "AXIR" | u32 version = 1 | u64 header_length | header (UTF-8 JSON) | payload
//! ```
//!
//! The header maps each tensor name to
//! `{"dtype": "f32", "shape": [...], "byte_offset": o, "byte_length": n}`.
//! Offsets are relative to the payload start and are multiples of 64.
//! The writer pads the header with trailing spaces so the payload itself
//! starts on a 64-byte boundary, sorts names, and zero-fills alignment gaps,
//! so identical containers serialize to identical bytes.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::de::{MapAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize};

use super::ModelError;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"AXIR";
pub const VERSION: u32 = 1;
pub const ALIGN: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub dtype: String,
    pub shape: Vec<usize>,
    pub byte_offset: u64,
    pub byte_length: u64,
}

/// Header entries in file order; duplicates are preserved so they can be
/// reported instead of silently overwritten.
struct HeaderEntries(Vec<(String, TensorEntry)>);

impl<'de> Deserialize<'de> for HeaderEntries {
    fn deserialize<D: Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = HeaderEntries;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a map of tensor name to tensor entry")
            }
            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<Self::Value, A::Error> {
                let mut out = Vec::new();
                while let Some((k, v)) = map.next_entry::<String, TensorEntry>()? {
                    out.push((k, v));
                }
                Ok(HeaderEntries(out))
            }
        }
        de.deserialize_map(V)
    }
}

/// Named tensors, ordered by name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightContainer {
    tensors: BTreeMap<String, Tensor>,
}

impl WeightContainer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> Option<Tensor> {
        self.tensors.insert(name.into(), tensor)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    pub fn remove(&mut self, name: &str) -> Option<Tensor> {
        self.tensors.remove(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut header = BTreeMap::new();
        let mut offset = 0u64;
        for (name, t) in &self.tensors {
            let len = (t.len() * 4) as u64;
            header.insert(
                name.clone(),
                TensorEntry {
                    dtype: "f32".into(),
                    shape: t.shape().to_vec(),
                    byte_offset: offset,
                    byte_length: len,
                },
            );
            offset = align_up(offset + len);
        }
        let mut header_bytes = serde_json::to_vec(&header).expect("header serializes");
        let prefix = 4 + 4 + 8;
        while (prefix + header_bytes.len()) % ALIGN != 0 {
            header_bytes.push(b' ');
        }

        let mut out = Vec::with_capacity(prefix + header_bytes.len() + offset as usize);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(header_bytes.len() as u64).to_le_bytes());
        out.extend_from_slice(&header_bytes);
        let payload_start = out.len();
        for (name, t) in &self.tensors {
            let entry = &header[name];
            out.resize(payload_start + entry.byte_offset as usize, 0);
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out.resize(payload_start + offset as usize, 0);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ModelError> {
        let truncated = |what: &str| ModelError::Corrupt(format!("truncated {what}"));
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(ModelError::BadMagic);
        }
        let version = u32::from_le_bytes(
            bytes
                .get(4..8)
                .ok_or_else(|| truncated("version"))?
                .try_into()
                .unwrap(),
        );
        if version != VERSION {
            return Err(ModelError::UnsupportedVersion(version));
        }
        let header_len = u64::from_le_bytes(
            bytes
                .get(8..16)
                .ok_or_else(|| truncated("header length"))?
                .try_into()
                .unwrap(),
        ) as usize;
        let header_bytes = bytes
            .get(16..16usize.saturating_add(header_len))
            .ok_or_else(|| truncated("header"))?;
        let entries: HeaderEntries = serde_json::from_slice(header_bytes)
            .map_err(|e| ModelError::Corrupt(format!("header: {e}")))?;
        let payload = &bytes[16 + header_len..];

        let mut tensors = BTreeMap::new();
        for (name, entry) in entries.0 {
            if tensors.contains_key(&name) {
                return Err(ModelError::DuplicateTensor(name));
            }
            if entry.dtype != "f32" {
                return Err(ModelError::Corrupt(format!(
                    "{name}: unsupported dtype {}",
                    entry.dtype
                )));
            }
            if entry.byte_offset % ALIGN as u64 != 0 {
                return Err(ModelError::Corrupt(format!(
                    "{name}: offset {} not {ALIGN}-byte aligned",
                    entry.byte_offset
                )));
            }
            let count: usize = entry.shape.iter().product();
            if entry.byte_length != (count * 4) as u64 {
                return Err(ModelError::Corrupt(format!(
                    "{name}: byte_length {} does not match shape {:?}",
                    entry.byte_length, entry.shape
                )));
            }
            let start = entry.byte_offset as usize;
            let raw = payload
                .get(start..start + entry.byte_length as usize)
                .ok_or_else(|| truncated(&format!("payload for {name}")))?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            let tensor = Tensor::new(entry.shape, data).expect("length checked above");
            tensors.insert(name, tensor);
        }
        Ok(Self { tensors })
    }

    pub fn read(path: &Path) -> Result<Self, ModelError> {
        let bytes = std::fs::read(path).map_err(|e| ModelError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::from_bytes(&bytes)
    }

    pub fn write(&self, path: &Path) -> Result<(), ModelError> {
        std::fs::write(path, self.to_bytes()).map_err(|e| ModelError::Io {
            path: path.display().to_string(),
            source: e,
        })
    }
}

fn align_up(n: u64) -> u64 {
    let a = ALIGN as u64;
    n.div_ceil(a) * a
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> WeightContainer {
        let mut c = WeightContainer::new();
        c.insert("b", Tensor::new(vec![2, 3], vec![1., 2., 3., 4., 5., 6.]).unwrap());
        c.insert("a", Tensor::vector(vec![0.5; 17]));
        c
    }

    #[test]
    fn layout_is_aligned_and_roundtrips() {
        let c = sample();
        let bytes = c.to_bytes();
        assert_eq!(&bytes[..4], b"AXIR");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        let hl = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        assert_eq!((16 + hl) % 64, 0);
        let header: serde_json::Value = serde_json::from_slice(&bytes[16..16 + hl]).unwrap();
        assert_eq!(header["a"]["byte_offset"], 0);
        assert_eq!(header["a"]["byte_length"], 68);
        assert_eq!(header["b"]["byte_offset"], 128);
        assert_eq!(WeightContainer::from_bytes(&bytes).unwrap(), c);
        assert_eq!(bytes, c.to_bytes());
    }

    #[test]
    fn rejects_bad_magic_and_version() {
        let mut bytes = sample().to_bytes();
        bytes[0] = b'X';
        assert!(matches!(
            WeightContainer::from_bytes(&bytes),
            Err(ModelError::BadMagic)
        ));
        let mut bytes = sample().to_bytes();
        bytes[4] = 2;
        assert!(matches!(
            WeightContainer::from_bytes(&bytes),
            Err(ModelError::UnsupportedVersion(2))
        ));
    }

    #[test]
    fn rejects_duplicate_names() {
        let header = br#"{"x":{"dtype":"f32","shape":[1],"byte_offset":0,"byte_length":4},"x":{"dtype":"f32","shape":[1],"byte_offset":0,"byte_length":4}}"#;
        let mut bytes = Vec::new();
        bytes.extend_from_slice(MAGIC);
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&(header.len() as u64).to_le_bytes());
        bytes.extend_from_slice(header);
        bytes.extend_from_slice(&1.0f32.to_le_bytes());
        assert!(matches!(
            WeightContainer::from_bytes(&bytes),
            Err(ModelError::DuplicateTensor(n)) if n == "x"
        ));
    }

    #[test]
    fn rejects_truncated_payload() {
        let bytes = sample().to_bytes();
        let cut = &bytes[..bytes.len() - 64];
        assert!(matches!(
            WeightContainer::from_bytes(cut),
            Err(ModelError::Corrupt(_))
        ));
    }
}
