//! Single-file tensor archive.
//!
//! Layout: an 8-byte little-endian header length `N`, `N` bytes of JSON
//! mapping each tensor name to `{"dtype", "shape", "data_offsets"}` (plus an
//! optional `"__metadata__"` string map), then the little-endian payload.
//! Offsets are relative to the start of the payload. This is the layout of
//! `.safetensors` checkpoints, restricted to `F32`.
//!
//! Written archives are canonical: entries sorted by name, payloads packed
//! back to back in that order, compact JSON padded with spaces to a
//! multiple of 8 bytes. Equal inputs give byte-identical files.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use serde::de::{Deserialize, Deserializer, MapAccess, Visitor};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

const METADATA_KEY: &str = "__metadata__";
const HEADER_ALIGN: usize = 8;
/// Upper bound on the JSON header, as in the safetensors reference reader.
const MAX_HEADER_LEN: u64 = 100_000_000;

/// Header record of one tensor.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EntryInfo {
    pub dtype: String,
    pub shape: Vec<usize>,
    /// Byte range `[start, end)` within the payload.
    pub data_offsets: (usize, usize),
}

/// Named tensors plus free-form string metadata.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Archive {
    pub metadata: BTreeMap<String, String>,
    tensors: BTreeMap<String, Tensor>,
}

impl Archive {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds an archive, rejecting repeated names.
    pub fn from_entries<I, S>(entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, Tensor)>,
        S: Into<String>,
    {
        let mut archive = Archive::new();
        for (name, t) in entries {
            archive.insert(name, t)?;
        }
        Ok(archive)
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) -> Result<()> {
        let name = name.into();
        if name == METADATA_KEY || self.tensors.contains_key(&name) {
            return Err(Error::DuplicateName(name));
        }
        self.tensors.insert(name, t);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn require(&self, name: &str) -> Result<&Tensor> {
        self.get(name).ok_or_else(|| Error::MissingTensor(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }
}

/// Header object read with duplicate-key detection (serde_json's `Map`
/// silently keeps the last value).
struct OrderedObject(Vec<(String, Value)>);

impl<'de> Deserialize<'de> for OrderedObject {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct ObjectVisitor;

        impl<'de> Visitor<'de> for ObjectVisitor {
            type Value = OrderedObject;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a JSON object")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> std::result::Result<Self::Value, A::Error> {
                let mut entries = Vec::new();
                while let Some((k, v)) = map.next_entry::<String, Value>()? {
                    entries.push((k, v));
                }
                Ok(OrderedObject(entries))
            }
        }

        deserializer.deserialize_map(ObjectVisitor)
    }
}

fn malformed(msg: impl Into<String>) -> Error {
    Error::MalformedHeader(msg.into())
}

fn parse_entry(name: &str, value: &Value) -> Result<EntryInfo> {
    let obj = value
        .as_object()
        .ok_or_else(|| malformed(format!("{name}: entry is not an object")))?;
    let dtype = obj
        .get("dtype")
        .and_then(Value::as_str)
        .ok_or_else(|| malformed(format!("{name}: missing dtype")))?;
    let shape = obj
        .get("shape")
        .and_then(Value::as_array)
        .ok_or_else(|| malformed(format!("{name}: missing shape")))?
        .iter()
        .map(|d| {
            d.as_u64()
                .and_then(|d| usize::try_from(d).ok())
                .ok_or_else(|| malformed(format!("{name}: bad extent {d}")))
        })
        .collect::<Result<Vec<usize>>>()?;
    let offsets = obj
        .get("data_offsets")
        .and_then(Value::as_array)
        .ok_or_else(|| malformed(format!("{name}: missing data_offsets")))?;
    let [start, end] = offsets.as_slice() else {
        return Err(malformed(format!("{name}: data_offsets must have 2 entries")));
    };
    let as_offset = |v: &Value| {
        v.as_u64()
            .and_then(|o| usize::try_from(o).ok())
            .ok_or_else(|| malformed(format!("{name}: bad offset {v}")))
    };
    let (start, end) = (as_offset(start)?, as_offset(end)?);

    if dtype != "F32" {
        return Err(Error::UnsupportedDtype(dtype.to_string()));
    }
    if shape.contains(&0) {
        return Err(malformed(format!("{name}: zero extent in {shape:?}")));
    }
    let numel = shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| malformed(format!("{name}: shape {shape:?} overflows")))?;
    if end < start || end - start != numel {
        return Err(malformed(format!(
            "{name}: range {start}..{end} does not hold {numel} bytes"
        )));
    }
    Ok(EntryInfo {
        dtype: dtype.to_string(),
        shape,
        data_offsets: (start, end),
    })
}

/// Parses and validates the header. Returns metadata, entries, and the
/// byte offset where the payload starts.
pub fn parse_header(bytes: &[u8]) -> Result<(BTreeMap<String, String>, BTreeMap<String, EntryInfo>, usize)> {
    let Some(prefix) = bytes.get(..8) else {
        return Err(Error::TruncatedFile(format!(
            "{} bytes, need at least 8 for the header length",
            bytes.len()
        )));
    };
    let header_len = u64::from_le_bytes(prefix.try_into().expect("8 bytes"));
    if header_len > MAX_HEADER_LEN {
        return Err(malformed(format!("header length {header_len} is implausible")));
    }
    let header_end = 8 + header_len as usize;
    if header_end > bytes.len() {
        return Err(Error::TruncatedFile(format!(
            "header claims {header_len} bytes, file has {}",
            bytes.len() - 8
        )));
    }
    let text = std::str::from_utf8(&bytes[8..header_end])
        .map_err(|e| malformed(format!("header is not UTF-8: {e}")))?;
    let OrderedObject(raw) =
        serde_json::from_str(text).map_err(|e| malformed(format!("header is not a JSON object: {e}")))?;

    let payload_len = bytes.len() - header_end;
    let mut metadata = BTreeMap::new();
    let mut entries = BTreeMap::new();
    let mut seen_metadata = false;
    for (name, value) in &raw {
        if name == METADATA_KEY {
            if std::mem::replace(&mut seen_metadata, true) {
                return Err(Error::DuplicateName(name.clone()));
            }
            let obj = value
                .as_object()
                .ok_or_else(|| malformed("__metadata__ is not an object"))?;
            for (k, v) in obj {
                let v = v
                    .as_str()
                    .ok_or_else(|| malformed(format!("metadata {k} is not a string")))?;
                metadata.insert(k.clone(), v.to_string());
            }
            continue;
        }
        let info = parse_entry(name, value)?;
        if info.data_offsets.1 > payload_len {
            return Err(Error::TruncatedFile(format!(
                "{name}: range ends at {} but payload has {payload_len} bytes",
                info.data_offsets.1
            )));
        }
        if entries.insert(name.clone(), info).is_some() {
            return Err(Error::DuplicateName(name.clone()));
        }
    }

    let mut ranges: Vec<(usize, usize, &str)> = entries
        .iter()
        .map(|(n, e)| (e.data_offsets.0, e.data_offsets.1, n.as_str()))
        .collect();
    ranges.sort();
    for pair in ranges.windows(2) {
        if pair[1].0 < pair[0].1 {
            return Err(Error::OverlappingRanges(format!(
                "{} [{}, {}) overlaps {} [{}, {})",
                pair[0].2, pair[0].0, pair[0].1, pair[1].2, pair[1].0, pair[1].1
            )));
        }
    }
    Ok((metadata, entries, header_end))
}

/// Decodes a complete archive from memory.
pub fn parse_archive(bytes: &[u8]) -> Result<Archive> {
    let (metadata, entries, payload_start) = parse_header(bytes)?;
    let payload = &bytes[payload_start..];
    let mut archive = Archive {
        metadata,
        tensors: BTreeMap::new(),
    };
    for (name, info) in entries {
        let (start, end) = info.data_offsets;
        let data: Vec<f32> = payload[start..end]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
            .collect();
        let t = Tensor::new(info.shape, data)?;
        archive.tensors.insert(name, t);
    }
    Ok(archive)
}

pub fn read_archive(path: impl AsRef<Path>) -> Result<Archive> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_archive(&bytes)
}

/// Canonical encoding.
pub fn encode_archive(archive: &Archive) -> Vec<u8> {
    let mut header = serde_json::Map::new();
    if !archive.metadata.is_empty() {
        header.insert(METADATA_KEY.to_string(), json!(archive.metadata));
    }
    let mut offset = 0usize;
    for (name, t) in &archive.tensors {
        let len = 4 * t.numel();
        header.insert(
            name.clone(),
            json!({
                "dtype": "F32",
                "shape": t.dims(),
                "data_offsets": [offset, offset + len],
            }),
        );
        offset += len;
    }
    let mut text = Value::Object(header).to_string().into_bytes();
    while !text.len().is_multiple_of(HEADER_ALIGN) {
        text.push(b' ');
    }

    let mut out = Vec::with_capacity(8 + text.len() + offset);
    out.extend_from_slice(&(text.len() as u64).to_le_bytes());
    out.extend_from_slice(&text);
    for t in archive.tensors.values() {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn write_archive(archive: &Archive, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_archive(archive)).map_err(|e| Error::io(path, e))
}
