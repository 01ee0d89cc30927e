//! Safetensors header parsing.
//!
//! A safetensors file starts with an 8-byte little-endian header length `N`,
//! followed by `N` bytes of UTF-8 JSON mapping tensor names to
//! `{dtype, shape, data_offsets}`. Only the header is read here; tensor
//! payloads are never touched.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::DescriptorError;

const METADATA_KEY: &str = "__metadata__";

/// Element type tag of a stored tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Dtype {
    #[serde(rename = "BOOL")]
    Bool,
    U8,
    I8,
    #[serde(rename = "F8_E5M2")]
    F8E5M2,
    #[serde(rename = "F8_E4M3")]
    F8E4M3,
    I16,
    U16,
    F16,
    BF16,
    I32,
    U32,
    F32,
    F64,
    I64,
    U64,
}

impl Dtype {
    pub const ALL: [Dtype; 15] = [
        Dtype::Bool,
        Dtype::U8,
        Dtype::I8,
        Dtype::F8E5M2,
        Dtype::F8E4M3,
        Dtype::I16,
        Dtype::U16,
        Dtype::F16,
        Dtype::BF16,
        Dtype::I32,
        Dtype::U32,
        Dtype::F32,
        Dtype::F64,
        Dtype::I64,
        Dtype::U64,
    ];

    /// Size of one element in bytes.
    pub fn size_of(self) -> u64 {
        match self {
            Dtype::Bool | Dtype::U8 | Dtype::I8 | Dtype::F8E5M2 | Dtype::F8E4M3 => 1,
            Dtype::I16 | Dtype::U16 | Dtype::F16 | Dtype::BF16 => 2,
            Dtype::I32 | Dtype::U32 | Dtype::F32 => 4,
            Dtype::F64 | Dtype::I64 | Dtype::U64 => 8,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Dtype::Bool => "BOOL",
            Dtype::U8 => "U8",
            Dtype::I8 => "I8",
            Dtype::F8E5M2 => "F8_E5M2",
            Dtype::F8E4M3 => "F8_E4M3",
            Dtype::I16 => "I16",
            Dtype::U16 => "U16",
            Dtype::F16 => "F16",
            Dtype::BF16 => "BF16",
            Dtype::I32 => "I32",
            Dtype::U32 => "U32",
            Dtype::F32 => "F32",
            Dtype::F64 => "F64",
            Dtype::I64 => "I64",
            Dtype::U64 => "U64",
        }
    }
}

impl fmt::Display for Dtype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Dtype {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Dtype::ALL.into_iter().find(|d| d.as_str() == s).ok_or(())
    }
}

/// One tensor record of a safetensors header.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorEntry {
    pub name: String,
    pub dtype: Dtype,
    pub shape: Vec<u64>,
    /// Half-open `[start, end)` offsets into the data blob.
    pub byte_range: (u64, u64),
}

impl TensorEntry {
    /// Element count; scalars (empty shape) hold one element.
    pub fn numel(&self) -> u64 {
        self.shape.iter().product()
    }

    pub fn byte_len(&self) -> u64 {
        self.byte_range.1 - self.byte_range.0
    }
}

/// Parsed safetensors header.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TensorIndex {
    /// Entries sorted by tensor name.
    pub entries: Vec<TensorEntry>,
    pub metadata: BTreeMap<String, String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEntry {
    dtype: String,
    shape: Vec<u64>,
    data_offsets: [u64; 2],
}

/// Parse the header of a safetensors file.
///
/// `raw` may hold the whole file or just the length prefix plus header; any
/// bytes after the header are ignored.
pub fn parse_safetensors_header(raw: &[u8]) -> Result<TensorIndex, DescriptorError> {
    let prefix: [u8; 8] =
        raw.get(..8)
            .and_then(|b| b.try_into().ok())
            .ok_or(DescriptorError::Truncated {
                needed: 8,
                actual: raw.len() as u64,
            })?;
    let header_len = u64::from_le_bytes(prefix);
    let needed = header_len.saturating_add(8);
    if (raw.len() as u64) < needed {
        return Err(DescriptorError::Truncated {
            needed,
            actual: raw.len() as u64,
        });
    }
    let header = &raw[8..needed as usize];
    let object: Map<String, Value> = serde_json::from_slice(header)
        .map_err(|e| DescriptorError::MalformedHeader(e.to_string()))?;

    let mut index = TensorIndex::default();
    for (name, value) in object {
        if name == METADATA_KEY {
            index.metadata = serde_json::from_value(value)
                .map_err(|e| DescriptorError::MalformedHeader(format!("{METADATA_KEY}: {e}")))?;
            continue;
        }
        let raw_entry: RawEntry =
            serde_json::from_value(value).map_err(|e| DescriptorError::InvalidEntry {
                name: name.clone(),
                reason: e.to_string(),
            })?;
        let dtype =
            raw_entry
                .dtype
                .parse::<Dtype>()
                .map_err(|_| DescriptorError::UnknownDtype {
                    name: name.clone(),
                    dtype: raw_entry.dtype.clone(),
                })?;
        let [start, end] = raw_entry.data_offsets;
        if start > end {
            return Err(DescriptorError::InvalidEntry {
                name,
                reason: format!("data_offsets [{start}, {end}] are reversed"),
            });
        }
        let expected = raw_entry
            .shape
            .iter()
            .try_fold(dtype.size_of(), |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| DescriptorError::InvalidEntry {
                name: name.clone(),
                reason: "shape byte size overflows u64".into(),
            })?;
        if expected != end - start {
            return Err(DescriptorError::InvalidEntry {
                name,
                reason: format!(
                    "shape {:?} of {dtype} needs {expected} bytes but data_offsets span {}",
                    raw_entry.shape,
                    end - start
                ),
            });
        }
        index.entries.push(TensorEntry {
            name,
            dtype,
            shape: raw_entry.shape,
            byte_range: (start, end),
        });
    }
    index.entries.sort_by(|a, b| a.name.cmp(&b.name));
    check_overlaps(&index.entries)?;
    Ok(index)
}

fn check_overlaps(entries: &[TensorEntry]) -> Result<(), DescriptorError> {
    let mut by_start: Vec<&TensorEntry> = entries.iter().filter(|e| e.byte_len() > 0).collect();
    by_start.sort_by_key(|e| e.byte_range);
    for pair in by_start.windows(2) {
        if pair[1].byte_range.0 < pair[0].byte_range.1 {
            return Err(DescriptorError::Overlap {
                name: pair[1].name.clone(),
                other: pair[0].name.clone(),
            });
        }
    }
    Ok(())
}

impl TensorIndex {
    /// Total element count over every tensor.
    pub fn total_elements(&self) -> u64 {
        self.entries.iter().map(TensorEntry::numel).sum()
    }

    /// Encode as a header-only safetensors byte stream (length prefix + JSON,
    /// space-padded to an 8-byte boundary).
    pub fn to_header_bytes(&self) -> Vec<u8> {
        let mut object = Map::new();
        if !self.metadata.is_empty() {
            object.insert(
                METADATA_KEY.to_string(),
                serde_json::to_value(&self.metadata).expect("string map serializes"),
            );
        }
        for e in &self.entries {
            object.insert(
                e.name.clone(),
                serde_json::json!({
                    "dtype": e.dtype.as_str(),
                    "shape": e.shape,
                    "data_offsets": [e.byte_range.0, e.byte_range.1],
                }),
            );
        }
        let mut json = serde_json::to_vec(&object).expect("header serializes");
        while !json.len().is_multiple_of(8) {
            json.push(b' ');
        }
        let mut out = Vec::with_capacity(json.len() + 8);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(json: &str) -> Vec<u8> {
        let mut raw = (json.len() as u64).to_le_bytes().to_vec();
        raw.extend_from_slice(json.as_bytes());
        raw
    }

    #[test]
    fn metadata_only_header_is_empty_index() {
        let index = parse_safetensors_header(&frame(r#"{"__metadata__":{}}"#)).unwrap();
        assert!(index.entries.is_empty());
        assert!(index.metadata.is_empty());
    }

    #[test]
    fn single_entry_by_hand() {
        let raw = frame(
            r#"{"__metadata__":{"format":"pt"},"a.weight":{"dtype":"F32","shape":[2,3],"data_offsets":[0,24]}}"#,
        );
        let index = parse_safetensors_header(&raw).unwrap();
        assert_eq!(
            index.entries,
            vec![TensorEntry {
                name: "a.weight".into(),
                dtype: Dtype::F32,
                shape: vec![2, 3],
                byte_range: (0, 24),
            }]
        );
        assert_eq!(index.entries[0].byte_len(), 2 * 3 * 4);
        assert_eq!(index.metadata["format"], "pt");
    }

    #[test]
    fn four_bytes_is_truncated() {
        let err = parse_safetensors_header(&[1, 0, 0, 0]).unwrap_err();
        assert!(matches!(
            err,
            DescriptorError::Truncated {
                needed: 8,
                actual: 4
            }
        ));
    }

    #[test]
    fn header_longer_than_input_is_truncated() {
        let mut raw = frame("{}");
        raw[0] = 200;
        assert!(matches!(
            parse_safetensors_header(&raw),
            Err(DescriptorError::Truncated { needed: 208, .. })
        ));
        let mut huge = u64::MAX.to_le_bytes().to_vec();
        huge.extend_from_slice(b"{}");
        assert!(matches!(
            parse_safetensors_header(&huge),
            Err(DescriptorError::Truncated { .. })
        ));
    }

    #[test]
    fn bad_json_is_malformed() {
        assert!(matches!(
            parse_safetensors_header(&frame("{\"a\":")),
            Err(DescriptorError::MalformedHeader(_))
        ));
        assert!(matches!(
            parse_safetensors_header(&frame("[1,2]")),
            Err(DescriptorError::MalformedHeader(_))
        ));
    }

    #[test]
    fn unknown_dtype_names_the_tensor() {
        let raw = frame(r#"{"x.weight":{"dtype":"F12","shape":[1],"data_offsets":[0,1]}}"#);
        match parse_safetensors_header(&raw) {
            Err(DescriptorError::UnknownDtype { name, dtype }) => {
                assert_eq!(name, "x.weight");
                assert_eq!(dtype, "F12");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn overlap_names_both_tensors() {
        let raw = frame(
            r#"{"a":{"dtype":"U8","shape":[4],"data_offsets":[0,4]},"b":{"dtype":"U8","shape":[4],"data_offsets":[2,6]}}"#,
        );
        match parse_safetensors_header(&raw) {
            Err(DescriptorError::Overlap { name, other }) => {
                assert_eq!(name, "b");
                assert_eq!(other, "a");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn size_mismatch_and_reversed_offsets_rejected() {
        let raw = frame(r#"{"a":{"dtype":"F32","shape":[2],"data_offsets":[0,4]}}"#);
        assert!(matches!(
            parse_safetensors_header(&raw),
            Err(DescriptorError::InvalidEntry { .. })
        ));
        let raw = frame(r#"{"a":{"dtype":"U8","shape":[],"data_offsets":[5,4]}}"#);
        assert!(matches!(
            parse_safetensors_header(&raw),
            Err(DescriptorError::InvalidEntry { .. })
        ));
    }

    #[test]
    fn zero_sized_tensors_never_overlap() {
        let raw = frame(
            r#"{"a":{"dtype":"U8","shape":[0],"data_offsets":[0,0]},"b":{"dtype":"U8","shape":[2],"data_offsets":[0,2]}}"#,
        );
        assert_eq!(parse_safetensors_header(&raw).unwrap().entries.len(), 2);
    }

    #[test]
    fn header_bytes_round_trip() {
        let raw = frame(
            r#"{"__metadata__":{"k":"v"},"m.bias":{"dtype":"BF16","shape":[3],"data_offsets":[24,30]},"m.weight":{"dtype":"BF16","shape":[3,4],"data_offsets":[0,24]}}"#,
        );
        let index = parse_safetensors_header(&raw).unwrap();
        let again = parse_safetensors_header(&index.to_header_bytes()).unwrap();
        assert_eq!(index, again);
        assert_eq!(index.to_header_bytes().len() % 8, 0);
    }
}
