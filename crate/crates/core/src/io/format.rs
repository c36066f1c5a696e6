//! On-disk model container.
//!
//! ```text
//! offset 0   8 bytes   magic "FFNSKIP\0"
//! offset 8   u64 LE    header length N
//! offset 16  N bytes   UTF-8 JSON header
//! 16 + N     ...       payload: little-endian f32, row-major
//! ```
//!
//! The header carries `format_version`, every `ModelConfig` field,
//! `payload_bytes`, and a `tensors` manifest of `{name, shape, byte_offset}`
//! with offsets relative to the start of the payload.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{tensor_layout, LayerWeights, Model, ModelConfig};
use crate::tensor::Matrix;

pub const MAGIC: &[u8; 8] = b"FFNSKIP\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub byte_offset: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelHeader {
    pub format_version: u32,
    #[serde(flatten)]
    pub config: ModelConfig,
    pub payload_bytes: u64,
    pub tensors: Vec<TensorEntry>,
}

impl ModelHeader {
    pub fn for_model(model: &Model) -> Self {
        let mut offset = 0u64;
        let tensors = model
            .tensors()
            .into_iter()
            .map(|t| {
                let e = TensorEntry {
                    name: t.name,
                    shape: t.shape,
                    byte_offset: offset,
                };
                offset += 4 * t.data.len() as u64;
                e
            })
            .collect();
        Self {
            format_version: FORMAT_VERSION,
            config: model.config.clone(),
            payload_bytes: offset,
            tensors,
        }
    }
}

pub fn write_model<W: Write>(model: &Model, mut out: W) -> std::io::Result<()> {
    let header = serde_json::to_vec(&ModelHeader::for_model(model))?;
    out.write_all(MAGIC)?;
    out.write_all(&(header.len() as u64).to_le_bytes())?;
    out.write_all(&header)?;
    for t in model.tensors() {
        let mut buf = Vec::with_capacity(t.data.len() * 4);
        for v in t.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        out.write_all(&buf)?;
    }
    out.flush()
}

pub fn save_model(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_model(model, std::io::BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    read_model(&bytes)
}

#[derive(Deserialize)]
struct VersionProbe {
    format_version: u32,
}

/// Parses a complete model file held in memory.
pub fn read_model(bytes: &[u8]) -> Result<Model> {
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(Error::Format("missing magic bytes".into()));
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let header_end = 16u64
        .checked_add(header_len)
        .filter(|&e| e <= bytes.len() as u64)
        .ok_or_else(|| Error::Format("header extends past end of file".into()))?
        as usize;
    let header_bytes = &bytes[16..header_end];

    let probe: VersionProbe = serde_json::from_slice(header_bytes)?;
    if probe.format_version != FORMAT_VERSION {
        return Err(Error::UnknownFormatVersion(probe.format_version));
    }
    let header: ModelHeader = serde_json::from_slice(header_bytes)?;
    header.config.validate()?;

    let payload = &bytes[header_end..];
    let actual = payload.len() as u64;
    if actual < header.payload_bytes {
        return Err(Error::Truncated {
            declared: header.payload_bytes,
            actual,
        });
    }
    if actual > header.payload_bytes {
        return Err(Error::Format(format!(
            "{} trailing bytes after declared payload",
            actual - header.payload_bytes
        )));
    }

    let index = check_manifest(&header)?;
    let take = |name: &str| -> Vec<f32> {
        let e = &header.tensors[index[name]];
        let start = e.byte_offset as usize;
        let n: usize = e.shape.iter().product();
        payload[start..start + 4 * n]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect()
    };
    let cfg = &header.config;
    let (h, f, v) = (cfg.hidden_dim, cfg.ffn_dim, cfg.vocab_size);
    let embedding = Matrix::new(v, h, take("embedding"))?;
    let mut layers = Vec::with_capacity(cfg.num_layers);
    for l in 0..cfg.num_layers {
        let p = format!("layers.{l}");
        let mut w = LayerWeights::zeros(cfg);
        w.wq = Matrix::new(h, h, take(&format!("{p}.wq")))?;
        w.wk = Matrix::new(h, h, take(&format!("{p}.wk")))?;
        w.wv = Matrix::new(h, h, take(&format!("{p}.wv")))?;
        w.wo = Matrix::new(h, h, take(&format!("{p}.wo")))?;
        w.ff_w1 = Matrix::new(h, f, take(&format!("{p}.ff_w1")))?;
        w.ff_w2 = Matrix::new(f, h, take(&format!("{p}.ff_w2")))?;
        w.ff_w3 = Matrix::new(h, f, take(&format!("{p}.ff_w3")))?;
        w.attn_norm_gain = take(&format!("{p}.attn_norm"));
        w.ffn_norm_gain = take(&format!("{p}.ffn_norm"));
        layers.push(w);
    }
    let final_norm = take("final_norm");
    let lm_head = Matrix::new(h, v, take("lm_head"))?;
    Model::new(cfg.clone(), embedding, layers, final_norm, lm_head)
}

/// Validates the manifest against the architecture and returns name -> entry index.
fn check_manifest(header: &ModelHeader) -> Result<HashMap<String, usize>> {
    let mut index = HashMap::new();
    for (i, e) in header.tensors.iter().enumerate() {
        if index.insert(e.name.clone(), i).is_some() {
            return Err(Error::Format(format!("tensor `{}` listed twice", e.name)));
        }
    }
    let layout = tensor_layout(&header.config);
    for (name, shape) in &layout {
        let Some(&i) = index.get(name) else {
            return Err(Error::MissingTensor(name.clone()));
        };
        let e = &header.tensors[i];
        if &e.shape != shape {
            return Err(Error::TensorShape {
                name: name.clone(),
                expected: shape.clone(),
                found: e.shape.clone(),
            });
        }
    }
    if header.tensors.len() != layout.len() {
        let known: std::collections::HashSet<&str> =
            layout.iter().map(|(n, _)| n.as_str()).collect();
        let extra = header
            .tensors
            .iter()
            .find(|e| !known.contains(e.name.as_str()))
            .map_or("?", |e| e.name.as_str());
        return Err(Error::Format(format!("unexpected tensor `{extra}`")));
    }

    let mut prev_end = 0u64;
    for e in &header.tensors {
        let n: u64 = e.shape.iter().map(|&d| d as u64).product();
        let end = e.byte_offset + 4 * n;
        if e.byte_offset % 4 != 0 {
            return Err(Error::Format(format!("tensor `{}` is not 4-byte aligned", e.name)));
        }
        if e.byte_offset < prev_end {
            return Err(Error::Format(format!(
                "tensor `{}` overlaps its predecessor or is out of order",
                e.name
            )));
        }
        if end > header.payload_bytes {
            return Err(Error::Format(format!(
                "tensor `{}` ends at byte {end}, past the declared payload of {}",
                e.name, header.payload_bytes
            )));
        }
        prev_end = end;
    }
    Ok(index)
}

/// SHA-256 over the configuration and every tensor (name, shape, LE bytes),
/// hex encoded.
pub fn fingerprint(model: &Model) -> String {
    let mut hasher = Sha256::new();
    hasher.update(serde_json::to_vec(&model.config).expect("config serializes"));
    for t in model.tensors() {
        hasher.update(t.name.as_bytes());
        for d in &t.shape {
            hasher.update((*d as u64).to_le_bytes());
        }
        for v in t.data {
            hasher.update(v.to_le_bytes());
        }
    }
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::init_random_model;

    fn small() -> Model {
        let cfg = ModelConfig {
            num_layers: 2,
            hidden_dim: 8,
            num_heads: 2,
            ffn_dim: 12,
            vocab_size: 260,
            ..ModelConfig::toy()
        };
        init_random_model(&cfg, 17).unwrap()
    }

    fn to_bytes(m: &Model) -> Vec<u8> {
        let mut v = Vec::new();
        write_model(m, &mut v).unwrap();
        v
    }

    /// Rewrites the header of an encoded model.
    fn patch_header(bytes: &[u8], f: impl FnOnce(&mut serde_json::Value)) -> Vec<u8> {
        let n = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let mut h: serde_json::Value = serde_json::from_slice(&bytes[16..16 + n]).unwrap();
        f(&mut h);
        let hb = serde_json::to_vec(&h).unwrap();
        let mut out = MAGIC.to_vec();
        out.extend_from_slice(&(hb.len() as u64).to_le_bytes());
        out.extend_from_slice(&hb);
        out.extend_from_slice(&bytes[16 + n..]);
        out
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let m = small();
        let back = read_model(&to_bytes(&m)).unwrap();
        assert_eq!(back, m);
        assert_eq!(fingerprint(&back), fingerprint(&m));
    }

    #[test]
    fn round_trip_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        let m = small();
        save_model(&m, &path).unwrap();
        assert_eq!(load_model(&path).unwrap(), m);
    }

    #[test]
    fn truncated_payload() {
        let mut b = to_bytes(&small());
        b.pop();
        assert!(matches!(read_model(&b), Err(Error::Truncated { .. })));
    }

    #[test]
    fn missing_tensor_is_named() {
        let b = patch_header(&to_bytes(&small()), |h| {
            let t = h["tensors"].as_array_mut().unwrap();
            t.retain(|e| e["name"] != "layers.0.ff_w2");
        });
        match read_model(&b) {
            Err(Error::MissingTensor(name)) => assert_eq!(name, "layers.0.ff_w2"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn shape_mismatch() {
        let b = patch_header(&to_bytes(&small()), |h| {
            h["tensors"][1]["shape"] = serde_json::json!([4, 16]);
        });
        assert!(matches!(read_model(&b), Err(Error::TensorShape { .. })));
    }

    #[test]
    fn unknown_version() {
        let b = patch_header(&to_bytes(&small()), |h| {
            h["format_version"] = serde_json::json!(99);
        });
        assert!(matches!(read_model(&b), Err(Error::UnknownFormatVersion(99))));
    }

    #[test]
    fn overlapping_offsets_rejected() {
        let b = patch_header(&to_bytes(&small()), |h| {
            h["tensors"][2]["byte_offset"] = serde_json::json!(4);
        });
        assert!(matches!(read_model(&b), Err(Error::Format(_))));
    }

    #[test]
    fn bad_magic() {
        assert!(matches!(read_model(b"not a model file"), Err(Error::Format(_))));
    }

    #[test]
    fn fingerprint_tracks_single_byte() {
        let m = small();
        let base = fingerprint(&m);
        let mut changed = m.clone();
        let v = changed.layers[1].ff_w3.get(3, 5);
        changed.layers[1]
            .ff_w3
            .set(3, 5, f32::from_bits(v.to_bits() ^ 1));
        assert_ne!(fingerprint(&changed), base);
        changed.layers[1].ff_w3.set(3, 5, v);
        assert_eq!(fingerprint(&changed), base);
    }
}
