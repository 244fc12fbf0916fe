//! Weight container.
//!
//! ```text
//! "LWGW" | version: u32 LE | header_len: u64 LE | header (UTF-8 JSON)
//!        | payload (f64 LE, row-major, tensors in directory order)
//!        | crc32(payload): u32 LE
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::{ModelConfig, ModelWeights, Parameters};
use super::NeuralError;

pub const MAGIC: &[u8; 4] = b"LWGW";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset into the payload.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub config: ModelConfig,
    pub tensors: Vec<TensorEntry>,
}

/// Header plus checksum status, for inspection without full validation.
#[derive(Debug, Clone)]
pub struct WeightFileSummary {
    pub version: u32,
    pub header: Header,
    pub stored_crc: Option<u32>,
    pub computed_crc: u32,
}

impl WeightFileSummary {
    pub fn crc_ok(&self) -> bool {
        self.stored_crc == Some(self.computed_crc)
    }
}

pub fn encode_weights(weights: &ModelWeights) -> Vec<u8> {
    let mut tensors = Vec::new();
    let mut offset = 0;
    for (name, shape) in weights.params.directory() {
        let len: usize = shape.iter().product();
        tensors.push(TensorEntry {
            name,
            shape,
            offset,
        });
        offset += len * 8;
    }
    let header = serde_json::to_vec(&Header {
        config: weights.config.clone(),
        tensors,
    })
    .expect("header serializes");

    let mut payload = Vec::with_capacity(offset);
    for s in weights.params.slices() {
        for v in s {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }

    let mut out = Vec::with_capacity(16 + header.len() + payload.len() + 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&payload);
    out.extend_from_slice(&crc32fast::hash(&payload).to_le_bytes());
    out
}

/// Version, header, payload and stored checksum (absent if the tail is the wrong length).
type Sections<'a> = (u32, Header, &'a [u8], Option<u32>);

fn split(bytes: &[u8]) -> Result<Sections<'_>, NeuralError> {
    if bytes.len() < 16 || &bytes[..4] != MAGIC {
        return Err(NeuralError::Format("not a weight file (bad magic)".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(NeuralError::Version {
            found: version,
            supported: FORMAT_VERSION,
        });
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let header_end = 16usize
        .checked_add(header_len)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| NeuralError::Format("header length exceeds file size".into()))?;
    let header: Header = serde_json::from_slice(&bytes[16..header_end])
        .map_err(|e| NeuralError::Format(format!("header: {e}")))?;

    let payload_len: usize = header
        .tensors
        .iter()
        .map(|t| t.shape.iter().product::<usize>() * 8)
        .sum();
    let rest = &bytes[header_end..];
    let payload = &rest[..payload_len.min(rest.len())];
    let stored = (rest.len() == payload_len + 4)
        .then(|| u32::from_le_bytes(rest[payload_len..].try_into().expect("4 bytes")));
    Ok((version, header, payload, stored))
}

/// Reads the header and checksum without building the model.
pub fn summarize_weights(bytes: &[u8]) -> Result<WeightFileSummary, NeuralError> {
    let (version, header, payload, stored_crc) = split(bytes)?;
    Ok(WeightFileSummary {
        version,
        header,
        stored_crc,
        computed_crc: crc32fast::hash(payload),
    })
}

pub fn decode_weights(bytes: &[u8]) -> Result<ModelWeights, NeuralError> {
    let (_, header, payload, stored) = split(bytes)?;
    let computed = crc32fast::hash(payload);
    match stored {
        None => {
            return Err(NeuralError::Checksum(
                "payload truncated or padded; checksum missing".into(),
            ))
        }
        Some(crc) if crc != computed => {
            return Err(NeuralError::Checksum(format!(
                "stored crc {crc:08x}, computed {computed:08x}"
            )))
        }
        Some(_) => {}
    }

    let config = header.config;
    config.validate()?;
    let mut params = Parameters::zeros(&config);
    let expected = params.directory();
    if expected.len() != header.tensors.len() {
        return Err(NeuralError::Shape {
            tensor: "tensor directory".into(),
            expected: vec![expected.len()],
            found: vec![header.tensors.len()],
        });
    }
    for ((name, shape), entry) in expected.iter().zip(&header.tensors) {
        if *name != entry.name || *shape != entry.shape {
            return Err(NeuralError::Shape {
                tensor: format!("{} (stored as {})", name, entry.name),
                expected: shape.clone(),
                found: entry.shape.clone(),
            });
        }
    }
    for (dst, entry) in params.slices_mut().into_iter().zip(&header.tensors) {
        let bytes = payload
            .get(entry.offset..entry.offset + dst.len() * 8)
            .ok_or_else(|| NeuralError::Format(format!("{} lies outside the payload", entry.name)))?;
        for (d, chunk) in dst.iter_mut().zip(bytes.chunks_exact(8)) {
            *d = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
        }
    }
    let weights = ModelWeights { config, params };
    weights.validate()?;
    Ok(weights)
}

pub fn save_weights(weights: &ModelWeights, path: impl AsRef<Path>) -> Result<(), NeuralError> {
    fs::write(path, encode_weights(weights))?;
    Ok(())
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<ModelWeights, NeuralError> {
    decode_weights(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn weights() -> ModelWeights {
        ModelWeights::init(ModelConfig {
            layer_sizes: vec![3, 2],
            dropout_rate: 0.1,
            sequence_length: 2,
            vocab_size: 4,
            rng_seed: 5,
        })
        .unwrap()
    }

    #[test]
    fn bitwise_round_trip() {
        let w = weights();
        let back = decode_weights(&encode_weights(&w)).unwrap();
        for (a, b) in w.params.slices().iter().zip(back.params.slices()) {
            assert!(a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        assert_eq!(back, w);
    }

    #[test]
    fn truncation_is_a_checksum_error() {
        let mut bytes = encode_weights(&weights());
        bytes.pop();
        assert!(matches!(decode_weights(&bytes), Err(NeuralError::Checksum(_))));
    }

    #[test]
    fn version_and_magic() {
        let mut bytes = encode_weights(&weights());
        bytes[4] = 9;
        assert!(matches!(
            decode_weights(&bytes),
            Err(NeuralError::Version { found: 9, .. })
        ));
        bytes[0] = b'X';
        assert!(matches!(decode_weights(&bytes), Err(NeuralError::Format(_))));
    }

    #[test]
    fn header_shape_tampering() {
        let w = weights();
        let bytes = encode_weights(&w);
        let find = |needle: &[u8]| bytes.windows(needle.len()).position(|w| w == needle);
        assert!(find(b"\"dense.b\",\"shape\":[4]").is_some());
        // Same-length edit so offsets stay valid: claim a vocabulary of 5.
        let mut tampered = bytes.clone();
        let at = find(b"\"vocab_size\":4").unwrap() + b"\"vocab_size\":".len();
        tampered[at] = b'5';
        let r = decode_weights(&tampered);
        assert!(matches!(r, Err(NeuralError::Shape { .. })), "{r:?}");
    }

    #[test]
    fn summary_reports_crc() {
        let bytes = encode_weights(&weights());
        let s = summarize_weights(&bytes).unwrap();
        assert!(s.crc_ok());
        assert_eq!(s.header.tensors.len(), 2 * 12 + 2);
    }
}
