//! Versioned binary container for trained networks.
//!
//! Layout (all integers little-endian):
//!
//! | bytes        | content                                   |
//! |--------------|-------------------------------------------|
//! | `0..8`       | magic `CPWLCKPT`                          |
//! | `8..12`      | `u32` format version (currently 1)        |
//! | `12..20`     | `u64` header length `H`                   |
//! | `20..20+H`   | UTF-8 JSON header                         |
//! | rest         | weight blob, `f64` little-endian          |
//!
//! The header lists every network by name with its layer shapes, activations
//! and blob offsets (in `f64` units); each layer stores its weight row-major
//! followed by its bias. A free-form `meta` object carries model-specific
//! settings such as a diffusion schedule.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

use super::{Activation, CpwlNetwork, Layer};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"CPWLCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub networks: Vec<(String, CpwlNetwork<f64>)>,
    pub meta: serde_json::Value,
}

impl Checkpoint {
    pub fn network(&self, name: &str) -> Result<&CpwlNetwork<f64>> {
        self.networks
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, net)| net)
            .ok_or_else(|| Error::Format(format!("checkpoint has no network named '{name}'")))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut blob: Vec<f64> = Vec::new();
        let mut nets = Vec::with_capacity(self.networks.len());
        for (name, net) in &self.networks {
            let mut layers = Vec::new();
            for l in net.layers() {
                let (activation, slope) = match l.activation {
                    Activation::Relu => ("relu", None),
                    Activation::LeakyRelu(a) => ("leaky_relu", Some(a)),
                    Activation::Identity => ("identity", None),
                };
                layers.push(LayerHeader {
                    rows: l.weight.rows(),
                    cols: l.weight.cols(),
                    activation: activation.to_string(),
                    slope,
                    offset: blob.len(),
                });
                blob.extend_from_slice(l.weight.as_slice());
                blob.extend_from_slice(&l.bias);
            }
            nets.push(NetworkHeader {
                name: name.clone(),
                input_dim: net.input_dim(),
                output_dim: net.output_dim(),
                layers,
            });
        }
        let header = Header {
            format: "cpwl-checkpoint".into(),
            version: CHECKPOINT_VERSION,
            dtype: "f64le".into(),
            blob_len: blob.len(),
            networks: nets,
            meta: self.meta.clone(),
        };
        let header = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(20 + header.len() + 8 * blob.len());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for x in blob {
            out.extend_from_slice(&x.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 20 || &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(Error::Format("missing CPWLCKPT magic".into()));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let hlen = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        let body = bytes
            .get(20..20 + hlen)
            .ok_or_else(|| Error::Format("truncated header".into()))?;
        let header: Header = serde_json::from_slice(body)?;
        let raw = &bytes[20 + hlen..];
        if raw.len() != 8 * header.blob_len {
            return Err(Error::Format(format!(
                "blob holds {} bytes, header declares {} f64 values",
                raw.len(),
                header.blob_len
            )));
        }
        let blob: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let mut networks = Vec::with_capacity(header.networks.len());
        for nh in header.networks {
            let mut layers = Vec::with_capacity(nh.layers.len());
            for lh in nh.layers {
                let end = lh.offset + lh.rows * lh.cols + lh.rows;
                let data = blob
                    .get(lh.offset..end)
                    .ok_or_else(|| Error::Format("layer exceeds blob".into()))?;
                let (w, b) = data.split_at(lh.rows * lh.cols);
                let activation = match (lh.activation.as_str(), lh.slope) {
                    ("relu", _) => Activation::Relu,
                    ("identity", _) => Activation::Identity,
                    ("leaky_relu", Some(a)) => Activation::LeakyRelu(a),
                    ("leaky_relu", None) => Activation::leaky_default(),
                    (other, _) => return Err(Error::Format(format!("unknown activation '{other}'"))),
                };
                layers.push(Layer::new(Matrix::from_vec(lh.rows, lh.cols, w.to_vec())?, b.to_vec(), activation)?);
            }
            networks.push((nh.name, CpwlNetwork::new(layers)?));
        }
        Ok(Checkpoint {
            networks,
            meta: header.meta,
        })
    }
}

pub fn write_checkpoint(path: impl AsRef<Path>, ckpt: &Checkpoint) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&ckpt.to_bytes()?)?;
    Ok(())
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    Checkpoint::from_bytes(&bytes)
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    dtype: String,
    blob_len: usize,
    networks: Vec<NetworkHeader>,
    meta: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
struct NetworkHeader {
    name: String,
    input_dim: usize,
    output_dim: usize,
    layers: Vec<LayerHeader>,
}

#[derive(Serialize, Deserialize)]
struct LayerHeader {
    rows: usize,
    cols: usize,
    activation: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    slope: Option<f64>,
    offset: usize,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{mlp, MlpSpec};

    #[test]
    fn roundtrip_preserves_networks_exactly() {
        let spec = MlpSpec {
            input_dim: 3,
            hidden: vec![5, 4],
            output_dim: 2,
            activation: Activation::LeakyRelu(0.2),
            init: crate::net::Init::He { bias_std: 0.1 },
        };
        let ckpt = Checkpoint {
            networks: vec![("a".into(), mlp(&spec, 3).unwrap()), ("b".into(), mlp(&spec, 4).unwrap())],
            meta: serde_json::json!({"kind": "test", "t": 50}),
        };
        let bytes = ckpt.to_bytes().unwrap();
        assert_eq!(&bytes[..8], CHECKPOINT_MAGIC);
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, ckpt);
        assert_eq!(back.to_bytes().unwrap(), bytes);
    }

    #[test]
    fn rejects_corruption() {
        assert!(Checkpoint::from_bytes(b"NOTACKPT00000000000000").is_err());
        let ckpt = Checkpoint {
            networks: vec![("n".into(), CpwlNetwork::linear(Matrix::identity(2), vec![0.0; 2]).unwrap())],
            meta: serde_json::Value::Null,
        };
        let mut bytes = ckpt.to_bytes().unwrap();
        bytes.pop();
        assert!(Checkpoint::from_bytes(&bytes).is_err());
    }
}
