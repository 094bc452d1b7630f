use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::adam::AdamState;
use super::{Model, TrainConfig};
use crate::dataset::Charset;
use crate::error::{Error, Result};
use crate::network::{NetworkConfig, Parameters, Tensor};

pub const MAGIC: &[u8; 8] = b"OCRFCKPT";
pub const FORMAT_VERSION: u32 = 1;

/// Trained model plus everything needed to resume or audit training.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub adam: AdamState,
    pub train: TrainConfig,
    /// Epochs completed when this snapshot was taken.
    pub epoch: usize,
    pub best_val_loss: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct ArrayEntry {
    name: String,
    shape: Vec<usize>,
    /// Byte offset into the data section.
    offset: u64,
}

#[derive(Serialize, Deserialize)]
struct Header {
    version: u32,
    network: NetworkConfig,
    train: TrainConfig,
    charset: Charset,
    epoch: usize,
    best_val_loss: Option<f64>,
    adam_step: u64,
    arrays: Vec<ArrayEntry>,
}

fn sections(ck: &Checkpoint) -> Vec<(String, &Tensor)> {
    let mut out = ck.model.params.arrays();
    out.extend(ck.adam.m.arrays().into_iter().map(|(n, t)| (format!("adam.m.{n}"), t)));
    out.extend(ck.adam.v.arrays().into_iter().map(|(n, t)| (format!("adam.v.{n}"), t)));
    out
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let arrays = sections(self);
        let mut offset = 0u64;
        let table = arrays
            .iter()
            .map(|(name, t)| {
                let e = ArrayEntry {
                    name: name.clone(),
                    shape: t.shape().to_vec(),
                    offset,
                };
                offset += 8 * t.len() as u64;
                e
            })
            .collect();
        let header = Header {
            version: FORMAT_VERSION,
            network: self.model.config.clone(),
            train: self.train.clone(),
            charset: self.model.charset.clone(),
            epoch: self.epoch,
            best_val_loss: self.best_val_loss,
            adam_step: self.adam.step,
            arrays: table,
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(16 + json.len() + offset as usize);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, t) in &arrays {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(bad("missing OCRFCKPT magic"));
        }
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let data_start = 16usize
            .checked_add(hlen)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| bad("header length exceeds file size"))?;
        let header: Header = serde_json::from_slice(&bytes[16..data_start])
            .map_err(|e| Error::Checkpoint(format!("header: {e}")))?;
        if header.version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format version {}",
                header.version
            )));
        }
        header.network.validate()?;
        if header.charset.num_classes() != header.network.num_classes {
            return Err(Error::CharsetMismatch(format!(
                "charset has {} classes, network {}",
                header.charset.num_classes(),
                header.network.num_classes
            )));
        }
        let data = &bytes[data_start..];
        let params = Parameters::zeros(&header.network);
        let mut ck = Checkpoint {
            adam: AdamState {
                m: params.zeros_like(),
                v: params.zeros_like(),
                step: header.adam_step,
            },
            model: Model {
                params,
                config: header.network,
                charset: header.charset,
            },
            train: header.train,
            epoch: header.epoch,
            best_val_loss: header.best_val_loss,
        };
        let mut targets = ck.model.params.arrays_mut();
        targets.extend(ck.adam.m.arrays_mut().into_iter().map(|(n, t)| (format!("adam.m.{n}"), t)));
        targets.extend(ck.adam.v.arrays_mut().into_iter().map(|(n, t)| (format!("adam.v.{n}"), t)));
        if targets.len() != header.arrays.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} arrays, table lists {}",
                targets.len(),
                header.arrays.len()
            )));
        }
        let mut expected_offset = 0u64;
        for ((name, tensor), entry) in targets.into_iter().zip(&header.arrays) {
            if entry.name != name || entry.shape != tensor.shape() {
                return Err(Error::Checkpoint(format!(
                    "array {} {:?} does not match expected {name} {:?}",
                    entry.name,
                    entry.shape,
                    tensor.shape()
                )));
            }
            if entry.offset != expected_offset {
                return Err(Error::Checkpoint(format!("array {name}: bad offset {}", entry.offset)));
            }
            let start = entry.offset as usize;
            let end = start + 8 * tensor.len();
            if end > data.len() {
                return Err(Error::Checkpoint(format!("array {name} is truncated")));
            }
            for (v, chunk) in tensor.data_mut().iter_mut().zip(data[start..end].chunks_exact(8)) {
                *v = f64::from_le_bytes(chunk.try_into().unwrap());
            }
            expected_offset = end as u64;
        }
        if expected_offset as usize != data.len() {
            return Err(bad("trailing bytes after last array"));
        }
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Short content hash used to tie reports to the checkpoint they came from.
    pub fn id(&self) -> Result<String> {
        let digest = Sha256::digest(self.to_bytes()?);
        Ok(digest[..8].iter().map(|b| format!("{b:02x}")).collect())
    }
}
