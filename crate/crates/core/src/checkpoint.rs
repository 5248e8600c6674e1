//! Binary checkpoint container: a JSON header followed by named f64 arrays.
//!
//! Layout: magic `MTSTCKPT`, u32 format version, u64 header length, the
//! header bytes, then every array as little-endian f64 in header order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::params::{ModelParams, Tensor};

const MAGIC: &[u8; 8] = b"MTSTCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ArrayMeta {
    name: String,
    len: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    meta: Value,
    arrays: Vec<ArrayMeta>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub meta: Value,
    pub arrays: Vec<(String, Vec<f64>)>,
}

impl Checkpoint {
    pub fn new(meta: Value) -> Self {
        Self {
            meta,
            arrays: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, data: Vec<f64>) {
        self.arrays.push((name.into(), data));
    }

    /// Removes and returns the next array, checking its name.
    pub fn take(&mut self, name: &str) -> Result<Vec<f64>> {
        if self.arrays.is_empty() || self.arrays[0].0 != name {
            return Err(Error::Checkpoint(format!("expected array `{name}`")));
        }
        Ok(self.arrays.remove(0).1)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let header = Header {
            meta: self.meta.clone(),
            arrays: self
                .arrays
                .iter()
                .map(|(name, d)| ArrayMeta {
                    name: name.clone(),
                    len: d.len(),
                })
                .collect(),
        };
        let header = serde_json::to_vec(&header)?;
        let tmp = path.with_extension("tmp");
        let file = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(&tmp, e);
        w.write_all(MAGIC).map_err(io)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes()).map_err(io)?;
        w.write_all(&(header.len() as u64).to_le_bytes()).map_err(io)?;
        w.write_all(&header).map_err(io)?;
        for (_, data) in &self.arrays {
            for v in data {
                w.write_all(&v.to_le_bytes()).map_err(io)?;
            }
        }
        w.flush().map_err(io)?;
        drop(w);
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = BufReader::new(file);
        let bad = |what: &str| Error::Checkpoint(format!("{}: {what}", path.display()));
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|_| bad("truncated"))?;
        if &magic != MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4).map_err(|_| bad("truncated"))?;
        let version = u32::from_le_bytes(b4);
        if version != CHECKPOINT_VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8).map_err(|_| bad("truncated"))?;
        let mut header = vec![0u8; u64::from_le_bytes(b8) as usize];
        r.read_exact(&mut header).map_err(|_| bad("truncated header"))?;
        let header: Header = serde_json::from_slice(&header)?;
        let mut arrays = Vec::with_capacity(header.arrays.len());
        for a in header.arrays {
            let mut data = Vec::with_capacity(a.len);
            for _ in 0..a.len {
                r.read_exact(&mut b8).map_err(|_| bad("truncated data"))?;
                data.push(f64::from_le_bytes(b8));
            }
            arrays.push((a.name, data));
        }
        if r.read(&mut b8).map_err(|e| Error::io(path, e))? != 0 {
            return Err(bad("trailing bytes"));
        }
        Ok(Self {
            meta: header.meta,
            arrays,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TensorMeta {
    name: String,
    rows: usize,
    cols: usize,
    decay: bool,
}

/// Appends every parameter tensor under `prefix` and returns the metadata
/// needed to rebuild them.
pub fn push_params(ck: &mut Checkpoint, prefix: &str, params: &ModelParams) -> Value {
    let meta: Vec<TensorMeta> = params
        .tensors
        .iter()
        .map(|t| {
            ck.push(format!("{prefix}{}", t.name), t.data.clone());
            TensorMeta {
                name: t.name.clone(),
                rows: t.rows,
                cols: t.cols,
                decay: t.decay,
            }
        })
        .collect();
    serde_json::to_value(meta).expect("tensor metadata serializes")
}

pub fn take_params(ck: &mut Checkpoint, prefix: &str, config: &ModelConfig, meta: &Value) -> Result<ModelParams> {
    let meta: Vec<TensorMeta> = serde_json::from_value(meta.clone())?;
    let mut tensors = Vec::with_capacity(meta.len());
    for m in meta {
        let data = ck.take(&format!("{prefix}{}", m.name))?;
        tensors.push(Tensor {
            name: m.name,
            rows: m.rows,
            cols: m.cols,
            data,
            decay: m.decay,
        });
    }
    ModelParams::from_tensors(config, tensors)
}

/// Saves a bare model (config plus parameters).
pub fn save_model(path: &Path, params: &ModelParams) -> Result<()> {
    let mut ck = Checkpoint::default();
    let tensors = push_params(&mut ck, "", params);
    ck.meta = serde_json::json!({
        "kind": "model",
        "config": params.config,
        "tensors": tensors,
    });
    ck.write(path)
}

pub fn load_model(path: &Path) -> Result<ModelParams> {
    let mut ck = Checkpoint::read(path)?;
    model_from_checkpoint(&mut ck)
}

/// Reads the `config` and `tensors` header fields and the unprefixed arrays.
pub fn model_from_checkpoint(ck: &mut Checkpoint) -> Result<ModelParams> {
    let config: ModelConfig = serde_json::from_value(ck.meta["config"].clone())?;
    let meta = ck.meta["tensors"].clone();
    take_params(ck, "", &config, &meta)
}

/// Exact position of a ChaCha stream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    /// u128 word position as a decimal string.
    pub word_pos: String,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        Self {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos().to_string(),
        }
    }

    pub fn restore(&self) -> Result<ChaCha8Rng> {
        use rand::SeedableRng;
        let pos: u128 = self
            .word_pos
            .parse()
            .map_err(|_| Error::Checkpoint(format!("bad rng word position `{}`", self.word_pos)))?;
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(pos);
        Ok(rng)
    }
}
