//! Checkpoint file layout:
//!
//! ```text
//! magic      8 bytes   b"RNAIFCK1"
//! hlen       u64 LE    length of the JSON header
//! header     hlen bytes of UTF-8 JSON
//! params     f64 LE    every parameter, manifest order, row-major
//! m, v       f64 LE    Adam moments in the same order (if header.optimizer)
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Model, ModelConfig, ParamStore};
use crate::tensor::Tensor;
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"RNAIFCK1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    seed: u64,
    epoch: usize,
    num_parameters: usize,
    manifest: Vec<ManifestEntry>,
    optimizer_step: Option<u64>,
    #[serde(default)]
    extra: serde_json::Value,
}

/// Adam moment buffers flattened in manifest order.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerMoments {
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub seed: u64,
    pub epoch: usize,
    pub params: ParamStore,
    pub optimizer: Option<OptimizerMoments>,
    /// Free-form training state (scheduler, history, rng position).
    pub extra: serde_json::Value,
}

fn write_f64s(w: &mut impl Write, xs: &[f64]) -> Result<()> {
    for x in xs {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

fn read_f64s(r: &mut impl Read, n: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf)
        .map_err(|e| Error::Checkpoint(format!("truncated parameter block: {e}")))?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}

impl Checkpoint {
    pub fn from_model(model: &Model, seed: u64, epoch: usize) -> Self {
        Self {
            config: model.config.clone(),
            seed,
            epoch,
            params: model.params.clone(),
            optimizer: None,
            extra: serde_json::Value::Null,
        }
    }

    pub fn into_model(self) -> Result<Model> {
        Model::from_params(self.config, self.params)
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        let total = self.params.num_scalars();
        if let Some(opt) = &self.optimizer {
            if opt.m.len() != total || opt.v.len() != total {
                return Err(Error::Checkpoint("optimizer moments do not match parameters".into()));
            }
        }
        let header = Header {
            config: self.config.clone(),
            seed: self.seed,
            epoch: self.epoch,
            num_parameters: total,
            manifest: self
                .params
                .iter()
                .map(|(name, t)| ManifestEntry {
                    name: name.to_string(),
                    shape: t.shape().to_vec(),
                })
                .collect(),
            optimizer_step: self.optimizer.as_ref().map(|o| o.step),
            extra: self.extra.clone(),
        };
        let json = serde_json::to_vec(&header)?;
        w.write_all(MAGIC)?;
        w.write_all(&(json.len() as u64).to_le_bytes())?;
        w.write_all(&json)?;
        write_f64s(w, &self.params.flatten())?;
        if let Some(opt) = &self.optimizer {
            write_f64s(w, &opt.m)?;
            write_f64s(w, &opt.v)?;
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)
            .map_err(|_| Error::Checkpoint("file too short for a checkpoint".into()))?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file".into()));
        }
        let mut len = [0u8; 8];
        r.read_exact(&mut len)?;
        let len = u64::from_le_bytes(len) as usize;
        if len > 1 << 30 {
            return Err(Error::Checkpoint(format!("implausible header length {len}")));
        }
        let mut json = vec![0u8; len];
        r.read_exact(&mut json)?;
        let header: Header = serde_json::from_slice(&json)?;
        let mut params = ParamStore::default();
        for entry in &header.manifest {
            let n = entry.shape.iter().product();
            let data = read_f64s(r, n)?;
            params.push(entry.name.clone(), Tensor::new(entry.shape.clone(), data)?);
        }
        if params.num_scalars() != header.num_parameters {
            return Err(Error::Checkpoint("manifest does not match parameter count".into()));
        }
        let optimizer = match header.optimizer_step {
            Some(step) => Some(OptimizerMoments {
                step,
                m: read_f64s(r, header.num_parameters)?,
                v: read_f64s(r, header.num_parameters)?,
            }),
            None => None,
        };
        Ok(Self {
            config: header.config,
            seed: header.seed,
            epoch: header.epoch,
            params,
            optimizer,
            extra: header.extra,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(&mut BufReader::new(File::open(path)?))
    }
}
