//! Checkpoint container:
//!
//! ```text
//! "RVFC" | u32 version (LE) | u64 header length (LE) | JSON header | RVFT tensor × n
//! ```
//!
//! The header echoes the model config, the step count, the loss trace and
//! the tensor names in file order.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::ParamStore;
use crate::tensor::Tensor;

use super::config::ModelConfig;
use super::model::Model;

const MAGIC: &[u8; 4] = b"RVFC";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub step: usize,
    pub loss_trace: Vec<f64>,
    pub params: ParamStore,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    config: ModelConfig,
    step: usize,
    loss_trace: Vec<f64>,
    tensors: Vec<String>,
}

impl Checkpoint {
    pub fn new(config: ModelConfig, params: ParamStore) -> Self {
        Checkpoint {
            config,
            step: 0,
            loss_trace: Vec::new(),
            params,
        }
    }

    /// Fresh model with its initialization.
    pub fn init(config: &ModelConfig) -> Result<(Model, Checkpoint)> {
        let (m, store) = Model::init(config)?;
        Ok((m, Checkpoint::new(config.clone(), store)))
    }

    /// Rebuilds the layers and checks every parameter is present with the right shape.
    pub fn model(&self) -> Result<Model> {
        let (m, reference) = Model::init(&self.config)?;
        for (name, t) in reference.iter() {
            let have = self.params.get(name)?;
            if have.shape() != t.shape() {
                return Err(Error::dim("checkpoint tensor", have.shape(), t.shape()));
            }
        }
        if reference.len() != self.params.len() {
            return Err(Error::Format(format!(
                "checkpoint has {} tensors, model expects {}",
                self.params.len(),
                reference.len()
            )));
        }
        Ok(m)
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        let header = Header {
            config: self.config.clone(),
            step: self.step,
            loss_trace: self.loss_trace.clone(),
            tensors: self.params.names().cloned().collect(),
        };
        let json = serde_json::to_vec(&header).map_err(|e| Error::Format(e.to_string()))?;
        let mut buf = Vec::with_capacity(json.len() + 16);
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
        buf.extend_from_slice(&json);
        for (_, t) in self.params.iter() {
            buf.extend_from_slice(&t.to_rvft_bytes());
        }
        out.write_all(&buf)
            .map_err(|e| Error::Format(e.to_string()))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut v = Vec::new();
        self.write(&mut v).expect("writing to a Vec cannot fail");
        v
    }

    pub fn read<R: Read>(mut input: R) -> Result<Self> {
        let bad = |m: &str| Error::Format(format!("checkpoint: {m}"));
        let mut fixed = [0u8; 16];
        input
            .read_exact(&mut fixed)
            .map_err(|_| bad("truncated preamble"))?;
        if &fixed[..4] != MAGIC {
            return Err(bad("bad magic"));
        }
        let version = u32::from_le_bytes(fixed[4..8].try_into().unwrap());
        if version != VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let len = u64::from_le_bytes(fixed[8..16].try_into().unwrap());
        if len > 1 << 30 {
            return Err(bad("header too large"));
        }
        let mut json = vec![0u8; len as usize];
        input
            .read_exact(&mut json)
            .map_err(|_| bad("truncated header"))?;
        let header: Header = serde_json::from_slice(&json).map_err(|e| bad(&e.to_string()))?;
        header.config.validate()?;
        let mut params = ParamStore::new();
        for name in header.tensors {
            let t = Tensor::read_rvft(&mut input)?;
            params.insert(name, t);
        }
        let mut rest = [0u8; 1];
        if input.read(&mut rest).map_err(|e| bad(&e.to_string()))? != 0 {
            return Err(bad("trailing bytes"));
        }
        Ok(Checkpoint {
            config: header.config,
            step: header.step,
            loss_trace: header.loss_trace,
            params,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::read(&bytes[..])
    }
}
