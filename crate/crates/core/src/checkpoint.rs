//! Versioned checkpoint container.
//!
//! JSON with a fixed field order and shortest-round-trip float formatting,
//! so `save -> load -> save` reproduces the file byte for byte. Writes go
//! through a temp file in the target directory followed by a rename.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::compress::Mask;
use crate::data::{InputEncoding, PreprocConfig};
use crate::error::{Error, Result};
use crate::eval::DecodeRule;
use crate::matrix::Matrix;
use crate::snn::{LayerWeights, Network, NetworkTopology};

pub const CHECKPOINT_VERSION: u32 = 1;

/// Where in the pipeline a checkpoint was taken.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageMeta {
    pub stage_index: usize,
    pub stage_name: String,
    pub best_epoch: Option<usize>,
    pub best_accuracy: Option<f64>,
}

/// Self-describing training snapshot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub profile: String,
    pub topology: NetworkTopology,
    /// Latent full-precision weights.
    pub latent: Vec<Matrix>,
    /// Keep/drop bits per layer.
    pub masks: Vec<Mask>,
    /// Committed ternary weights per layer; `None` for layers still in
    /// latent mode.
    pub ternary: Vec<Option<Matrix>>,
    /// Resolved quantizer threshold per layer at snapshot time.
    pub theta: Vec<Option<f64>>,
    /// Original digits of the class indices.
    pub class_digits: Vec<u8>,
    pub preproc: PreprocConfig,
    pub eval_encoding: InputEncoding,
    pub decode: DecodeRule,
    pub master_seed: u64,
    pub stage: StageMeta,
}

impl Checkpoint {
    /// The network the checkpoint evaluates as: ternary where committed,
    /// masked latent elsewhere.
    pub fn effective_network(&self) -> Result<Network> {
        let mut layers = Vec::with_capacity(self.latent.len());
        for (l, latent) in self.latent.iter().enumerate() {
            match &self.ternary[l] {
                Some(t) => layers.push(LayerWeights::ternary(t.clone())?),
                None => {
                    let mut m = latent.clone();
                    self.masks[l].apply(&mut m);
                    layers.push(LayerWeights::latent(m));
                }
            }
        }
        Network::new(self.topology.clone(), layers)
    }

    /// Fully ternary network, failing if any layer is uncommitted.
    pub fn ternary_network(&self) -> Result<Network> {
        let mut layers = Vec::with_capacity(self.latent.len());
        for (l, t) in self.ternary.iter().enumerate() {
            match t {
                Some(m) => layers.push(LayerWeights::ternary(m.clone())?),
                None => {
                    return Err(Error::Config(format!(
                        "layer {l} is not quantized; run the compression stages first"
                    )))
                }
            }
        }
        Network::new(self.topology.clone(), layers)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        let dir = path.parent().unwrap_or_else(|| Path::new("."));
        fs::create_dir_all(dir)?;
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, json.as_bytes())?;
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)
            .map_err(|e| Error::Data(format!("cannot read checkpoint {}: {e}", path.display())))?;
        let ckpt: Checkpoint = serde_json::from_slice(&bytes)?;
        if ckpt.format_version != CHECKPOINT_VERSION {
            return Err(Error::Config(format!(
                "checkpoint format {} unsupported (expected {CHECKPOINT_VERSION})",
                ckpt.format_version
            )));
        }
        Ok(ckpt)
    }
}
