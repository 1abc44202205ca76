//! Fusion head: optional re-id encoder, concatenation with auxiliary
//! blocks, optional per-dimension attention, and an identity classifier
//! trained with softmax cross-entropy.
//!
//! ```text
//! Θ*  = [enc(reid), aux]
//! α   = A Θ* + b          (attention mode)
//! β   = softmax(α)
//! Θ̃   = Θ* ⊙ β
//! z   = Θ̃ (attention) | Θ* (concat)
//! p   = softmax(W z + c)
//! ```

mod checkpoint;
mod model;
mod params;

pub use checkpoint::{load_checkpoint, save_checkpoint, TensorEntry, MODEL_F32, MODEL_JSON};
pub use model::{ForwardTrace, FusionModel, HeadOutput};
pub use params::{AttentionParams, EncoderParams, FusionParams};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::store::{BlockSchema, Dataset, REID};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionMode {
    Concat,
    Attention,
}

impl FusionMode {
    pub fn as_str(self) -> &'static str {
        match self {
            FusionMode::Concat => "concat",
            FusionMode::Attention => "attention",
        }
    }
}

impl std::fmt::Display for FusionMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for FusionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "concat" => Ok(FusionMode::Concat),
            "attention" | "att" => Ok(FusionMode::Attention),
            other => Err(Error::InvalidConfig(format!("unknown fusion mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FusionConfig {
    pub mode: FusionMode,
    #[serde(default)]
    pub aux_selection: Vec<String>,
    /// Width of the rectified hidden layer of the re-id encoder; 0 means
    /// the raw re-id block is used as is.
    #[serde(default)]
    pub encoder_hidden: usize,
    #[serde(default = "default_true")]
    pub attention_bias: bool,
}

fn default_true() -> bool {
    true
}

impl FusionConfig {
    pub fn new(mode: FusionMode, aux_selection: Vec<String>) -> Self {
        Self {
            mode,
            aux_selection,
            encoder_hidden: 0,
            attention_bias: true,
        }
    }
}

/// Dimensions the parameters are built for.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FusionLayout {
    pub reid_dim: usize,
    pub aux: Vec<BlockSchema>,
    pub num_classes: usize,
}

impl FusionLayout {
    pub fn from_dataset(dataset: &Dataset, config: &FusionConfig, num_classes: usize) -> Result<Self> {
        let reid_dim = dataset.block_dim(REID)?;
        let aux = config
            .aux_selection
            .iter()
            .map(|name| {
                if name == REID {
                    return Err(Error::InvalidConfig(
                        "the reid block cannot be part of the auxiliary selection".into(),
                    ));
                }
                dataset.block_schema(name).cloned()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            reid_dim,
            aux,
            num_classes,
        })
    }

    pub fn aux_dim(&self) -> usize {
        self.aux.iter().map(|b| b.dim).sum()
    }

    /// Dimensionality `d` of Θ*.
    pub fn fused_dim(&self) -> usize {
        self.reid_dim + self.aux_dim()
    }

    /// `(block name, start, end)` of each segment of Θ*, re-id first.
    pub fn segments(&self) -> Vec<(String, usize, usize)> {
        let mut out = vec![(REID.to_string(), 0, self.reid_dim)];
        let mut start = self.reid_dim;
        for b in &self.aux {
            out.push((b.name.clone(), start, start + b.dim));
            start += b.dim;
        }
        out
    }
}
