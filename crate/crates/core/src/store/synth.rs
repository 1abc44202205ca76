use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::schema::{BlockSchema, Dataset, FeatureRecord, Split};
use super::split::{split_random, SplitSpec};
use crate::error::{Error, Result};
use crate::numerics::SeededRng;

/// How a synthetic block's cluster centres relate to identities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Signal {
    /// One centre per identity.
    Informative,
    /// One centre shared by every identity.
    Uninformative,
    /// Identities `k·size .. (k+1)·size` share a centre, so the block cannot
    /// tell them apart.
    Grouped { size: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthBlock {
    pub name: String,
    pub dim: usize,
    #[serde(default = "default_signal")]
    pub signal: Signal,
    /// Standard deviation of the cluster centres.
    #[serde(default = "default_scale")]
    pub scale: f64,
}

fn default_signal() -> Signal {
    Signal::Informative
}

fn default_scale() -> f64 {
    1.0
}

impl SynthBlock {
    pub fn new(name: impl Into<String>, dim: usize, signal: Signal) -> Self {
        Self {
            name: name.into(),
            dim,
            signal,
            scale: 1.0,
        }
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub identities: usize,
    pub cameras: usize,
    pub samples_per_identity: usize,
    /// Per-coordinate noise standard deviation around the centre.
    pub noise: f64,
    pub blocks: Vec<SynthBlock>,
    /// Passed to [`split_random`]; `1.0` leaves every record in train.
    pub train_fraction: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            identities: 10,
            cameras: 2,
            samples_per_identity: 8,
            noise: 0.1,
            blocks: vec![SynthBlock::new("reid", 16, Signal::Informative)],
            train_fraction: 0.5,
        }
    }
}

/// Gaussian clusters per identity and block.
///
/// Sample `k` of an identity is seen by camera `k mod cameras`; sample ids
/// are `s<identity:04>_<k:04>`. Values are rounded to binary32 so a
/// save/load round trip reproduces the in-memory dataset exactly.
pub fn synth_generate(spec: &SynthSpec, seed: u64) -> Result<Dataset> {
    if spec.identities == 0 || spec.cameras == 0 || spec.samples_per_identity == 0 {
        return Err(Error::InvalidConfig(
            "identities, cameras and samples_per_identity must be positive".into(),
        ));
    }
    if spec.blocks.is_empty() || spec.blocks.iter().any(|b| b.dim == 0) {
        return Err(Error::InvalidConfig("every synthetic block needs dim ≥ 1".into()));
    }
    if !(spec.noise >= 0.0 && spec.noise.is_finite()) {
        return Err(Error::InvalidConfig(format!("noise {} must be ≥ 0", spec.noise)));
    }
    let mut rng = SeededRng::new(seed);

    let centres: Vec<Vec<Vec<f64>>> = spec
        .blocks
        .iter()
        .map(|b| {
            let groups = match b.signal {
                Signal::Informative => spec.identities,
                Signal::Uninformative => 1,
                Signal::Grouped { size } => spec.identities.div_ceil(size.max(1)),
            };
            (0..groups)
                .map(|_| (0..b.dim).map(|_| b.scale * rng.normal()).collect())
                .collect()
        })
        .collect();

    let mut records = Vec::with_capacity(spec.identities * spec.samples_per_identity);
    for id in 0..spec.identities {
        for k in 0..spec.samples_per_identity {
            let mut blocks = BTreeMap::new();
            for (b, block_centres) in spec.blocks.iter().zip(&centres) {
                let group = match b.signal {
                    Signal::Informative => id,
                    Signal::Uninformative => 0,
                    Signal::Grouped { size } => id / size.max(1),
                };
                let v = block_centres[group]
                    .iter()
                    .map(|c| (c + spec.noise * rng.normal()) as f32 as f64)
                    .collect();
                blocks.insert(b.name.clone(), v);
            }
            records.push(FeatureRecord {
                sample_id: format!("s{id:04}_{k:04}"),
                identity_id: id as u64,
                camera_id: (k % spec.cameras) as u64,
                split: Split::Train,
                blocks,
            });
        }
    }
    let schema = spec
        .blocks
        .iter()
        .map(|b| BlockSchema::new(b.name.clone(), b.dim))
        .collect();
    let ds = Dataset::new(schema, records)?;
    if spec.train_fraction < 1.0 {
        split_random(&ds, &SplitSpec::new(spec.train_fraction, seed))
    } else {
        Ok(ds)
    }
}
