//! Mini-batch Adam training of the fusion head with softmax cross-entropy.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{save_checkpoint, FusionConfig, FusionLayout, FusionMode, FusionModel};
use crate::jsonio::write_json;
use crate::numerics::{AdamConfig, AdamState, SeededRng};
use crate::store::{Dataset, FeatureRecord, Split};

pub const DEFAULT_EPOCHS: usize = 100;
pub const DEFAULT_LR: f64 = 3e-4;
pub const IMAGE_BATCH: usize = 32;
pub const VIDEO_BATCH: usize = 5;

/// Image datasets train with batches of 32, video datasets with 5.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    #[default]
    Image,
    Video,
}

impl Regime {
    pub fn default_batch_size(self) -> usize {
        match self {
            Regime::Image => IMAGE_BATCH,
            Regime::Video => VIDEO_BATCH,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub regime: Regime,
    /// Overrides the regime's batch size when set.
    pub batch_size: Option<usize>,
    pub seed: u64,
    pub mode: FusionMode,
    pub aux_selection: Vec<String>,
    pub encoder_hidden: usize,
    pub attention_bias: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: DEFAULT_EPOCHS,
            lr: DEFAULT_LR,
            regime: Regime::Image,
            batch_size: None,
            seed: 0,
            mode: FusionMode::Concat,
            aux_selection: Vec::new(),
            encoder_hidden: 0,
            attention_bias: true,
        }
    }
}

impl TrainConfig {
    pub fn effective_batch_size(&self) -> usize {
        self.batch_size.unwrap_or(self.regime.default_batch_size())
    }

    /// Copy with every optional value filled in, as echoed next to a
    /// checkpoint.
    pub fn resolved(&self) -> Self {
        Self {
            batch_size: Some(self.effective_batch_size()),
            ..self.clone()
        }
    }

    pub fn fusion(&self) -> FusionConfig {
        FusionConfig {
            mode: self.mode,
            aux_selection: self.aux_selection.clone(),
            encoder_hidden: self.encoder_hidden,
            attention_bias: self.attention_bias,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be ≥ 1".into()));
        }
        if self.effective_batch_size() == 0 {
            return Err(Error::InvalidConfig("batch_size must be ≥ 1".into()));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidConfig(format!("learning rate {}", self.lr)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    /// Mean per-sample loss of each epoch, measured before each batch's
    /// update.
    pub epoch_losses: Vec<f64>,
}

impl TrainHistory {
    pub fn final_loss(&self) -> Option<f64> {
        self.epoch_losses.last().copied()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,loss\n");
        for (e, l) in self.epoch_losses.iter().enumerate() {
            let _ = writeln!(out, "{},{}", e + 1, l);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: FusionModel,
    pub history: TrainHistory,
}

/// Record order for one epoch: a permutation from `SeededRng(seed ^ epoch)`
/// cut into `batch_size` chunks, keeping the short tail.
pub fn batch_iter(n: usize, batch_size: usize, epoch: usize, seed: u64) -> Vec<Vec<usize>> {
    assert!(batch_size >= 1, "batch_size must be ≥ 1");
    let mut rng = SeededRng::new(seed ^ epoch as u64);
    rng.permutation(n)
        .chunks(batch_size)
        .map(<[usize]>::to_vec)
        .collect()
}

/// Train records and their dense labels (train identities sorted ascending
/// and re-indexed from 0).
pub fn labelled_train_set(dataset: &Dataset) -> Result<(Vec<&FeatureRecord>, Vec<usize>, Vec<u64>)> {
    let records: Vec<&FeatureRecord> = dataset.split(Split::Train).collect();
    if records.is_empty() {
        return Err(Error::EmptySplit("no train records".into()));
    }
    let classes: Vec<u64> = records
        .iter()
        .map(|r| r.identity_id)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if classes.len() < 2 {
        return Err(Error::EmptySplit(format!(
            "train split has {} identity, need at least 2",
            classes.len()
        )));
    }
    let labels = records
        .iter()
        .map(|r| classes.binary_search(&r.identity_id).expect("collected above"))
        .collect();
    Ok((records, labels, classes))
}

fn init_seed(seed: u64) -> u64 {
    seed.rotate_left(32) ^ 0x9E37_79B9_7F4A_7C15
}

pub fn train_fusion(dataset: &Dataset, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let (records, labels, classes) = labelled_train_set(dataset)?;
    let fusion = config.fusion();
    let layout = FusionLayout::from_dataset(dataset, &fusion, classes.len())?;
    let mut model = FusionModel::with_classes(fusion, layout, classes, init_seed(config.seed));
    let mut adam = AdamState::for_params(AdamConfig::with_lr(config.lr), &model.params);
    let batch_size = config.effective_batch_size();

    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let mut total = 0.0;
        for (b, idx) in batch_iter(records.len(), batch_size, epoch, config.seed)
            .iter()
            .enumerate()
        {
            let batch: Vec<(&FeatureRecord, usize)> =
                idx.iter().map(|&i| (records[i], labels[i])).collect();
            let (loss, grads) = match model.loss_and_grad(&batch) {
                Ok(v) => v,
                Err(Error::NonFinite(_)) => {
                    return Err(Error::Diverged {
                        epoch,
                        batch: b,
                        loss: f64::NAN,
                    })
                }
                Err(e) => return Err(e),
            };
            total += loss * batch.len() as f64;
            adam.step(&mut model.params, &grads)?;
        }
        epoch_losses.push(total / records.len() as f64);
    }
    Ok(TrainOutcome {
        model,
        history: TrainHistory { epoch_losses },
    })
}

pub const HISTORY_CSV: &str = "history.csv";
pub const CONFIG_ECHO: &str = "config.json";

/// Writes the checkpoint, `history.csv` and the resolved config echo.
pub fn write_training_artifacts(dir: &Path, outcome: &TrainOutcome, config: &TrainConfig) -> Result<()> {
    save_checkpoint(&outcome.model, dir)?;
    let csv = dir.join(HISTORY_CSV);
    fs::write(&csv, outcome.history.to_csv()).map_err(|e| Error::io(&csv, e))?;
    write_json(&dir.join(CONFIG_ECHO), &config.resolved())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::{synth_generate, Signal, SynthBlock, SynthSpec};

    fn separable(train_fraction: f64) -> Dataset {
        synth_generate(
            &SynthSpec {
                identities: 10,
                cameras: 2,
                samples_per_identity: 32,
                noise: 0.05,
                blocks: vec![SynthBlock::new("reid", 32, Signal::Informative).with_scale(3.0)],
                train_fraction,
            },
            21,
        )
        .unwrap()
    }

    #[test]
    fn batches_partition_records() {
        let b = batch_iter(10, 3, 0, 5);
        assert_eq!(b.iter().map(Vec::len).collect::<Vec<_>>(), vec![3, 3, 3, 1]);
        let mut all: Vec<usize> = b.concat();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert_eq!(batch_iter(10, 3, 4, 5), batch_iter(10, 3, 4, 5));
        assert_ne!(batch_iter(10, 3, 4, 5), batch_iter(10, 3, 5, 5));
    }

    #[test]
    fn defaults_follow_recipe() {
        let c = TrainConfig::default();
        assert_eq!(c.epochs, 100);
        assert_eq!(c.lr, 0.0003);
        assert_eq!(c.effective_batch_size(), 32);
        let v = TrainConfig {
            regime: Regime::Video,
            ..Default::default()
        };
        assert_eq!(v.effective_batch_size(), 5);
        let parsed: TrainConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(parsed, c);
    }

    #[test]
    fn zero_epochs_rejected() {
        let cfg = TrainConfig {
            epochs: 0,
            ..Default::default()
        };
        assert!(matches!(
            train_fusion(&separable(1.0), &cfg),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn empty_train_split_rejected() {
        let mut ds = separable(1.0);
        ds.records.iter_mut().for_each(|r| r.split = Split::Gallery);
        assert!(matches!(
            train_fusion(&ds, &TrainConfig::default()),
            Err(Error::EmptySplit(_))
        ));
    }

    #[test]
    fn converges_on_separable_data() {
        let ds = separable(1.0);
        let cfg = TrainConfig {
            seed: 3,
            ..Default::default()
        };
        let out = train_fusion(&ds, &cfg).unwrap();
        assert_eq!(out.history.epoch_losses.len(), 100);
        let last = out.history.final_loss().unwrap();
        assert!(last < 0.1, "final loss {last}");
        let again = train_fusion(&ds, &cfg).unwrap();
        assert_eq!(
            out.history.epoch_losses.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
            again.history.epoch_losses.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn zero_lr_keeps_initialisation() {
        let ds = separable(1.0);
        let cfg = TrainConfig {
            lr: 0.0,
            epochs: 3,
            mode: FusionMode::Attention,
            encoder_hidden: 4,
            ..Default::default()
        };
        let out = train_fusion(&ds, &cfg).unwrap();
        let (_, _, classes) = labelled_train_set(&ds).unwrap();
        let fresh = FusionModel::with_classes(
            cfg.fusion(),
            FusionLayout::from_dataset(&ds, &cfg.fusion(), classes.len()).unwrap(),
            classes,
            init_seed(cfg.seed),
        );
        let bits = |m: &FusionModel| m.params.flatten().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&out.model), bits(&fresh));
    }

    #[test]
    fn single_batch_loss_mostly_decreases() {
        let ds = separable(1.0);
        let (records, labels, classes) = labelled_train_set(&ds).unwrap();
        let cfg = TrainConfig::default();
        let mut model = FusionModel::with_classes(
            cfg.fusion(),
            FusionLayout::from_dataset(&ds, &cfg.fusion(), classes.len()).unwrap(),
            classes,
            1,
        );
        let batch: Vec<(&FeatureRecord, usize)> = records.iter().copied().zip(labels).collect();
        let mut adam = AdamState::for_params(AdamConfig::with_lr(cfg.lr), &model.params);
        let mut losses = Vec::new();
        for _ in 0..6 {
            let (l, g) = model.loss_and_grad(&batch).unwrap();
            losses.push(l);
            adam.step(&mut model.params, &g).unwrap();
        }
        let increases = losses.windows(2).filter(|w| w[1] > w[0]).count();
        assert!(increases <= 1, "{losses:?}");
    }
}
