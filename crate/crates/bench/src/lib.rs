//! Shared fixtures for the criterion benches.

use auxfuse::retrieval::RetrievalItem;
use auxfuse::store::{synth_generate, Signal, SynthBlock, SynthSpec};
use auxfuse::numerics::SeededRng;
use auxfuse::{Dataset, FusionConfig, FusionLayout, FusionMode, FusionModel};

/// Re-id descriptor width of the benchmark fixtures, matching OSNet's 512.
pub const REID_DIM: usize = 512;

/// A dataset with a 512-dim re-id block and two auxiliary blocks.
pub fn fusion_dataset(identities: usize, samples_per_identity: usize) -> Dataset {
    synth_generate(
        &SynthSpec {
            identities,
            cameras: 2,
            samples_per_identity,
            noise: 0.3,
            blocks: vec![
                SynthBlock::new("reid", REID_DIM, Signal::Informative),
                SynthBlock::new("age_gender", 32, Signal::Informative),
                SynthBlock::new("trajectory", 64, Signal::Uninformative),
            ],
            train_fraction: 1.0,
        },
        1,
    )
    .expect("fixture spec is valid")
}

pub fn fusion_model(dataset: &Dataset, mode: FusionMode, encoder_hidden: usize) -> FusionModel {
    let mut cfg = FusionConfig::new(mode, vec!["age_gender".into(), "trajectory".into()]);
    cfg.encoder_hidden = encoder_hidden;
    let layout = FusionLayout::from_dataset(dataset, &cfg, dataset.num_identities()).expect("blocks exist");
    FusionModel::new(cfg, layout, 7)
}

/// Random descriptors for `n` items over `identities` identities and two
/// cameras.
pub fn descriptors(prefix: &str, n: usize, identities: u64, dim: usize, seed: u64) -> Vec<(RetrievalItem, Vec<f64>)> {
    let mut rng = SeededRng::new(seed);
    (0..n)
        .map(|i| {
            let item = RetrievalItem {
                id: format!("{prefix}{i}"),
                identity: rng.below(identities),
                camera: rng.below(2),
            };
            (item, (0..dim).map(|_| rng.normal()).collect())
        })
        .collect()
}
