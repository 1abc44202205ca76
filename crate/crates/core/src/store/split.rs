use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::schema::{Dataset, Split};
use crate::error::{Error, Result};
use crate::numerics::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    #[default]
    ByIdentity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
    #[serde(default)]
    pub mode: SplitMode,
}

impl SplitSpec {
    pub fn new(train_fraction: f64, seed: u64) -> Self {
        Self {
            train_fraction,
            seed,
            mode: SplitMode::ByIdentity,
        }
    }
}

/// Re-assigns splits with an identity-disjoint train/test partition.
///
/// `round(train_fraction · C)` identities, chosen by a seeded permutation of
/// the sorted identity list, become train. Within each test identity the
/// first record per camera (by `sample_id`) is a query and the rest are
/// gallery. A test identity that would end up with no gallery record keeps
/// all its records in the gallery instead.
pub fn split_random(dataset: &Dataset, spec: &SplitSpec) -> Result<Dataset> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "train_fraction {} outside (0, 1]",
            spec.train_fraction
        )));
    }
    let identities: Vec<u64> = dataset
        .records
        .iter()
        .map(|r| r.identity_id)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if identities.len() < 2 {
        return Err(Error::InvalidDataset(format!(
            "splitting needs at least 2 identities, found {}",
            identities.len()
        )));
    }
    let n = identities.len();
    let n_train = (spec.train_fraction * n as f64).round() as usize;
    if n_train == 0 || (n_train >= n && spec.train_fraction < 1.0) {
        return Err(Error::EmptySplit(format!(
            "train_fraction {} over {n} identities leaves an empty side",
            spec.train_fraction
        )));
    }
    let n_train = n_train.min(n);

    let mut rng = SeededRng::new(spec.seed);
    let order = rng.permutation(n);
    let train: BTreeSet<u64> = order[..n_train].iter().map(|&i| identities[i]).collect();

    let mut out = dataset.clone();
    // (identity, camera) -> record indices sorted by sample id
    let mut groups: BTreeMap<u64, BTreeMap<u64, Vec<usize>>> = BTreeMap::new();
    for (i, r) in out.records.iter_mut().enumerate() {
        if train.contains(&r.identity_id) {
            r.split = Split::Train;
        } else {
            r.split = Split::Gallery;
            groups
                .entry(r.identity_id)
                .or_default()
                .entry(r.camera_id)
                .or_default()
                .push(i);
        }
    }
    for cameras in groups.values_mut() {
        let mut queries = Vec::new();
        let mut gallery = 0;
        for idx in cameras.values_mut() {
            idx.sort_by(|&a, &b| out.records[a].sample_id.cmp(&out.records[b].sample_id));
            queries.push(idx[0]);
            gallery += idx.len() - 1;
        }
        if gallery > 0 {
            for q in queries {
                out.records[q].split = Split::Query;
            }
        }
    }
    Ok(out)
}
