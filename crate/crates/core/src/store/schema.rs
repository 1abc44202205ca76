use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Name of the primary re-id block.
pub const REID: &str = "reid";

pub const KNOWN_ROLES: &[&str] = &[
    REID,
    "logo",
    "age_gender",
    "clothing",
    "tattoo",
    "audio",
    "trajectory",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockSchema {
    pub name: String,
    pub dim: usize,
}

impl BlockSchema {
    pub fn new(name: impl Into<String>, dim: usize) -> Self {
        Self {
            name: name.into(),
            dim,
        }
    }

    pub fn is_known_role(&self) -> bool {
        KNOWN_ROLES.contains(&self.name.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Query,
    Gallery,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRecord {
    pub sample_id: String,
    pub identity_id: u64,
    pub camera_id: u64,
    pub split: Split,
    pub blocks: BTreeMap<String, Vec<f64>>,
}

impl FeatureRecord {
    pub fn block(&self, name: &str) -> Result<&[f64]> {
        self.blocks
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::MissingBlock {
                sample: self.sample_id.clone(),
                block: name.to_string(),
            })
    }
}

/// Concatenates the selected auxiliary blocks in selection order.
///
/// An empty selection is valid and yields an empty vector (the no-auxiliary
/// baseline). The primary `reid` block cannot be selected.
pub fn assemble_aux(record: &FeatureRecord, selection: &[String]) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for name in selection {
        if name == REID {
            return Err(Error::InvalidConfig(
                "the reid block cannot be part of the auxiliary selection".into(),
            ));
        }
        out.extend_from_slice(record.block(name)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub schema: Vec<BlockSchema>,
    pub records: Vec<FeatureRecord>,
}

impl Dataset {
    /// Builds a dataset and checks every invariant.
    pub fn new(schema: Vec<BlockSchema>, records: Vec<FeatureRecord>) -> Result<Self> {
        let ds = Self { schema, records };
        ds.validate()?;
        Ok(ds)
    }

    pub fn block_schema(&self, name: &str) -> Result<&BlockSchema> {
        self.schema
            .iter()
            .find(|b| b.name == name)
            .ok_or_else(|| Error::UnknownBlock(name.to_string()))
    }

    pub fn block_dim(&self, name: &str) -> Result<usize> {
        self.block_schema(name).map(|b| b.dim)
    }

    /// Number of distinct identities, `C`.
    pub fn num_identities(&self) -> usize {
        self.records
            .iter()
            .map(|r| r.identity_id)
            .collect::<BTreeSet<_>>()
            .len()
    }

    pub fn num_cameras(&self) -> usize {
        self.records
            .iter()
            .map(|r| r.camera_id)
            .collect::<BTreeSet<_>>()
            .len()
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &FeatureRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    pub fn validate(&self) -> Result<()> {
        let mut names = HashSet::new();
        for b in &self.schema {
            if b.dim == 0 {
                return Err(Error::InvalidDataset(format!("block {:?} has dim 0", b.name)));
            }
            if !names.insert(b.name.as_str()) {
                return Err(Error::InvalidDataset(format!("duplicate block {:?}", b.name)));
            }
        }
        let mut ids = HashSet::new();
        for (index, r) in self.records.iter().enumerate() {
            if !ids.insert(r.sample_id.as_str()) {
                return Err(Error::DuplicateSample {
                    id: r.sample_id.clone(),
                    index,
                });
            }
            if r.blocks.len() != self.schema.len() {
                return Err(Error::InvalidDataset(format!(
                    "record {:?} has {} blocks, manifest declares {}",
                    r.sample_id,
                    r.blocks.len(),
                    self.schema.len()
                )));
            }
            for b in &self.schema {
                let v = r.block(&b.name)?;
                if v.len() != b.dim {
                    return Err(Error::InvalidDataset(format!(
                        "record {:?} block {:?} has length {}, expected {}",
                        r.sample_id,
                        b.name,
                        v.len(),
                        b.dim
                    )));
                }
                if let Some(pos) = v.iter().position(|x| !x.is_finite()) {
                    return Err(Error::NonFinite(format!(
                        "record {:?} block {:?} index {pos}",
                        r.sample_id, b.name
                    )));
                }
            }
        }
        let gallery: HashSet<u64> = self.split(Split::Gallery).map(|r| r.identity_id).collect();
        if let Some(q) = self
            .split(Split::Query)
            .find(|q| !gallery.contains(&q.identity_id))
        {
            return Err(Error::InvalidDataset(format!(
                "query {:?} (identity {}) has no gallery record",
                q.sample_id, q.identity_id
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(blocks: &[(&str, Vec<f64>)]) -> FeatureRecord {
        FeatureRecord {
            sample_id: "a".into(),
            identity_id: 0,
            camera_id: 0,
            split: Split::Train,
            blocks: blocks
                .iter()
                .map(|(n, v)| (n.to_string(), v.clone()))
                .collect(),
        }
    }

    fn sel(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn aux_length_is_sum_of_dims() {
        let r = record(&[
            ("reid", vec![0.0; 4]),
            ("age_gender", vec![1.0; 512]),
            ("trajectory", vec![2.0; 64]),
        ]);
        let aux = assemble_aux(&r, &sel(&["age_gender", "trajectory"])).unwrap();
        assert_eq!(aux.len(), 576);
        assert_eq!(&aux[..512], &[1.0; 512][..]);
        assert_eq!(&aux[512..], &[2.0; 64][..]);
    }

    #[test]
    fn empty_selection_is_baseline() {
        let r = record(&[("reid", vec![0.0; 4])]);
        assert!(assemble_aux(&r, &[]).unwrap().is_empty());
    }

    #[test]
    fn selection_order_sets_segment_order() {
        let r = record(&[
            ("clothing", vec![1.0, 2.0]),
            ("age_gender", vec![3.0, 4.0, 5.0]),
        ]);
        let a = assemble_aux(&r, &sel(&["clothing", "age_gender"])).unwrap();
        let b = assemble_aux(&r, &sel(&["age_gender", "clothing"])).unwrap();
        assert_eq!(a, vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(b, vec![3.0, 4.0, 5.0, 1.0, 2.0]);
        let (mut sa, mut sb) = (a.clone(), b.clone());
        sa.sort_by(f64::total_cmp);
        sb.sort_by(f64::total_cmp);
        assert_eq!(sa, sb);
    }

    #[test]
    fn unknown_block_and_reid_are_rejected() {
        let r = record(&[("reid", vec![0.0])]);
        assert!(matches!(
            assemble_aux(&r, &sel(&["tattoo"])),
            Err(Error::MissingBlock { .. })
        ));
        assert!(matches!(
            assemble_aux(&r, &sel(&["reid"])),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn validate_catches_query_without_gallery() {
        let mut r = record(&[("reid", vec![0.0])]);
        r.split = Split::Query;
        let err = Dataset::new(vec![BlockSchema::new("reid", 1)], vec![r]).unwrap_err();
        assert!(err.to_string().contains("no gallery"));
    }
}
