use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::schema::{BlockSchema, Dataset, FeatureRecord, Split};
use crate::error::{Error, Result};
use crate::jsonio::{read_json, write_json};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub id: String,
    pub identity: u64,
    pub camera: u64,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub blocks: Vec<BlockSchema>,
    pub samples: Vec<SampleMeta>,
}

/// Describes a block file produced outside the engine (an extractor or the
/// trajectory command): rows of `<name>.f32` next to the fragment follow
/// `samples`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockFragment {
    pub version: u32,
    pub block: BlockSchema,
    pub samples: Vec<String>,
}

fn block_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!("{name}.f32"))
}

/// Reads `rows × dim` little-endian binary32 values, widening to `f64`.
pub fn read_block_file(path: &Path, rows: usize, dim: usize) -> Result<Vec<Vec<f64>>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let expected = (rows * dim * 4) as u64;
    if bytes.len() as u64 != expected {
        return Err(Error::DimMismatch {
            path: path.to_path_buf(),
            expected,
            found: bytes.len() as u64,
        });
    }
    let mut out = Vec::with_capacity(rows);
    for (r, row) in bytes.chunks_exact(dim * 4).enumerate() {
        let mut v = Vec::with_capacity(dim);
        for (c, word) in row.chunks_exact(4).enumerate() {
            let x = f32::from_le_bytes(word.try_into().expect("chunk of 4"));
            if !x.is_finite() {
                return Err(Error::NonFinitePayload {
                    path: path.to_path_buf(),
                    offset: ((r * dim + c) * 4) as u64,
                });
            }
            v.push(x as f64);
        }
        out.push(v);
    }
    Ok(out)
}

pub fn write_block_file<'a>(path: &Path, rows: impl IntoIterator<Item = &'a [f64]>) -> Result<()> {
    let mut bytes = Vec::new();
    for row in rows {
        for &x in row {
            bytes.extend_from_slice(&(x as f32).to_le_bytes());
        }
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let manifest: Manifest = read_json(&manifest_path)?;
    if manifest.version != MANIFEST_VERSION {
        return Err(Error::InvalidDataset(format!(
            "{}: unsupported manifest version {}",
            manifest_path.display(),
            manifest.version
        )));
    }
    let mut seen = HashSet::new();
    for (index, s) in manifest.samples.iter().enumerate() {
        if !seen.insert(s.id.as_str()) {
            return Err(Error::DuplicateSample {
                id: s.id.clone(),
                index,
            });
        }
    }

    let n = manifest.samples.len();
    let mut columns = Vec::with_capacity(manifest.blocks.len());
    for b in &manifest.blocks {
        if b.dim == 0 {
            return Err(Error::InvalidDataset(format!("block {:?} has dim 0", b.name)));
        }
        columns.push(read_block_file(&block_path(dir, &b.name), n, b.dim)?);
    }

    let mut records: Vec<FeatureRecord> = manifest
        .samples
        .into_iter()
        .map(|s| FeatureRecord {
            sample_id: s.id,
            identity_id: s.identity,
            camera_id: s.camera,
            split: s.split,
            blocks: BTreeMap::new(),
        })
        .collect();
    for (b, rows) in manifest.blocks.iter().zip(columns) {
        for (rec, row) in records.iter_mut().zip(rows) {
            rec.blocks.insert(b.name.clone(), row);
        }
    }
    Dataset::new(manifest.blocks, records)
}

pub fn save_dataset(dataset: &Dataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for b in &dataset.schema {
        let rows = dataset
            .records
            .iter()
            .map(|r| r.block(&b.name))
            .collect::<Result<Vec<_>>>()?;
        write_block_file(&block_path(dir, &b.name), rows)?;
    }
    let manifest = Manifest {
        version: MANIFEST_VERSION,
        blocks: dataset.schema.clone(),
        samples: dataset
            .records
            .iter()
            .map(|r| SampleMeta {
                id: r.sample_id.clone(),
                identity: r.identity_id,
                camera: r.camera_id,
                split: r.split,
            })
            .collect(),
    };
    write_json(&dir.join(MANIFEST_FILE), &manifest)
}

/// Adds the block described by `fragment_path` to the dataset in `dir`.
///
/// Rows are re-ordered into manifest order and written to `<dir>/<name>.f32`;
/// the fragment must cover exactly the manifest's samples. Returns the
/// updated manifest.
pub fn merge_fragment(dir: &Path, fragment_path: &Path) -> Result<Manifest> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let mut manifest: Manifest = read_json(&manifest_path)?;
    let fragment: BlockFragment = read_json(fragment_path)?;
    if manifest.blocks.iter().any(|b| b.name == fragment.block.name) {
        return Err(Error::InvalidDataset(format!(
            "block {:?} already present in {}",
            fragment.block.name,
            manifest_path.display()
        )));
    }
    let src_dir = fragment_path.parent().unwrap_or(Path::new("."));
    let rows = read_block_file(
        &block_path(src_dir, &fragment.block.name),
        fragment.samples.len(),
        fragment.block.dim,
    )?;
    let mut by_id: HashMap<&str, &[f64]> = HashMap::new();
    for (id, row) in fragment.samples.iter().zip(&rows) {
        if by_id.insert(id.as_str(), row).is_some() {
            return Err(Error::InvalidDataset(format!(
                "{}: duplicate sample {id:?}",
                fragment_path.display()
            )));
        }
    }
    if by_id.len() != manifest.samples.len() {
        return Err(Error::InvalidDataset(format!(
            "{}: covers {} samples, manifest has {}",
            fragment_path.display(),
            by_id.len(),
            manifest.samples.len()
        )));
    }
    let ordered = manifest
        .samples
        .iter()
        .map(|s| {
            by_id.get(s.id.as_str()).copied().ok_or_else(|| {
                Error::InvalidDataset(format!(
                    "{}: sample {:?} missing",
                    fragment_path.display(),
                    s.id
                ))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    write_block_file(&block_path(dir, &fragment.block.name), ordered)?;
    manifest.blocks.push(fragment.block);
    write_json(&manifest_path, &manifest)?;
    Ok(manifest)
}
