//! `model.json` (config, layout, tensor table) + `model.f32` (every
//! parameter as little-endian binary32, in table order).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{FusionConfig, FusionLayout, FusionModel, FusionParams};
use crate::error::{Error, Result};
use crate::numerics::ParamSet;
use crate::jsonio::{read_json, write_json};

pub const MODEL_JSON: &str = "model.json";
pub const MODEL_F32: &str = "model.f32";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset into `model.f32`.
    pub offset: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Descriptor {
    version: u32,
    config: FusionConfig,
    layout: FusionLayout,
    class_identities: Vec<u64>,
    tensors: Vec<TensorEntry>,
}

pub fn save_checkpoint(model: &FusionModel, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut offset = 0u64;
    let tensors = model
        .params
        .shapes()
        .into_iter()
        .map(|(name, shape)| {
            let entry = TensorEntry {
                name: name.to_string(),
                offset,
                shape: shape.clone(),
            };
            offset += shape.iter().product::<usize>() as u64 * 4;
            entry
        })
        .collect();
    let desc = Descriptor {
        version: CHECKPOINT_VERSION,
        config: model.config.clone(),
        layout: model.layout.clone(),
        class_identities: model.class_identities.clone(),
        tensors,
    };
    let bytes: Vec<u8> = model
        .params
        .flatten()
        .iter()
        .flat_map(|&x| (x as f32).to_le_bytes())
        .collect();
    let bin = dir.join(MODEL_F32);
    fs::write(&bin, bytes).map_err(|e| Error::io(&bin, e))?;
    write_json(&dir.join(MODEL_JSON), &desc)
}

pub fn load_checkpoint(dir: &Path) -> Result<FusionModel> {
    let json = dir.join(MODEL_JSON);
    let desc: Descriptor = read_json(&json)?;
    if desc.version != CHECKPOINT_VERSION {
        return Err(Error::InvalidConfig(format!(
            "{}: unsupported checkpoint version {}",
            json.display(),
            desc.version
        )));
    }
    if desc.class_identities.len() != desc.layout.num_classes {
        return Err(Error::InvalidConfig(format!(
            "{}: {} class identities for {} classes",
            json.display(),
            desc.class_identities.len(),
            desc.layout.num_classes
        )));
    }
    let mut params = FusionParams::init(&desc.config, &desc.layout, 0);
    let expected = params.shapes();
    if expected.len() != desc.tensors.len()
        || expected
            .iter()
            .zip(&desc.tensors)
            .any(|((n, s), e)| *n != e.name || *s != e.shape)
    {
        return Err(Error::Shape(format!(
            "{}: tensor table does not match config/layout",
            json.display()
        )));
    }
    let bin = dir.join(MODEL_F32);
    let bytes = fs::read(&bin).map_err(|e| Error::io(&bin, e))?;
    let total = params.num_params() as u64 * 4;
    if bytes.len() as u64 != total {
        return Err(Error::DimMismatch {
            path: bin,
            expected: total,
            found: bytes.len() as u64,
        });
    }
    for ((_, t), entry) in params.tensors_mut().into_iter().zip(&desc.tensors) {
        let start = entry.offset as usize;
        for (i, x) in t.iter_mut().enumerate() {
            let at = start + i * 4;
            let v = f32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"));
            if !v.is_finite() {
                return Err(Error::NonFinitePayload {
                    path: bin.clone(),
                    offset: at as u64,
                });
            }
            *x = v as f64;
        }
    }
    Ok(FusionModel {
        config: desc.config,
        layout: desc.layout,
        params,
        class_identities: desc.class_identities,
    })
}
