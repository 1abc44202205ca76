use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::lstm::TrajectoryModel;
use crate::error::{Error, Result};
use crate::jsonio::write_json;
use crate::store::{write_block_file, BlockFragment, BlockSchema, MANIFEST_VERSION};

pub const TOTAL_POINTS: usize = 20;
pub const OBSERVED: usize = 10;

/// One 20-point track; the first 10 points are observed, the last 10 are
/// the prediction target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub id: String,
    pub points: Vec<[f64; 2]>,
}

impl TrajectorySample {
    pub fn new(id: impl Into<String>, points: Vec<[f64; 2]>) -> Result<Self> {
        let s = Self {
            id: id.into(),
            points,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.len() != TOTAL_POINTS {
            return Err(Error::Shape(format!(
                "trajectory {:?} has {} points, expected {TOTAL_POINTS}",
                self.id,
                self.points.len()
            )));
        }
        if let Some(i) = self
            .points
            .iter()
            .position(|p| !p[0].is_finite() || !p[1].is_finite())
        {
            return Err(Error::NonFinite(format!("trajectory {:?} point {i}", self.id)));
        }
        Ok(())
    }

    pub fn observed(&self) -> &[[f64; 2]] {
        &self.points[..OBSERVED]
    }

    pub fn target(&self) -> &[[f64; 2]] {
        &self.points[OBSERVED..]
    }
}

/// Axis-aligned scene box used to map coordinates into `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneBounds {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl SceneBounds {
    pub fn fit(samples: &[TrajectorySample]) -> Option<Self> {
        let mut pts = samples.iter().flat_map(|s| s.points.iter());
        let first = *pts.next()?;
        let (mut min, mut max) = (first, first);
        for p in pts {
            for k in 0..2 {
                min[k] = min[k].min(p[k]);
                max[k] = max[k].max(p[k]);
            }
        }
        Some(Self { min, max })
    }

    /// Degenerate axes (zero extent) map to 0.
    pub fn normalize(&self, p: [f64; 2]) -> [f64; 2] {
        let mut out = [0.0; 2];
        for k in 0..2 {
            let span = self.max[k] - self.min[k];
            out[k] = if span > 0.0 { (p[k] - self.min[k]) / span } else { 0.0 };
        }
        out
    }

    pub fn apply(&self, samples: &[TrajectorySample]) -> Vec<TrajectorySample> {
        samples
            .iter()
            .map(|s| TrajectorySample {
                id: s.id.clone(),
                points: s.points.iter().map(|&p| self.normalize(p)).collect(),
            })
            .collect()
    }
}

/// Reads `trajectories.jsonl`: one `{"id", "points"}` object per line.
pub fn load_trajectories(path: &Path) -> Result<Vec<TrajectorySample>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let sample: TrajectorySample = serde_json::from_str(&line).map_err(|e| {
            Error::InvalidDataset(format!("{}:{}: {e}", path.display(), lineno + 1))
        })?;
        sample.validate()?;
        out.push(sample);
    }
    Ok(out)
}

/// Trajectory features, one row per sample. With `observed_only` the LSTM
/// reads just the first 10 points instead of all 20.
pub fn extract_block(
    samples: &[TrajectorySample],
    model: &TrajectoryModel,
    observed_only: bool,
) -> Result<Vec<Vec<f64>>> {
    samples
        .iter()
        .map(|s| {
            let pts = if observed_only { s.observed() } else { &s.points[..] };
            model.extract_feature(pts)
        })
        .collect()
}

/// Writes `trajectory.f32` and its fragment `trajectory.json` into `dir`.
pub fn write_trajectory_block(
    dir: &Path,
    samples: &[TrajectorySample],
    features: &[Vec<f64>],
) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let dim = features.first().map_or(0, Vec::len);
    if features.len() != samples.len() || features.iter().any(|f| f.len() != dim) {
        return Err(Error::Shape("trajectory features do not line up with samples".into()));
    }
    write_block_file(&dir.join("trajectory.f32"), features.iter().map(Vec::as_slice))?;
    let fragment = BlockFragment {
        version: MANIFEST_VERSION,
        block: BlockSchema::new("trajectory", dim),
        samples: samples.iter().map(|s| s.id.clone()).collect(),
    };
    write_json(&dir.join("trajectory.json"), &fragment)
}
