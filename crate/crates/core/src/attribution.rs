//! Integrated Gradients over the fused feature vector, averaged over a
//! seeded sample of queries and summed per feature block.
//!
//! Attribution is taken with respect to the input of the final classifier:
//! Θ* in concat mode, the attention-weighted Θ̃ in attention mode. Both share
//! the block layout of Θ*.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{FusionModel, HeadOutput};
use crate::numerics::SeededRng;
use crate::store::{Dataset, FeatureRecord, Split};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Baseline {
    #[default]
    Zero,
    Custom(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IgConfig {
    /// Riemann steps `m`.
    pub steps: usize,
    pub baseline: Baseline,
    pub sample_count: usize,
    pub seed: u64,
    pub output: HeadOutput,
}

impl Default for IgConfig {
    fn default() -> Self {
        Self {
            steps: 50,
            baseline: Baseline::Zero,
            sample_count: 100,
            seed: 0,
            output: HeadOutput::Logit,
        }
    }
}

/// Right-Riemann Integrated Gradients:
/// `attr_i = (x_i − x0_i) · (1/m) Σ_{k=1..m} ∂F(x0 + (k/m)(x − x0))/∂x_i`.
///
/// `f` returns the value and gradient of the attributed scalar.
pub fn integrated_gradients<F>(f: F, x: &[f64], baseline: &[f64], steps: usize) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    if steps == 0 {
        return Err(Error::InvalidConfig("integrated gradients needs ≥ 1 step".into()));
    }
    if x.len() != baseline.len() {
        return Err(Error::Shape(format!(
            "input length {} vs baseline {}",
            x.len(),
            baseline.len()
        )));
    }
    let delta: Vec<f64> = x.iter().zip(baseline).map(|(a, b)| a - b).collect();
    let mut sum = vec![0.0; x.len()];
    let mut point = vec![0.0; x.len()];
    for k in 1..=steps {
        let t = k as f64 / steps as f64;
        for ((p, b), d) in point.iter_mut().zip(baseline).zip(&delta) {
            *p = b + t * d;
        }
        let (_, grad) = f(&point)?;
        if grad.len() != x.len() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!("gradient at step {k}")));
        }
        sum.iter_mut().zip(&grad).for_each(|(s, g)| *s += g);
    }
    Ok(sum
        .iter()
        .zip(&delta)
        .map(|(s, d)| d * s / steps as f64)
        .collect())
}

/// `|Σ attr − (F(x) − F(x0))| / max(1, |F(x) − F(x0)|)`
pub fn completeness_residual(attributions: &[f64], fx: f64, fx0: f64) -> f64 {
    let gap = fx - fx0;
    (attributions.iter().sum::<f64>() - gap).abs() / gap.abs().max(1.0)
}

/// IG of one classifier output of `model` at classifier input `x`. Returns the
/// attributions and the completeness residual.
pub fn model_attributions(
    model: &FusionModel,
    x: &[f64],
    baseline: &[f64],
    target: usize,
    steps: usize,
    output: HeadOutput,
) -> Result<(Vec<f64>, f64)> {
    let f = |v: &[f64]| model.classifier_grad(v, target, output);
    let attr = integrated_gradients(f, x, baseline, steps)?;
    let fx = f(x)?.0;
    let fx0 = f(baseline)?.0;
    let residual = completeness_residual(&attr, fx, fx0);
    Ok((attr, residual))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockAttribution {
    pub block: String,
    pub start: usize,
    pub end: usize,
    /// Sum of the positive entries of the mean attribution in this block.
    pub positive: f64,
    /// Sum of the negative entries.
    pub negative: f64,
    pub net: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleAttribution {
    pub query_id: String,
    pub target_class: usize,
    pub completeness_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionReport {
    pub steps: usize,
    pub output: HeadOutput,
    pub requested_samples: usize,
    pub samples: Vec<SampleAttribution>,
    /// Mean attribution per dimension of Θ*.
    pub per_dimension: Vec<f64>,
    pub blocks: Vec<BlockAttribution>,
}

impl AttributionReport {
    /// Share of `Σ|mean attribution|` that falls in `block`.
    pub fn mass_fraction(&self, block: &str) -> Option<f64> {
        let total: f64 = self.per_dimension.iter().map(|a| a.abs()).sum();
        let b = self.blocks.iter().find(|b| b.block == block)?;
        let mass: f64 = self.per_dimension[b.start..b.end].iter().map(|a| a.abs()).sum();
        Some(if total > 0.0 { mass / total } else { 0.0 })
    }

    pub fn mean_residual(&self) -> f64 {
        self.samples.iter().map(|s| s.completeness_residual).sum::<f64>() / self.samples.len() as f64
    }

    /// `block,positive,negative,net`
    pub fn to_csv(&self) -> String {
        let mut out = String::from("block,positive,negative,net\n");
        for b in &self.blocks {
            let _ = writeln!(out, "{},{},{},{}", b.block, b.positive, b.negative, b.net);
        }
        out
    }
}

fn block_sums(model: &FusionModel, per_dimension: &[f64]) -> Vec<BlockAttribution> {
    model
        .layout
        .segments()
        .into_iter()
        .map(|(block, start, end)| {
            let seg = &per_dimension[start..end];
            let positive: f64 = seg.iter().filter(|a| **a > 0.0).sum();
            let negative: f64 = seg.iter().filter(|a| **a < 0.0).sum();
            BlockAttribution {
                block,
                start,
                end,
                positive,
                negative,
                net: seg.iter().sum(),
            }
        })
        .collect()
}

/// Averages IG over a seeded sample of query records, each explained for
/// the class the model predicts. Uses every query when fewer than
/// `sample_count` exist.
pub fn aggregate_attributions(
    model: &FusionModel,
    dataset: &Dataset,
    config: &IgConfig,
) -> Result<AttributionReport> {
    let queries: Vec<&FeatureRecord> = dataset.split(Split::Query).collect();
    if queries.is_empty() {
        return Err(Error::EmptySplit("no query records to attribute".into()));
    }
    let mut rng = SeededRng::new(config.seed);
    let chosen: Vec<&FeatureRecord> = rng
        .permutation(queries.len())
        .into_iter()
        .take(config.sample_count.max(1))
        .map(|i| queries[i])
        .collect();
    let d = model.layout.fused_dim();
    let baseline = match &config.baseline {
        Baseline::Zero => vec![0.0; d],
        Baseline::Custom(v) if v.len() == d => v.clone(),
        Baseline::Custom(v) => {
            return Err(Error::Shape(format!("baseline length {} vs {d}", v.len())))
        }
    };

    let results: Vec<(SampleAttribution, Vec<f64>)> = chosen
        .par_iter()
        .map(|r| {
            let x = model.classifier_input(r)?;
            let target = model.predict(r)?;
            let (attr, residual) =
                model_attributions(model, &x, &baseline, target, config.steps, config.output)?;
            Ok((
                SampleAttribution {
                    query_id: r.sample_id.clone(),
                    target_class: target,
                    completeness_residual: residual,
                },
                attr,
            ))
        })
        .collect::<Result<_>>()?;

    let n = results.len() as f64;
    let mut per_dimension = vec![0.0; d];
    for (_, attr) in &results {
        per_dimension.iter_mut().zip(attr).for_each(|(m, a)| *m += a);
    }
    per_dimension.iter_mut().for_each(|m| *m /= n);
    Ok(AttributionReport {
        steps: config.steps,
        output: config.output,
        requested_samples: config.sample_count,
        blocks: block_sums(model, &per_dimension),
        samples: results.into_iter().map(|(s, _)| s).collect(),
        per_dimension,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::{FusionConfig, FusionLayout, FusionMode};
    use crate::numerics::dot;
    use crate::store::BlockSchema;

    #[test]
    fn linear_function_is_exact_for_any_m() {
        let w = [0.5, -2.0, 3.0, 0.25];
        let b = 1.5;
        let x = [1.0, 2.0, -1.0, 4.0];
        let x0 = [0.5, -1.0, 0.0, 2.0];
        for m in [1, 2, 7, 50] {
            let attr = integrated_gradients(|v| Ok((dot(&w, v) + b, w.to_vec())), &x, &x0, m).unwrap();
            for i in 0..4 {
                assert!((attr[i] - w[i] * (x[i] - x0[i])).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn input_equal_to_baseline_gives_zero() {
        let x = [0.3, -0.7];
        let attr = integrated_gradients(|v| Ok((v[0] * v[1], vec![v[1], v[0]])), &x, &x, 10).unwrap();
        assert_eq!(attr, vec![0.0, 0.0]);
    }

    #[test]
    fn quadratic_completeness_improves_with_steps() {
        let f = |v: &[f64]| Ok((v.iter().map(|x| x * x).sum::<f64>(), v.iter().map(|x| 2.0 * x).collect()));
        let x = [1.0, -2.0, 0.5];
        let x0 = [0.0; 3];
        let fx = 1.0 + 4.0 + 0.25;
        let r10 = completeness_residual(&integrated_gradients(f, &x, &x0, 10).unwrap(), fx, 0.0);
        let r200 = completeness_residual(&integrated_gradients(f, &x, &x0, 200).unwrap(), fx, 0.0);
        assert!(r200 < r10);
        assert!(r200 < 1e-2);
    }

    #[test]
    fn zero_weight_block_gets_no_attribution() {
        let cfg = FusionConfig::new(FusionMode::Concat, vec!["tattoo".into()]);
        let layout = FusionLayout {
            reid_dim: 3,
            aux: vec![BlockSchema::new("tattoo", 2)],
            num_classes: 3,
        };
        let mut m = FusionModel::new(cfg, layout, 4);
        for c in 0..3 {
            m.params.classifier_w.set(c, 3, 0.0);
            m.params.classifier_w.set(c, 4, 0.0);
        }
        let x = [0.2, -1.0, 0.7, 5.0, -3.0];
        for output in [HeadOutput::Logit, HeadOutput::Probability] {
            let (attr, _) = model_attributions(&m, &x, &[0.0; 5], 1, 20, output).unwrap();
            assert_eq!(&attr[3..], &[0.0, 0.0]);
        }
    }

    #[test]
    fn zero_steps_rejected() {
        assert!(integrated_gradients(|_| Ok((0.0, vec![0.0])), &[1.0], &[0.0], 0).is_err());
    }
}
