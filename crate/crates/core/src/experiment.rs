//! Repeated-split ablation runs: for every repeat the dataset is re-split,
//! each (auxiliary selection, fusion mode) pair is trained and evaluated,
//! and the metrics are averaged across repeats.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{save_checkpoint, FusionMode, FusionModel};
use crate::jsonio::{read_json, to_json_string, write_json};
use crate::retrieval::{evaluate, format_percent, EvalConfig, EvalReport};
use crate::store::{split_random, Dataset, SplitSpec};
use crate::trainer::{train_fusion, TrainConfig};

pub const DEFAULT_REPEATS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub dataset: Option<PathBuf>,
    /// Auxiliary selections to compare; `[]` is the no-auxiliary baseline.
    pub variants: Vec<Vec<String>>,
    pub modes: Vec<FusionMode>,
    pub repeats: usize,
    pub base_seed: u64,
    pub train_fraction: f64,
    /// Recipe for every job; `mode`, `aux_selection` and `seed` are set per
    /// job.
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: None,
            variants: vec![Vec::new()],
            modes: vec![FusionMode::Concat, FusionMode::Attention],
            repeats: DEFAULT_REPEATS,
            base_seed: 0,
            train_fraction: 0.5,
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::json("<config>", e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let cfg: Self = read_json(path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.variants.is_empty() {
            return Err(Error::InvalidConfig("at least one variant is required".into()));
        }
        if self.modes.is_empty() {
            return Err(Error::InvalidConfig("at least one fusion mode is required".into()));
        }
        if self.repeats == 0 {
            return Err(Error::InvalidConfig("repeats must be ≥ 1".into()));
        }
        self.train.validate()?;
        self.eval.validate()
    }

    /// Copy with defaults made explicit, as echoed into the report.
    pub fn resolved(&self) -> Self {
        Self {
            train: self.train.resolved(),
            ..self.clone()
        }
    }
}

/// `"baseline"` for the empty selection, else block names joined by `+`.
pub fn variant_label(selection: &[String]) -> String {
    if selection.is_empty() {
        "baseline".to_string()
    } else {
        selection.join("+")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub repeat: usize,
    pub variant: String,
    pub aux_selection: Vec<String>,
    pub mode: FusionMode,
    pub seed: u64,
    pub final_train_loss: f64,
    pub report: EvalReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    /// Population standard deviation over repeats.
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Self {
            mean,
            std: var.sqrt(),
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub variant: String,
    pub aux_selection: Vec<String>,
    pub mode: FusionMode,
    #[serde(rename = "mAP")]
    pub map: Stat,
    pub cmc: BTreeMap<usize, Stat>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub summaries: Vec<Summary>,
    pub runs: Vec<RunRecord>,
}

impl ExperimentReport {
    pub fn summary(&self, variant: &str, mode: FusionMode) -> Option<&Summary> {
        self.summaries
            .iter()
            .find(|s| s.variant == variant && s.mode == mode)
    }

    /// Rebuilds the summaries from the raw runs.
    pub fn summarize(config: &ExperimentConfig, runs: &[RunRecord]) -> Vec<Summary> {
        let mut out = Vec::new();
        for selection in &config.variants {
            let variant = variant_label(selection);
            for &mode in &config.modes {
                let reports: Vec<&EvalReport> = runs
                    .iter()
                    .filter(|r| r.variant == variant && r.mode == mode)
                    .map(|r| &r.report)
                    .collect();
                let maps: Vec<f64> = reports.iter().map(|r| r.map).collect();
                let cmc = config
                    .eval
                    .ranks
                    .iter()
                    .map(|&k| {
                        let vals: Vec<f64> = reports.iter().map(|r| r.cmc[&k]).collect();
                        (k, Stat::of(&vals))
                    })
                    .collect();
                out.push(Summary {
                    variant: variant.clone(),
                    aux_selection: selection.clone(),
                    mode,
                    map: Stat::of(&maps),
                    cmc,
                });
            }
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        to_json_string(self)
    }

    /// Variants as row groups, fusion modes as columns, means as
    /// percentages with one decimal.
    pub fn to_markdown(&self) -> String {
        let header = |m: &FusionMode| match m {
            FusionMode::Concat => "Concat",
            FusionMode::Attention => "Att",
        };
        let mut out = String::from("| Auxiliary | Metric |");
        for m in &self.config.modes {
            let _ = write!(out, " {} |", header(m));
        }
        out.push_str("\n|---|---|");
        for _ in &self.config.modes {
            out.push_str("---|");
        }
        out.push('\n');
        for selection in &self.config.variants {
            let variant = variant_label(selection);
            // None is the mAP row, Some(k) the Rank-k row
            let rows = std::iter::once(None).chain(self.config.eval.ranks.iter().copied().map(Some));
            for (i, rank) in rows.enumerate() {
                let label = if i == 0 { variant.as_str() } else { "" };
                let name = rank.map_or("mAP".to_string(), |k| format!("Rank-{k}"));
                let _ = write!(out, "| {label} | {name} |");
                for &m in &self.config.modes {
                    let cell = self.summary(&variant, m).map(|s| {
                        format_percent(rank.map_or(s.map.mean, |k| s.cmc[&k].mean))
                    });
                    let _ = write!(out, " {} |", cell.unwrap_or_else(|| "-".into()));
                }
                out.push('\n');
            }
        }
        out
    }

    /// `variant,mode,metric,mean,std,min,max`
    pub fn to_csv(&self) -> String {
        let mut out = String::from("variant,mode,metric,mean,std,min,max\n");
        for s in &self.summaries {
            let mut line = |metric: String, st: &Stat| {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    s.variant, s.mode, metric, st.mean, st.std, st.min, st.max
                );
            };
            line("mAP".into(), &s.map);
            for (k, st) in &s.cmc {
                line(format!("Rank-{k}"), st);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutcome {
    pub report: ExperimentReport,
    /// Trained models, aligned with `report.runs`.
    pub models: Vec<FusionModel>,
}

/// Runs every (repeat, variant, mode) job. Repeat `r` splits with seed
/// `base_seed + r` and trains with the same seed, so all variants and modes
/// of a repeat share one split.
pub fn run_experiment(dataset: &Dataset, config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    config.validate()?;
    let splits = (0..config.repeats)
        .map(|r| {
            let seed = config.base_seed.wrapping_add(r as u64);
            split_random(dataset, &SplitSpec::new(config.train_fraction, seed)).map_err(|e| {
                Error::Experiment {
                    repeat: r,
                    variant: "-".into(),
                    mode: "-".into(),
                    source: Box::new(e),
                }
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut jobs = Vec::new();
    for r in 0..config.repeats {
        for selection in &config.variants {
            for &mode in &config.modes {
                jobs.push((r, selection, mode));
            }
        }
    }
    let results: Vec<(RunRecord, FusionModel)> = jobs
        .par_iter()
        .map(|&(r, selection, mode)| {
            let seed = config.base_seed.wrapping_add(r as u64);
            let variant = variant_label(selection);
            let wrap = |e: Error| Error::Experiment {
                repeat: r,
                variant: variant.clone(),
                mode: mode.to_string(),
                source: Box::new(e),
            };
            let train_cfg = TrainConfig {
                seed,
                mode,
                aux_selection: selection.clone(),
                ..config.train.clone()
            };
            let outcome = train_fusion(&splits[r], &train_cfg).map_err(wrap)?;
            let report = evaluate(&outcome.model, &splits[r], &config.eval).map_err(wrap)?;
            Ok((
                RunRecord {
                    repeat: r,
                    variant: variant.clone(),
                    aux_selection: selection.clone(),
                    mode,
                    seed,
                    final_train_loss: outcome.history.final_loss().unwrap_or(f64::NAN),
                    report,
                },
                outcome.model,
            ))
        })
        .collect::<Result<_>>()?;
    let (runs, models): (Vec<RunRecord>, Vec<FusionModel>) = results.into_iter().unzip();
    let resolved = config.resolved();
    let summaries = ExperimentReport::summarize(&resolved, &runs);
    Ok(ExperimentOutcome {
        report: ExperimentReport {
            config: resolved,
            summaries,
            runs,
        },
        models,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Markdown,
    Csv,
}

/// Writes `experiment.{json,md,csv}` for the requested formats.
pub fn emit_report(report: &ExperimentReport, dir: &Path, formats: &[ReportFormat]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for f in formats {
        let (name, text) = match f {
            ReportFormat::Json => ("experiment.json", report.to_json()?),
            ReportFormat::Markdown => ("experiment.md", report.to_markdown()),
            ReportFormat::Csv => ("experiment.csv", report.to_csv()),
        };
        let path = dir.join(name);
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

/// Full output tree: `runs/<r>/<variant>/<mode>/{model.json, model.f32,
/// report.json}` plus the three experiment reports.
pub fn write_experiment(outcome: &ExperimentOutcome, dir: &Path) -> Result<()> {
    for (run, model) in outcome.report.runs.iter().zip(&outcome.models) {
        let run_dir = dir
            .join("runs")
            .join(run.repeat.to_string())
            .join(&run.variant)
            .join(run.mode.as_str());
        save_checkpoint(model, &run_dir)?;
        write_json(&run_dir.join("report.json"), &run.report)?;
    }
    emit_report(
        &outcome.report,
        dir,
        &[ReportFormat::Json, ReportFormat::Markdown, ReportFormat::Csv],
    )
}
