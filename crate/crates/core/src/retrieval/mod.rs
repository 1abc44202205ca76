//! Query/gallery ranking with mAP and CMC.

mod distance;
mod evaluate;
mod metrics;

pub use distance::distance_matrix;
pub use evaluate::{evaluate, evaluate_descriptors};
pub use metrics::{average_precision, first_match_rank, rank_gallery};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    Euclidean,
    Cosine,
}

pub const DEFAULT_RANKS: [usize; 4] = [1, 5, 10, 20];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub metric: Metric,
    pub l2_normalize: bool,
    /// Drop gallery items sharing both identity and camera with the query.
    /// `None` enables it exactly when the dataset spans several cameras.
    pub cross_camera_filter: Option<bool>,
    pub ranks: Vec<usize>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            metric: Metric::Euclidean,
            l2_normalize: false,
            cross_camera_filter: None,
            ranks: DEFAULT_RANKS.to_vec(),
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ranks.is_empty() || self.ranks[0] < 1 || self.ranks.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidConfig(format!(
                "ranks {:?} must be non-empty, ≥ 1 and strictly increasing",
                self.ranks
            )));
        }
        Ok(())
    }
}

/// Identity and camera of a query or gallery entry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalItem {
    pub id: String,
    pub identity: u64,
    pub camera: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResult {
    pub query_id: String,
    pub ap: f64,
    /// 1-based rank of the first relevant gallery item.
    pub first_match_rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(rename = "mAP")]
    pub map: f64,
    pub cmc: BTreeMap<usize, f64>,
    pub per_query: Vec<QueryResult>,
    /// Queries without any relevant gallery item after filtering.
    pub excluded_queries: Vec<String>,
    pub cross_camera_filter: bool,
}

impl EvalReport {
    pub fn rank(&self, k: usize) -> Option<f64> {
        self.cmc.get(&k).copied()
    }

    /// Two-column markdown table: mAP then each CMC rank, as percentages.
    pub fn markdown(&self, label: &str) -> String {
        let mut out = format!("| Metric | {label} |\n|---|---|\n");
        out.push_str(&format!("| mAP | {} |\n", format_percent(self.map)));
        for (k, v) in &self.cmc {
            out.push_str(&format!("| Rank-{k} | {} |\n", format_percent(*v)));
        }
        out
    }
}

/// `0.892` → `"89.2%"`.
pub fn format_percent(v: f64) -> String {
    format!("{:.1}%", v * 100.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percent_formatting() {
        assert_eq!(format_percent(0.892), "89.2%");
        assert_eq!(format_percent(1.0), "100.0%");
        assert_eq!(format_percent(0.0), "0.0%");
    }

    #[test]
    fn ranks_validation() {
        assert!(EvalConfig::default().validate().is_ok());
        for bad in [vec![], vec![0, 1], vec![5, 1], vec![1, 1]] {
            let c = EvalConfig {
                ranks: bad,
                ..Default::default()
            };
            assert!(c.validate().is_err());
        }
    }
}
