use std::collections::BTreeMap;

use rayon::prelude::*;

use super::distance::distance_matrix;
use super::metrics::{average_precision, first_match_rank, rank_gallery};
use super::{EvalConfig, EvalReport, QueryResult, RetrievalItem};
use crate::error::{Error, Result};
use crate::fusion::FusionModel;
use crate::store::{Dataset, FeatureRecord, Split};

/// Scores pre-computed descriptors. `cross_camera_filter` is taken as given;
/// `config.cross_camera_filter` is ignored here.
pub fn evaluate_descriptors(
    queries: &[(RetrievalItem, Vec<f64>)],
    gallery: &[(RetrievalItem, Vec<f64>)],
    config: &EvalConfig,
    cross_camera_filter: bool,
) -> Result<EvalReport> {
    config.validate()?;
    if queries.is_empty() || gallery.is_empty() {
        return Err(Error::EmptySplit(format!(
            "{} queries, {} gallery items",
            queries.len(),
            gallery.len()
        )));
    }
    let q: Vec<(&str, &[f64])> = queries.iter().map(|(m, v)| (m.id.as_str(), v.as_slice())).collect();
    let g: Vec<(&str, &[f64])> = gallery.iter().map(|(m, v)| (m.id.as_str(), v.as_slice())).collect();
    let dist = distance_matrix(&q, &g, config)?;
    let gallery_meta: Vec<RetrievalItem> = gallery.iter().map(|(m, _)| m.clone()).collect();

    let outcomes: Vec<(String, Option<(f64, usize)>)> = queries
        .par_iter()
        .enumerate()
        .map(|(i, (qm, _))| {
            let order = rank_gallery(dist.row(i), &gallery_meta, qm, cross_camera_filter);
            let relevant: Vec<bool> = gallery_meta.iter().map(|gm| gm.identity == qm.identity).collect();
            let scored = average_precision(&order, &relevant)
                .zip(first_match_rank(&order, &relevant));
            (qm.id.clone(), scored)
        })
        .collect();

    let mut per_query = Vec::new();
    let mut excluded_queries = Vec::new();
    for (id, scored) in outcomes {
        match scored {
            Some((ap, first_match_rank)) => per_query.push(QueryResult {
                query_id: id,
                ap,
                first_match_rank,
            }),
            None => excluded_queries.push(id),
        }
    }
    if per_query.is_empty() {
        return Err(Error::EmptySplit(
            "no query has a relevant gallery item".into(),
        ));
    }
    let n = per_query.len() as f64;
    let map = per_query.iter().map(|r| r.ap).sum::<f64>() / n;
    let cmc: BTreeMap<usize, f64> = config
        .ranks
        .iter()
        .map(|&k| {
            let hits = per_query.iter().filter(|r| r.first_match_rank <= k).count();
            (k, hits as f64 / n)
        })
        .collect();
    Ok(EvalReport {
        map,
        cmc,
        per_query,
        excluded_queries,
        cross_camera_filter,
    })
}

fn item(r: &FeatureRecord) -> RetrievalItem {
    RetrievalItem {
        id: r.sample_id.clone(),
        identity: r.identity_id,
        camera: r.camera_id,
    }
}

/// Embeds the dataset's query and gallery splits with `model` and scores
/// the ranking.
pub fn evaluate(model: &FusionModel, dataset: &Dataset, config: &EvalConfig) -> Result<EvalReport> {
    let embed = |split: Split| -> Result<Vec<(RetrievalItem, Vec<f64>)>> {
        dataset
            .split(split)
            .collect::<Vec<_>>()
            .par_iter()
            .map(|r| Ok((item(r), model.embed(r)?)))
            .collect()
    };
    let queries = embed(Split::Query)?;
    let gallery = embed(Split::Gallery)?;
    let filter = config
        .cross_camera_filter
        .unwrap_or(dataset.num_cameras() > 1);
    evaluate_descriptors(&queries, &gallery, config, filter)
}
