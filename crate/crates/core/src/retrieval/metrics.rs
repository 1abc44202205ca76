use super::RetrievalItem;

/// Gallery indices by ascending distance, ties broken by index. With
/// `cross_camera_filter`, entries sharing both identity and camera with the
/// query are dropped.
pub fn rank_gallery(
    distances: &[f64],
    gallery: &[RetrievalItem],
    query: &RetrievalItem,
    cross_camera_filter: bool,
) -> Vec<usize> {
    let mut order: Vec<usize> = (0..distances.len())
        .filter(|&j| {
            !(cross_camera_filter
                && gallery[j].identity == query.identity
                && gallery[j].camera == query.camera)
        })
        .collect();
    order.sort_by(|&a, &b| distances[a].total_cmp(&distances[b]).then(a.cmp(&b)));
    order
}

/// `(1/R) Σ_{k relevant} precision@k` over the ranked list, where
/// `relevant[j]` flags gallery index `j`. `None` when nothing is relevant.
pub fn average_precision(ordering: &[usize], relevant: &[bool]) -> Option<f64> {
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (pos, &j) in ordering.iter().enumerate() {
        if relevant[j] {
            hits += 1;
            sum += hits as f64 / (pos + 1) as f64;
        }
    }
    (hits > 0).then(|| sum / hits as f64)
}

/// 1-based rank of the first relevant entry.
pub fn first_match_rank(ordering: &[usize], relevant: &[bool]) -> Option<usize> {
    ordering.iter().position(|&j| relevant[j]).map(|p| p + 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn item(identity: u64, camera: u64) -> RetrievalItem {
        RetrievalItem {
            id: format!("{identity}-{camera}"),
            identity,
            camera,
        }
    }

    #[test]
    fn sorts_with_index_tie_break() {
        let g = vec![item(1, 0), item(2, 0), item(3, 0)];
        assert_eq!(rank_gallery(&[0.3, 0.1, 0.3], &g, &item(9, 1), true), vec![1, 0, 2]);
        assert_eq!(rank_gallery(&[0.5; 3], &g, &item(9, 1), true), vec![0, 1, 2]);
    }

    #[test]
    fn filter_drops_same_identity_same_camera() {
        let g = vec![item(1, 0), item(1, 1), item(2, 0)];
        let q = item(1, 0);
        assert_eq!(rank_gallery(&[0.0, 0.5, 0.2], &g, &q, true), vec![2, 1]);
        assert_eq!(rank_gallery(&[0.0, 0.5, 0.2], &g, &q, false), vec![0, 2, 1]);
    }

    #[test]
    fn ap_hand_case() {
        // relevant at ranks 1 and 3 of 5
        let ap = average_precision(&[0, 1, 2, 3, 4], &[true, false, true, false, false]).unwrap();
        assert_eq!(ap, (1.0 + 2.0 / 3.0) / 2.0);
        assert!((ap - 0.833333333333).abs() < 1e-12);
    }

    #[test]
    fn ap_edge_cases() {
        assert_eq!(average_precision(&[2, 0, 1], &[true; 3]), Some(1.0));
        for r in 1..=6 {
            let mut rel = vec![false; 6];
            rel[r - 1] = true;
            let order: Vec<usize> = (0..6).collect();
            assert_eq!(average_precision(&order, &rel), Some(1.0 / r as f64));
            assert_eq!(first_match_rank(&order, &rel), Some(r));
        }
        assert_eq!(average_precision(&[0, 1], &[false, false]), None);
    }
}
