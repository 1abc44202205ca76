use super::{EvalConfig, Metric};
use crate::error::{Error, Result};
use crate::numerics::{dot, l2_norm, Tensor2};

fn normalized(id: &str, v: &[f64]) -> Result<Vec<f64>> {
    let n = l2_norm(v);
    if n == 0.0 {
        return Err(Error::ZeroVector(id.to_string()));
    }
    Ok(v.iter().map(|x| x / n).collect())
}

/// `|Q| × |G|` distances. Each descriptor is paired with the sample id used
/// in error messages.
pub fn distance_matrix(
    queries: &[(&str, &[f64])],
    gallery: &[(&str, &[f64])],
    config: &EvalConfig,
) -> Result<Tensor2> {
    let dim = queries
        .iter()
        .chain(gallery)
        .map(|(_, v)| v.len())
        .next()
        .unwrap_or(0);
    if let Some((id, v)) = queries.iter().chain(gallery).find(|(_, v)| v.len() != dim) {
        return Err(Error::Shape(format!(
            "descriptor of {id:?} has length {}, expected {dim}",
            v.len()
        )));
    }
    let prep = |items: &[(&str, &[f64])]| -> Result<Vec<Vec<f64>>> {
        items
            .iter()
            .map(|(id, v)| {
                if config.l2_normalize {
                    normalized(id, v)
                } else {
                    Ok(v.to_vec())
                }
            })
            .collect()
    };
    let q = prep(queries)?;
    let g = prep(gallery)?;

    let mut out = Tensor2::zeros(q.len(), g.len());
    match config.metric {
        Metric::Euclidean => {
            for (i, a) in q.iter().enumerate() {
                for (j, b) in g.iter().enumerate() {
                    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                    out.set(i, j, d2.sqrt());
                }
            }
        }
        Metric::Cosine => {
            let norms = |items: &[(&str, &[f64])], vs: &[Vec<f64>]| -> Result<Vec<f64>> {
                items
                    .iter()
                    .zip(vs)
                    .map(|((id, _), v)| {
                        let n = l2_norm(v);
                        if n == 0.0 {
                            Err(Error::ZeroVector(id.to_string()))
                        } else {
                            Ok(n)
                        }
                    })
                    .collect()
            };
            let qn = norms(queries, &q)?;
            let gn = norms(gallery, &g)?;
            for (i, a) in q.iter().enumerate() {
                for (j, b) in g.iter().enumerate() {
                    out.set(i, j, 1.0 - dot(a, b) / (qn[i] * gn[j]));
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(metric: Metric) -> EvalConfig {
        EvalConfig {
            metric,
            ..Default::default()
        }
    }

    #[test]
    fn identical_vectors_have_zero_distance() {
        let v = [0.3, -1.2, 4.0];
        for m in [Metric::Euclidean, Metric::Cosine] {
            let d = distance_matrix(&[("q", &v)], &[("g", &v)], &cfg(m)).unwrap();
            assert!(d.get(0, 0).abs() < 1e-15);
        }
    }

    #[test]
    fn orthogonal_unit_vectors() {
        let a = [1.0, 0.0];
        let b = [0.0, 1.0];
        let e = distance_matrix(&[("q", &a)], &[("g", &b)], &cfg(Metric::Euclidean)).unwrap();
        assert_eq!(e.get(0, 0), 2f64.sqrt());
        let c = distance_matrix(&[("q", &a)], &[("g", &b)], &cfg(Metric::Cosine)).unwrap();
        assert_eq!(c.get(0, 0), 1.0);
    }

    #[test]
    fn repeated_computation_is_bit_identical() {
        let q = [0.1, 0.2, 0.7];
        let g = [1.1, -0.2, 0.3];
        let a = distance_matrix(&[("q", &q)], &[("g", &g)], &cfg(Metric::Euclidean)).unwrap();
        let b = distance_matrix(&[("q", &q)], &[("g", &g)], &cfg(Metric::Euclidean)).unwrap();
        assert_eq!(a.get(0, 0).to_bits(), b.get(0, 0).to_bits());
    }

    #[test]
    fn zero_vector_under_cosine_names_sample() {
        let z = [0.0, 0.0];
        let err = distance_matrix(&[("q", &[1.0, 0.0])], &[("g7", &z)], &cfg(Metric::Cosine)).unwrap_err();
        assert!(matches!(err, Error::ZeroVector(ref id) if id == "g7"));
    }

    #[test]
    fn normalization_scales_out() {
        let c = EvalConfig {
            l2_normalize: true,
            ..Default::default()
        };
        let d = distance_matrix(&[("q", &[3.0, 0.0])], &[("g", &[0.0, 0.5])], &c).unwrap();
        assert!((d.get(0, 0) - 2f64.sqrt()).abs() < 1e-15);
    }
}
