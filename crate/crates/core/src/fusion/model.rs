use serde::{Deserialize, Serialize};

use super::params::FusionParams;
use super::{FusionConfig, FusionLayout, FusionMode};
use crate::error::{Error, Result};
use crate::numerics::{log_sum_exp, softmax_unchecked, Tensor2};
use crate::store::{assemble_aux, FeatureRecord, REID};

/// Scalar read off the classifier for input attribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadOutput {
    /// Pre-softmax score of the target class.
    #[default]
    Logit,
    /// Softmax probability of the target class.
    Probability,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct EncoderCache {
    input: Vec<f64>,
    pre: Vec<f64>,
    hidden: Vec<f64>,
}

/// Every intermediate of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    /// Encoded re-id features.
    pub reid: Vec<f64>,
    pub aux: Vec<f64>,
    /// `[reid, aux]`
    pub theta_star: Vec<f64>,
    pub alpha: Option<Vec<f64>>,
    pub beta: Option<Vec<f64>>,
    pub theta_tilde: Option<Vec<f64>>,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
    pub loss: Option<f64>,
    pub(crate) encoder: Option<EncoderCache>,
}

impl ForwardTrace {
    /// The classifier's input, which doubles as the retrieval descriptor.
    pub fn classifier_input(&self) -> &[f64] {
        self.theta_tilde.as_deref().unwrap_or(&self.theta_star)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionModel {
    pub config: FusionConfig,
    pub layout: FusionLayout,
    pub params: FusionParams,
    /// Identity id behind each classifier output.
    pub class_identities: Vec<u64>,
}

impl FusionModel {
    pub fn new(config: FusionConfig, layout: FusionLayout, seed: u64) -> Self {
        let class_identities = (0..layout.num_classes as u64).collect();
        Self::with_classes(config, layout, class_identities, seed)
    }

    pub fn with_classes(
        config: FusionConfig,
        layout: FusionLayout,
        class_identities: Vec<u64>,
        seed: u64,
    ) -> Self {
        assert_eq!(class_identities.len(), layout.num_classes);
        let params = FusionParams::init(&config, &layout, seed);
        Self {
            config,
            layout,
            params,
            class_identities,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.layout.num_classes
    }

    fn inputs(&self, record: &FeatureRecord) -> Result<(Vec<f64>, Vec<f64>)> {
        let reid = record.block(REID)?;
        if reid.len() != self.layout.reid_dim {
            return Err(Error::Shape(format!(
                "record {:?}: reid length {} vs model {}",
                record.sample_id,
                reid.len(),
                self.layout.reid_dim
            )));
        }
        let aux = assemble_aux(record, &self.config.aux_selection)?;
        if aux.len() != self.layout.aux_dim() {
            return Err(Error::Shape(format!(
                "record {:?}: auxiliary length {} vs model {}",
                record.sample_id,
                aux.len(),
                self.layout.aux_dim()
            )));
        }
        Ok((reid.to_vec(), aux))
    }

    fn encode(&self, raw: Vec<f64>) -> (Vec<f64>, Option<EncoderCache>) {
        match &self.params.encoder {
            None => (raw, None),
            Some(e) => {
                let pre: Vec<f64> = e.w1.matvec(&raw).iter().zip(&e.b1).map(|(a, b)| a + b).collect();
                let hidden: Vec<f64> = pre.iter().map(|&x| x.max(0.0)).collect();
                let out = e.w2.matvec(&hidden).iter().zip(&e.b2).map(|(a, b)| a + b).collect();
                (
                    out,
                    Some(EncoderCache {
                        input: raw,
                        pre,
                        hidden,
                    }),
                )
            }
        }
    }

    /// Θ* for a record.
    pub fn fused(&self, record: &FeatureRecord) -> Result<Vec<f64>> {
        let (raw, aux) = self.inputs(record)?;
        let (mut reid, _) = self.encode(raw);
        reid.extend_from_slice(&aux);
        Ok(reid)
    }

    /// Runs attention (if any) and the classifier on a given Θ*.
    fn head(&self, theta_star: &[f64]) -> HeadCache {
        let (alpha, beta, tilde) = match &self.params.attention {
            None => (None, None, None),
            Some(a) => {
                let mut alpha = a.w.matvec(theta_star);
                if let Some(b) = &a.b {
                    alpha.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                }
                let beta = softmax_unchecked(&alpha);
                let tilde: Vec<f64> = theta_star.iter().zip(&beta).map(|(t, b)| t * b).collect();
                (Some(alpha), Some(beta), Some(tilde))
            }
        };
        let z = tilde.as_deref().unwrap_or(theta_star);
        let logits: Vec<f64> = self
            .params
            .classifier_w
            .matvec(z)
            .iter()
            .zip(&self.params.classifier_b)
            .map(|(a, b)| a + b)
            .collect();
        let probs = softmax_unchecked(&logits);
        HeadCache {
            alpha,
            beta,
            tilde,
            logits,
            probs,
        }
    }

    pub fn forward(&self, record: &FeatureRecord, label: Option<usize>) -> Result<ForwardTrace> {
        let (raw, aux) = self.inputs(record)?;
        let (reid, encoder) = self.encode(raw);
        let mut theta_star = reid.clone();
        theta_star.extend_from_slice(&aux);
        let head = self.head(&theta_star);
        let loss = match label {
            None => None,
            Some(y) if y >= self.num_classes() => {
                return Err(Error::LabelOutOfRange {
                    label: y,
                    classes: self.num_classes(),
                })
            }
            Some(y) => Some(log_sum_exp(&head.logits) - head.logits[y]),
        };
        Ok(ForwardTrace {
            reid,
            aux,
            theta_star,
            alpha: head.alpha,
            beta: head.beta,
            theta_tilde: head.tilde,
            logits: head.logits,
            probs: head.probs,
            loss,
            encoder,
        })
    }

    /// Retrieval descriptor: Θ̃ in attention mode, Θ* in concat mode.
    pub fn embed(&self, record: &FeatureRecord) -> Result<Vec<f64>> {
        let theta_star = self.fused(record)?;
        Ok(match self.config.mode {
            FusionMode::Concat => theta_star,
            FusionMode::Attention => self.head(&theta_star).tilde.expect("attention params"),
        })
    }

    pub fn predict(&self, record: &FeatureRecord) -> Result<usize> {
        let t = self.forward(record, None)?;
        Ok(argmax(&t.logits))
    }

    /// Mean cross-entropy over `batch` and its gradient for every parameter.
    pub fn loss_and_grad(&self, batch: &[(&FeatureRecord, usize)]) -> Result<(f64, FusionParams)> {
        if batch.is_empty() {
            return Err(Error::InvalidConfig("backward on an empty batch".into()));
        }
        let scale = 1.0 / batch.len() as f64;
        let mut grads = self.params.zeros_like();
        let mut total = 0.0;
        for &(record, label) in batch {
            let trace = self.forward(record, Some(label))?;
            total += trace.loss.expect("labelled");
            let mut dlogits = trace.probs.clone();
            dlogits[label] -= 1.0;
            dlogits.iter_mut().for_each(|x| *x *= scale);
            self.backprop(&trace, &dlogits, Some(&mut grads));
        }
        let loss = total * scale;
        if !loss.is_finite() {
            return Err(Error::NonFinite("loss".into()));
        }
        if let Some(name) = grads.first_non_finite() {
            return Err(Error::NonFinite(format!("gradient of {name}")));
        }
        Ok((loss, grads))
    }

    /// Backward from `dlogits` to Θ*, accumulating parameter gradients when
    /// `grads` is given. Returns ∂/∂Θ*.
    fn backprop(
        &self,
        trace: &ForwardTrace,
        dlogits: &[f64],
        mut grads: Option<&mut FusionParams>,
    ) -> Vec<f64> {
        let z = trace.classifier_input();
        if let Some(g) = grads.as_deref_mut() {
            g.classifier_w.add_outer(1.0, dlogits, z);
            g.classifier_b.iter_mut().zip(dlogits).for_each(|(a, b)| *a += b);
        }
        let dz = self.params.classifier_w.matvec_t(dlogits);

        let dtheta = match (&self.params.attention, &trace.beta) {
            (Some(att), Some(beta)) => {
                let theta = &trace.theta_star;
                // Θ̃ = Θ* ⊙ β: direct path plus the path through β = softmax(α).
                let mut dtheta: Vec<f64> = dz.iter().zip(beta).map(|(g, b)| g * b).collect();
                let dbeta: Vec<f64> = dz.iter().zip(theta).map(|(g, t)| g * t).collect();
                let s: f64 = dbeta.iter().zip(beta).map(|(g, b)| g * b).sum();
                let dalpha: Vec<f64> = dbeta.iter().zip(beta).map(|(g, b)| b * (g - s)).collect();
                if let Some(g) = grads.as_deref_mut() {
                    let ga = g.attention.as_mut().expect("attention grads");
                    ga.w.add_outer(1.0, &dalpha, theta);
                    if let Some(gb) = &mut ga.b {
                        gb.iter_mut().zip(&dalpha).for_each(|(a, b)| *a += b);
                    }
                }
                for (d, a) in dtheta.iter_mut().zip(att.w.matvec_t(&dalpha)) {
                    *d += a;
                }
                dtheta
            }
            _ => dz,
        };

        if let (Some(enc), Some(cache), Some(g)) = (
            &self.params.encoder,
            &trace.encoder,
            grads.and_then(|g| g.encoder.as_mut()),
        ) {
            let dreid = &dtheta[..self.layout.reid_dim];
            g.w2.add_outer(1.0, dreid, &cache.hidden);
            g.b2.iter_mut().zip(dreid).for_each(|(a, b)| *a += b);
            let dhidden: Vec<f64> = enc
                .w2
                .matvec_t(dreid)
                .iter()
                .zip(&cache.pre)
                .map(|(g, &p)| if p > 0.0 { *g } else { 0.0 })
                .collect();
            g.w1.add_outer(1.0, &dhidden, &cache.input);
            g.b1.iter_mut().zip(&dhidden).for_each(|(a, b)| *a += b);
        }
        dtheta
    }

    /// Input of the final linear classifier: Θ* in concat mode, Θ̃ in
    /// attention mode.
    pub fn classifier_input(&self, record: &FeatureRecord) -> Result<Vec<f64>> {
        let theta_star = self.fused(record)?;
        Ok(self.head(&theta_star).tilde.unwrap_or(theta_star))
    }

    /// Value and gradient of one classifier output (logit or softmax
    /// probability of `target`) with respect to the classifier input `z`.
    pub fn classifier_grad(&self, z: &[f64], target: usize, output: HeadOutput) -> Result<(f64, Vec<f64>)> {
        if z.len() != self.layout.fused_dim() {
            return Err(Error::Shape(format!(
                "classifier input length {} vs {}",
                z.len(),
                self.layout.fused_dim()
            )));
        }
        if target >= self.num_classes() {
            return Err(Error::LabelOutOfRange {
                label: target,
                classes: self.num_classes(),
            });
        }
        let mut logits = self.params.classifier_w.matvec(z);
        logits.iter_mut().zip(&self.params.classifier_b).for_each(|(a, b)| *a += b);
        let (value, dlogits) = match output {
            HeadOutput::Logit => {
                let mut d = vec![0.0; self.num_classes()];
                d[target] = 1.0;
                (logits[target], d)
            }
            HeadOutput::Probability => {
                let p = softmax_unchecked(&logits);
                let pt = p[target];
                let d = p
                    .iter()
                    .enumerate()
                    .map(|(k, pk)| if k == target { pt * (1.0 - pt) } else { -pt * pk })
                    .collect();
                (pt, d)
            }
        };
        let grad = self.params.classifier_w.matvec_t(&dlogits);
        if grad.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("classifier input gradient".into()));
        }
        Ok((value, grad))
    }

    pub fn classifier_weights(&self) -> &Tensor2 {
        &self.params.classifier_w
    }
}

struct HeadCache {
    alpha: Option<Vec<f64>>,
    beta: Option<Vec<f64>>,
    tilde: Option<Vec<f64>>,
    logits: Vec<f64>,
    probs: Vec<f64>,
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{finite_diff_grad, max_relative_error, ParamSet, SeededRng};
    use crate::store::{BlockSchema, Split};

    fn record(id: &str, reid: Vec<f64>, aux: &[(&str, Vec<f64>)]) -> FeatureRecord {
        let mut blocks: std::collections::BTreeMap<String, Vec<f64>> =
            [(REID.to_string(), reid)].into();
        for (n, v) in aux {
            blocks.insert(n.to_string(), v.clone());
        }
        FeatureRecord {
            sample_id: id.into(),
            identity_id: 0,
            camera_id: 0,
            split: Split::Train,
            blocks,
        }
    }

    fn model(mode: FusionMode, reid: usize, aux: &[(&str, usize)], classes: usize, hidden: usize) -> FusionModel {
        let mut cfg = FusionConfig::new(mode, aux.iter().map(|(n, _)| n.to_string()).collect());
        cfg.encoder_hidden = hidden;
        let layout = FusionLayout {
            reid_dim: reid,
            aux: aux.iter().map(|(n, d)| BlockSchema::new(*n, *d)).collect(),
            num_classes: classes,
        };
        FusionModel::new(cfg, layout, 17)
    }

    fn random_record(rng: &mut SeededRng, reid: usize, aux: &[(&str, usize)]) -> FeatureRecord {
        let aux: Vec<(&str, Vec<f64>)> = aux
            .iter()
            .map(|(n, d)| (*n, (0..*d).map(|_| rng.normal()).collect()))
            .collect();
        record("r", (0..reid).map(|_| rng.normal()).collect(), &aux)
    }

    #[test]
    fn zero_attention_is_uniform() {
        let mut m = model(FusionMode::Attention, 3, &[("audio", 2)], 4, 0);
        let att = m.params.attention.as_mut().unwrap();
        att.w.data_mut().fill(0.0);
        let r = record("a", vec![1.0, -2.0, 3.0], &[("audio", vec![0.5, 4.0])]);
        let t = m.forward(&r, None).unwrap();
        let d = 5.0;
        assert_eq!(t.alpha.as_ref().unwrap(), &vec![0.0; 5]);
        assert!(t.beta.as_ref().unwrap().iter().all(|b| *b == 1.0 / d));
        for (tt, ts) in t.theta_tilde.as_ref().unwrap().iter().zip(&t.theta_star) {
            assert_eq!(*tt, ts * (1.0 / d));
        }
        assert_eq!(m.embed(&r).unwrap(), t.theta_tilde.unwrap());
    }

    #[test]
    fn concat_classifier_input_dim() {
        let m = model(FusionMode::Concat, 512, &[("clothing", 576)], 3, 0);
        assert_eq!(m.params.classifier_w.cols(), 1088);
        assert!(m.params.attention.is_none());
    }

    #[test]
    fn zero_classifier_gives_ln_c() {
        let mut m = model(FusionMode::Concat, 4, &[], 10, 0);
        m.params.classifier_w.data_mut().fill(0.0);
        let mut rng = SeededRng::new(1);
        for _ in 0..5 {
            let r = random_record(&mut rng, 4, &[]);
            let loss = m.forward(&r, Some(3)).unwrap().loss.unwrap();
            assert!((loss - 10f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn concat_identity_encoder_embeds_verbatim() {
        let m = model(FusionMode::Concat, 2, &[("tattoo", 3)], 2, 0);
        let r = record("a", vec![1.0, 2.0], &[("tattoo", vec![3.0, 4.0, 5.0])]);
        assert_eq!(m.embed(&r).unwrap(), vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        let r2 = record("b", vec![1.0, 2.0], &[("tattoo", vec![3.0, 4.0, 5.0])]);
        assert_eq!(m.embed(&r).unwrap(), m.embed(&r2).unwrap());
    }

    #[test]
    fn missing_block_and_bad_label() {
        let m = model(FusionMode::Concat, 2, &[("tattoo", 3)], 2, 0);
        let r = record("a", vec![1.0, 2.0], &[]);
        assert!(matches!(m.forward(&r, None), Err(Error::MissingBlock { .. })));
        let r = record("a", vec![1.0, 2.0], &[("tattoo", vec![0.0; 3])]);
        assert!(matches!(
            m.forward(&r, Some(2)),
            Err(Error::LabelOutOfRange { .. })
        ));
    }

    #[test]
    fn gradients_match_finite_differences_small() {
        let aux = [("age_gender", 5), ("trajectory", 3)];
        for (mode, hidden) in [
            (FusionMode::Concat, 0),
            (FusionMode::Attention, 0),
            (FusionMode::Concat, 6),
            (FusionMode::Attention, 6),
        ] {
            let m = model(mode, 4, &aux, 2, hidden);
            let mut rng = SeededRng::new(99);
            let recs: Vec<FeatureRecord> = (0..3).map(|_| random_record(&mut rng, 4, &aux)).collect();
            let batch: Vec<(&FeatureRecord, usize)> = recs.iter().zip([0, 1, 1]).collect();
            let (_, grads) = m.loss_and_grad(&batch).unwrap();
            let x0 = m.params.flatten();
            let numeric = finite_diff_grad(
                |x| {
                    let mut p = m.clone();
                    p.params.set_flat(x);
                    p.loss_and_grad(&batch).unwrap().0
                },
                &x0,
                1e-5,
            )
            .unwrap();
            let err = max_relative_error(&grads.flatten(), &numeric, 1e-6);
            assert!(err < 1e-4, "{mode:?}/{hidden}: {err}");
        }
    }

    #[test]
    fn duplicated_batch_matches_single() {
        let m = model(FusionMode::Attention, 3, &[("audio", 2)], 3, 4);
        let mut rng = SeededRng::new(5);
        let r = random_record(&mut rng, 3, &[("audio", 2)]);
        let (l1, g1) = m.loss_and_grad(&[(&r, 1)]).unwrap();
        let (l5, g5) = m.loss_and_grad(&[(&r, 1); 5]).unwrap();
        assert!((l1 - l5).abs() < 1e-12);
        for (a, b) in g1.flatten().iter().zip(g5.flatten()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn confident_correct_sample_has_vanishing_gradient() {
        let mut m = model(FusionMode::Concat, 2, &[], 2, 0);
        m.params.classifier_w = Tensor2::from_vec(2, 2, vec![50.0, 0.0, -50.0, 0.0]).unwrap();
        let r = record("a", vec![1.0, 0.0], &[]);
        let (loss, g) = m.loss_and_grad(&[(&r, 0)]).unwrap();
        assert!(loss < 1e-30);
        let norm: f64 = g.flatten().iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(norm < 1e-30, "{norm}");
    }

    #[test]
    fn classifier_grad_matches_finite_differences() {
        let aux = [("tattoo", 3)];
        for mode in [FusionMode::Concat, FusionMode::Attention] {
            let m = model(mode, 3, &aux, 4, 0);
            let mut rng = SeededRng::new(8);
            let x: Vec<f64> = (0..6).map(|_| rng.normal()).collect();
            for output in [HeadOutput::Logit, HeadOutput::Probability] {
                let (_, g) = m.classifier_grad(&x, 2, output).unwrap();
                let n = finite_diff_grad(|v| m.classifier_grad(v, 2, output).unwrap().0, &x, 1e-5).unwrap();
                assert!(max_relative_error(&g, &n, 1e-6) < 1e-4);
            }
        }
    }

    #[test]
    fn params_round_trip_through_flat() {
        let m = model(FusionMode::Attention, 3, &[("audio", 2)], 3, 4);
        let mut p = m.params.zeros_like();
        p.set_flat(&m.params.flatten());
        assert_eq!(p, m.params);
        assert_eq!(
            p.tensors().iter().map(|(n, _)| *n).collect::<Vec<_>>(),
            p.shapes().iter().map(|(n, _)| *n).collect::<Vec<_>>()
        );
    }
}
