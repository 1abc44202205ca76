use crate::numerics::{ParamSet, SeededRng, Tensor2};

use super::{FusionConfig, FusionLayout, FusionMode};

/// `enc(x) = W2 · relu(W1 x + b1) + b2`
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub w1: Tensor2,
    pub b1: Vec<f64>,
    pub w2: Tensor2,
    pub b2: Vec<f64>,
}

/// The attention layer `a`: a square linear map producing one score per
/// dimension of Θ*.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    pub w: Tensor2,
    pub b: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionParams {
    pub encoder: Option<EncoderParams>,
    pub attention: Option<AttentionParams>,
    pub classifier_w: Tensor2,
    pub classifier_b: Vec<f64>,
}

fn uniform_init(rng: &mut SeededRng, rows: usize, cols: usize) -> Tensor2 {
    let bound = 1.0 / (cols as f64).sqrt();
    Tensor2::from_fn(rows, cols, |_, _| rng.uniform_range(-bound, bound))
}

impl FusionParams {
    /// Weights ~ U(−1/√fan_in, 1/√fan_in), biases zero.
    pub fn init(config: &FusionConfig, layout: &FusionLayout, seed: u64) -> Self {
        let mut rng = SeededRng::new(seed);
        let r = layout.reid_dim;
        let d = layout.fused_dim();
        let encoder = (config.encoder_hidden > 0).then(|| {
            let h = config.encoder_hidden;
            EncoderParams {
                w1: uniform_init(&mut rng, h, r),
                b1: vec![0.0; h],
                w2: uniform_init(&mut rng, r, h),
                b2: vec![0.0; r],
            }
        });
        let attention = (config.mode == FusionMode::Attention).then(|| AttentionParams {
            w: uniform_init(&mut rng, d, d),
            b: config.attention_bias.then(|| vec![0.0; d]),
        });
        Self {
            encoder,
            attention,
            classifier_w: uniform_init(&mut rng, layout.num_classes, d),
            classifier_b: vec![0.0; layout.num_classes],
        }
    }

    /// Same structure, every value zero.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for (_, t) in z.tensors_mut() {
            t.fill(0.0);
        }
        z
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.tensors().into_iter().flat_map(|(_, t)| t.to_vec()).collect()
    }

    /// Inverse of [`flatten`](Self::flatten) for a same-shaped parameter set.
    pub fn set_flat(&mut self, flat: &[f64]) {
        let mut off = 0;
        for (_, t) in self.tensors_mut() {
            t.copy_from_slice(&flat[off..off + t.len()]);
            off += t.len();
        }
        assert_eq!(off, flat.len(), "flat parameter length");
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// Name of the first tensor holding a non-finite value.
    pub fn first_non_finite(&self) -> Option<&'static str> {
        self.tensors()
            .into_iter()
            .find(|(_, t)| t.iter().any(|x| !x.is_finite()))
            .map(|(n, _)| n)
    }

    /// `(name, shape)` of every tensor in [`ParamSet`] order.
    pub fn shapes(&self) -> Vec<(&'static str, Vec<usize>)> {
        let mut out = Vec::new();
        if let Some(e) = &self.encoder {
            out.push(("encoder.w1", vec![e.w1.rows(), e.w1.cols()]));
            out.push(("encoder.b1", vec![e.b1.len()]));
            out.push(("encoder.w2", vec![e.w2.rows(), e.w2.cols()]));
            out.push(("encoder.b2", vec![e.b2.len()]));
        }
        if let Some(a) = &self.attention {
            out.push(("attention.w", vec![a.w.rows(), a.w.cols()]));
            if let Some(b) = &a.b {
                out.push(("attention.b", vec![b.len()]));
            }
        }
        out.push((
            "classifier.w",
            vec![self.classifier_w.rows(), self.classifier_w.cols()],
        ));
        out.push(("classifier.b", vec![self.classifier_b.len()]));
        out
    }
}

impl ParamSet for FusionParams {
    fn tensors(&self) -> Vec<(&'static str, &[f64])> {
        let mut out: Vec<(&'static str, &[f64])> = Vec::new();
        if let Some(e) = &self.encoder {
            out.push(("encoder.w1", e.w1.data()));
            out.push(("encoder.b1", &e.b1));
            out.push(("encoder.w2", e.w2.data()));
            out.push(("encoder.b2", &e.b2));
        }
        if let Some(a) = &self.attention {
            out.push(("attention.w", a.w.data()));
            if let Some(b) = &a.b {
                out.push(("attention.b", b));
            }
        }
        out.push(("classifier.w", self.classifier_w.data()));
        out.push(("classifier.b", &self.classifier_b));
        out
    }

    fn tensors_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        let mut out: Vec<(&'static str, &mut [f64])> = Vec::new();
        if let Some(e) = &mut self.encoder {
            out.push(("encoder.w1", e.w1.data_mut()));
            out.push(("encoder.b1", &mut e.b1));
            out.push(("encoder.w2", e.w2.data_mut()));
            out.push(("encoder.b2", &mut e.b2));
        }
        if let Some(a) = &mut self.attention {
            out.push(("attention.w", a.w.data_mut()));
            if let Some(b) = &mut a.b {
                out.push(("attention.b", b));
            }
        }
        out.push(("classifier.w", self.classifier_w.data_mut()));
        out.push(("classifier.b", &mut self.classifier_b));
        out
    }
}
