use crate::error::{Error, Result};
use crate::numerics::{sigmoid, ParamSet, SeededRng, Tensor2};

use super::io::OBSERVED;

pub const DEFAULT_HIDDEN: usize = 64;
const INPUT: usize = 2;
/// Predicted points per rollout.
const HORIZON: usize = 10;

/// LSTM parameters with gates stacked as `[input, forget, cell, output]`
/// along the rows, plus the regression head.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryModel {
    pub hidden: usize,
    /// `4H × 2`
    pub w_x: Tensor2,
    /// `4H × H`
    pub w_h: Tensor2,
    pub b: Vec<f64>,
    /// `2 × H`
    pub head_w: Tensor2,
    pub head_b: Vec<f64>,
}

type Rollout = (Vec<[f64; 2]>, Vec<StepCache>, Vec<Vec<f64>>);

#[derive(Debug, Clone, PartialEq)]
struct StepCache {
    x: [f64; 2],
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    i: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
    o: Vec<f64>,
    tanh_c: Vec<f64>,
}

/// Hidden and cell states after each consumed point.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmTrace {
    pub hidden: Vec<Vec<f64>>,
    pub cell: Vec<Vec<f64>>,
}

impl TrajectoryModel {
    pub fn zeros(hidden: usize) -> Self {
        Self {
            hidden,
            w_x: Tensor2::zeros(4 * hidden, INPUT),
            w_h: Tensor2::zeros(4 * hidden, hidden),
            b: vec![0.0; 4 * hidden],
            head_w: Tensor2::zeros(INPUT, hidden),
            head_b: vec![0.0; INPUT],
        }
    }

    /// Weights ~ U(−1/√H, 1/√H), biases zero.
    pub fn init(hidden: usize, seed: u64) -> Self {
        let mut rng = SeededRng::new(seed);
        let bound = 1.0 / (hidden as f64).sqrt();
        let mut m = Self::zeros(hidden);
        for t in [&mut m.w_x, &mut m.w_h, &mut m.head_w] {
            t.data_mut()
                .iter_mut()
                .for_each(|x| *x = rng.uniform_range(-bound, bound));
        }
        m
    }

    fn step(&self, x: [f64; 2], h: &[f64], c: &[f64]) -> (Vec<f64>, Vec<f64>, StepCache) {
        let n = self.hidden;
        let mut a = self.w_h.matvec(h);
        for (r, ar) in a.iter_mut().enumerate() {
            *ar += self.w_x.get(r, 0) * x[0] + self.w_x.get(r, 1) * x[1] + self.b[r];
        }
        let i: Vec<f64> = a[..n].iter().map(|&v| sigmoid(v)).collect();
        let f: Vec<f64> = a[n..2 * n].iter().map(|&v| sigmoid(v)).collect();
        let g: Vec<f64> = a[2 * n..3 * n].iter().map(|v| v.tanh()).collect();
        let o: Vec<f64> = a[3 * n..].iter().map(|&v| sigmoid(v)).collect();
        let c_new: Vec<f64> = (0..n).map(|k| f[k] * c[k] + i[k] * g[k]).collect();
        let tanh_c: Vec<f64> = c_new.iter().map(|v| v.tanh()).collect();
        let h_new: Vec<f64> = (0..n).map(|k| o[k] * tanh_c[k]).collect();
        let cache = StepCache {
            x,
            h_prev: h.to_vec(),
            c_prev: c.to_vec(),
            i,
            f,
            g,
            o,
            tanh_c,
        };
        (h_new, c_new, cache)
    }

    fn head(&self, h: &[f64]) -> [f64; 2] {
        let y = self.head_w.matvec(h);
        [y[0] + self.head_b[0], y[1] + self.head_b[1]]
    }

    /// Runs the recurrence over `points` from `h_0 = c_0 = 0`.
    pub fn lstm_forward(&self, points: &[[f64; 2]]) -> Result<LstmTrace> {
        check_points(points)?;
        let mut h = vec![0.0; self.hidden];
        let mut c = vec![0.0; self.hidden];
        let mut trace = LstmTrace {
            hidden: Vec::with_capacity(points.len()),
            cell: Vec::with_capacity(points.len()),
        };
        for &p in points {
            let (hn, cn, _) = self.step(p, &h, &c);
            h = hn;
            c = cn;
            trace.hidden.push(h.clone());
            trace.cell.push(c.clone());
        }
        Ok(trace)
    }

    /// Autoregressive rollout. The first prediction is the head applied to
    /// the state after the last observed point; each later prediction comes
    /// from one more recurrence step fed the previous prediction.
    pub fn predict(&self, observed: &[[f64; 2]]) -> Result<Vec<[f64; 2]>> {
        Ok(self.rollout(observed)?.0)
    }

    /// Predictions, per-step caches, and the input fed at each step.
    fn rollout(&self, observed: &[[f64; 2]]) -> Result<Rollout> {
        if observed.len() != OBSERVED {
            return Err(Error::Shape(format!(
                "expected {OBSERVED} observed points, got {}",
                observed.len()
            )));
        }
        check_points(observed)?;
        let mut h = vec![0.0; self.hidden];
        let mut c = vec![0.0; self.hidden];
        let mut caches = Vec::with_capacity(OBSERVED + HORIZON - 1);
        // hidden states the head reads, in prediction order
        let mut head_inputs = Vec::with_capacity(HORIZON);
        for &p in observed {
            let (hn, cn, cache) = self.step(p, &h, &c);
            caches.push(cache);
            h = hn;
            c = cn;
        }
        let mut preds = Vec::with_capacity(HORIZON);
        for k in 0..HORIZON {
            if k > 0 {
                let (hn, cn, cache) = self.step(preds[k - 1], &h, &c);
                caches.push(cache);
                h = hn;
                c = cn;
            }
            preds.push(self.head(&h));
            head_inputs.push(h.clone());
        }
        Ok((preds, caches, head_inputs))
    }

    /// Mean per-coordinate squared error of the rollout against `target`.
    pub fn loss(&self, observed: &[[f64; 2]], target: &[[f64; 2]]) -> Result<f64> {
        let preds = self.predict(observed)?;
        Ok(mse(&preds, target))
    }

    /// Loss and gradients by backpropagation through time, including the
    /// paths through predictions fed back as inputs.
    pub fn loss_and_grad(&self, observed: &[[f64; 2]], target: &[[f64; 2]]) -> Result<(f64, TrajectoryModel)> {
        if target.len() != HORIZON {
            return Err(Error::Shape(format!(
                "expected {HORIZON} target points, got {}",
                target.len()
            )));
        }
        let (preds, caches, head_inputs) = self.rollout(observed)?;
        let loss = mse(&preds, target);
        let norm = 2.0 / (2 * HORIZON) as f64;
        let mut dy: Vec<[f64; 2]> = preds
            .iter()
            .zip(target)
            .map(|(p, t)| [norm * (p[0] - t[0]), norm * (p[1] - t[1])])
            .collect();

        let n = self.hidden;
        let mut g = TrajectoryModel::zeros(n);
        let mut dh_next = vec![0.0; n];
        let mut dc_next = vec![0.0; n];
        // Step s (0-based) produced the hidden state read by prediction
        // s - (OBSERVED - 1); steps from OBSERVED on consumed prediction
        // s - OBSERVED.
        for s in (0..caches.len()).rev() {
            let cache = &caches[s];
            let mut dh = std::mem::take(&mut dh_next);
            if s + 1 >= OBSERVED {
                let k = s + 1 - OBSERVED;
                g.head_w.add_outer(1.0, &dy[k], &head_inputs[k]);
                g.head_b[0] += dy[k][0];
                g.head_b[1] += dy[k][1];
                for (d, w) in dh.iter_mut().zip(self.head_w.matvec_t(&dy[k])) {
                    *d += w;
                }
            }
            let mut da = vec![0.0; 4 * n];
            for j in 0..n {
                let (i, f, gg, o, tc) = (cache.i[j], cache.f[j], cache.g[j], cache.o[j], cache.tanh_c[j]);
                let d_o = dh[j] * tc;
                let dc = dc_next[j] + dh[j] * o * (1.0 - tc * tc);
                da[j] = dc * gg * i * (1.0 - i);
                da[n + j] = dc * cache.c_prev[j] * f * (1.0 - f);
                da[2 * n + j] = dc * i * (1.0 - gg * gg);
                da[3 * n + j] = d_o * o * (1.0 - o);
                dc_next[j] = dc * f;
            }
            g.w_x.add_outer(1.0, &da, &cache.x);
            g.w_h.add_outer(1.0, &da, &cache.h_prev);
            g.b.iter_mut().zip(&da).for_each(|(a, b)| *a += b);
            dh_next = self.w_h.matvec_t(&da);
            if s >= OBSERVED {
                let dx = self.w_x.matvec_t(&da);
                let k = s - OBSERVED;
                dy[k][0] += dx[0];
                dy[k][1] += dx[1];
            }
        }
        Ok((loss, g))
    }

    /// Hidden state after consuming `points`.
    pub fn extract_feature(&self, points: &[[f64; 2]]) -> Result<Vec<f64>> {
        let trace = self.lstm_forward(points)?;
        Ok(trace
            .hidden
            .last()
            .cloned()
            .unwrap_or_else(|| vec![0.0; self.hidden]))
    }

    pub(crate) fn accumulate(&mut self, other: &Self, scale: f64) {
        for ((_, a), (_, b)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += scale * y);
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.tensors().into_iter().flat_map(|(_, t)| t.to_vec()).collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        let mut off = 0;
        for (_, t) in self.tensors_mut() {
            t.copy_from_slice(&flat[off..off + t.len()]);
            off += t.len();
        }
        assert_eq!(off, flat.len());
    }
}

impl ParamSet for TrajectoryModel {
    fn tensors(&self) -> Vec<(&'static str, &[f64])> {
        vec![
            ("lstm.w_x", self.w_x.data()),
            ("lstm.w_h", self.w_h.data()),
            ("lstm.b", &self.b),
            ("head.w", self.head_w.data()),
            ("head.b", &self.head_b),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        vec![
            ("lstm.w_x", self.w_x.data_mut()),
            ("lstm.w_h", self.w_h.data_mut()),
            ("lstm.b", &mut self.b),
            ("head.w", self.head_w.data_mut()),
            ("head.b", &mut self.head_b),
        ]
    }
}

fn check_points(points: &[[f64; 2]]) -> Result<()> {
    match points.iter().position(|p| !p[0].is_finite() || !p[1].is_finite()) {
        Some(i) => Err(Error::NonFinite(format!("trajectory point {i}"))),
        None => Ok(()),
    }
}

fn mse(preds: &[[f64; 2]], target: &[[f64; 2]]) -> f64 {
    let sum: f64 = preds
        .iter()
        .zip(target)
        .map(|(p, t)| (p[0] - t[0]).powi(2) + (p[1] - t[1]).powi(2))
        .sum();
    sum / (2 * preds.len()) as f64
}
