//! Single-layer ReLU recurrent network with `K` dense heads on the final
//! hidden state.
//!
//! ```text
//! h_0 = 0
//! h_t = relu(x_t W_in + h_{t-1} W_rec + b_rec)        t = 1..N
//! y_k = softmax(h_N U_k + c_k)   (class heads)
//! y_k = sigmoid(h_N U_k + c_k)   (dwell head, one output)
//! ```
//!
//! All parameters live in one flat buffer so the optimizer and the model file
//! can treat them uniformly. Layout: `W_in` (F x H), `W_rec` (H x H), `b_rec`
//! (H), then per head `U_k` (H x O) followed by `c_k` (O). Matrices are
//! row-major.

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::loss::{loss_cce, loss_mae, sigmoid, softmax_in_place, PROB_FLOOR};
use crate::dataset::{DwellScale, Labels, TaskSpec};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const DEFAULT_HIDDEN: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadKind {
    Softmax,
    Sigmoid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    /// Feature width `F`.
    pub input: usize,
    /// Hidden units `H`.
    pub hidden: usize,
    /// Number of heads `K`.
    pub heads: usize,
    /// Outputs per head `O`.
    pub output: usize,
    pub head: HeadKind,
}

impl Dims {
    pub fn for_task(task: &TaskSpec, hidden: usize) -> Self {
        Dims {
            input: task.feature_width(),
            hidden,
            heads: task.horizon,
            output: task.output_width(),
            head: if task.kind.predicts_dwell() {
                HeadKind::Sigmoid
            } else {
                HeadKind::Softmax
            },
        }
    }

    pub fn param_count(&self) -> usize {
        let (f, h, o) = (self.input, self.hidden, self.output);
        f * h + h * h + h + self.heads * (h * o + o)
    }

    fn w_in(&self) -> Range<usize> {
        0..self.input * self.hidden
    }

    fn w_rec(&self) -> Range<usize> {
        let start = self.input * self.hidden;
        start..start + self.hidden * self.hidden
    }

    fn b_rec(&self) -> Range<usize> {
        let start = self.w_rec().end;
        start..start + self.hidden
    }

    fn head_w(&self, k: usize) -> Range<usize> {
        let stride = self.hidden * self.output + self.output;
        let start = self.b_rec().end + k * stride;
        start..start + self.hidden * self.output
    }

    fn head_b(&self, k: usize) -> Range<usize> {
        let start = self.head_w(k).end;
        start..start + self.output
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RnnModel {
    pub task: TaskSpec,
    pub dims: Dims,
    /// Scale the dwell features and outputs were trained with.
    pub dwell_scale: Option<DwellScale>,
    params: Vec<f64>,
    revision: u64,
}

/// Everything `backward` needs from a forward call.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    revision: u64,
    inputs: Matrix,
    hidden: Matrix,
    outputs: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn outputs(&self) -> &[Vec<f64>] {
        &self.outputs
    }
}

#[derive(Debug, Clone)]
pub struct ForwardPass {
    /// Hidden trajectory, N x H.
    pub hidden: Matrix,
    /// Per head: a distribution over L classes, or a single value in (0, 1).
    pub outputs: Vec<Vec<f64>>,
    pub cache: ForwardCache,
}

/// Gradient buffer with the same layout as the model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub Vec<f64>);

impl Gradients {
    pub fn norm(&self) -> f64 {
        self.0.iter().map(|g| g * g).sum::<f64>().sqrt()
    }
}

/// Uniform initialization in `[-init_scale, init_scale]`; biases start at 0.
pub fn init_model(task: &TaskSpec, hidden: usize, seed: u64, init_scale: f64) -> Result<RnnModel> {
    task.validate()?;
    if hidden == 0 {
        return Err(Error::InvalidConfig("hidden units must be >= 1".into()));
    }
    if !(init_scale >= 0.0 && init_scale.is_finite()) {
        return Err(Error::InvalidConfig("init_scale must be finite and >= 0".into()));
    }
    let dims = Dims::for_task(task, hidden);
    let mut params = vec![0.0; dims.param_count()];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fill = |range: Range<usize>| {
        for p in &mut params[range] {
            *p = if init_scale > 0.0 {
                rng.gen_range(-init_scale..=init_scale)
            } else {
                0.0
            };
        }
    };
    fill(dims.w_in());
    fill(dims.w_rec());
    for k in 0..dims.heads {
        fill(dims.head_w(k));
    }
    Ok(RnnModel {
        task: *task,
        dims,
        dwell_scale: None,
        params,
        revision: 0,
    })
}

impl RnnModel {
    pub(crate) fn from_parts(
        task: TaskSpec,
        dims: Dims,
        dwell_scale: Option<DwellScale>,
        params: Vec<f64>,
    ) -> Result<Self> {
        if dims != Dims::for_task(&task, dims.hidden) || params.len() != dims.param_count() {
            return Err(Error::Shape("model dimensions inconsistent with task".into()));
        }
        Ok(RnnModel {
            task,
            dims,
            dwell_scale,
            params,
            revision: 0,
        })
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Mutable parameter access. Invalidates outstanding forward caches.
    pub fn params_mut(&mut self) -> &mut [f64] {
        self.revision += 1;
        &mut self.params
    }

    pub fn w_in(&self) -> &[f64] {
        &self.params[self.dims.w_in()]
    }

    pub fn w_rec(&self) -> &[f64] {
        &self.params[self.dims.w_rec()]
    }

    pub fn b_rec(&self) -> &[f64] {
        &self.params[self.dims.b_rec()]
    }

    pub fn head_weights(&self, k: usize) -> &[f64] {
        &self.params[self.dims.head_w(k)]
    }

    pub fn head_bias(&self, k: usize) -> &[f64] {
        &self.params[self.dims.head_b(k)]
    }

    pub fn head_bias_mut(&mut self, k: usize) -> &mut [f64] {
        self.revision += 1;
        let range = self.dims.head_b(k);
        &mut self.params[range]
    }

    pub fn zero_gradients(&self) -> Gradients {
        Gradients(vec![0.0; self.params.len()])
    }

    pub fn forward(&self, features: &Matrix) -> Result<ForwardPass> {
        let cache = self.forward_cache(features)?;
        Ok(ForwardPass {
            hidden: cache.hidden.clone(),
            outputs: cache.outputs.clone(),
            cache,
        })
    }

    /// Forward pass that keeps only the cache.
    pub fn forward_cache(&self, features: &Matrix) -> Result<ForwardCache> {
        let d = &self.dims;
        if features.cols() != d.input || features.rows() == 0 {
            return Err(Error::Shape(format!(
                "features are {}x{}, model expects N x {} with N >= 1",
                features.rows(),
                features.cols(),
                d.input
            )));
        }
        let h_dim = d.hidden;
        let w_in = self.w_in();
        let w_rec = self.w_rec();
        let b_rec = self.b_rec();
        let steps = features.rows();
        let mut hidden = Matrix::zeros(steps, h_dim);
        let mut pre = vec![0.0; h_dim];
        let mut prev = vec![0.0; h_dim];
        for t in 0..steps {
            pre.copy_from_slice(b_rec);
            for (f, &x) in features.row(t).iter().enumerate() {
                if x != 0.0 {
                    axpy(x, &w_in[f * h_dim..(f + 1) * h_dim], &mut pre);
                }
            }
            if t > 0 {
                prev.copy_from_slice(hidden.row(t - 1));
                for (i, &h) in prev.iter().enumerate() {
                    if h != 0.0 {
                        axpy(h, &w_rec[i * h_dim..(i + 1) * h_dim], &mut pre);
                    }
                }
            }
            for (dst, &a) in hidden.row_mut(t).iter_mut().zip(&pre) {
                *dst = a.max(0.0);
            }
        }
        let last = hidden.row(steps - 1);
        let outputs = (0..d.heads)
            .map(|k| {
                let u = self.head_weights(k);
                let mut z = self.head_bias(k).to_vec();
                for (i, &h) in last.iter().enumerate() {
                    if h != 0.0 {
                        axpy(h, &u[i * d.output..(i + 1) * d.output], &mut z);
                    }
                }
                match d.head {
                    HeadKind::Softmax => softmax_in_place(&mut z),
                    HeadKind::Sigmoid => z.iter_mut().for_each(|v| *v = sigmoid(*v)),
                }
                z
            })
            .collect::<Vec<_>>();
        Ok(ForwardCache {
            revision: self.revision,
            inputs: features.clone(),
            hidden,
            outputs,
        })
    }

    /// Loss of a cached forward pass against `labels`.
    pub fn loss(&self, cache: &ForwardCache, labels: &Labels) -> Result<f64> {
        self.check_labels(labels)?;
        Ok(match labels {
            Labels::Classes(t) => loss_cce(&cache.outputs, t),
            Labels::Values(t) => {
                let y: Vec<f64> = cache.outputs.iter().map(|o| o[0]).collect();
                loss_mae(&y, t)
            }
        })
    }

    fn check_labels(&self, labels: &Labels) -> Result<()> {
        let d = &self.dims;
        let ok = match (labels, d.head) {
            (Labels::Classes(t), HeadKind::Softmax) => {
                t.len() == d.heads && t.iter().all(|&c| c < d.output)
            }
            (Labels::Values(t), HeadKind::Sigmoid) => t.len() == d.heads,
            _ => false,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "labels {labels:?} do not fit {} {:?} head(s) of width {}",
                d.heads, d.head, d.output
            )))
        }
    }

    /// Exact gradients of the loss for one window by backpropagation
    /// through time.
    pub fn backward(&self, cache: &ForwardCache, labels: &Labels) -> Result<Gradients> {
        let mut grads = self.zero_gradients();
        self.backward_into(cache, labels, &mut grads.0)?;
        Ok(grads)
    }

    /// Adds this window's gradients into `grads` and returns its loss.
    pub fn backward_into(&self, cache: &ForwardCache, labels: &Labels, grads: &mut [f64]) -> Result<f64> {
        if cache.revision != self.revision
            || cache.inputs.cols() != self.dims.input
            || cache.hidden.cols() != self.dims.hidden
        {
            return Err(Error::Cache);
        }
        if grads.len() != self.params.len() {
            return Err(Error::Shape("gradient buffer size".into()));
        }
        let loss = self.loss(cache, labels)?;
        let d = self.dims;
        let h_dim = d.hidden;
        let scale = 1.0 / d.heads as f64;
        let steps = cache.hidden.rows();
        let last = cache.hidden.row(steps - 1);

        // head gradients, and their pull on h_N
        let mut dh = vec![0.0; h_dim];
        for k in 0..d.heads {
            let out = &cache.outputs[k];
            let dz: Vec<f64> = match labels {
                Labels::Classes(t) => {
                    if out[t[k]] < PROB_FLOOR {
                        vec![0.0; d.output]
                    } else {
                        let mut g: Vec<f64> = out.iter().map(|p| p * scale).collect();
                        g[t[k]] -= scale;
                        g
                    }
                }
                Labels::Values(t) => {
                    let y = out[0];
                    let sign = if y > t[k] {
                        1.0
                    } else if y < t[k] {
                        -1.0
                    } else {
                        0.0
                    };
                    vec![sign * y * (1.0 - y) * scale]
                }
            };
            let u = self.head_weights(k);
            let (gw, gb) = (d.head_w(k), d.head_b(k));
            for (i, &h) in last.iter().enumerate() {
                let u_row = &u[i * d.output..(i + 1) * d.output];
                dh[i] += dot(u_row, &dz);
                if h != 0.0 {
                    axpy(h, &dz, &mut grads[gw.start + i * d.output..gw.start + (i + 1) * d.output]);
                }
            }
            for (g, &v) in grads[gb].iter_mut().zip(&dz) {
                *g += v;
            }
        }

        let w_rec = self.w_rec();
        let (gi, gr, gbias) = (d.w_in(), d.w_rec(), d.b_rec());
        let mut da = vec![0.0; h_dim];
        for t in (0..steps).rev() {
            let h_t = cache.hidden.row(t);
            for j in 0..h_dim {
                da[j] = if h_t[j] > 0.0 { dh[j] } else { 0.0 };
            }
            for (f, &x) in cache.inputs.row(t).iter().enumerate() {
                if x != 0.0 {
                    let start = gi.start + f * h_dim;
                    axpy(x, &da, &mut grads[start..start + h_dim]);
                }
            }
            for (g, &v) in grads[gbias.clone()].iter_mut().zip(&da) {
                *g += v;
            }
            if t == 0 {
                break;
            }
            let h_prev = cache.hidden.row(t - 1);
            for (i, &h) in h_prev.iter().enumerate() {
                if h != 0.0 {
                    let start = gr.start + i * h_dim;
                    axpy(h, &da, &mut grads[start..start + h_dim]);
                }
                dh[i] = dot(&w_rec[i * h_dim..(i + 1) * h_dim], &da);
            }
        }
        Ok(loss)
    }
}

#[inline]
fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{encode_features, TaskKind};

    fn task(kind: TaskKind, n: usize, k: usize, l: usize) -> TaskSpec {
        TaskSpec::new(kind, n, k, l).unwrap()
    }

    #[test]
    fn paper_scale_shapes() {
        let t = task(TaskKind::CellDwellToCell, 5, 2, 50);
        let m = init_model(&t, DEFAULT_HIDDEN, 1, 0.08).unwrap();
        assert_eq!(m.w_in().len(), 51 * 100);
        assert_eq!(m.w_rec().len(), 100 * 100);
        assert_eq!(m.head_weights(0).len(), 100 * 50);
        assert_eq!(m.head_weights(1).len(), 100 * 50);
        assert_eq!(m.head_bias(1).len(), 50);
    }

    #[test]
    fn init_is_seeded_and_scaled() {
        let t = task(TaskKind::CellToCell, 3, 1, 5);
        let a = init_model(&t, 8, 4, 0.08).unwrap();
        assert_eq!(a, init_model(&t, 8, 4, 0.08).unwrap());
        assert!(a.params().iter().all(|p| p.abs() <= 0.08));
        assert!(a.b_rec().iter().all(|&b| b == 0.0));
        let z = init_model(&t, 8, 4, 0.0).unwrap();
        assert!(z.params().iter().all(|&p| p == 0.0));
    }

    #[test]
    fn zero_model_is_uniform() {
        let t = task(TaskKind::CellToCell, 3, 2, 4);
        let m = init_model(&t, 6, 0, 0.0).unwrap();
        let x = encode_features(&[1, 2, 3], None, &t, None).unwrap();
        let out = m.forward(&x).unwrap();
        assert!(out.hidden.as_slice().iter().all(|&h| h == 0.0));
        for head in &out.outputs {
            assert!(head.iter().all(|&p| (p - 0.25).abs() < 1e-15));
        }
    }

    #[test]
    fn relu_zeroes_negative_preactivations() {
        let t = task(TaskKind::CellToCell, 1, 1, 2);
        let mut m = init_model(&t, 2, 0, 0.0).unwrap();
        // W_in row for id 1: [-1, 2]
        m.params_mut()[0] = -1.0;
        m.params_mut()[1] = 2.0;
        let x = encode_features(&[1], None, &t, None).unwrap();
        let out = m.forward(&x).unwrap();
        assert_eq!(out.hidden.row(0), &[0.0, 2.0]);
    }

    #[test]
    fn shape_and_cache_errors() {
        let t = task(TaskKind::CellToCell, 2, 1, 3);
        let mut m = init_model(&t, 4, 0, 0.1).unwrap();
        assert!(matches!(m.forward(&Matrix::zeros(2, 4)), Err(Error::Shape(_))));
        let x = encode_features(&[1, 2], None, &t, None).unwrap();
        let pass = m.forward(&x).unwrap();
        m.params_mut()[0] += 1.0;
        assert!(matches!(
            m.backward(&pass.cache, &Labels::Classes(vec![0])),
            Err(Error::Cache)
        ));
    }

    #[test]
    fn zero_input_gives_zero_input_gradient() {
        let t = task(TaskKind::CellToCell, 3, 1, 3);
        let m = init_model(&t, 5, 2, 0.5).unwrap();
        let pass = m.forward(&Matrix::zeros(3, 3)).unwrap();
        let g = m.backward(&pass.cache, &Labels::Classes(vec![1])).unwrap();
        assert!(g.0[..3 * 5].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn optimum_has_vanishing_head_gradient() {
        let t = task(TaskKind::CellToCell, 1, 1, 3);
        let mut m = init_model(&t, 2, 0, 0.0).unwrap();
        {
            let p = m.params_mut();
            p[0] = 1.0; // id 1 drives hidden unit 0
        }
        let d = m.dims;
        let hw = d.head_w(0).start;
        // logit for class 2 huge when h_0 = 1
        m.params_mut()[hw + 2] = 60.0;
        let x = encode_features(&[1], None, &t, None).unwrap();
        let pass = m.forward(&x).unwrap();
        assert!((pass.outputs[0][2] - 1.0).abs() < 1e-12);
        let g = m.backward(&pass.cache, &Labels::Classes(vec![2])).unwrap();
        let head: f64 = g.0[hw..].iter().map(|v| v.abs()).fold(0.0, f64::max);
        assert!(head < 1e-9, "head gradient {head}");
    }
}
