//! Finite-difference gradient oracle shared by the gradient and acceptance
//! tests.
#![allow(dead_code)]

use mobseq::dataset::{Labels, TaskKind, TaskSpec};
use mobseq::linalg::Matrix;
use mobseq::seq2seq::{init_model, RnnModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 1e-5;

/// Central-difference gradient of the loss, computed only from forward
/// passes.
pub fn numeric_gradient(model: &RnnModel, x: &Matrix, labels: &Labels) -> Vec<f64> {
    let mut probe = model.clone();
    let n = probe.params().len();
    let mut out = vec![0.0; n];
    for i in 0..n {
        let orig = probe.params()[i];
        probe.params_mut()[i] = orig + STEP;
        let up = probe.loss(&probe.forward(x).unwrap().cache, labels).unwrap();
        probe.params_mut()[i] = orig - STEP;
        let down = probe.loss(&probe.forward(x).unwrap().cache, labels).unwrap();
        probe.params_mut()[i] = orig;
        out[i] = (up - down) / (2.0 * STEP);
    }
    out
}

pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-6))
        .fold(0.0, f64::max)
}

pub struct Case {
    pub model: RnnModel,
    pub x: Matrix,
    pub labels: Labels,
}

pub fn random_case(seed: u64, kind: TaskKind) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hidden = rng.gen_range(2..=8);
    let n = rng.gen_range(1..=4);
    let l = rng.gen_range(2..=5);
    let k = if kind.predicts_dwell() { 1 } else { rng.gen_range(1..=3) };
    let task = TaskSpec::new(kind, n, k, l).unwrap();
    let mut model = init_model(&task, hidden, seed, 0.6).unwrap();
    // nonzero recurrent bias keeps more units active
    let b: Vec<f64> = (0..hidden).map(|_| rng.gen_range(-0.2..0.4)).collect();
    let offset = model.w_in().len() + model.w_rec().len();
    model.params_mut()[offset..offset + hidden].copy_from_slice(&b);
    // dense random features exercise every input weight
    let f = task.feature_width();
    let x = Matrix::from_vec(n, f, (0..n * f).map(|_| rng.gen_range(-1.0..1.0)).collect());
    let labels = if kind.predicts_dwell() {
        Labels::Values(vec![rng.gen_range(0.0..1.0)])
    } else {
        Labels::Classes((0..k).map(|_| rng.gen_range(0..l)).collect())
    };
    Case { model, x, labels }
}

/// Worst relative error between BPTT and finite differences for the random
/// model of `seed` and `kind`.
pub fn gradient_error(seed: u64, kind: TaskKind) -> f64 {
    let c = random_case(seed, kind);
    let pass = c.model.forward(&c.x).unwrap();
    let analytic = c.model.backward(&pass.cache, &c.labels).unwrap();
    max_relative_error(&analytic.0, &numeric_gradient(&c.model, &c.x, &c.labels))
}
