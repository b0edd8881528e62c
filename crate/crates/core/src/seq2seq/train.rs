//! Mini-batch training, prediction and evaluation.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_update, clip_global_norm, AdamState};
use super::model::{init_model, HeadKind, RnnModel, DEFAULT_HIDDEN};
use crate::dataset::{encode_features, Dataset, DwellScale, Labels, Target, TaskSpec, Window};
use crate::error::{Error, Result};
use crate::linalg::{argmax, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Full shuffled passes over the training windows.
    pub episodes: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Per-episode multiplier on `lr`; 1 keeps it constant.
    pub lr_decay: f64,
    pub seed: u64,
    pub init_scale: f64,
    pub hidden: usize,
    /// Global gradient-norm limit; `None` disables clipping.
    pub clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            episodes: 20,
            batch_size: 32,
            lr: 1e-3,
            lr_decay: 1.0,
            seed: 1,
            init_scale: 0.08,
            hidden: DEFAULT_HIDDEN,
            clip_norm: Some(5.0),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.episodes < 1 || self.batch_size < 1 || !(self.lr > 0.0) || self.hidden < 1 {
            return Err(Error::InvalidConfig(
                "training needs episodes >= 1, batch_size >= 1, lr > 0, hidden >= 1".into(),
            ));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::InvalidConfig("lr_decay must be in (0, 1]".into()));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return Err(Error::InvalidConfig("clip_norm must be > 0".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Metrics {
    /// Fraction of windows whose head-k argmax hits target k. Empty for
    /// dwell tasks.
    pub accuracy_per_step: Vec<f64>,
    /// Mean absolute dwell error per head, in reporting steps. Empty for
    /// classification tasks.
    pub mae_per_step: Vec<f64>,
    pub mean_loss: f64,
    pub windows: usize,
}

impl Metrics {
    pub fn accuracy(&self) -> Option<f64> {
        mean(&self.accuracy_per_step)
    }

    pub fn mae(&self) -> Option<f64> {
        mean(&self.mae_per_step)
    }
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    /// 1-based.
    pub episode: usize,
    /// Mean per-window training loss seen during the episode.
    pub train_loss: f64,
    pub validation: Metrics,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: RnnModel,
    pub history: Vec<EpisodeRecord>,
}

impl TrainOutcome {
    pub fn loss_curve(&self) -> Vec<f64> {
        self.history.iter().map(|e| e.train_loss).collect()
    }

    pub fn final_metrics(&self) -> &Metrics {
        &self.history.last().expect("at least one episode").validation
    }
}

fn check_task(model_task: &TaskSpec, data_task: &TaskSpec) -> Result<()> {
    if model_task == data_task {
        Ok(())
    } else {
        Err(Error::TaskMismatch(format!(
            "model is {} N={} K={} L={}, data is {} N={} K={} L={}",
            model_task.kind,
            model_task.history,
            model_task.horizon,
            model_task.vocab,
            data_task.kind,
            data_task.history,
            data_task.horizon,
            data_task.vocab
        )))
    }
}

fn encode(task: &TaskSpec, scale: Option<&DwellScale>, w: &Window) -> Result<(Matrix, Labels)> {
    let x = encode_features(&w.ids, w.dwells.as_deref(), task, scale)?;
    let labels = match &w.target {
        Target::Ids(ids) => Labels::Classes(ids.iter().map(|&id| id as usize - 1).collect()),
        Target::Dwells(d) => {
            let s = scale.ok_or_else(|| Error::Shape("dwell labels need a dwell scale".into()))?;
            Labels::Values(d.iter().map(|&v| s.normalize(v)).collect())
        }
    };
    Ok((x, labels))
}

/// Points each sigmoid head at the median training target. Starting from
/// 0.5 instead gives every MAE gradient the same sign, and the coherent Adam
/// steps can blow up the ReLU recurrence before the head learns anything.
fn start_at_median(model: &mut RnnModel, encoded: &[(Matrix, Labels)]) {
    for k in 0..model.dims.heads {
        let mut targets: Vec<f64> = encoded
            .iter()
            .filter_map(|(_, l)| match l {
                Labels::Values(v) => Some(v[k]),
                Labels::Classes(_) => None,
            })
            .collect();
        if targets.is_empty() {
            continue;
        }
        targets.sort_by(f64::total_cmp);
        let p = targets[targets.len() / 2].clamp(0.01, 0.99);
        model.head_bias_mut(k)[0] = (p / (1.0 - p)).ln();
    }
}

/// Trains a fresh model on `train` and scores `val` after every episode.
pub fn train(train: &Dataset, val: &Dataset, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::EmptyDataset);
    }
    check_task(&train.task, &val.task)?;
    let mut model = init_model(&train.task, config.hidden, config.seed, config.init_scale)?;
    model.dwell_scale = train.dwell_scale;
    let scale = model.dwell_scale;
    let encoded = train
        .windows
        .iter()
        .map(|w| encode(&train.task, scale.as_ref(), w))
        .collect::<Result<Vec<_>>>()?;
    if model.dims.head == HeadKind::Sigmoid {
        start_at_median(&mut model, &encoded);
    }

    let mut adam = AdamState::new(model.params().len(), config.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..encoded.len()).collect();
    let mut grads = vec![0.0; model.params().len()];
    let mut history = Vec::with_capacity(config.episodes);

    for episode in 1..=config.episodes {
        adam.lr = config.lr * config.lr_decay.powi(episode as i32 - 1);
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(config.batch_size) {
            grads.iter_mut().for_each(|g| *g = 0.0);
            for &i in batch {
                let (x, labels) = &encoded[i];
                let cache = model.forward_cache(x)?;
                loss_sum += model.backward_into(&cache, labels, &mut grads)?;
            }
            let inv = 1.0 / batch.len() as f64;
            grads.iter_mut().for_each(|g| *g *= inv);
            if let Some(max_norm) = config.clip_norm {
                clip_global_norm(&mut grads, max_norm);
            }
            adam_update(model.params_mut(), &grads, &mut adam);
        }
        let train_loss = loss_sum / encoded.len() as f64;
        if !train_loss.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "training diverged at episode {episode}"
            )));
        }
        history.push(EpisodeRecord {
            episode,
            train_loss,
            validation: evaluate(&model, val)?,
        });
    }
    Ok(TrainOutcome { model, history })
}

#[derive(Debug, Clone, PartialEq)]
pub enum Prediction {
    /// Predicted ids, 1-based, one per head.
    Ids(Vec<u32>),
    /// Predicted dwell-times in reporting steps.
    Dwells(Vec<f64>),
}

/// Most likely id per head (lowest id on ties), or de-normalized dwell-times.
pub fn predict_sequence(model: &RnnModel, history: &Matrix) -> Result<Prediction> {
    if history.rows() != model.task.history {
        return Err(Error::Shape(format!(
            "history has {} steps, model expects {}",
            history.rows(),
            model.task.history
        )));
    }
    let pass = model.forward_cache(history)?;
    Ok(decode(model, pass.outputs()))
}

fn decode(model: &RnnModel, outputs: &[Vec<f64>]) -> Prediction {
    match model.dims.head {
        HeadKind::Softmax => Prediction::Ids(outputs.iter().map(|p| argmax(p) as u32 + 1).collect()),
        HeadKind::Sigmoid => {
            let scale = model.dwell_scale.unwrap_or(DwellScale { min: 0.0, max: 1.0 });
            Prediction::Dwells(outputs.iter().map(|o| scale.denormalize(o[0])).collect())
        }
    }
}

/// Scores `model` on every window of `dataset`. Features are encoded with
/// the model's own dwell scale.
pub fn evaluate(model: &RnnModel, dataset: &Dataset) -> Result<Metrics> {
    check_task(&model.task, &dataset.task)?;
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let scale = model.dwell_scale.or(dataset.dwell_scale);
    let k = model.task.horizon;
    let mut hits = vec![0usize; k];
    let mut abs_err = vec![0.0; k];
    let mut loss_sum = 0.0;
    for w in &dataset.windows {
        let (x, labels) = encode(&model.task, scale.as_ref(), w)?;
        let cache = model.forward_cache(&x)?;
        loss_sum += model.loss(&cache, &labels)?;
        match (decode(model, cache.outputs()), &w.target) {
            (Prediction::Ids(pred), Target::Ids(truth)) => {
                for (h, (p, t)) in hits.iter_mut().zip(pred.iter().zip(truth)) {
                    *h += usize::from(p == t);
                }
            }
            (Prediction::Dwells(pred), Target::Dwells(truth)) => {
                for (e, (p, t)) in abs_err.iter_mut().zip(pred.iter().zip(truth)) {
                    *e += (p - t).abs();
                }
            }
            _ => return Err(Error::TaskMismatch("prediction and target kinds differ".into())),
        }
    }
    let n = dataset.len() as f64;
    let regression = model.dims.head == HeadKind::Sigmoid;
    Ok(Metrics {
        accuracy_per_step: if regression {
            Vec::new()
        } else {
            hits.iter().map(|&h| h as f64 / n).collect()
        },
        mae_per_step: if regression {
            abs_err.iter().map(|e| e / n).collect()
        } else {
            Vec::new()
        },
        mean_loss: loss_sum / n,
        windows: dataset.len(),
    })
}
