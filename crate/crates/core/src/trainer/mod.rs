//! AdamW training with warmup and cosine decay, global-norm clipping, early
//! stopping on validation loss and checkpoint selection on validation F1@50.

mod optim;

use alloc::vec::Vec;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use optim::{adamw_step, clip_global_norm, global_norm, AdamWConfig, OptimizerState};

use crate::data::Video;
use crate::error::{Error, Result};
use crate::loss::{composite_on_tape, LossConfig, TransitionMatrix};
use crate::metrics::{Matching, MetricAccumulator, MetricReport};
use crate::model::ModelParams;
use crate::numcore::Tape;
use crate::postprocess::{postprocess, PostprocessConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub eta0: f64,
    pub warmup_epochs: usize,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub clip_norm: f64,
    pub weight_decay: f64,
    pub patience: usize,
    pub seed: u64,
    pub betas: (f64, f64),
    pub eps: f64,
    /// Cleanup applied to validation predictions before scoring.
    pub postprocess: PostprocessConfig,
}

impl Default for TrainConfig {
    /// η₀ = 5e-4, 5 warmup epochs, at most 50 epochs, B = 8, clip 5,
    /// weight decay 1e-4, patience 5.
    fn default() -> Self {
        Self {
            eta0: 5e-4,
            warmup_epochs: 5,
            max_epochs: 50,
            batch_size: 8,
            clip_norm: 5.0,
            weight_decay: 1e-4,
            patience: 5,
            seed: 0,
            betas: (0.9, 0.999),
            eps: 1e-8,
            postprocess: PostprocessConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let reals = [
            ("eta0", self.eta0),
            ("clip_norm", self.clip_norm),
            ("eps", self.eps),
        ];
        if let Some((name, v)) = reals.iter().find(|(_, v)| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::Config(alloc::format!(
                "{} must be positive, got {}",
                name,
                v
            )));
        }
        if self.warmup_epochs == 0
            || self.max_epochs == 0
            || self.batch_size == 0
            || self.patience == 0
        {
            return Err(Error::Config(
                "epochs, batch size and patience must be positive".into(),
            ));
        }
        if self.warmup_epochs > self.max_epochs {
            return Err(Error::Config(alloc::format!(
                "warmup {} exceeds max epochs {}",
                self.warmup_epochs,
                self.max_epochs
            )));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::Config("weight decay must be nonnegative".into()));
        }
        let (b1, b2) = self.betas;
        if !(0.0..1.0).contains(&b1) || !(0.0..1.0).contains(&b2) {
            return Err(Error::Config("betas must lie in [0, 1)".into()));
        }
        Ok(())
    }

    pub fn adamw(&self) -> AdamWConfig {
        AdamWConfig {
            beta1: self.betas.0,
            beta2: self.betas.1,
            eps: self.eps,
            weight_decay: self.weight_decay,
        }
    }
}

/// Learning rate for a 0-based epoch: linear warmup, then half-cosine decay.
pub fn lr_at(epoch: usize, cfg: &TrainConfig) -> f64 {
    let (e, ew, emax) = (
        epoch as f64,
        cfg.warmup_epochs as f64,
        cfg.max_epochs as f64,
    );
    if epoch < cfg.warmup_epochs {
        cfg.eta0 * (e + 1.0) / ew
    } else {
        cfg.eta0 * 0.5 * (1.0 + libm::cos(core::f64::consts::PI * (e - ew) / (emax - ew)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val: MetricReport,
}

impl EpochRecord {
    pub fn val_f1_50(&self) -> f64 {
        self.val.f1_at(0.5).unwrap_or(0.0)
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    /// Parameters of the epoch with the highest validation F1@50, the lower
    /// validation loss on ties.
    pub best: ModelParams,
    pub best_epoch: usize,
    pub last: ModelParams,
    pub history: Vec<EpochRecord>,
    pub stopped_early: bool,
}

/// Validation loss and post-processed metrics of `model` on `videos`.
pub fn evaluate(
    model: &ModelParams,
    videos: &[Video],
    loss: &LossConfig,
    matrix: &TransitionMatrix,
    post: &PostprocessConfig,
) -> Result<(f64, MetricReport)> {
    if videos.is_empty() {
        return Err(Error::Usage("evaluation needs at least one video".into()));
    }
    let mut acc = MetricAccumulator::new(Matching::Optimal);
    let mut total = 0.0;
    for v in videos {
        let mut tape = Tape::new();
        let vars = model.bind(&mut tape, false);
        let r = tape.constant(v.rgb.clone());
        let f = tape.constant(v.flow.clone());
        let pass = model.forward_on_tape::<ChaCha8Rng>(&mut tape, &vars, r, f, None)?;
        let terms = composite_on_tape(&mut tape, &pass.stage_probs, &v.labels, loss, matrix)?;
        total += tape.value(terms.total).data()[0];
        let last = *pass.stage_probs.last().expect("at least one stage");
        let pred = postprocess(&tape.value(last).argmax_rows(), post)?;
        acc.add(&pred, &v.labels)?;
    }
    Ok((total / videos.len() as f64, acc.report()?))
}

/// Gradients of the batch-mean composite loss, in parameter declaration order.
fn batch_gradients(
    model: &ModelParams,
    batch: &[&Video],
    loss: &LossConfig,
    matrix: &TransitionMatrix,
    dropout_rng: &mut ChaCha8Rng,
) -> Result<(f64, Vec<Vec<f64>>)> {
    let mut tape = Tape::new();
    let vars = model.bind(&mut tape, true);
    let mut sum = None;
    for v in batch {
        let r = tape.constant(v.rgb.clone());
        let f = tape.constant(v.flow.clone());
        let pass = model.forward_on_tape(&mut tape, &vars, r, f, Some(&mut *dropout_rng))?;
        let terms = composite_on_tape(&mut tape, &pass.stage_probs, &v.labels, loss, matrix)?;
        sum = Some(match sum {
            None => terms.total,
            Some(s) => tape.add(s, terms.total)?,
        });
    }
    let sum = sum.ok_or_else(|| Error::Usage("empty batch".into()))?;
    let mean = tape.scale(sum, 1.0 / batch.len() as f64);
    let value = tape.value(mean).data()[0];
    if !value.is_finite() {
        return Err(Error::Numerical(alloc::format!("loss is {}", value)));
    }
    tape.backward(mean)?;
    let grads = vars
        .all()
        .iter()
        .map(|&p| {
            tape.grad(p)
                .map(<[f64]>::to_vec)
                .unwrap_or_else(|| alloc::vec![0.0; tape.value(p).len()])
        })
        .collect();
    Ok((value, grads))
}

pub fn fit(
    model: ModelParams,
    train: &[Video],
    val: &[Video],
    loss: &LossConfig,
    matrix: &TransitionMatrix,
    cfg: &TrainConfig,
) -> Result<FitResult> {
    fit_with(model, train, val, loss, matrix, cfg, |_| {})
}

/// [`fit`] with a callback invoked after every epoch.
pub fn fit_with(
    mut model: ModelParams,
    train: &[Video],
    val: &[Video],
    loss: &LossConfig,
    matrix: &TransitionMatrix,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<FitResult> {
    cfg.validate()?;
    loss.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::Usage(
            "training and validation sets must be nonempty".into(),
        ));
    }
    let adamw = cfg.adamw();
    let mut state = OptimizerState::new(model.tensors());
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    dropout_rng.set_stream(1);

    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::new();
    let mut best: Option<((f64, f64), usize, ModelParams)> = None;
    let mut best_val_loss = f64::INFINITY;
    let mut stale = 0;
    let mut stopped_early = false;

    for epoch in 0..cfg.max_epochs {
        let lr = lr_at(epoch, cfg);
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&Video> = chunk.iter().map(|&i| &train[i]).collect();
            let (value, mut grads) =
                batch_gradients(&model, &batch, loss, matrix, &mut dropout_rng)
                    .map_err(|e| diverged(e, epoch, b))?;
            clip_global_norm(&mut grads, cfg.clip_norm)?;
            adamw_step(&mut model.tensors_mut(), &grads, &mut state, lr, &adamw)
                .map_err(|e| diverged(e, epoch, b))?;
            loss_sum += value * chunk.len() as f64;
        }
        let (val_loss, report) = evaluate(&model, val, loss, matrix, &cfg.postprocess)?;
        if !val_loss.is_finite() {
            return Err(Error::Numerical(alloc::format!(
                "validation loss is {} at epoch {}",
                val_loss,
                epoch
            )));
        }
        let record = EpochRecord {
            epoch,
            lr,
            train_loss: loss_sum / train.len() as f64,
            val_loss,
            val: report,
        };
        log::info!(
            "epoch {} lr {:.3e} train {:.4} val {:.4} f1@50 {:.2}",
            epoch,
            lr,
            record.train_loss,
            val_loss,
            record.val_f1_50()
        );
        let key = (record.val_f1_50(), -val_loss);
        if best.as_ref().is_none_or(|(b, _, _)| key > *b) {
            best = Some((key, epoch, model.clone()));
        }
        on_epoch(&record);
        history.push(record);
        if val_loss < best_val_loss {
            best_val_loss = val_loss;
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                stopped_early = true;
                break;
            }
        }
    }
    let (_, best_epoch, best) = best.expect("at least one epoch");
    Ok(FitResult {
        best,
        best_epoch,
        last: model,
        history,
        stopped_early,
    })
}

fn diverged(e: Error, epoch: usize, batch: usize) -> Error {
    match e {
        Error::Numerical(msg) => {
            Error::Numerical(alloc::format!("{} (epoch {}, batch {})", msg, epoch, batch))
        }
        other => other,
    }
}
