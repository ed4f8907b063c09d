//! Truncated-BPTT training with the three masked objectives.

mod loss;
mod nadam;

pub use loss::{
    loss_dynamics_masked, loss_play, loss_replay_masked, masked_losses, window_loss, LossBreakdown,
    LossVars,
};
pub use nadam::{nadam_step, NadamConfig, OptState, OptimError};

use crate::midi::NoteRoll;
use crate::model::{AxisState, Dropout, Model, ModelError, ModelVars, StyleVector, WindowInput};
use crate::rng::{derive, rng_from};
use crate::tensor::{finite_diff_check, GradCheckReport, ParamGrads, ParamStore, Real, Tape, TensorError};
use alloc::string::String;
use alloc::vec::Vec;
use rand::seq::SliceRandom;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error("training set is empty")]
    EmptyDataset,
    #[error("invalid training config: {0}")]
    Config(&'static str),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error("epoch observer failed: {0}")]
    Observer(String),
}

impl From<TensorError> for TrainError {
    fn from(e: TensorError) -> Self {
        TrainError::Model(e.into())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Window length for truncated backpropagation; a whole number of bars.
    pub tbptt_steps: usize,
    pub dropout_hidden: f64,
    pub dropout_input: f64,
    pub optimizer: NadamConfig,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Play, replay, dynamics.
    pub loss_weights: [f64; 3],
    /// Optional cap on the global gradient norm.
    pub grad_clip: Option<f64>,
    pub validation_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            tbptt_steps: 8 * 16,
            dropout_hidden: 0.5,
            dropout_input: 0.2,
            optimizer: NadamConfig::default(),
            batch_size: 1,
            epochs: 1,
            seed: 0,
            loss_weights: [1.0; 3],
            grad_clip: None,
            validation_fraction: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, steps_per_bar: usize) -> Result<(), TrainError> {
        if !(0.0..1.0).contains(&self.dropout_hidden) || !(0.0..1.0).contains(&self.dropout_input) {
            return Err(TrainError::Config("dropout rates must lie in [0, 1)"));
        }
        if self.tbptt_steps == 0 || steps_per_bar == 0 || !self.tbptt_steps.is_multiple_of(steps_per_bar) {
            return Err(TrainError::Config("tbptt_steps must be a positive multiple of the bar length"));
        }
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch_size must be positive"));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(TrainError::Config("validation_fraction must lie in [0, 1)"));
        }
        if self.optimizer.lr <= 0.0 || self.optimizer.eps <= 0.0 {
            return Err(TrainError::Config("learning rate and epsilon must be positive"));
        }
        if self.loss_weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(TrainError::Config("loss weights must be finite and non-negative"));
        }
        Ok(())
    }

    fn dropout(&self, seed: u64) -> Dropout {
        Dropout {
            training: true,
            input: self.dropout_input,
            hidden: self.dropout_hidden,
            seed,
        }
    }
}

/// One training piece with its style.
#[derive(Debug, Clone)]
pub struct Example {
    pub roll: NoteRoll,
    pub style: StyleVector,
    pub composer: usize,
}

/// Splits pieces into (train, validation) indices: per composer, a seeded
/// shuffle and `round(fraction · count)` held out, at least one when the
/// composer has two or more pieces and `fraction > 0`.
pub fn split_validation(examples: &[Example], fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut composers: Vec<usize> = examples.iter().map(|e| e.composer).collect();
    composers.sort_unstable();
    composers.dedup();
    let mut train = Vec::new();
    let mut val = Vec::new();
    for c in composers {
        let mut idx: Vec<usize> = (0..examples.len()).filter(|&i| examples[i].composer == c).collect();
        idx.shuffle(&mut rng_from(derive(seed, &[0x5e1, c as u64])));
        let n = idx.len();
        let mut held = libm::round(fraction * n as f64) as usize;
        if fraction > 0.0 && n >= 2 {
            held = held.max(1);
        }
        held = held.min(n.saturating_sub(1));
        val.extend_from_slice(&idx[..held]);
        train.extend_from_slice(&idx[held..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochReport {
    pub epoch: usize,
    pub steps: u64,
    pub train: LossBreakdown,
    pub validation: Option<LossBreakdown>,
    /// Validation loss improved on every earlier epoch of this run.
    pub is_best: bool,
}

/// Receives progress; used to write logs and checkpoints.
pub trait TrainObserver<F: Real> {
    fn on_step(&mut self, _epoch: usize, _step: u64, _loss: &LossBreakdown) {}

    fn on_epoch(
        &mut self,
        _report: &EpochReport,
        _model: &Model<F>,
        _opt: &OptState<F>,
    ) -> Result<(), String> {
        Ok(())
    }
}

/// Observer that does nothing.
pub struct Quiet;

impl<F: Real> TrainObserver<F> for Quiet {}

/// Result of one optimizer step.
#[derive(Debug, Clone)]
pub struct StepOutcome<F> {
    pub loss: LossBreakdown,
    pub final_state: AxisState<F>,
}

/// Loss and gradients of one window without touching the parameters.
pub fn window_gradients<F: Real>(
    model: &Model<F>,
    input: &WindowInput<'_>,
    state: &AxisState<F>,
    drop: &Dropout,
    weights: [f64; 3],
) -> Result<(LossBreakdown, ParamGrads<F>, AxisState<F>), TrainError> {
    let mut tape = Tape::new();
    let vars = ModelVars::register(&mut tape, model);
    let out = model.forward_window(&mut tape, &vars, input, state, drop)?;
    let (loss, breakdown) = window_loss(&mut tape, &out, weights)?;
    let grads = tape.backward(loss.total, model.params())?;
    Ok((breakdown, grads, out.final_state))
}

/// Forward, backward and one Nadam update on a single window.
pub fn train_step<F: Real>(
    model: &mut Model<F>,
    opt: &mut OptState<F>,
    input: &WindowInput<'_>,
    state: &AxisState<F>,
    drop: &Dropout,
    config: &TrainConfig,
) -> Result<StepOutcome<F>, TrainError> {
    let (loss, mut grads, final_state) =
        window_gradients(model, input, state, drop, config.loss_weights)?;
    if let Some(cap) = config.grad_clip {
        let norm = grads.global_norm().to_f64();
        if norm > cap && norm > 0.0 {
            grads.scale(F::from_f64(cap / norm));
        }
    }
    nadam_step(model.params_mut(), &grads, opt)?;
    Ok(StepOutcome { loss, final_state })
}

/// Teacher-forced losses (no dropout) over whole pieces, each scored under
/// the style given alongside it.
pub fn evaluate<F: Real>(
    model: &Model<F>,
    pieces: &[(&NoteRoll, &StyleVector)],
    window: usize,
) -> Result<LossBreakdown, TrainError> {
    let cfg = model.config();
    let mut total = LossBreakdown::default();
    for &(roll, style) in pieces {
        let mut state = AxisState::zeros(cfg.layers_per_axis, cfg.notes, cfg.time_units);
        let mut start = 0;
        while start < roll.steps() {
            let len = window.max(1).min(roll.steps() - start);
            let mut tape = Tape::new();
            let vars = ModelVars::register(&mut tape, model);
            let rolls = [roll];
            let styles = [style];
            let input = WindowInput {
                rolls: &rolls,
                styles: &styles,
                start,
                len,
            };
            let out = model.forward_window(&mut tape, &vars, &input, &state, &Dropout::inference())?;
            let (_, b) = window_loss(&mut tape, &out, [1.0; 3])?;
            total = total.merge(&b);
            state = out.final_state;
            start += len;
        }
    }
    Ok(total)
}

/// Runs epochs `start_epoch..config.epochs`.
///
/// Each epoch shuffles the training pieces (seeded by epoch), groups them
/// into batches, and walks each batch in `tbptt_steps` windows: state
/// carries across windows of a batch and resets between batches, while
/// gradients stop at window boundaries. Shorter pieces are padded and the
/// padding is excluded from every loss.
pub fn train<F: Real>(
    model: &mut Model<F>,
    opt: &mut OptState<F>,
    data: &[Example],
    config: &TrainConfig,
    start_epoch: usize,
    observer: &mut dyn TrainObserver<F>,
) -> Result<Vec<EpochReport>, TrainError> {
    if data.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    config.validate(model.config().beat_dim)?;
    let (train_idx, val_idx) = split_validation(data, config.validation_fraction, config.seed);
    if train_idx.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let cfg = model.config().clone();
    let mut reports = Vec::new();
    let mut best = f64::INFINITY;

    for epoch in start_epoch..config.epochs {
        let mut order = train_idx.clone();
        order.shuffle(&mut rng_from(derive(config.seed, &[0xe0, epoch as u64])));
        let mut epoch_loss = LossBreakdown::default();
        for (bi, chunk) in order.chunks(config.batch_size).enumerate() {
            let rolls: Vec<&NoteRoll> = chunk.iter().map(|&i| &data[i].roll).collect();
            let styles: Vec<&StyleVector> = chunk.iter().map(|&i| &data[i].style).collect();
            let longest = rolls.iter().map(|r| r.steps()).max().unwrap_or(0);
            let mut state = AxisState::zeros(cfg.layers_per_axis, rolls.len() * cfg.notes, cfg.time_units);
            let mut start = 0;
            let mut wi = 0u64;
            while start < longest {
                let len = config.tbptt_steps.min(longest - start);
                let input = WindowInput {
                    rolls: &rolls,
                    styles: &styles,
                    start,
                    len,
                };
                let drop = config.dropout(derive(config.seed, &[0xd0, epoch as u64, bi as u64, wi]));
                let outcome = train_step(model, opt, &input, &state, &drop, config)?;
                observer.on_step(epoch, opt.step, &outcome.loss);
                epoch_loss = epoch_loss.merge(&outcome.loss);
                state = outcome.final_state;
                start += len;
                wi += 1;
            }
        }
        let validation = if val_idx.is_empty() {
            None
        } else {
            let pieces: Vec<_> = val_idx.iter().map(|&i| (&data[i].roll, &data[i].style)).collect();
            Some(evaluate(model, &pieces, config.tbptt_steps)?)
        };
        let is_best = match &validation {
            Some(v) if v.total < best => {
                best = v.total;
                true
            }
            _ => false,
        };
        let report = EpochReport {
            epoch,
            steps: opt.step,
            train: epoch_loss,
            validation,
            is_best,
        };
        observer
            .on_epoch(&report, model, opt)
            .map_err(TrainError::Observer)?;
        reports.push(report);
    }
    Ok(reports)
}

/// Central-difference check of the full teacher-forced loss of `roll`
/// processed as a single window from a zero state. `drop` should be a
/// training configuration with a fixed seed, which freezes its masks.
pub fn model_gradcheck(
    model: &Model<f64>,
    roll: &NoteRoll,
    style: &StyleVector,
    drop: &Dropout,
    samples: usize,
    eps: f64,
    seed: u64,
) -> Result<GradCheckReport, TrainError> {
    let cfg = model.config().clone();
    let rolls = [roll];
    let styles = [style];
    let input = WindowInput {
        rolls: &rolls,
        styles: &styles,
        start: 0,
        len: roll.steps(),
    };
    let state = AxisState::zeros(cfg.layers_per_axis, cfg.notes, cfg.time_units);
    let (_, grads, _) = window_gradients(model, &input, &state, drop, [1.0; 3])?;
    let loss = |params: &ParamStore<f64>| -> Result<f64, TrainError> {
        let m = Model::from_params(cfg.clone(), params.clone())?;
        let mut tape = Tape::new();
        let vars = ModelVars::register(&mut tape, &m);
        let out = m.forward_window(&mut tape, &vars, &input, &state, drop)?;
        let (l, _) = window_loss(&mut tape, &out, [1.0; 3])?;
        Ok(tape.value(l.total).item())
    };
    finite_diff_check(model.params(), &grads, loss, eps, samples, seed)
}
