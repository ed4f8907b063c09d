use super::{Model, ModelConfig, StyleError, StyleVector, INPUT_CHANNELS, PITCH_CLASSES};
use crate::midi::{beat_index, NoteRoll};
use crate::rng::derive;
use crate::tensor::{dropout, lstm_cell, LstmWeights, Real, Tape, Tensor, TensorError, Var};
use alloc::vec;
use alloc::vec::Vec;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Style(#[from] StyleError),
    #[error("window input: {0}")]
    Input(&'static str),
}

/// Dropout settings for one forward pass. Masks are derived from `seed`
/// and the site, so a repeated pass with the same seed reuses them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dropout {
    pub training: bool,
    pub input: f64,
    pub hidden: f64,
    pub seed: u64,
}

impl Dropout {
    pub const fn inference() -> Self {
        Self {
            training: false,
            input: 0.0,
            hidden: 0.0,
            seed: 0,
        }
    }

    fn site(&self, parts: &[u64]) -> u64 {
        derive(self.seed, parts)
    }
}

const SITE_TIME_INPUT: u64 = 0;
const SITE_TIME_LAYER: u64 = 1;
const SITE_NOTE_LAYER: u64 = 2;

#[derive(Debug, Clone, Copy)]
pub struct LayerVars {
    pub cond: Var,
    pub lstm: LstmWeights,
}

/// Every parameter recorded once on a tape.
#[derive(Debug, Clone)]
pub struct ModelVars {
    pub style_embed: Var,
    pub conv_kernel: Var,
    pub conv_bias: Var,
    pub time: Vec<LayerVars>,
    pub note: Vec<LayerVars>,
    pub head_weight: Var,
    pub head_bias: Var,
}

impl ModelVars {
    pub fn register<F: Real>(tape: &mut Tape<F>, model: &Model<F>) -> Self {
        let store = model.params();
        let ids = model.ids();
        let layer = |tape: &mut Tape<F>, l: &super::LayerIds| LayerVars {
            cond: tape.param(store, l.cond),
            lstm: LstmWeights {
                w_x: tape.param(store, l.w_x),
                w_h: tape.param(store, l.w_h),
                bias: tape.param(store, l.bias),
            },
        };
        let style_embed = tape.param(store, ids.style_embed);
        let conv_kernel = tape.param(store, ids.conv_kernel);
        let conv_bias = tape.param(store, ids.conv_bias);
        let time = ids.time.iter().map(|l| layer(tape, l)).collect();
        let note = ids.note.iter().map(|l| layer(tape, l)).collect();
        Self {
            style_embed,
            conv_kernel,
            conv_bias,
            time,
            note,
            head_weight: tape.param(store, ids.head_weight),
            head_bias: tape.param(store, ids.head_bias),
        }
    }
}

/// Style embedding and its per-layer projections, one row per batch item.
#[derive(Debug, Clone)]
pub struct StyleContext {
    pub embedding: Var,
    pub time: Vec<Var>,
    pub note: Vec<Var>,
}

/// Recurrent `(h, c)` per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisState<F> {
    pub layers: Vec<(Tensor<F>, Tensor<F>)>,
}

impl<F: Real> AxisState<F> {
    pub fn zeros(layers: usize, rows: usize, hidden: usize) -> Self {
        Self {
            layers: (0..layers)
                .map(|_| (Tensor::zeros(rows, hidden), Tensor::zeros(rows, hidden)))
                .collect(),
        }
    }
}

/// Row layout of a note-axis sweep over `steps × batch` independent rows.
///
/// Stacked time-axis features index as `(t * batch + b) * notes + n`; the
/// sweep's rows (and its outputs per note) index as `b * steps + t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SweepLayout {
    pub steps: usize,
    pub batch: usize,
    pub notes: usize,
}

impl SweepLayout {
    pub fn rows(&self) -> usize {
        self.steps * self.batch
    }

    fn feature_rows(&self, note: usize) -> Vec<usize> {
        let mut idx = Vec::with_capacity(self.rows());
        for b in 0..self.batch {
            for t in 0..self.steps {
                idx.push((t * self.batch + b) * self.notes + note);
            }
        }
        idx
    }
}

/// Supplies the note-axis with the choice made for each note, which the
/// next higher note receives as input.
pub trait NoteChooser<F: Real> {
    /// `logits` are the `rows × 3` head pre-activations for `note`; the
    /// result is `rows × chosen width`.
    fn choose(&mut self, note: usize, logits: &Tensor<F>) -> Tensor<F>;
}

/// Feeds ground-truth choices (teacher forcing).
pub struct TeacherChooser<'a, F> {
    targets: &'a Tensor<F>,
    rows: usize,
    width: usize,
}

impl<'a, F: Real> TeacherChooser<'a, F> {
    /// `targets` is `(notes · rows) × 3`, note-major.
    pub fn new(targets: &'a Tensor<F>, rows: usize, width: usize) -> Self {
        Self {
            targets,
            rows,
            width,
        }
    }
}

impl<F: Real> NoteChooser<F> for TeacherChooser<'_, F> {
    fn choose(&mut self, note: usize, _logits: &Tensor<F>) -> Tensor<F> {
        let mut out = Tensor::zeros(self.rows, self.width);
        for r in 0..self.rows {
            let src = self.targets.row(note * self.rows + r);
            for (c, &v) in src.iter().take(self.width).enumerate() {
                out.set(r, c, v);
            }
        }
        out
    }
}

/// Head outputs for one note at one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NotePrediction {
    pub play_prob: f64,
    pub replay_prob: f64,
    pub dynamics: f64,
}

impl NotePrediction {
    pub fn from_logits(logits: [f64; 3]) -> Self {
        Self {
            play_prob: logits[0].sigmoid(),
            replay_prob: logits[1].sigmoid(),
            dynamics: logits[2].sigmoid(),
        }
    }
}

/// A batch of pieces processed over steps `[start, start + len)`.
/// Steps past the end of a piece are padding and carry zero validity.
pub struct WindowInput<'a> {
    pub rolls: &'a [&'a NoteRoll],
    pub styles: &'a [&'a StyleVector],
    pub start: usize,
    pub len: usize,
}

pub struct WindowOutput<F> {
    /// `(notes · rows) × 3` head pre-activations, layout per [`SweepLayout`].
    pub logits: Var,
    pub probs: Var,
    /// Ground truth in the same layout.
    pub targets: Tensor<F>,
    /// 1 for real cells, 0 for padding; one entry per output row.
    pub valid: Vec<F>,
    pub layout: SweepLayout,
    pub final_state: AxisState<F>,
}

/// `x + cond[r / group]` for every row `r`: the style projection is shared
/// by all notes of a batch item.
pub fn condition_input<F: Real>(
    tape: &mut Tape<F>,
    x: Var,
    cond: Var,
    group: usize,
) -> Result<Var, TensorError> {
    tape.add_grouped(x, cond, group)
}

fn triple_at<F: Real>(roll: &NoteRoll, note: usize, step: Option<usize>) -> [F; 3] {
    match step {
        Some(t) if t < roll.steps() => roll.triple(note, t).map(|v| F::from_f64(f64::from(v))),
        _ => [F::ZERO; 3],
    }
}

impl<F: Real> Model<F> {
    /// Embeds each batch item's style and projects it for every LSTM layer.
    pub fn style_context(
        &self,
        tape: &mut Tape<F>,
        vars: &ModelVars,
        styles: &[&StyleVector],
    ) -> Result<StyleContext, ModelError> {
        let cfg = self.config();
        let mut data = Vec::with_capacity(styles.len() * cfg.styles);
        for s in styles {
            if s.len() != cfg.styles {
                return Err(StyleError::DimensionMismatch {
                    expected: cfg.styles,
                    got: s.len(),
                }
                .into());
            }
            data.extend(s.weights().iter().map(|&w| F::from_f64(w)));
        }
        let s = tape.constant(Tensor::from_vec(styles.len(), cfg.styles, data)?);
        let embedding = tape.matmul(s, vars.style_embed)?;
        let mut project = |layers: &[LayerVars]| -> Result<Vec<Var>, TensorError> {
            layers
                .iter()
                .map(|l| {
                    let z = tape.matmul(embedding, l.cond)?;
                    Ok(tape.tanh(z))
                })
                .collect()
        };
        let time = project(&vars.time)?;
        let note = project(&vars.note)?;
        Ok(StyleContext {
            embedding,
            time,
            note,
        })
    }

    /// Per-note time-axis input at `step` from the previous step's cells.
    ///
    /// `prev` is `(batch · notes) × 3`. Output is
    /// `(batch · notes) × (filters + q [+ 12])`: tanh of the octave
    /// convolution, then the beat one-hot, then the pitch class.
    pub fn assemble_note_inputs(
        &self,
        tape: &mut Tape<F>,
        vars: &ModelVars,
        prev: Tensor<F>,
        step: usize,
    ) -> Result<Var, ModelError> {
        let cfg = self.config();
        if prev.cols() != INPUT_CHANNELS || !prev.rows().is_multiple_of(cfg.notes) {
            return Err(TensorError::ShapeMismatch {
                op: "assemble_note_inputs",
                lhs: prev.shape(),
                rhs: crate::tensor::Shape::new(cfg.notes, INPUT_CHANNELS),
            }
            .into());
        }
        let rows = prev.rows();
        let prev = tape.constant(prev);
        let conv = tape.conv1d(prev, vars.conv_kernel, vars.conv_bias, cfg.notes, cfg.conv_width)?;
        let conv = tape.tanh(conv);
        let mut beat = Tensor::zeros(rows, cfg.beat_dim);
        let col = beat_index(step, cfg.beat_dim);
        for r in 0..rows {
            beat.set(r, col, F::ONE);
        }
        let beat = tape.constant(beat);
        let mut parts = vec![conv, beat];
        if cfg.pitch_class {
            parts.push(tape.constant(pitch_classes(cfg, rows)));
        }
        Ok(tape.concat_cols(&parts)?)
    }

    /// Two (or more) stacked LSTMs recurrent in time, the same weights for
    /// every note row. Returns the top layer's output and the new state.
    #[allow(clippy::too_many_arguments)]
    pub fn time_axis_step(
        &self,
        tape: &mut Tape<F>,
        vars: &ModelVars,
        features: Var,
        state: &[(Var, Var)],
        ctx: &StyleContext,
        drop: &Dropout,
        step: usize,
    ) -> Result<(Var, Vec<(Var, Var)>), ModelError> {
        let notes = self.config().notes;
        let step = step as u64;
        let mut x = dropout(
            tape,
            features,
            drop.input,
            drop.site(&[SITE_TIME_INPUT, step]),
            drop.training,
        )?;
        let mut next = Vec::with_capacity(vars.time.len());
        for (l, layer) in vars.time.iter().enumerate() {
            let xc = condition_input(tape, x, ctx.time[l], notes)?;
            let (h, c) = lstm_cell(tape, xc, state[l].0, state[l].1, &layer.lstm)?;
            next.push((h, c));
            x = dropout(
                tape,
                h,
                drop.hidden,
                drop.site(&[SITE_TIME_LAYER, l as u64, step]),
                drop.training,
            )?;
        }
        Ok((x, next))
    }

    /// Sweeps notes low to high. Note `n` sees its time-axis features
    /// concatenated with the choice for note `n - 1` (zeros for the lowest
    /// note), runs the note-axis LSTMs and the heads, then asks `chooser`
    /// what was chosen. Returns `(notes · rows) × 3` logits.
    #[allow(clippy::too_many_arguments)]
    pub fn note_axis_sweep(
        &self,
        tape: &mut Tape<F>,
        vars: &ModelVars,
        features: Var,
        layout: SweepLayout,
        chooser: &mut dyn NoteChooser<F>,
        ctx: &StyleContext,
        drop: &Dropout,
    ) -> Result<Var, ModelError> {
        let cfg = self.config();
        let rows = layout.rows();
        let width = cfg.chosen.width();
        let mut state: Vec<(Var, Var)> = vars
            .note
            .iter()
            .map(|_| {
                let h = tape.constant(Tensor::zeros(rows, cfg.note_units));
                let c = tape.constant(Tensor::zeros(rows, cfg.note_units));
                (h, c)
            })
            .collect();
        let mut prev = tape.constant(Tensor::zeros(rows, width));
        let mut outputs = Vec::with_capacity(cfg.notes);
        for n in 0..cfg.notes {
            let feat = tape.gather_rows(features, layout.feature_rows(n))?;
            let mut x = tape.concat_cols(&[feat, prev])?;
            for (l, layer) in vars.note.iter().enumerate() {
                let xc = condition_input(tape, x, ctx.note[l], layout.steps)?;
                let (h, c) = lstm_cell(tape, xc, state[l].0, state[l].1, &layer.lstm)?;
                state[l] = (h, c);
                x = dropout(
                    tape,
                    h,
                    drop.hidden,
                    drop.site(&[SITE_NOTE_LAYER, l as u64, n as u64]),
                    drop.training,
                )?;
            }
            let z = tape.matmul(x, vars.head_weight)?;
            let logits = tape.add_row(z, vars.head_bias)?;
            let chosen = chooser.choose(n, tape.value(logits));
            if chosen.rows() != rows || chosen.cols() != width {
                return Err(TensorError::ShapeMismatch {
                    op: "note chooser",
                    lhs: chosen.shape(),
                    rhs: crate::tensor::Shape::new(rows, width),
                }
                .into());
            }
            prev = tape.constant(chosen);
            outputs.push(logits);
        }
        Ok(tape.stack_rows(&outputs)?)
    }

    /// Teacher-forced pass over one window of a batch of pieces.
    pub fn forward_window(
        &self,
        tape: &mut Tape<F>,
        vars: &ModelVars,
        input: &WindowInput<'_>,
        state: &AxisState<F>,
        drop: &Dropout,
    ) -> Result<WindowOutput<F>, ModelError> {
        let cfg = self.config();
        let batch = input.rolls.len();
        if batch == 0 || input.styles.len() != batch {
            return Err(ModelError::Input("need one style per piece and at least one piece"));
        }
        if input.len == 0 {
            return Err(ModelError::Input("empty window"));
        }
        if input.rolls.iter().any(|r| r.notes() != cfg.notes) {
            return Err(ModelError::Input("roll height differs from the model's note count"));
        }
        if state.layers.len() != cfg.layers_per_axis
            || state.layers.iter().any(|(h, _)| h.rows() != batch * cfg.notes)
        {
            return Err(ModelError::Input("time-axis state does not match the batch"));
        }
        let ctx = self.style_context(tape, vars, input.styles)?;
        let mut st: Vec<(Var, Var)> = state
            .layers
            .iter()
            .map(|(h, c)| (tape.constant(h.clone()), tape.constant(c.clone())))
            .collect();

        let mut step_outputs = Vec::with_capacity(input.len);
        for local in 0..input.len {
            let t = input.start + local;
            let mut prev = Tensor::zeros(batch * cfg.notes, INPUT_CHANNELS);
            for (b, roll) in input.rolls.iter().enumerate() {
                let src = t.checked_sub(1);
                for n in 0..cfg.notes {
                    let v = triple_at::<F>(roll, n, src);
                    for (c, &x) in v.iter().enumerate() {
                        prev.set(b * cfg.notes + n, c, x);
                    }
                }
            }
            let features = self.assemble_note_inputs(tape, vars, prev, t)?;
            let (out, next) = self.time_axis_step(tape, vars, features, &st, &ctx, drop, t)?;
            st = next;
            step_outputs.push(out);
        }
        let stacked = tape.stack_rows(&step_outputs)?;

        let layout = SweepLayout {
            steps: input.len,
            batch,
            notes: cfg.notes,
        };
        let rows = layout.rows();
        let mut targets = Tensor::zeros(cfg.notes * rows, 3);
        let mut valid = vec![F::ZERO; cfg.notes * rows];
        for n in 0..cfg.notes {
            for (b, roll) in input.rolls.iter().enumerate() {
                for local in 0..input.len {
                    let t = input.start + local;
                    let r = n * rows + b * input.len + local;
                    if t < roll.steps() {
                        valid[r] = F::ONE;
                        let v = triple_at::<F>(roll, n, Some(t));
                        for (c, &x) in v.iter().enumerate() {
                            targets.set(r, c, x);
                        }
                    }
                }
            }
        }
        let mut teacher = TeacherChooser::new(&targets, rows, cfg.chosen.width());
        let logits = self.note_axis_sweep(tape, vars, stacked, layout, &mut teacher, &ctx, drop)?;
        let probs = tape.sigmoid(logits);
        let final_state = AxisState {
            layers: st
                .iter()
                .map(|&(h, c)| (tape.value(h).clone(), tape.value(c).clone()))
                .collect(),
        };
        Ok(WindowOutput {
            logits,
            probs,
            targets,
            valid,
            layout,
            final_state,
        })
    }

    /// Time-axis outputs (`notes × time_units` per step) for the first
    /// `steps` steps of `roll`, without dropout.
    pub fn time_axis_outputs(
        &self,
        roll: &NoteRoll,
        style: &StyleVector,
        steps: usize,
    ) -> Result<Vec<Tensor<F>>, ModelError> {
        let cfg = self.config();
        if roll.notes() != cfg.notes {
            return Err(ModelError::Input("roll height differs from the model's note count"));
        }
        let drop = Dropout::inference();
        let mut state = AxisState::zeros(cfg.layers_per_axis, cfg.notes, cfg.time_units);
        let mut out = Vec::with_capacity(steps);
        for t in 0..steps {
            let mut tape = Tape::new();
            let vars = ModelVars::register(&mut tape, self);
            let ctx = self.style_context(&mut tape, &vars, &[style])?;
            let mut prev = Tensor::zeros(cfg.notes, INPUT_CHANNELS);
            for n in 0..cfg.notes {
                for (c, &x) in triple_at::<F>(roll, n, t.checked_sub(1)).iter().enumerate() {
                    prev.set(n, c, x);
                }
            }
            let features = self.assemble_note_inputs(&mut tape, &vars, prev, t)?;
            let st: Vec<(Var, Var)> = state
                .layers
                .iter()
                .map(|(h, c)| (tape.constant(h.clone()), tape.constant(c.clone())))
                .collect();
            let (y, next) = self.time_axis_step(&mut tape, &vars, features, &st, &ctx, &drop, t)?;
            out.push(tape.value(y).clone());
            state = AxisState {
                layers: next
                    .iter()
                    .map(|&(h, c)| (tape.value(h).clone(), tape.value(c).clone()))
                    .collect(),
            };
        }
        Ok(out)
    }

    /// Teacher-forced predictions for a whole piece, `steps × notes`.
    ///
    /// The piece is processed in windows of `window` steps with the
    /// time-axis state carried between them. Dropout is active iff
    /// `drop.training`.
    pub fn predict(
        &self,
        roll: &NoteRoll,
        style: &StyleVector,
        drop: &Dropout,
        window: usize,
    ) -> Result<Vec<Vec<NotePrediction>>, ModelError> {
        let cfg = self.config();
        let window = window.max(1);
        let mut state = AxisState::zeros(cfg.layers_per_axis, cfg.notes, cfg.time_units);
        let mut out = Vec::with_capacity(roll.steps());
        let mut start = 0;
        while start < roll.steps() {
            let len = window.min(roll.steps() - start);
            let mut tape = Tape::new();
            let vars = ModelVars::register(&mut tape, self);
            let rolls = [roll];
            let styles = [style];
            let input = WindowInput {
                rolls: &rolls,
                styles: &styles,
                start,
                len,
            };
            let w_drop = Dropout {
                seed: derive(drop.seed, &[start as u64]),
                ..*drop
            };
            let o = self.forward_window(&mut tape, &vars, &input, &state, &w_drop)?;
            let logits = tape.value(o.logits);
            for local in 0..len {
                let row = (0..cfg.notes)
                    .map(|n| {
                        let l = logits.row(n * len + local);
                        NotePrediction::from_logits([l[0].to_f64(), l[1].to_f64(), l[2].to_f64()])
                    })
                    .collect();
                out.push(row);
            }
            state = o.final_state;
            start += len;
        }
        Ok(out)
    }
}

fn pitch_classes<F: Real>(cfg: &ModelConfig, rows: usize) -> Tensor<F> {
    let mut t = Tensor::zeros(rows, PITCH_CLASSES);
    for r in 0..rows {
        let n = r % cfg.notes;
        let pc = (usize::from(cfg.pitch_low) + n) % PITCH_CLASSES;
        t.set(r, pc, F::ONE);
    }
    t
}
