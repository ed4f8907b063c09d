//! The biaxial network with style conditioning.
//!
//! Per time step, a 1-D convolution over the note axis turns the previous
//! step's `(play, replay, dynamics)` into per-note features, which are
//! joined with the beat one-hot (and optionally a pitch-class one-hot) and
//! fed to two stacked LSTMs recurrent in time, weights shared across notes.
//! A second pair of LSTMs then sweeps the notes from low to high, each note
//! seeing its time-axis features and the choice made for the note below it,
//! and emits play, replay and dynamics through sigmoid heads.
//!
//! A style mixture `s` is embedded as `h = s·W`. Before every LSTM layer
//! `l`, `tanh(h·W'_l)` is added to every note's input.

mod forward;
mod style;

pub use forward::{
    condition_input, AxisState, Dropout, LayerVars, ModelError, ModelVars, NoteChooser, NotePrediction, StyleContext, SweepLayout, TeacherChooser,
    WindowInput, WindowOutput,
};
pub use style::{Composer, StyleCatalog, StyleError, StyleVector};

use crate::rng::{derive, rng_from};
use crate::tensor::{ParamId, ParamStore, Real, Tensor, TensorError};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;

/// What the note-axis sees of the note chosen just below.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChosenSignal {
    /// `(play, replay, dynamics)`.
    Triple,
    /// Play bit only.
    PlayOnly,
}

impl ChosenSignal {
    pub fn width(self) -> usize {
        match self {
            ChosenSignal::Triple => 3,
            ChosenSignal::PlayOnly => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub notes: usize,
    /// MIDI pitch of row 0; used for the pitch-class channels.
    pub pitch_low: u8,
    pub time_units: usize,
    pub note_units: usize,
    pub embed_dim: usize,
    pub conv_filters: usize,
    pub conv_width: usize,
    pub layers_per_axis: usize,
    pub beat_dim: usize,
    pub pitch_class: bool,
    pub styles: usize,
    pub chosen: ChosenSignal,
}

/// Per-note input channels: play, replay, dynamics.
pub const INPUT_CHANNELS: usize = 3;
/// Output heads: play, replay, dynamics.
pub const HEADS: usize = 3;
pub(crate) const PITCH_CLASSES: usize = 12;
const FORGET_BIAS: f64 = 1.0;

impl ModelConfig {
    /// Full-size configuration for `styles` composers.
    pub fn new(styles: usize) -> Self {
        Self {
            notes: 48,
            pitch_low: 36,
            time_units: 256,
            note_units: 128,
            embed_dim: 64,
            conv_filters: 64,
            conv_width: 25,
            layers_per_axis: 2,
            beat_dim: 16,
            pitch_class: true,
            styles,
            chosen: ChosenSignal::Triple,
        }
    }

    pub fn validate(&self) -> Result<(), TensorError> {
        let dims = [
            self.notes,
            self.time_units,
            self.note_units,
            self.embed_dim,
            self.conv_filters,
            self.conv_width,
            self.layers_per_axis,
            self.beat_dim,
            self.styles,
        ];
        if dims.contains(&0) {
            return Err(TensorError::Invalid("model dimensions must be positive"));
        }
        if self.conv_width.is_multiple_of(2) {
            return Err(TensorError::Invalid("convolution width must be odd"));
        }
        if usize::from(self.pitch_low) + self.notes > 128 {
            return Err(TensorError::Invalid("note rows exceed the MIDI pitch range"));
        }
        Ok(())
    }

    /// Width of the time-axis input per note: conv features, beat, pitch class.
    pub fn time_input_dim(&self) -> usize {
        self.conv_filters + self.beat_dim + if self.pitch_class { PITCH_CLASSES } else { 0 }
    }

    pub fn note_input_dim(&self) -> usize {
        self.time_units + self.chosen.width()
    }

    fn layer_dims(&self, axis: Axis) -> Vec<(usize, usize)> {
        let (first, hidden) = match axis {
            Axis::Time => (self.time_input_dim(), self.time_units),
            Axis::Note => (self.note_input_dim(), self.note_units),
        };
        (0..self.layers_per_axis)
            .map(|l| (if l == 0 { first } else { hidden }, hidden))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Axis {
    Time,
    Note,
}

impl Axis {
    fn prefix(self) -> &'static str {
        match self {
            Axis::Time => "time",
            Axis::Note => "note",
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct LayerIds {
    pub cond: ParamId,
    pub w_x: ParamId,
    pub w_h: ParamId,
    pub bias: ParamId,
}

#[derive(Debug, Clone)]
pub(crate) struct ParamIds {
    pub style_embed: ParamId,
    pub conv_kernel: ParamId,
    pub conv_bias: ParamId,
    pub time: Vec<LayerIds>,
    pub note: Vec<LayerIds>,
    pub head_weight: ParamId,
    pub head_bias: ParamId,
}

/// Parameter names and shapes, in store order.
pub fn param_layout(config: &ModelConfig) -> Vec<(String, usize, usize)> {
    let mut out = vec![
        ("style.embed".into(), config.styles, config.embed_dim),
        (
            "conv.kernel".into(),
            config.conv_width * INPUT_CHANNELS,
            config.conv_filters,
        ),
        ("conv.bias".into(), 1, config.conv_filters),
    ];
    for axis in [Axis::Time, Axis::Note] {
        for (l, (input, hidden)) in config.layer_dims(axis).into_iter().enumerate() {
            let p = axis.prefix();
            out.push((format!("{p}.{l}.cond"), config.embed_dim, input));
            out.push((format!("{p}.{l}.w_x"), input, 4 * hidden));
            out.push((format!("{p}.{l}.w_h"), hidden, 4 * hidden));
            out.push((format!("{p}.{l}.bias"), 1, 4 * hidden));
        }
    }
    out.push(("head.weight".into(), config.note_units, HEADS));
    out.push(("head.bias".into(), 1, HEADS));
    out
}

fn resolve_ids<F: Real>(config: &ModelConfig, store: &ParamStore<F>) -> Result<ParamIds, TensorError> {
    for (name, rows, cols) in param_layout(config) {
        let t = store
            .by_name(&name)
            .ok_or_else(|| TensorError::UnknownParam(name.clone()))?;
        if t.rows() != rows || t.cols() != cols {
            return Err(TensorError::ShapeMismatch {
                op: "load parameter",
                lhs: crate::tensor::Shape::new(rows, cols),
                rhs: t.shape(),
            });
        }
    }
    if store.len() != param_layout(config).len() {
        return Err(TensorError::Invalid("parameter store has unexpected extra entries"));
    }
    let layers = |axis: Axis| -> Result<Vec<LayerIds>, TensorError> {
        (0..config.layers_per_axis)
            .map(|l| {
                let p = axis.prefix();
                Ok(LayerIds {
                    cond: store.id(&format!("{p}.{l}.cond"))?,
                    w_x: store.id(&format!("{p}.{l}.w_x"))?,
                    w_h: store.id(&format!("{p}.{l}.w_h"))?,
                    bias: store.id(&format!("{p}.{l}.bias"))?,
                })
            })
            .collect()
    };
    Ok(ParamIds {
        style_embed: store.id("style.embed")?,
        conv_kernel: store.id("conv.kernel")?,
        conv_bias: store.id("conv.bias")?,
        time: layers(Axis::Time)?,
        note: layers(Axis::Note)?,
        head_weight: store.id("head.weight")?,
        head_bias: store.id("head.bias")?,
    })
}

fn glorot<F: Real>(rows: usize, cols: usize, fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Tensor<F> {
    let limit = libm::sqrt(6.0 / (fan_in + fan_out) as f64);
    let data = (0..rows * cols)
        .map(|_| F::from_f64(rng.gen_range(-limit..limit)))
        .collect();
    Tensor::from_vec(rows, cols, data).expect("shape matches data")
}

/// `n × n` orthogonal matrix from modified Gram-Schmidt on random columns.
fn orthogonal(n: usize, rng: &mut impl Rng) -> Vec<f64> {
    loop {
        let mut cols: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let mut ok = true;
        for j in 0..n {
            let (done, rest) = cols.split_at_mut(j);
            for ci in done.iter() {
                let dot: f64 = ci.iter().zip(rest[0].iter()).map(|(a, b)| a * b).sum();
                for (v, &u) in rest[0].iter_mut().zip(ci) {
                    *v -= dot * u;
                }
            }
            let norm = libm::sqrt(cols[j].iter().map(|v| v * v).sum::<f64>());
            if norm < 1e-8 {
                ok = false;
                break;
            }
            for v in &mut cols[j] {
                *v /= norm;
            }
        }
        if ok {
            let mut out = vec![0.0; n * n];
            for (j, col) in cols.iter().enumerate() {
                for (r, &v) in col.iter().enumerate() {
                    out[r * n + j] = v;
                }
            }
            return out;
        }
    }
}

/// Freshly initialized parameters: Glorot-uniform weights, orthogonal
/// recurrent blocks, zero biases except forget gates at 1.
pub fn init_params<F: Real>(config: &ModelConfig, seed: u64) -> Result<ParamStore<F>, TensorError> {
    config.validate()?;
    let mut store = ParamStore::new();
    for (k, (name, rows, cols)) in param_layout(config).into_iter().enumerate() {
        let mut rng = rng_from(derive(seed, &[k as u64]));
        let value = if name.ends_with(".w_h") {
            let h = rows;
            let mut t = Tensor::zeros(h, 4 * h);
            for gate in 0..4 {
                let q = orthogonal(h, &mut rng);
                for r in 0..h {
                    for c in 0..h {
                        t.set(r, gate * h + c, F::from_f64(q[r * h + c]));
                    }
                }
            }
            t
        } else if name.ends_with(".bias") && name != "conv.bias" {
            let mut t = Tensor::zeros(rows, cols);
            if name != "head.bias" {
                let h = cols / 4;
                for c in h..2 * h {
                    t.set(0, c, F::from_f64(FORGET_BIAS));
                }
            }
            t
        } else if name == "conv.bias" {
            Tensor::zeros(rows, cols)
        } else {
            glorot(rows, cols, rows, cols, &mut rng)
        };
        store.insert(&name, value)?;
    }
    Ok(store)
}

/// Configuration plus parameters.
#[derive(Debug, Clone)]
pub struct Model<F> {
    config: ModelConfig,
    params: ParamStore<F>,
    ids: ParamIds,
}

impl<F: Real> Model<F> {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, TensorError> {
        let params = init_params(&config, seed)?;
        Self::from_params(config, params)
    }

    /// Wraps an existing store, checking every name and shape.
    pub fn from_params(config: ModelConfig, params: ParamStore<F>) -> Result<Self, TensorError> {
        config.validate()?;
        let ids = resolve_ids(&config, &params)?;
        Ok(Self { config, params, ids })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<F> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<F> {
        &mut self.params
    }

    pub fn into_params(self) -> ParamStore<F> {
        self.params
    }

    pub(crate) fn ids(&self) -> &ParamIds {
        &self.ids
    }

    pub fn cast<G: Real>(&self) -> Model<G> {
        Model {
            config: self.config.clone(),
            params: self.params.cast(),
            ids: self.ids.clone(),
        }
    }

    /// `h = s·W`: a pure linear map, no bias.
    pub fn embed_style(&self, style: &StyleVector) -> Result<Vec<F>, StyleError> {
        if style.len() != self.config.styles {
            return Err(StyleError::DimensionMismatch {
                expected: self.config.styles,
                got: style.len(),
            });
        }
        let w = self.params.get(self.ids.style_embed);
        let mut h = vec![F::ZERO; self.config.embed_dim];
        for (k, &s) in style.weights().iter().enumerate() {
            if s == 0.0 {
                continue;
            }
            let s = F::from_f64(s);
            for (hj, &wj) in h.iter_mut().zip(w.row(k)) {
                *hj += s * wj;
            }
        }
        Ok(h)
    }

    /// Number of scalars in the time-axis layers; independent of `notes`.
    pub fn time_axis_param_count(&self) -> usize {
        self.ids
            .time
            .iter()
            .map(|l| {
                [l.cond, l.w_x, l.w_h, l.bias]
                    .iter()
                    .map(|&id| self.params.get(id).shape().len())
                    .sum::<usize>()
            })
            .sum()
    }
}

