//! Autoregressive sampling with adaptive temperature and style mixing.

use crate::midi::NoteRoll;
use crate::model::{
    AxisState, ChosenSignal, Dropout, Model, ModelError, ModelVars, NoteChooser, StyleCatalog,
    StyleError, StyleVector, SweepLayout,
};
use crate::rng::rng_from;
use crate::tensor::{Real, Tape, Tensor};
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// `0.1 · t + 1` for `t` consecutive silent steps.
pub fn adaptive_temperature(silent_steps: u32) -> f64 {
    0.1 * f64::from(silent_steps) + 1.0
}

/// `sigmoid(logit / T)`.
pub fn apply_temperature(logit: f64, temperature: f64) -> f64 {
    (logit / temperature).sigmoid()
}

/// Counts consecutive steps in which no note was chosen.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SilenceTracker {
    silent: u32,
}

impl SilenceTracker {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn silent_steps(&self) -> u32 {
        self.silent
    }

    pub fn temperature(&self) -> f64 {
        adaptive_temperature(self.silent)
    }

    pub fn observe(&mut self, any_played: bool) {
        self.silent = if any_played { 0 } else { self.silent.saturating_add(1) };
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    pub style: StyleVector,
    pub bars: usize,
    pub seed: u64,
    /// Also divide replay logits by the temperature. Off by default.
    pub temper_replay: bool,
}

impl SamplerConfig {
    pub fn new(style: StyleVector, bars: usize, seed: u64) -> Self {
        Self {
            style,
            bars,
            seed,
            temper_replay: false,
        }
    }
}

/// Coin-flip choices for one step, filled in note by note.
pub struct SamplingChooser<'a> {
    rng: &'a mut ChaCha8Rng,
    temperature: f64,
    temper_replay: bool,
    prev_play: &'a [bool],
    signal: ChosenSignal,
    /// `(play, replay, dynamics)` per note, in sweep order.
    pub chosen: Vec<(bool, bool, f32)>,
}

impl<'a> SamplingChooser<'a> {
    pub fn new(
        rng: &'a mut ChaCha8Rng,
        temperature: f64,
        temper_replay: bool,
        prev_play: &'a [bool],
        signal: ChosenSignal,
    ) -> Self {
        Self {
            rng,
            temperature,
            temper_replay,
            prev_play,
            signal,
            chosen: Vec::with_capacity(prev_play.len()),
        }
    }
}

impl<F: Real> NoteChooser<F> for SamplingChooser<'_> {
    fn choose(&mut self, note: usize, logits: &Tensor<F>) -> Tensor<F> {
        let l = logits.row(0);
        let p_play = apply_temperature(l[0].to_f64(), self.temperature);
        let play = self.rng.gen::<f64>() < p_play;
        let mut replay = false;
        let mut dynamics = 0.0f32;
        if play {
            if self.prev_play.get(note).copied().unwrap_or(false) {
                let t = if self.temper_replay { self.temperature } else { 1.0 };
                replay = self.rng.gen::<f64>() < apply_temperature(l[1].to_f64(), t);
            }
            dynamics = l[2].to_f64().sigmoid() as f32;
        }
        self.chosen.push((play, replay, dynamics));
        let bit = |b: bool| if b { F::ONE } else { F::ZERO };
        let values = match self.signal {
            ChosenSignal::Triple => vec![bit(play), bit(replay), F::from_f64(f64::from(dynamics))],
            ChosenSignal::PlayOnly => vec![bit(play)],
        };
        let width = values.len();
        Tensor::from_vec(1, width, values).expect("width matches")
    }
}

/// Recurrent state of a generation run.
#[derive(Debug, Clone)]
pub struct SamplerState<F> {
    pub time: AxisState<F>,
    pub prev: Vec<(bool, bool, f32)>,
}

impl<F: Real> SamplerState<F> {
    pub fn new(model: &Model<F>) -> Self {
        let cfg = model.config();
        Self {
            time: AxisState::zeros(cfg.layers_per_axis, cfg.notes, cfg.time_units),
            prev: vec![(false, false, 0.0); cfg.notes],
        }
    }
}

/// Samples step `step` and advances `state`. Returns the chosen triples.
pub fn sample_step<F: Real>(
    model: &Model<F>,
    state: &mut SamplerState<F>,
    style: &StyleVector,
    step: usize,
    rng: &mut ChaCha8Rng,
    temperature: f64,
    temper_replay: bool,
) -> Result<Vec<(bool, bool, f32)>, ModelError> {
    let cfg = model.config();
    let mut tape = Tape::new();
    let vars = ModelVars::register(&mut tape, model);
    let drop = Dropout::inference();
    let ctx = model.style_context(&mut tape, &vars, &[style])?;

    let mut prev = Tensor::zeros(cfg.notes, 3);
    for (n, &(p, r, d)) in state.prev.iter().enumerate() {
        if p {
            prev.set(n, 0, F::ONE);
            prev.set(n, 1, if r { F::ONE } else { F::ZERO });
            prev.set(n, 2, F::from_f64(f64::from(d)));
        }
    }
    let features = model.assemble_note_inputs(&mut tape, &vars, prev, step)?;
    let st: Vec<_> = state
        .time
        .layers
        .iter()
        .map(|(h, c)| (tape.constant(h.clone()), tape.constant(c.clone())))
        .collect();
    let (out, next) = model.time_axis_step(&mut tape, &vars, features, &st, &ctx, &drop, step)?;

    let prev_play: Vec<bool> = state.prev.iter().map(|c| c.0).collect();
    let layout = SweepLayout {
        steps: 1,
        batch: 1,
        notes: cfg.notes,
    };
    let mut chooser = SamplingChooser::new(rng, temperature, temper_replay, &prev_play, cfg.chosen);
    model.note_axis_sweep(&mut tape, &vars, out, layout, &mut chooser, &ctx, &drop)?;
    let chosen = chooser.chosen;

    state.time = AxisState {
        layers: next
            .iter()
            .map(|&(h, c)| (tape.value(h).clone(), tape.value(c).clone()))
            .collect(),
    };
    state.prev = chosen.clone();
    Ok(chosen)
}

/// A generated roll plus the play temperature used at every step.
#[derive(Debug, Clone)]
pub struct Generation {
    pub roll: NoteRoll,
    pub temperatures: Vec<f64>,
}

/// Generates `bars · q` steps from silence.
pub fn generate<F: Real>(model: &Model<F>, config: &SamplerConfig) -> Result<NoteRoll, ModelError> {
    generate_traced(model, config).map(|g| g.roll)
}

pub fn generate_traced<F: Real>(
    model: &Model<F>,
    config: &SamplerConfig,
) -> Result<Generation, ModelError> {
    let cfg = model.config();
    if config.bars == 0 {
        return Err(ModelError::Input("bars must be at least 1"));
    }
    if config.style.len() != cfg.styles {
        return Err(StyleError::DimensionMismatch {
            expected: cfg.styles,
            got: config.style.len(),
        }
        .into());
    }
    let steps = config.bars * cfg.beat_dim;
    let mut roll = NoteRoll::silent(cfg.notes, steps, cfg.beat_dim);
    let mut rng = rng_from(config.seed);
    let mut state = SamplerState::new(model);
    let mut silence = SilenceTracker::new();
    let mut temperatures = Vec::with_capacity(steps);
    for t in 0..steps {
        let temperature = silence.temperature();
        temperatures.push(temperature);
        let chosen = sample_step(
            model,
            &mut state,
            &config.style,
            t,
            &mut rng,
            temperature,
            config.temper_replay,
        )?;
        let mut any = false;
        for (n, &(p, r, d)) in chosen.iter().enumerate() {
            if p {
                roll.set(n, t, true, r, d);
                any = true;
            }
        }
        silence.observe(any);
    }
    Ok(Generation { roll, temperatures })
}

/// Parses `name:weight,...` or a bare genre name into a normalized style.
pub fn parse_style_spec(spec: &str, catalog: &StyleCatalog) -> Result<StyleVector, StyleError> {
    let spec = spec.trim();
    if spec.is_empty() {
        return Err(StyleError::Malformed(spec.to_string()));
    }
    if !spec.contains(':') && !spec.contains(',') {
        if let Some(members) = catalog.genre_members(spec) {
            let mut w = vec![0.0; catalog.len()];
            for m in members {
                w[m] = 1.0;
            }
            return StyleVector::normalized(w);
        }
        let i = catalog
            .index_of(spec)
            .ok_or_else(|| StyleError::StyleUnknown(spec.to_string()))?;
        return Ok(StyleVector::one_hot(catalog.len(), i));
    }
    let mut w = vec![0.0; catalog.len()];
    for part in spec.split(',') {
        let (name, weight) = part
            .split_once(':')
            .ok_or_else(|| StyleError::Malformed(part.to_string()))?;
        let name = name.trim();
        let weight: f64 = weight
            .trim()
            .parse()
            .map_err(|_| StyleError::Malformed(part.to_string()))?;
        let i = catalog
            .index_of(name)
            .ok_or_else(|| StyleError::StyleUnknown(name.to_string()))?;
        if !weight.is_finite() || weight < 0.0 {
            return Err(StyleError::NegativeWeight);
        }
        w[i] += weight;
    }
    StyleVector::normalized(w)
}
