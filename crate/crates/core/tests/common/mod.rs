#![allow(dead_code)]

use deepj_core::model::ChosenSignal;
use deepj_core::{ModelConfig, NoteRoll};
use rand::Rng;

/// Small widths, full pitch range and bar length.
pub fn tiny_config(styles: usize) -> ModelConfig {
    ModelConfig {
        time_units: 8,
        note_units: 6,
        embed_dim: 4,
        conv_filters: 4,
        ..ModelConfig::new(styles)
    }
}

pub fn tiny_config_with(styles: usize, pitch_class: bool, chosen: ChosenSignal) -> ModelConfig {
    ModelConfig {
        pitch_class,
        chosen,
        ..tiny_config(styles)
    }
}

/// A roll satisfying every invariant, with dynamics constant per note
/// segment and representable after velocity rounding.
pub fn random_roll(rng: &mut impl Rng, notes: usize, steps: usize, q: usize, density: f64) -> NoteRoll {
    let mut roll = NoteRoll::silent(notes, steps, q);
    for n in 0..notes {
        let mut t = 0;
        let mut playing = false;
        let mut dynamics = 0.0;
        while t < steps {
            let start = !playing && rng.gen_bool(density);
            let reattack = playing && rng.gen_bool(0.15);
            let stop = playing && rng.gen_bool(0.3);
            if stop && !reattack {
                playing = false;
            } else if start || reattack {
                playing = true;
                dynamics = f32::from(rng.gen_range(1u8..=127)) / 127.0;
            }
            if playing {
                roll.set(n, t, true, reattack, dynamics);
            }
            t += 1;
        }
    }
    roll
}
