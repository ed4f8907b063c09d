#![allow(dead_code)]

use deepj_core::midi::roll_to_midi;
use deepj_core::rng::rng_from;
use deepj_core::{NoteRoll, PitchWindow, QuantGrid};
use rand::Rng;
use serde_json::{json, Value};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

/// Pitch classes of C major.
pub const MAJOR: [usize; 7] = [0, 2, 4, 5, 7, 9, 11];
/// Pitch classes of the whole-tone scale on C.
pub const WHOLE_TONE: [usize; 6] = [0, 2, 4, 6, 8, 10];

pub fn deepj(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_deepj"))
        .args(args)
        .output()
        .expect("binary runs")
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

pub fn write_midi(path: &Path, roll: &NoteRoll) {
    let bytes = roll_to_midi(roll, 120.0, QuantGrid::new(16, 480).unwrap(), PitchWindow::default());
    std::fs::write(path, bytes).unwrap();
}

/// Dyad ostinato: every 4 steps a fresh two-step pattern of dyads, one
/// pitch an octave above the window's bottom C and one two octaves up,
/// pitch classes drawn from `set`.
pub fn ostinato(rng: &mut impl Rng, set: &[usize], bars: usize) -> NoteRoll {
    let mut r = NoteRoll::silent(48, bars * 16, 16);
    for cell in 0..bars * 4 {
        let pattern: Vec<[usize; 2]> = (0..2)
            .map(|_| {
                [
                    12 + set[rng.gen_range(0..set.len())],
                    24 + set[rng.gen_range(0..set.len())],
                ]
            })
            .collect();
        for k in 0..4 {
            let t = cell * 4 + k;
            for &n in &pattern[k % 2] {
                let held = t > 0 && r.play(n, t - 1);
                r.set(n, t, true, held, 0.6);
            }
        }
    }
    r
}

pub fn write_json(path: &Path, value: &Value) {
    std::fs::write(path, serde_json::to_string_pretty(value).unwrap()).unwrap();
}

/// Two composers in two genres, `per_style` ostinato pieces each.
/// Returns the manifest path.
pub fn style_corpus(dir: &Path, per_style: usize, bars: usize, seed: u64) -> PathBuf {
    let mut rng = rng_from(seed);
    for name in ["major", "whole"] {
        std::fs::create_dir_all(dir.join(name)).unwrap();
    }
    for i in 0..2 * per_style {
        let (name, set): (&str, &[usize]) = if i % 2 == 0 { ("major", &MAJOR) } else { ("whole", &WHOLE_TONE) };
        let roll = ostinato(&mut rng, set, bars);
        write_midi(&dir.join(name).join(format!("{:03}.mid", i / 2)), &roll);
    }
    let manifest = dir.join("manifest.json");
    write_json(
        &manifest,
        &json!({"composers": [
            {"name": "major", "genre": "diatonic", "files": ["major/*.mid"]},
            {"name": "whole", "genre": "symmetric", "files": ["whole/*.mid"]}
        ]}),
    );
    manifest
}

/// A training config for narrow models that run in seconds.
pub fn tiny_train_config(epochs: usize, seed: u64) -> Value {
    json!({
        "tbptt_steps": 16, "dropout_hidden": 0.5, "dropout_input": 0.2,
        "lr": 0.01, "beta1": 0.9, "beta2": 0.999, "eps": 1e-8,
        "batch_size": 2, "epochs": epochs, "seed": seed,
        "validation_fraction": 0.25,
        "model": {"time_units": 8, "note_units": 6, "embed_dim": 4, "conv_filters": 4}
    })
}

/// Log rows without the wall-clock column.
pub fn log_rows(run: &Path) -> Vec<Vec<String>> {
    deepj::log::read(&run.join(deepj::log::LOG_FILE))
        .unwrap()
        .into_iter()
        .map(|mut r| {
            r.pop();
            r
        })
        .collect()
}

/// A small corpus cache ready for training: two composers, `per_style`
/// two-bar pieces each. Returns the cache directory.
pub fn tiny_cache(dir: &Path, per_style: usize) -> PathBuf {
    let manifest = style_corpus(&dir.join("midi"), per_style, 2, 1);
    let cache = dir.join("cache");
    let out = deepj(&["ingest", "--manifest", p(&manifest), "--out", p(&cache)]);
    assert!(out.status.success(), "{}", stderr(&out));
    cache
}
