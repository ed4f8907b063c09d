mod common;

use deepj_core::generate::{
    adaptive_temperature, apply_temperature, generate, generate_traced, parse_style_spec,
    sample_step, SamplerConfig, SamplerState, SilenceTracker,
};
use deepj_core::model::{Composer, ModelVars, StyleError};
use deepj_core::rng::rng_from;
use deepj_core::{Model, StyleCatalog, StyleVector, Tape};
use proptest::prelude::*;

fn catalog() -> StyleCatalog {
    let c = |name: &str, genre: &str| Composer {
        name: name.into(),
        genre: genre.into(),
    };
    StyleCatalog::new(vec![
        c("bach", "baroque"),
        c("handel", "baroque"),
        c("mozart", "classical"),
        c("vivaldi", "baroque"),
        c("haydn", "classical"),
        c("purcell", "baroque"),
    ])
    .unwrap()
}

/// Head weights zeroed and every head bias set to `bias`, so each logit
/// is exactly `bias`.
fn constant_head(model: &mut Model<f32>, bias: f32) {
    let p = model.params_mut();
    p.by_name_mut("head.weight").unwrap().data_mut().fill(0.0);
    p.by_name_mut("head.bias").unwrap().data_mut().fill(bias);
}

#[test]
fn temperature_schedule() {
    assert_eq!(adaptive_temperature(0), 1.0);
    assert!((adaptive_temperature(5) - 1.5).abs() < 1e-15);
    assert!((adaptive_temperature(10) - 2.0).abs() < 1e-15);
    assert_eq!(apply_temperature(0.7, 1.0), 1.0 / (1.0 + (-0.7f64).exp()));
    let mut last = apply_temperature(-4.0, 1.0);
    for t in 1..200 {
        let p = apply_temperature(-4.0, adaptive_temperature(t));
        assert!(p > last && p < 0.5);
        last = p;
    }
    assert!(apply_temperature(-4.0, 1e9) > 0.4999);
    assert!(apply_temperature(4.0, 3.0) < apply_temperature(4.0, 1.0));
}

#[test]
fn silence_tracker_counts_and_resets() {
    let mut s = SilenceTracker::new();
    for k in 1..=4 {
        s.observe(false);
        assert_eq!(s.silent_steps(), k);
    }
    assert!((s.temperature() - 1.4).abs() < 1e-12);
    s.observe(true);
    assert_eq!(s.temperature(), 1.0);
}

#[test]
fn style_specs() {
    let cat = catalog();
    let bach = parse_style_spec("bach:1", &cat).unwrap();
    assert_eq!(bach, StyleVector::one_hot(6, 0));
    let baroque = parse_style_spec("baroque", &cat).unwrap();
    assert_eq!(baroque.weights(), &[0.25, 0.25, 0.0, 0.25, 0.0, 0.25]);
    let mix = parse_style_spec("bach:2, mozart:2", &cat).unwrap();
    assert_eq!(mix.weights(), &[0.5, 0.0, 0.5, 0.0, 0.0, 0.0]);
    assert_eq!(parse_style_spec("haydn", &cat).unwrap(), StyleVector::one_hot(6, 4));
    assert!(matches!(parse_style_spec("brahms:1", &cat), Err(StyleError::StyleUnknown(_))));
    assert!(matches!(parse_style_spec("romantic", &cat), Err(StyleError::StyleUnknown(_))));
    assert!(matches!(parse_style_spec("bach:0", &cat), Err(StyleError::AllZeroWeights)));
    assert!(matches!(parse_style_spec("bach:x", &cat), Err(StyleError::Malformed(_))));
    assert!(parse_style_spec("bach:-1", &cat).is_err());
}

#[test]
fn one_bar_is_sixteen_steps() {
    let model: Model<f32> = Model::new(common::tiny_config(2), 0).unwrap();
    let roll = generate(&model, &SamplerConfig::new(StyleVector::one_hot(2, 0), 1, 4)).unwrap();
    assert_eq!(roll.steps(), 16);
    assert_eq!(roll.notes(), 48);
    assert!(generate(&model, &SamplerConfig::new(StyleVector::one_hot(2, 0), 0, 4)).is_err());
    assert!(generate(&model, &SamplerConfig::new(StyleVector::one_hot(3, 0), 1, 4)).is_err());
}

#[test]
fn fixed_seed_reproduces_the_roll() {
    let model: Model<f32> = Model::new(common::tiny_config(2), 1).unwrap();
    let cfg = SamplerConfig::new(StyleVector::new(vec![0.5, 0.5]).unwrap(), 2, 77);
    let a = generate(&model, &cfg).unwrap();
    let b = generate(&model, &cfg).unwrap();
    assert_eq!(a, b);
    let c = generate(&model, &SamplerConfig { seed: 78, ..cfg }).unwrap();
    assert_ne!(a, c);
}

#[test]
fn forced_silence_raises_the_temperature_every_step() {
    let mut model: Model<f32> = Model::new(common::tiny_config(2), 1).unwrap();
    constant_head(&mut model, -1e4);
    let g = generate_traced(&model, &SamplerConfig::new(StyleVector::one_hot(2, 1), 2, 3)).unwrap();
    assert_eq!(g.roll.played_cells(), 0);
    for (t, temp) in g.temperatures.iter().enumerate() {
        assert!((temp - (0.1 * t as f64 + 1.0)).abs() < 1e-12);
    }
}

#[test]
fn temperature_resets_after_a_note() {
    let mut model: Model<f32> = Model::new(common::tiny_config(2), 1).unwrap();
    constant_head(&mut model, -5.0);
    let g = generate_traced(&model, &SamplerConfig::new(StyleVector::one_hot(2, 1), 4, 3)).unwrap();
    let mut silent = 0u32;
    for t in 0..g.roll.steps() {
        assert_eq!(g.temperatures[t], adaptive_temperature(silent));
        silent = if g.roll.is_silent_step(t) { silent + 1 } else { 0 };
    }
    assert!(g.roll.played_cells() > 0);
}

/// `P(first note at step ≥ k)` when every play logit is `logit`.
fn survival(logit: f64, notes: i32, k: usize) -> f64 {
    (0..k)
        .map(|t| (1.0 - apply_temperature(logit, adaptive_temperature(t as u32))).powi(notes))
        .product()
}

#[test]
fn silence_escape_matches_the_closed_form() {
    let mut model: Model<f32> = Model::new(common::tiny_config(2), 0).unwrap();
    constant_head(&mut model, -8.0);
    let style = StyleVector::one_hot(2, 0);
    let trials = 100;
    let mut firsts = Vec::new();
    for seed in 0..trials {
        let mut rng = rng_from(seed);
        let mut state = SamplerState::new(&model);
        let mut silence = SilenceTracker::new();
        let mut first = None;
        for t in 0..200 {
            let chosen =
                sample_step(&model, &mut state, &style, t, &mut rng, silence.temperature(), false).unwrap();
            let any = chosen.iter().any(|c| c.0);
            if any {
                first = Some(t);
                break;
            }
            silence.observe(any);
        }
        firsts.push(first);
    }
    let escaped = firsts.iter().filter(|f| f.is_some()).count();
    assert!(escaped >= 99);

    let mean_closed: f64 = (1..400).map(|k| survival(-8.0, 48, k)).sum();
    let second: f64 = (1..400).map(|k| (2 * k - 1) as f64 * survival(-8.0, 48, k)).sum();
    let sd = (second - mean_closed * mean_closed).sqrt();
    let mean = firsts.iter().map(|f| f.unwrap() as f64).sum::<f64>() / trials as f64;
    assert!(
        (mean - mean_closed).abs() < 4.0 * sd / (trials as f64).sqrt(),
        "empirical {mean}, closed form {mean_closed} ± {sd}"
    );
}

#[test]
fn mixture_uses_the_exact_average_embedding() {
    let model: Model<f64> = Model::new(common::tiny_config(4), 2).unwrap();
    let mix = StyleVector::new(vec![0.5, 0.5, 0.0, 0.0]).unwrap();
    let mut tape = Tape::new();
    let vars = ModelVars::register(&mut tape, &model);
    let ctx = model.style_context(&mut tape, &vars, &[&mix]).unwrap();
    let w = model.params().by_name("style.embed").unwrap();
    let h = tape.value(ctx.embedding);
    for j in 0..4 {
        assert_eq!(h.get(0, j), 0.5 * w.get(0, j) + 0.5 * w.get(1, j));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]
    #[test]
    fn generated_rolls_are_valid(seed in any::<u64>(), bias in -3.0f32..1.0) {
        let mut model: Model<f32> = Model::new(common::tiny_config(2), seed).unwrap();
        let p = model.params_mut().by_name_mut("head.bias").unwrap();
        p.data_mut()[0] = bias;
        let roll = generate(&model, &SamplerConfig::new(StyleVector::one_hot(2, 0), 2, seed)).unwrap();
        prop_assert!(roll.validate().is_ok());
        for n in 0..roll.notes() {
            for t in 0..roll.steps() {
                if roll.replay(n, t) {
                    prop_assert!(t > 0 && roll.play(n, t) && roll.play(n, t - 1));
                }
                if !roll.play(n, t) {
                    prop_assert_eq!(roll.dynamics(n, t), 0.0);
                }
            }
        }
    }
}
