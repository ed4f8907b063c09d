use crate::error::{CliError, CliResult, OrExit};
use anyhow::anyhow;
use clap::Args;
use deepj_core::model::Dropout;
use deepj_core::rng::{derive, rng_from};
use deepj_core::tensor::{primitive_suite, GradCheckReport};
use deepj_core::train::model_gradcheck;
use deepj_core::{Model, ModelConfig, NoteRoll, StyleVector};
use rand::Rng;

pub const PRIMITIVE_TOLERANCE: f64 = 1e-6;
pub const MODEL_TOLERANCE: f64 = 1e-4;
/// Central-difference step for the full model.
pub const MODEL_EPS: f64 = 1e-5;
const MODEL_SAMPLES: usize = 20;

#[derive(Debug, Clone, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct GradcheckSummary {
    pub primitives: Vec<(String, f64)>,
    pub model: GradCheckReport,
}

impl GradcheckSummary {
    pub fn passes(&self) -> bool {
        self.primitives.iter().all(|(_, e)| *e <= PRIMITIVE_TOLERANCE) && self.model.passes(MODEL_TOLERANCE)
    }
}

/// Narrow widths keep the check fast; pitch range and bar length stay full.
pub fn check_model_config(styles: usize) -> ModelConfig {
    ModelConfig {
        time_units: 8,
        note_units: 6,
        embed_dim: 4,
        conv_filters: 4,
        ..ModelConfig::new(styles)
    }
}

/// Random roll with short held notes and occasional re-attacks.
pub fn random_roll(seed: u64, notes: usize, steps: usize, q: usize) -> NoteRoll {
    let mut rng = rng_from(seed);
    let mut roll = NoteRoll::silent(notes, steps, q);
    for n in 0..notes {
        let mut level = 0.0;
        for t in 0..steps {
            let held = t > 0 && roll.play(n, t - 1) && rng.gen_bool(0.6);
            if held {
                let reattack = rng.gen_bool(0.2);
                roll.set(n, t, true, reattack, level);
            } else if rng.gen_bool(0.1) {
                level = f32::from(rng.gen_range(1u8..=127)) / 127.0;
                roll.set(n, t, true, false, level);
            }
        }
    }
    roll
}

pub fn check(seed: u64) -> anyhow::Result<GradcheckSummary> {
    let primitives = primitive_suite(seed)?
        .into_iter()
        .map(|p| (p.name.to_string(), p.report.max_rel_error()))
        .collect();
    let model: Model<f64> = Model::new(check_model_config(3), derive(seed, &[1]))?;
    let q = model.config().beat_dim;
    let roll = random_roll(derive(seed, &[2]), model.config().notes, 2 * q, q);
    let style = StyleVector::new(vec![0.5, 0.25, 0.25])?;
    let drop = Dropout {
        training: true,
        input: 0.2,
        hidden: 0.5,
        seed: derive(seed, &[3]),
    };
    let report = model_gradcheck(&model, &roll, &style, &drop, MODEL_SAMPLES, MODEL_EPS, derive(seed, &[4]))?;
    Ok(GradcheckSummary {
        primitives,
        model: report,
    })
}

pub fn run(args: &GradcheckArgs) -> CliResult<GradcheckSummary> {
    let summary = check(args.seed).or_data()?;
    print(&summary);
    if !summary.passes() {
        return Err(CliError::check(anyhow!("gradient check failed")));
    }
    Ok(summary)
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "FAIL"
    }
}

pub fn print(s: &GradcheckSummary) {
    println!("primitives (tolerance {PRIMITIVE_TOLERANCE:e}, 64-bit, every coordinate)");
    for (name, err) in &s.primitives {
        println!("  {name:<14} {err:>10.3e}  {}", verdict(*err <= PRIMITIVE_TOLERANCE));
    }
    println!("full model loss, 2 bars, dropout masks frozen (tolerance {MODEL_TOLERANCE:e})");
    for p in &s.model.params {
        println!(
            "  {:<14} {:>10.3e}  {} ({} coords)",
            p.name,
            p.max_rel_error,
            verdict(p.max_rel_error <= MODEL_TOLERANCE),
            p.checked
        );
    }
}
