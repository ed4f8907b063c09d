use super::nn::{dropout, lstm_cell, LstmWeights};
use super::{ParamGrads, ParamStore, Real, Tape, Tensor, TensorError, Var};
use crate::rng::rng_from;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use rand::seq::index::sample;
use rand::Rng;

#[derive(Clone, Debug, PartialEq)]
pub struct ParamCheck {
    pub name: String,
    pub checked: usize,
    pub max_rel_error: f64,
    /// Flat index of the worst coordinate, with both gradient estimates.
    pub worst: Option<(usize, f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.params
            .iter()
            .map(|p| p.max_rel_error)
            .fold(0.0, f64::max)
    }

    pub fn passes(&self, tolerance: f64) -> bool {
        self.params.iter().all(|p| p.max_rel_error <= tolerance)
    }
}

/// Compares `analytic` gradients against central differences of `loss`.
///
/// Up to `samples` coordinates per parameter are drawn with a seeded RNG
/// (every coordinate when the tensor is smaller). Relative error is
/// `|g_ad - g_fd| / max(|g_ad|, |g_fd|, 1e-8)`. `loss` must be
/// deterministic, so any dropout masks have to be derived from fixed seeds.
pub fn finite_diff_check<F: Real, E>(
    params: &ParamStore<F>,
    analytic: &ParamGrads<F>,
    mut loss: impl FnMut(&ParamStore<F>) -> Result<F, E>,
    eps: f64,
    samples: usize,
    seed: u64,
) -> Result<GradCheckReport, E> {
    let mut rng = rng_from(seed);
    let mut work = params.clone();
    let mut report = GradCheckReport::default();
    for id in params.ids() {
        let len = params.get(id).shape().len();
        let coords: Vec<usize> = if len <= samples {
            (0..len).collect()
        } else {
            let mut picked = sample(&mut rng, len, samples).into_vec();
            picked.sort_unstable();
            picked
        };
        let mut check = ParamCheck {
            name: params.name(id).to_string(),
            checked: coords.len(),
            max_rel_error: 0.0,
            worst: None,
        };
        for &k in &coords {
            let original = params.get(id).data()[k];
            work.get_mut(id).data_mut()[k] = F::from_f64(original.to_f64() + eps);
            let up = loss(&work)?.to_f64();
            work.get_mut(id).data_mut()[k] = F::from_f64(original.to_f64() - eps);
            let down = loss(&work)?.to_f64();
            work.get_mut(id).data_mut()[k] = original;

            let numeric = (up - down) / (2.0 * eps);
            let exact = analytic.get(id).data()[k].to_f64();
            let rel = relative_error(exact, numeric);
            if rel > check.max_rel_error || check.worst.is_none() {
                check.max_rel_error = check.max_rel_error.max(rel);
                check.worst = Some((k, exact, numeric));
            }
        }
        report.params.push(check);
    }
    Ok(report)
}

pub(crate) fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Outcome of checking one primitive.
#[derive(Clone, Debug, PartialEq)]
pub struct PrimitiveReport {
    pub name: &'static str,
    pub report: GradCheckReport,
}

type Build = fn(&mut Tape<f64>, &[Var]) -> Result<Var, TensorError>;

struct Case {
    name: &'static str,
    inputs: &'static [(usize, usize)],
    build: Build,
}

/// `Σ out ∘ R` for a fixed pseudo-random `R`, so every output entry
/// reaches the loss with a distinct weight.
fn project(tape: &mut Tape<f64>, out: Var) -> Result<Var, TensorError> {
    let s = tape.shape(out);
    let mut rng = rng_from(0x9e37 ^ (s.rows as u64) << 16 ^ s.cols as u64);
    let r: Vec<f64> = (0..s.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let r = tape.constant(Tensor::from_vec(s.rows, s.cols, r)?);
    let m = tape.mul(out, r)?;
    Ok(tape.sum(m))
}

fn probs(tape: &mut Tape<f64>, x: Var) -> Var {
    tape.sigmoid(x)
}

const CASES: &[Case] = &[
    Case {
        name: "matmul",
        inputs: &[(3, 4), (4, 5)],
        build: |t, v| {
            let y = t.matmul(v[0], v[1])?;
            project(t, y)
        },
    },
    Case {
        name: "add",
        inputs: &[(3, 4), (3, 4)],
        build: |t, v| {
            let y = t.add(v[0], v[1])?;
            project(t, y)
        },
    },
    Case {
        name: "add_grouped",
        inputs: &[(6, 4), (2, 4)],
        build: |t, v| {
            let y = t.add_grouped(v[0], v[1], 3)?;
            project(t, y)
        },
    },
    Case {
        name: "add_row",
        inputs: &[(5, 3), (1, 3)],
        build: |t, v| {
            let y = t.add_row(v[0], v[1])?;
            project(t, y)
        },
    },
    Case {
        name: "mul",
        inputs: &[(3, 4), (3, 4)],
        build: |t, v| {
            let y = t.mul(v[0], v[1])?;
            project(t, y)
        },
    },
    Case {
        name: "scale",
        inputs: &[(3, 4)],
        build: |t, v| {
            let y = t.scale(v[0], -1.7);
            project(t, y)
        },
    },
    Case {
        name: "sigmoid",
        inputs: &[(3, 4)],
        build: |t, v| {
            let y = t.sigmoid(v[0]);
            project(t, y)
        },
    },
    Case {
        name: "tanh",
        inputs: &[(3, 4)],
        build: |t, v| {
            let y = t.tanh(v[0]);
            project(t, y)
        },
    },
    Case {
        name: "concat_cols",
        inputs: &[(3, 2), (3, 4), (3, 1)],
        build: |t, v| {
            let y = t.concat_cols(v)?;
            project(t, y)
        },
    },
    Case {
        name: "slice_cols",
        inputs: &[(3, 6)],
        build: |t, v| {
            let y = t.slice_cols(v[0], 2, 3)?;
            project(t, y)
        },
    },
    Case {
        name: "stack_rows",
        inputs: &[(2, 3), (4, 3)],
        build: |t, v| {
            let y = t.stack_rows(v)?;
            project(t, y)
        },
    },
    Case {
        name: "gather_rows",
        inputs: &[(5, 3)],
        build: |t, v| {
            let y = t.gather_rows(v[0], alloc::vec![4, 0, 2, 2, 1])?;
            project(t, y)
        },
    },
    Case {
        name: "conv1d",
        inputs: &[(14, 3), (15, 4), (1, 4)],
        build: |t, v| {
            let y = t.conv1d(v[0], v[1], v[2], 7, 5)?;
            project(t, y)
        },
    },
    Case {
        name: "sum",
        inputs: &[(3, 4)],
        build: |t, v| {
            let y = t.tanh(v[0]);
            Ok(t.sum(y))
        },
    },
    Case {
        name: "bce",
        inputs: &[(4, 3)],
        build: |t, v| {
            let p = probs(t, v[0]);
            let target = (0..12).map(|i| f64::from(i % 2)).collect();
            let weight = (0..12).map(|i| if i % 5 == 0 { 0.0 } else { 1.0 }).collect();
            t.bce(p, target, weight, 9.0)
        },
    },
    Case {
        name: "sq_err",
        inputs: &[(4, 3)],
        build: |t, v| {
            let p = probs(t, v[0]);
            let target = (0..12).map(|i| f64::from(i) / 12.0).collect();
            let weight = (0..12).map(|i| if i % 4 == 0 { 0.0 } else { 1.0 }).collect();
            t.sq_err(p, target, weight, 9.0)
        },
    },
    Case {
        name: "lstm_cell",
        inputs: &[(3, 4), (3, 2), (3, 2), (4, 8), (2, 8), (1, 8)],
        build: |t, v| {
            let w = LstmWeights {
                w_x: v[3],
                w_h: v[4],
                bias: v[5],
            };
            let (h, c) = lstm_cell(t, v[0], v[1], v[2], &w)?;
            let both = t.concat_cols(&[h, c])?;
            project(t, both)
        },
    },
    Case {
        name: "dropout",
        inputs: &[(4, 5)],
        build: |t, v| {
            let y = dropout(t, v[0], 0.5, 11, true)?;
            project(t, y)
        },
    },
];

/// Checks every tape primitive against central differences in 64-bit on
/// small random inputs. Every coordinate of every input is checked.
pub fn primitive_suite(seed: u64) -> Result<Vec<PrimitiveReport>, TensorError> {
    let mut out = Vec::with_capacity(CASES.len());
    for (ci, case) in CASES.iter().enumerate() {
        let mut rng = rng_from(crate::rng::derive(seed, &[ci as u64]));
        let mut store = ParamStore::<f64>::new();
        for (i, &(r, c)) in case.inputs.iter().enumerate() {
            let data = (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect();
            store.insert(&alloc::format!("x{i}"), Tensor::from_vec(r, c, data)?)?;
        }
        let run = |store: &ParamStore<f64>| -> Result<(Tape<f64>, Var), TensorError> {
            let mut tape = Tape::new();
            let vars: Vec<Var> = store.ids().map(|id| tape.param(store, id)).collect();
            let loss = (case.build)(&mut tape, &vars)?;
            Ok((tape, loss))
        };
        let (tape, loss) = run(&store)?;
        let grads = tape.backward(loss, &store)?;
        let report = finite_diff_check(
            &store,
            &grads,
            |s| run(s).map(|(t, l)| t.value(l).item()),
            PRIMITIVE_EPS,
            usize::MAX,
            seed,
        )?;
        out.push(PrimitiveReport {
            name: case.name,
            report,
        });
    }
    Ok(out)
}

/// Step used by [`primitive_suite`].
pub const PRIMITIVE_EPS: f64 = 1e-6;
