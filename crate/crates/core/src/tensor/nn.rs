use super::{Real, Tape, Tensor, TensorError, Var};
use crate::rng::rng_from;
use alloc::vec::Vec;
use rand::Rng;

/// Recorded handles for one LSTM layer.
///
/// `w_x` is `in × 4H`, `w_h` is `H × 4H`, `bias` is `1 × 4H`; gate
/// blocks are laid out as input, forget, cell candidate, output.
#[derive(Clone, Copy, Debug)]
pub struct LstmWeights {
    pub w_x: Var,
    pub w_h: Var,
    pub bias: Var,
}

/// One LSTM step over a batch of rows.
///
/// ```text
/// i = σ(x Wxi + h Whi + bi)    f = σ(x Wxf + h Whf + bf)
/// g = tanh(x Wxg + h Whg + bg) o = σ(x Wxo + h Who + bo)
/// c' = f ∘ c + i ∘ g           h' = o ∘ tanh(c')
/// ```
pub fn lstm_cell<F: Real>(
    tape: &mut Tape<F>,
    x: Var,
    h: Var,
    c: Var,
    w: &LstmWeights,
) -> Result<(Var, Var), TensorError> {
    let hidden = tape.shape(w.w_h).rows;
    if tape.shape(w.w_h).cols != 4 * hidden || tape.shape(c) != tape.shape(h) {
        return Err(TensorError::ShapeMismatch {
            op: "lstm_cell",
            lhs: tape.shape(h),
            rhs: tape.shape(w.w_h),
        });
    }
    let xw = tape.matmul(x, w.w_x)?;
    let hw = tape.matmul(h, w.w_h)?;
    let pre = tape.add(xw, hw)?;
    let pre = tape.add_row(pre, w.bias)?;
    let i = tape.slice_cols(pre, 0, hidden)?;
    let f = tape.slice_cols(pre, hidden, hidden)?;
    let g = tape.slice_cols(pre, 2 * hidden, hidden)?;
    let o = tape.slice_cols(pre, 3 * hidden, hidden)?;
    let i = tape.sigmoid(i);
    let f = tape.sigmoid(f);
    let g = tape.tanh(g);
    let o = tape.sigmoid(o);
    let keep = tape.mul(f, c)?;
    let write = tape.mul(i, g)?;
    let c_next = tape.add(keep, write)?;
    let squashed = tape.tanh(c_next);
    let h_next = tape.mul(o, squashed)?;
    Ok((h_next, c_next))
}

/// Inverted-dropout mask: each entry is `0` with probability `rate`,
/// otherwise `1 / (1 - rate)`. Fully determined by `seed`.
pub fn dropout_mask<F: Real>(rows: usize, cols: usize, rate: f64, seed: u64) -> Tensor<F> {
    let mut rng = rng_from(seed);
    let keep = F::from_f64(1.0 / (1.0 - rate));
    let data: Vec<F> = (0..rows * cols)
        .map(|_| {
            if rng.gen::<f64>() < rate {
                F::ZERO
            } else {
                keep
            }
        })
        .collect();
    Tensor::from_vec(rows, cols, data).expect("mask length matches shape")
}

/// Applies inverted dropout. Identity when `training` is false or the rate
/// is zero, so inference needs no rescaling.
pub fn dropout<F: Real>(
    tape: &mut Tape<F>,
    x: Var,
    rate: f64,
    seed: u64,
    training: bool,
) -> Result<Var, TensorError> {
    if !(0.0..1.0).contains(&rate) {
        return Err(TensorError::Invalid("dropout rate must lie in [0, 1)"));
    }
    if !training || rate == 0.0 {
        return Ok(x);
    }
    let s = tape.shape(x);
    let mask = tape.constant(dropout_mask(s.rows, s.cols, rate, seed));
    tape.mul(x, mask)
}
