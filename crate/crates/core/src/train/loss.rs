//! Play, masked replay and masked dynamics objectives.
//!
//! All three are minimized. Play is mean binary cross-entropy over every
//! valid cell. Replay (cross-entropy) and dynamics (squared error) only
//! count cells where the target note is played and are averaged over
//! those cells; with no played cells they are exactly zero.

use crate::model::WindowOutput;
use crate::tensor::{Real, Tape, Tensor, TensorError, Var};
use alloc::vec::Vec;

/// Per-cell losses for one window or an aggregate of windows.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub play: f64,
    pub replay: f64,
    pub dynamics: f64,
    pub total: f64,
    pub cells: usize,
    pub played_cells: usize,
}

impl LossBreakdown {
    /// Combines two breakdowns as if their cells had been scored together.
    pub fn merge(&self, other: &Self) -> Self {
        let cells = self.cells + other.cells;
        let played = self.played_cells + other.played_cells;
        let by = |a: f64, na: usize, b: f64, nb: usize| {
            if na + nb == 0 {
                0.0
            } else {
                (a * na as f64 + b * nb as f64) / (na + nb) as f64
            }
        };
        let play = by(self.play, self.cells, other.play, other.cells);
        let replay = by(self.replay, self.played_cells, other.replay, other.played_cells);
        let dynamics = by(self.dynamics, self.played_cells, other.dynamics, other.played_cells);
        Self {
            play,
            replay,
            dynamics,
            total: play + replay + dynamics,
            cells,
            played_cells: played,
        }
    }
}

fn check_lengths(a: usize, b: usize, c: usize) -> Result<(), TensorError> {
    if a != b || a != c {
        return Err(TensorError::ShapeMismatch {
            op: "loss",
            lhs: crate::tensor::Shape::new(1, a),
            rhs: crate::tensor::Shape::new(1, if a != b { b } else { c }),
        });
    }
    Ok(())
}

/// Mean binary cross-entropy of play predictions.
pub fn loss_play<F: Real>(pred: &[F], target: &[F]) -> Result<F, TensorError> {
    check_lengths(pred.len(), target.len(), target.len())?;
    let mut tape = Tape::new();
    let p = tape.constant(Tensor::row_vector(pred.to_vec()));
    let ones = alloc::vec![F::ONE; pred.len()];
    let l = tape.bce(p, target.to_vec(), ones, F::from_f64(pred.len() as f64))?;
    Ok(tape.value(l).item())
}

/// Replay cross-entropy over played cells only.
pub fn loss_replay_masked<F: Real>(
    pred: &[F],
    target_replay: &[F],
    target_play: &[F],
) -> Result<F, TensorError> {
    check_lengths(pred.len(), target_replay.len(), target_play.len())?;
    let mut tape = Tape::new();
    let p = tape.constant(Tensor::row_vector(pred.to_vec()));
    let denom = target_play.iter().fold(F::ZERO, |a, &b| a + b);
    let l = tape.bce(p, target_replay.to_vec(), target_play.to_vec(), denom)?;
    Ok(tape.value(l).item())
}

/// Dynamics squared error over played cells only.
pub fn loss_dynamics_masked<F: Real>(
    pred: &[F],
    target_dyn: &[F],
    target_play: &[F],
) -> Result<F, TensorError> {
    check_lengths(pred.len(), target_dyn.len(), target_play.len())?;
    let mut tape = Tape::new();
    let p = tape.constant(Tensor::row_vector(pred.to_vec()));
    let denom = target_play.iter().fold(F::ZERO, |a, &b| a + b);
    let l = tape.sq_err(p, target_dyn.to_vec(), target_play.to_vec(), denom)?;
    Ok(tape.value(l).item())
}

/// Recorded loss terms of one window.
#[derive(Debug, Clone, Copy)]
pub struct LossVars {
    pub play: Var,
    pub replay: Var,
    pub dynamics: Var,
    pub total: Var,
}

/// Records the three objectives for a window's predictions and returns
/// them with their values. `weights` scale play, replay and dynamics in
/// the recorded total; the breakdown's total is always the plain sum.
pub fn window_loss<F: Real>(
    tape: &mut Tape<F>,
    out: &WindowOutput<F>,
    weights: [f64; 3],
) -> Result<(LossVars, LossBreakdown), TensorError> {
    masked_losses(tape, out.probs, &out.targets, &out.valid, weights)
}

/// As [`window_loss`], for any `rows × 3` probability matrix with matching
/// targets and per-row validity.
pub fn masked_losses<F: Real>(
    tape: &mut Tape<F>,
    probs: Var,
    targets: &Tensor<F>,
    valid: &[F],
    weights: [f64; 3],
) -> Result<(LossVars, LossBreakdown), TensorError> {
    let rows = targets.rows();
    if tape.shape(probs) != targets.shape() || valid.len() != rows || targets.cols() != 3 {
        return Err(TensorError::ShapeMismatch {
            op: "masked_losses",
            lhs: tape.shape(probs),
            rhs: targets.shape(),
        });
    }
    let column = |c: usize| -> Vec<F> { (0..rows).map(|r| targets.get(r, c)).collect() };
    let t_play = column(0);
    let mask: Vec<F> = t_play.iter().zip(valid).map(|(&p, &v)| p * v).collect();
    let cells = valid.iter().filter(|&&v| v != F::ZERO).count();
    let played = mask.iter().filter(|&&v| v != F::ZERO).count();
    let cell_denom = valid.iter().fold(F::ZERO, |a, &b| a + b);
    let played_denom = mask.iter().fold(F::ZERO, |a, &b| a + b);

    let p_play = tape.slice_cols(probs, 0, 1)?;
    let p_replay = tape.slice_cols(probs, 1, 1)?;
    let p_dyn = tape.slice_cols(probs, 2, 1)?;
    let play = tape.bce(p_play, t_play, valid.to_vec(), cell_denom)?;
    let replay = tape.bce(p_replay, column(1), mask.clone(), played_denom)?;
    let dynamics = tape.sq_err(p_dyn, column(2), mask, played_denom)?;

    let a = tape.scale(play, F::from_f64(weights[0]));
    let b = tape.scale(replay, F::from_f64(weights[1]));
    let c = tape.scale(dynamics, F::from_f64(weights[2]));
    let ab = tape.add(a, b)?;
    let total = tape.add(ab, c)?;

    let value = |v: Var| tape.value(v).item().to_f64();
    let (lp, lr, ld) = (value(play), value(replay), value(dynamics));
    let breakdown = LossBreakdown {
        play: lp,
        replay: lr,
        dynamics: ld,
        total: lp + lr + ld,
        cells,
        played_cells: played,
    };
    Ok((
        LossVars {
            play,
            replay,
            dynamics,
            total,
        },
        breakdown,
    ))
}
