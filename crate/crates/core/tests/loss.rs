use deepj_core::rng::rng_from;
use deepj_core::tensor::{Tape, Tensor};
use deepj_core::train::{loss_dynamics_masked, loss_play, loss_replay_masked, masked_losses};
use proptest::prelude::*;
use rand::Rng;

#[test]
fn play_loss_examples() {
    let l = loss_play(&[0.5f64], &[1.0]).unwrap();
    assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
    let l = loss_play(&[1.0f64, 0.0, 1.0], &[1.0, 0.0, 1.0]).unwrap();
    assert!(l > 0.0 && l < 1e-6);
    assert!(loss_play(&[0.5f64], &[1.0, 0.0]).is_err());
}

#[test]
fn play_loss_matches_per_cell_sum() {
    let mut rng = rng_from(12);
    let pred: Vec<f64> = (0..35).map(|_| rng.gen_range(0.01..0.99)).collect();
    let target: Vec<f64> = (0..35).map(|_| f64::from(rng.gen_range(0u8..2))).collect();
    let mut oracle = 0.0;
    for (p, t) in pred.iter().zip(&target) {
        oracle -= if *t == 1.0 { p.ln() } else { (1.0 - p).ln() };
    }
    oracle /= 35.0;
    assert!((loss_play(&pred, &target).unwrap() - oracle).abs() < 1e-12);
}

#[test]
fn masked_loss_examples() {
    let none = loss_replay_masked(&[0.3f64, 0.9], &[1.0, 0.0], &[0.0, 0.0]).unwrap();
    assert_eq!(none, 0.0);
    let d = loss_dynamics_masked(&[0.9f64, 0.1], &[0.4, 0.0], &[1.0, 0.0]).unwrap();
    assert!((d - 0.25).abs() < 1e-15);
    let exact = loss_dynamics_masked(&[0.4f64, 0.8], &[0.4, 0.8], &[1.0, 1.0]).unwrap();
    assert_eq!(exact, 0.0);
    let r = loss_replay_masked(&[0.5f64, 0.1], &[1.0, 1.0], &[1.0, 0.0]).unwrap();
    assert!((r - std::f64::consts::LN_2).abs() < 1e-15);
}

/// Random targets satisfying the roll invariants, plus random predictions.
fn random_cells(seed: u64, rows: usize) -> (Tensor<f64>, Tensor<f64>) {
    let mut rng = rng_from(seed);
    let mut targets = Tensor::zeros(rows, 3);
    let mut probs = Tensor::zeros(rows, 3);
    for r in 0..rows {
        if rng.gen_bool(0.4) {
            targets.set(r, 0, 1.0);
            targets.set(r, 1, f64::from(rng.gen_range(0u8..2)));
            targets.set(r, 2, rng.gen_range(0.0..1.0));
        }
        for c in 0..3 {
            probs.set(r, c, rng.gen_range(0.01..0.99));
        }
    }
    (targets, probs)
}

#[test]
fn unplayed_cells_cannot_move_the_total() {
    let (targets, probs) = random_cells(3, 60);
    let valid = vec![1.0; 60];
    let run = |p: &Tensor<f64>| {
        let mut tape = Tape::new();
        let pv = tape.input(p.clone());
        let (vars, breakdown) = masked_losses(&mut tape, pv, &targets, &valid, [1.0; 3]).unwrap();
        let g = tape.grad_of(vars.total, &[pv]).unwrap().remove(0);
        (breakdown, g)
    };
    let (base, grad) = run(&probs);
    let mut rng = rng_from(4);
    let mut perturbed = probs.clone();
    for r in 0..60 {
        if targets.get(r, 0) == 0.0 {
            perturbed.set(r, 1, rng.gen_range(0.0..1.0));
            perturbed.set(r, 2, rng.gen_range(0.0..1.0));
            assert_eq!(grad.get(r, 1).to_bits(), 0.0f64.to_bits());
            assert_eq!(grad.get(r, 2).to_bits(), 0.0f64.to_bits());
        } else {
            assert_ne!(grad.get(r, 2), 0.0);
        }
    }
    let (after, _) = run(&perturbed);
    assert_eq!(base.total.to_bits(), after.total.to_bits());
    assert_eq!(base.total, base.play + base.replay + base.dynamics);
}

#[test]
fn padding_rows_are_excluded() {
    let (targets, probs) = random_cells(5, 30);
    let mut valid = vec![1.0; 30];
    for v in valid.iter_mut().skip(20) {
        *v = 0.0;
    }
    let mut tape = Tape::new();
    let pv = tape.constant(probs.clone());
    let (_, padded) = masked_losses(&mut tape, pv, &targets, &valid, [1.0; 3]).unwrap();

    let head = |t: &Tensor<f64>| Tensor::from_vec(20, 3, t.data()[..60].to_vec()).unwrap();
    let mut tape = Tape::new();
    let pv = tape.constant(head(&probs));
    let (_, short) = masked_losses(&mut tape, pv, &head(&targets), &[1.0; 20], [1.0; 3]).unwrap();
    assert!((padded.total - short.total).abs() < 1e-15);
    assert_eq!(padded.cells, 20);
}

#[test]
fn doubling_the_cells_keeps_per_cell_losses() {
    let (targets, probs) = random_cells(6, 40);
    let double = |t: &Tensor<f64>| {
        let mut d = t.data().to_vec();
        d.extend_from_slice(t.data());
        Tensor::from_vec(80, 3, d).unwrap()
    };
    let score = |p: Tensor<f64>, t: &Tensor<f64>| {
        let mut tape = Tape::new();
        let pv = tape.constant(p);
        masked_losses(&mut tape, pv, t, &vec![1.0; t.rows()], [1.0; 3]).unwrap().1
    };
    let one = score(probs.clone(), &targets);
    let two = score(double(&probs), &double(&targets));
    for (a, b) in [(one.play, two.play), (one.replay, two.replay), (one.dynamics, two.dynamics)] {
        assert!((a - b).abs() < 1e-6);
    }
    assert_eq!(two.played_cells, 2 * one.played_cells);
}

#[test]
fn masked_gradient_matches_finite_differences() {
    let pred = [0.3f64, 0.6, 0.8, 0.2, 0.55, 0.7, 0.4, 0.9, 0.15];
    let target = [1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0];
    let play = [1.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.0];
    let mut tape = Tape::new();
    let p = tape.input(Tensor::from_vec(3, 3, pred.to_vec()).unwrap());
    let denom: f64 = play.iter().sum();
    let l = tape.bce(p, target.to_vec(), play.to_vec(), denom).unwrap();
    let g = tape.grad_of(l, &[p]).unwrap().remove(0);
    for i in 0..9 {
        let eps = 1e-6;
        let mut up = pred;
        up[i] += eps;
        let mut down = pred;
        down[i] -= eps;
        let fd = (loss_replay_masked(&up, &target, &play).unwrap()
            - loss_replay_masked(&down, &target, &play).unwrap())
            / (2.0 * eps);
        if play[i] == 0.0 {
            assert_eq!(g.data()[i], 0.0);
            assert_eq!(fd, 0.0);
        } else {
            assert!((g.data()[i] - fd).abs() / fd.abs() < 1e-6);
        }
    }
}

proptest! {
    #[test]
    fn losses_are_non_negative_and_replay_vanishes_without_play(seed in any::<u64>(), rows in 1usize..50) {
        let (mut targets, probs) = random_cells(seed, rows);
        let mut tape = Tape::new();
        let pv = tape.constant(probs.clone());
        let (_, b) = masked_losses(&mut tape, pv, &targets, &vec![1.0; rows], [1.0; 3]).unwrap();
        prop_assert!(b.play >= 0.0 && b.replay >= 0.0 && b.dynamics >= 0.0);
        for r in 0..rows {
            targets.set(r, 0, 0.0);
            targets.set(r, 1, 0.0);
            targets.set(r, 2, 0.0);
        }
        let mut tape = Tape::new();
        let pv = tape.constant(probs);
        let (_, b) = masked_losses(&mut tape, pv, &targets, &vec![1.0; rows], [1.0; 3]).unwrap();
        prop_assert_eq!(b.replay, 0.0);
        prop_assert_eq!(b.dynamics, 0.0);
        prop_assert_eq!(b.played_cells, 0);
    }
}
