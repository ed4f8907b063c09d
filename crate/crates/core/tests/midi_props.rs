mod common;

use deepj_core::midi::{parse_midi, quantize, roll_to_midi};
use deepj_core::rng::rng_from;
use deepj_core::{NoteEvent, PitchWindow, QuantGrid};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn rolls_survive_a_midi_round_trip(
        seed in any::<u64>(),
        steps in 1usize..80,
        density in 0.02f64..0.5,
        tpq in prop::sample::select(vec![96u32, 120, 384, 480, 960]),
        bpm in 40.0f64..200.0,
    ) {
        let mut roll = common::random_roll(&mut rng_from(seed), 48, steps, 16, density);
        if roll.played_cells() == 0 {
            roll.set(0, 0, true, false, 0.5);
        }
        let grid = QuantGrid::new(16, tpq).unwrap();
        let window = PitchWindow::default();
        let bytes = roll_to_midi(&roll, bpm, grid, window);
        let score = parse_midi(&bytes).unwrap();
        prop_assert_eq!(score.ticks_per_quarter, tpq);
        let back = quantize(&score.events, score.grid(16).unwrap(), window, score.end_tick).unwrap().roll;
        prop_assert_eq!(back.steps(), roll.steps());
        prop_assert_eq!(back.play_matrix(), roll.play_matrix());
        prop_assert_eq!(back.replay_matrix(), roll.replay_matrix());
        for (a, b) in back.dynamics_matrix().iter().zip(roll.dynamics_matrix()) {
            prop_assert!((a - b).abs() <= 1.0 / 254.0);
        }
    }

    #[test]
    fn ingested_rolls_keep_replay_inside_play_runs(
        notes in prop::collection::vec((30u8..90, 0u64..4000, 0u64..1500, 1u8..128), 1..60),
        tpq in prop::sample::select(vec![96u32, 480]),
    ) {
        let events: Vec<NoteEvent> = notes
            .iter()
            .map(|&(pitch, on, len, velocity)| NoteEvent {
                pitch,
                onset_tick: on,
                offset_tick: on + len,
                velocity,
            })
            .collect();
        let grid = QuantGrid::new(16, tpq).unwrap();
        let Ok(q) = quantize(&events, grid, PitchWindow::default(), 0) else {
            prop_assert!(events.iter().all(|e| !(36..84).contains(&e.pitch)));
            return Ok(());
        };
        let roll = q.roll;
        prop_assert!(roll.validate().is_ok());
        prop_assert_eq!(q.kept + q.dropped, events.len());
        for n in 0..roll.notes() {
            for t in 0..roll.steps() {
                if roll.replay(n, t) {
                    prop_assert!(t > 0 && roll.play(n, t) && roll.play(n, t - 1));
                }
            }
        }
    }
}
