//! Standard MIDI File decoding, piano-roll quantization and MIDI export.
//!
//! A piece is held as three `N × T` matrices over a fixed pitch window:
//! `play` (note sounding), `replay` (note re-attacked with no gap after the
//! previous note of the same pitch) and `dynamics` (velocity / 127, held
//! over the note). Time is quantized to `q` steps per 4/4 bar.

use alloc::collections::{BTreeMap, VecDeque};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MidiError {
    #[error("malformed header: {0}")]
    MalformedHeader(&'static str),
    #[error("chunk truncated at byte {offset}")]
    TruncatedChunk { offset: usize },
    #[error("unsupported SMF format {0}")]
    UnsupportedFormat(u16),
    #[error("SMPTE time division is not supported")]
    UnsupportedTiming,
    #[error("malformed event at byte {offset}: {reason}")]
    MalformedEvent { offset: usize, reason: &'static str },
    #[error("no notes inside the pitch window ({dropped} dropped)")]
    EmptyRoll { dropped: usize },
    #[error("invalid quantization grid")]
    InvalidGrid,
    #[error("invalid pitch window: low {low}, count {count}")]
    InvalidWindow { low: u8, count: u8 },
}

/// Non-fatal conditions met while decoding.
#[derive(Debug, Clone, PartialEq)]
pub enum MidiWarning {
    UnmatchedNoteOff { track: usize, pitch: u8, tick: u64 },
    UnclosedNote { track: usize, pitch: u8, onset: u64 },
    TimeSignature { numerator: u8, denominator: u8, tick: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NoteEvent {
    pub pitch: u8,
    pub onset_tick: u64,
    pub offset_tick: u64,
    pub velocity: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuantGrid {
    pub steps_per_bar: u32,
    pub ticks_per_quarter: u32,
}

impl QuantGrid {
    pub const DEFAULT_STEPS_PER_BAR: u32 = 16;

    pub fn new(steps_per_bar: u32, ticks_per_quarter: u32) -> Result<Self, MidiError> {
        if steps_per_bar == 0 || ticks_per_quarter == 0 || ticks_per_quarter >= 0x8000 {
            return Err(MidiError::InvalidGrid);
        }
        Ok(Self {
            steps_per_bar,
            ticks_per_quarter,
        })
    }

    /// Nearest step for `tick`, assuming 4/4; halves round up.
    pub fn step_of(&self, tick: u64) -> usize {
        let q = u64::from(self.steps_per_bar);
        let tpq = u64::from(self.ticks_per_quarter);
        ((2 * tick * q + 4 * tpq) / (8 * tpq)) as usize
    }

    /// Nearest tick for the start of `step`.
    pub fn tick_of(&self, step: usize) -> u64 {
        let q = u64::from(self.steps_per_bar);
        let tpq = u64::from(self.ticks_per_quarter);
        (2 * step as u64 * 4 * tpq + q) / (2 * q)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PitchWindow {
    low: u8,
    count: u8,
}

impl Default for PitchWindow {
    fn default() -> Self {
        Self { low: 36, count: 48 }
    }
}

impl PitchWindow {
    pub fn new(low: u8, count: u8) -> Result<Self, MidiError> {
        if count == 0 || u16::from(low) + u16::from(count) > 128 {
            return Err(MidiError::InvalidWindow { low, count });
        }
        Ok(Self { low, count })
    }

    pub fn low(&self) -> u8 {
        self.low
    }

    pub fn count(&self) -> usize {
        usize::from(self.count)
    }

    /// Row for `pitch`, if the pitch lies inside the window.
    pub fn row(&self, pitch: u8) -> Option<usize> {
        pitch
            .checked_sub(self.low)
            .filter(|&r| r < self.count)
            .map(usize::from)
    }

    pub fn pitch(&self, row: usize) -> u8 {
        self.low + row as u8
    }
}

/// A decoded file: notes from every track merged in onset order.
#[derive(Debug, Clone, PartialEq)]
pub struct MidiScore {
    pub events: Vec<NoteEvent>,
    pub ticks_per_quarter: u32,
    /// Latest end-of-track tick over all tracks.
    pub end_tick: u64,
    pub tempo_bpm: Option<f64>,
    pub warnings: Vec<MidiWarning>,
}

impl MidiScore {
    pub fn grid(&self, steps_per_bar: u32) -> Result<QuantGrid, MidiError> {
        QuantGrid::new(steps_per_bar, self.ticks_per_quarter)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    end: usize,
}

impl<'a> Reader<'a> {
    fn u8(&mut self) -> Result<u8, MidiError> {
        if self.pos >= self.end {
            return Err(MidiError::TruncatedChunk { offset: self.pos });
        }
        let b = self.bytes[self.pos];
        self.pos += 1;
        Ok(b)
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], MidiError> {
        if self.end - self.pos < n {
            return Err(MidiError::TruncatedChunk { offset: self.pos });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn vlq(&mut self) -> Result<u64, MidiError> {
        let start = self.pos;
        let mut value = 0u64;
        for _ in 0..4 {
            let b = self.u8()?;
            value = (value << 7) | u64::from(b & 0x7f);
            if b & 0x80 == 0 {
                return Ok(value);
            }
        }
        Err(MidiError::MalformedEvent {
            offset: start,
            reason: "variable-length quantity longer than 4 bytes",
        })
    }
}

fn be_u32(b: &[u8]) -> u32 {
    u32::from_be_bytes([b[0], b[1], b[2], b[3]])
}

fn be_u16(b: &[u8]) -> u16 {
    u16::from_be_bytes([b[0], b[1]])
}

/// Decodes an SMF (format 0 or 1) into paired note events.
///
/// Running status is honored, a note-on with velocity 0 is a note-off,
/// note-offs pair with the oldest open note of the same channel and pitch,
/// and notes still open at end-of-track are closed there.
pub fn parse_midi(bytes: &[u8]) -> Result<MidiScore, MidiError> {
    if bytes.len() < 8 || &bytes[0..4] != b"MThd" {
        return Err(MidiError::MalformedHeader("missing MThd magic"));
    }
    let header_len = be_u32(&bytes[4..8]) as usize;
    if header_len < 6 {
        return Err(MidiError::MalformedHeader("header chunk shorter than 6 bytes"));
    }
    if bytes.len() < 8 + header_len {
        return Err(MidiError::TruncatedChunk { offset: 8 });
    }
    let format = be_u16(&bytes[8..10]);
    let division = be_u16(&bytes[12..14]);
    if format > 1 {
        return Err(MidiError::UnsupportedFormat(format));
    }
    if division & 0x8000 != 0 {
        return Err(MidiError::UnsupportedTiming);
    }
    if division == 0 {
        return Err(MidiError::MalformedHeader("zero ticks per quarter note"));
    }

    let mut score = MidiScore {
        events: Vec::new(),
        ticks_per_quarter: u32::from(division),
        end_tick: 0,
        tempo_bpm: None,
        warnings: Vec::new(),
    };
    let mut pos = 8 + header_len;
    let mut track = 0;
    while pos < bytes.len() {
        if bytes.len() - pos < 8 {
            return Err(MidiError::TruncatedChunk { offset: pos });
        }
        let kind = &bytes[pos..pos + 4];
        let len = be_u32(&bytes[pos + 4..pos + 8]) as usize;
        let body = pos + 8;
        if bytes.len() - body < len {
            return Err(MidiError::TruncatedChunk { offset: pos });
        }
        if kind == b"MTrk" {
            parse_track(
                Reader {
                    bytes,
                    pos: body,
                    end: body + len,
                },
                track,
                &mut score,
            )?;
            track += 1;
        }
        pos = body + len;
    }
    score.events.sort_unstable_by_key(|e| (e.onset_tick, e.pitch, e.offset_tick, e.velocity));
    Ok(score)
}

fn parse_track(mut r: Reader<'_>, track: usize, score: &mut MidiScore) -> Result<(), MidiError> {
    let mut tick = 0u64;
    let mut running: Option<u8> = None;
    let mut open: BTreeMap<(u8, u8), VecDeque<(u64, u8)>> = BTreeMap::new();

    while r.pos < r.end {
        tick += r.vlq()?;
        let at = r.pos;
        let first = r.u8()?;
        let (status, first_data) = if first & 0x80 != 0 {
            (first, None)
        } else {
            match running {
                Some(s) => (s, Some(first)),
                None => {
                    return Err(MidiError::MalformedEvent {
                        offset: at,
                        reason: "data byte without running status",
                    })
                }
            }
        };
        match status {
            0xff => {
                let kind = r.u8()?;
                let len = r.vlq()? as usize;
                let data = r.take(len)?;
                match kind {
                    0x2f => break,
                    0x51 if data.len() == 3 && score.tempo_bpm.is_none() => {
                        let micros = u32::from_be_bytes([0, data[0], data[1], data[2]]);
                        if micros > 0 {
                            score.tempo_bpm = Some(60_000_000.0 / f64::from(micros));
                        }
                    }
                    0x58 if data.len() >= 2 => {
                        let numerator = data[0];
                        let denominator = 1u8.checked_shl(u32::from(data[1])).unwrap_or(0);
                        if (numerator, denominator) != (4, 4) {
                            score.warnings.push(MidiWarning::TimeSignature {
                                numerator,
                                denominator,
                                tick,
                            });
                        }
                    }
                    _ => {}
                }
            }
            0xf0 | 0xf7 => {
                let len = r.vlq()? as usize;
                r.take(len)?;
            }
            0x80..=0xef => {
                running = Some(status);
                let d1 = match first_data {
                    Some(d) => d,
                    None => r.u8()?,
                };
                let kind = status & 0xf0;
                let channel = status & 0x0f;
                let d2 = if matches!(kind, 0xc0 | 0xd0) { 0 } else { r.u8()? };
                if d1 & 0x80 != 0 || d2 & 0x80 != 0 {
                    return Err(MidiError::MalformedEvent {
                        offset: at,
                        reason: "data byte with high bit set",
                    });
                }
                match (kind, d2) {
                    (0x90, v) if v > 0 => {
                        open.entry((channel, d1)).or_default().push_back((tick, v));
                    }
                    (0x80, _) | (0x90, _) => {
                        match open.get_mut(&(channel, d1)).and_then(VecDeque::pop_front) {
                            Some((onset, velocity)) => score.events.push(NoteEvent {
                                pitch: d1,
                                onset_tick: onset,
                                offset_tick: tick.max(onset + 1),
                                velocity,
                            }),
                            None => score.warnings.push(MidiWarning::UnmatchedNoteOff {
                                track,
                                pitch: d1,
                                tick,
                            }),
                        }
                    }
                    _ => {}
                }
            }
            _ => {
                return Err(MidiError::MalformedEvent {
                    offset: at,
                    reason: "system message inside a track",
                })
            }
        }
    }

    for ((_, pitch), notes) in open {
        for (onset, velocity) in notes {
            score.warnings.push(MidiWarning::UnclosedNote { track, pitch, onset });
            score.events.push(NoteEvent {
                pitch,
                onset_tick: onset,
                offset_tick: tick.max(onset + 1),
                velocity,
            });
        }
    }
    score.end_tick = score.end_tick.max(tick);
    Ok(())
}

/// Which invariant a roll breaks, and where.
#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum RollError {
    #[error("replay without a sounding note before it at note {note}, step {step}")]
    ReplayWithoutPlay { note: usize, step: usize },
    #[error("dynamics on a silent cell at note {note}, step {step}")]
    DynamicsWhileSilent { note: usize, step: usize },
    #[error("dynamics outside [0, 1] at note {note}, step {step}")]
    DynamicsRange { note: usize, step: usize },
    #[error("roll matrices do not match {notes}x{steps}")]
    Dimensions { notes: usize, steps: usize },
}

/// Play/replay/dynamics piano roll, each matrix `notes × steps` row-major.
#[derive(Clone, PartialEq)]
pub struct NoteRoll {
    notes: usize,
    steps: usize,
    steps_per_bar: usize,
    play: Vec<bool>,
    replay: Vec<bool>,
    dynamics: Vec<f32>,
}

impl fmt::Debug for NoteRoll {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "NoteRoll {}x{} (q={})", self.notes, self.steps, self.steps_per_bar)?;
        for n in (0..self.notes).rev() {
            if !(0..self.steps).any(|t| self.play(n, t)) {
                continue;
            }
            write!(f, "{n:>3} ")?;
            for t in 0..self.steps {
                let c = match (self.play(n, t), self.replay(n, t)) {
                    (true, true) => '|',
                    (true, false) => '#',
                    _ => '.',
                };
                write!(f, "{c}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

impl NoteRoll {
    pub fn silent(notes: usize, steps: usize, steps_per_bar: usize) -> Self {
        Self {
            notes,
            steps,
            steps_per_bar,
            play: vec![false; notes * steps],
            replay: vec![false; notes * steps],
            dynamics: vec![0.0; notes * steps],
        }
    }

    /// Builds a roll from raw matrices and checks every invariant.
    pub fn from_parts(
        notes: usize,
        steps: usize,
        steps_per_bar: usize,
        play: Vec<bool>,
        replay: Vec<bool>,
        dynamics: Vec<f32>,
    ) -> Result<Self, RollError> {
        let len = notes * steps;
        if play.len() != len || replay.len() != len || dynamics.len() != len {
            return Err(RollError::Dimensions { notes, steps });
        }
        let roll = Self {
            notes,
            steps,
            steps_per_bar,
            play,
            replay,
            dynamics,
        };
        roll.validate()?;
        Ok(roll)
    }

    pub fn notes(&self) -> usize {
        self.notes
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn steps_per_bar(&self) -> usize {
        self.steps_per_bar
    }

    fn idx(&self, note: usize, step: usize) -> usize {
        debug_assert!(note < self.notes && step < self.steps);
        note * self.steps + step
    }

    pub fn play(&self, note: usize, step: usize) -> bool {
        self.play[self.idx(note, step)]
    }

    pub fn replay(&self, note: usize, step: usize) -> bool {
        self.replay[self.idx(note, step)]
    }

    pub fn dynamics(&self, note: usize, step: usize) -> f32 {
        self.dynamics[self.idx(note, step)]
    }

    pub fn play_matrix(&self) -> &[bool] {
        &self.play
    }

    pub fn replay_matrix(&self) -> &[bool] {
        &self.replay
    }

    pub fn dynamics_matrix(&self) -> &[f32] {
        &self.dynamics
    }

    /// Writes one cell. Silent cells always get replay 0 and dynamics 0.
    pub fn set(&mut self, note: usize, step: usize, play: bool, replay: bool, dynamics: f32) {
        let i = self.idx(note, step);
        self.play[i] = play;
        self.replay[i] = play && replay;
        self.dynamics[i] = if play { dynamics } else { 0.0 };
    }

    /// `(play, replay, dynamics)` of one cell as reals.
    pub fn triple(&self, note: usize, step: usize) -> [f32; 3] {
        let i = self.idx(note, step);
        [
            f32::from(u8::from(self.play[i])),
            f32::from(u8::from(self.replay[i])),
            self.dynamics[i],
        ]
    }

    pub fn played_cells(&self) -> usize {
        self.play.iter().filter(|&&p| p).count()
    }

    pub fn is_silent_step(&self, step: usize) -> bool {
        (0..self.notes).all(|n| !self.play(n, step))
    }

    pub fn validate(&self) -> Result<(), RollError> {
        for n in 0..self.notes {
            for t in 0..self.steps {
                let i = self.idx(n, t);
                if self.replay[i] && (!self.play[i] || t == 0 || !self.play[i - 1]) {
                    return Err(RollError::ReplayWithoutPlay { note: n, step: t });
                }
                let d = self.dynamics[i];
                if !(0.0..=1.0).contains(&d) {
                    return Err(RollError::DynamicsRange { note: n, step: t });
                }
                if !self.play[i] && d != 0.0 {
                    return Err(RollError::DynamicsWhileSilent { note: n, step: t });
                }
            }
        }
        Ok(())
    }

    /// Steps `[start, end)` as a new roll.
    pub fn slice_steps(&self, start: usize, end: usize) -> Self {
        let end = end.min(self.steps);
        let start = start.min(end);
        let mut out = Self::silent(self.notes, end - start, self.steps_per_bar);
        for n in 0..self.notes {
            for t in start..end {
                let i = self.idx(n, t);
                let keep_replay = self.replay[i] && t > start;
                out.set(n, t - start, self.play[i], keep_replay, self.dynamics[i]);
            }
        }
        out
    }

    /// This roll followed by `other` in time. A note sounding on both sides
    /// of the seam is re-attacked there.
    pub fn concat(&self, other: &Self) -> Option<Self> {
        if self.notes != other.notes || self.steps_per_bar != other.steps_per_bar {
            return None;
        }
        let mut out = Self::silent(self.notes, self.steps + other.steps, self.steps_per_bar);
        for n in 0..self.notes {
            for t in 0..self.steps {
                let i = self.idx(n, t);
                out.set(n, t, self.play[i], self.replay[i], self.dynamics[i]);
            }
            for t in 0..other.steps {
                let i = other.idx(n, t);
                let seam = t == 0 && self.steps > 0 && self.play(n, self.steps - 1) && other.play[i];
                out.set(n, self.steps + t, other.play[i], other.replay[i] || seam, other.dynamics[i]);
            }
        }
        Some(out)
    }

    /// Shifts every note `k` rows up (negative: down). `None` if any played
    /// cell would leave the window.
    pub fn transposed(&self, k: isize) -> Option<Self> {
        let mut out = Self::silent(self.notes, self.steps, self.steps_per_bar);
        for n in 0..self.notes {
            for t in 0..self.steps {
                let i = self.idx(n, t);
                if !self.play[i] {
                    continue;
                }
                let m = n as isize + k;
                if m < 0 || m >= self.notes as isize {
                    return None;
                }
                out.set(m as usize, t, true, self.replay[i], self.dynamics[i]);
            }
        }
        Some(out)
    }

    /// One note per maximal play run, split wherever replay is set.
    /// Returns `(note row, start step, end step, onset dynamics)`.
    pub fn segments(&self) -> Vec<(usize, usize, usize, f32)> {
        let mut out = Vec::new();
        for n in 0..self.notes {
            let mut t = 0;
            while t < self.steps {
                if !self.play(n, t) {
                    t += 1;
                    continue;
                }
                let start = t;
                t += 1;
                while t < self.steps && self.play(n, t) && !self.replay(n, t) {
                    t += 1;
                }
                out.push((n, start, t, self.dynamics(n, start)));
            }
        }
        out
    }
}

/// Result of [`quantize`].
#[derive(Debug, Clone, PartialEq)]
pub struct Quantized {
    pub roll: NoteRoll,
    pub kept: usize,
    pub dropped: usize,
}

/// Maps note events onto a piano roll.
///
/// Onsets and offsets round to the nearest step (4/4, halves up); notes
/// that collapse to zero length keep one step. Pitches outside `window`
/// are dropped and counted. A note starting on the step where another note
/// of the same pitch ends, or inside one, is a re-attack: its first cell
/// gets replay and overlapping notes merge up to the later offset. The roll
/// spans at least to `end_tick`.
pub fn quantize(
    events: &[NoteEvent],
    grid: QuantGrid,
    window: PitchWindow,
    end_tick: u64,
) -> Result<Quantized, MidiError> {
    let mut per_row: Vec<Vec<(usize, usize, u8)>> = vec![Vec::new(); window.count()];
    let mut dropped = 0;
    let mut kept = 0;
    for e in events {
        let Some(row) = window.row(e.pitch) else {
            dropped += 1;
            continue;
        };
        kept += 1;
        let start = grid.step_of(e.onset_tick);
        let end = grid.step_of(e.offset_tick).max(start + 1);
        per_row[row].push((start, end, e.velocity));
    }
    if kept == 0 {
        return Err(MidiError::EmptyRoll { dropped });
    }

    // Flatten overlapping notes into disjoint segments per row.
    let mut segments: Vec<Vec<(usize, usize, u8)>> = Vec::with_capacity(per_row.len());
    let mut steps = grid.step_of(end_tick);
    for mut notes in per_row {
        notes.sort_unstable_by_key(|&(s, e, v)| (s, core::cmp::Reverse(e), core::cmp::Reverse(v)));
        let mut flat: Vec<(usize, usize, u8)> = Vec::new();
        for (s, e, v) in notes {
            match flat.last_mut() {
                Some(last) if s == last.0 => last.1 = last.1.max(e),
                Some(last) if s < last.1 => {
                    let merged_end = last.1.max(e);
                    last.1 = s;
                    flat.push((s, merged_end, v));
                }
                _ => flat.push((s, e, v)),
            }
        }
        if let Some(last) = flat.last() {
            steps = steps.max(last.1);
        }
        segments.push(flat);
    }

    let mut roll = NoteRoll::silent(window.count(), steps, grid.steps_per_bar as usize);
    for (row, flat) in segments.iter().enumerate() {
        let mut prev_end = None;
        for &(s, e, v) in flat {
            let dyn_level = f32::from(v) / 127.0;
            for t in s..e {
                let replay = t == s && prev_end == Some(s);
                roll.set(row, t, true, replay, dyn_level);
            }
            prev_end = Some(e);
        }
    }
    Ok(Quantized {
        roll,
        kept,
        dropped,
    })
}

fn push_vlq(out: &mut Vec<u8>, mut value: u64) {
    let mut stack = [0u8; 10];
    let mut n = 0;
    loop {
        stack[n] = (value & 0x7f) as u8;
        n += 1;
        value >>= 7;
        if value == 0 {
            break;
        }
    }
    for i in (0..n).rev() {
        out.push(stack[i] | if i > 0 { 0x80 } else { 0 });
    }
}

/// MIDI velocity for a dynamics level: `round(d * 127)` clamped to 1..=127.
pub fn velocity_of(dynamics: f32) -> u8 {
    libm::roundf(dynamics * 127.0).clamp(1.0, 127.0) as u8
}

/// Renders a roll as a type-0 SMF on channel 0.
///
/// Each play run becomes one note, split where replay is set, with the
/// velocity of its first cell. Note-offs are written as velocity-0
/// note-ons under running status, before any note-on at the same tick.
/// The roll's pitch rows start at `window.low()`.
pub fn roll_to_midi(roll: &NoteRoll, tempo_bpm: f64, grid: QuantGrid, window: PitchWindow) -> Vec<u8> {
    // (tick, is_on, pitch, velocity); offs sort before ons.
    let mut events: Vec<(u64, bool, u8, u8)> = Vec::new();
    for (row, start, end, dyn_level) in roll.segments() {
        let pitch = window.pitch(row);
        events.push((grid.tick_of(start), true, pitch, velocity_of(dyn_level)));
        events.push((grid.tick_of(end), false, pitch, 0));
    }
    events.sort_unstable();

    let mut track = Vec::new();
    let micros = libm::round(60_000_000.0 / tempo_bpm.max(1e-3)).clamp(1.0, 16_777_215.0) as u32;
    push_vlq(&mut track, 0);
    track.extend_from_slice(&[0xff, 0x51, 0x03]);
    track.extend_from_slice(&micros.to_be_bytes()[1..]);
    push_vlq(&mut track, 0);
    track.extend_from_slice(&[0xff, 0x58, 0x04, 4, 2, 24, 8]);

    let mut now = 0u64;
    let mut running = false;
    for (tick, _, pitch, velocity) in events {
        push_vlq(&mut track, tick - now);
        now = tick;
        if !running {
            track.push(0x90);
            running = true;
        }
        track.push(pitch);
        track.push(velocity);
    }
    let end = grid.tick_of(roll.steps()).max(now);
    push_vlq(&mut track, end - now);
    track.extend_from_slice(&[0xff, 0x2f, 0x00]);

    let mut out = Vec::with_capacity(track.len() + 22);
    out.extend_from_slice(b"MThd");
    out.extend_from_slice(&6u32.to_be_bytes());
    out.extend_from_slice(&0u16.to_be_bytes());
    out.extend_from_slice(&1u16.to_be_bytes());
    out.extend_from_slice(&(grid.ticks_per_quarter as u16).to_be_bytes());
    out.extend_from_slice(b"MTrk");
    out.extend_from_slice(&(track.len() as u32).to_be_bytes());
    out.extend_from_slice(&track);
    out
}

/// Column of the one-hot beat vector at step `t`.
pub fn beat_index(t: usize, q: usize) -> usize {
    t % q
}

/// `T × q` one-hot beat matrix: row `t` has its 1 at column `t mod q`.
pub fn beat_vectors(steps: usize, q: usize) -> Vec<Vec<u8>> {
    assert!(q >= 1, "beat vectors need q >= 1");
    (0..steps)
        .map(|t| {
            let mut row = vec![0u8; q];
            row[beat_index(t, q)] = 1;
            row
        })
        .collect()
}
