//! Ingested roll cache.
//!
//! A cache directory holds `index.json` and one `.djrl` file per piece.
//! A `.djrl` file is little-endian throughout:
//!
//! ```text
//! "DJRL"  u32 version  u32 N  u32 T  u32 q
//! play bits    N*T bits, row-major (n*T + t), LSB first, zero padded to a byte
//! replay bits  same layout
//! dynamics     N*T f32, row-major
//! ```

use anyhow::{bail, ensure, Context, Result};
use deepj_core::model::Composer;
use deepj_core::train::Example;
use deepj_core::{NoteRoll, StyleCatalog, StyleVector};
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const ROLL_MAGIC: &[u8; 4] = b"DJRL";
pub const ROLL_VERSION: u32 = 1;
pub const INDEX_FORMAT: &str = "deepj-cache";
pub const INDEX_VERSION: u32 = 1;
pub const INDEX_FILE: &str = "index.json";

fn pack_bits(bits: &[bool], out: &mut Vec<u8>) {
    for chunk in bits.chunks(8) {
        let byte = chunk
            .iter()
            .enumerate()
            .fold(0u8, |acc, (i, &b)| acc | (u8::from(b) << i));
        out.push(byte);
    }
}

fn unpack_bits(bytes: &[u8], len: usize) -> Vec<bool> {
    (0..len).map(|i| bytes[i / 8] >> (i % 8) & 1 == 1).collect()
}

pub fn encode_roll(roll: &NoteRoll) -> Vec<u8> {
    let cells = roll.notes() * roll.steps();
    let mut out = Vec::with_capacity(20 + 2 * cells.div_ceil(8) + 4 * cells);
    out.extend_from_slice(ROLL_MAGIC);
    for v in [ROLL_VERSION, roll.notes() as u32, roll.steps() as u32, roll.steps_per_bar() as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    pack_bits(roll.play_matrix(), &mut out);
    pack_bits(roll.replay_matrix(), &mut out);
    for d in roll.dynamics_matrix() {
        out.extend_from_slice(&d.to_le_bytes());
    }
    out
}

pub fn decode_roll(bytes: &[u8]) -> Result<NoteRoll> {
    ensure!(bytes.len() >= 20 && &bytes[..4] == ROLL_MAGIC, "not a DJRL roll file");
    let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap());
    let version = word(0);
    if version != ROLL_VERSION {
        bail!("roll file version {version} is not supported (expected {ROLL_VERSION})");
    }
    let (notes, steps, q) = (word(1) as usize, word(2) as usize, word(3) as usize);
    let cells = notes
        .checked_mul(steps)
        .context("roll dimensions overflow")?;
    let bit_bytes = cells.div_ceil(8);
    let expected = 20 + 2 * bit_bytes + 4 * cells;
    ensure!(
        bytes.len() == expected,
        "roll file is {} bytes, expected {expected} for {notes}x{steps}",
        bytes.len()
    );
    let body = &bytes[20..];
    let play = unpack_bits(&body[..bit_bytes], cells);
    let replay = unpack_bits(&body[bit_bytes..2 * bit_bytes], cells);
    let dynamics = body[2 * bit_bytes..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(NoteRoll::from_parts(notes, steps, q, play, replay, dynamics)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComposerInfo {
    pub name: String,
    pub genre: String,
}

impl ComposerInfo {
    pub fn catalog(list: &[ComposerInfo]) -> Result<StyleCatalog> {
        Ok(StyleCatalog::new(
            list.iter()
                .map(|c| Composer {
                    name: c.name.clone(),
                    genre: c.genre.clone(),
                })
                .collect(),
        )?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PieceEntry {
    /// Roll file name inside the cache directory.
    pub file: String,
    /// MIDI path as written in the manifest's directory frame.
    pub source: String,
    pub composer: usize,
    pub steps: usize,
    pub kept_notes: usize,
    pub dropped_notes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FailureEntry {
    pub source: String,
    pub composer: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CacheIndex {
    pub format: String,
    pub version: u32,
    pub steps_per_bar: usize,
    pub pitch_low: u8,
    pub notes: usize,
    pub composers: Vec<ComposerInfo>,
    pub pieces: Vec<PieceEntry>,
    pub failures: Vec<FailureEntry>,
}

impl CacheIndex {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(INDEX_FILE);
        let text = std::fs::read_to_string(&path)
            .with_context(|| format!("cannot read cache index {}", path.display()))?;
        let value: serde_json::Value =
            serde_json::from_str(&text).with_context(|| format!("malformed {}", path.display()))?;
        check_header(&value, INDEX_FORMAT, INDEX_VERSION)
            .with_context(|| format!("in {}", path.display()))?;
        serde_json::from_value(value).with_context(|| format!("malformed {}", path.display()))
    }
}

/// Rejects JSON artifacts of another kind or version before full parsing,
/// so the message names the version rather than some changed field.
pub fn check_header(value: &serde_json::Value, format: &str, version: u32) -> Result<()> {
    let found = value.get("format").and_then(|v| v.as_str());
    if found != Some(format) {
        bail!("expected a `{format}` file, found format {found:?}");
    }
    let v = value.get("version").and_then(|v| v.as_u64());
    if v != Some(u64::from(version)) {
        bail!("`{format}` version {v:?} is not supported (expected {version})");
    }
    Ok(())
}

/// A loaded cache: pieces as training examples with one-hot styles.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub index: CacheIndex,
    pub catalog: StyleCatalog,
    pub examples: Vec<Example>,
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let index = CacheIndex::load(dir)?;
    let catalog = ComposerInfo::catalog(&index.composers)?;
    let styles = catalog.len();
    let examples = index
        .pieces
        .iter()
        .map(|p| {
            ensure!(p.composer < styles, "piece {} names composer #{}", p.file, p.composer);
            let path = dir.join(&p.file);
            let bytes = std::fs::read(&path).with_context(|| format!("cannot read {}", path.display()))?;
            let roll = decode_roll(&bytes).with_context(|| format!("in {}", path.display()))?;
            ensure!(
                roll.notes() == index.notes && roll.steps_per_bar() == index.steps_per_bar,
                "{} does not match the cache geometry",
                path.display()
            );
            Ok(Example {
                roll,
                style: StyleVector::one_hot(styles, p.composer),
                composer: p.composer,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        index,
        catalog,
        examples,
    })
}
