mod common;

use deepj::cache::{decode_roll, encode_roll, CacheIndex, ROLL_VERSION};
use deepj::checkpoint::{self, Checkpoint};
use deepj::config::TrainFile;
use deepj::manifest::DatasetManifest;
use deepj_core::rng::rng_from;
use deepj_core::train::{NadamConfig, OptState};
use deepj_core::{Model, ModelConfig, NoteRoll};
use proptest::prelude::*;

fn tiny_model(styles: usize, seed: u64) -> Model<f32> {
    let cfg = ModelConfig {
        time_units: 8,
        note_units: 6,
        embed_dim: 4,
        conv_filters: 4,
        ..ModelConfig::new(styles)
    };
    Model::new(cfg, seed).unwrap()
}

fn composers(n: usize) -> Vec<deepj::cache::ComposerInfo> {
    (0..n)
        .map(|i| deepj::cache::ComposerInfo {
            name: format!("c{i}"),
            genre: if i % 2 == 0 { "even" } else { "odd" }.into(),
        })
        .collect()
}

#[test]
fn roll_file_layout() {
    let mut roll = NoteRoll::silent(3, 3, 16);
    roll.set(0, 0, true, false, 0.5);
    roll.set(0, 1, true, true, 0.5);
    roll.set(2, 2, true, false, 1.0);
    let bytes = encode_roll(&roll);
    assert_eq!(&bytes[..4], b"DJRL");
    assert_eq!(bytes[4..20], [1, 0, 0, 0, 3, 0, 0, 0, 3, 0, 0, 0, 16, 0, 0, 0]);
    // 9 cells: play bits 0, 1 and 8; replay bit 1
    assert_eq!(bytes[20..24], [0b0000_0011, 0b0000_0001, 0b0000_0010, 0]);
    assert_eq!(bytes[24..28], 0.5f32.to_le_bytes());
    assert_eq!(bytes.len(), 20 + 4 + 36);
    assert_eq!(decode_roll(&bytes).unwrap(), roll);
}

#[test]
fn roll_file_rejects_other_versions_and_damage() {
    let roll = NoteRoll::silent(4, 4, 16);
    let mut bytes = encode_roll(&roll);
    bytes[4] = (ROLL_VERSION + 1) as u8;
    let err = decode_roll(&bytes).unwrap_err().to_string();
    assert!(err.contains("version 2"), "{err}");
    let good = encode_roll(&roll);
    assert!(decode_roll(&good[..good.len() - 1]).is_err());
    assert!(decode_roll(b"MThd").is_err());
    // replay without play is refused
    let mut bad = good.clone();
    bad[22] = 1;
    assert!(decode_roll(&bad).is_err());
}

proptest! {
    #[test]
    fn roll_files_round_trip(seed in any::<u64>(), notes in 1usize..50, steps in 0usize..40) {
        let mut rng = rng_from(seed);
        let mut roll = NoteRoll::silent(notes, steps, 16);
        use rand::Rng;
        for n in 0..notes {
            for t in 0..steps {
                if rng.gen_bool(0.3) {
                    let replay = t > 0 && roll.play(n, t - 1) && rng.gen_bool(0.5);
                    roll.set(n, t, true, replay, rng.gen_range(0.0f32..=1.0));
                }
            }
        }
        prop_assert_eq!(decode_roll(&encode_roll(&roll)).unwrap(), roll);
    }
}

#[test]
fn manifest_validation() {
    let ok = r#"{"composers":[{"name":"a","genre":"g","files":["x.mid"]}]}"#;
    assert_eq!(DatasetManifest::from_json(ok).unwrap().catalog().len(), 1);
    for (bad, needle) in [
        (r#"{"composers":[]}"#, "no composers"),
        (r#"{"composers":[{"name":"a","genre":"g","files":[]}]}"#, "no files"),
        (r#"{"composers":[{"name":"a","genre":" ","files":["x"]}]}"#, "empty genre"),
        (
            r#"{"composers":[{"name":"a","genre":"g","files":["x"]},{"name":"a","genre":"h","files":["y"]}]}"#,
            "twice",
        ),
        (r#"{"composers":[{"name":"a","genre":"g","files":["x"],"era":1}]}"#, "era"),
        (r#"{"composers":[{"name":"a:b","genre":"g","files":["x"]}]}"#, "may not contain"),
    ] {
        let err = format!("{:#}", DatasetManifest::from_json(bad).unwrap_err());
        assert!(err.contains(needle), "{bad}: {err}");
    }
}

#[test]
fn manifest_globs_resolve_sorted() {
    let dir = tempfile::tempdir().unwrap();
    for f in ["b.mid", "a.mid", "c.txt"] {
        std::fs::write(dir.path().join(f), b"").unwrap();
    }
    let m = DatasetManifest::from_json(r#"{"composers":[{"name":"a","genre":"g","files":["*.mid"]}]}"#).unwrap();
    let files = m.resolve_files(dir.path()).unwrap();
    assert_eq!(files[0], vec![dir.path().join("a.mid"), dir.path().join("b.mid")]);
    let none = DatasetManifest::from_json(r#"{"composers":[{"name":"a","genre":"g","files":["*.xyz"]}]}"#).unwrap();
    assert!(none.resolve_files(dir.path()).is_err());
}

#[test]
fn train_config_names_missing_and_unknown_fields() {
    let full = common::tiny_train_config(1, 0);
    assert!(TrainFile::from_json(&full.to_string()).is_ok());
    for field in ["lr", "tbptt_steps", "seed", "beta2"] {
        let mut v = full.clone();
        v.as_object_mut().unwrap().remove(field);
        let err = format!("{:#}", TrainFile::from_json(&v.to_string()).unwrap_err());
        assert!(err.contains(&format!("missing field `{field}`")), "{err}");
    }
    let mut v = full.clone();
    v["learning_rate"] = 0.1.into();
    let err = format!("{:#}", TrainFile::from_json(&v.to_string()).unwrap_err());
    assert!(err.contains("learning_rate"), "{err}");

    let mut v = full;
    v["dataset"] = "cache".into();
    let parsed = TrainFile::from_json(&v.to_string()).unwrap();
    assert_eq!(parsed.dataset.unwrap(), std::path::PathBuf::from("cache"));
    assert_eq!(parsed.train.loss_weights, [1.0; 3]);
    assert_eq!(parsed.train.grad_clip, None);
}

#[test]
fn checkpoint_round_trip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let model = tiny_model(3, 4);
    let mut opt = OptState::new(NadamConfig::default(), model.params());
    opt.step = 17;
    opt.m[2].data_mut()[0] = 0.25;
    opt.v[5].data_mut()[1] = 1e-9;
    let ckpt = Checkpoint {
        epoch: 3,
        model: model.clone(),
        composers: composers(3),
        train: None,
        best_validation: Some(0.5),
        optimizer: Some(opt.clone()),
        sha256: String::new(),
    };
    checkpoint::save(dir.path(), &ckpt).unwrap();
    let back = checkpoint::load(dir.path()).unwrap();
    assert_eq!(back.model.params(), model.params());
    assert_eq!(back.model.config(), model.config());
    assert_eq!(back.optimizer.unwrap(), opt);
    assert_eq!((back.epoch, back.best_validation), (3, Some(0.5)));
    assert_eq!(back.composers, composers(3));
    assert_eq!(back.sha256.len(), 64);

    // manifest offsets index the blob in parameter order
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    let blob = std::fs::read(dir.path().join("tensors.bin")).unwrap();
    for t in manifest["tensors"].as_array().unwrap() {
        let name = t["name"].as_str().unwrap();
        let off = t["offset"].as_u64().unwrap() as usize * 4;
        let first = f32::from_le_bytes(blob[off..off + 4].try_into().unwrap());
        assert_eq!(first, model.params().by_name(name).unwrap().data()[0], "{name}");
    }
}

#[test]
fn checkpoint_rejects_version_mismatch_and_tampering() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = Checkpoint {
        epoch: 1,
        model: tiny_model(2, 0),
        composers: composers(2),
        train: None,
        best_validation: None,
        optimizer: None,
        sha256: String::new(),
    };
    checkpoint::save(dir.path(), &ckpt).unwrap();
    let path = dir.path().join("manifest.json");
    let text = std::fs::read_to_string(&path).unwrap();
    std::fs::write(&path, text.replace("\"version\": 1", "\"version\": 9")).unwrap();
    let err = format!("{:#}", checkpoint::load(dir.path()).unwrap_err());
    assert!(err.contains("version Some(9) is not supported"), "{err}");

    std::fs::write(&path, &text).unwrap();
    let blob = dir.path().join("tensors.bin");
    let mut bytes = std::fs::read(&blob).unwrap();
    bytes[0] ^= 1;
    std::fs::write(&blob, bytes).unwrap();
    assert!(format!("{:#}", checkpoint::load(dir.path()).unwrap_err()).contains("hash"));
}

#[test]
fn run_directories_resolve_to_best_then_latest() {
    let dir = tempfile::tempdir().unwrap();
    assert!(checkpoint::resolve(dir.path()).is_err());
    let ckpt = Checkpoint {
        epoch: 1,
        model: tiny_model(2, 0),
        composers: composers(2),
        train: None,
        best_validation: None,
        optimizer: None,
        sha256: String::new(),
    };
    for e in [2, 10, 9] {
        checkpoint::save(&checkpoint::epoch_dir(dir.path(), e), &ckpt).unwrap();
    }
    assert_eq!(checkpoint::resolve(dir.path()).unwrap(), dir.path().join("epoch-0010"));
    checkpoint::save(&dir.path().join("best"), &ckpt).unwrap();
    assert_eq!(checkpoint::resolve(dir.path()).unwrap(), dir.path().join("best"));
}

#[test]
fn cache_index_version_is_checked() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("index.json"),
        r#"{"format":"deepj-cache","version":7,"pieces":[]}"#,
    )
    .unwrap();
    let err = format!("{:#}", CacheIndex::load(dir.path()).unwrap_err());
    assert!(err.contains("version Some(7)"), "{err}");
}
