//! Black-box tests of the `groundlink` binary: exit codes, diagnostics, and
//! cross-command behavior on small hand-built corpora.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use groundlink::corpus::{
    read_jsonl, write_jsonl, CorpusManifest, GroundTruthRecord, ManifestExample, Model,
    PredictionRecord, FALLBACK_CONCEPT,
};
use groundlink::scoremap::ScoreMap;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_groundlink"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn run_ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "groundlink {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// 3 examples, 2 concepts; "dog" always co-occurs with an active `dogs`
/// concept, "sky" never does.
fn write_small_corpus(dir: &Path) -> PathBuf {
    std::fs::create_dir_all(dir.join("maps")).unwrap();
    let active = |concept: &str| {
        // 6x6 map with a 3x3 positive block: active under default thresholds
        let mut scores = vec![-1.0; 36];
        for y in 1..4 {
            for x in 1..4 {
                scores[y * 6 + x] = 1.0;
            }
        }
        ScoreMap::new(concept, 6, 6, scores).unwrap()
    };
    let examples = [
        ("e0", "a dog runs", vec!["dogs"]),
        ("e1", "the dog sits", vec!["dogs"]),
        ("e2", "blue sky", vec!["water"]),
    ];
    let mut manifest_examples = Vec::new();
    for (id, query, concepts) in examples {
        let mut maps = BTreeMap::new();
        for concept in concepts {
            let rel = format!("maps/{id}_{concept}.smap");
            active(concept).write_smap(&dir.join(&rel)).unwrap();
            maps.insert(concept.to_string(), rel);
        }
        manifest_examples.push(ManifestExample {
            id: id.into(),
            query: query.into(),
            width: 6,
            height: 6,
            maps,
            gt_box: Some([1, 1, 3, 3]),
            category: None,
        });
    }
    let manifest = CorpusManifest {
        concepts: vec!["dogs".into(), "water".into()],
        examples: manifest_examples,
    };
    let path = dir.join("manifest.json");
    manifest.save(&path).unwrap();
    path
}

#[test]
fn train_missing_smap_exits_2_and_names_path() {
    let dir = tempfile::tempdir().unwrap();
    let manifest_path = write_small_corpus(dir.path());
    std::fs::remove_file(dir.path().join("maps/e1_dogs.smap")).unwrap();
    let out = run(&[
        "train",
        "--corpus",
        manifest_path.to_str().unwrap(),
        "--vocab-size",
        "10",
        "--out",
        dir.path().join("model.json").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(
        stderr(&out).contains("e1_dogs.smap"),
        "diagnostic should name the missing file: {}",
        stderr(&out)
    );
}

#[test]
fn train_empty_corpus_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("manifest.json");
    std::fs::write(&path, r#"{"concepts":[],"examples":[]}"#).unwrap();
    let out = run(&[
        "train",
        "--corpus",
        path.to_str().unwrap(),
        "--vocab-size",
        "10",
        "--out",
        dir.path().join("model.json").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn train_small_corpus_links_dog_to_dogs() {
    let dir = tempfile::tempdir().unwrap();
    let manifest_path = write_small_corpus(dir.path());
    let model_path = dir.path().join("model.json");
    run_ok(&[
        "train",
        "--corpus",
        manifest_path.to_str().unwrap(),
        "--vocab-size",
        "10",
        "--out",
        model_path.to_str().unwrap(),
    ]);
    let model = Model::load(&model_path).unwrap();
    let s = model.matrix.token_index("dog").unwrap();
    let dogs = model
        .matrix
        .concepts()
        .iter()
        .position(|c| c == "dogs")
        .unwrap();
    let row = model.matrix.row(s);
    let min = row.iter().cloned().fold(f64::INFINITY, f64::min);
    assert_eq!(row[dogs], min, "E(dog, dogs) should be the row minimum");
    // vocabulary file written next to the model
    let vocab_text = std::fs::read_to_string(dir.path().join("model.vocab")).unwrap();
    assert!(vocab_text.lines().last() == Some("<UKN>"));
}

fn train_small(dir: &Path) -> (PathBuf, PathBuf) {
    let manifest_path = write_small_corpus(dir);
    let model_path = dir.join("model.json");
    run_ok(&[
        "train",
        "--corpus",
        manifest_path.to_str().unwrap(),
        "--vocab-size",
        "10",
        "--out",
        model_path.to_str().unwrap(),
    ]);
    (manifest_path, model_path)
}

#[test]
fn infer_tau_zero_always_falls_back() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest_path, model_path) = train_small(dir.path());
    let pred_path = dir.path().join("pred.jsonl");
    run_ok(&[
        "infer",
        "--corpus",
        manifest_path.to_str().unwrap(),
        "--model",
        model_path.to_str().unwrap(),
        "--tau",
        "0",
        "--out",
        pred_path.to_str().unwrap(),
    ]);
    let preds: Vec<PredictionRecord> = read_jsonl(&pred_path).unwrap();
    assert_eq!(preds.len(), 3);
    for p in preds {
        assert_eq!(p.concept, FALLBACK_CONCEPT);
        assert_eq!(p.box_, [0, 0, 5, 5]);
    }
}

#[test]
fn infer_unknown_words_fall_back_to_full_image() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest_path, model_path) = train_small(dir.path());
    // replace every query with out-of-vocabulary words
    let mut manifest = CorpusManifest::load(&manifest_path).unwrap();
    for e in &mut manifest.examples {
        e.query = "zebra stripes everywhere".into();
    }
    let other_path = dir.path().join("unknown.json");
    manifest.save(&other_path).unwrap();
    let pred_path = dir.path().join("pred.jsonl");
    run_ok(&[
        "infer",
        "--corpus",
        other_path.to_str().unwrap(),
        "--model",
        model_path.to_str().unwrap(),
        "--out",
        pred_path.to_str().unwrap(),
    ]);
    for p in read_jsonl::<PredictionRecord>(&pred_path).unwrap() {
        assert_eq!(p.concept, FALLBACK_CONCEPT);
        assert_eq!(p.box_, [0, 0, 5, 5]);
    }
}

#[test]
fn eval_mixed_fixture_prints_fifty() {
    let dir = tempfile::tempdir().unwrap();
    let pred_path = dir.path().join("pred.jsonl");
    let gt_path = dir.path().join("gt.jsonl");
    write_jsonl(
        &pred_path,
        &[
            PredictionRecord {
                id: "a".into(),
                box_: [0, 0, 9, 9],
                concept: "c".into(),
                token: None,
                e_value: None,
            },
            PredictionRecord {
                id: "b".into(),
                box_: [0, 0, 1, 1],
                concept: "c".into(),
                token: None,
                e_value: None,
            },
        ],
    )
    .unwrap();
    write_jsonl(
        &gt_path,
        &[
            GroundTruthRecord {
                id: "a".into(),
                box_: [0, 0, 9, 9],
                category: None,
            },
            GroundTruthRecord {
                id: "b".into(),
                box_: [5, 5, 9, 9],
                category: None,
            },
        ],
    )
    .unwrap();
    let out = run_ok(&[
        "eval",
        "--pred",
        pred_path.to_str().unwrap(),
        "--gt",
        gt_path.to_str().unwrap(),
    ]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text, "Accuracy (IoU > 0.50): 50.00  [1/2]\n");
    // machine-readable copy lands next to the predictions
    let json = std::fs::read_to_string(dir.path().join("pred.jsonl.report.json")).unwrap();
    assert!(json.contains("\"correct\": 1"));
}

#[test]
fn eval_id_mismatch_lists_missing_ids() {
    let dir = tempfile::tempdir().unwrap();
    let pred_path = dir.path().join("pred.jsonl");
    let gt_path = dir.path().join("gt.jsonl");
    write_jsonl(
        &pred_path,
        &[PredictionRecord {
            id: "only-pred".into(),
            box_: [0, 0, 1, 1],
            concept: "c".into(),
            token: None,
            e_value: None,
        }],
    )
    .unwrap();
    write_jsonl(
        &gt_path,
        &[GroundTruthRecord {
            id: "only-gt".into(),
            box_: [0, 0, 1, 1],
            category: None,
        }],
    )
    .unwrap();
    let out = run(&[
        "eval",
        "--pred",
        pred_path.to_str().unwrap(),
        "--gt",
        gt_path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("only-pred"));
}

#[test]
fn eval_accepts_externally_written_predictions() {
    // hand-written JSON lines, not produced by cmd_infer
    let dir = tempfile::tempdir().unwrap();
    let pred_path = dir.path().join("external.jsonl");
    let gt_path = dir.path().join("gt.jsonl");
    std::fs::write(
        &pred_path,
        "{\"id\":\"x\",\"box\":[2,2,4,4],\"concept\":\"person\"}\n",
    )
    .unwrap();
    std::fs::write(&gt_path, "{\"id\":\"x\",\"box\":[2,2,4,4]}\n").unwrap();
    let out = run_ok(&[
        "eval",
        "--pred",
        pred_path.to_str().unwrap(),
        "--gt",
        gt_path.to_str().unwrap(),
    ]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text, "Accuracy (IoU > 0.50): 100.00  [1/1]\n");
}

const SMALL_SYNTH_CONFIG: &str = r#"{
  "seed": 12,
  "num_concepts": 4,
  "num_words": 8,
  "num_examples": 250,
  "width": 16,
  "height": 16
}"#;

fn synth_dir(dir: &Path, name: &str) -> PathBuf {
    let config_path = dir.join(format!("{name}.json"));
    std::fs::write(&config_path, SMALL_SYNTH_CONFIG).unwrap();
    let out_dir = dir.join(name);
    run_ok(&[
        "synth",
        "--config",
        config_path.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    out_dir
}

/// Sorted (relative path, contents) list of every file under a directory.
fn dir_digest(root: &Path) -> Vec<(String, Vec<u8>)> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<(String, Vec<u8>)>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_str().unwrap().to_string();
                out.push((rel, std::fs::read(&path).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(root, root, &mut out);
    out.sort();
    out
}

#[test]
fn synth_same_seed_produces_identical_directories() {
    let dir = tempfile::tempdir().unwrap();
    let a = synth_dir(dir.path(), "a");
    let b = synth_dir(dir.path(), "b");
    assert_eq!(dir_digest(&a), dir_digest(&b));
}

#[test]
fn inspect_planted_word_and_embed_dist() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synth_dir(dir.path(), "corpus");
    let model_path = dir.path().join("model.json");
    run_ok(&[
        "train",
        "--corpus",
        corpus.join("manifest.json").to_str().unwrap(),
        "--vocab-size",
        "8",
        "--out",
        model_path.to_str().unwrap(),
    ]);
    // planted rule: word i -> concept i % 4
    let out = run_ok(&[
        "inspect",
        "--model",
        model_path.to_str().unwrap(),
        "--word",
        "w005",
        "--top-k",
        "2",
    ]);
    let text = String::from_utf8(out.stdout).unwrap();
    let first = text.lines().next().unwrap();
    assert!(first.starts_with("c001\t"), "expected c001 first, got: {text}");
    assert_eq!(text.lines().count(), 2);

    let out = run_ok(&[
        "inspect",
        "--model",
        model_path.to_str().unwrap(),
        "--embed-dist",
        "w003",
        "w003",
    ]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.trim().parse::<f64>().unwrap(), 0.0);

    let out = run(&[
        "inspect",
        "--model",
        model_path.to_str().unwrap(),
        "--word",
        "nosuchword",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn ground_threads_env_caps_workers() {
    let dir = tempfile::tempdir().unwrap();
    let manifest_path = write_small_corpus(dir.path());
    let model_path = dir.path().join("model.json");
    let out = bin()
        .args([
            "train",
            "--corpus",
            manifest_path.to_str().unwrap(),
            "--vocab-size",
            "10",
            "--out",
            model_path.to_str().unwrap(),
        ])
        .env("GROUND_THREADS", "1")
        .output()
        .unwrap();
    assert!(out.status.success());

    let out = bin()
        .args(["train", "--corpus", "x", "--vocab-size", "1", "--out", "y"])
        .env("GROUND_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
