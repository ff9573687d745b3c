use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use a2c::io::{read_report, write_attribute_profiles};
use a2c::synthetic::{generate, SyntheticConfig};
use a2c::transform::Identity;
use a2c::zsl::ZslModel;

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let b = generate(&SyntheticConfig {
            n_extra: 3,
            seed: 5,
            ..Default::default()
        })
        .unwrap();
        let p = dir.path();
        let mut buf = Vec::new();
        b.table.write_text(&mut buf).unwrap();
        fs::write(p.join("emb.txt"), buf).unwrap();
        let mut buf = Vec::new();
        b.train_predicates.write_csv(&mut buf).unwrap();
        fs::write(p.join("pred.csv"), buf).unwrap();
        let mut buf = Vec::new();
        b.extra_predicates.as_ref().unwrap().write_csv(&mut buf).unwrap();
        fs::write(p.join("extra.csv"), buf).unwrap();
        let mut buf = Vec::new();
        write_attribute_profiles(&b.attr_names, &b.train_profiles, &mut buf).unwrap();
        fs::write(p.join("train.csv"), buf).unwrap();
        let mut buf = Vec::new();
        write_attribute_profiles(&b.attr_names, &b.test_profiles, &mut buf).unwrap();
        fs::write(p.join("test.csv"), buf).unwrap();
        fs::write(p.join("classes.txt"), b.test_classes.join("\n") + "\n").unwrap();
        Self { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_a2c"))
            .current_dir(self.dir.path())
            .args(args)
            .output()
            .unwrap()
    }
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const TRAIN_IBT: &[&str] = &[
    "train",
    "--mode",
    "ibt",
    "--embeddings",
    "emb.txt",
    "--predicates",
    "pred.csv",
    "--profiles",
    "train.csv",
    "--hidden",
    "8",
    "--outdim",
    "6",
    "--iters",
    "40",
    "--checkpoints",
    "10,20",
    "--seed",
    "3",
];

#[test]
fn gradcheck_passes() {
    let f = Fixture::new();
    let o = f.run(&["gradcheck", "--mode", "ibt", "--seed", "3"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("max relative error"));
    let manifest: serde_json::Value = serde_json::from_str(&stderr(&o)).unwrap();
    assert_eq!(manifest["command"], "gradcheck");
    assert_eq!(manifest["seed"], 3);
}

#[test]
fn train_is_deterministic() {
    let f = Fixture::new();
    for out in ["a.model", "b.model"] {
        let mut args = TRAIN_IBT.to_vec();
        args.extend(["--out", out]);
        let o = f.run(&args);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    assert_eq!(
        fs::read(f.path("a.model")).unwrap(),
        fs::read(f.path("b.model")).unwrap()
    );
    let history = fs::read_to_string(f.path("a.model.history.csv")).unwrap();
    assert_eq!(history, fs::read_to_string(f.path("b.model.history.csv")).unwrap());
    let lines: Vec<&str> = history.lines().collect();
    assert_eq!(lines[0], "iteration,objective,val_accuracy");
    assert_eq!(
        lines
            .iter()
            .skip(1)
            .map(|l| l.split(',').next().unwrap())
            .collect::<Vec<_>>(),
        ["0", "10", "20", "40"]
    );
    assert!(lines[1].ends_with(','));

    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(f.path("a.model.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "train");
    let digest = a2c::io::sha256_hex(&fs::read(f.path("emb.txt")).unwrap());
    assert_eq!(manifest["inputs"]["emb.txt"], digest.as_str());
    assert_eq!(manifest["outputs"].as_array().unwrap().len(), 2);
}

#[test]
fn pbt_trains_without_profiles() {
    let f = Fixture::new();
    let o = f.run(&[
        "train",
        "--mode",
        "pbt",
        "--embeddings",
        "emb.txt",
        "--predicates",
        "pred.csv",
        "--out",
        "p.model",
        "--iters",
        "20",
        "--hidden",
        "8",
        "--outdim",
        "4",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(f.path("p.model").exists());
}

#[test]
fn ibt_without_profiles_is_a_data_error() {
    let f = Fixture::new();
    let o = f.run(&[
        "train",
        "--mode",
        "ibt",
        "--embeddings",
        "emb.txt",
        "--predicates",
        "pred.csv",
        "--out",
        "m",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("E_MISSING_PROFILES"));
}

#[test]
fn const_margin_with_predicates_is_rejected() {
    let f = Fixture::new();
    let mut args = TRAIN_IBT.to_vec();
    args.extend(["--out", "m", "--const-margin", "0.2"]);
    let o = f.run(&args);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--const-margin"));
    assert!(!f.path("m").exists());
}

#[test]
fn ibt_with_constant_margin_and_no_predicates() {
    let f = Fixture::new();
    let o = f.run(&[
        "train",
        "--mode",
        "ibt",
        "--embeddings",
        "emb.txt",
        "--profiles",
        "train.csv",
        "--const-margin",
        "0.2",
        "--iters",
        "10",
        "--hidden",
        "4",
        "--outdim",
        "4",
        "--batch",
        "full",
        "--out",
        "m",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_one() {
    let f = Fixture::new();
    assert_eq!(f.run(&[]).status.code(), Some(1));
    assert_eq!(f.run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(f.run(&["gradcheck", "--mode", "svm"]).status.code(), Some(1));
    let mut args = TRAIN_IBT.to_vec();
    args.extend(["--out", "m", "--batch", "zero"]);
    let o = f.run(&args);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--batch"));
    assert_eq!(f.run(&["--help"]).status.code(), Some(0));
}

#[test]
fn eval_identity_matches_library() {
    let f = Fixture::new();
    let o = f.run(&[
        "eval",
        "--model",
        "identity",
        "--embeddings",
        "emb.txt",
        "--profiles",
        "test.csv",
        "--classes",
        "classes.txt",
        "--report",
        "r.json",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report = read_report(fs::File::open(f.path("r.json")).unwrap()).unwrap();

    let b = generate(&SyntheticConfig {
        n_extra: 3,
        seed: 5,
        ..Default::default()
    })
    .unwrap();
    let expected = ZslModel::new(&Identity, &b.table, &b.table, &b.attr_names)
        .unwrap()
        .evaluate(&b.test_profiles, &b.test_classes)
        .unwrap();
    assert_eq!(report, expected);
    assert!(f.path("r.json.manifest.json").exists());
}

#[test]
fn eval_with_trained_model() {
    let f = Fixture::new();
    let mut args = TRAIN_IBT.to_vec();
    args.extend(["--out", "m.model"]);
    assert_eq!(f.run(&args).status.code(), Some(0));
    let o = f.run(&[
        "eval",
        "--model",
        "m.model",
        "--embeddings",
        "emb.txt",
        "--profiles",
        "test.csv",
        "--classes",
        "classes.txt",
        "--report",
        "r.json",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report = read_report(fs::File::open(f.path("r.json")).unwrap()).unwrap();
    assert_eq!(report.n_images, 160);
}

#[test]
fn eval_missing_class_exits_two() {
    let f = Fixture::new();
    let mut classes = fs::read_to_string(f.path("classes.txt")).unwrap();
    classes.push_str("class0\n");
    fs::write(f.path("classes.txt"), classes).unwrap();
    let o = f.run(&[
        "eval",
        "--model",
        "identity",
        "--embeddings",
        "emb.txt",
        "--profiles",
        "test.csv",
        "--classes",
        "classes.txt",
        "--report",
        "r.json",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("E_MISSING_CLASS"));
    assert!(!f.path("r.json").exists());
}

#[test]
fn corrupt_model_exits_two() {
    let f = Fixture::new();
    fs::write(f.path("bad.model"), b"A2CM\x01\x00\x00\x00garbage").unwrap();
    let o = f.run(&[
        "eval",
        "--model",
        "bad.model",
        "--embeddings",
        "emb.txt",
        "--profiles",
        "test.csv",
        "--classes",
        "classes.txt",
        "--report",
        "r.json",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("E_CORRUPT"));
}

#[test]
fn similar_ranks_pool() {
    let f = Fixture::new();
    fs::write(f.path("pool.txt"), "class0\nclass1\nclass2\nclass3\n").unwrap();
    let o = f.run(&[
        "similar",
        "--model",
        "identity",
        "--embeddings",
        "emb.txt",
        "--query",
        "class0",
        "--pool",
        "pool.txt",
        "--k",
        "2",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines.iter().all(|l| !l.starts_with("class0\t")));
    let o = f.run(&[
        "similar",
        "--model",
        "identity",
        "--embeddings",
        "emb.txt",
        "--query",
        "class0",
        "--pool",
        "pool.txt",
        "--k",
        "4",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("E_K_TOO_LARGE"));
}

#[test]
fn augment_merges_matrices() {
    let f = Fixture::new();
    let o = f.run(&[
        "augment",
        "--base",
        "pred.csv",
        "--extra",
        "extra.csv",
        "--out",
        "all.csv",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let merged = a2c::predicates::parse_predicate_csv(fs::File::open(f.path("all.csv")).unwrap(), None).unwrap();
    assert_eq!(merged.num_classes(), 11);
    let o = f.run(&["augment", "--base", "pred.csv", "--extra", "pred.csv", "--out", "x.csv"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("E_CLASS_COLLISION"));
}

#[test]
fn missing_input_is_an_io_error() {
    let f = Fixture::new();
    let o = f.run(&[
        "augment",
        "--base",
        "nope.csv",
        "--extra",
        "extra.csv",
        "--out",
        "all.csv",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("E_IO"));
    assert!(!Path::new(&f.path("all.csv")).exists());
}
