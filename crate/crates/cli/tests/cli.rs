// SPDX-License-Identifier: MIT OR Apache-2.0

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn axir(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_axir"))
        .args(args)
        .env_remove("AXIR_THREADS")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = axir(args);
    assert!(
        out.status.success(),
        "{args:?} exited {:?}\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Fixture {
    fn p(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }
}

/// Wired toy, synthetic corpus and a curated TFC1-I dataset.
fn pipeline() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let f = Fixture { root: dir.path().to_path_buf(), _dir: dir };
    ok(&["toy", "build", "--wired", "--out", s(&f.p("toy"))]);
    ok(&["synth", "--model", s(&f.p("toy")), "--seed", "1", "--n-queries", "16", "--out", s(&f.p("syn"))]);
    ok(&[
        "curate",
        "--model",
        s(&f.p("toy")),
        "--corpus",
        s(&f.p("syn/corpus.tsv")),
        "--queries",
        s(&f.p("syn/queries.tsv")),
        "--run",
        s(&f.p("syn/run.trec")),
        "--seed",
        "5",
        "--out",
        s(&f.p("cur")),
    ]);
    f
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != "manifest.json")
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

#[test]
fn heads_patch_finds_the_wired_head_and_is_thread_independent() {
    let f = pipeline();
    let model = f.p("toy");
    let data = f.p("cur/dataset.jsonl");
    let patch = |threads: &str, out: &Path| {
        ok(&["--threads", threads, "patch", "--model", s(&model), "--dataset", s(&data), "--sites", "heads", "--out", s(out)])
    };
    patch("1", &f.p("p1"));
    patch("4", &f.p("p4"));
    assert_eq!(files(&f.p("p1")), files(&f.p("p4")));

    let csv = fs::read_to_string(f.p("p1/heads.csv")).unwrap();
    let mut best = (String::new(), f64::MIN);
    for line in csv.lines().skip(1) {
        let mut cells = line.split(',');
        let layer = cells.next().unwrap().to_string();
        for (h, c) in cells.enumerate() {
            if let Ok(v) = c.parse::<f64>() {
                if v > best.1 {
                    best = (format!("{layer}.{h}"), v);
                }
            }
        }
    }
    assert_eq!(best.0, "0.2", "{csv}");
    assert!(best.1 >= 0.9);

    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(f.p("p1/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["subcommand"], "patch");
    assert_eq!(manifest["config"]["threads"], 1);
    assert!(manifest["dataset_hash"].as_str().unwrap().len() == 64);

    ok(&["report", "--in", s(&f.p("p1")), "--format", "svg"]);
    assert!(fs::read_to_string(f.p("p1/heads.svg")).unwrap().starts_with("<svg"));
}

#[test]
fn curation_is_reproducible() {
    let f = pipeline();
    let again = f.p("cur2");
    ok(&[
        "curate",
        "--model",
        s(&f.p("toy")),
        "--corpus",
        s(&f.p("syn/corpus.tsv")),
        "--queries",
        s(&f.p("syn/queries.tsv")),
        "--run",
        s(&f.p("syn/run.trec")),
        "--seed",
        "5",
        "--out",
        s(&again),
    ]);
    assert_eq!(fs::read(f.p("cur/dataset.jsonl")).unwrap(), fs::read(again.join("dataset.jsonl")).unwrap());
}

#[test]
fn config_file_with_flag_overrides() {
    let f = pipeline();
    let cfg = f.p("exp.json");
    fs::write(
        &cfg,
        serde_json::json!({
            "model": f.p("toy"),
            "dataset": f.p("cur/dataset.jsonl"),
            "heads": "0.2,1.0",
            "ablation_mode": "mean",
        })
        .to_string(),
    )
    .unwrap();
    let out = f.p("ab");
    ok(&["ablate", "--config", s(&cfg), "--mode", "zero", "--out", s(&out)]);
    assert!(out.join("ablation_zero.csv").exists());
    assert!(!out.join("ablation_mean.csv").exists());
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["config"]["ablation_mode"], "zero");
    assert_eq!(m["config"]["heads"], "0.2,1.0");
}

#[test]
fn exit_codes() {
    let f = pipeline();
    let model = f.p("toy");
    assert_eq!(axir(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(axir(&["patch", "--dataset", s(&f.p("cur/dataset.jsonl"))]).status.code(), Some(1));
    assert_eq!(axir(&["--help"]).status.code(), Some(0));
    assert_eq!(
        axir(&["patch", "--model", s(&f.p("missing")), "--dataset", s(&f.p("cur/dataset.jsonl"))]).status.code(),
        Some(2)
    );
    assert_eq!(
        axir(&["ablate", "--model", s(&model), "--dataset", s(&f.p("cur/dataset.jsonl")), "--heads", "9.9"]).status.code(),
        Some(1)
    );

    // a dataset whose two sides are identical has no usable score gap
    let text = fs::read_to_string(f.p("cur/dataset.jsonl")).unwrap();
    let mut flat = String::new();
    for line in text.lines() {
        let mut v: serde_json::Value = serde_json::from_str(line).unwrap();
        for (from, to) in [
            ("baseline_ids", "perturbed_ids"),
            ("baseline_origin", "perturbed_origin"),
            ("token_types_baseline", "token_types_perturbed"),
        ] {
            v[to] = v[from].clone();
        }
        flat.push_str(&v.to_string());
        flat.push('\n');
    }
    let flat_path = f.p("flat.jsonl");
    fs::write(&flat_path, flat).unwrap();
    let out = axir(&["patch", "--model", s(&model), "--dataset", s(&flat_path), "--sites", "heads", "--out", s(&f.p("pf"))]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn remaining_subcommands_run() {
    let f = pipeline();
    let model = f.p("toy");
    let data = f.p("cur/dataset.jsonl");
    ok(&["score", "--model", s(&model), "--dataset", s(&data), "--out", s(&f.p("sc"))]);
    let scores = fs::read_to_string(f.p("sc/scores.csv")).unwrap();
    assert_eq!(scores.lines().count(), 161);

    ok(&["attn", "--model", s(&model), "--dataset", s(&data), "--heads", "0.2", "--out", s(&f.p("at"))]);
    assert!(fs::read_to_string(f.p("at/attention.csv")).unwrap().contains("attn_pattern.0.2,INJ,QTERM_PLUS"));

    ok(&[
        "sweep-position",
        "--model",
        s(&model),
        "--queries",
        s(&f.p("syn/queries.tsv")),
        "--docs",
        s(&f.p("syn/corpus.tsv")),
        "--run",
        s(&f.p("syn/run.trec")),
        "--grid",
        "0,0.5,1",
        "--out",
        s(&f.p("sw")),
    ]);
    assert_eq!(fs::read_to_string(f.p("sw/position_sweep.csv")).unwrap().lines().count(), 4);

    ok(&["patch", "--model", s(&model), "--dataset", s(&data), "--sites", "resid-pre", "--relevance-split", "0.3", "--out", s(&f.p("rp"))]);
    for name in ["resid_pre_by_type.csv", "resid_pre_by_type_top.csv", "resid_pre_by_type_bottom.csv"] {
        assert!(f.p("rp").join(name).exists(), "{name}");
    }

    ok(&["toy", "build", "--random", "--seed", "3", "--out", s(&f.p("rnd"))]);
    assert!(f.p("rnd/model.axir").exists());
}
