//! End-to-end checks of the binary: exit codes, output formats, and
//! bitwise-stable reruns.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hierembed"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn hierembed")
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf-8 stdout")
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

fn fixture_path(dir: &Path) -> PathBuf {
    let g = hierembed::toolgraph::canonical_fixture();
    let p = dir.join("fixture.json");
    write(&p, &hierembed::toolgraph::serialize_tool_document(&g));
    p
}

#[test]
fn validate_accepts_fixture_and_stays_quiet() {
    let dir = tempfile::tempdir().unwrap();
    let fixture = fixture_path(dir.path());
    let out = run(&["validate", fixture.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout_of(&out).is_empty());
}

#[test]
fn validate_reports_cycles_with_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cyclic.json");
    write(
        &path,
        r#"{
            "name": "cyclic",
            "root": "a",
            "nodes": [
                {"id": "a", "description": "root node", "depth": 0},
                {"id": "b", "description": "middle node", "depth": 1},
                {"id": "c", "description": "leaf node", "depth": 2}
            ],
            "edges": [
                {"from": "b", "to": "a", "kind": "child_to_parent"},
                {"from": "c", "to": "b", "kind": "child_to_parent"},
                {"from": "b", "to": "c", "kind": "child_to_parent"}
            ]
        }"#,
    );
    let out = run(&["validate", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let text = stdout_of(&out);
    assert!(text.contains(":CYCLE:"), "stdout: {text}");
    for line in text.lines() {
        assert!(line.split(':').count() >= 4, "line format: {line}");
    }
}

#[test]
fn validate_missing_file_exits_two() {
    let out = run(&["validate", "/nonexistent/nope.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn validate_bad_json_exits_one_with_parse_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.json");
    write(&path, "{not json");
    let out = run(&["validate", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout_of(&out).contains(":PARSE:-:"));
}

#[test]
fn gen_corpus_is_deterministic_and_writes_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    write(&spec, r#"{"seed": 5, "n_tools": 3}"#);
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for out in [&out_a, &out_b] {
        let st = run(&[
            "gen-corpus",
            "--config",
            spec.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(st.status.code(), Some(0));
    }
    let names = |d: &Path| {
        let mut v: Vec<String> = std::fs::read_dir(d)
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        v.sort();
        v
    };
    assert_eq!(names(&out_a), names(&out_b));
    assert!(names(&out_a).contains(&"run_manifest.json".to_string()));
    for n in names(&out_a) {
        let a = std::fs::read(out_a.join(&n)).unwrap();
        let b = std::fs::read(out_b.join(&n)).unwrap();
        assert_eq!(a, b, "file {n} differs between reruns");
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_a.join("run_manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["command"], "gen-corpus");
    assert_eq!(manifest["exit_status"], 0);
    assert_eq!(manifest["outputs"].as_array().unwrap().len(), 3);
    assert_eq!(manifest["config"]["seed"], 5);
}

#[test]
fn embed_builds_initial_store_from_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let fixture = fixture_path(dir.path());
    let store_path = dir.path().join("init.tgvs");
    let out = run(&[
        "embed",
        "--corpus",
        fixture.to_str().unwrap(),
        "--out",
        store_path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let store = hierembed::store::load(&store_path).unwrap();
    // 10 nodes plus one attached query text.
    assert_eq!(store.len(), 11);
    assert!(dir.path().join("init.tgvs.manifest.json").exists());
}

#[test]
fn query_prints_ranked_tab_separated_lines() {
    let dir = tempfile::tempdir().unwrap();
    let fixture = fixture_path(dir.path());
    let store_path = dir.path().join("init.tgvs");
    run(&[
        "embed",
        "--corpus",
        fixture.to_str().unwrap(),
        "--out",
        store_path.to_str().unwrap(),
    ]);
    let g = hierembed::toolgraph::canonical_fixture();
    let text = g.nodes["A3"].description.clone();
    let out = run(&[
        "query",
        "--store",
        store_path.to_str().unwrap(),
        "--k",
        "3",
        &text,
    ]);
    assert_eq!(out.status.code(), Some(0));
    let stdout = stdout_of(&out);
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines.len(), 3);
    for (i, line) in lines.iter().enumerate() {
        let cols: Vec<&str> = line.split('\t').collect();
        assert_eq!(cols.len(), 4, "line: {line}");
        assert_eq!(cols[0], (i + 1).to_string());
        let sim: f64 = cols[3].parse().unwrap();
        assert!((-1.0..=1.0 + 1e-9).contains(&sim));
        assert_eq!(cols[3].split('.').nth(1).unwrap().len(), 9);
    }
    // Exact description text retrieves its own node at rank 1.
    let first: Vec<&str> = lines[0].split('\t').collect();
    assert_eq!(first[2], "A3");
    let sim: f64 = first[3].parse().unwrap();
    assert!((sim - 1.0).abs() < 1e-9);
}

#[test]
fn train_export_query_pipeline_runs_and_repeats_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let fixture = fixture_path(dir.path());
    let cfg = dir.path().join("cfg.json");
    write(
        &cfg,
        r#"{"d_v": 16, "d_h": 16, "d_e": 8, "epochs": 4, "batch_size": 1,
            "learning_rate": 0.05, "seed": 3}"#,
    );
    let run_a = dir.path().join("runA");
    let run_b = dir.path().join("runB");
    for out in [&run_a, &run_b] {
        let st = run(&[
            "train",
            "--corpus",
            fixture.to_str().unwrap(),
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(
            st.status.code(),
            Some(0),
            "stderr: {}",
            String::from_utf8_lossy(&st.stderr)
        );
    }
    for name in [
        "params.bin",
        "report.json",
        "embeddings.tgvs",
        "run_manifest.json",
    ] {
        let a = std::fs::read(run_a.join(name)).unwrap();
        let b = std::fs::read(run_b.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run_a.join("report.json")).unwrap()).unwrap();
    let keys: Vec<&String> = report.as_object().unwrap().keys().collect();
    assert_eq!(keys, ["config", "epoch_mean_loss"]);
    assert_eq!(report["epoch_mean_loss"].as_array().unwrap().len(), 4);

    let exported = dir.path().join("struct.tgvs");
    let st = run(&[
        "export",
        "--corpus",
        fixture.to_str().unwrap(),
        "--params",
        run_a.join("params.bin").to_str().unwrap(),
        "--out",
        exported.to_str().unwrap(),
        "--config",
        cfg.to_str().unwrap(),
        "--trace",
    ]);
    assert_eq!(st.status.code(), Some(0));
    let trace = stdout_of(&st);
    // Four parent groups in the fixture, one trace line each.
    assert_eq!(trace.lines().count(), 4);
    for line in trace.lines() {
        let cols: Vec<&str> = line.split('\t').collect();
        assert_eq!(cols.len(), 3);
        assert!(cols[2].parse::<f64>().unwrap().is_finite());
    }
    let store = hierembed::store::load(&exported).unwrap();
    assert_eq!(store.len(), 10);
    assert!(store
        .iter()
        .all(|r| r.kind == hierembed::store::EmbeddingKind::Structural));

    // Structural store answers filtered queries.
    let out = run(&[
        "query",
        "--store",
        exported.to_str().unwrap(),
        "--k",
        "2",
        "--filter",
        "structural",
        "--config",
        cfg.to_str().unwrap(),
        "alpha binding",
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout_of(&out).lines().count(), 2);
}

#[test]
fn export_rejects_mismatched_dimensions() {
    let dir = tempfile::tempdir().unwrap();
    let fixture = fixture_path(dir.path());
    let cfg = dir.path().join("cfg.json");
    write(
        &cfg,
        r#"{"d_v": 16, "d_h": 16, "d_e": 8, "epochs": 1, "seed": 1}"#,
    );
    let run_dir = dir.path().join("run");
    run(&[
        "train",
        "--corpus",
        fixture.to_str().unwrap(),
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        run_dir.to_str().unwrap(),
    ]);
    // Default config implies d_v 256, mismatching the 16-wide params.
    let out = run(&[
        "export",
        "--corpus",
        fixture.to_str().unwrap(),
        "--params",
        run_dir.join("params.bin").to_str().unwrap(),
        "--out",
        dir.path().join("bad.tgvs").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn corrupt_store_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("garbage.tgvs");
    write(&path, "not a store");
    let out = run(&["query", "--store", path.to_str().unwrap(), "hello"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn invalid_config_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let fixture = fixture_path(dir.path());
    let cfg = dir.path().join("bad.json");
    write(&cfg, r#"{"d_v": 12}"#);
    let out = run(&[
        "train",
        "--corpus",
        fixture.to_str().unwrap(),
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().join("x").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error:"));
}

#[test]
fn seed_flag_overrides_config_seed() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    write(&spec, r#"{"seed": 1, "n_tools": 2}"#);
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    run(&[
        "gen-corpus",
        "--config",
        spec.to_str().unwrap(),
        "--out",
        out_a.to_str().unwrap(),
        "--seed",
        "99",
    ]);
    run(&[
        "gen-corpus",
        "--config",
        spec.to_str().unwrap(),
        "--out",
        out_b.to_str().unwrap(),
    ]);
    let a = std::fs::read_to_string(out_a.join("tool_0000.json")).unwrap();
    let b = std::fs::read_to_string(out_b.join("tool_0000.json")).unwrap();
    assert_ne!(a, b, "seed override had no effect");
}
