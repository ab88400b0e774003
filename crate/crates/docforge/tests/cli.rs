use std::fs;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn corpus() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/corpus")
}

fn docforge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_docforge"))
        .args(args)
        .env_remove("DOCFORGE_BACKEND_URL")
        .env_remove("DOCFORGE_CONFIG")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn copy_dir(from: &Path, to: &Path) {
    fs::create_dir_all(to).unwrap();
    for e in fs::read_dir(from).unwrap() {
        let e = e.unwrap();
        let target = to.join(e.file_name());
        if e.file_type().unwrap().is_dir() {
            copy_dir(&e.path(), &target);
        } else {
            fs::copy(e.path(), target).unwrap();
        }
    }
}

fn run_corpus(config: &Path, out: &Path, workers: &str) -> Output {
    docforge(&["run", "--config", s(config), "--out", s(out), "--workers", workers])
}

#[test]
fn run_matches_golden_reports() {
    let out = tempfile::tempdir().unwrap();
    let o = run_corpus(&corpus().join("config.json"), out.path(), "2");
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for name in ["run_report.json", "run_report.md"] {
        let got = fs::read_to_string(out.path().join(name)).unwrap();
        let want = fs::read_to_string(corpus().join("golden").join(name)).unwrap();
        assert_eq!(got, want, "{name} differs from the golden file");
    }
}

#[test]
fn evaluate_detection_matches_golden_reports() {
    let out = tempfile::tempdir().unwrap();
    let o = docforge(&[
        "evaluate-detection",
        "--config",
        s(&corpus().join("config.json")),
        "--out",
        s(out.path()),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for name in ["detection.json", "detection.md"] {
        let got = fs::read_to_string(out.path().join(name)).unwrap();
        let want = fs::read_to_string(corpus().join("golden").join(name)).unwrap();
        assert_eq!(got, want, "{name} differs from the golden file");
    }
    assert!(stdout(&o).contains("| Complainant Name | 0.8000 | 1.0000 |"));
}

#[test]
fn worker_count_does_not_change_reports() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let config = corpus().join("config.json");
    assert_eq!(code(&run_corpus(&config, a.path(), "1")), 0);
    assert_eq!(code(&run_corpus(&config, b.path(), "8")), 0);
    for name in ["run_report.json", "run_report.md"] {
        assert_eq!(
            fs::read(a.path().join(name)).unwrap(),
            fs::read(b.path().join(name)).unwrap()
        );
    }
}

/// Writes a config next to the corpus copy with `extra` spliced in.
fn config_with(dir: &Path, extra: &str) -> PathBuf {
    copy_dir(&corpus(), dir);
    let path = dir.join("config.json");
    let text = fs::read_to_string(&path).unwrap();
    let text = text.replacen('{', &format!("{{\n  {extra},"), 1);
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn zero_confidence_threshold_disables_correction() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config_with(dir.path(), r#""policy": {"ocr_confidence_threshold": 0.0}"#);
    let out = dir.path().join("out");
    assert_eq!(code(&run_corpus(&cfg, &out, "2")), 0);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("run_report.json")).unwrap()).unwrap();
    assert_eq!(report["correction_log"], serde_json::json!([]));
    assert_eq!(report["ocr_before"], report["ocr_after"]);
}

#[test]
fn correction_log_rows_respect_policy() {
    let report: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(corpus().join("golden/run_report.json")).unwrap(),
    )
    .unwrap();
    let rows = report["correction_log"].as_array().unwrap();
    assert!(!rows.is_empty());
    for r in rows {
        assert!(r["ocr_confidence"].as_f64().unwrap() < 0.7);
        assert!(r["knn_similarity"].as_f64().unwrap() > 0.9);
        assert_ne!(r["original"], r["corrected"]);
    }
}

#[test]
fn missing_backend_record_is_a_partial_failure() {
    let dir = tempfile::tempdir().unwrap();
    copy_dir(&corpus(), dir.path());
    fs::remove_dir_all(dir.path().join("backend/doc03")).unwrap();
    let out = dir.path().join("out");
    let o = run_corpus(&dir.path().join("config.json"), &out, "2");
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("run_report.json")).unwrap()).unwrap();
    assert_eq!(report["documents"], 4);
    assert_eq!(report["failures"][0]["doc_id"], "doc03");
    assert_eq!(report["failures"][0]["stage"], "detection");
    assert!(fs::read_to_string(out.join("run_report.md")).unwrap().contains("## Failures"));

    // detection evaluation aborts instead
    let o = docforge(&["evaluate-detection", "--config", s(&dir.path().join("config.json")), "--out", s(&out)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("doc03"));
}

#[test]
fn configuration_problems_exit_with_1() {
    let o = docforge(&["run"]);
    assert_eq!(code(&o), 1);
    let o = docforge(&["run", "--config", "/nonexistent/config.json"]);
    assert_eq!(code(&o), 1);

    let dir = tempfile::tempdir().unwrap();
    copy_dir(&corpus(), dir.path());
    fs::remove_file(dir.path().join("gazetteers/stations.txt")).unwrap();
    let o = run_corpus(&dir.path().join("config.json"), &dir.path().join("out"), "1");
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("stations.txt"), "{}", stderr(&o));
}

#[test]
fn unreachable_remote_backend_exits_with_2() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let o = Command::new(env!("CARGO_BIN_EXE_docforge"))
        .args(["run", "--backend", "remote", "--config", s(&corpus().join("config.json"))])
        .env("DOCFORGE_BACKEND_URL", format!("http://127.0.0.1:{port}"))
        .output()
        .unwrap();
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

fn annotation_dir(n: usize) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    for i in 0..n {
        let doc = r#"{"shapes":[{"label":"year","points":[[1,1],[9,9]],"description":"2019"}],"imageWidth":100,"imageHeight":100}"#.to_string();
        fs::write(dir.path().join(format!("fir{i:03}.json")), doc).unwrap();
    }
    dir
}

#[test]
fn split_reproduces_dataset_table_counts() {
    let ann = annotation_dir(375);
    let out = tempfile::tempdir().unwrap();
    let o = docforge(&["split", "--annotations", s(ann.path()), "--out", s(out.path()), "--seed", "7"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("375 documents: 210 train, 90 validation, 75 test"), "{}", stdout(&o));
    let first = fs::read(out.path().join("manifest.json")).unwrap();

    let o = docforge(&["split", "--annotations", s(ann.path()), "--out", s(out.path()), "--seed", "7"]);
    assert_eq!(code(&o), 0);
    assert_eq!(fs::read(out.path().join("manifest.json")).unwrap(), first);

    // annotation paths resolve from the manifest's directory
    let m: serde_json::Value = serde_json::from_slice(&first).unwrap();
    let rel = m["entries"][0]["annotation"].as_str().unwrap();
    assert!(out.path().join(rel).is_file(), "{rel}");

    let other = tempfile::tempdir().unwrap();
    docforge(&["split", "--annotations", s(ann.path()), "--out", s(other.path()), "--seed", "8"]);
    let m2: serde_json::Value =
        serde_json::from_slice(&fs::read(other.path().join("manifest.json")).unwrap()).unwrap();
    let splits = |m: &serde_json::Value| -> Vec<String> {
        m["entries"].as_array().unwrap().iter().map(|e| e["split"].to_string()).collect()
    };
    assert_ne!(splits(&m), splits(&m2), "a different seed should move documents");
}

#[test]
fn split_without_annotation_dir_fails() {
    let out = tempfile::tempdir().unwrap();
    let o = docforge(&["split", "--annotations", "/nonexistent/annotations", "--out", s(out.path())]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("/nonexistent/annotations"));
}

#[test]
fn build_gazetteer_reports_and_is_reproducible() {
    let out = tempfile::tempdir().unwrap();
    let names = corpus().join("gazetteers/names_table3.txt");
    let target = out.path().join("names.json");
    let o = docforge(&["build-gazetteer", "--field", "complainant_name", "-o", s(&target), s(&names)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("indexed 4 entries"), "{}", stdout(&o));
    let first = fs::read(&target).unwrap();
    docforge(&["build-gazetteer", "--field", "complainant_name", "-o", s(&target), s(&names)]);
    assert_eq!(fs::read(&target).unwrap(), first);

    // the checked-in statute index is what the command produces
    let statutes = out.path().join("statutes.json");
    docforge(&[
        "build-gazetteer",
        "--field",
        "statute",
        "-o",
        s(&statutes),
        s(&corpus().join("gazetteers/statutes.txt")),
    ]);
    assert_eq!(
        fs::read(&statutes).unwrap(),
        fs::read(corpus().join("gazetteers/statutes.index.json")).unwrap()
    );
}

#[test]
fn build_gazetteer_warns_about_short_entries_and_rejects_empty() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("g.txt");
    fs::write(&file, "Ab\nBaguiati\n").unwrap();
    let o = docforge(&["build-gazetteer", "--field", "police_station", "--out", s(dir.path()), s(&file)]);
    assert_eq!(code(&o), 0);
    assert!(stderr(&o).contains("\"Ab\""), "{}", stderr(&o));
    assert!(dir.path().join("police_station.index.json").is_file());

    fs::write(&file, "\n  \n").unwrap();
    let o = docforge(&["build-gazetteer", "--field", "police_station", "--out", s(dir.path()), s(&file)]);
    assert_eq!(code(&o), 1);
}

#[test]
fn evaluate_ocr_scores_tsv_rows() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("pairs.tsv");
    fs::write(&input, "year\t2019\t2019\nname\tkitten\tsitting\n").unwrap();
    let o = docforge(&["evaluate-ocr", s(&input), "--out", s(dir.path())]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("| Year | 0.0000 | 0.0000 | 1.0000 |"), "{out}");
    assert!(out.contains("| Complainant Name | 0.5000 | 1.0000 |"), "{out}");
    let table: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("ocr.json")).unwrap()).unwrap();
    assert_eq!(table["overall"]["pairs"], 2);

    fs::write(&input, "year\t2019\n").unwrap();
    assert_eq!(code(&docforge(&["evaluate-ocr", s(&input)])), 1);
}
