use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const D0: &str = "user_id,item_id,period\n1,1,0\n1,2,0\n2,1,0\n2,3,0\n3,1,0\n3,2,0\n3,3,0\n4,4,0\n";

fn unicity(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_unicity"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) {
    let out = unicity(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn assert_schema(name: &str, path: &Path) {
    let schema_path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../schemas")
        .join(format!("{name}.schema.json"));
    let validator = jsonschema::validator_for(&read_json(&schema_path)).expect("schema compiles");
    let instance = read_json(path);
    let errors: Vec<String> = validator.iter_errors(&instance).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{} violates {name}: {errors:#?}", path.display());
}

fn d0_dataset(dir: &Path) {
    std::fs::write(dir.join("d0.csv"), D0).unwrap();
    ok(
        dir,
        &["ingest", "--input", "d0.csv", "--min-items", "1", "-o", "d0.bin"],
    );
}

#[test]
fn ingest_d0_and_estimate() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    d0_dataset(d);
    assert_schema("ingest-report", &d.join("d0.bin.report.json"));
    assert_schema("run-manifest", &d.join("d0.bin.manifest.json"));
    let report = read_json(&d.join("d0.bin.report.json"));
    assert_eq!(report["build"]["users"], 4);
    assert_eq!(report["header"], true);

    ok(
        d,
        &[
            "unicity",
            "--dataset",
            "d0.bin",
            "--n",
            "1..10",
            "--s",
            "4",
            "-o",
            "u.json",
        ],
    );
    assert_schema("unicity-report", &d.join("u.json"));
    let report = read_json(&d.join("u.json"));
    let estimates = report["estimates"].as_array().unwrap();
    assert_eq!(estimates.len(), 20);
    for e in estimates {
        let expected = match (e["strategy"].as_str().unwrap(), e["n_apps"].as_u64().unwrap()) {
            (_, 1) => Some(0.25),
            ("popularity", _) => Some(0.5),
            _ => None,
        };
        if let Some(x) = expected {
            assert_eq!(e["mean"].as_f64().unwrap(), x, "{e}");
        }
    }
}

#[test]
fn duplicate_lines_do_not_change_the_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    d0_dataset(d);
    let doubled = format!(
        "{D0}{}",
        D0.lines().skip(1).map(|l| format!("{l}\n")).collect::<String>()
    );
    std::fs::write(d.join("dup.csv"), doubled).unwrap();
    ok(
        d,
        &["ingest", "--input", "dup.csv", "--min-items", "1", "-o", "dup.bin"],
    );
    assert_eq!(
        std::fs::read(d.join("d0.bin")).unwrap(),
        std::fs::read(d.join("dup.bin")).unwrap()
    );
    assert_eq!(read_json(&d.join("dup.bin.report.json"))["build"]["duplicates"], 8);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("d0.csv"), D0).unwrap();
    // Every user is below the threshold.
    let out = unicity(d, &["ingest", "--input", "d0.csv", "--min-items", "4", "-o", "x.bin"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!d.join("x.bin").exists());

    assert_eq!(
        unicity(d, &["unicity", "--dataset", "missing.bin", "-o", "u.json"])
            .status
            .code(),
        Some(3)
    );
    assert_eq!(
        unicity(d, &["unicity", "--n", "0..2", "--dataset", "d0.bin", "-o", "u"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(unicity(d, &["frobnicate"]).status.code(), Some(2));
    assert_eq!(
        unicity(d, &["synth", "--alpha=-1", "-o", "s.bin"]).status.code(),
        Some(2)
    );
    std::fs::write(d.join("junk.bin"), b"not a dataset").unwrap();
    assert_eq!(
        unicity(d, &["stats", "--dataset", "junk.bin", "--table", "usage", "-o", "t"])
            .status
            .code(),
        Some(3)
    );
}

#[test]
fn analysis_pipeline_validates_and_replays() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(
        d,
        &[
            "synth",
            "--users",
            "3000",
            "--items",
            "4000",
            "--periods",
            "3",
            "--plant",
            "20",
            "-o",
            "s.bin",
            "--events",
            "s.csv",
        ],
    );
    assert_schema("synth-truth", &d.join("s.bin.truth.json"));
    let truth = read_json(&d.join("s.bin.truth.json"));
    assert_eq!(truth["planted_users"].as_array().unwrap().len(), 20);

    let common = ["--s", "3", "--sample-size", "500", "--seed", "9"];
    let run = |extra: &[&str], tail: &[&str]| {
        let mut args: Vec<&str> = extra.to_vec();
        args.extend(common);
        args.extend(tail);
        ok(d, &args);
    };
    run(&["unicity", "--dataset", "s.bin", "--n", "1,3"], &["-o", "u.json"]);
    run(&["seasonal", "--dataset", "s.bin", "--n", "2"], &["-o", "seasonal.csv"]);
    run(
        &[
            "scaling",
            "--dataset",
            "s.bin",
            "--sizes",
            "500,1000,2000,3000",
            "--realizations",
            "2",
            "--n",
            "3",
        ],
        &["-o", "c.json"],
    );
    ok(
        d,
        &[
            "fit",
            "--curve",
            "c.json",
            "--forms",
            "linear,exponential",
            "-o",
            "f.json",
        ],
    );
    ok(
        d,
        &[
            "extrapolate",
            "--fits",
            "f.json",
            "--population",
            "10k,1M",
            "-o",
            "e.json",
        ],
    );
    for table in ["usage", "popularity", "drift"] {
        ok(
            d,
            &[
                "stats",
                "--dataset",
                "s.bin",
                "--table",
                table,
                "-o",
                &format!("{table}.csv"),
            ],
        );
    }
    std::fs::write(d.join("cat.csv"), "item_id,label\n0,games\n1,social\n").unwrap();
    ok(
        d,
        &[
            "stats",
            "--dataset",
            "s.bin",
            "--table",
            "categories",
            "--categories",
            "cat.csv",
            "-o",
            "cat.tsv",
        ],
    );

    for (schema, file) in [
        ("unicity-report", "u.json"),
        ("scaling-report", "c.json"),
        ("fit-report", "f.json"),
        ("extrapolation-report", "e.json"),
    ] {
        assert_schema(schema, &d.join(file));
        assert_schema("run-manifest", &d.join(format!("{file}.manifest.json")));
    }

    let seasonal = std::fs::read_to_string(d.join("seasonal.csv")).unwrap();
    let header = seasonal.lines().find(|l| !l.starts_with('#')).unwrap();
    assert_eq!(header, "strategy,n_apps,period,users,items,unicity,std,rescaled");
    assert_eq!(seasonal.lines().filter(|l| !l.starts_with('#')).count(), 1 + 2 * 3);

    for manifest in [
        "s.bin.manifest.json",
        "u.json.manifest.json",
        "seasonal.csv.manifest.json",
        "c.json.manifest.json",
        "f.json.manifest.json",
        "e.json.manifest.json",
        "drift.csv.manifest.json",
        "cat.tsv.manifest.json",
    ] {
        let out = unicity(d, &["replay", manifest]);
        assert!(
            out.status.success(),
            "replay {manifest}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        assert!(String::from_utf8_lossy(&out.stdout).starts_with("identical"));
    }
}

#[test]
fn same_seed_same_bytes_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(
        d,
        &[
            "synth",
            "--users",
            "2000",
            "--items",
            "3000",
            "--periods",
            "1",
            "-o",
            "s.bin",
        ],
    );
    ok(
        d,
        &[
            "--workers",
            "1",
            "unicity",
            "--dataset",
            "s.bin",
            "--n",
            "1..4",
            "--s",
            "6",
            "--sample-size",
            "400",
            "-o",
            "a.json",
        ],
    );
    ok(
        d,
        &[
            "--workers",
            "4",
            "unicity",
            "--dataset",
            "s.bin",
            "--n",
            "1..4",
            "--s",
            "6",
            "--sample-size",
            "400",
            "-o",
            "b.json",
        ],
    );
    assert_eq!(
        std::fs::read(d.join("a.json")).unwrap(),
        std::fs::read(d.join("b.json")).unwrap()
    );
}

#[test]
fn replay_detects_changed_inputs_and_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    d0_dataset(d);
    ok(
        d,
        &["unicity", "--dataset", "d0.bin", "--n", "2", "--s", "2", "-o", "u.json"],
    );

    let manifest_path = d.join("u.json.manifest.json");
    let mut manifest = read_json(&manifest_path);
    manifest["outputs"][0]["sha256"] = Value::String("0".repeat(64));
    std::fs::write(d.join("tampered.json"), manifest.to_string()).unwrap();
    let out = unicity(d, &["replay", "tampered.json"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("differs"));

    std::fs::write(d.join("d0.csv"), D0.replace("4,4,0", "4,5,0")).unwrap();
    ok(d, &["ingest", "--input", "d0.csv", "--min-items", "1", "-o", "d0.bin"]);
    assert_eq!(unicity(d, &["replay", "u.json.manifest.json"]).status.code(), Some(3));
}
