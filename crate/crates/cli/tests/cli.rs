use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn geoq(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_geoq"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Value {
    let out = geoq(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).unwrap_or(Value::Null)
}

fn read_json(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Two classes of positive-valued rows with a few correlated features.
fn write_dataset(dir: &Path) -> PathBuf {
    let mut text = String::from("a,b,c,d,e,target\n");
    let mut state: u64 = 42;
    let mut next = || {
        state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    for i in 0..160 {
        let y = if i % 4 == 0 { "yes" } else { "no" };
        let base = if y == "yes" { 6.0 } else { 4.0 };
        let f = base + next();
        text.push_str(&format!(
            "{:.4},{:.4},{:.4},{:.4},{:.4},{y}\n",
            f + 0.3 * next(),
            2.0 * f + next(),
            3.0 + next(),
            f - 0.5 * next(),
            1.0 + 2.0 * next()
        ));
    }
    let path = dir.join("toy.csv");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn full_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    write_dataset(dir);
    let data = [
        "--data",
        "toy.csv",
        "--label",
        "target",
        "--split",
        "0.6,0.2,0.2",
        "--seed",
        "3",
    ];
    let with = |extra: &[&'static str]| -> Vec<&'static str> {
        let mut v: Vec<&'static str> = data.to_vec();
        v.extend_from_slice(extra);
        v
    };

    let mut args = vec!["prepare"];
    args.extend(with(&["--out", "run"]));
    let prep = ok(dir, &args);
    assert_eq!(prep["sizes"]["train"], 96);
    assert_eq!(prep["manifest"]["seeds"]["split"], 3);
    assert!(dir.join("run/test.csv").exists());

    let mut args = vec!["search"];
    args.extend(with(&["--k", "2:3", "--passes", "2", "--out", "run"]));
    let summary = ok(dir, &args);
    assert_eq!(summary["entries"].as_array().unwrap().len(), 2);
    let record = read_json(dir.join("run/search_record.json"));
    assert_eq!(record["format_version"], 1);
    assert!(record["manifest"]["tool_version"].is_string());

    let mut args = vec!["calibrate"];
    args.extend(with(&["--search-record", "run/search_record.json", "--out", "run"]));
    let cal = ok(dir, &args);
    assert_eq!(cal["alpha_records"].as_array().unwrap().len(), 21);
    assert_eq!(cal["fbeta"].as_array().unwrap().len(), 3);

    let mut args = vec!["fit-fusion"];
    args.extend(with(&["--search-record", "run/search_record.json", "--out", "run"]));
    let fit = ok(dir, &args);
    assert_eq!(fit["artifacts"].as_array().unwrap().len(), 2);
    let alias = read_json(dir.join("run/best_alias.json"));
    let k = alias["fusion"]["k"].as_u64().unwrap();
    let fusion = format!("run/fusion_k{k}.json");

    let mut args = vec!["build-delta"];
    args.extend(with(&["--out", "run"]));
    ok(dir, &args);
    let header = std::fs::read_to_string(dir.join("run/delta_train.csv")).unwrap();
    assert!(header.starts_with("delta_d,delta_theta,label\n"));

    let vqc = ok(
        dir,
        &[
            "train-vqc",
            "--delta-dir",
            "run",
            "--steps",
            "30",
            "--reps",
            "1",
            "--folds",
            "3",
            "--tau",
            "0.3",
        ],
    );
    assert_eq!(vqc["tau"], 0.3);
    assert!(vqc["alert_rate"]["val"].is_number());
    assert!(vqc["alert_rate"]["test"].is_number());
    assert!(dir.join(format!("run/vqc_k{k}.json")).exists());

    let scored = ok(
        dir,
        &[
            "score",
            "--artifact",
            &fusion,
            "--data",
            "run/test.csv",
            "--label",
            "target",
            "--out",
            "pred.csv",
        ],
    );
    assert_eq!(scored["n"], 32);
    let pred = std::fs::read_to_string(dir.join("pred.csv")).unwrap();
    assert!(pred.starts_with("row_id,label,margin\n"));
    assert_eq!(pred.lines().count(), 33);

    let eval = ok(
        dir,
        &[
            "evaluate",
            "--predictions",
            "pred.csv",
            "--data",
            "run/test.csv",
            "--label",
            "target",
        ],
    );
    assert_eq!(eval["metrics"]["accuracy"], scored["metrics"]["accuracy"]);

    let vqc_file = format!("run/vqc_k{k}.json");
    let vs = ok(
        dir,
        &[
            "score",
            "--artifact",
            &vqc_file,
            "--data",
            "run/test.csv",
            "--tau",
            "0.5",
            "--out",
            "vpred.csv",
        ],
    );
    assert_eq!(vs["kind"], "vqc");
    assert_eq!(vs["tau"], 0.5);
    assert!(vs["alert_rate"].is_number());
    let vpred = std::fs::read_to_string(dir.join("vpred.csv")).unwrap();
    assert!(vpred.starts_with("row_id,label,margin,p_yes,p_no\n"));

    let stdout = geoq(dir, &["score", "--artifact", &fusion, "--data", "run/test.csv"]);
    assert!(stdout.status.success());
    assert_eq!(String::from_utf8_lossy(&stdout.stdout), pred);
}

#[test]
fn search_is_deterministic_and_covers_k_range() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    write_dataset(dir);
    let base = [
        "search", "--data", "toy.csv", "--label", "target", "--k", "2:5", "--passes", "3",
    ];
    let mut a = base.to_vec();
    a.extend(["--out", "a"]);
    let mut b = base.to_vec();
    b.extend(["--out", "b"]);
    ok(dir, &a);
    ok(dir, &b);
    let ra = read_json(dir.join("a/search_record.json"));
    assert_eq!(ra["record"]["entries"].as_array().unwrap().len(), 4);
    assert_eq!(ra, read_json(dir.join("b/search_record.json")));
}

#[test]
fn config_file_and_flag_precedence() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    write_dataset(dir);
    std::fs::write(
        dir.join("run.cfg"),
        "data = toy.csv\nlabel = target\nseed = 5\nk = 2\nout = c\n# shared with later stages\nsteps = 10\n",
    )
    .unwrap();
    let r = ok(dir, &["--config", "run.cfg", "search", "--seed", "9"]);
    assert_eq!(r["manifest"]["seeds"]["split"], 9);
    assert_eq!(r["entries"].as_array().unwrap().len(), 1);

    std::fs::write(
        dir.join("run.json"),
        r#"{"data": "toy.csv", "label": "target", "k": "2:2", "out": "j"}"#,
    )
    .unwrap();
    let r = ok(dir, &["search", "--config", "run.json"]);
    assert_eq!(r["manifest"]["seeds"]["split"], 0);

    std::fs::write(dir.join("bad.cfg"), "colour = blue\n").unwrap();
    assert_eq!(geoq(dir, &["--config", "bad.cfg", "search"]).status.code(), Some(2));
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    write_dataset(dir);
    assert_eq!(geoq(dir, &["frobnicate"]).status.code(), Some(2));
    assert_eq!(geoq(dir, &["search", "--data", "toy.csv"]).status.code(), Some(2));
    assert_eq!(
        geoq(dir, &["search", "--data", "toy.csv", "--label", "target", "--k", "4:2"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        geoq(dir, &["search", "--data", "nope.csv", "--label", "t"])
            .status
            .code(),
        Some(3)
    );
    assert_eq!(
        geoq(dir, &["search", "--data", "toy.csv", "--label", "missing"])
            .status
            .code(),
        Some(3)
    );

    let missing = geoq(dir, &["score", "--artifact", "none.json", "--data", "toy.csv"]);
    assert_eq!(missing.status.code(), Some(4));
    let err: Value = serde_json::from_slice(&missing.stderr).unwrap();
    assert_eq!(err["error"], "artifact");

    std::fs::write(dir.join("future.json"), r#"{"format_version": 99}"#).unwrap();
    assert_eq!(
        geoq(dir, &["score", "--artifact", "future.json", "--data", "toy.csv"])
            .status
            .code(),
        Some(4)
    );
    assert_eq!(geoq(dir, &["train-vqc", "--delta-dir", "empty"]).status.code(), Some(4));
    assert_eq!(geoq(dir, &["--help"]).status.code(), Some(0));
}
