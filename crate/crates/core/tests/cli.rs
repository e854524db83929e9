use std::path::Path;
use std::process::{Command, Output};

fn stgap(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stgap"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = stgap(dir, args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn rows(csv_text: &str) -> Vec<csv::StringRecord> {
    csv::Reader::from_reader(csv_text.as_bytes())
        .records()
        .map(Result::unwrap)
        .collect()
}

fn scene(dir: &Path) {
    ok(
        dir,
        &[
            "synth",
            "--seed",
            "4",
            "--out-dir",
            "s",
            "--rows",
            "16",
            "--cols",
            "16",
            "--days",
            "10",
        ],
    );
}

#[test]
fn round_trip_scores_every_hidden_cell() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    scene(dir);
    let mask = ok(
        dir,
        &[
            "mask",
            "--seed",
            "1",
            "--cube",
            "s/cube.grid",
            "--kind",
            "uniform",
            "--ratio",
            "0.25",
            "--out",
            "m.grid",
            "--truth",
            "t.csv",
        ],
    );
    let hidden: usize = rows(&mask)[0][3].parse().unwrap();
    assert_eq!(hidden, (0.25f64 * 2560.0).round() as usize);

    let train = ok(
        dir,
        &[
            "train",
            "--seed",
            "2",
            "--cube",
            "m.grid",
            "--aux",
            "s/aux.grid",
            "--model",
            "stxgb",
            "--n-estimators",
            "60",
            "--out",
            "model.json",
        ],
    );
    assert_eq!(&rows(&train)[0][0], "stxgb");
    ok(
        dir,
        &[
            "reconstruct",
            "--cube",
            "m.grid",
            "--aux",
            "s/aux.grid",
            "--model-file",
            "model.json",
            "--out",
            "r.grid",
        ],
    );
    let eval = ok(
        dir,
        &[
            "evaluate",
            "--pred",
            "r.grid",
            "--truth",
            "t.csv",
            "--per-day",
        ],
    );
    assert!(eval.starts_with(
        "model,dataset,axis,point,mask_kind,mask_ratio,n,r2,literal_r2,rmse,mae,bias,flags\n"
    ));
    let table = rows(&eval);
    assert_eq!(table[0][6].parse::<usize>().unwrap(), hidden);
    let per_day: usize = table[1..]
        .iter()
        .map(|r| r[6].parse::<usize>().unwrap())
        .sum();
    assert_eq!(per_day, hidden);
    assert!(table[0][7].parse::<f64>().unwrap() > 0.5);

    let imp = ok(dir, &["importance", "--model-file", "model.json"]);
    let ranked = rows(&imp);
    assert_eq!(ranked.len(), 14);
    assert_eq!(&ranked[0][0], "1");
}

#[test]
fn evaluating_truth_against_itself_is_perfect() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    scene(dir);
    let eval = ok(
        dir,
        &[
            "evaluate",
            "--pred",
            "s/cube.grid",
            "--truth-cube",
            "s/cube.grid",
        ],
    );
    let table = rows(&eval);
    assert_eq!(table.len(), 1);
    assert_eq!(&table[0][7], "1");
    assert_eq!(&table[0][9], "0");
}

#[test]
fn bad_fraction_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = stgap(
        tmp.path(),
        &[
            "train",
            "--seed",
            "1",
            "--cube",
            "c",
            "--aux",
            "a",
            "--out",
            "m",
            "--train-fraction",
            "1.5",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(out.stdout.is_empty());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--train-fraction"));
}

#[test]
fn unknown_flag_and_missing_seed_are_usage_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let out = stgap(
        tmp.path(),
        &["synth", "--seed", "1", "--out-dir", "x", "--colour", "red"],
    );
    assert_eq!(out.status.code(), Some(1));
    let out = stgap(
        tmp.path(),
        &[
            "mask", "--cube", "c", "--ratio", "0.3", "--out", "o", "--truth", "t",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--seed"));
}

#[test]
fn unreadable_input_is_a_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("junk.grid"), b"not a grid").unwrap();
    let out = stgap(
        tmp.path(),
        &[
            "mask",
            "--seed",
            "1",
            "--cube",
            "junk.grid",
            "--ratio",
            "0.3",
            "--out",
            "o",
            "--truth",
            "t",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
}

#[test]
fn manifest_records_seeds_and_hash() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    ok(
        dir,
        &[
            "--manifest",
            "run.json",
            "synth",
            "--seed",
            "8",
            "--out-dir",
            "s",
            "--rows",
            "8",
            "--cols",
            "8",
            "--days",
            "3",
        ],
    );
    let text = std::fs::read_to_string(dir.join("run.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["seeds"]["scene"], 8);
    assert_eq!(v["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(v["outputs"]["cube"], "s/cube.grid");
    assert!(v["wall_time_s"].as_f64().is_some());
}
