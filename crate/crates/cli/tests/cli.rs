use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hdgam::io::TABLE_HEADER;
use hdgam::sim::generate;
use hdgam::{Family, SimScenario};

fn hdgam(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hdgam"))
        .args(args)
        .env("HDGAM_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Training CSV with columns x0..x5 and y, y placed in the middle.
fn write_training(dir: &Path) -> PathBuf {
    let scn = SimScenario::new("cli", 150, 6, 2, Family::Gaussian, 0.0, 2.0).with_seed(3);
    let data = generate(&scn).unwrap();
    let mut text = String::from("x0,x1,x2,y,x3,x4,x5\n");
    for i in 0..scn.n {
        let mut cells: Vec<String> = (0..6).map(|j| data.x_train[(i, j)].to_string()).collect();
        cells.insert(3, data.y_train[i].to_string());
        text.push_str(&cells.join(","));
        text.push('\n');
    }
    let path = dir.join("train.csv");
    fs::write(&path, text).unwrap();
    path
}

fn fit(dir: &Path, train: &Path) -> PathBuf {
    let model = dir.join("model.json");
    let out = hdgam(&[
        "fit",
        "--data",
        p(train),
        "--response",
        "y",
        "--family",
        "gaussian",
        "--path-len",
        "15",
        "--out",
        p(&model),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("selected: ["), "{stdout}");
    assert!(stdout.contains("gic: "));
    model
}

#[test]
fn fit_then_predict_on_training_rows() {
    let dir = tempfile::tempdir().unwrap();
    let train = write_training(dir.path());
    let model = fit(dir.path(), &train);
    let preds = dir.path().join("preds.csv");
    let out = hdgam(&[
        "predict",
        "--model",
        p(&model),
        "--data",
        p(&train),
        "--out",
        p(&preds),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let text = fs::read_to_string(&preds).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("row_id,eta,mean"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 150);

    let file = hdgam::io::ModelFile::load(&model).unwrap();
    let data = hdgam::io::read_dataset_file(&train, Some("y")).unwrap();
    let x = file.align_features(&data).unwrap();
    let (eta, _) = file.model().predict(&x).unwrap();
    for (row, want) in rows.iter().zip(&eta) {
        let got: f64 = row.split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(got, *want);
    }
}

#[test]
fn fit_writes_the_path_when_asked() {
    let dir = tempfile::tempdir().unwrap();
    let train = write_training(dir.path());
    let path_csv = dir.path().join("path.csv");
    let out = hdgam(&[
        "fit",
        "--data",
        p(&train),
        "--response",
        "y",
        "--family",
        "gaussian",
        "--path-len",
        "10",
        "--out",
        p(&dir.path().join("m.json")),
        "--emit-path",
        p(&path_csv),
    ]);
    assert!(out.status.success());
    let text = fs::read_to_string(&path_csv).unwrap();
    assert_eq!(text.lines().count(), 11);
}

#[test]
fn missing_response_column_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let train = write_training(dir.path());
    let out = hdgam(&[
        "fit",
        "--data",
        p(&train),
        "--response",
        "target",
        "--family",
        "gaussian",
        "--out",
        p(&dir.path().join("m.json")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("target"));
}

#[test]
fn unknown_family_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let train = write_training(dir.path());
    let out = hdgam(&[
        "fit",
        "--data",
        p(&train),
        "--response",
        "y",
        "--family",
        "weibull",
        "--out",
        p(&dir.path().join("m.json")),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_cell_exits_1_with_location() {
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("bad.csv");
    fs::write(&train, "a,b,y\n0.1,0.2,1\n0.3,,2\n").unwrap();
    let out = hdgam(&[
        "fit",
        "--data",
        p(&train),
        "--response",
        "y",
        "--family",
        "gaussian",
        "--out",
        p(&dir.path().join("m.json")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("row 2") && err.contains('b'), "{err}");
}

#[test]
fn wrong_format_version_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let train = write_training(dir.path());
    let model = fit(dir.path(), &train);
    let text = fs::read_to_string(&model).unwrap().replacen(
        "\"format_version\": 1",
        "\"format_version\": 99",
        1,
    );
    fs::write(&model, text).unwrap();
    let out = hdgam(&[
        "predict",
        "--model",
        p(&model),
        "--data",
        p(&train),
        "--out",
        p(&dir.path().join("preds.csv")),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn header_only_input_gives_header_only_output() {
    let dir = tempfile::tempdir().unwrap();
    let train = write_training(dir.path());
    let model = fit(dir.path(), &train);
    let empty = dir.path().join("empty.csv");
    fs::write(&empty, "x5,x4,x3,x2,x1,x0\n").unwrap();
    let preds = dir.path().join("preds.csv");
    let out = hdgam(&[
        "predict",
        "--model",
        p(&model),
        "--data",
        p(&empty),
        "--out",
        p(&preds),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_eq!(fs::read_to_string(&preds).unwrap(), "row_id,eta,mean\n");
}

#[test]
fn simulate_is_deterministic_and_has_the_table_schema() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out_path = dir.path().join(name);
        let out = hdgam(&[
            "simulate",
            "--custom",
            "80,5,2,gaussian,0,2",
            "--reps",
            "3",
            "--seed",
            "5",
            "--out",
            p(&out_path),
        ]);
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        fs::read_to_string(out_path).unwrap()
    };
    let first = run("a.csv");
    assert_eq!(first, run("b.csv"));
    let mut lines = first.lines();
    assert_eq!(lines.next().unwrap(), TABLE_HEADER.join(","));
    assert_eq!(lines.count(), 1);
}

#[test]
fn unknown_scenario_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = hdgam(&[
        "simulate",
        "--scenario",
        "ex9",
        "--reps",
        "1",
        "--out",
        p(&dir.path().join("t.csv")),
    ]);
    assert_eq!(out.status.code(), Some(2));
}
