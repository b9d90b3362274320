use std::fs;
use std::path::{Path, PathBuf};

use seqvad::cli::main_with_args;
use seqvad::metrics::EvalReport;
use seqvad::NominalModel;
use tempfile::TempDir;

fn run(args: &[&str]) -> i32 {
    let mut full = vec!["seqvad"];
    full.extend_from_slice(args);
    main_with_args(full)
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}

struct Pipeline {
    dir: TempDir,
}

impl Pipeline {
    fn new() -> Self {
        let dir = TempDir::new().unwrap();
        let d = dir.path();
        assert_eq!(run(&["synth", "--out-dir", &p(d, "data"), "--m", "4", "--seed", "1"]), 0);
        assert_eq!(
            run(&["calibrate", "--train", &p(d, "data/train.jsonl"), "--model", &p(d, "model.json")]),
            0
        );
        Pipeline { dir }
    }

    fn path(&self, name: &str) -> String {
        p(self.dir.path(), name)
    }

    fn detect(&self, out: &str, extra: &[&str]) -> i32 {
        let mut args = vec![
            "detect".to_string(),
            "--model".into(),
            self.path("model.json"),
            "--features".into(),
            self.path("data/test.jsonl"),
            "--detections".into(),
            self.path(out),
            "--events".into(),
            self.path(&format!("{out}.events")),
        ];
        args.extend(extra.iter().map(|s| s.to_string()));
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        run(&refs)
    }
}

#[test]
fn full_pipeline_is_deterministic() {
    let pl = Pipeline::new();
    for f in ["data/train.jsonl", "data/test.jsonl", "data/truth.jsonl", "data/scenario.toml"] {
        assert!(Path::new(&pl.path(f)).exists(), "{f}");
    }
    let model_bytes = fs::read(pl.path("model.json")).unwrap();
    assert_eq!(
        run(&["calibrate", "--train", &pl.path("data/train.jsonl"), "--model", &pl.path("model2.json")]),
        0
    );
    assert_eq!(model_bytes, fs::read(pl.path("model2.json")).unwrap());

    assert_eq!(pl.detect("det.jsonl", &[]), 0);
    assert_eq!(pl.detect("det2.jsonl", &[]), 0);
    let det = fs::read(pl.path("det.jsonl")).unwrap();
    assert_eq!(det, fs::read(pl.path("det2.jsonl")).unwrap());
    assert_eq!(
        fs::read(pl.path("det.jsonl.events")).unwrap(),
        fs::read(pl.path("det2.jsonl.events")).unwrap()
    );
    // canonical order: video, then frame
    let keys: Vec<(String, u64)> = String::from_utf8(det)
        .unwrap()
        .lines()
        .map(|l| {
            let v: serde_json::Value = serde_json::from_str(l).unwrap();
            (v["video_id"].as_str().unwrap().to_string(), v["frame_index"].as_u64().unwrap())
        })
        .collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);
    assert_eq!(keys.len(), 4 * 300);

    for report in ["r1.json", "r2.json"] {
        assert_eq!(
            run(&[
                "evaluate",
                "--detections",
                &pl.path("det.jsonl"),
                "--truth",
                &pl.path("data/truth.jsonl"),
                "--report",
                &pl.path(report),
                "--table",
                &pl.path("curve.csv"),
            ]),
            0
        );
    }
    let r1 = fs::read_to_string(pl.path("r1.json")).unwrap();
    assert_eq!(r1, fs::read_to_string(pl.path("r2.json")).unwrap());
    let report: EvalReport = serde_json::from_str(&r1).unwrap();
    assert!(report.apd.unwrap() > 0.5);
    assert!(report.frame_auc.unwrap() > 0.9);
    assert_eq!(report.events, 4);
    assert!(fs::read_to_string(pl.path("curve.csv")).unwrap().starts_with("threshold,gamma,precision"));
}

#[test]
fn verify_far_table() {
    let pl = Pipeline::new();
    assert_eq!(
        run(&[
            "verify-far",
            "--model",
            &pl.path("model.json"),
            "--betas",
            "1.0,0.1,0.05",
            "--far-frames",
            "20000",
            "--table",
            &pl.path("far.csv"),
        ]),
        0
    );
    let table = fs::read_to_string(pl.path("far.csv")).unwrap();
    let rows: Vec<Vec<&str>> = table
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("beta"))
        .map(|l| l.split(',').collect())
        .collect();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0][1].parse::<f64>().unwrap(), 0.0);
    assert_eq!(rows[0][5].parse::<f64>().unwrap(), 1.0);
    for row in &rows[1..] {
        let beta: f64 = row[0].parse().unwrap();
        assert!(row[5].parse::<f64>().unwrap() <= beta, "{row:?}");
    }
    assert!(table.starts_with("# seed=0"));
}

#[test]
fn threshold_override_and_regressor_flag() {
    let pl = Pipeline::new();
    assert_eq!(pl.detect("low.jsonl", &["--threshold", "0"]), 0);
    let low = fs::read_to_string(pl.path("low.jsonl")).unwrap();
    assert!(low.lines().all(|l| l.contains("\"alarm\":true")));
    // no regressor in the model
    assert_eq!(pl.detect("reg.jsonl", &["--regressor", "true"]), 2);
    assert_eq!(pl.detect("neg.jsonl", &["--threshold", "-1"]), 1);
}

#[test]
fn config_file_with_flag_override() {
    let pl = Pipeline::new();
    let cfg = pl.path("run.toml");
    fs::write(
        &cfg,
        format!(
            "train = {:?}\nmodel = {:?}\nalpha = 0.1\nbeta = 0.01\n",
            pl.path("data/train.jsonl"),
            pl.path("m.json")
        ),
    )
    .unwrap();
    assert_eq!(run(&["calibrate", "--config", &cfg, "--alpha", "0.2"]), 0);
    let model = NominalModel::load(&PathBuf::from(pl.path("m.json"))).unwrap();
    assert_eq!(model.calibration.alpha, 0.2);
    assert_eq!(model.calibration.beta, 0.01);

    fs::write(&cfg, "alpah = 0.1\n").unwrap();
    assert_eq!(run(&["calibrate", "--config", &cfg]), 1);
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    assert_eq!(run(&[]), 1);
    assert_eq!(run(&["--version"]), 0);
    assert_eq!(run(&["detect", "--bogus"]), 1);
    assert_eq!(run(&["calibrate", "--model", &p(d, "m.json")]), 1);
    assert_eq!(
        run(&["calibrate", "--train", &p(d, "missing.jsonl"), "--model", &p(d, "m.json")]),
        2
    );

    fs::write(
        p(d, "bad.jsonl"),
        "{\"video_id\":\"a\",\"frame_index\":0,\"objects\":[[0.1,0.2]]}\n{\"video_id\":\"a\",\"frame_index\":1,\"objects\":[[0.1]]}\n",
    )
    .unwrap();
    assert_eq!(
        run(&["calibrate", "--train", &p(d, "bad.jsonl"), "--model", &p(d, "m.json")]),
        2
    );

    // every training object identical: no evidence exceeds D_alpha
    let line = |i: usize| format!("{{\"video_id\":\"a\",\"frame_index\":{i},\"objects\":[[0.5,0.5]]}}\n");
    fs::write(p(d, "flat.jsonl"), (0..50).map(line).collect::<String>()).unwrap();
    assert_eq!(
        run(&["calibrate", "--train", &p(d, "flat.jsonl"), "--model", &p(d, "m.json")]),
        3
    );
}

#[test]
fn evaluate_rejects_foreign_truth() {
    let pl = Pipeline::new();
    assert_eq!(pl.detect("det.jsonl", &[]), 0);
    fs::write(
        pl.path("truth.jsonl"),
        "{\"video_id\":\"elsewhere\",\"start_frame\":1,\"end_frame\":2,\"segment_length\":10}\n",
    )
    .unwrap();
    assert_eq!(
        run(&["evaluate", "--detections", &pl.path("det.jsonl"), "--truth", &pl.path("truth.jsonl")]),
        2
    );
    fs::write(pl.path("empty.jsonl"), "").unwrap();
    assert_eq!(
        run(&["evaluate", "--detections", &pl.path("det.jsonl"), "--truth", &pl.path("empty.jsonl")]),
        0
    );
}

#[test]
fn detect_dimension_mismatch() {
    let pl = Pipeline::new();
    fs::write(
        pl.path("wide.jsonl"),
        "{\"video_id\":\"a\",\"frame_index\":0,\"objects\":[[0.1,0.2,0.3,0.4,0.5]]}\n",
    )
    .unwrap();
    assert_eq!(
        run(&[
            "detect",
            "--model",
            &pl.path("model.json"),
            "--features",
            &pl.path("wide.jsonl"),
            "--detections",
            &pl.path("out.jsonl"),
        ]),
        2
    );
}
