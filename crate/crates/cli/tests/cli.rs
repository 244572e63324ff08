use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use ngnn::experiments::{generate_sbm, SbmSpec};
use ngnn::graph::NodeDataset;
use serde_json::Value;

fn ngnn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ngnn")).args(args).output().unwrap()
}

fn ok(o: &Output) -> String {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

/// Small dataset plus a config file pointing at it.
fn setup(dir: &Path, extra: &str) -> std::path::PathBuf {
    let data = dir.join("data");
    ok(&ngnn(&[
        "gen-synth", "--nodes", "120", "--classes", "3", "--dim", "5", "--p-in", "0.1", "--p-out", "0.01", "--out",
        s(&data),
    ]));
    let cfg = dir.join("cfg.json");
    fs::write(
        &cfg,
        format!(r#"{{"dataset":"data","model":{{"arch":"gcn","hidden_dim":8}},"train":{{"epochs":4}}{extra}}}"#),
    )
    .unwrap();
    cfg
}

#[test]
fn single_run_aggregate_is_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path(), "");
    let out = dir.path().join("out");
    ok(&ngnn(&["train", "--config", s(&cfg), "--runs", "1", "--seed", "7", "--out", s(&out)]));
    let run = read_json(&out.join("run_7.json"));
    let agg = read_json(&out.join("aggregate.json"));
    assert_eq!(agg["mean"], run["test_metric"]);
    assert_eq!(agg["std"], 0.0);
    assert_eq!(agg["config_hash"], run["config_hash"]);
    assert_eq!(agg["seeds"], serde_json::json!([7]));
}

#[test]
fn aggregate_matches_per_run_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path(), r#","runs":4"#);
    let out = dir.path().join("out");
    ok(&ngnn(&["train", "--config", s(&cfg), "--out", s(&out), "--threads", "2"]));
    let acc: Vec<f64> = (0..4)
        .map(|i| read_json(&out.join(format!("run_{i}.json")))["test_metric"].as_f64().unwrap())
        .collect();
    let mean = acc.iter().sum::<f64>() / 4.0;
    let var = acc.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / 3.0;
    let agg = read_json(&out.join("aggregate.json"));
    assert!((agg["mean"].as_f64().unwrap() - mean).abs() < 1e-12);
    assert!((agg["std"].as_f64().unwrap() - var.sqrt()).abs() < 1e-12);
}

#[test]
fn config_errors_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    setup(dir.path(), "");
    let cases = [
        (r#"{"dataset":"data","model":{"arch":"sage","hidden_dim":8,"ngnn_position":"hidden","ngnn_spec":"2-relux"}}"#, "model.ngnn_spec"),
        (r#"{"dataset":"data","model":{"arch":"sage","hidden_dim":8},"epochs":3}"#, "unknown field"),
        (r#"{"dataset":"data","model":{"arch":"sage","hidden_dim":8},"runs":0}"#, "runs"),
    ];
    for (body, needle) in cases {
        let cfg = dir.path().join("bad.json");
        fs::write(&cfg, body).unwrap();
        let o = ngnn(&["train", "--config", s(&cfg), "--out", s(&dir.path().join("o"))]);
        assert_eq!(o.status.code(), Some(2), "{body}");
        let err = String::from_utf8_lossy(&o.stderr);
        assert!(err.contains(needle), "{err}");
    }
    let o = ngnn(&["noise-sweep", "--config", s(&dir.path().join("cfg.json"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn paramcount_from_flags() {
    for (h, k, want) in [(256, 2, 338_479), (512, 4, 1_726_511)] {
        let spec = format!("{k}-relu");
        let text = ok(&ngnn(&[
            "paramcount", "--arch", "sage", "--in-dim", "100", "--hidden", &h.to_string(), "--out-dim", "47", "--spec",
            &spec,
        ]));
        let v: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["total"], want);
        let sum: u64 = v["layers"]
            .as_array()
            .unwrap()
            .iter()
            .map(|l| l["gnn"].as_u64().unwrap() + l["ngnn"].as_u64().unwrap())
            .sum();
        assert_eq!(sum, want);
    }
}

#[test]
fn gen_synth_matches_library_and_warns() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("d");
    let o = ngnn(&[
        "gen-synth", "--nodes", "100", "--classes", "2", "--dim", "4", "--p-in", "0.01", "--p-out", "0.05", "--seed",
        "4", "--out", s(&out),
    ]);
    ok(&o);
    assert!(String::from_utf8_lossy(&o.stderr).contains("warning"));
    let spec = SbmSpec {
        seed: 4,
        ..SbmSpec::new(100, 2, 4, 0.01, 0.05)
    };
    assert_eq!(NodeDataset::load(&out).unwrap(), generate_sbm(&spec).unwrap());
}

#[test]
fn sweeps_leave_dataset_files_untouched() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(
        dir.path(),
        r#","runs":2,"variants":["baseline","ngnn1"],"sweep":{"axis":"edge_noise","ratios":[0,0.5]}"#,
    );
    let data = dir.path().join("data");
    let before: Vec<Vec<u8>> = ["edges.txt", "features.bin", "labels.txt", "train.txt"]
        .iter()
        .map(|f| fs::read(data.join(f)).unwrap())
        .collect();
    let out = dir.path().join("out");
    let csv = ok(&ngnn(&["edge-noise-sweep", "--config", s(&cfg), "--out", s(&out)]));
    let after: Vec<Vec<u8>> = ["edges.txt", "features.bin", "labels.txt", "train.txt"]
        .iter()
        .map(|f| fs::read(data.join(f)).unwrap())
        .collect();
    assert_eq!(before, after);
    assert!(csv.starts_with("sweep_value,mean,std,params,epoch_s"));

    // CSV cells carry the same numbers as the canonical JSON.
    let json = read_json(&out.join("edge_noise_sweep.json"));
    let text = fs::read_to_string(out.join("edge_noise_sweep.csv")).unwrap();
    for (line, row) in text.lines().skip(1).zip(json["rows"].as_array().unwrap()) {
        let cells: Vec<&str> = line.split(',').collect();
        assert_eq!(cells[1].parse::<f64>().unwrap(), row["mean"].as_f64().unwrap());
        assert_eq!(cells[2].parse::<f64>().unwrap(), row["std"].as_f64().unwrap());
        assert_eq!(cells[3].parse::<u64>().unwrap(), row["params"].as_u64().unwrap());
    }
    assert!(out.join("edge_noise_sweep_gaps.csv").exists());
}

#[test]
fn link_prediction_through_cli() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("links");
    ok(&ngnn(&[
        "gen-synth", "--nodes", "120", "--dim", "4", "--p-in", "0.1", "--p-out", "0.01", "--link-valid", "0.1",
        "--link-test", "0.1", "--num-neg", "40", "--out", s(&data),
    ]));
    let cfg = dir.path().join("cfg.json");
    fs::write(
        &cfg,
        r#"{"dataset":"links","task":"link_pred","model":{"arch":"sage","hidden_dim":8},"train":{"epochs":3,"hits_k":10},"runs":1}"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    ok(&ngnn(&["train", "--config", s(&cfg), "--out", s(&out)]));
    assert_eq!(read_json(&out.join("aggregate.json"))["metric"], "hits@10");
}

#[test]
fn shipped_configs_parse_and_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        let cfg = ngnn::experiments::ExperimentConfig::from_json(&fs::read_to_string(&path).unwrap())
            .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        cfg.validate().unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        n += 1;
    }
    assert_eq!(n, 5);
}
