use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use evgaze::io::{parse_label_csv, parse_prediction_csv, write_label_csv};
use evgaze::metrics::{LabelRecord, LabelSeries};
use evgaze::nn::init::representative_model;
use evgaze::nn::weights::{encode_weights, save_weights};
use evgaze::tensor::decode_eett;
use serde_json::{json, Value};
use tempfile::TempDir;

fn evgaze(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut c = Command::new(env!("CARGO_BIN_EXE_evgaze"));
    c.args(args).env_remove("EVGAZE_THREADS");
    for (k, v) in env {
        c.env(k, v);
    }
    c.output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

/// Value of `key=value` in a command's stdout.
fn field(o: &Output, key: &str) -> f64 {
    stdout(o)
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("no {key} in {}", stdout(o)))
        .parse()
        .unwrap()
}

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new() -> Self {
        Fixture {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn config(&self, name: &str, v: Value) -> PathBuf {
        let p = self.path(name);
        std::fs::write(&p, serde_json::to_string_pretty(&v).unwrap()).unwrap();
        p
    }

    fn run(&self, cmd: &str, cfg: &Path, extra: &[&str]) -> Output {
        let mut args = vec![cmd, "--config", cfg.to_str().unwrap()];
        args.extend_from_slice(extra);
        evgaze(&args, &[])
    }

    fn read(&self, name: &str) -> String {
        std::fs::read_to_string(self.path(name)).unwrap()
    }
}

/// A small pipeline: 64x48 sensor, pupil radius 6, 10 ms windows.
fn small_pipeline(kind: &str, duration_s: f64) -> Value {
    json!({
        "version": 1,
        "seed": 3,
        "sensor": {"width": 64, "height": 48},
        "generate": {
            "trajectory": {"kind": kind, "duration_s": duration_s, "amplitude_px": 8, "frequency_hz": 1},
            "scene": {"pupil_radius_px": 6},
            "events": "events.csv",
            "labels": "labels.csv"
        },
        "represent": {
            "events": "events.csv",
            "out_dir": "tensors",
            "window_us": 10000,
            "downsample": [4, 4],
            "representation": {"kind": "causal_event_volume", "bins": 1, "polarity": "two_channel"}
        },
        "track": {"events": "events.csv", "labels": "labels.csv", "predictions": "pred.csv"},
        "eval": {"predictions": "pred.csv", "labels": "labels.csv", "report": "report.json"}
    })
}

#[test]
fn generate_writes_labels_on_the_rate_grid() {
    let f = Fixture::new();
    let cfg = f.config("c.json", small_pipeline("fixation", 1.0));
    let out = f.run("generate", &cfg, &[]);
    assert_eq!(code(&out), 0, "{out:?}");
    let labels = parse_label_csv(&f.read("labels.csv"), 100.0).unwrap();
    assert_eq!(labels.len(), 100);
    assert_eq!(labels.records()[99].t, 990_000);
    assert_eq!(field(&out, "events"), 0.0);
}

#[test]
fn generate_is_deterministic_and_seeded() {
    let f = Fixture::new();
    let cfg = f.config("c.json", small_pipeline("random_walk", 0.5));
    assert_eq!(code(&f.run("generate", &cfg, &[])), 0);
    let (e1, l1) = (f.read("events.csv"), f.read("labels.csv"));
    assert_eq!(code(&f.run("generate", &cfg, &[])), 0);
    assert_eq!((f.read("events.csv"), f.read("labels.csv")), (e1.clone(), l1.clone()));
    assert_eq!(code(&f.run("generate", &cfg, &["--seed", "4"])), 0);
    assert_ne!(f.read("labels.csv"), l1);
}

#[test]
fn generate_error_codes() {
    let f = Fixture::new();
    let mut v = small_pipeline("fixation", 0.0);
    let cfg = f.config("zero.json", v.clone());
    assert_eq!(code(&f.run("generate", &cfg, &[])), 1);

    v["generate"]["trajectory"]["duration_s"] = json!(0.1);
    std::fs::write(f.path("blocker"), "").unwrap();
    v["generate"]["events"] = json!("blocker/events.csv");
    let cfg = f.config("unwritable.json", v);
    assert_eq!(code(&f.run("generate", &cfg, &[])), 2);

    let cfg = f.config("unknown.json", json!({"version": 1, "bogus": true}));
    assert_eq!(code(&f.run("generate", &cfg, &[])), 1);
    assert_eq!(code(&evgaze(&["generate", "--config", "/nonexistent/c.json"], &[])), 2);
    assert_eq!(code(&evgaze(&["generate"], &[])), 1);
    assert_eq!(code(&evgaze(&["no-such-command"], &[])), 2);
    let cfg = f.config("ok.json", small_pipeline("fixation", 0.1));
    let bad_env = evgaze(&["generate", "--config", cfg.to_str().unwrap()], &[("EVGAZE_THREADS", "0")]);
    assert_eq!(code(&bad_env), 1);
}

#[test]
fn represent_empty_stream_gives_zero_tensors() {
    let f = Fixture::new();
    std::fs::write(f.path("events.csv"), "t,x,y,p\n").unwrap();
    let mut v = small_pipeline("fixation", 1.0);
    v["represent"]["window_us"] = json!(50_000);
    v["represent"]["duration_us"] = json!(100_000);
    v["represent"]["representation"] = json!({"kind": "direct_binning", "bins": 3, "polarity": "signed"});
    let cfg = f.config("c.json", v);
    let out = f.run("represent", &cfg, &[]);
    assert_eq!(code(&out), 0, "{out:?}");
    assert_eq!(field(&out, "windows"), 2.0);
    for i in 0..2 {
        let t = decode_eett(&std::fs::read(f.path(&format!("tensors/window_{i:06}.eett"))).unwrap()).unwrap();
        assert_eq!(t.dims(), [3, 12, 16]);
        assert!(t.data().iter().all(|&v| v == 0.0));
    }
}

#[test]
fn represent_manifest_records_carry_and_ignores_pool_size() {
    let f = Fixture::new();
    let cfg = f.config("c.json", small_pipeline("smooth_pursuit", 0.3));
    assert_eq!(code(&f.run("generate", &cfg, &[])), 0);
    let arg = ["represent", "--config", cfg.to_str().unwrap()];
    assert_eq!(code(&evgaze(&arg, &[("EVGAZE_THREADS", "1")])), 0);
    let m: Value = serde_json::from_str(&f.read("tensors/manifest.json")).unwrap();
    let windows = m["windows"].as_array().unwrap();
    assert!(windows.len() >= 20);
    assert_eq!(windows[0]["carry_in"], json!(false));
    assert!(windows[1..].iter().all(|w| w["carry_in"] == json!(true)));
    assert!(windows.iter().any(|w| w["carry_out"] == json!(true)));
    let first = std::fs::read(f.path("tensors/window_000005.eett")).unwrap();

    let mut v = small_pipeline("smooth_pursuit", 0.3);
    v["represent"]["representation"] = json!({"kind": "time_surface", "decay": {"kind": "linear"}});
    let ts = f.config("ts.json", v);
    let arg = ["represent", "--config", ts.to_str().unwrap()];
    assert_eq!(code(&evgaze(&arg, &[("EVGAZE_THREADS", "1")])), 0);
    let one = std::fs::read(f.path("tensors/window_000005.eett")).unwrap();
    assert_eq!(code(&evgaze(&arg, &[("EVGAZE_THREADS", "4")])), 0);
    assert_eq!(std::fs::read(f.path("tensors/window_000005.eett")).unwrap(), one);
    assert_ne!(one, first);

    let mut v = small_pipeline("smooth_pursuit", 0.3);
    v["represent"]["stride_us"] = json!(5000);
    let overlapping = f.config("o.json", v);
    assert_eq!(code(&f.run("represent", &overlapping, &[])), 1);
}

fn infer_fixture(f: &Fixture, zero: bool) -> PathBuf {
    let model = representative_model(5);
    let manifest = save_weights(&model, f.dir.path(), "model").unwrap();
    if zero {
        let blob = f.path("model.bin");
        let n = std::fs::metadata(&blob).unwrap().len() as usize;
        std::fs::write(&blob, vec![0u8; n]).unwrap();
    }
    let mut v = small_pipeline("smooth_pursuit", 0.3);
    v["sensor"] = json!({"width": 160, "height": 120});
    v["generate"]["trajectory"]["center"] = json!([80, 60]);
    v["represent"]["downsample"] = json!([2, 2]);
    v["infer"] = json!({
        "manifest": "tensors/manifest.json",
        "weights": manifest.file_name().unwrap().to_str().unwrap(),
        "labels": "labels.csv",
        "predictions": "infer.csv"
    });
    let cfg = f.config("c.json", v);
    assert_eq!(code(&f.run("generate", &cfg, &[])), 0);
    assert_eq!(code(&f.run("represent", &cfg, &[])), 0);
    cfg
}

#[test]
fn infer_zero_model_is_constant() {
    let f = Fixture::new();
    let cfg = infer_fixture(&f, true);
    let out = f.run("infer", &cfg, &[]);
    assert_eq!(code(&out), 0, "{out:?}");
    let rows = parse_prediction_csv(&f.read("infer.csv")).unwrap();
    assert_eq!(rows.len(), 30);
    // the first label precedes every window end
    assert_eq!(rows[0].1.confidence, 0.0);
    assert!(rows[1..].windows(2).all(|w| w[0].1 == w[1].1));
}

#[test]
fn infer_streaming_matches_offline() {
    let f = Fixture::new();
    let cfg = infer_fixture(&f, false);
    let on = f.run("infer", &cfg, &[]);
    assert_eq!(code(&on), 0, "{on:?}");
    assert!(field(&on, "latency_mean_ms") >= 0.0);
    assert!(field(&on, "latency_p99_ms") >= 0.0);
    let a = parse_prediction_csv(&f.read("infer.csv")).unwrap();
    let off = f.run("infer", &cfg, &["--offline"]);
    assert_eq!(code(&off), 0);
    assert!(stdout(&off).contains("mode=offline"));
    let b = parse_prediction_csv(&f.read("infer.csv")).unwrap();
    assert_eq!(a.len(), b.len());
    for ((ta, pa), (tb, pb)) in a.iter().zip(&b) {
        assert_eq!(ta, tb);
        assert!((pa.x - pb.x).abs() <= 1e-6 && (pa.y - pb.y).abs() <= 1e-6);
        assert!((pa.confidence - pb.confidence).abs() <= 1e-6);
    }
}

#[test]
fn infer_rejects_mismatched_frames() {
    let f = Fixture::new();
    let cfg = infer_fixture(&f, false);
    let mut v: Value = serde_json::from_str(&std::fs::read_to_string(&cfg).unwrap()).unwrap();
    v["represent"]["downsample"] = json!([4, 4]);
    let cfg = f.config("c4.json", v);
    assert_eq!(code(&f.run("represent", &cfg, &[])), 0);
    assert_eq!(code(&f.run("infer", &cfg, &[])), 3);
}

#[test]
fn track_fixation_and_empty_streams() {
    let f = Fixture::new();
    let cfg = f.config("c.json", small_pipeline("smooth_pursuit", 0.5));
    assert_eq!(code(&f.run("generate", &cfg, &[])), 0);
    assert_eq!(code(&f.run("track", &cfg, &[])), 0);
    let first = f.read("pred.csv");
    assert_eq!(code(&f.run("track", &cfg, &[])), 0);
    assert_eq!(f.read("pred.csv"), first);

    std::fs::write(f.path("events.csv"), "t,x,y,p\n").unwrap();
    let out = f.run("track", &cfg, &[]);
    assert_eq!(field(&out, "fallback_rows"), 50.0);
    let rows = parse_prediction_csv(&f.read("pred.csv")).unwrap();
    assert!(rows.iter().all(|(_, p)| (p.x, p.y, p.confidence) == (32.0, 24.0, 0.0)));
}

fn labels(rows: &[(f64, f64, bool)]) -> String {
    let recs = rows
        .iter()
        .enumerate()
        .map(|(i, &(x, y, close))| LabelRecord {
            t: i as u64 * 10_000,
            x,
            y,
            close,
        })
        .collect();
    write_label_csv(&LabelSeries::new(recs, 100.0).unwrap())
}

fn eval(f: &Fixture, preds: &str, labels: &str, extra: &[&str]) -> Output {
    std::fs::write(f.path("p.csv"), preds).unwrap();
    std::fs::write(f.path("l.csv"), labels).unwrap();
    let (p, l) = (f.path("p.csv"), f.path("l.csv"));
    let mut args = vec!["eval", "--predictions", p.to_str().unwrap(), "--labels", l.to_str().unwrap()];
    args.extend_from_slice(extra);
    evgaze(&args, &[])
}

#[test]
fn eval_fixtures() {
    let f = Fixture::new();
    let l = labels(&[(10.0, 10.0, false), (20.0, 20.0, true)]);
    let same = "t,x,y,confidence\n0,10,10,1\n10000,20,20,1\n";
    let out = eval(&f, same, &l, &[]);
    assert_eq!(code(&out), 0);
    assert_eq!(field(&out, "p10"), 1.0);
    assert_eq!(field(&out, "count_evaluated"), 2.0);
    let out = eval(&f, same, &l, &["--exclude-blinks"]);
    assert_eq!((field(&out, "count_evaluated"), field(&out, "count_excluded")), (1.0, 1.0));

    let l = labels(&[(10.0, 10.0, false)]);
    let out = eval(&f, "t,x,y,confidence\n0,13,14,1\n", &l, &[]);
    assert_eq!((field(&out, "mean_euclidean"), field(&out, "mean_manhattan")), (5.0, 7.0));
    assert_eq!((field(&out, "p3"), field(&out, "p5")), (0.0, 1.0));

    let out = eval(&f, "t,x,y,confidence\n0,30,10,1\n", &l, &["--min-p10", "0.5"]);
    assert_eq!(code(&out), 5);
    assert!(stdout(&out).contains("status=fail"));
    let report = f.path("r.json");
    let out = eval(&f, same, &labels(&[(10.0, 10.0, false), (20.0, 20.0, false)]), &["--min-p10", "1", "--report", report.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let r: Value = serde_json::from_str(&std::fs::read_to_string(report).unwrap()).unwrap();
    assert_eq!(r["p10"], json!(1.0));

    assert_eq!(code(&eval(&f, "t,x,y,confidence\n", &l, &[])), 4);
    assert_eq!(code(&eval(&f, "t,x,y,confidence\n5,10,10,1\n", &l, &[])), 4);
    assert_eq!(code(&eval(&f, "t,x,y,conf\n0,1,1,1\n", &l, &[])), 2);
}

#[test]
fn augment_is_seeded() {
    let f = Fixture::new();
    let mut v = small_pipeline("smooth_pursuit", 0.3);
    v["augment"] = json!({
        "events": "events.csv",
        "output": "aug.csv",
        "ops": [{"op": "random_affine", "max_rotation": 0.3, "max_translate_px": 3}, {"op": "flip_h"}]
    });
    let cfg = f.config("c.json", v);
    assert_eq!(code(&f.run("generate", &cfg, &[])), 0);
    assert_eq!(code(&f.run("augment", &cfg, &[])), 0);
    let a = f.read("aug.csv");
    assert_eq!(code(&f.run("augment", &cfg, &[])), 0);
    assert_eq!(f.read("aug.csv"), a);
    assert_eq!(code(&f.run("augment", &cfg, &["--seed", "11"])), 0);
    assert_ne!(f.read("aug.csv"), a);
}

#[test]
fn bench_reports_macs() {
    let f = Fixture::new();
    let v = json!({"version": 1, "bench": {"frames": 8, "warmup": 1, "report": "b.json"}});
    let cfg = f.config("c.json", v);
    let out = f.run("bench", &cfg, &[]);
    assert_eq!(code(&out), 0, "{out:?}");
    let strip = |mut r: Value| {
        for b in ["dense", "sparse"] {
            r[b]["mean_ms"] = Value::Null;
            r[b]["p99_ms"] = Value::Null;
        }
        r
    };
    let a: Value = serde_json::from_str(&f.read("b.json")).unwrap();
    assert_eq!(code(&f.run("bench", &cfg, &[])), 0);
    let b: Value = serde_json::from_str(&f.read("b.json")).unwrap();
    assert_eq!(strip(a.clone()), strip(b));
    // stem: 8 output channels x 2 inputs x 3x3 taps x 60x80 sites
    assert_eq!(a["layers"][0]["macs"], json!(8 * 2 * 9 * 60 * 80));
    assert!(a["sparse"]["macs_per_frame"].as_f64().unwrap() <= a["dense"]["macs_per_frame"].as_f64().unwrap());
}

#[test]
fn shipped_weights_match_the_exporter() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/weights");
    let (manifest, blob) = encode_weights(&representative_model(0), "representative.bin").unwrap();
    assert_eq!(std::fs::read(dir.join("representative.bin")).unwrap(), blob);
    assert_eq!(std::fs::read_to_string(dir.join("representative.json")).unwrap(), manifest);
}
