use std::net::Ipv4Addr;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use bytesgan::eval::make_synthetic_dataset;
use bytesgan::pbv::frames::{ethernet, ipv4, udp};
use bytesgan::pbv::{CaptureWriter, Timestamp, LINKTYPE_ETHERNET};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use tempfile::TempDir;

fn bytesgan(args: &[&dyn AsRef<std::ffi::OsStr>]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_bytesgan"));
    for a in args {
        cmd.arg(a);
    }
    cmd.output().expect("binary runs")
}

fn ok(out: &Output) {
    assert!(out.status.success(), "exit {:?}\nstderr: {}", out.status.code(), String::from_utf8_lossy(&out.stderr));
}

fn digest(path: &Path) -> String {
    format!("{:x}", Sha256::digest(std::fs::read(path).unwrap()))
}

fn udp_capture(path: &Path, payload_byte: u8, n: usize) {
    let mut w = CaptureWriter::create(path, LINKTYPE_ETHERNET).unwrap();
    for i in 0..n {
        let payload = vec![payload_byte.wrapping_add(i as u8); 40 + i];
        let frame = ethernet(0x0800, &ipv4(Ipv4Addr::new(10, 0, 0, 1), Ipv4Addr::new(10, 0, 0, 2), 17, 64, &udp(5000, 443, &payload)));
        w.write_packet(Timestamp { secs: i as u32, nanos: 0 }, &frame).unwrap();
    }
    w.finish().unwrap();
}

fn arp_capture(path: &Path, n: usize) {
    let mut w = CaptureWriter::create(path, LINKTYPE_ETHERNET).unwrap();
    for i in 0..n {
        w.write_packet(Timestamp { secs: i as u32, nanos: 0 }, &ethernet(0x0806, &[0u8; 28])).unwrap();
    }
    w.finish().unwrap();
}

fn write_json(path: &Path, v: &Value) -> PathBuf {
    std::fs::write(path, serde_json::to_string_pretty(v).unwrap()).unwrap();
    path.to_owned()
}

fn small_config(dir: &Path) -> PathBuf {
    write_json(
        &dir.join("config.json"),
        &json!({
            "split": { "labeled_per_class": 4, "unlabeled_per_class": "all", "test_fraction": 0.25, "seed": 0 },
            "sgan": { "batch_size": 8, "micro_batch": 4, "epochs": 5, "checkpoint_every": 5 },
            "cnn": { "batch_size": 8, "micro_batch": 4, "epochs": 2 },
        }),
    )
}

/// Synthetic dataset file plus a trained SGAN run directory.
fn trained(dir: &Path) -> (PathBuf, PathBuf) {
    let data = dir.join("synthetic.pbvd");
    make_synthetic_dataset(3, 20, 1).unwrap().write(&data).unwrap();
    let run = dir.join("run");
    let cfg = small_config(dir);
    ok(&bytesgan(&[&"train", &"sgan", &"--dataset", &data, &"--config", &cfg, &"--out-dir", &run]));
    (data, run)
}

#[test]
fn preprocess_builds_a_dataset_from_two_captures() {
    let dir = TempDir::new().unwrap();
    udp_capture(&dir.path().join("a.pcap"), 1, 5);
    udp_capture(&dir.path().join("b.pcap"), 100, 7);
    let manifest = write_json(
        &dir.path().join("manifest.json"),
        &json!({ "classes": ["alpha", "beta"], "entries": [ {"path": "a.pcap", "label": "alpha"}, {"path": "b.pcap", "label": "beta"} ] }),
    );
    let out1 = dir.path().join("one.pbvd");
    let out2 = dir.path().join("two.pbvd");
    let run = bytesgan(&[&"preprocess", &"--manifest", &manifest, &"--out", &out1]);
    ok(&run);
    let summary: Value = serde_json::from_slice(&run.stdout).unwrap();
    assert!(summary.is_object());
    ok(&bytesgan(&[&"preprocess", &"--manifest", &manifest, &"--out", &out2]));
    assert_eq!(digest(&out1), digest(&out2));
    let data = bytesgan::dataset::load_dataset(&out1).unwrap();
    assert_eq!(data.len(), 12);
}

#[test]
fn preprocess_reports_a_missing_capture_by_path() {
    let dir = TempDir::new().unwrap();
    let manifest = write_json(
        &dir.path().join("manifest.json"),
        &json!({ "classes": ["alpha", "beta"], "entries": [ {"path": "nowhere.pcap", "label": "alpha"} ] }),
    );
    let out = bytesgan(&[&"preprocess", &"--manifest", &manifest, &"--out", &dir.path().join("x.pbvd")]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nowhere.pcap"));
}

#[test]
fn train_writes_checkpoints_and_a_parseable_log() {
    let dir = TempDir::new().unwrap();
    let (_, run) = trained(dir.path());
    for f in ["model.bsgm", "checkpoint-epoch0004.bsgm", "train_log.jsonl", "timing.jsonl", "report.json", "config.resolved.json", "test.pbvd"] {
        assert!(run.join(f).exists(), "{f} missing");
    }
    let log = std::fs::read_to_string(run.join("train_log.jsonl")).unwrap();
    assert!(log.lines().count() > 0);
    for line in log.lines() {
        serde_json::from_str::<Value>(line).unwrap();
    }
}

#[test]
fn train_with_a_fixed_seed_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("d.pbvd");
    make_synthetic_dataset(3, 20, 2).unwrap().write(&data).unwrap();
    let cfg = small_config(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        ok(&bytesgan(&[&"--jobs", &"1", &"train", &"cnn", &"--dataset", &data, &"--config", &cfg, &"--out-dir", out, &"--seed", &"7"]));
    }
    for f in ["model.bsgm", "train_log.jsonl", "report.json"] {
        assert_eq!(digest(&a.join(f)), digest(&b.join(f)), "{f}");
    }
}

#[test]
fn train_on_a_missing_dataset_exits_with_io_code() {
    let dir = TempDir::new().unwrap();
    let out = bytesgan(&[&"train", &"sgan", &"--dataset", &dir.path().join("absent.pbvd"), &"--out-dir", &dir.path().join("o")]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn eval_classify_and_schema_checks() {
    let dir = TempDir::new().unwrap();
    let (_, run) = trained(dir.path());
    let model = run.join("model.bsgm");

    let report = dir.path().join("eval/report.json");
    ok(&bytesgan(&[&"eval", &"--model", &model, &"--dataset", &run.join("test.pbvd"), &"--report", &report]));
    let r: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    let acc = r["accuracy"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc));
    // accuracy is the confusion trace over its total
    let confusion = std::fs::read_to_string(dir.path().join("eval/report.confusion.csv")).unwrap();
    let (mut diag, mut total) = (0u64, 0u64);
    for (i, line) in confusion.lines().skip(1).enumerate() {
        for (j, v) in line.split(',').skip(1).enumerate() {
            let v: u64 = v.parse().unwrap();
            total += v;
            if i == j {
                diag += v;
            }
        }
    }
    assert!((acc - diag as f64 / total as f64).abs() < 1e-12);

    let other = dir.path().join("four.pbvd");
    make_synthetic_dataset(4, 5, 0).unwrap().write(&other).unwrap();
    let out = bytesgan(&[&"eval", &"--model", &model, &"--dataset", &other, &"--report", &dir.path().join("r2.json")]);
    assert_eq!(out.status.code(), Some(2));

    let pcap = dir.path().join("mixed.pcap");
    udp_capture(&pcap, 9, 6);
    let (p1, p2) = (dir.path().join("p1.csv"), dir.path().join("p2.csv"));
    ok(&bytesgan(&[&"classify", &"--model", &model, &"--pcap", &pcap, &"--out", &p1]));
    ok(&bytesgan(&[&"classify", &"--model", &model, &"--pcap", &pcap, &"--out", &p2]));
    assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    let rows = std::fs::read_to_string(&p1).unwrap();
    assert_eq!(rows.lines().count(), 7);
    for line in rows.lines().skip(1) {
        let conf: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert!((1.0 / 3.0 - 1e-12..=1.0).contains(&conf), "{conf}");
    }

    let arp = dir.path().join("arp.pcap");
    arp_capture(&arp, 4);
    let p = dir.path().join("arp.csv");
    ok(&bytesgan(&[&"classify", &"--model", &model, &"--pcap", &arp, &"--out", &p]));
    assert_eq!(std::fs::read_to_string(&p).unwrap().lines().count(), 1);
    let drops = std::fs::read_to_string(dir.path().join("arp.drops.csv")).unwrap();
    assert_eq!(drops.lines().count(), 5);
}

#[test]
fn zero_jobs_is_a_configuration_error() {
    let dir = TempDir::new().unwrap();
    let out = bytesgan(&[&"--jobs", &"0", &"train", &"sgan", &"--dataset", &dir.path().join("x"), &"--out-dir", &dir.path().join("o")]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn synthetic_grid_summarizes_and_resumes_from_cache() {
    let dir = TempDir::new().unwrap();
    let cfg = write_json(
        &dir.path().join("grid.json"),
        &json!({ "synthetic": {
            "dataset": { "n_classes": 3, "per_class": 30 },
            "experiment1": { "unlabeled_counts": [], "seeds": [] },
            "experiment2": {
                "labeled_counts": [2, 4], "seeds": [0, 1], "unlabeled_per_class": 10, "test_fraction": 0.2,
                "sgan": { "batch_size": 8, "micro_batch": 4, "epochs": 1 },
                "cnn": { "batch_size": 8, "micro_batch": 4, "epochs": 1 },
            },
        }}),
    );
    let out_dir = dir.path().join("grid");
    let first = bytesgan(&[&"experiment", &"synthetic", &"--config", &cfg, &"--out-dir", &out_dir]);
    ok(&first);
    let summary = std::fs::read_to_string(out_dir.join("experiment2.csv")).unwrap();
    assert!(summary.starts_with("labeled,sgan_accuracy,cnn_accuracy,gap"));
    assert_eq!(summary.lines().count(), 3);
    for f in ["exp2-cells.csv", "exp2-per_class.csv", "exp2-losses.csv"] {
        assert!(out_dir.join(f).exists(), "{f} missing");
    }
    let trained = String::from_utf8_lossy(&first.stderr).lines().filter(|l| l.starts_with("trained")).count();
    assert_eq!(trained, 8);
    let svgs = std::fs::read_dir(out_dir.join("plots")).unwrap().count();
    assert_eq!(svgs, 8);

    // lose one cell as an interrupted run would, then resume
    let cache = out_dir.join("cache");
    let victim = std::fs::read_dir(&cache).unwrap().map(|e| e.unwrap().path()).find(|p| p.to_string_lossy().contains("sgan")).unwrap();
    std::fs::remove_file(victim).unwrap();
    let second = bytesgan(&[&"experiment", &"synthetic", &"--config", &cfg, &"--out-dir", &out_dir]);
    ok(&second);
    let err = String::from_utf8_lossy(&second.stderr);
    assert_eq!(err.lines().filter(|l| l.starts_with("cached")).count(), 7);
    assert_eq!(err.lines().filter(|l| l.starts_with("trained")).count(), 1);
    assert_eq!(std::fs::read_to_string(out_dir.join("experiment2.csv")).unwrap(), summary);
}
