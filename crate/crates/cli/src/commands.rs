use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use bytesgan::checkpoint::{Checkpoint, Model};
use bytesgan::dataset::{load_dataset, make_splits, LabeledPool, SamplePool, TrafficDataset};
use bytesgan::eval::{
    cells_csv, evaluate, experiment1_csv, experiment2_csv, make_synthetic_dataset_with, per_class_csv, run_experiment_1, run_experiment_2, CellResult, EvalReport,
    GridOptions,
};
use bytesgan::exec::Exec;
use bytesgan::pbv::{build_dataset_with, filter_packet, read_capture, to_pbv, Decision, FilterPolicy, Manifest, PBV_LEN};
use bytesgan::training::{self, Snapshot, SnapshotKind, TrainLog, TrainOptions};
use bytesgan::{Error, Result};

use crate::config::RunConfig;
use crate::plot;

pub const CACHE_ENV: &str = "BYTESGAN_CACHE_DIR";

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.to_owned(),
        source: e,
    }
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| io_err(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| io_err(path, e))
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

pub fn preprocess(exec: Exec, manifest: &Path, out: &Path, policy: Option<&Path>, config: Option<&Path>) -> Result<()> {
    let cfg = RunConfig::load(config)?;
    let policy = match policy {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| io_err(p, e))?;
            serde_json::from_str::<FilterPolicy>(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
        }
        None => cfg.filter,
    };
    let manifest = Manifest::load(manifest)?;
    let summary = build_dataset_with(exec, &manifest, &policy, out)?;
    println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
    Ok(())
}

/// Copies the members of `pool` into a standalone dataset.
fn pool_dataset(data: &TrafficDataset, pool: &LabeledPool) -> Result<TrafficDataset> {
    let mut out = TrafficDataset::with_capacity(data.schema().clone(), pool.len());
    for &id in pool.ids() {
        let octets: &[u8; PBV_LEN] = data.octets(id).try_into().expect("stored rows are full length");
        out.push(data.label(id), octets)?;
    }
    Ok(out)
}

struct TrainRun {
    cfg: RunConfig,
    data: Arc<TrafficDataset>,
    out_dir: PathBuf,
}

fn prepare(dataset: &Path, config: Option<&Path>, out_dir: &Path, seed: Option<u64>) -> Result<(TrainRun, bytesgan::dataset::Splits)> {
    let cfg = RunConfig::load(config)?.with_seed(seed);
    let data = Arc::new(load_dataset(dataset)?);
    let splits = make_splits(data.clone(), &cfg.split)?;
    create_dir(out_dir)?;
    write(&out_dir.join("config.resolved.json"), cfg.to_json())?;
    pool_dataset(&data, &splits.test)?.write(out_dir.join("test.pbvd"))?;
    Ok((
        TrainRun {
            cfg,
            data,
            out_dir: out_dir.to_owned(),
        },
        splits,
    ))
}

fn snapshot_sink(out_dir: &Path, schema: &bytesgan::dataset::ClassSchema) -> impl FnMut(SnapshotKind, Snapshot<'_>) -> Result<()> {
    let out_dir = out_dir.to_owned();
    let schema = schema.clone();
    move |kind, snap| {
        let name = match kind {
            SnapshotKind::Periodic { epoch } => format!("checkpoint-epoch{epoch:04}.bsgm"),
            SnapshotKind::Diagnostic { step } => format!("diagnostic-step{step}.bsgm"),
        };
        Checkpoint::from_snapshot(schema.clone(), snap).save(out_dir.join(name))
    }
}

fn finish_training(run: &TrainRun, exec: Exec, checkpoint: Checkpoint, log: &TrainLog, test: &LabeledPool) -> Result<()> {
    let dir = &run.out_dir;
    checkpoint.save(dir.join("model.bsgm"))?;
    log.write_jsonl(dir.join("train_log.jsonl"))?;
    log.write_timing(dir.join("timing.jsonl"))?;
    let mut report = evaluate(exec, &checkpoint, test)?;
    report.metadata.split = Some(run.cfg.split.clone());
    report.metadata.dataset_digest = Some(run.data.digest());
    write_report(&dir.join("report.json"), &report)?;
    println!(
        "{}",
        serde_json::json!({
            "model": dir.join("model.bsgm"),
            "checkpoint_digest": checkpoint.digest(),
            "steps": log.steps().count(),
            "heldout_accuracy": report.accuracy,
        })
    );
    Ok(())
}

pub fn train_sgan(exec: Exec, dataset: &Path, config: Option<&Path>, out_dir: &Path, seed: Option<u64>) -> Result<()> {
    let (run, splits) = prepare(dataset, config, out_dir, seed)?;
    let schema = run.data.schema().clone();
    let mut sink = snapshot_sink(out_dir, &schema);
    let opts = TrainOptions {
        exec,
        heldout: Some(&splits.test),
        sink: Some(&mut sink),
    };
    let out = training::train_sgan(&splits.labeled, &splits.unlabeled, &schema, &run.cfg.sgan, opts)?;
    let checkpoint = Checkpoint {
        schema,
        model: Model::Sgan {
            discriminator: out.discriminator,
            generator: out.generator,
        },
    };
    finish_training(&run, exec, checkpoint, &out.log, &splits.test)
}

pub fn train_cnn(exec: Exec, dataset: &Path, config: Option<&Path>, out_dir: &Path, seed: Option<u64>) -> Result<()> {
    let (run, splits) = prepare(dataset, config, out_dir, seed)?;
    let schema = run.data.schema().clone();
    let mut sink = snapshot_sink(out_dir, &schema);
    let opts = TrainOptions {
        exec,
        heldout: Some(&splits.test),
        sink: Some(&mut sink),
    };
    let out = training::train_cnn(&splits.labeled, &schema, &run.cfg.cnn, opts)?;
    let checkpoint = Checkpoint {
        schema,
        model: Model::Cnn(out.cnn),
    };
    finish_training(&run, exec, checkpoint, &out.log, &splits.test)
}

/// Writes the JSON report plus `<stem>.per_class.csv` and
/// `<stem>.confusion.csv` beside it.
fn write_report(path: &Path, report: &EvalReport) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    write(path, report.to_json())?;
    write(&sibling(path, ".per_class.csv"), report.per_class_csv())?;
    write(&sibling(path, ".confusion.csv"), report.confusion_csv())
}

pub fn eval(exec: Exec, model: &Path, dataset: &Path, report_path: &Path) -> Result<()> {
    let checkpoint = Checkpoint::load(model)?;
    let data = Arc::new(load_dataset(dataset)?);
    let pool = LabeledPool::all(data.clone());
    let mut report = evaluate(exec, &checkpoint, &pool)?;
    report.metadata.dataset_digest = Some(data.digest());
    write_report(report_path, &report)?;
    println!("{}", serde_json::json!({ "samples": report.samples, "accuracy": report.accuracy }));
    Ok(())
}

pub fn classify(exec: Exec, model: &Path, pcap: &Path, out: &Path, config: Option<&Path>) -> Result<()> {
    let cfg = RunConfig::load(config)?;
    let checkpoint = Checkpoint::load(model)?;
    let classifier = checkpoint.classifier();
    let mut kept = Vec::new();
    let mut vectors = Vec::new();
    let mut drops = String::from("packet,reason\n");
    let mut dropped = 0usize;
    for (ordinal, pkt) in read_capture(pcap)?.enumerate() {
        let pkt = pkt?;
        match filter_packet(&pkt, &cfg.filter) {
            Decision::Keep => {
                vectors.extend_from_slice(to_pbv(&pkt, &cfg.filter)?.values());
                kept.push(ordinal);
            }
            Decision::Drop(reason) => {
                writeln!(drops, "{ordinal},{reason}").unwrap();
                dropped += 1;
            }
        }
    }
    let chunk = 64;
    let probs: Vec<Vec<f64>> = exec
        .map_chunks(kept.len(), chunk, |r| classifier.probs(&vectors[r.start * PBV_LEN..r.end * PBV_LEN], r.len()))
        .concat();
    let mut rows = String::from("packet,class,confidence\n");
    for (ordinal, p) in kept.iter().zip(&probs) {
        let best = bytesgan::eval::argmax(p);
        writeln!(rows, "{ordinal},{},{}", csv_field(checkpoint.schema.name(best as u16)), p[best]).unwrap();
    }
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    write(out, rows)?;
    write(&sibling(out, ".drops.csv"), drops)?;
    println!("{}", serde_json::json!({ "classified": kept.len(), "dropped": dropped }));
    Ok(())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Grid {
    Exp1,
    Exp2,
    Synthetic,
}

fn cell_label(c: &CellResult) -> String {
    format!("{}-l{}-u{}-s{}", c.arm.name(), c.labeled_per_class, c.unlabeled_per_class, c.seed)
}

fn write_cells(out_dir: &Path, prefix: &str, cells: &[CellResult]) -> Result<()> {
    write(&out_dir.join(format!("{prefix}cells.csv")), cells_csv(cells))?;
    write(&out_dir.join(format!("{prefix}per_class.csv")), per_class_csv(cells))?;
    let plots = out_dir.join("plots");
    create_dir(&plots)?;
    let mut losses = String::from("cell,step,loss,generator_loss\n");
    for c in cells {
        let label = cell_label(c);
        for p in &c.losses {
            let g = p.generator.map(|g| g.to_string()).unwrap_or_default();
            writeln!(losses, "{label},{},{},{g}", p.step, p.loss).unwrap();
        }
        plot::loss_curve(&plots.join(format!("{prefix}loss-{label}.svg")), &label, &c.losses)?;
    }
    write(&out_dir.join(format!("{prefix}losses.csv")), losses)
}

pub fn experiment(exec: Exec, which: Grid, config: Option<&Path>, out_dir: &Path, dataset: Option<&Path>) -> Result<()> {
    let cfg = RunConfig::load(config)?;
    create_dir(out_dir)?;
    write(&out_dir.join("config.resolved.json"), cfg.to_json())?;
    let cache_dir = std::env::var_os(CACHE_ENV).map(PathBuf::from).unwrap_or_else(|| out_dir.join("cache"));
    let progress = |c: &CellResult, cached: bool| {
        eprintln!("{} {} accuracy={:.4}", if cached { "cached" } else { "trained" }, cell_label(c), c.accuracy);
    };
    let opts = GridOptions {
        exec,
        cache_dir: Some(cache_dir),
        on_cell: Some(&progress),
        artifacts_dir: Some(out_dir.join("cells")),
    };
    let load = || -> Result<Arc<TrafficDataset>> {
        let path = dataset.ok_or_else(|| Error::Config("exp1 and exp2 need --dataset".into()))?;
        Ok(Arc::new(load_dataset(path)?))
    };
    match which {
        Grid::Exp1 => {
            let (rows, cells) = run_experiment_1(load()?, &cfg.experiment1, &opts)?;
            write(&out_dir.join("experiment1.csv"), experiment1_csv(&rows))?;
            write_cells(out_dir, "", &cells)
        }
        Grid::Exp2 => {
            let (rows, cells) = run_experiment_2(load()?, &cfg.experiment2, &opts)?;
            write(&out_dir.join("experiment2.csv"), experiment2_csv(&rows))?;
            write_cells(out_dir, "", &cells)
        }
        Grid::Synthetic => {
            let syn = &cfg.synthetic;
            let data = Arc::new(make_synthetic_dataset_with(&syn.dataset)?);
            data.write(out_dir.join("synthetic.pbvd"))?;
            if !syn.experiment1.unlabeled_counts.is_empty() && !syn.experiment1.seeds.is_empty() {
                let (rows, cells) = run_experiment_1(data.clone(), &syn.experiment1, &opts)?;
                write(&out_dir.join("experiment1.csv"), experiment1_csv(&rows))?;
                write_cells(out_dir, "exp1-", &cells)?;
            }
            if !syn.experiment2.labeled_counts.is_empty() && !syn.experiment2.seeds.is_empty() {
                let (rows, cells) = run_experiment_2(data, &syn.experiment2, &opts)?;
                write(&out_dir.join("experiment2.csv"), experiment2_csv(&rows))?;
                write_cells(out_dir, "exp2-", &cells)?;
            }
            Ok(())
        }
    }
}
