//! Experiment grids over (count, seed) cells.
//!
//! Cells are independent and may run in parallel; tables are assembled in
//! grid order. With a cache directory, every finished cell is stored as
//! JSON under a key derived from its inputs, and a rerun loads it instead
//! of training again.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::metrics::csv_field;
use super::{evaluate, EvalReport, ReportMeta};
use crate::checkpoint::{Checkpoint, Model};
use crate::dataset::{make_splits, SplitSpec, TrafficDataset, UnlabeledCount};
use crate::error::{Error, Result};
use crate::exec::Exec;
use super::synthetic::SyntheticSpec;
use crate::training::{train_cnn, train_sgan, CnnTrainConfig, SganTrainConfig, TrainLog, TrainOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Experiment1Config {
    pub labeled_per_class: usize,
    pub unlabeled_counts: Vec<usize>,
    pub test_fraction: f64,
    pub seeds: Vec<u64>,
    pub sgan: SganTrainConfig,
}

impl Default for Experiment1Config {
    fn default() -> Self {
        Self {
            labeled_per_class: 1000,
            unlabeled_counts: vec![4000, 6000, 8000],
            test_fraction: 0.1,
            seeds: vec![0],
            sgan: SganTrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Experiment2Config {
    pub labeled_counts: Vec<usize>,
    pub unlabeled_per_class: UnlabeledCount,
    pub test_fraction: f64,
    pub seeds: Vec<u64>,
    pub sgan: SganTrainConfig,
    pub cnn: CnnTrainConfig,
}

impl Default for Experiment2Config {
    fn default() -> Self {
        Self {
            labeled_counts: vec![1000, 2000, 3000, 4000],
            unlabeled_per_class: UnlabeledCount::All,
            test_fraction: 0.2,
            seeds: vec![0],
            sgan: SganTrainConfig::default(),
            cnn: CnnTrainConfig::default(),
        }
    }
}

/// Generated corpus plus the two grids run on it. Experiment 1 includes a
/// zero unlabeled count, which trains the same discriminator on the
/// labeled pool alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticBenchmark {
    pub dataset: SyntheticSpec,
    pub experiment1: Experiment1Config,
    pub experiment2: Experiment2Config,
}

impl Default for SyntheticBenchmark {
    fn default() -> Self {
        let seeds = vec![0, 1, 2, 3, 4];
        let sgan = SganTrainConfig {
            batch_size: 32,
            epochs: 1000,
            max_steps: Some(600),
            ..SganTrainConfig::default()
        };
        Self {
            dataset: SyntheticSpec {
                per_class: 2200,
                modes_per_class: 8,
                mode_divergence: 0.8,
                motif_noise: 0.2,
                alphabet_weight: 0.0,
                length_jitter: 0,
                ..SyntheticSpec::default()
            },
            experiment1: Experiment1Config {
                labeled_per_class: 20,
                unlabeled_counts: vec![0, 500, 2000],
                test_fraction: 0.05,
                seeds: seeds.clone(),
                sgan: sgan.clone(),
            },
            experiment2: Experiment2Config {
                labeled_counts: vec![20],
                unlabeled_per_class: UnlabeledCount::PerClass(2000),
                test_fraction: 0.05,
                seeds,
                sgan,
                cnn: CnnTrainConfig {
                    batch_size: 32,
                    max_steps: Some(150),
                    epochs: 1000,
                    ..CnnTrainConfig::default()
                },
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellArm {
    Sgan,
    Cnn,
}

impl CellArm {
    pub fn name(self) -> &'static str {
        match self {
            CellArm::Sgan => "sgan",
            CellArm::Cnn => "cnn",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossPoint {
    pub step: u64,
    pub loss: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub arm: CellArm,
    pub labeled_per_class: usize,
    pub unlabeled_per_class: UnlabeledCount,
    pub seed: u64,
    pub accuracy: f64,
    pub steps: u64,
    pub checkpoint_digest: String,
    pub report: EvalReport,
    pub losses: Vec<LossPoint>,
}

/// Median and range of a cell statistic across seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub median: f64,
    pub min: f64,
    pub max: f64,
    pub values: Vec<f64>,
}

impl Summary {
    pub fn of(values: Vec<f64>) -> Self {
        let mut s = values.clone();
        s.sort_by(f64::total_cmp);
        let n = s.len();
        let median = match n {
            0 => f64::NAN,
            _ if n % 2 == 1 => s[n / 2],
            _ => (s[n / 2 - 1] + s[n / 2]) / 2.0,
        };
        Self {
            median,
            min: s.first().copied().unwrap_or(f64::NAN),
            max: s.last().copied().unwrap_or(f64::NAN),
            values,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Experiment1Row {
    pub labeled_per_class: usize,
    pub unlabeled_per_class: usize,
    pub accuracy: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Experiment2Row {
    pub labeled_per_class: usize,
    pub sgan: Summary,
    pub cnn: Summary,
    /// Median over seeds of the per-seed SGAN minus CNN accuracy.
    pub gap: Summary,
}

#[derive(Default)]
pub struct GridOptions<'a> {
    pub exec: Exec,
    pub cache_dir: Option<PathBuf>,
    /// Called once per finished (or cache-loaded) cell.
    pub on_cell: Option<&'a (dyn Fn(&CellResult, bool) + Sync)>,
    /// Directory receiving each cell's checkpoint and train log.
    pub artifacts_dir: Option<PathBuf>,
}

struct Cell {
    arm: CellArm,
    split: SplitSpec,
    sgan: SganTrainConfig,
    cnn: CnnTrainConfig,
}

impl Cell {
    fn key(&self, dataset_digest: &str) -> String {
        let body = serde_json::json!({
            "dataset": dataset_digest,
            "arm": self.arm,
            "split": self.split,
            "train": match self.arm {
                CellArm::Sgan => serde_json::to_value(&self.sgan),
                CellArm::Cnn => serde_json::to_value(&self.cnn),
            }.expect("config serializes"),
        });
        hex::encode(&Sha256::digest(body.to_string().as_bytes())[..12])
    }

    fn label(&self) -> String {
        format!("{}-l{}-u{}-s{}", self.arm.name(), self.split.labeled_per_class, self.split.unlabeled_per_class, self.split.seed)
    }
}

fn losses(log: &TrainLog) -> Vec<LossPoint> {
    log.steps()
        .map(|s| LossPoint {
            step: s.step,
            loss: s.loss,
            generator: s.generator,
        })
        .collect()
}

fn run_cell(exec: Exec, data: &Arc<TrafficDataset>, digest: &str, cell: &Cell, artifacts: Option<&Path>) -> Result<CellResult> {
    let splits = make_splits(data.clone(), &cell.split)?;
    let schema = data.schema().clone();
    let opts = TrainOptions {
        exec,
        ..TrainOptions::default()
    };
    let (checkpoint, log, seed) = match cell.arm {
        CellArm::Sgan => {
            let out = train_sgan(&splits.labeled, &splits.unlabeled, &schema, &cell.sgan, opts)?;
            let model = Model::Sgan {
                discriminator: out.discriminator,
                generator: out.generator,
            };
            (Checkpoint { schema, model }, out.log, cell.sgan.seed)
        }
        CellArm::Cnn => {
            let out = train_cnn(&splits.labeled, &schema, &cell.cnn, opts)?;
            (
                Checkpoint {
                    schema,
                    model: Model::Cnn(out.cnn),
                },
                out.log,
                cell.cnn.seed,
            )
        }
    };
    let mut report = evaluate(exec, &checkpoint, &splits.test)?;
    report.metadata = ReportMeta {
        seed: Some(seed),
        split: Some(cell.split.clone()),
        dataset_digest: Some(digest.to_owned()),
        ..report.metadata
    };
    if let Some(dir) = artifacts {
        let stem = dir.join(cell.label());
        checkpoint.save(stem.with_extension("bsgm"))?;
        log.write_jsonl(stem.with_extension("jsonl"))?;
    }
    Ok(CellResult {
        arm: cell.arm,
        labeled_per_class: cell.split.labeled_per_class,
        unlabeled_per_class: cell.split.unlabeled_per_class,
        seed,
        accuracy: report.accuracy,
        steps: log.steps().count() as u64,
        checkpoint_digest: checkpoint.digest(),
        report,
        losses: losses(&log),
    })
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn run_cells(data: &Arc<TrafficDataset>, cells: &[Cell], opts: &GridOptions<'_>) -> Result<Vec<CellResult>> {
    let digest = data.digest();
    for dir in [&opts.cache_dir, &opts.artifacts_dir].into_iter().flatten() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let results = opts.exec.map(cells.len(), |i| -> Result<CellResult> {
        let cell = &cells[i];
        let cached = opts.cache_dir.as_ref().map(|d| d.join(format!("cell-{}-{}.json", cell.label(), cell.key(&digest))));
        if let Some(path) = cached.as_ref().filter(|p| p.exists()) {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let r: CellResult = serde_json::from_str(&text).map_err(|e| Error::format(path.display().to_string(), e.to_string()))?;
            if let Some(cb) = opts.on_cell {
                cb(&r, true);
            }
            return Ok(r);
        }
        let r = run_cell(opts.exec, data, &digest, cell, opts.artifacts_dir.as_deref())?;
        if let Some(path) = &cached {
            write_atomic(path, serde_json::to_string(&r).expect("cell serializes").as_bytes())?;
        }
        if let Some(cb) = opts.on_cell {
            cb(&r, false);
        }
        Ok(r)
    });
    results.into_iter().collect()
}

/// Accuracy as a function of the unlabeled pool size at a fixed labeled
/// count. A count of 0 trains the discriminator on labels alone.
pub fn run_experiment_1(data: Arc<TrafficDataset>, cfg: &Experiment1Config, opts: &GridOptions<'_>) -> Result<(Vec<Experiment1Row>, Vec<CellResult>)> {
    if cfg.seeds.is_empty() || cfg.unlabeled_counts.is_empty() {
        return Err(Error::Config("experiment grid needs at least one count and one seed".into()));
    }
    let mut cells = Vec::new();
    for &u in &cfg.unlabeled_counts {
        for &seed in &cfg.seeds {
            cells.push(Cell {
                arm: CellArm::Sgan,
                split: SplitSpec {
                    labeled_per_class: cfg.labeled_per_class,
                    unlabeled_per_class: UnlabeledCount::PerClass(u),
                    test_fraction: cfg.test_fraction,
                    seed,
                },
                sgan: SganTrainConfig { seed, ..cfg.sgan.clone() },
                cnn: CnnTrainConfig::default(),
            });
        }
    }
    let results = run_cells(&data, &cells, opts)?;
    let rows = cfg
        .unlabeled_counts
        .iter()
        .zip(results.chunks(cfg.seeds.len()))
        .map(|(&u, rs)| Experiment1Row {
            labeled_per_class: cfg.labeled_per_class,
            unlabeled_per_class: u,
            accuracy: Summary::of(rs.iter().map(|r| r.accuracy).collect()),
        })
        .collect();
    Ok((rows, results))
}

/// SGAN versus CNN on identical labeled pools, across labeled counts.
pub fn run_experiment_2(data: Arc<TrafficDataset>, cfg: &Experiment2Config, opts: &GridOptions<'_>) -> Result<(Vec<Experiment2Row>, Vec<CellResult>)> {
    if cfg.seeds.is_empty() || cfg.labeled_counts.is_empty() {
        return Err(Error::Config("experiment grid needs at least one count and one seed".into()));
    }
    let mut cells = Vec::new();
    for &l in &cfg.labeled_counts {
        for &seed in &cfg.seeds {
            for arm in [CellArm::Sgan, CellArm::Cnn] {
                let unlabeled = match arm {
                    CellArm::Sgan => cfg.unlabeled_per_class,
                    CellArm::Cnn => UnlabeledCount::PerClass(0),
                };
                cells.push(Cell {
                    arm,
                    split: SplitSpec {
                        labeled_per_class: l,
                        unlabeled_per_class: unlabeled,
                        test_fraction: cfg.test_fraction,
                        seed,
                    },
                    sgan: SganTrainConfig { seed, ..cfg.sgan.clone() },
                    cnn: CnnTrainConfig { seed, ..cfg.cnn.clone() },
                });
            }
        }
    }
    let results = run_cells(&data, &cells, opts)?;
    let rows = cfg
        .labeled_counts
        .iter()
        .zip(results.chunks(2 * cfg.seeds.len()))
        .map(|(&l, rs)| {
            let sgan: Vec<f64> = rs.iter().step_by(2).map(|r| r.accuracy).collect();
            let cnn: Vec<f64> = rs.iter().skip(1).step_by(2).map(|r| r.accuracy).collect();
            let gap = sgan.iter().zip(&cnn).map(|(s, c)| s - c).collect();
            Experiment2Row {
                labeled_per_class: l,
                sgan: Summary::of(sgan),
                cnn: Summary::of(cnn),
                gap: Summary::of(gap),
            }
        })
        .collect();
    Ok((rows, results))
}

/// Columns `labeled,unlabeled,accuracy,...`; accuracy is the median over
/// seeds.
pub fn experiment1_csv(rows: &[Experiment1Row]) -> String {
    let mut out = String::from("labeled,unlabeled,accuracy,accuracy_min,accuracy_max,seeds\n");
    for r in rows {
        writeln!(out, "{},{},{},{},{},{}", r.labeled_per_class, r.unlabeled_per_class, r.accuracy.median, r.accuracy.min, r.accuracy.max, r.accuracy.values.len()).unwrap();
    }
    out
}

pub fn experiment2_csv(rows: &[Experiment2Row]) -> String {
    let mut out = String::from("labeled,sgan_accuracy,cnn_accuracy,gap,sgan_min,sgan_max,cnn_min,cnn_max,seeds\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.labeled_per_class,
            r.sgan.median,
            r.cnn.median,
            r.gap.median,
            r.sgan.min,
            r.sgan.max,
            r.cnn.min,
            r.cnn.max,
            r.sgan.values.len()
        )
        .unwrap();
    }
    out
}

/// One row per finished cell.
pub fn cells_csv(cells: &[CellResult]) -> String {
    let mut out = String::from("arm,labeled,unlabeled,seed,accuracy,steps,checkpoint_digest\n");
    for c in cells {
        writeln!(out, "{},{},{},{},{},{},{}", c.arm.name(), c.labeled_per_class, c.unlabeled_per_class, c.seed, c.accuracy, c.steps, c.checkpoint_digest).unwrap();
    }
    out
}

/// Long-format per-class precision, recall and F1 for every cell.
pub fn per_class_csv(cells: &[CellResult]) -> String {
    let mut out = String::from("arm,labeled,unlabeled,seed,class,precision,recall,f1\n");
    for c in cells {
        for m in &c.report.classes {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                c.arm.name(),
                c.labeled_per_class,
                c.unlabeled_per_class,
                c.seed,
                csv_field(&m.class),
                m.precision,
                m.recall,
                m.f1
            )
            .unwrap();
        }
    }
    out
}
