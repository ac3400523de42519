use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::filter::{decide, parse_layers};
use super::{pbv_octets, read_capture, Decision, FilterPolicy, PBV_LEN};
use crate::dataset::{ClassSchema, TrafficDataset};
use crate::error::{Error, Result};
use crate::exec::Exec;

/// JSON manifest naming the class schema and the captures to convert.
///
/// ```json
/// { "classes": ["netflix", "youtube"],
///   "entries": [ {"path": "a.pcap", "label": "netflix"},
///                {"path": "b.pcap", "label": null} ] }
/// ```
/// Relative paths resolve against the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub classes: Vec<String>,
    pub entries: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub path: PathBuf,
    #[serde(default)]
    pub label: Option<String>,
}

impl Manifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m: Manifest = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("manifest {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for e in &mut m.entries {
            if e.path.is_relative() {
                e.path = base.join(&e.path);
            }
        }
        Ok(m)
    }
}

pub type ReasonCounts = BTreeMap<String, u64>;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputSummary {
    pub path: PathBuf,
    pub label: Option<String>,
    pub read: u64,
    pub kept: u64,
    pub dropped: ReasonCounts,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub read: u64,
    pub kept: u64,
    pub dropped: ReasonCounts,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildSummary {
    pub inputs: Vec<InputSummary>,
    /// Keyed by class name; unlabeled inputs are under `"<unlabeled>"`.
    pub per_class: BTreeMap<String, ClassCounts>,
    pub total_read: u64,
    pub total_kept: u64,
    pub total_dropped: u64,
    pub samples_written: u64,
    pub output_digest: String,
}

struct Converted {
    summary: InputSummary,
    octets: Vec<[u8; PBV_LEN]>,
}

fn convert_capture(entry: &ManifestEntry, policy: &FilterPolicy) -> Result<Converted> {
    let mut summary = InputSummary {
        path: entry.path.clone(),
        label: entry.label.clone(),
        ..Default::default()
    };
    let mut octets = Vec::new();
    for pkt in read_capture(&entry.path)? {
        let pkt = pkt?;
        summary.read += 1;
        let decision = match parse_layers(&pkt) {
            Ok(layers) => decide(&layers, policy),
            Err(reason) => Decision::Drop(reason),
        };
        match decision {
            Decision::Keep => {
                octets.push(pbv_octets(&pkt, policy)?);
                summary.kept += 1;
            }
            Decision::Drop(reason) => *summary.dropped.entry(reason.to_string()).or_default() += 1,
        }
    }
    Ok(Converted { summary, octets })
}

/// Converts every capture in `manifest` and writes one PBVD file to `out`.
///
/// Captures are converted in parallel; the dataset is assembled in manifest
/// order, then packet order, so the output bytes depend only on the inputs.
pub fn build_dataset(manifest: &Manifest, policy: &FilterPolicy, out: impl AsRef<Path>) -> Result<BuildSummary> {
    build_dataset_with(Exec::default(), manifest, policy, out)
}

pub fn build_dataset_with(exec: Exec, manifest: &Manifest, policy: &FilterPolicy, out: impl AsRef<Path>) -> Result<BuildSummary> {
    let schema = ClassSchema::new(manifest.classes.clone())?;
    let labels = manifest
        .entries
        .iter()
        .map(|e| match &e.label {
            None => Ok(None),
            Some(name) => schema
                .index_of(name)
                .map(Some)
                .ok_or_else(|| Error::Config(format!("entry {} uses undeclared class `{name}`", e.path.display()))),
        })
        .collect::<Result<Vec<_>>>()?;

    let converted = exec.map(manifest.entries.len(), |i| convert_capture(&manifest.entries[i], policy));

    let mut ds = TrafficDataset::new(schema);
    let mut summary = BuildSummary::default();
    for (conv, label) in converted.into_iter().zip(labels) {
        let conv = conv?;
        for o in &conv.octets {
            ds.push(label, o)?;
        }
        let key = conv.summary.label.clone().unwrap_or_else(|| "<unlabeled>".into());
        let class = summary.per_class.entry(key).or_default();
        class.read += conv.summary.read;
        class.kept += conv.summary.kept;
        for (r, n) in &conv.summary.dropped {
            *class.dropped.entry(r.clone()).or_default() += n;
        }
        summary.total_read += conv.summary.read;
        summary.total_kept += conv.summary.kept;
        summary.total_dropped += conv.summary.dropped.values().sum::<u64>();
        summary.inputs.push(conv.summary);
    }
    debug_assert_eq!(summary.total_kept + summary.total_dropped, summary.total_read);
    summary.samples_written = ds.len() as u64;
    summary.output_digest = ds.digest();
    ds.write(out)?;
    Ok(summary)
}
