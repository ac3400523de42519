use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::dataset::{ClassSchema, SplitSpec};
use crate::error::{Error, Result};

/// Counts indexed `[true][predicted]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    n: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(n: usize) -> Self {
        Self { n, counts: vec![0; n * n] }
    }

    pub fn from_rows(rows: Vec<Vec<u64>>) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Contract("confusion matrix must be square".into()));
        }
        Ok(Self {
            n,
            counts: rows.concat(),
        })
    }

    pub fn from_predictions(n: usize, truth: &[usize], predicted: &[usize]) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::Contract(format!("{} labels but {} predictions", truth.len(), predicted.len())));
        }
        let mut m = Self::new(n);
        for (&t, &p) in truth.iter().zip(predicted) {
            m.add(t, p)?;
        }
        Ok(m)
    }

    pub fn add(&mut self, truth: usize, predicted: usize) -> Result<()> {
        if truth >= self.n || predicted >= self.n {
            return Err(Error::Contract(format!("class pair ({truth}, {predicted}) outside {} classes", self.n)));
        }
        self.counts[truth * self.n + predicted] += 1;
        Ok(())
    }

    pub fn num_classes(&self) -> usize {
        self.n
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.n + predicted]
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.counts.chunks(self.n.max(1)).map(<[u64]>::to_vec).collect()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.trace(), self.total()).0
    }

    fn row_sum(&self, c: usize) -> u64 {
        (0..self.n).map(|p| self.get(c, p)).sum()
    }

    fn col_sum(&self, c: usize) -> u64 {
        (0..self.n).map(|t| self.get(t, c)).sum()
    }

    /// Micro-averaged recall: pooled true positives over pooled actuals.
    pub fn micro_recall(&self) -> f64 {
        let tp: u64 = (0..self.n).map(|c| self.get(c, c)).sum();
        let actual: u64 = (0..self.n).map(|c| self.row_sum(c)).sum();
        ratio(tp, actual).0
    }

    pub fn class_metrics(&self, c: usize) -> ClassMetrics {
        let tp = self.get(c, c);
        let (precision, precision_undefined) = ratio(tp, self.col_sum(c));
        let (recall, recall_undefined) = ratio(tp, self.row_sum(c));
        let (f1, f1_undefined) = if precision + recall == 0.0 {
            (0.0, true)
        } else {
            (2.0 * precision * recall / (precision + recall), false)
        };
        ClassMetrics {
            class: String::new(),
            precision,
            recall,
            f1,
            support: self.row_sum(c),
            predicted: self.col_sum(c),
            precision_undefined,
            recall_undefined,
            f1_undefined,
        }
    }
}

/// `a / b`, with 0/0 reported as 0 and flagged.
fn ratio(a: u64, b: u64) -> (f64, bool) {
    if b == 0 {
        (0.0, true)
    } else {
        (a as f64 / b as f64, false)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// True samples of the class.
    pub support: u64,
    /// Samples predicted as the class.
    pub predicted: u64,
    /// Set when the value is a 0/0 reported as 0.
    pub precision_undefined: bool,
    pub recall_undefined: bool,
    pub f1_undefined: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub architecture: String,
    pub fingerprint: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<SplitSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset_digest: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Always measured on held-out samples never seen in training.
    pub evaluated_on: String,
    pub samples: u64,
    pub accuracy: f64,
    pub classes: Vec<ClassMetrics>,
    pub confusion: Vec<Vec<u64>>,
    pub metadata: ReportMeta,
}

impl EvalReport {
    pub fn new(cm: &ConfusionMatrix, schema: &ClassSchema, metadata: ReportMeta) -> Self {
        let classes = (0..cm.num_classes())
            .map(|c| ClassMetrics {
                class: schema.names()[c].clone(),
                ..cm.class_metrics(c)
            })
            .collect();
        Self {
            evaluated_on: "held-out test split".into(),
            samples: cm.total(),
            accuracy: cm.accuracy(),
            classes,
            confusion: cm.rows(),
            metadata,
        }
    }

    pub fn confusion_matrix(&self) -> Result<ConfusionMatrix> {
        ConfusionMatrix::from_rows(self.confusion.clone())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn per_class_csv(&self) -> String {
        let mut out = String::from("class,precision,recall,f1,support,predicted,precision_undefined,recall_undefined,f1_undefined\n");
        for c in &self.classes {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                csv_field(&c.class),
                c.precision,
                c.recall,
                c.f1,
                c.support,
                c.predicted,
                c.precision_undefined,
                c.recall_undefined,
                c.f1_undefined
            )
            .unwrap();
        }
        out
    }

    /// Square matrix with a header row of predicted class names and one row
    /// per true class.
    pub fn confusion_csv(&self) -> String {
        let mut out = String::from("true\\predicted");
        for c in &self.classes {
            out.push(',');
            out.push_str(&csv_field(&c.class));
        }
        out.push('\n');
        for (c, row) in self.classes.iter().zip(&self.confusion) {
            out.push_str(&csv_field(&c.class));
            for v in row {
                write!(out, ",{v}").unwrap();
            }
            out.push('\n');
        }
        out
    }
}

pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_computed_two_class_matrix() {
        let m = ConfusionMatrix::from_rows(vec![vec![8, 2], vec![3, 7]]).unwrap();
        assert_eq!(m.accuracy(), 0.75);
        let c0 = m.class_metrics(0);
        assert!((c0.precision - 8.0 / 11.0).abs() < 1e-15);
        assert!((c0.recall - 0.8).abs() < 1e-15);
        let c1 = m.class_metrics(1);
        assert!((c1.precision - 7.0 / 9.0).abs() < 1e-15);
        assert!((c1.recall - 0.7).abs() < 1e-15);
    }

    #[test]
    fn degenerate_predictor_flags_zero_over_zero() {
        let m = ConfusionMatrix::from_predictions(2, &[0, 0, 1, 1], &[0, 0, 0, 0]).unwrap();
        assert_eq!(m.accuracy(), 0.5);
        assert_eq!(m.class_metrics(0).recall, 1.0);
        let c1 = m.class_metrics(1);
        assert_eq!((c1.recall, c1.precision, c1.f1), (0.0, 0.0, 0.0));
        assert!(c1.precision_undefined && !c1.recall_undefined && c1.f1_undefined);
    }

    #[test]
    fn csv_quotes_awkward_names() {
        assert_eq!(csv_field("a,b"), "\"a,b\"");
        assert_eq!(csv_field("plain"), "plain");
    }
}
