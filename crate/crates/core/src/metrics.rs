//! Confusion-matrix accounting and macro-averaged one-vs-rest metrics.
//!
//! Per-class ratios are reduced to one number by an unweighted mean over the
//! classes whose denominator is nonzero. Classes with a zero denominator are
//! left out of that mean and counted in [`MetricReport`]'s `excluded_*`
//! fields. F1 is the harmonic mean of macro precision and macro recall.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{bail, Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    n: usize,
    /// Row-major; rows are true labels, columns predictions.
    counts: Vec<u64>,
}

/// One-vs-rest tallies, one entry per class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OvrCounts {
    pub tp: Vec<u64>,
    pub fp: Vec<u64>,
    pub fn_: Vec<u64>,
    pub tn: Vec<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub accuracy: f64,
    pub overall_accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub excluded_precision: usize,
    pub excluded_recall: usize,
}

impl ConfusionMatrix {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            bail!(Config, "a confusion matrix needs at least one class");
        }
        Ok(Self {
            n,
            counts: vec![0; n * n],
        })
    }

    pub fn from_counts(rows: &[Vec<u64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 || rows.iter().any(|r| r.len() != n) {
            bail!(
                Dimension,
                "confusion counts must be a non-empty square matrix"
            );
        }
        Ok(Self {
            n,
            counts: rows.concat(),
        })
    }

    pub fn classes(&self) -> usize {
        self.n
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.n + predicted]
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.counts.chunks(self.n).map(<[u64]>::to_vec).collect()
    }

    pub fn update(&mut self, truth: usize, predicted: usize) -> Result<()> {
        if truth >= self.n || predicted >= self.n {
            bail!(
                Data,
                "labels ({truth}, {predicted}) out of range for {} classes",
                self.n
            );
        }
        self.counts[truth * self.n + predicted] += 1;
        Ok(())
    }

    /// Elementwise sum, for combining evaluation shards.
    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.n != self.n {
            bail!(
                Dimension,
                "cannot merge {}-class and {}-class matrices",
                self.n,
                other.n
            );
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.n).map(|c| self.get(c, c)).sum()
    }

    pub fn ovr_counts(&self) -> OvrCounts {
        let total = self.total();
        let mut out = OvrCounts {
            tp: vec![0; self.n],
            fp: vec![0; self.n],
            fn_: vec![0; self.n],
            tn: vec![0; self.n],
        };
        for c in 0..self.n {
            let tp = self.get(c, c);
            let col: u64 = (0..self.n).map(|r| self.get(r, c)).sum();
            let row: u64 = (0..self.n).map(|p| self.get(c, p)).sum();
            out.tp[c] = tp;
            out.fp[c] = col - tp;
            out.fn_[c] = row - tp;
            out.tn[c] = total - tp - (col - tp) - (row - tp);
        }
        out
    }

    pub fn report(&self) -> MetricReport {
        let ovr = self.ovr_counts();
        let total = self.total();
        let accuracy = macro_mean((0..self.n).map(|c| (ovr.tp[c] + ovr.tn[c], total))).0;
        let (precision, excluded_precision) =
            macro_mean((0..self.n).map(|c| (ovr.tp[c], ovr.tp[c] + ovr.fp[c])));
        let (recall, excluded_recall) =
            macro_mean((0..self.n).map(|c| (ovr.tp[c], ovr.tp[c] + ovr.fn_[c])));
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        let overall_accuracy = if total > 0 {
            self.trace() as f64 / total as f64
        } else {
            0.0
        };
        MetricReport {
            accuracy,
            overall_accuracy,
            precision,
            recall,
            f1,
            excluded_precision,
            excluded_recall,
        }
    }
}

/// Mean of `num/den` over pairs with `den > 0`; returns the number skipped.
fn macro_mean(pairs: impl Iterator<Item = (u64, u64)>) -> (f64, usize) {
    let (mut sum, mut used, mut skipped) = (0.0, 0usize, 0usize);
    for (num, den) in pairs {
        if den == 0 {
            skipped += 1;
        } else {
            sum += num as f64 / den as f64;
            used += 1;
        }
    }
    let mean = if used == 0 { 0.0 } else { sum / used as f64 };
    (mean, skipped)
}

pub fn accuracy(cm: &ConfusionMatrix) -> f64 {
    cm.report().accuracy
}

pub fn precision(cm: &ConfusionMatrix) -> f64 {
    cm.report().precision
}

pub fn recall(cm: &ConfusionMatrix) -> f64 {
    cm.report().recall
}

pub fn f1(cm: &ConfusionMatrix) -> f64 {
    cm.report().f1
}

pub fn overall_accuracy(cm: &ConfusionMatrix) -> f64 {
    cm.report().overall_accuracy
}

/// One line of a metric CSV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricRow {
    pub epoch: usize,
    pub snr_db: Option<f64>,
    pub report: MetricReport,
}

pub const METRIC_CSV_HEADER: [&str; 7] = [
    "epoch",
    "snr_db",
    "accuracy",
    "overall_accuracy",
    "precision",
    "recall",
    "f1",
];

pub(crate) fn format_snr(snr_db: Option<f64>) -> String {
    snr_db.map_or_else(|| "clean".to_string(), |s| s.to_string())
}

impl MetricRow {
    pub fn fields(&self) -> Vec<String> {
        let r = &self.report;
        vec![
            self.epoch.to_string(),
            format_snr(self.snr_db),
            r.accuracy.to_string(),
            r.overall_accuracy.to_string(),
            r.precision.to_string(),
            r.recall.to_string(),
            r.f1.to_string(),
        ]
    }
}

/// Writes `epoch,snr_db,accuracy,overall_accuracy,precision,recall,f1` rows.
pub fn write_metric_csv<W: Write>(out: W, rows: &[MetricRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(METRIC_CSV_HEADER).map_err(csv_err)?;
    for row in rows {
        w.write_record(row.fields()).map_err(csv_err)?;
    }
    w.flush()
        .map_err(|e| Error::Data(format!("csv flush failed: {e}")))?;
    Ok(())
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Data(format!("csv error: {e}"))
}
