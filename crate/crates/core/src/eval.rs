//! Per-line multiclass metrics and run reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::CodeFile;
use crate::error::{Error, Result};
use crate::label::Label;
use crate::segment::{consolidate, segment_count_stats, SegmentCountStats};

/// Counts indexed by `[gold class][predicted label]`; rows follow
/// [`Label::CLASSES`], columns [`Label::ALL`] (Invalid last).
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[usize; 8]; 7],
}

impl ConfusionMatrix {
    pub fn add(&mut self, gold: Label, pred: Label) -> Result<()> {
        if !gold.is_valid() {
            return Err(Error::InvalidGold);
        }
        self.counts[gold.index()][pred.index()] += 1;
        Ok(())
    }

    pub fn get(&self, gold: Label, pred: Label) -> usize {
        if gold.is_valid() {
            self.counts[gold.index()][pred.index()]
        } else {
            0
        }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> usize {
        (0..7).map(|i| self.counts[i][i]).sum()
    }

    pub fn invalid_count(&self) -> usize {
        self.counts.iter().map(|row| row[7]).sum()
    }

    /// Adds `other` into `self`, e.g. to combine per-file matrices.
    pub fn merge(&mut self, other: &ConfusionMatrix) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    fn gold_total(&self, class: usize) -> usize {
        self.counts[class].iter().sum()
    }

    fn pred_total(&self, column: usize) -> usize {
        self.counts.iter().map(|row| row[column]).sum()
    }
}

pub fn confusion(gold: &[Label], pred: &[Label]) -> Result<ConfusionMatrix> {
    if gold.len() != pred.len() {
        return Err(Error::LengthMismatch {
            left: gold.len(),
            right: pred.len(),
        });
    }
    let mut m = ConfusionMatrix::default();
    for (&g, &p) in gold.iter().zip(pred) {
        m.add(g, p)?;
    }
    Ok(m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: Label,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub per_class: Vec<ClassMetrics>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub micro_f1: f64,
    pub line_count: usize,
    pub invalid_count: usize,
    /// Classes entering the macro averages.
    pub macro_classes: Vec<Label>,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Metrics with zero for every 0/0. Macro averages run over the classes that
/// occur in the gold labels or among the valid predictions; Invalid
/// predictions count against recall and never as a class of their own.
pub fn metrics(matrix: &ConfusionMatrix) -> Result<MetricsReport> {
    let n = matrix.total();
    if n == 0 {
        return Err(Error::EmptyMatrix);
    }
    let per_class: Vec<ClassMetrics> = Label::CLASSES
        .iter()
        .enumerate()
        .map(|(i, &label)| {
            let tp = matrix.counts[i][i];
            let precision = ratio(tp, matrix.pred_total(i));
            let recall = ratio(tp, matrix.gold_total(i));
            ClassMetrics {
                label,
                precision,
                recall,
                f1: harmonic(precision, recall),
                support: matrix.gold_total(i),
            }
        })
        .collect();
    let present: Vec<usize> = (0..7)
        .filter(|&i| matrix.gold_total(i) > 0 || matrix.pred_total(i) > 0)
        .collect();
    let mean = |f: fn(&ClassMetrics) -> f64| {
        present.iter().map(|&i| f(&per_class[i])).sum::<f64>() / present.len() as f64
    };
    let correct = matrix.correct();
    let micro_p = ratio(correct, n);
    let micro_r = ratio(correct, n);
    Ok(MetricsReport {
        accuracy: ratio(correct, n),
        macro_precision: mean(|c| c.precision),
        macro_recall: mean(|c| c.recall),
        macro_f1: mean(|c| c.f1),
        micro_f1: harmonic(micro_p, micro_r),
        line_count: n,
        invalid_count: matrix.invalid_count(),
        macro_classes: present.iter().map(|&i| Label::CLASSES[i]).collect(),
        per_class,
    })
}

/// Identifies how a set of predictions was produced.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RunInfo {
    pub run_id: String,
    pub approach: String,
    pub mode: String,
    pub backend: String,
    pub context_c: Option<usize>,
    pub config_hash: String,
    pub template_hash: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileSegments {
    pub file_id: String,
    pub segment_count_gold: usize,
    pub segment_count_pred: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    #[serde(flatten)]
    pub info: RunInfo,
    pub metrics: MetricsReport,
    pub confusion: Vec<Vec<usize>>,
    pub per_file: Vec<FileSegments>,
    pub segment_count_stats: Option<SegmentCountStats>,
}

impl RunReport {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

/// Scores `predictions` (per-line labels keyed by file id) against the gold
/// labels of `files`. Files are reported in id order.
pub fn evaluate_run(
    files: &[CodeFile],
    predictions: &BTreeMap<String, Vec<Label>>,
    info: RunInfo,
) -> Result<RunReport> {
    let mut matrix = ConfusionMatrix::default();
    let mut per_file = Vec::with_capacity(files.len());
    let mut sorted: Vec<&CodeFile> = files.iter().collect();
    sorted.sort_by(|a, b| a.file_id.cmp(&b.file_id));
    for file in sorted {
        let gold = file.gold_labels()?;
        let pred = predictions
            .get(&file.file_id)
            .ok_or_else(|| Error::MissingPredictions(file.file_id.clone()))?;
        if pred.len() != gold.len() {
            return Err(Error::MissingPredictions(format!(
                "{} ({} of {} lines)",
                file.file_id,
                pred.len(),
                gold.len()
            )));
        }
        if gold.is_empty() {
            continue;
        }
        matrix.merge(&confusion(&gold, pred)?);
        per_file.push(FileSegments {
            file_id: file.file_id.clone(),
            segment_count_gold: consolidate(&gold)?.len(),
            segment_count_pred: consolidate(pred)?.len(),
        });
    }
    let metrics = metrics(&matrix)?;
    let segment_count_stats = if per_file.len() >= 2 {
        let gold: Vec<usize> = per_file.iter().map(|f| f.segment_count_gold).collect();
        let pred: Vec<usize> = per_file.iter().map(|f| f.segment_count_pred).collect();
        Some(segment_count_stats(&gold, &pred)?)
    } else {
        None
    };
    Ok(RunReport {
        info,
        metrics,
        confusion: matrix.counts.iter().map(|r| r.to_vec()).collect(),
        per_file,
        segment_count_stats,
    })
}

/// Renders reports as a fixed-width table in percent, one row per run.
pub fn render_table(reports: &[RunReport]) -> String {
    let name = |r: &RunReport| format!("{} {} {}", r.info.backend, r.info.approach, r.info.mode);
    let width = reports.iter().map(|r| name(r).len()).max().unwrap_or(0).max(5);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<width$}  {:>7}  {:>7}  {:>7}  {:>8}  {:>8}  {:>7}",
        "Model", "Acc.", "Precis.", "Recall", "Macro F1", "Micro F1", "Context"
    );
    for r in reports {
        let m = &r.metrics;
        let context = r.info.context_c.map_or("-".to_string(), |c| c.to_string());
        let _ = writeln!(
            out,
            "{:<width$}  {:>7.2}  {:>7.2}  {:>7.2}  {:>8.2}  {:>8.2}  {:>7}",
            name(r),
            100.0 * m.accuracy,
            100.0 * m.macro_precision,
            100.0 * m.macro_recall,
            100.0 * m.macro_f1,
            100.0 * m.micro_f1,
            context
        );
    }
    out
}
