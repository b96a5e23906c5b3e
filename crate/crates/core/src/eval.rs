//! Evaluation metrics and trivial baselines: IoU, accuracy at a strict IoU
//! threshold, per-category breakdowns, and the entire-image /
//! largest-proposal reference predictors.

use serde::{Deserialize, Serialize};

use crate::bbox::BoundingBox;
use crate::error::{Error, Result};

/// One evaluated example.
#[derive(Debug, Clone)]
pub struct EvalRecord {
    pub id: String,
    pub predicted: BoundingBox,
    pub ground_truth: BoundingBox,
    pub category: Option<String>,
}

/// Intersection-over-union with inclusive pixel areas.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let inter = a.intersection(b).map_or(0, |i| i.area());
    let union = a.area() + b.area() - inter;
    inter as f64 / union as f64
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CategoryRow {
    pub category: String,
    pub total: u64,
    pub correct: u64,
    pub accuracy_percent: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub iou_threshold: f64,
    pub total: u64,
    pub correct: u64,
    pub accuracy_percent: f64,
    /// Present only when category tags exist; sorted by category name.
    pub categories: Vec<CategoryRow>,
}

/// Fraction of records with IoU strictly greater than `threshold`, times
/// 100, with per-category counts where tags are present.
pub fn accuracy(records: &[EvalRecord], threshold: f64) -> Result<AccuracyReport> {
    if records.is_empty() {
        return Err(Error::InvalidInput("no records to evaluate".into()));
    }
    let mut correct = 0u64;
    let mut by_category: std::collections::BTreeMap<String, (u64, u64)> = Default::default();
    for r in records {
        let hit = iou(&r.predicted, &r.ground_truth) > threshold;
        if hit {
            correct += 1;
        }
        if let Some(cat) = &r.category {
            let entry = by_category.entry(cat.clone()).or_insert((0, 0));
            entry.0 += 1;
            if hit {
                entry.1 += 1;
            }
        }
    }
    let total = records.len() as u64;
    Ok(AccuracyReport {
        iou_threshold: threshold,
        total,
        correct,
        accuracy_percent: 100.0 * correct as f64 / total as f64,
        categories: by_category
            .into_iter()
            .map(|(category, (t, c))| CategoryRow {
                category,
                total: t,
                correct: c,
                accuracy_percent: 100.0 * c as f64 / t as f64,
            })
            .collect(),
    })
}

/// The whole-image predictor.
pub fn baseline_entire_image(width: u32, height: u32) -> BoundingBox {
    BoundingBox::full_image(width, height)
}

/// The maximum-area proposal; ties go to the first listed.
pub fn baseline_largest_proposal(proposals: &[BoundingBox]) -> Result<BoundingBox> {
    let mut best: Option<BoundingBox> = None;
    for p in proposals {
        // strict > keeps the first listed proposal on area ties
        if best.map_or(true, |b| p.area() > b.area()) {
            best = Some(*p);
        }
    }
    best.ok_or_else(|| Error::InvalidInput("empty proposal list".into()))
}

/// Plain-text report: overall line plus an aligned per-category table.
pub fn format_report(report: &AccuracyReport, with_categories: bool) -> String {
    let mut out = format!(
        "Accuracy (IoU > {:.2}): {:.2}  [{}/{}]\n",
        report.iou_threshold, report.accuracy_percent, report.correct, report.total
    );
    if with_categories && !report.categories.is_empty() {
        let name_width = report
            .categories
            .iter()
            .map(|c| c.category.len())
            .max()
            .unwrap()
            .max("category".len());
        out.push('\n');
        out.push_str(&format!(
            "{:<name_width$}  {:>8}  {:>8}  {:>8}\n",
            "category", "n", "correct", "acc"
        ));
        for row in &report.categories {
            out.push_str(&format!(
                "{:<name_width$}  {:>8}  {:>8}  {:>8.2}\n",
                row.category, row.total, row.correct, row.accuracy_percent
            ));
        }
    }
    out
}
