//! Generalized zero-shot metrics and the experiment drivers built on them.
//!
//! `ts` is the mean per-class accuracy on the unseen test split and `tr`
//! the same on the seen test split; both are computed with the full label
//! set as the search space. `H` is their harmonic mean.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::classifier::{FitConfig, SoftmaxClassifier};
use crate::data::{ClassId, DatasetBundle};
use crate::error::{Error, Result};
use crate::networks::ModelParams;
use crate::rng;
use crate::synthesis::{build_gzsl_classifier, FinalTrainingSet, DEFAULT_PER_CLASS};
use crate::trainer::{train, TrainConfig, Variant};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub n_per_class: usize,
    /// Root of the synthesis seed.
    pub seed: u64,
    pub training_set: FinalTrainingSet,
    pub classifier: FitConfig,
    /// Sample counts for the sweep.
    pub counts: Vec<usize>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            n_per_class: DEFAULT_PER_CLASS,
            seed: 0,
            training_set: FinalTrainingSet::default(),
            classifier: FitConfig::default(),
            counts: vec![10, 50, 100, 300, 500],
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_per_class == 0 {
            return Err(Error::validation("eval.n_per_class must be >= 1"));
        }
        if self.counts.contains(&0) {
            return Err(Error::validation("eval.counts entries must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: String,
    pub variant: Option<Variant>,
    pub n_per_class: Option<usize>,
    pub ts: f64,
    pub tr: f64,
    #[serde(rename = "H")]
    pub h: f64,
    pub per_class_acc: BTreeMap<ClassId, f64>,
    pub n_test_per_class: BTreeMap<ClassId, usize>,
}

impl EvalReport {
    /// Recompute `H` from `ts` and `tr` and compare.
    pub fn is_consistent(&self, tol: f64) -> bool {
        (harmonic_mean(self.ts, self.tr) - self.h).abs() <= tol
            && self.per_class_acc.values().all(|a| (0.0..=1.0).contains(a))
    }
}

/// Mean over classes of per-class accuracy, plus the per-class values.
pub fn per_class_accuracy(
    predictions: &[ClassId],
    labels: &[ClassId],
    class_set: &[ClassId],
) -> Result<(f64, BTreeMap<ClassId, f64>)> {
    if predictions.len() != labels.len() {
        return Err(Error::validation(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let mut counts: BTreeMap<ClassId, (usize, usize)> = class_set.iter().map(|&c| (c, (0, 0))).collect();
    for (p, y) in predictions.iter().zip(labels) {
        let entry = counts
            .get_mut(y)
            .ok_or_else(|| Error::validation(format!("label {y} is outside the evaluated class set")))?;
        entry.1 += 1;
        if p == y {
            entry.0 += 1;
        }
    }
    let mut per_class = BTreeMap::new();
    for (c, (correct, total)) in counts {
        if total == 0 {
            return Err(Error::validation(format!("class {c} has no test rows")));
        }
        per_class.insert(c, correct as f64 / total as f64);
    }
    if per_class.is_empty() {
        return Err(Error::validation("empty class set"));
    }
    let mean = per_class.values().sum::<f64>() / per_class.len() as f64;
    Ok((mean, per_class))
}

/// `2·ts·tr / (ts + tr)`, or 0 when both are 0. Inputs must lie in [0, 1].
pub fn harmonic_mean(ts: f64, tr: f64) -> f64 {
    assert!(
        (0.0..=1.0).contains(&ts) && (0.0..=1.0).contains(&tr),
        "accuracies must lie in [0, 1]: ts={ts}, tr={tr}"
    );
    if ts + tr == 0.0 {
        0.0
    } else {
        2.0 * ts * tr / (ts + tr)
    }
}

fn count_per_class(labels: &[ClassId]) -> BTreeMap<ClassId, usize> {
    let mut m = BTreeMap::new();
    for &c in labels {
        *m.entry(c).or_insert(0) += 1;
    }
    m
}

/// Build a report from predictions on both test splits.
pub fn report_from_predictions(
    bundle: &DatasetBundle,
    pred_seen: &[ClassId],
    pred_unseen: &[ClassId],
) -> Result<EvalReport> {
    let (tr, seen_acc) = per_class_accuracy(pred_seen, &bundle.labels_test_seen, &present(&bundle.labels_test_seen))?;
    let (ts, unseen_acc) =
        per_class_accuracy(pred_unseen, &bundle.labels_test_unseen, &present(&bundle.labels_test_unseen))?;
    let mut per_class_acc = seen_acc;
    per_class_acc.extend(unseen_acc);
    let mut n_test_per_class = count_per_class(&bundle.labels_test_seen);
    n_test_per_class.extend(count_per_class(&bundle.labels_test_unseen));
    Ok(EvalReport {
        dataset: bundle.name.clone(),
        variant: None,
        n_per_class: None,
        ts,
        tr,
        h: harmonic_mean(ts, tr),
        per_class_acc,
        n_test_per_class,
    })
}

/// Classes that occur in a test split. Classes of the partition without
/// test rows are skipped rather than counted as zero accuracy.
fn present(labels: &[ClassId]) -> Vec<ClassId> {
    count_per_class(labels).into_keys().collect()
}

/// Evaluate a fitted final classifier. Its search space must cover every
/// seen and unseen class.
pub fn evaluate_classifier(classifier: &SoftmaxClassifier, bundle: &DatasetBundle) -> Result<EvalReport> {
    if classifier.classes != bundle.all_classes() {
        return Err(Error::validation(
            "final classifier must search over all seen and unseen classes",
        ));
    }
    let pred_seen = classifier.predict(bundle.visual_test_seen.view());
    let pred_unseen = classifier.predict(bundle.visual_test_unseen.view());
    report_from_predictions(bundle, &pred_seen, &pred_unseen)
}

/// Synthesize, fit the final classifier, and score both test splits.
pub fn evaluate_gzsl(params: &ModelParams, bundle: &DatasetBundle, eval: &EvalConfig) -> Result<EvalReport> {
    eval.validate()?;
    evaluate_at(params, bundle, eval, eval.n_per_class)
}

fn evaluate_at(params: &ModelParams, bundle: &DatasetBundle, eval: &EvalConfig, n: usize) -> Result<EvalReport> {
    let (classifier, summary) = build_gzsl_classifier(
        params,
        bundle,
        n,
        rng::derive_seed(eval.seed, rng::SYNTHESIS),
        eval.training_set,
        &eval.classifier,
    )?;
    log::debug!("final classifier fit: {summary:?}");
    let mut report = evaluate_classifier(&classifier, bundle)?;
    report.n_per_class = Some(n);
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub dataset: String,
    pub rows: Vec<EvalReport>,
}

impl AblationTable {
    pub fn to_text(&self) -> String {
        let rows: Vec<(String, &EvalReport)> = self
            .rows
            .iter()
            .map(|r| (r.variant.map_or("-", |v| v.display_name()).to_string(), r))
            .collect();
        render_table(&self.dataset, &rows)
    }

    pub fn to_jsonl(&self) -> Result<String> {
        reports_to_jsonl(&self.rows)
    }
}

pub fn reports_to_jsonl(reports: &[EvalReport]) -> Result<String> {
    let mut out = String::new();
    for r in reports {
        out.push_str(&serde_json::to_string(r).map_err(|e| Error::json("report", e))?);
        out.push('\n');
    }
    Ok(out)
}

/// Aligned plain-text table with ts / tr / H in percent.
pub fn render_table(dataset: &str, rows: &[(String, &EvalReport)]) -> String {
    let width = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(0).max(6);
    let mut out = String::new();
    let _ = writeln!(out, "{:width$} | {:^20}", "", dataset);
    let _ = writeln!(out, "{:width$} | {:>6} {:>6} {:>6}", "Method", "ts", "tr", "H");
    let _ = writeln!(out, "{}", "-".repeat(width + 23));
    for (name, r) in rows {
        let _ = writeln!(
            out,
            "{:width$} | {:>6.1} {:>6.1} {:>6.1}",
            name,
            100.0 * r.ts,
            100.0 * r.tr,
            100.0 * r.h
        );
    }
    out
}

/// Train and evaluate each variant with shared seeds.
pub fn run_ablation(
    bundle: &DatasetBundle,
    base: &TrainConfig,
    variants: &[Variant],
    eval: &EvalConfig,
) -> Result<AblationTable> {
    eval.validate()?;
    let mut rows = Vec::with_capacity(variants.len());
    for &variant in variants {
        let config = TrainConfig { variant, ..base.clone() };
        let (params, _) = train(bundle, &config)?;
        let mut report = evaluate_gzsl(&params, bundle, eval)?;
        report.variant = Some(variant);
        log::info!("{variant}: ts={:.4} tr={:.4} H={:.4}", report.ts, report.tr, report.h);
        rows.push(report);
    }
    Ok(AblationTable {
        dataset: bundle.name.clone(),
        rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub n_per_class: usize,
    pub ts: f64,
    pub tr: f64,
    #[serde(rename = "H")]
    pub h: f64,
}

/// Refit only the final classifier for each sample count.
pub fn sweep_with_model(
    params: &ModelParams,
    bundle: &DatasetBundle,
    eval: &EvalConfig,
    counts: &[usize],
) -> Result<Vec<CurvePoint>> {
    if counts.is_empty() || counts.contains(&0) {
        return Err(Error::validation("sweep counts must be non-empty and >= 1"));
    }
    counts
        .iter()
        .map(|&n| {
            let r = evaluate_at(params, bundle, eval, n)?;
            Ok(CurvePoint {
                n_per_class: n,
                ts: r.ts,
                tr: r.tr,
                h: r.h,
            })
        })
        .collect()
}

/// Train once, then sweep the number of synthesized samples per class.
pub fn sweep_samples(
    bundle: &DatasetBundle,
    config: &TrainConfig,
    eval: &EvalConfig,
    counts: &[usize],
) -> Result<Vec<CurvePoint>> {
    let (params, _) = train(bundle, config)?;
    sweep_with_model(&params, bundle, eval, counts)
}
