use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::roc::{roc_curve, RocCurve};
use super::{AucMode, EvalError};
use crate::kernels::KernelConfig;
use crate::psdrepair::RepairReport;
use crate::series::format_real;

/// Held-out decision scores of one item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub subject: String,
    pub label: String,
    pub predicted: String,
    /// One-vs-all decision value per class.
    pub scores: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldSummary {
    /// The held-out subject.
    pub subject: String,
    pub train_size: usize,
    pub test_size: usize,
    /// Repair of the training Gram matrix (pseudo-DTW only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repair: Option<RepairReport>,
    /// Hyperparameters chosen by the inner search in nested mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chosen: Option<(f64, f64)>,
}

/// One cell of a hyperparameter grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub param: f64,
    #[serde(rename = "C")]
    pub c: f64,
    /// Pooled one-vs-all argmax error rate; absent when the cell failed.
    pub error: Option<f64>,
    pub mean_auc: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub param_name: String,
    pub param_grid: Vec<f64>,
    pub c_grid: Vec<f64>,
    pub table: Vec<GridCell>,
    /// Whether hyperparameters were chosen inside each outer fold.
    pub nested: bool,
    /// Set when parameters were chosen on the same folds that are reported,
    /// which makes the reported figures optimistic.
    pub optimistic: bool,
}

/// Per-class AUC as a function of the frame budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EarlyCurve {
    pub budgets: Vec<usize>,
    pub per_class: BTreeMap<String, Vec<f64>>,
    pub mean: Vec<f64>,
}

impl EarlyCurve {
    /// `budget,auc` rows for one class.
    pub fn class_csv(&self, class: &str) -> Option<String> {
        let values = self.per_class.get(class)?;
        Some(budget_csv(&self.budgets, values))
    }

    /// `budget,auc` rows of the class-mean AUC.
    pub fn mean_csv(&self) -> String {
        budget_csv(&self.budgets, &self.mean)
    }

    /// One row per budget with a column per class and the mean.
    pub fn wide_csv(&self) -> String {
        let classes: Vec<&String> = self.per_class.keys().collect();
        let mut out = String::from("budget");
        for c in &classes {
            out.push(',');
            out.push_str(c);
        }
        out.push_str(",mean\n");
        for (k, b) in self.budgets.iter().enumerate() {
            out.push_str(&b.to_string());
            for c in &classes {
                out.push(',');
                out.push_str(&format_real(self.per_class[*c][k]));
            }
            out.push(',');
            out.push_str(&format_real(self.mean[k]));
            out.push('\n');
        }
        out
    }
}

fn budget_csv(budgets: &[usize], values: &[f64]) -> String {
    let mut out = String::from("budget,auc\n");
    for (b, v) in budgets.iter().zip(values) {
        out.push_str(&format!("{b},{}\n", format_real(*v)));
    }
    out
}

/// Outcome of a leave-one-subject-out evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub kernel: KernelConfig,
    #[serde(rename = "C")]
    pub c: f64,
    pub classes: Vec<String>,
    pub auc_mode: AucMode,
    pub per_class_auc: BTreeMap<String, f64>,
    pub mean_auc: f64,
    pub classification_error: f64,
    pub predictions: Vec<Prediction>,
    pub folds: Vec<FoldSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selection: Option<Selection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub early_curve: Option<EarlyCurve>,
}

impl EvalReport {
    /// Pooled ROC curve of each class, rebuilt from the stored predictions.
    pub fn roc_curves(&self) -> Result<BTreeMap<String, RocCurve>, EvalError> {
        self.classes
            .iter()
            .map(|class| {
                let scores: Vec<f64> = self.predictions.iter().map(|p| p.scores[class]).collect();
                let truth: Vec<bool> = self.predictions.iter().map(|p| &p.label == class).collect();
                Ok((class.clone(), roc_curve(&scores, &truth)?))
            })
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Per-class and average AUC, one row per report.
///
/// ```text
/// Kernel   anger  disgust  ...  Average
/// DTW      0.998    0.975  ...    0.987
/// ```
pub fn render_table(rows: &[(&str, &EvalReport)]) -> String {
    let mut classes: Vec<String> = Vec::new();
    for (_, r) in rows {
        for c in &r.classes {
            if !classes.contains(c) {
                classes.push(c.clone());
            }
        }
    }
    let label_w = rows
        .iter()
        .map(|(name, _)| name.len())
        .chain(std::iter::once("Kernel".len()))
        .max()
        .unwrap_or(6);
    let widths: Vec<usize> = classes.iter().map(|c| c.len().max(5)).collect();
    let mut out = format!("{:<label_w$}", "Kernel");
    for (c, w) in classes.iter().zip(&widths) {
        out.push_str(&format!("  {c:>w$}"));
    }
    out.push_str("  Average\n");
    for (name, r) in rows {
        out.push_str(&format!("{name:<label_w$}"));
        for (c, w) in classes.iter().zip(&widths) {
            match r.per_class_auc.get(c) {
                Some(v) => out.push_str(&format!("  {v:>w$.3}")),
                None => out.push_str(&format!("  {:>w$}", "-")),
            }
        }
        out.push_str(&format!("  {:>7.3}\n", r.mean_auc));
    }
    out
}
