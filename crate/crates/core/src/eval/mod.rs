//! Leave-one-subject-out evaluation, ROC/AUC, hyperparameter search and the
//! early-classification experiment.
//!
//! The pairwise matrix of a kernel configuration is computed once over the
//! whole dataset and sliced per fold. For pseudo-DTW the training block is
//! repaired inside each fold, so no test item influences the projection; test
//! rows use the unrepaired `exp(-D / t)`.

mod report;
mod roc;

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernels::{pairwise_values, select, with_workers, KernelConfig, KernelError, KernelFamily};
use crate::psdrepair::{dtw_to_kernel_values, exp_kernel, RepairError, RepairReport, RepairSettings};
use crate::seed::stage_rng;
use crate::series::{LabeledDataset, SeriesError, TimeSeries};
use crate::svm::{self, train_one_vs_all_with_classes, SvmError, SvmParams};

pub use report::{
    render_table, EarlyCurve, EvalReport, FoldSummary, GridCell, Prediction, Selection,
};
pub use roc::{auc, auc_from_scores, roc_curve, RocCurve};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("leave-one-subject-out needs at least {needed} subjects, found {found}")]
    SingleSubject { needed: usize, found: usize },
    #[error("need at least two classes, found {0}")]
    TooFewClasses(usize),
    #[error("ROC needs both positive and negative items")]
    OneClassOnly,
    #[error("{scores} scores but {truth} truth values")]
    LengthMismatch { scores: usize, truth: usize },
    #[error("score {0} is NaN")]
    NanScore(usize),
    #[error("{0} grid is empty")]
    EmptyGrid(&'static str),
    #[error("grid values must be positive and finite, got {0}")]
    BadGridValue(f64),
    #[error("C must be positive and finite, got {0}")]
    BadC(f64),
    #[error("frame budgets must be at least 2, got {0}")]
    BadBudget(usize),
    #[error("no frame budgets given")]
    NoBudgets,
    #[error("all {cells} grid cells failed; first failure: {first}")]
    NoUsableCell { cells: usize, first: Box<EvalError> },
    #[error("class {class}: {source}")]
    Class {
        class: String,
        #[source]
        source: Box<EvalError>,
    },
    #[error("fold {fold}: repair failed: {source}")]
    Repair {
        fold: String,
        #[source]
        source: RepairError,
    },
    #[error("fold {fold}: {source}")]
    Svm {
        fold: String,
        #[source]
        source: SvmError,
    },
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Series(#[from] SeriesError),
}

/// How per-class AUC is aggregated over folds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AucMode {
    /// One ROC curve over the held-out scores of all folds.
    #[default]
    Pooled,
    /// Mean of per-fold AUCs, over folds holding both positives and negatives.
    FoldAverage,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub repair: RepairSettings,
    pub svm_tol: f64,
    pub max_updates: usize,
    pub auc_mode: AucMode,
    /// Thread count; 0 uses one per logical core.
    pub workers: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            repair: RepairSettings::default(),
            svm_tol: svm::DEFAULT_TOL,
            max_updates: svm::DEFAULT_MAX_UPDATES,
            auc_mode: AucMode::Pooled,
            workers: 0,
        }
    }
}

/// `2^lo, 2^(lo+1), ..., 2^hi`.
pub fn log2_grid(lo: i32, hi: i32) -> Vec<f64> {
    (lo..=hi).map(|k| 2f64.powi(k)).collect()
}

/// Kernel-parameter grid `2^-5 .. 2^10`.
pub fn default_param_grid() -> Vec<f64> {
    log2_grid(-5, 10)
}

/// `C` grid `2^-5 .. 2^5`.
pub fn default_c_grid() -> Vec<f64> {
    log2_grid(-5, 5)
}

/// Frame budgets `2 ..= 16`.
pub fn default_budgets() -> Vec<usize> {
    (2..=16).collect()
}

/// One cross-validation fold; indices refer to dataset items.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub subject: String,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// One fold per subject, in sorted subject order.
pub fn loso_split(ds: &LabeledDataset) -> Result<Vec<Fold>, EvalError> {
    let all: Vec<usize> = (0..ds.len()).collect();
    let folds = split_subset(ds, &all);
    if folds.len() < 2 {
        return Err(EvalError::SingleSubject {
            needed: 2,
            found: folds.len(),
        });
    }
    Ok(folds)
}

fn split_subset(ds: &LabeledDataset, subset: &[usize]) -> Vec<Fold> {
    let mut by_subject: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for &i in subset {
        by_subject.entry(&ds.items()[i].subject).or_default().push(i);
    }
    by_subject
        .iter()
        .map(|(subject, test)| Fold {
            subject: subject.to_string(),
            train: subset
                .iter()
                .copied()
                .filter(|i| ds.items()[*i].subject != *subject)
                .collect(),
            test: test.clone(),
        })
        .collect()
}

/// Shuffles the labels of `ds` with a stream derived from `seed`.
pub fn permute_labels(ds: &LabeledDataset, seed: u64) -> Result<LabeledDataset, EvalError> {
    let mut labels: Vec<String> = ds.labels().iter().map(|s| s.to_string()).collect();
    labels.shuffle(&mut stage_rng(seed, "eval/permute-labels"));
    Ok(ds.relabeled(&labels)?)
}

fn check_dataset(ds: &LabeledDataset) -> Result<(), EvalError> {
    if ds.classes().len() < 2 {
        return Err(EvalError::TooFewClasses(ds.classes().len()));
    }
    if ds.subjects().len() < 2 {
        return Err(EvalError::SingleSubject {
            needed: 2,
            found: ds.subjects().len(),
        });
    }
    Ok(())
}

fn check_positive(v: f64) -> Result<f64, EvalError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(EvalError::BadGridValue(v))
    }
}

fn clean_grid(grid: &[f64], name: &'static str) -> Result<Vec<f64>, EvalError> {
    if grid.is_empty() {
        return Err(EvalError::EmptyGrid(name));
    }
    let mut g = grid
        .iter()
        .map(|&v| check_positive(v))
        .collect::<Result<Vec<_>, _>>()?;
    g.sort_by(f64::total_cmp);
    g.dedup();
    Ok(g)
}

fn full_pairwise(
    ds: &LabeledDataset,
    cfg: &KernelConfig,
    workers: usize,
) -> Result<DMatrix<f64>, EvalError> {
    let series: Vec<&TimeSeries> = ds.items().iter().map(|it| &it.series).collect();
    Ok(pairwise_values(&series, cfg, workers)?)
}

struct FoldKernels {
    train: DMatrix<f64>,
    test_rows: DMatrix<f64>,
    repair: Option<RepairReport>,
}

fn fold_kernels(
    pair: &DMatrix<f64>,
    cfg: &KernelConfig,
    fold: &Fold,
    opts: &EvalOptions,
) -> Result<FoldKernels, EvalError> {
    match cfg.family {
        KernelFamily::GlobalAlignment => Ok(FoldKernels {
            train: select(pair, &fold.train, &fold.train),
            test_rows: select(pair, &fold.test, &fold.train),
            repair: None,
        }),
        KernelFamily::PseudoDtw => {
            let t = cfg.t.expect("validated pseudo-DTW config has t");
            let d_train = select(pair, &fold.train, &fold.train);
            let (train, report) =
                dtw_to_kernel_values(&d_train, t, &opts.repair).map_err(|source| {
                    EvalError::Repair {
                        fold: fold.subject.clone(),
                        source,
                    }
                })?;
            Ok(FoldKernels {
                train,
                test_rows: exp_kernel(&select(pair, &fold.test, &fold.train), t),
                repair: Some(report),
            })
        }
    }
}

/// Held-out score rows (test items x classes) of one fold for each `C`.
struct FoldRun {
    per_c: Vec<Result<DMatrix<f64>, EvalError>>,
    repair: Option<RepairReport>,
}

fn run_fold(
    ds: &LabeledDataset,
    pair: &DMatrix<f64>,
    cfg: &KernelConfig,
    fold: &Fold,
    cs: &[f64],
    opts: &EvalOptions,
) -> Result<FoldRun, EvalError> {
    let k = fold_kernels(pair, cfg, fold, opts)?;
    let labels: Vec<&str> = fold
        .train
        .iter()
        .map(|&i| ds.items()[i].label.as_str())
        .collect();
    let per_c = cs
        .iter()
        .map(|&c| {
            let params = SvmParams {
                c,
                tol: opts.svm_tol,
                max_updates: opts.max_updates,
            };
            let wrap = |source| EvalError::Svm {
                fold: fold.subject.clone(),
                source,
            };
            let model =
                train_one_vs_all_with_classes(&k.train, &labels, ds.classes(), &params).map_err(wrap)?;
            model.decision_matrix(&k.test_rows).map_err(wrap)
        })
        .collect();
    Ok(FoldRun {
        per_c,
        repair: k.repair,
    })
}

fn run_folds(
    ds: &LabeledDataset,
    pair: &DMatrix<f64>,
    cfg: &KernelConfig,
    folds: &[Fold],
    cs: &[f64],
    opts: &EvalOptions,
) -> Result<Vec<FoldRun>, EvalError> {
    with_workers(opts.workers, || {
        folds
            .par_iter()
            .map(|f| run_fold(ds, pair, cfg, f, cs, opts))
            .collect::<Result<Vec<_>, _>>()
    })?
}

/// Moves the score matrices of one `C` out of `runs`; the first failing
/// fold (in fold order) wins.
fn take_scores(runs: &mut [FoldRun], c_index: usize) -> Result<Vec<DMatrix<f64>>, EvalError> {
    runs.iter_mut()
        .map(|r| std::mem::replace(&mut r.per_c[c_index], Ok(DMatrix::zeros(0, 0))))
        .collect()
}

/// Scores of every evaluated item, keyed by dataset index.
struct Scored {
    /// `(item, fold index, class scores)` in dataset order.
    rows: Vec<(usize, usize, Vec<f64>)>,
}

fn collect_scores(folds: &[Fold], scores: &[DMatrix<f64>]) -> Scored {
    let mut rows = Vec::new();
    for (f, (fold, m)) in folds.iter().zip(scores).enumerate() {
        for (r, &i) in fold.test.iter().enumerate() {
            rows.push((i, f, m.row(r).iter().copied().collect()));
        }
    }
    rows.sort_by_key(|(i, _, _)| *i);
    Scored { rows }
}

struct Summary {
    per_class_auc: BTreeMap<String, f64>,
    mean_auc: f64,
    error: f64,
    predictions: Vec<Prediction>,
}

fn summarize(
    ds: &LabeledDataset,
    folds: &[Fold],
    scored: &Scored,
    mode: AucMode,
) -> Result<Summary, EvalError> {
    let classes = ds.classes();
    let mut per_class_auc = BTreeMap::new();
    for (k, class) in classes.iter().enumerate() {
        let tag = |source: EvalError| EvalError::Class {
            class: class.clone(),
            source: Box::new(source),
        };
        let value = match mode {
            AucMode::Pooled => {
                let scores: Vec<f64> = scored.rows.iter().map(|(_, _, s)| s[k]).collect();
                let truth: Vec<bool> = scored
                    .rows
                    .iter()
                    .map(|(i, _, _)| &ds.items()[*i].label == class)
                    .collect();
                auc_from_scores(&scores, &truth).map_err(tag)?
            }
            AucMode::FoldAverage => {
                let mut sum = 0.0;
                let mut count = 0usize;
                for f in 0..folds.len() {
                    let rows: Vec<&(usize, usize, Vec<f64>)> =
                        scored.rows.iter().filter(|(_, g, _)| *g == f).collect();
                    let scores: Vec<f64> = rows.iter().map(|(_, _, s)| s[k]).collect();
                    let truth: Vec<bool> = rows
                        .iter()
                        .map(|(i, _, _)| &ds.items()[*i].label == class)
                        .collect();
                    match auc_from_scores(&scores, &truth) {
                        Ok(v) => {
                            sum += v;
                            count += 1;
                        }
                        Err(EvalError::OneClassOnly) => {}
                        Err(e) => return Err(tag(e)),
                    }
                }
                if count == 0 {
                    return Err(tag(EvalError::OneClassOnly));
                }
                sum / count as f64
            }
        };
        per_class_auc.insert(class.clone(), value);
    }
    let mean_auc = per_class_auc.values().sum::<f64>() / classes.len() as f64;

    let mut wrong = 0usize;
    let mut predictions = Vec::with_capacity(scored.rows.len());
    for (i, f, s) in &scored.rows {
        let item = &ds.items()[*i];
        let row = DMatrix::from_row_slice(1, s.len(), s);
        let predicted = classes[svm::argmax_row(&row, 0)].clone();
        if predicted != item.label {
            wrong += 1;
        }
        predictions.push(Prediction {
            id: item.id.clone(),
            subject: folds[*f].subject.clone(),
            label: item.label.clone(),
            predicted,
            scores: classes.iter().cloned().zip(s.iter().copied()).collect(),
        });
    }
    Ok(Summary {
        per_class_auc,
        mean_auc,
        error: wrong as f64 / scored.rows.len() as f64,
        predictions,
    })
}

fn fold_summaries(folds: &[Fold], repairs: &[Option<RepairReport>]) -> Vec<FoldSummary> {
    folds
        .iter()
        .zip(repairs)
        .map(|(f, r)| FoldSummary {
            subject: f.subject.clone(),
            train_size: f.train.len(),
            test_size: f.test.len(),
            repair: r.clone(),
            chosen: None,
        })
        .collect()
}

fn repairs_of(runs: &[FoldRun]) -> Vec<Option<RepairReport>> {
    runs.iter().map(|r| r.repair.clone()).collect()
}

#[allow(clippy::too_many_arguments)]
fn build_report(
    ds: &LabeledDataset,
    cfg: &KernelConfig,
    c: f64,
    folds: &[Fold],
    scores: &[DMatrix<f64>],
    repairs: &[Option<RepairReport>],
    mode: AucMode,
) -> Result<EvalReport, EvalError> {
    let summary = summarize(ds, folds, &collect_scores(folds, scores), mode)?;
    Ok(EvalReport {
        kernel: *cfg,
        c,
        classes: ds.classes().to_vec(),
        auc_mode: mode,
        per_class_auc: summary.per_class_auc,
        mean_auc: summary.mean_auc,
        classification_error: summary.error,
        predictions: summary.predictions,
        folds: fold_summaries(folds, repairs),
        selection: None,
        early_curve: None,
    })
}

/// Leave-one-subject-out evaluation of a fixed kernel and `C`.
pub fn loso_evaluate(
    ds: &LabeledDataset,
    cfg: &KernelConfig,
    c: f64,
    opts: &EvalOptions,
) -> Result<EvalReport, EvalError> {
    check_dataset(ds)?;
    cfg.validate()?;
    if !(c > 0.0 && c.is_finite()) {
        return Err(EvalError::BadC(c));
    }
    let folds = loso_split(ds)?;
    let pair = full_pairwise(ds, cfg, opts.workers)?;
    let mut runs = run_folds(ds, &pair, cfg, &folds, &[c], opts)?;
    let scores = take_scores(&mut runs, 0)?;
    build_report(ds, cfg, c, &folds, &scores, &repairs_of(&runs), opts.auc_mode)
}

/// Best cell of a grid search, its report, and the full error table.
#[derive(Debug, Clone, PartialEq)]
pub struct GridResult {
    pub best_param: f64,
    pub best_c: f64,
    pub table: Vec<GridCell>,
    pub report: EvalReport,
}

/// First strict minimum over the cells that ran. The table is ordered by
/// parameter, then `C`, so ties prefer the smaller parameter, then the
/// smaller `C`.
fn argmin_cell(table: &[GridCell]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (k, cell) in table.iter().enumerate() {
        if let Some(e) = cell.error {
            if best.is_none_or(|(_, b)| e < b) {
                best = Some((k, e));
            }
        }
    }
    best.map(|(k, _)| k)
}

fn pairwise_per_param(
    ds: &LabeledDataset,
    base: &KernelConfig,
    params: &[f64],
    workers: usize,
) -> Result<Vec<(KernelConfig, DMatrix<f64>)>, EvalError> {
    let mut out: Vec<(KernelConfig, DMatrix<f64>)> = Vec::with_capacity(params.len());
    for &p in params {
        let cfg = base.with_param(p);
        cfg.validate()?;
        let pair = match (cfg.family, out.first()) {
            // DTW distances do not depend on t
            (KernelFamily::PseudoDtw, Some((_, d))) => d.clone(),
            _ => full_pairwise(ds, &cfg, workers)?,
        };
        out.push((cfg, pair));
    }
    Ok(out)
}

struct GridRun {
    table: Vec<GridCell>,
    reports: Vec<Option<EvalReport>>,
    first_failure: Option<EvalError>,
}

fn failed_cell(param: f64, c: f64, e: &EvalError) -> GridCell {
    GridCell {
        param,
        c,
        error: None,
        mean_auc: None,
        failure: Some(e.to_string()),
    }
}

fn run_grid(
    ds: &LabeledDataset,
    folds: &[Fold],
    pairs: &[(KernelConfig, DMatrix<f64>)],
    cs: &[f64],
    opts: &EvalOptions,
) -> GridRun {
    let mut out = GridRun {
        table: Vec::with_capacity(pairs.len() * cs.len()),
        reports: Vec::with_capacity(pairs.len() * cs.len()),
        first_failure: None,
    };
    for (cfg, pair) in pairs {
        let p = cfg.param().expect("validated config");
        let mut runs = match run_folds(ds, pair, cfg, folds, cs, opts) {
            Ok(runs) => runs,
            Err(e) => {
                for &c in cs {
                    out.table.push(failed_cell(p, c, &e));
                    out.reports.push(None);
                }
                out.first_failure.get_or_insert(e);
                continue;
            }
        };
        let repairs = repairs_of(&runs);
        for (ci, &c) in cs.iter().enumerate() {
            let report = take_scores(&mut runs, ci)
                .and_then(|s| build_report(ds, cfg, c, folds, &s, &repairs, opts.auc_mode));
            match report {
                Ok(r) => {
                    out.table.push(GridCell {
                        param: p,
                        c,
                        error: Some(r.classification_error),
                        mean_auc: Some(r.mean_auc),
                        failure: None,
                    });
                    out.reports.push(Some(r));
                }
                Err(e) => {
                    out.table.push(failed_cell(p, c, &e));
                    out.reports.push(None);
                    out.first_failure.get_or_insert(e);
                }
            }
        }
    }
    out
}

/// Evaluates every `(param, C)` pair by LOSO classification error and
/// returns the minimizer. Ties prefer the smaller parameter, then the
/// smaller `C`.
///
/// A cell whose folds fail (for example an SVM that hits its update cap on a
/// numerically degenerate Gram matrix) is kept in the table with its failure
/// message and skipped by the selection. `base` supplies the family and
/// every setting other than the searched parameter. The reported figures
/// are not nested and therefore optimistic; see [`nested_evaluate`].
pub fn grid_search(
    ds: &LabeledDataset,
    base: &KernelConfig,
    param_grid: &[f64],
    c_grid: &[f64],
    opts: &EvalOptions,
) -> Result<GridResult, EvalError> {
    check_dataset(ds)?;
    let params = clean_grid(param_grid, "kernel parameter")?;
    let cs = clean_grid(c_grid, "C")?;
    let folds = loso_split(ds)?;
    let pairs = pairwise_per_param(ds, base, &params, opts.workers)?;
    let mut run = run_grid(ds, &folds, &pairs, &cs, opts);
    let best = match argmin_cell(&run.table) {
        Some(k) => k,
        None => {
            return Err(EvalError::NoUsableCell {
                cells: run.table.len(),
                first: Box::new(run.first_failure.take().expect("every cell failed")),
            })
        }
    };
    let mut report = run.reports.swap_remove(best).expect("cell ran");
    report.selection = Some(Selection {
        param_name: base.family.param_name().to_string(),
        param_grid: params,
        c_grid: cs,
        table: run.table.clone(),
        nested: false,
        optimistic: true,
    });
    Ok(GridResult {
        best_param: run.table[best].param,
        best_c: run.table[best].c,
        table: run.table,
        report,
    })
}

/// Nested leave-one-subject-out: inside every outer fold, a grid search over
/// the training subjects picks `(param, C)`, which is then scored on the
/// held-out subject. Needs at least three subjects.
///
/// The report's `kernel` and `C` carry the most frequently chosen cell (ties
/// to the smaller values); each fold's own choice is in its summary.
pub fn nested_evaluate(
    ds: &LabeledDataset,
    base: &KernelConfig,
    param_grid: &[f64],
    c_grid: &[f64],
    opts: &EvalOptions,
) -> Result<EvalReport, EvalError> {
    check_dataset(ds)?;
    if ds.subjects().len() < 3 {
        return Err(EvalError::SingleSubject {
            needed: 3,
            found: ds.subjects().len(),
        });
    }
    let params = clean_grid(param_grid, "kernel parameter")?;
    let cs = clean_grid(c_grid, "C")?;
    let outer = loso_split(ds)?;
    let pairs = pairwise_per_param(ds, base, &params, opts.workers)?;

    let mut scores = Vec::with_capacity(outer.len());
    let mut repairs = Vec::with_capacity(outer.len());
    let mut chosen = Vec::with_capacity(outer.len());
    for fold in &outer {
        let inner = split_subset(ds, &fold.train);
        let mut run = run_grid(ds, &inner, &pairs, &cs, opts);
        let Some(best) = argmin_cell(&run.table) else {
            return Err(EvalError::NoUsableCell {
                cells: run.table.len(),
                first: Box::new(run.first_failure.take().expect("every cell failed")),
            });
        };
        let cell = &run.table[best];
        let (pi, ci) = (best / cs.len(), best % cs.len());
        let (cfg, pair) = &pairs[pi];
        let mut fold_run = run_folds(ds, pair, cfg, std::slice::from_ref(fold), &[cell.c], opts)?;
        scores.push(take_scores(&mut fold_run, 0)?.pop().expect("one fold"));
        repairs.push(fold_run[0].repair.clone());
        chosen.push((pi, ci));
    }

    let mut counts: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for &key in &chosen {
        *counts.entry(key).or_default() += 1;
    }
    let top = counts.values().copied().max().unwrap_or(0);
    let (pi, ci) = *counts
        .iter()
        .find(|(_, &n)| n == top)
        .map(|(k, _)| k)
        .expect("at least one fold");

    let summary = summarize(ds, &outer, &collect_scores(&outer, &scores), opts.auc_mode)?;
    let mut folds = fold_summaries(&outer, &repairs);
    for (f, &(p, c)) in folds.iter_mut().zip(&chosen) {
        f.chosen = Some((params[p], cs[c]));
    }
    Ok(EvalReport {
        kernel: base.with_param(params[pi]),
        c: cs[ci],
        classes: ds.classes().to_vec(),
        auc_mode: opts.auc_mode,
        per_class_auc: summary.per_class_auc,
        mean_auc: summary.mean_auc,
        classification_error: summary.error,
        predictions: summary.predictions,
        folds,
        selection: Some(Selection {
            param_name: base.family.param_name().to_string(),
            param_grid: params,
            c_grid: cs,
            table: Vec::new(),
            nested: true,
            optimistic: false,
        }),
        early_curve: None,
    })
}

/// Per-class AUC after cropping every series to its first `min(T, L)`
/// frames, for each budget `L` (sorted, duplicates removed).
pub fn early_curve(
    ds: &LabeledDataset,
    cfg: &KernelConfig,
    c: f64,
    budgets: &[usize],
    opts: &EvalOptions,
) -> Result<EarlyCurve, EvalError> {
    if budgets.is_empty() {
        return Err(EvalError::NoBudgets);
    }
    if let Some(&b) = budgets.iter().find(|&&b| b < 2) {
        return Err(EvalError::BadBudget(b));
    }
    let mut budgets = budgets.to_vec();
    budgets.sort_unstable();
    budgets.dedup();
    let mut per_class: BTreeMap<String, Vec<f64>> = ds
        .classes()
        .iter()
        .map(|c| (c.clone(), Vec::with_capacity(budgets.len())))
        .collect();
    let mut mean = Vec::with_capacity(budgets.len());
    for &b in &budgets {
        let report = loso_evaluate(&ds.cropped(b), cfg, c, opts)?;
        for (class, v) in &report.per_class_auc {
            per_class.get_mut(class).expect("same classes").push(*v);
        }
        mean.push(report.mean_auc);
    }
    Ok(EarlyCurve {
        budgets,
        per_class,
        mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::LabeledSeries;

    /// Channel 0 encodes the class as a constant level; channel 1 is a
    /// subject-specific wiggle.
    fn level_dataset(classes: usize, subjects: usize) -> LabeledDataset {
        let mut items = Vec::new();
        for s in 0..subjects {
            for c in 0..classes {
                let rows: Vec<Vec<f64>> = (0..5 + (s + c) % 3)
                    .map(|t| vec![c as f64, ((t + s) as f64 * 0.7).sin() * 0.1])
                    .collect();
                items.push(
                    LabeledSeries::new(
                        format!("c{c}_s{s}"),
                        TimeSeries::from_rows(&rows).unwrap(),
                        format!("c{c}"),
                        format!("s{s}"),
                    )
                    .unwrap(),
                );
            }
        }
        LabeledDataset::new(items).unwrap()
    }

    #[test]
    fn folds_partition_by_subject() {
        let ds = level_dataset(2, 3);
        let folds = loso_split(&ds).unwrap();
        assert_eq!(folds.len(), 3);
        let mut seen = vec![0; ds.len()];
        for f in &folds {
            for &i in &f.test {
                seen[i] += 1;
                assert_eq!(ds.items()[i].subject, f.subject);
            }
            for &i in &f.train {
                assert_ne!(ds.items()[i].subject, f.subject);
            }
            assert_eq!(f.train.len() + f.test.len(), ds.len());
        }
        assert!(seen.iter().all(|&n| n == 1));
    }

    #[test]
    fn uneven_subject_sizes() {
        let base = level_dataset(2, 1);
        let mut items = Vec::new();
        for (k, subject) in ["a", "a", "b", "c", "c", "c"].iter().enumerate() {
            let it = &base.items()[k % 2];
            items.push(
                LabeledSeries::new(format!("i{k}"), it.series.clone(), it.label.clone(), *subject)
                    .unwrap(),
            );
        }
        let ds = LabeledDataset::new(items).unwrap();
        let sizes: Vec<usize> = loso_split(&ds).unwrap().iter().map(|f| f.test.len()).collect();
        assert_eq!(sizes, vec![2, 1, 3]);
        let single = level_dataset(2, 1);
        assert!(matches!(
            loso_split(&single),
            Err(EvalError::SingleSubject { found: 1, .. })
        ));
    }

    #[test]
    fn separable_levels_give_perfect_auc() {
        let ds = level_dataset(3, 4);
        for cfg in [KernelConfig::pseudo_dtw(1.0), KernelConfig::global_alignment(1.0)] {
            let report = loso_evaluate(&ds, &cfg, 1.0, &EvalOptions::default()).unwrap();
            assert_eq!(report.predictions.len(), ds.len());
            for v in report.per_class_auc.values() {
                assert_eq!(*v, 1.0, "{cfg:?}");
            }
            assert_eq!(report.classification_error, 0.0);
        }
    }

    #[test]
    fn fold_average_mode() {
        let ds = level_dataset(3, 4);
        let opts = EvalOptions {
            auc_mode: AucMode::FoldAverage,
            ..EvalOptions::default()
        };
        let report = loso_evaluate(&ds, &KernelConfig::global_alignment(1.0), 1.0, &opts).unwrap();
        assert_eq!(report.mean_auc, 1.0);
    }

    #[test]
    fn single_cell_grid() {
        let ds = level_dataset(2, 3);
        let r = grid_search(
            &ds,
            &KernelConfig::global_alignment(1.0),
            &[0.5],
            &[2.0],
            &EvalOptions::default(),
        )
        .unwrap();
        assert_eq!((r.best_param, r.best_c), (0.5, 2.0));
        assert_eq!(r.table.len(), 1);
        assert!(r.report.selection.as_ref().unwrap().optimistic);
    }

    #[test]
    fn nested_records_choice_per_fold() {
        let ds = level_dataset(3, 4);
        let r = nested_evaluate(
            &ds,
            &KernelConfig::pseudo_dtw(1.0),
            &[0.5, 2.0],
            &[1.0, 4.0],
            &EvalOptions::default(),
        )
        .unwrap();
        assert_eq!(r.folds.len(), 4);
        assert!(r.folds.iter().all(|f| f.chosen.is_some() && f.repair.is_some()));
        let sel = r.selection.as_ref().unwrap();
        assert!(sel.nested && !sel.optimistic);
        assert_eq!(r.mean_auc, 1.0);
        assert!(matches!(
            nested_evaluate(&level_dataset(2, 2), &KernelConfig::pseudo_dtw(1.0), &[1.0], &[1.0], &EvalOptions::default()),
            Err(EvalError::SingleSubject { needed: 3, .. })
        ));
    }

    #[test]
    fn grid_rejects_bad_values() {
        let ds = level_dataset(2, 3);
        let cfg = KernelConfig::global_alignment(1.0);
        let opts = EvalOptions::default();
        assert!(matches!(
            grid_search(&ds, &cfg, &[], &[1.0], &opts),
            Err(EvalError::EmptyGrid(_))
        ));
        assert!(matches!(
            grid_search(&ds, &cfg, &[1.0], &[-1.0], &opts),
            Err(EvalError::BadGridValue(_))
        ));
    }

    #[test]
    fn budgets_validated() {
        let ds = level_dataset(2, 3);
        let cfg = KernelConfig::global_alignment(1.0);
        assert!(matches!(
            early_curve(&ds, &cfg, 1.0, &[1, 4], &EvalOptions::default()),
            Err(EvalError::BadBudget(1))
        ));
        assert!(matches!(
            early_curve(&ds, &cfg, 1.0, &[], &EvalOptions::default()),
            Err(EvalError::NoBudgets)
        ));
    }

    #[test]
    fn permutation_keeps_label_multiset() {
        let ds = level_dataset(3, 4);
        let p = permute_labels(&ds, 7).unwrap();
        let mut a: Vec<&str> = ds.labels();
        let mut b: Vec<&str> = p.labels();
        assert_ne!(a, b);
        a.sort();
        b.sort();
        assert_eq!(a, b);
        assert_eq!(permute_labels(&ds, 7).unwrap().labels(), p.labels());
    }

    #[test]
    fn table_layout() {
        let ds = level_dataset(2, 3);
        let r = loso_evaluate(&ds, &KernelConfig::global_alignment(1.0), 1.0, &EvalOptions::default())
            .unwrap();
        let table = render_table(&[("GA", &r)]);
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[0].starts_with("Kernel") && lines[0].ends_with("Average"));
        let avg = format!("{:.3}", r.mean_auc);
        assert!(lines[1].starts_with("GA") && lines[1].ends_with(&avg), "{table}");
    }
}
