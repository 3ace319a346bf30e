use std::path::Path;

use tskernel::eval::{
    self, early_curve, grid_search, loso_evaluate, nested_evaluate, render_table, EvalOptions,
    EvalReport, GridCell,
};
use tskernel::kernels::{gram_matrix, Pairwise};
use tskernel::psdrepair::dtw_to_kernel;
use tskernel::series::{format_real, load_dataset, LabeledDataset};
use tskernel::shape::synth_dataset;

use crate::config::{RunConfig, Selection};
use crate::output::{file_stem, Outputs};
use crate::CliError;

/// Files to write and the text for standard output.
pub struct CommandOutput {
    pub files: Outputs,
    pub stdout: String,
}

fn compute<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Compute(e.to_string())
}

fn load(cfg: &RunConfig) -> Result<LabeledDataset, CliError> {
    let path = cfg.manifest()?;
    load_dataset(path).map_err(|e| CliError::Input(e.to_string()))
}

pub fn synth(cfg: &RunConfig, out_dir: &Path) -> Result<CommandOutput, CliError> {
    let spec = cfg.synth_spec()?;
    let out = synth_dataset(&spec).map_err(compute)?;
    let mut files = Outputs::default();
    files.extend(out.files());
    let stdout = format!(
        "wrote {} sequences ({} classes x {} subjects) to {}\n",
        out.dataset.len(),
        spec.classes,
        spec.subjects,
        out_dir.display()
    );
    Ok(CommandOutput { files, stdout })
}

/// Item order grouped by label (sorted), manifest order within a label.
fn label_order(ds: &LabeledDataset) -> Vec<usize> {
    let mut order: Vec<usize> = (0..ds.len()).collect();
    order.sort_by(|&a, &b| ds.items()[a].label.cmp(&ds.items()[b].label));
    order
}

pub fn gram(cfg: &RunConfig) -> Result<CommandOutput, CliError> {
    let kernel = cfg.kernel_config()?;
    let repair = cfg.repair()?;
    let ds = load(cfg)?;
    let order = label_order(&ds);
    let labels: Vec<String> = order.iter().map(|&i| ds.items()[i].label.clone()).collect();
    let mut files = Outputs::default();
    let gram = match gram_matrix(&ds, &kernel, cfg.workers()).map_err(compute)? {
        Pairwise::Kernel(g) => g.permuted(&order),
        Pairwise::Distance(d) => {
            let d = d.permuted(&order);
            files.add("distances.csv", d.to_csv());
            dtw_to_kernel(&d, kernel.t.expect("validated"), &repair).map_err(compute)?
        }
    };
    files.add("gram.csv", gram.to_csv());
    let sidecar = gram.sidecar(Some(labels));
    files.add(
        "gram.json",
        serde_json::to_string_pretty(&sidecar).expect("sidecar serializes") + "\n",
    );
    let mut stdout = format!(
        "{} Gram matrix {}x{}",
        kernel.family.short_name(),
        gram.len(),
        gram.len()
    );
    if let Some(r) = &gram.repair {
        stdout.push_str(&format!(
            ", min eigenvalue {:.3e} -> {:.3e} after {} iterations",
            r.min_eig_before, r.min_eig_after, r.iterations
        ));
    }
    stdout.push('\n');
    Ok(CommandOutput { files, stdout })
}

fn dataset_for_eval(cfg: &RunConfig) -> Result<LabeledDataset, CliError> {
    let ds = load(cfg)?;
    if cfg.permute_labels.unwrap_or(false) {
        return eval::permute_labels(&ds, cfg.seed()).map_err(compute);
    }
    Ok(ds)
}

fn evaluate(
    ds: &LabeledDataset,
    selection: &Selection,
    opts: &EvalOptions,
) -> Result<EvalReport, CliError> {
    match selection {
        Selection::Fixed { kernel, c } => loso_evaluate(ds, kernel, *c, opts).map_err(compute),
        Selection::Search {
            base,
            params,
            cs,
            nested: false,
        } => Ok(grid_search(ds, base, params, cs, opts)
            .map_err(compute)?
            .report),
        Selection::Search {
            base,
            params,
            cs,
            nested: true,
        } => nested_evaluate(ds, base, params, cs, opts).map_err(compute),
    }
}

fn grid_csv(table: &[GridCell], param_name: &str) -> String {
    let opt = |v: Option<f64>| v.map(format_real).unwrap_or_default();
    let mut out = format!("{param_name},C,error,mean_auc,failure\n");
    for cell in table {
        let failure = cell
            .failure
            .as_deref()
            .map(|f| format!("\"{}\"", f.replace('"', "'")))
            .unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            format_real(cell.param),
            format_real(cell.c),
            opt(cell.error),
            opt(cell.mean_auc),
            failure
        ));
    }
    out
}

fn report_files(report: &EvalReport, name: &str, files: &mut Outputs) -> Result<(), CliError> {
    files.add(name, report.to_json() + "\n");
    for (class, curve) in report.roc_curves().map_err(compute)? {
        files.add(format!("roc/{}.csv", file_stem(&class)), curve.to_csv());
    }
    if let Some(sel) = &report.selection {
        if !sel.table.is_empty() {
            files.add("grid.csv", grid_csv(&sel.table, &sel.param_name));
        }
    }
    Ok(())
}

pub fn eval(cfg: &RunConfig) -> Result<CommandOutput, CliError> {
    let selection = cfg.selection()?;
    let opts = cfg.eval_options()?;
    let ds = dataset_for_eval(cfg)?;
    let report = evaluate(&ds, &selection, &opts)?;
    let mut files = Outputs::default();
    report_files(&report, "report.json", &mut files)?;
    let stdout = render_table(&[(report.kernel.family.short_name(), &report)]);
    Ok(CommandOutput { files, stdout })
}

pub fn early(cfg: &RunConfig) -> Result<CommandOutput, CliError> {
    let selection = cfg.selection()?;
    if matches!(selection, Selection::Search { nested: true, .. }) {
        return Err(CliError::Config(
            "nested selection is not available for the early curve".into(),
        ));
    }
    let budgets = cfg.budgets()?;
    let opts = cfg.eval_options()?;
    let ds = dataset_for_eval(cfg)?;
    // hyperparameters come from the full-length data
    let mut report = evaluate(&ds, &selection, &opts)?;
    let curve = early_curve(&ds, &report.kernel, report.c, &budgets, &opts).map_err(compute)?;

    let mut files = Outputs::default();
    files.add("early.csv", curve.wide_csv());
    files.add("early/mean.csv", curve.mean_csv());
    for class in curve.per_class.keys() {
        files.add(
            format!("early/{}.csv", file_stem(class)),
            curve.class_csv(class).expect("known class"),
        );
    }
    let mut stdout = format!(
        "{} early classification, {}={} C={}\n",
        report.kernel.family.short_name(),
        report.kernel.family.param_name(),
        format_real(report.kernel.param().expect("validated")),
        format_real(report.c)
    );
    stdout.push_str("budget  mean AUC\n");
    for (b, m) in curve.budgets.iter().zip(&curve.mean) {
        stdout.push_str(&format!("{b:>6}  {m:>8.3}\n"));
    }
    report.early_curve = Some(curve);
    files.add("early.json", report.to_json() + "\n");
    Ok(CommandOutput { files, stdout })
}
