use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Alignment kernels, PSD repair, SVM training and subject-wise evaluation
/// for multichannel time series.
#[derive(Debug, Parser)]
#[command(name = "tskernel", version)]
pub struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory [default: $TSKERNEL_OUT, else ./out].
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Worker threads; 0 uses one per logical core.
    #[arg(long, global = true, value_name = "N")]
    pub workers: Option<usize>,
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic landmark dataset with its manifest and ground truth.
    Synth(SynthArgs),
    /// Export the Gram matrix of a dataset, ordered by label.
    Gram(GramArgs),
    /// Leave-one-subject-out evaluation, optionally with a grid search.
    Eval(EvalArgs),
    /// AUC as a function of the number of leading frames.
    Early(EarlyArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub subjects: Option<usize>,
    #[arg(long)]
    pub frames_min: Option<usize>,
    #[arg(long)]
    pub frames_max: Option<usize>,
    /// Landmark noise standard deviation.
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub landmarks: Option<usize>,
    /// Shape-model components.
    #[arg(long)]
    pub components: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KernelArg {
    /// Pseudo-DTW, `exp(-DTW / t)` with repair.
    Dtw,
    /// Global alignment.
    Ga,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DivergenceArg {
    SqEuclidean,
    PhiSigma,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RepairModeArg {
    ExpThenRepair,
    RepairThenExp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AucModeArg {
    Pooled,
    FoldAverage,
}

#[derive(Debug, Default, Args)]
pub struct KernelArgs {
    /// Dataset manifest.
    #[arg(long, value_name = "PATH")]
    pub manifest: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub kernel: Option<KernelArg>,
    /// Pseudo-DTW bandwidth.
    #[arg(long = "t")]
    pub t: Option<f64>,
    /// GA local-kernel bandwidth.
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long, value_enum)]
    pub divergence: Option<DivergenceArg>,
    /// Sakoe-Chiba half-width.
    #[arg(long)]
    pub band: Option<usize>,
    #[arg(long, value_enum)]
    pub repair_mode: Option<RepairModeArg>,
    #[arg(long)]
    pub repair_tol: Option<f64>,
    #[arg(long)]
    pub repair_max_iter: Option<usize>,
}

#[derive(Debug, Default, Args)]
pub struct SvmArgs {
    /// Soft-margin constant.
    #[arg(long = "C")]
    pub c: Option<f64>,
    /// Kernel-parameter grid, comma separated.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub param_grid: Option<Vec<f64>>,
    /// C grid, comma separated.
    #[arg(long = "C-grid", value_delimiter = ',', num_args = 1..)]
    pub c_grid: Option<Vec<f64>>,
    /// Search the default grids (parameter 2^-5..2^10, C 2^-5..2^5).
    #[arg(long)]
    pub grid: bool,
    /// Choose hyperparameters inside each outer fold.
    #[arg(long)]
    pub nested: bool,
    #[arg(long, value_enum)]
    pub auc_mode: Option<AucModeArg>,
    #[arg(long)]
    pub svm_tol: Option<f64>,
    /// SMO pair-update cap.
    #[arg(long)]
    pub max_updates: Option<usize>,
    /// Shuffle labels with the run seed before evaluating.
    #[arg(long)]
    pub permute_labels: bool,
}

#[derive(Debug, Args)]
pub struct GramArgs {
    #[command(flatten)]
    pub kernel: KernelArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub kernel: KernelArgs,
    #[command(flatten)]
    pub svm: SvmArgs,
}

#[derive(Debug, Args)]
pub struct EarlyArgs {
    #[command(flatten)]
    pub kernel: KernelArgs,
    #[command(flatten)]
    pub svm: SvmArgs,
    /// Frame budgets: comma separated values or inclusive ranges, e.g. `2-16`.
    #[arg(long, value_delimiter = ',', num_args = 1.., value_parser = parse_budget_item)]
    pub budgets: Option<Vec<BudgetItem>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BudgetItem {
    pub lo: usize,
    pub hi: usize,
}

fn parse_budget_item(s: &str) -> Result<BudgetItem, String> {
    let num = |v: &str| {
        v.trim()
            .parse::<usize>()
            .map_err(|e| format!("bad budget `{v}`: {e}"))
    };
    match s.split_once('-') {
        Some((a, b)) => {
            let (lo, hi) = (num(a)?, num(b)?);
            if lo > hi {
                return Err(format!("empty budget range `{s}`"));
            }
            Ok(BudgetItem { lo, hi })
        }
        None => {
            let v = num(s)?;
            Ok(BudgetItem { lo: v, hi: v })
        }
    }
}

pub fn expand_budgets(items: &[BudgetItem]) -> Vec<usize> {
    items.iter().flat_map(|b| b.lo..=b.hi).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn budget_ranges() {
        let cli = Cli::parse_from(["tskernel", "early", "--budgets", "2-4,8"]);
        let Command::Early(args) = cli.command else {
            panic!("wrong subcommand")
        };
        assert_eq!(expand_budgets(&args.budgets.unwrap()), vec![2, 3, 4, 8]);
        assert!(parse_budget_item("5-3").is_err());
        assert!(parse_budget_item("x").is_err());
    }

    #[test]
    fn global_flags_after_subcommand() {
        let cli = Cli::parse_from(["tskernel", "gram", "--kernel", "ga", "--workers", "3"]);
        assert_eq!(cli.workers, Some(3));
        let cli = Cli::parse_from(["tskernel", "eval", "--C", "2", "--C-grid", "1,2"]);
        let Command::Eval(args) = cli.command else {
            panic!("wrong subcommand")
        };
        assert_eq!(args.svm.c, Some(2.0));
        assert_eq!(args.svm.c_grid, Some(vec![1.0, 2.0]));
    }
}
