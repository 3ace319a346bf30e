//! JSON run configuration and its merge with command-line flags.
//!
//! Precedence is flat: a flag replaces the file value of the same key.
//! Relative paths in a config file resolve against the file's directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tskernel::eval::{self, AucMode, EvalOptions};
use tskernel::kernels::{DivergenceKind, KernelConfig, KernelFamily};
use tskernel::psdrepair::{RepairMode, RepairSettings};
use tskernel::shape::SynthSpec;
use tskernel::svm;

use crate::args::{
    expand_budgets, AucModeArg, Cli, Command, DivergenceArg, KernelArg, KernelArgs, RepairModeArg,
    SvmArgs, SynthArgs,
};
use crate::CliError;

pub const OUT_ENV: &str = "TSKERNEL_OUT";
pub const DEFAULT_OUT: &str = "out";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelName {
    #[serde(alias = "pseudo_dtw")]
    Dtw,
    #[serde(alias = "global_alignment")]
    Ga,
}

impl From<KernelName> for KernelFamily {
    fn from(k: KernelName) -> Self {
        match k {
            KernelName::Dtw => KernelFamily::PseudoDtw,
            KernelName::Ga => KernelFamily::GlobalAlignment,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RepairConfig {
    pub mode: Option<RepairMode>,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
}

/// Every key is optional; commands check for the ones they need.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub manifest: Option<PathBuf>,
    pub kernel: Option<KernelName>,
    pub t: Option<f64>,
    pub sigma: Option<f64>,
    pub divergence: Option<DivergenceKind>,
    pub band: Option<usize>,
    pub param_grid: Option<Vec<f64>>,
    #[serde(rename = "C")]
    pub c: Option<f64>,
    #[serde(rename = "C_grid")]
    pub c_grid: Option<Vec<f64>>,
    /// Use the default grids for any dimension without an explicit grid or value.
    pub grid: Option<bool>,
    pub nested: Option<bool>,
    #[serde(default)]
    pub repair: RepairConfig,
    pub auc_mode: Option<AucMode>,
    pub svm_tol: Option<f64>,
    pub max_updates: Option<usize>,
    pub budgets: Option<Vec<usize>>,
    pub permute_labels: Option<bool>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    pub seed: Option<u64>,
    pub synth: Option<SynthSpec>,
}

fn overlay<T>(slot: &mut Option<T>, flag: Option<T>) {
    if flag.is_some() {
        *slot = flag;
    }
}

fn overlay_flag(slot: &mut Option<bool>, flag: bool) {
    if flag {
        *slot = Some(true);
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("invalid config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.manifest, &mut cfg.out].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    /// The config file named by `--config` (if any) with every given flag applied.
    pub fn from_cli(cli: &Cli) -> Result<Self, CliError> {
        let mut cfg = match &cli.config {
            Some(path) => Self::from_file(path)?,
            None => Self::default(),
        };
        overlay(&mut cfg.out, cli.out.clone());
        overlay(&mut cfg.workers, cli.workers);
        overlay(&mut cfg.seed, cli.seed);
        match &cli.command {
            Command::Synth(a) => cfg.apply_synth(a),
            Command::Gram(a) => cfg.apply_kernel(&a.kernel),
            Command::Eval(a) => {
                cfg.apply_kernel(&a.kernel);
                cfg.apply_svm(&a.svm);
            }
            Command::Early(a) => {
                cfg.apply_kernel(&a.kernel);
                cfg.apply_svm(&a.svm);
                overlay(&mut cfg.budgets, a.budgets.as_deref().map(expand_budgets));
            }
        }
        Ok(cfg)
    }

    fn apply_synth(&mut self, a: &SynthArgs) {
        let mut spec = self.synth.clone().unwrap_or_default();
        let set = |slot: &mut usize, v: Option<usize>| {
            if let Some(v) = v {
                *slot = v;
            }
        };
        set(&mut spec.classes, a.classes);
        set(&mut spec.subjects, a.subjects);
        set(&mut spec.frames_min, a.frames_min);
        set(&mut spec.frames_max, a.frames_max);
        set(&mut spec.landmarks, a.landmarks);
        set(&mut spec.components, a.components);
        if let Some(n) = a.noise {
            spec.noise = n;
        }
        self.synth = Some(spec);
    }

    fn apply_kernel(&mut self, a: &KernelArgs) {
        overlay(&mut self.manifest, a.manifest.clone());
        overlay(
            &mut self.kernel,
            a.kernel.map(|k| match k {
                KernelArg::Dtw => KernelName::Dtw,
                KernelArg::Ga => KernelName::Ga,
            }),
        );
        overlay(&mut self.t, a.t);
        overlay(&mut self.sigma, a.sigma);
        overlay(
            &mut self.divergence,
            a.divergence.map(|d| match d {
                DivergenceArg::SqEuclidean => DivergenceKind::SqEuclidean,
                DivergenceArg::PhiSigma => DivergenceKind::PhiSigma,
            }),
        );
        overlay(&mut self.band, a.band);
        overlay(
            &mut self.repair.mode,
            a.repair_mode.map(|m| match m {
                RepairModeArg::ExpThenRepair => RepairMode::ExpThenRepair,
                RepairModeArg::RepairThenExp => RepairMode::RepairThenExp,
            }),
        );
        overlay(&mut self.repair.tol, a.repair_tol);
        overlay(&mut self.repair.max_iter, a.repair_max_iter);
    }

    fn apply_svm(&mut self, a: &SvmArgs) {
        overlay(&mut self.c, a.c);
        overlay(&mut self.param_grid, a.param_grid.clone());
        overlay(&mut self.c_grid, a.c_grid.clone());
        overlay_flag(&mut self.grid, a.grid);
        overlay_flag(&mut self.nested, a.nested);
        overlay_flag(&mut self.permute_labels, a.permute_labels);
        overlay(
            &mut self.auc_mode,
            a.auc_mode.map(|m| match m {
                AucModeArg::Pooled => AucMode::Pooled,
                AucModeArg::FoldAverage => AucMode::FoldAverage,
            }),
        );
        overlay(&mut self.svm_tol, a.svm_tol);
        overlay(&mut self.max_updates, a.max_updates);
    }

    /// `--out`, else the config file, else `$TSKERNEL_OUT`, else `./out`.
    pub fn out_dir(&self) -> PathBuf {
        self.out
            .clone()
            .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(1)
    }

    pub fn workers(&self) -> usize {
        self.workers.unwrap_or(0)
    }

    pub fn synth_spec(&self) -> Result<SynthSpec, CliError> {
        let mut spec = self.synth.clone().unwrap_or_default();
        if let Some(seed) = self.seed {
            spec.seed = seed;
        }
        spec.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(spec)
    }

    pub fn manifest(&self) -> Result<&Path, CliError> {
        let path = self
            .manifest
            .as_deref()
            .ok_or_else(|| CliError::Config("no dataset manifest given (--manifest)".into()))?;
        if !path.is_file() {
            return Err(CliError::Config(format!(
                "manifest {} does not exist",
                path.display()
            )));
        }
        Ok(path)
    }

    pub fn family(&self) -> Result<KernelFamily, CliError> {
        self.kernel
            .map(Into::into)
            .ok_or_else(|| CliError::Config("no kernel given (--kernel dtw|ga)".into()))
    }

    /// Kernel settings other than the searched parameter, which is filled
    /// with the fixed value when present and left empty otherwise.
    fn base_kernel(&self) -> Result<KernelConfig, CliError> {
        let family = self.family()?;
        let mut cfg = KernelConfig::for_family(family, 1.0);
        cfg.t = self.t;
        cfg.sigma = self.sigma;
        if let Some(d) = self.divergence {
            cfg.divergence = d;
        }
        cfg.band = self.band;
        Ok(cfg)
    }

    /// Fully specified kernel, for commands without a search.
    pub fn kernel_config(&self) -> Result<KernelConfig, CliError> {
        let cfg = self.base_kernel()?;
        cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn repair(&self) -> Result<RepairSettings, CliError> {
        let d = RepairSettings::default();
        let s = RepairSettings {
            mode: self.repair.mode.unwrap_or(d.mode),
            tol: self.repair.tol.unwrap_or(d.tol),
            max_iter: self.repair.max_iter.unwrap_or(d.max_iter),
        };
        if !(s.tol > 0.0 && s.tol.is_finite()) || s.max_iter == 0 {
            return Err(CliError::Config(
                "repair tolerance must be positive and max_iter at least 1".into(),
            ));
        }
        Ok(s)
    }

    pub fn eval_options(&self) -> Result<EvalOptions, CliError> {
        let opts = EvalOptions {
            repair: self.repair()?,
            svm_tol: self.svm_tol.unwrap_or(svm::DEFAULT_TOL),
            max_updates: self.max_updates.unwrap_or(svm::DEFAULT_MAX_UPDATES),
            auc_mode: self.auc_mode.unwrap_or_default(),
            workers: self.workers(),
        };
        if !(opts.svm_tol > 0.0 && opts.svm_tol.is_finite()) || opts.max_updates == 0 {
            return Err(CliError::Config(
                "svm_tol must be positive and max_updates at least 1".into(),
            ));
        }
        Ok(opts)
    }

    /// Fixed hyperparameters, or the grids to search.
    pub fn selection(&self) -> Result<Selection, CliError> {
        let base = self.base_kernel()?;
        let fixed_param = base.param();
        let use_defaults = self.grid.unwrap_or(false);
        let nested = self.nested.unwrap_or(false);
        let searching =
            use_defaults || nested || self.param_grid.is_some() || self.c_grid.is_some();
        let positive = |v: f64, what: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(v)
            } else {
                Err(CliError::Config(format!("{what} must be positive, got {v}")))
            }
        };
        if !searching {
            let cfg = self.kernel_config()?;
            let c = self
                .c
                .ok_or_else(|| CliError::Config("no C given (--C, --C-grid or --grid)".into()))?;
            return Ok(Selection::Fixed {
                kernel: cfg,
                c: positive(c, "C")?,
            });
        }
        let grid_of = |explicit: &Option<Vec<f64>>,
                       fixed: Option<f64>,
                       default: fn() -> Vec<f64>,
                       what: &str|
         -> Result<Vec<f64>, CliError> {
            let g = match (explicit, fixed) {
                (Some(g), _) => g.clone(),
                (None, Some(v)) if !use_defaults => vec![v],
                _ => default(),
            };
            if g.is_empty() {
                return Err(CliError::Config(format!("{what} grid is empty")));
            }
            for &v in &g {
                positive(v, what)?;
            }
            Ok(g)
        };
        let params = grid_of(
            &self.param_grid,
            fixed_param,
            eval::default_param_grid,
            base.family.param_name(),
        )?;
        let cs = grid_of(&self.c_grid, self.c, eval::default_c_grid, "C")?;
        // every grid value must give a valid kernel
        for &p in &params {
            base.with_param(p)
                .validate()
                .map_err(|e| CliError::Config(e.to_string()))?;
        }
        Ok(Selection::Search {
            base,
            params,
            cs,
            nested,
        })
    }

    pub fn budgets(&self) -> Result<Vec<usize>, CliError> {
        let b = self.budgets.clone().unwrap_or_else(eval::default_budgets);
        if b.is_empty() {
            return Err(CliError::Config("budget list is empty".into()));
        }
        if let Some(bad) = b.iter().find(|&&v| v < 2) {
            return Err(CliError::Config(format!("frame budgets must be at least 2, got {bad}")));
        }
        Ok(b)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Selection {
    Fixed {
        kernel: KernelConfig,
        c: f64,
    },
    Search {
        base: KernelConfig,
        params: Vec<f64>,
        cs: Vec<f64>,
        nested: bool,
    },
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::Parser;

    fn parse(args: &[&str]) -> RunConfig {
        RunConfig::from_cli(&Cli::parse_from(args)).unwrap()
    }

    #[test]
    fn flags_override_file_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        fs::write(
            &path,
            r#"{"kernel": "ga", "sigma": 2.0, "C": 4.0, "manifest": "data/manifest.json",
                "repair": {"tol": 1e-6}, "seed": 5}"#,
        )
        .unwrap();
        let p = path.to_str().unwrap();
        let cfg = parse(&["tskernel", "--config", p, "eval", "--sigma", "0.5"]);
        assert_eq!(cfg.sigma, Some(0.5));
        assert_eq!(cfg.c, Some(4.0));
        assert_eq!(cfg.seed(), 5);
        assert_eq!(cfg.repair.tol, Some(1e-6));
        assert_eq!(cfg.manifest, Some(dir.path().join("data/manifest.json")));
        let cfg = parse(&["tskernel", "--config", p, "--seed", "9", "eval", "--kernel", "dtw", "--t", "3"]);
        assert_eq!(cfg.seed(), 9);
        assert_eq!(cfg.kernel_config().unwrap(), KernelConfig::pseudo_dtw(3.0).with_sigma(2.0));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        fs::write(&path, r#"{"kernal": "ga"}"#).unwrap();
        assert!(matches!(RunConfig::from_file(&path), Err(CliError::Config(_))));
    }

    #[test]
    fn selection_modes() {
        let fixed = parse(&["tskernel", "eval", "--kernel", "ga", "--sigma", "1", "--C", "1"]);
        assert_eq!(
            fixed.selection().unwrap(),
            Selection::Fixed {
                kernel: KernelConfig::global_alignment(1.0),
                c: 1.0
            }
        );
        let partial = parse(&["tskernel", "eval", "--kernel", "ga", "--sigma", "1", "--C-grid", "1,2"]);
        let Selection::Search { params, cs, .. } = partial.selection().unwrap() else {
            panic!("expected a search")
        };
        assert_eq!((params, cs), (vec![1.0], vec![1.0, 2.0]));
        let full = parse(&["tskernel", "eval", "--kernel", "dtw", "--grid"]);
        let Selection::Search { params, cs, .. } = full.selection().unwrap() else {
            panic!("expected a search")
        };
        assert_eq!((params.len(), cs.len()), (16, 11));
        let missing_c = parse(&["tskernel", "eval", "--kernel", "ga", "--sigma", "1"]);
        assert!(matches!(missing_c.selection(), Err(CliError::Config(_))));
        let bad = parse(&["tskernel", "eval", "--kernel", "ga", "--param-grid", "1,-2", "--C", "1"]);
        assert!(matches!(bad.selection(), Err(CliError::Config(_))));
    }

    #[test]
    fn synth_flags_and_seed() {
        let cfg = parse(&["tskernel", "--seed", "4", "synth", "--classes", "3", "--noise", "0"]);
        let spec = cfg.synth_spec().unwrap();
        assert_eq!((spec.classes, spec.seed, spec.noise), (3, 4, 0.0));
        let bad = parse(&["tskernel", "synth", "--classes", "1"]);
        assert!(matches!(bad.synth_spec(), Err(CliError::Config(_))));
    }
}
