//! Local divergences, DTW, the global alignment kernel, and pairwise matrices
//! over a dataset.

mod alignment;
mod divergence;
mod dtw;
mod ga;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use alignment::{
    alignment_count, enumerate_alignments, AlignmentPath, DEFAULT_ENUMERATION_CAP,
};
pub use divergence::{phi_sigma, phi_sigma_of_sq, sq_euclidean, DivergenceKind, LocalDivergence};
pub use dtw::{dtw_distance, dtw_distance_banded, dtw_path};
pub use ga::{ga_kernel, ga_kernel_linear, ga_kernel_with, log_sum_exp3, GaValue};

use crate::psdrepair::RepairReport;
use crate::series::{format_real, LabeledDataset, TimeSeries};

#[derive(Debug, Error)]
pub enum KernelError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("sigma must be positive and finite, got {0}")]
    NonPositiveSigma(f64),
    #[error("t must be positive and finite, got {0}")]
    NonPositiveT(f64),
    #[error("{family:?} kernel requires parameter `{param}`")]
    MissingParameter {
        family: KernelFamily,
        param: &'static str,
    },
    #[error("alignment set has {count} paths, above the cap of {cap}")]
    TooLarge { count: u128, cap: u128 },
    #[error("series must have at least one frame")]
    EmptySeries,
    #[error("path violates alignment invariants")]
    InvalidPath,
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("kernel value between items {i} and {j} is not finite (log value {log_value})")]
    NonFiniteEntry { i: usize, j: usize, log_value: f64 },
    #[error("failed to build worker pool: {0}")]
    WorkerPool(String),
}

/// Which alignment kernel to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    /// `exp(-DTW / t)` after repair of the distance-derived matrix.
    PseudoDtw,
    /// Sum over all alignments of the product of local kernels.
    GlobalAlignment,
}

impl KernelFamily {
    /// Name of the family's own hyperparameter.
    pub fn param_name(self) -> &'static str {
        match self {
            KernelFamily::PseudoDtw => "t",
            KernelFamily::GlobalAlignment => "sigma",
        }
    }

    pub fn short_name(self) -> &'static str {
        match self {
            KernelFamily::PseudoDtw => "DTW",
            KernelFamily::GlobalAlignment => "GA",
        }
    }
}

/// Kernel family, its parameters, and the local divergence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub family: KernelFamily,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    pub divergence: DivergenceKind,
    /// Sakoe-Chiba half-width; `None` leaves alignments unconstrained.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub band: Option<usize>,
}

impl KernelConfig {
    /// Pseudo-DTW with squared Euclidean divergence.
    pub fn pseudo_dtw(t: f64) -> Self {
        Self {
            family: KernelFamily::PseudoDtw,
            t: Some(t),
            sigma: None,
            divergence: DivergenceKind::SqEuclidean,
            band: None,
        }
    }

    /// Global alignment with the `phi_sigma` divergence.
    pub fn global_alignment(sigma: f64) -> Self {
        Self {
            family: KernelFamily::GlobalAlignment,
            t: None,
            sigma: Some(sigma),
            divergence: DivergenceKind::PhiSigma,
            band: None,
        }
    }

    /// The default configuration of `family` with its parameter set to `param`.
    pub fn for_family(family: KernelFamily, param: f64) -> Self {
        match family {
            KernelFamily::PseudoDtw => Self::pseudo_dtw(param),
            KernelFamily::GlobalAlignment => Self::global_alignment(param),
        }
    }

    pub fn with_divergence(mut self, divergence: DivergenceKind) -> Self {
        self.divergence = divergence;
        self
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = Some(sigma);
        self
    }

    pub fn with_band(mut self, band: Option<usize>) -> Self {
        self.band = band;
        self
    }

    /// Replaces the family's own parameter (`t` or `sigma`).
    pub fn with_param(mut self, value: f64) -> Self {
        match self.family {
            KernelFamily::PseudoDtw => self.t = Some(value),
            KernelFamily::GlobalAlignment => self.sigma = Some(value),
        }
        self
    }

    /// The family's own parameter (`t` or `sigma`), if set.
    pub fn param(&self) -> Option<f64> {
        match self.family {
            KernelFamily::PseudoDtw => self.t,
            KernelFamily::GlobalAlignment => self.sigma,
        }
    }

    pub fn validate(&self) -> Result<(), KernelError> {
        match self.family {
            KernelFamily::PseudoDtw => {
                let t = self.t.ok_or(KernelError::MissingParameter {
                    family: self.family,
                    param: "t",
                })?;
                if !(t > 0.0 && t.is_finite()) {
                    return Err(KernelError::NonPositiveT(t));
                }
            }
            KernelFamily::GlobalAlignment => {
                if self.sigma.is_none() {
                    return Err(KernelError::MissingParameter {
                        family: self.family,
                        param: "sigma",
                    });
                }
            }
        }
        if let Some(sigma) = self.sigma {
            divergence::check_sigma(sigma)?;
        }
        if self.divergence == DivergenceKind::PhiSigma && self.sigma.is_none() {
            return Err(KernelError::MissingParameter {
                family: self.family,
                param: "sigma",
            });
        }
        Ok(())
    }

    pub fn local_divergence(&self) -> Result<LocalDivergence, KernelError> {
        self.validate()?;
        Ok(match self.divergence {
            DivergenceKind::SqEuclidean => LocalDivergence::SqEuclidean,
            DivergenceKind::PhiSigma => LocalDivergence::PhiSigma {
                sigma: self.sigma.expect("validated"),
            },
        })
    }
}

/// A symmetric kernel matrix over a list of items.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    pub values: DMatrix<f64>,
    pub config: KernelConfig,
    pub repaired: bool,
    pub item_ids: Vec<String>,
    pub series_lengths: Vec<usize>,
    pub repair: Option<RepairReport>,
}

/// Symmetric pairwise DTW distances, before kernelization.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    pub values: DMatrix<f64>,
    pub config: KernelConfig,
    pub item_ids: Vec<String>,
    pub series_lengths: Vec<usize>,
}

/// Output of [`gram_matrix`]: kernel values for GA, distances for pseudo-DTW.
#[derive(Debug, Clone, PartialEq)]
pub enum Pairwise {
    Kernel(GramMatrix),
    Distance(DistanceMatrix),
}

impl Pairwise {
    pub fn values(&self) -> &DMatrix<f64> {
        match self {
            Pairwise::Kernel(g) => &g.values,
            Pairwise::Distance(d) => &d.values,
        }
    }
}

/// JSON sidecar describing an exported Gram matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GramSidecar {
    pub size: usize,
    pub config: KernelConfig,
    pub repaired: bool,
    pub item_ids: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
    pub series_lengths: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repair_report: Option<RepairReport>,
}

impl GramMatrix {
    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    /// Rows and columns reordered so that new index `k` is old index `order[k]`.
    pub fn permuted(&self, order: &[usize]) -> GramMatrix {
        GramMatrix {
            values: select(&self.values, order, order),
            item_ids: order.iter().map(|&i| self.item_ids[i].clone()).collect(),
            series_lengths: order.iter().map(|&i| self.series_lengths[i]).collect(),
            ..self.clone()
        }
    }

    /// Square CSV, row-major, no header.
    pub fn to_csv(&self) -> String {
        matrix_to_csv(&self.values)
    }

    pub fn sidecar(&self, labels: Option<Vec<String>>) -> GramSidecar {
        GramSidecar {
            size: self.len(),
            config: self.config,
            repaired: self.repaired,
            item_ids: self.item_ids.clone(),
            labels,
            series_lengths: self.series_lengths.clone(),
            repair_report: self.repair.clone(),
        }
    }
}

impl DistanceMatrix {
    pub fn permuted(&self, order: &[usize]) -> DistanceMatrix {
        DistanceMatrix {
            values: select(&self.values, order, order),
            item_ids: order.iter().map(|&i| self.item_ids[i].clone()).collect(),
            series_lengths: order.iter().map(|&i| self.series_lengths[i]).collect(),
            ..self.clone()
        }
    }

    pub fn to_csv(&self) -> String {
        matrix_to_csv(&self.values)
    }
}

/// Submatrix with the given rows and columns, in order.
pub fn select(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |r, c| m[(rows[r], cols[c])])
}

pub fn matrix_to_csv(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for r in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|c| format_real(m[(r, c)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Pairwise matrix over `ds` for `cfg`.
///
/// Global alignment yields the kernel matrix `k_GA(s_i, s_j)`; pseudo-DTW
/// yields the DTW distance matrix, which `psdrepair::dtw_to_kernel` turns into
/// a kernel. Only the upper triangle is evaluated and then mirrored. Cells are
/// spread over `workers` threads (`0` means one per logical core); the result
/// is bitwise identical for any worker count.
pub fn gram_matrix(
    ds: &LabeledDataset,
    cfg: &KernelConfig,
    workers: usize,
) -> Result<Pairwise, KernelError> {
    if ds.is_empty() {
        return Err(KernelError::EmptyDataset);
    }
    cfg.validate()?;
    let series: Vec<&TimeSeries> = ds.items().iter().map(|it| &it.series).collect();
    let values = pairwise_values(&series, cfg, workers)?;
    let item_ids = ds.ids();
    let series_lengths = ds.series_lengths();
    Ok(match cfg.family {
        KernelFamily::GlobalAlignment => Pairwise::Kernel(GramMatrix {
            values,
            config: *cfg,
            repaired: false,
            item_ids,
            series_lengths,
            repair: None,
        }),
        KernelFamily::PseudoDtw => Pairwise::Distance(DistanceMatrix {
            values,
            config: *cfg,
            item_ids,
            series_lengths,
        }),
    })
}

/// Upper-triangle evaluation of the family's pairwise quantity, mirrored.
pub fn pairwise_values(
    series: &[&TimeSeries],
    cfg: &KernelConfig,
    workers: usize,
) -> Result<DMatrix<f64>, KernelError> {
    let div = cfg.local_divergence()?;
    let k = series.len();
    let cells: Vec<(usize, usize)> = (0..k).flat_map(|i| (i..k).map(move |j| (i, j))).collect();
    let eval = |&(i, j): &(usize, usize)| -> Result<f64, KernelError> {
        match cfg.family {
            KernelFamily::PseudoDtw => dtw_distance_banded(series[i], series[j], &div, cfg.band),
            KernelFamily::GlobalAlignment => {
                let v = ga_kernel_with(series[i], series[j], &div, cfg.band)?;
                if !v.value.is_finite() {
                    return Err(KernelError::NonFiniteEntry {
                        i,
                        j,
                        log_value: v.log_value,
                    });
                }
                Ok(v.value)
            }
        }
    };
    let results: Vec<Result<f64, KernelError>> =
        with_workers(workers, || cells.par_iter().map(eval).collect())?;
    let mut out = DMatrix::zeros(k, k);
    for (&(i, j), v) in cells.iter().zip(results) {
        let v = v?;
        out[(i, j)] = v;
        out[(j, i)] = v;
    }
    Ok(out)
}

/// Runs `f` inside a rayon pool of `workers` threads (`0` = default size).
pub fn with_workers<T: Send>(
    workers: usize,
    f: impl FnOnce() -> T + Send,
) -> Result<T, KernelError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| KernelError::WorkerPool(e.to_string()))?;
    Ok(pool.install(f))
}
