//! Alignment kernels for multichannel time series: pseudo-DTW with
//! positive-semidefinite repair, global alignment, a precomputed-kernel SVM,
//! leave-one-subject-out evaluation and a 3D landmark shape pipeline.
//!
//! The guide in `book/` walks through each module; its examples run as
//! doctests of this crate.

pub mod eval;
pub mod kernels;
pub mod psdrepair;
pub mod seed;
pub mod series;
pub mod shape;
pub mod svm;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/overview.md")]
    mod overview {}
    #[doc = include_str!("../../../book/src/kernels.md")]
    mod kernels {}
    #[doc = include_str!("../../../book/src/repair.md")]
    mod repair {}
    #[doc = include_str!("../../../book/src/svm.md")]
    mod svm {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/shape.md")]
    mod shape {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
