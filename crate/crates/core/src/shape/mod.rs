//! 3D point distribution model: PCA shape basis, similarity Procrustes, and
//! the map from landmark sequences to shape-parameter time series.
//!
//! A frame with `M` landmarks is generated as
//!
//! ```text
//! x_i = s R (xbar_i + Phi_i q) + t
//! ```
//!
//! where `Phi_i` is the 3-row block of the basis belonging to landmark `i`.
//! Flattened frames use the order `x1, y1, z1, x2, ...`.

mod synth;

use std::fs;
use std::path::Path;

use nalgebra::{
    DMatrix, DVector, Matrix3, Matrix3xX, Matrix4, Quaternion, Rotation3, SymmetricEigen,
    UnitQuaternion, Vector3,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::series::{self, SeriesError, TimeSeries};

pub use synth::{
    class_names, class_templates, synth_dataset, synth_from_templates, synth_pdm, ClassTemplate,
    GroundTruth, GroundTruthItem, SynthOutput, SynthSpec,
};

/// Orthonormality tolerance for PDM bases.
pub const ORTHONORMAL_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum ShapeError {
    #[error("a frame needs at least 3 landmarks, got {0}")]
    TooFewLandmarks(usize),
    #[error("non-finite coordinate at landmark {landmark}")]
    NonFinite { landmark: usize },
    #[error("landmark row has {0} values, expected a multiple of 3")]
    BadFlatLength(usize),
    #[error("need at least {needed} frames, got {found}")]
    TooFewFrames { needed: usize, found: usize },
    #[error("data has rank {rank}, fewer than the {requested} requested components")]
    DegenerateData { rank: usize, requested: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("frame {frame} is degenerate (collinear or coincident landmarks)")]
    DegenerateFrame { frame: usize },
    #[error("invalid PDM: {0}")]
    InvalidPdm(String),
    #[error("invalid rigid parameters: {0}")]
    InvalidRigid(String),
    #[error("invalid synthesis spec: {0}")]
    InvalidSpec(String),
    #[error("failed to parse {what}: {message}")]
    Parse { what: String, message: String },
    #[error(transparent)]
    Series(#[from] SeriesError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// `M` landmarks in 3D, stored one landmark per column.
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkFrame {
    points: Matrix3xX<f64>,
}

impl LandmarkFrame {
    pub fn new(points: Matrix3xX<f64>) -> Result<Self, ShapeError> {
        if points.ncols() < 3 {
            return Err(ShapeError::TooFewLandmarks(points.ncols()));
        }
        for (i, col) in points.column_iter().enumerate() {
            if !col.iter().all(|v| v.is_finite()) {
                return Err(ShapeError::NonFinite { landmark: i });
            }
        }
        Ok(Self { points })
    }

    pub fn from_points(points: &[[f64; 3]]) -> Result<Self, ShapeError> {
        Self::new(Matrix3xX::from_fn(points.len(), |r, c| points[c][r]))
    }

    /// Parses `x1, y1, z1, x2, ...`.
    pub fn from_flat(flat: &[f64]) -> Result<Self, ShapeError> {
        if flat.len() % 3 != 0 {
            return Err(ShapeError::BadFlatLength(flat.len()));
        }
        Self::new(Matrix3xX::from_column_slice(flat))
    }

    pub fn landmarks(&self) -> usize {
        self.points.ncols()
    }

    pub fn points(&self) -> &Matrix3xX<f64> {
        &self.points
    }

    pub fn point(&self, i: usize) -> Vector3<f64> {
        self.points.column(i).into_owned()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.points.as_slice().to_vec()
    }

    pub fn to_points(&self) -> Vec<[f64; 3]> {
        self.points
            .column_iter()
            .map(|c| [c[0], c[1], c[2]])
            .collect()
    }

    pub fn centroid(&self) -> Vector3<f64> {
        self.points.column_mean()
    }

    /// `s R x + t` applied to every landmark.
    pub fn transformed(&self, rigid: &RigidParams) -> LandmarkFrame {
        LandmarkFrame {
            points: rigid.apply(&self.points),
        }
    }
}

/// Similarity transform `x -> s R x + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidParams {
    pub scale: f64,
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl RigidParams {
    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Checks `s > 0`, `R^T R = I` and `det R = 1` within `1e-10`.
    pub fn new(
        scale: f64,
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
    ) -> Result<Self, ShapeError> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(ShapeError::InvalidRigid(format!("scale {scale}")));
        }
        let ortho = (rotation.transpose() * rotation - Matrix3::identity()).amax();
        let det = rotation.determinant();
        if ortho > 1e-10 || (det - 1.0).abs() > 1e-10 {
            return Err(ShapeError::InvalidRigid(format!(
                "rotation off by {ortho:e}, det {det}"
            )));
        }
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(ShapeError::InvalidRigid("non-finite translation".into()));
        }
        Ok(Self {
            scale,
            rotation,
            translation,
        })
    }

    /// `R = R1(alpha) R2(beta) R3(gamma)`, rotations about x, y and z.
    pub fn from_euler(
        scale: f64,
        alpha: f64,
        beta: f64,
        gamma: f64,
        translation: Vector3<f64>,
    ) -> Result<Self, ShapeError> {
        let r = Rotation3::from_axis_angle(&Vector3::x_axis(), alpha)
            * Rotation3::from_axis_angle(&Vector3::y_axis(), beta)
            * Rotation3::from_axis_angle(&Vector3::z_axis(), gamma);
        Self::new(scale, r.into_inner(), translation)
    }

    pub fn apply(&self, points: &Matrix3xX<f64>) -> Matrix3xX<f64> {
        let mut out = self.rotation * points * self.scale;
        for mut col in out.column_iter_mut() {
            col += self.translation;
        }
        out
    }

    /// `self` after `other`: `x -> self(other(x))`.
    pub fn compose(&self, other: &RigidParams) -> RigidParams {
        RigidParams {
            scale: self.scale * other.scale,
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation * self.scale + self.translation,
        }
    }

    /// Largest deviation between two transforms; rotations are compared by
    /// Frobenius distance.
    pub fn distance(&self, other: &RigidParams) -> f64 {
        let ds = (self.scale - other.scale).abs();
        let dr = (self.rotation - other.rotation).norm();
        let dt = (self.translation - other.translation).amax();
        ds.max(dr).max(dt)
    }
}

/// Mean shape, orthonormal deformation basis and per-component variances.
#[derive(Debug, Clone, PartialEq)]
pub struct Pdm {
    mean_shape: Matrix3xX<f64>,
    basis: DMatrix<f64>,
    variances: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct PdmFile {
    mean_shape: Vec<[f64; 3]>,
    basis: Vec<Vec<f64>>,
    variances: Vec<f64>,
}

impl Pdm {
    /// Validates shapes, basis orthonormality and variance ordering.
    pub fn new(
        mean_shape: Matrix3xX<f64>,
        basis: DMatrix<f64>,
        variances: Vec<f64>,
    ) -> Result<Self, ShapeError> {
        let m = mean_shape.ncols();
        if m < 3 {
            return Err(ShapeError::TooFewLandmarks(m));
        }
        if basis.nrows() != 3 * m {
            return Err(ShapeError::InvalidPdm(format!(
                "basis has {} rows, expected {}",
                basis.nrows(),
                3 * m
            )));
        }
        if basis.ncols() != variances.len() {
            return Err(ShapeError::InvalidPdm(format!(
                "{} basis columns but {} variances",
                basis.ncols(),
                variances.len()
            )));
        }
        let gap = orthonormality_gap(&basis);
        if gap > ORTHONORMAL_TOL {
            return Err(ShapeError::InvalidPdm(format!(
                "basis not orthonormal (max deviation {gap:e})"
            )));
        }
        if variances.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(ShapeError::InvalidPdm("variances must be positive".into()));
        }
        if variances.windows(2).any(|w| w[1] > w[0]) {
            return Err(ShapeError::InvalidPdm(
                "variances must be non-increasing".into(),
            ));
        }
        Ok(Self {
            mean_shape,
            basis,
            variances,
        })
    }

    pub fn mean_shape(&self) -> &Matrix3xX<f64> {
        &self.mean_shape
    }

    pub fn mean_frame(&self) -> LandmarkFrame {
        LandmarkFrame {
            points: self.mean_shape.clone(),
        }
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    pub fn landmarks(&self) -> usize {
        self.mean_shape.ncols()
    }

    /// Number of deformation components `d`.
    pub fn components(&self) -> usize {
        self.basis.ncols()
    }

    /// Non-rigid shape `xbar + Phi q`.
    pub fn shape(&self, q: &[f64]) -> Result<Matrix3xX<f64>, ShapeError> {
        if q.len() != self.components() {
            return Err(ShapeError::DimensionMismatch {
                expected: self.components(),
                found: q.len(),
            });
        }
        let offset = &self.basis * DVector::from_column_slice(q);
        Ok(&self.mean_shape + Matrix3xX::from_column_slice(offset.as_slice()))
    }

    pub fn to_json(&self) -> String {
        let file = PdmFile {
            mean_shape: self
                .mean_shape
                .column_iter()
                .map(|c| [c[0], c[1], c[2]])
                .collect(),
            basis: self
                .basis
                .row_iter()
                .map(|r| r.iter().copied().collect())
                .collect(),
            variances: self.variances.clone(),
        };
        serde_json::to_string_pretty(&file).expect("PDM serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ShapeError> {
        let file: PdmFile = serde_json::from_str(text).map_err(|e| ShapeError::Parse {
            what: "PDM".into(),
            message: e.to_string(),
        })?;
        let m = file.mean_shape.len();
        let d = file.variances.len();
        if file.basis.len() != 3 * m || file.basis.iter().any(|r| r.len() != d) {
            return Err(ShapeError::InvalidPdm(format!(
                "basis must be {}x{d}",
                3 * m
            )));
        }
        let mean = Matrix3xX::from_fn(m, |r, c| file.mean_shape[c][r]);
        let basis = DMatrix::from_fn(3 * m, d, |r, c| file.basis[r][c]);
        Pdm::new(mean, basis, file.variances)
    }
}

/// `max |Phi^T Phi - I|`.
pub fn orthonormality_gap(basis: &DMatrix<f64>) -> f64 {
    let g = basis.transpose() * basis;
    (g - DMatrix::identity(basis.ncols(), basis.ncols())).amax()
}

/// Builds a PDM from rigidly aligned frames by PCA.
///
/// The basis holds the top-`d` principal directions of the flattened,
/// centered frames; variances are the matching sample variances (divisor
/// `N - 1`). Each basis vector is signed so its largest-magnitude entry is
/// positive.
pub fn build_pdm(frames: &[LandmarkFrame], d: usize) -> Result<Pdm, ShapeError> {
    let n = frames.len();
    if n < d + 1 || n < 2 {
        return Err(ShapeError::TooFewFrames {
            needed: (d + 1).max(2),
            found: n,
        });
    }
    let m = frames[0].landmarks();
    for f in frames {
        if f.landmarks() != m {
            return Err(ShapeError::DimensionMismatch {
                expected: m,
                found: f.landmarks(),
            });
        }
    }
    let dim = 3 * m;
    let data = DMatrix::from_fn(n, dim, |r, c| frames[r].points.as_slice()[c]);
    let mean = data.row_mean();
    let mut centered = data;
    for mut row in centered.row_iter_mut() {
        row -= &mean;
    }
    let mean_shape = Matrix3xX::from_fn(m, |r, c| mean[3 * c + r]);

    // eigen-decompose the smaller of the two Gram matrices
    let (values, directions) = if n <= dim {
        let eig = SymmetricEigen::new(&centered * centered.transpose());
        let dirs = centered.transpose() * eig.eigenvectors;
        (eig.eigenvalues, dirs)
    } else {
        let eig = SymmetricEigen::new(centered.transpose() * &centered);
        (eig.eigenvalues, eig.eigenvectors)
    };
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let top = order.first().map(|&i| values[i]).unwrap_or(0.0).max(0.0);
    let cutoff = top * (n.max(dim) as f64) * 16.0 * f64::EPSILON;
    let rank = order
        .iter()
        .filter(|&&i| top > 0.0 && values[i] > cutoff)
        .count();
    if rank < d {
        return Err(ShapeError::DegenerateData { rank, requested: d });
    }
    let mut basis = DMatrix::zeros(dim, d);
    let mut variances = Vec::with_capacity(d);
    for (k, &idx) in order.iter().take(d).enumerate() {
        let mut v: DVector<f64> = directions.column(idx).into_owned();
        v /= v.norm();
        let lead =
            v.iter()
                .copied()
                .fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
        if lead < 0.0 {
            v = -v;
        }
        basis.set_column(k, &v);
        variances.push(values[idx] / (n - 1) as f64);
    }
    // Gram-Schmidt pass against round-off from the Gram route
    let mut ortho = basis.clone().qr().q();
    for k in 0..d {
        if ortho.column(k).dot(&basis.column(k)) < 0.0 {
            ortho.column_mut(k).neg_mut();
        }
    }
    let basis = ortho;
    Pdm::new(mean_shape, basis, variances)
}

/// Forward model: `s R (xbar + Phi q) + t` per landmark.
pub fn apply_pdm(pdm: &Pdm, q: &[f64], rigid: &RigidParams) -> Result<LandmarkFrame, ShapeError> {
    let shape = pdm.shape(q)?;
    Ok(LandmarkFrame {
        points: rigid.apply(&shape),
    })
}

/// Orthographic projection that drops every `z` coordinate; `M x 2`.
pub fn project_2d(frame: &LandmarkFrame) -> DMatrix<f64> {
    DMatrix::from_fn(frame.landmarks(), 2, |r, c| frame.points[(c, r)])
}

/// Least-squares similarity transform taking `source` onto `target`.
///
/// Minimizes `sum_i |target_i - (s R source_i + t)|^2`. Centroids give `t`;
/// the rotation is the unit quaternion maximizing `sum_i target_c,i . R
/// source_c,i` (the top eigenvector of Horn's 4x4 matrix), which is always a
/// proper rotation; `s` is the least-squares scale `lambda_max / |source_c|^2`.
pub fn procrustes(
    source: &Matrix3xX<f64>,
    target: &Matrix3xX<f64>,
) -> Result<RigidParams, ShapeError> {
    if source.ncols() != target.ncols() {
        return Err(ShapeError::DimensionMismatch {
            expected: source.ncols(),
            found: target.ncols(),
        });
    }
    let mu_s = source.column_mean();
    let mu_t = target.column_mean();
    let mut sc = source.clone();
    let mut tc = target.clone();
    for mut c in sc.column_iter_mut() {
        c -= mu_s;
    }
    for mut c in tc.column_iter_mut() {
        c -= mu_t;
    }
    let source_norm2 = sc.norm_squared();
    if source_norm2 == 0.0 {
        return Err(ShapeError::DegenerateFrame { frame: 0 });
    }
    // s[(a, b)] = sum_i source_a,i * target_b,i
    let s = &sc * tc.transpose();
    let (sxx, sxy, sxz) = (s[(0, 0)], s[(0, 1)], s[(0, 2)]);
    let (syx, syy, syz) = (s[(1, 0)], s[(1, 1)], s[(1, 2)]);
    let (szx, szy, szz) = (s[(2, 0)], s[(2, 1)], s[(2, 2)]);
    #[rustfmt::skip]
    let horn = Matrix4::new(
        sxx + syy + szz, syz - szy, szx - sxz, sxy - syx,
        syz - szy, sxx - syy - szz, sxy + syx, szx + sxz,
        szx - sxz, sxy + syx, -sxx + syy - szz, syz + szy,
        sxy - syx, szx + sxz, syz + szy, -sxx - syy + szz,
    );
    let eig = SymmetricEigen::new(horn);
    let mut order = [0usize, 1, 2, 3];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let (top, second) = (eig.eigenvalues[order[0]], eig.eigenvalues[order[1]]);
    let spread = eig.eigenvalues.amax();
    if !(top - second > 1e-10 * spread) {
        return Err(ShapeError::DegenerateFrame { frame: 0 });
    }
    let v = eig.eigenvectors.column(order[0]);
    let quat = UnitQuaternion::from_quaternion(Quaternion::new(v[0], v[1], v[2], v[3]));
    let rotation = quat.to_rotation_matrix().into_inner();
    let scale = top / source_norm2;
    if !(scale > 0.0) {
        return Err(ShapeError::DegenerateFrame { frame: 0 });
    }
    let translation = mu_t - rotation * mu_s * scale;
    Ok(RigidParams {
        scale,
        rotation,
        translation,
    })
}

/// Shape parameters and fitted rigid transforms of a landmark sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct RigidFreeSequence {
    pub q: TimeSeries,
    pub rigid: Vec<RigidParams>,
}

/// Aligns every frame onto the mean shape and projects the residual on the
/// basis: `q = Phi^T (vec(aligned) - vec(xbar))`.
///
/// `rigid[t]` is the transform taking the mean shape onto frame `t`.
pub fn remove_rigid(seq: &[LandmarkFrame], pdm: &Pdm) -> Result<RigidFreeSequence, ShapeError> {
    if seq.is_empty() {
        return Err(ShapeError::TooFewFrames {
            needed: 1,
            found: 0,
        });
    }
    let d = pdm.components();
    let mut values = Vec::with_capacity(seq.len() * d);
    let mut rigid = Vec::with_capacity(seq.len());
    for (t, frame) in seq.iter().enumerate() {
        if frame.landmarks() != pdm.landmarks() {
            return Err(ShapeError::DimensionMismatch {
                expected: pdm.landmarks(),
                found: frame.landmarks(),
            });
        }
        let g = procrustes(&pdm.mean_shape, &frame.points).map_err(|e| match e {
            ShapeError::DegenerateFrame { .. } => ShapeError::DegenerateFrame { frame: t },
            other => other,
        })?;
        let mut aligned = frame.points.clone();
        for mut c in aligned.column_iter_mut() {
            c -= g.translation;
        }
        let aligned = g.rotation.transpose() * aligned / g.scale;
        let residual = DVector::from_column_slice((aligned - &pdm.mean_shape).as_slice());
        let q = pdm.basis.transpose() * residual;
        values.extend(q.iter());
        rigid.push(g);
    }
    let q = TimeSeries::from_flat(values, d)?;
    Ok(RigidFreeSequence { q, rigid })
}

/// One frame per line, `3M` columns `x1, y1, z1, ...`.
pub fn landmarks_to_csv(seq: &[LandmarkFrame]) -> String {
    let flat: Vec<Vec<f64>> = seq.iter().map(LandmarkFrame::to_flat).collect();
    series::rows_to_csv(flat.iter().map(Vec::as_slice))
}

pub fn read_landmark_csv(path: impl AsRef<Path>) -> Result<Vec<LandmarkFrame>, ShapeError> {
    let rows = series::read_numeric_csv(path.as_ref())?;
    rows.iter().map(|r| LandmarkFrame::from_flat(r)).collect()
}

pub fn read_pdm(path: impl AsRef<Path>) -> Result<Pdm, ShapeError> {
    Pdm::from_json(&fs::read_to_string(path)?)
}
