//! Synthetic labeled expression sequences.
//!
//! Each class owns a template: an onset ramp from the neutral shape to a
//! class target `q`, `q(tau) = target * min(1, tau / apex)^curvature`. Every
//! subject performs every class with its own amplitude and speed, landmarks
//! receive white noise and a random per-frame similarity transform, and the
//! dataset series are the shape parameters recovered by [`remove_rigid`].

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, Matrix3xX, Vector3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{
    apply_pdm, landmarks_to_csv, remove_rigid, LandmarkFrame, Pdm, RigidParams, ShapeError,
};
use crate::seed::stage_rng;
use crate::series::{series_to_csv, LabeledDataset, LabeledSeries, Manifest, ManifestEntry};

const EMOTIONS: [&str; 6] = ["anger", "disgust", "fear", "joy", "sadness", "surprise"];
const TOP_VARIANCE: f64 = 0.05;
const VARIANCE_DECAY: f64 = 0.7;
const TARGET_AMPLITUDE: f64 = 2.0;

/// Generator settings. Landmark coordinates are in units of the mean shape's
/// RMS radius, so `noise` is relative to face size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub classes: usize,
    pub subjects: usize,
    pub frames_min: usize,
    pub frames_max: usize,
    pub noise: f64,
    pub seed: u64,
    pub landmarks: usize,
    pub components: usize,
    /// Relative spread of per-subject amplitude and speed; 0 reproduces the
    /// class templates exactly.
    pub subject_variation: f64,
    /// Multiplier on the random head motion; 0 disables it.
    pub rigid_motion: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            classes: 6,
            subjects: 10,
            frames_min: 18,
            frames_max: 30,
            noise: 0.02,
            seed: 1,
            landmarks: 20,
            components: 6,
            subject_variation: 0.15,
            rigid_motion: 1.0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), ShapeError> {
        let bad = |m: String| Err(ShapeError::InvalidSpec(m));
        if self.classes < 2 {
            return bad(format!("need at least 2 classes, got {}", self.classes));
        }
        if self.subjects < 1 {
            return bad("need at least 1 subject".into());
        }
        if self.frames_min < 2 || self.frames_max < self.frames_min {
            return bad(format!(
                "frame range {}..={} must satisfy 2 <= min <= max",
                self.frames_min, self.frames_max
            ));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return bad(format!("noise must be non-negative, got {}", self.noise));
        }
        if !(self.subject_variation >= 0.0 && self.subject_variation < 1.0) {
            return bad(format!(
                "subject_variation must be in [0, 1), got {}",
                self.subject_variation
            ));
        }
        if !(self.rigid_motion >= 0.0 && self.rigid_motion.is_finite()) {
            return bad(format!(
                "rigid_motion must be non-negative, got {}",
                self.rigid_motion
            ));
        }
        if self.components < 1 {
            return bad("need at least 1 component".into());
        }
        if self.landmarks < 4 || 3 * self.landmarks < 7 + self.components {
            return bad(format!(
                "{} landmarks cannot carry {} non-rigid components",
                self.landmarks, self.components
            ));
        }
        Ok(())
    }
}

/// Class names: emotion names for up to six classes, else `class_NN`.
pub fn class_names(classes: usize) -> Vec<String> {
    if classes <= EMOTIONS.len() {
        EMOTIONS[..classes].iter().map(|s| s.to_string()).collect()
    } else {
        (0..classes).map(|k| format!("class_{k:02}")).collect()
    }
}

fn subject_names(subjects: usize) -> Vec<String> {
    (1..=subjects).map(|k| format!("s{k:02}")).collect()
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Onset-ramp trajectory of one class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassTemplate {
    pub name: String,
    pub target: Vec<f64>,
    pub curvature: f64,
    /// Frame index (from 0) at which the apex is reached.
    pub apex: f64,
}

impl ClassTemplate {
    /// Shape parameters at frame `tau` for a performer with the given
    /// amplitude and speed.
    pub fn at(&self, tau: usize, amplitude: f64, speed: f64) -> Vec<f64> {
        let progress = (tau as f64 * speed / self.apex).min(1.0);
        let w = amplitude * progress.powf(self.curvature);
        self.target.iter().map(|v| v * w).collect()
    }
}

/// Random PDM whose deformations are orthogonal to every infinitesimal
/// similarity motion of the mean shape, so Procrustes alignment of a
/// deformed, moved frame recovers the motion exactly.
pub fn synth_pdm(spec: &SynthSpec) -> Result<Pdm, ShapeError> {
    spec.validate()?;
    let mut rng = stage_rng(spec.seed, "synth/pdm");
    let m = spec.landmarks;
    let d = spec.components;
    let mut mean = Matrix3xX::from_fn(m, |_, _| normal(&mut rng));
    let centroid = mean.column_mean();
    for mut c in mean.column_iter_mut() {
        c -= centroid;
    }
    let rms = (mean.norm_squared() / m as f64).sqrt();
    mean /= rms;

    let dim = 3 * m;
    let mut tangent = DMatrix::zeros(dim, 7);
    for i in 0..m {
        for a in 0..3 {
            tangent[(3 * i + a, a)] = 1.0;
        }
        let p: Vector3<f64> = mean.column(i).into_owned();
        for a in 0..3 {
            tangent[(3 * i + a, 3)] = p[a];
        }
        for (k, axis) in [Vector3::x(), Vector3::y(), Vector3::z()]
            .iter()
            .enumerate()
        {
            let v = axis.cross(&p);
            for a in 0..3 {
                tangent[(3 * i + a, 4 + k)] = v[a];
            }
        }
    }
    let t_q = tangent.qr().q();
    let raw = DMatrix::from_fn(dim, d, |_, _| normal(&mut rng));
    let projected = &raw - &t_q * (t_q.transpose() * &raw);
    let mut basis = projected.qr().q();
    // second pass removes round-off leakage back into the tangent space
    let leak = &t_q * (t_q.transpose() * &basis);
    basis -= leak;
    let mut basis = basis.qr().q();
    for k in 0..d {
        let lead =
            basis
                .column(k)
                .iter()
                .copied()
                .fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
        if lead < 0.0 {
            basis.column_mut(k).neg_mut();
        }
    }
    let variances = (0..d)
        .map(|k| TOP_VARIANCE * VARIANCE_DECAY.powi(k as i32))
        .collect();
    Pdm::new(mean, basis, variances)
}

/// One template per class, drawn from `spec.seed`.
pub fn class_templates(spec: &SynthSpec, pdm: &Pdm) -> Result<Vec<ClassTemplate>, ShapeError> {
    spec.validate()?;
    let mut rng = stage_rng(spec.seed, "synth/templates");
    let d = pdm.components();
    Ok(class_names(spec.classes)
        .into_iter()
        .map(|name| {
            let z: Vec<f64> = (0..d).map(|_| normal(&mut rng)).collect();
            let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
            let scale = TARGET_AMPLITUDE * (d as f64).sqrt() / norm;
            let target = z
                .iter()
                .zip(pdm.variances())
                .map(|(zi, var)| zi * scale * var.sqrt())
                .collect();
            let curvature = rng.random_range(1.5..3.5);
            let apex = rng.random_range(13.0..17.0);
            ClassTemplate {
                name,
                target,
                curvature,
                apex,
            }
        })
        .collect())
}

/// Per-item ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthItem {
    pub id: String,
    pub label: String,
    pub subject: String,
    pub amplitude: f64,
    pub speed: f64,
    /// Noise-free shape parameters, one row per frame.
    pub q: Vec<Vec<f64>>,
    /// Transform applied to each frame.
    pub rigid: Vec<RigidParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub spec: SynthSpec,
    pub templates: Vec<ClassTemplate>,
    pub items: Vec<GroundTruthItem>,
}

/// Everything the generator produces, in memory.
#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub dataset: LabeledDataset,
    pub landmarks: Vec<Vec<LandmarkFrame>>,
    pub pdm: Pdm,
    pub ground_truth: GroundTruth,
    pub manifest: Manifest,
}

impl SynthOutput {
    /// Relative paths and contents of every file the dataset consists of.
    ///
    /// `manifest.json` references `series/<id>.csv`; landmarks, the PDM and
    /// the ground-truth sidecar are written alongside.
    pub fn files(&self) -> Vec<(PathBuf, String)> {
        let mut out = vec![(PathBuf::from("manifest.json"), self.manifest.to_json())];
        for (item, lm) in self.dataset.items().iter().zip(&self.landmarks) {
            out.push((PathBuf::from(&item.id), series_to_csv(&item.series)));
            let name = Path::new(&item.id)
                .file_name()
                .expect("series ids have file names");
            out.push((Path::new("landmarks").join(name), landmarks_to_csv(lm)));
        }
        out.push((PathBuf::from("pdm.json"), self.pdm.to_json()));
        out.push((
            PathBuf::from("ground_truth.json"),
            serde_json::to_string_pretty(&self.ground_truth).expect("ground truth serializes"),
        ));
        out
    }

    /// Writes [`SynthOutput::files`] under `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<(), ShapeError> {
        let dir = dir.as_ref();
        for (rel, text) in self.files() {
            let path = dir.join(rel);
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent)?;
            }
            fs::write(path, text)?;
        }
        Ok(())
    }
}

/// Generates the synthetic dataset described by `spec`.
pub fn synth_dataset(spec: &SynthSpec) -> Result<SynthOutput, ShapeError> {
    let pdm = synth_pdm(spec)?;
    let templates = class_templates(spec, &pdm)?;
    synth_from_templates(spec, &pdm, &templates)
}

/// [`synth_dataset`] with caller-supplied PDM and templates (one per class).
pub fn synth_from_templates(
    spec: &SynthSpec,
    pdm: &Pdm,
    templates: &[ClassTemplate],
) -> Result<SynthOutput, ShapeError> {
    spec.validate()?;
    if templates.len() != spec.classes {
        return Err(ShapeError::InvalidSpec(format!(
            "{} templates for {} classes",
            templates.len(),
            spec.classes
        )));
    }
    for t in templates {
        if t.target.len() != pdm.components() {
            return Err(ShapeError::DimensionMismatch {
                expected: pdm.components(),
                found: t.target.len(),
            });
        }
        if !(t.apex > 0.0) {
            return Err(ShapeError::InvalidSpec(format!(
                "template {} has apex {}",
                t.name, t.apex
            )));
        }
    }
    let v = spec.subject_variation;
    let subjects = subject_names(spec.subjects);
    let mut subject_rng = stage_rng(spec.seed, "synth/subjects");
    let styles: Vec<(f64, f64)> = subjects
        .iter()
        .map(|_| {
            let a = 1.0 + v * normal(&mut subject_rng);
            let s = 1.0 + v * normal(&mut subject_rng);
            (a, s)
        })
        .collect();

    let mut items = Vec::new();
    let mut landmarks = Vec::new();
    let mut truth = Vec::new();
    let mut manifest_items = Vec::new();
    for template in templates {
        for (subject, &(sub_amp, sub_speed)) in subjects.iter().zip(&styles) {
            let stage = format!("synth/sequence/{}/{}", template.name, subject);
            let mut rng = stage_rng(spec.seed, &stage);
            let amplitude = (sub_amp * (1.0 + 0.5 * v * normal(&mut rng))).clamp(0.4, 1.6);
            let speed = (sub_speed * (1.0 + 0.5 * v * normal(&mut rng))).clamp(0.5, 1.5);
            let frames = rng.random_range(spec.frames_min..=spec.frames_max);
            let base = random_pose(&mut rng, spec.rigid_motion)?;

            let mut seq = Vec::with_capacity(frames);
            let mut q_rows = Vec::with_capacity(frames);
            let mut poses = Vec::with_capacity(frames);
            for tau in 0..frames {
                let q = template.at(tau, amplitude, speed);
                let pose = jitter(&mut rng, &base, spec.rigid_motion)?;
                let clean = apply_pdm(pdm, &q, &pose)?;
                let noisy = if spec.noise > 0.0 {
                    let noise =
                        Matrix3xX::from_fn(pdm.landmarks(), |_, _| spec.noise * normal(&mut rng));
                    LandmarkFrame::new(clean.points() + noise)?
                } else {
                    clean
                };
                seq.push(noisy);
                q_rows.push(q);
                poses.push(pose);
            }
            let fitted = remove_rigid(&seq, pdm)?;
            let id = format!("series/{}_{}.csv", template.name, subject);
            items.push(LabeledSeries::new(
                id.clone(),
                fitted.q,
                template.name.clone(),
                subject.clone(),
            )?);
            manifest_items.push(ManifestEntry {
                path: id.clone(),
                label: template.name.clone(),
                subject: subject.clone(),
            });
            truth.push(GroundTruthItem {
                id,
                label: template.name.clone(),
                subject: subject.clone(),
                amplitude,
                speed,
                q: q_rows,
                rigid: poses,
            });
            landmarks.push(seq);
        }
    }
    Ok(SynthOutput {
        dataset: LabeledDataset::new(items)?,
        landmarks,
        pdm: pdm.clone(),
        ground_truth: GroundTruth {
            spec: spec.clone(),
            templates: templates.to_vec(),
            items: truth,
        },
        manifest: Manifest {
            frame_rate: None,
            items: manifest_items,
        },
    })
}

fn random_pose(rng: &mut ChaCha8Rng, motion: f64) -> Result<RigidParams, ShapeError> {
    let scale = (0.2 * motion * normal(rng)).exp();
    let angle = |rng: &mut ChaCha8Rng| motion * rng.random_range(-0.4..0.4);
    let (a, b, c) = (angle(rng), angle(rng), angle(rng));
    let t = Vector3::from_fn(|_, _| 2.0 * motion * normal(rng));
    RigidParams::from_euler(scale, a, b, c, t)
}

fn jitter(
    rng: &mut ChaCha8Rng,
    base: &RigidParams,
    motion: f64,
) -> Result<RigidParams, ShapeError> {
    let scale = (0.01 * motion * normal(rng)).exp();
    let (a, b, c) = (
        0.03 * motion * normal(rng),
        0.03 * motion * normal(rng),
        0.03 * motion * normal(rng),
    );
    let t = Vector3::from_fn(|_, _| 0.05 * motion * normal(rng));
    Ok(RigidParams::from_euler(scale, a, b, c, t)?.compose(base))
}
