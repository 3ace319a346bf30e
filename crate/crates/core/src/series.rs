//! Multichannel time series, labeled datasets and their on-disk formats.
//!
//! A series is stored frame-major: row `i` holds the `d` channel values of
//! frame `i`, contiguous in memory, so the alignment kernels can stream one
//! frame pair at a time.
//!
//! Two file formats are understood:
//!
//! * **series CSV**: one row per frame, one column per channel, no header.
//! * **manifest JSON**: either a bare array of
//!   `{"path": .., "label": .., "subject": ..}` objects, or an object
//!   `{"frame_rate": 25.0, "items": [...]}`. Paths are resolved relative to
//!   the manifest's directory.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised while validating or loading series data.
#[derive(Debug, Error)]
pub enum SeriesError {
    #[error("series is empty (frames = {frames}, channels = {channels})")]
    EmptySeries { frames: usize, channels: usize },
    #[error("non-finite value at frame {row}, channel {col}")]
    NonFinite { row: usize, col: usize },
    #[error("frame {row} has {found} channels, expected {expected}")]
    RaggedRows {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("failed to parse manifest {path}: {message}")]
    ManifestParse { path: PathBuf, message: String },
    #[error("missing file: {0}")]
    MissingFile(PathBuf),
    #[error("series {path} has {found} channels, dataset has {expected}")]
    DimensionMismatch {
        path: PathBuf,
        expected: usize,
        found: usize,
    },
    #[error("failed to parse series file {path}: {message}")]
    SeriesParse { path: PathBuf, message: String },
    #[error("invalid series in {path}: {source}")]
    InvalidSeries {
        path: PathBuf,
        #[source]
        source: Box<SeriesError>,
    },
    #[error("empty {0} identifier")]
    EmptyIdentifier(&'static str),
    #[error("dataset has no items")]
    EmptyDataset,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A length-`T` sequence of `d`-dimensional real frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    values: Vec<f64>,
    frames: usize,
    channels: usize,
    frame_rate: Option<f64>,
}

impl TimeSeries {
    /// Builds a series from frame rows, checking every invariant.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self, SeriesError> {
        validate_series(rows)
    }

    /// Builds a series from a flat frame-major buffer.
    pub fn from_flat(values: Vec<f64>, channels: usize) -> Result<Self, SeriesError> {
        if values.is_empty() || channels == 0 {
            return Err(SeriesError::EmptySeries {
                frames: if channels == 0 {
                    0
                } else {
                    values.len() / channels
                },
                channels,
            });
        }
        if values.len() % channels != 0 {
            let frames = values.len() / channels;
            return Err(SeriesError::RaggedRows {
                row: frames,
                expected: channels,
                found: values.len() % channels,
            });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(SeriesError::NonFinite {
                row: pos / channels,
                col: pos % channels,
            });
        }
        Ok(Self {
            frames: values.len() / channels,
            values,
            channels,
            frame_rate: None,
        })
    }

    pub fn with_frame_rate(mut self, frame_rate: Option<f64>) -> Self {
        self.frame_rate = frame_rate;
        self
    }

    /// Number of frames `T`.
    pub fn len(&self) -> usize {
        self.frames
    }

    /// Always false: a valid series has at least one frame.
    pub fn is_empty(&self) -> bool {
        self.frames == 0
    }

    /// Channel dimension `d`.
    pub fn dim(&self) -> usize {
        self.channels
    }

    pub fn frame_rate(&self) -> Option<f64> {
        self.frame_rate
    }

    /// The `i`-th frame (0-based).
    #[inline]
    pub fn frame(&self, i: usize) -> &[f64] {
        &self.values[i * self.channels..(i + 1) * self.channels]
    }

    pub fn frames(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.channels)
    }

    /// Frame-major flat buffer.
    pub fn as_flat(&self) -> &[f64] {
        &self.values
    }

    /// Keeps the first `min(T, max_len)` frames.
    pub fn crop(&self, max_len: usize) -> TimeSeries {
        crop_series(self, max_len)
    }
}

/// Checks a raw `T x d` matrix and wraps it as a [`TimeSeries`].
///
/// Rows are checked in order; the first problem found is reported.
pub fn validate_series<R: AsRef<[f64]>>(raw: &[R]) -> Result<TimeSeries, SeriesError> {
    let frames = raw.len();
    let channels = raw.first().map_or(0, |r| r.as_ref().len());
    if frames == 0 || channels == 0 {
        return Err(SeriesError::EmptySeries { frames, channels });
    }
    let mut values = Vec::with_capacity(frames * channels);
    for (row, r) in raw.iter().enumerate() {
        let r = r.as_ref();
        if r.len() != channels {
            return Err(SeriesError::RaggedRows {
                row,
                expected: channels,
                found: r.len(),
            });
        }
        if let Some(col) = r.iter().position(|v| !v.is_finite()) {
            return Err(SeriesError::NonFinite { row, col });
        }
        values.extend_from_slice(r);
    }
    Ok(TimeSeries {
        values,
        frames,
        channels,
        frame_rate: None,
    })
}

/// Onset-anchored prefix: the first `min(T, max_len)` frames.
///
/// # Panics
///
/// If `max_len` is zero.
pub fn crop_series(s: &TimeSeries, max_len: usize) -> TimeSeries {
    assert!(max_len >= 1, "crop length must be at least one frame");
    let keep = s.frames.min(max_len);
    TimeSeries {
        values: s.values[..keep * s.channels].to_vec(),
        frames: keep,
        channels: s.channels,
        frame_rate: s.frame_rate,
    }
}

/// A series with its class label and subject identifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSeries {
    /// Item identifier; the manifest path when loaded from disk.
    pub id: String,
    pub series: TimeSeries,
    pub label: String,
    pub subject: String,
}

impl LabeledSeries {
    pub fn new(
        id: impl Into<String>,
        series: TimeSeries,
        label: impl Into<String>,
        subject: impl Into<String>,
    ) -> Result<Self, SeriesError> {
        let label = label.into();
        let subject = subject.into();
        if label.is_empty() {
            return Err(SeriesError::EmptyIdentifier("label"));
        }
        if subject.is_empty() {
            return Err(SeriesError::EmptyIdentifier("subject"));
        }
        Ok(Self {
            id: id.into(),
            series,
            label,
            subject,
        })
    }
}

/// An ordered collection of labeled series sharing one channel dimension.
///
/// `classes` and `subjects` hold the distinct values in sorted order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabeledDataset {
    items: Vec<LabeledSeries>,
    classes: Vec<String>,
    subjects: Vec<String>,
}

impl LabeledDataset {
    pub fn new(items: Vec<LabeledSeries>) -> Result<Self, SeriesError> {
        let first = items.first().ok_or(SeriesError::EmptyDataset)?;
        let dim = first.series.dim();
        if let Some(bad) = items.iter().find(|it| it.series.dim() != dim) {
            return Err(SeriesError::DimensionMismatch {
                path: PathBuf::from(&bad.id),
                expected: dim,
                found: bad.series.dim(),
            });
        }
        let classes: BTreeSet<&str> = items.iter().map(|it| it.label.as_str()).collect();
        let subjects: BTreeSet<&str> = items.iter().map(|it| it.subject.as_str()).collect();
        Ok(Self {
            classes: classes.into_iter().map(String::from).collect(),
            subjects: subjects.into_iter().map(String::from).collect(),
            items,
        })
    }

    pub fn items(&self) -> &[LabeledSeries] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn subjects(&self) -> &[String] {
        &self.subjects
    }

    /// Channel dimension shared by every item.
    pub fn dim(&self) -> usize {
        self.items[0].series.dim()
    }

    pub fn labels(&self) -> Vec<&str> {
        self.items.iter().map(|it| it.label.as_str()).collect()
    }

    pub fn ids(&self) -> Vec<String> {
        self.items.iter().map(|it| it.id.clone()).collect()
    }

    pub fn series_lengths(&self) -> Vec<usize> {
        self.items.iter().map(|it| it.series.len()).collect()
    }

    /// Every series cropped to its first `min(T, max_len)` frames.
    pub fn cropped(&self, max_len: usize) -> LabeledDataset {
        let items = self
            .items
            .iter()
            .map(|it| LabeledSeries {
                series: crop_series(&it.series, max_len),
                ..it.clone()
            })
            .collect();
        LabeledDataset {
            items,
            classes: self.classes.clone(),
            subjects: self.subjects.clone(),
        }
    }

    /// Subset of items by index, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<LabeledDataset, SeriesError> {
        LabeledDataset::new(indices.iter().map(|&i| self.items[i].clone()).collect())
    }

    /// Same series and subjects with labels replaced, item by item.
    pub fn relabeled(&self, labels: &[String]) -> Result<LabeledDataset, SeriesError> {
        assert_eq!(labels.len(), self.items.len(), "one label per item");
        let items = self
            .items
            .iter()
            .zip(labels)
            .map(|(it, l)| LabeledSeries::new(it.id.clone(), it.series.clone(), l, &it.subject))
            .collect::<Result<Vec<_>, _>>()?;
        LabeledDataset::new(items)
    }
}

/// One manifest entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub label: String,
    pub subject: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum ManifestDoc {
    Bare(Vec<ManifestEntry>),
    Wrapped {
        #[serde(default)]
        frame_rate: Option<f64>,
        items: Vec<ManifestEntry>,
    },
}

/// A parsed manifest, before any series file is read.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Manifest {
    pub frame_rate: Option<f64>,
    pub items: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn parse(text: &str, origin: &Path) -> Result<Self, SeriesError> {
        let doc: ManifestDoc =
            serde_json::from_str(text).map_err(|e| SeriesError::ManifestParse {
                path: origin.to_path_buf(),
                message: e.to_string(),
            })?;
        Ok(match doc {
            ManifestDoc::Bare(items) => Manifest {
                frame_rate: None,
                items,
            },
            ManifestDoc::Wrapped { frame_rate, items } => Manifest { frame_rate, items },
        })
    }

    /// Serializes as a bare array when there is no frame rate.
    pub fn to_json(&self) -> String {
        let doc = match self.frame_rate {
            None => ManifestDoc::Bare(self.items.clone()),
            Some(fr) => ManifestDoc::Wrapped {
                frame_rate: Some(fr),
                items: self.items.clone(),
            },
        };
        serde_json::to_string_pretty(&doc).expect("manifest serializes")
    }
}

/// Loads every series referenced by the manifest at `manifest_path`.
///
/// Item order follows the manifest. Relative series paths are resolved
/// against the manifest's directory.
pub fn load_dataset(manifest_path: impl AsRef<Path>) -> Result<LabeledDataset, SeriesError> {
    let manifest_path = manifest_path.as_ref();
    let text = fs::read_to_string(manifest_path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => SeriesError::MissingFile(manifest_path.to_path_buf()),
        _ => SeriesError::Io(e),
    })?;
    let manifest = Manifest::parse(&text, manifest_path)?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new(""));

    let mut items = Vec::with_capacity(manifest.items.len());
    let mut dim = None;
    for entry in &manifest.items {
        let path = base.join(&entry.path);
        if !path.is_file() {
            return Err(SeriesError::MissingFile(path));
        }
        let series = read_series_csv(&path)?.with_frame_rate(manifest.frame_rate);
        match dim {
            None => dim = Some(series.dim()),
            Some(d) if d != series.dim() => {
                return Err(SeriesError::DimensionMismatch {
                    path,
                    expected: d,
                    found: series.dim(),
                })
            }
            Some(_) => {}
        }
        items.push(LabeledSeries::new(
            entry.path.clone(),
            series,
            entry.label.clone(),
            entry.subject.clone(),
        )?);
    }
    if items.is_empty() {
        return Err(SeriesError::ManifestParse {
            path: manifest_path.to_path_buf(),
            message: "manifest lists no series".into(),
        });
    }
    LabeledDataset::new(items)
}

/// Reads a headerless numeric CSV into a validated series.
pub fn read_series_csv(path: impl AsRef<Path>) -> Result<TimeSeries, SeriesError> {
    let path = path.as_ref();
    let rows = read_numeric_csv(path)?;
    validate_series(&rows).map_err(|e| SeriesError::InvalidSeries {
        path: path.to_path_buf(),
        source: Box::new(e),
    })
}

/// Reads a headerless numeric CSV as rows of reals, without shape checks.
pub fn read_numeric_csv(path: &Path) -> Result<Vec<Vec<f64>>, SeriesError> {
    let parse_err = |message: String| SeriesError::SeriesParse {
        path: path.to_path_buf(),
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| parse_err(e.to_string()))?;
    let mut rows = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| parse_err(e.to_string()))?;
        let row = record
            .iter()
            .enumerate()
            .map(|(c, field)| {
                field
                    .parse::<f64>()
                    .map_err(|_| parse_err(format!("row {r}, column {c}: not a number: {field:?}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    Ok(rows)
}

/// Formats a real so that it parses back to the same bits.
///
/// Plain decimal for moderate magnitudes, scientific otherwise.
pub fn format_real(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || (1e-4..1e15).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

/// Renders a series as headerless CSV text.
pub fn series_to_csv(s: &TimeSeries) -> String {
    rows_to_csv(s.frames())
}

/// Renders rows of reals as headerless CSV text.
pub fn rows_to_csv<'a>(rows: impl IntoIterator<Item = &'a [f64]>) -> String {
    let mut out = String::new();
    for row in rows {
        let line: Vec<String> = row.iter().map(|&v| format_real(v)).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}
