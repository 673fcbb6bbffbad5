//! Shared data model: recordings, events, epochs, labels, and deterministic
//! dataset splitting.

use crate::rng::{ns, stream_id, stream_rng};
use ndarray::{Array3, ArrayView2, Axis};
use rand::seq::SliceRandom;
use thiserror::Error;

/// Trial class. Each dataset uses two movement classes plus rest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ClassLabel {
    Touch,
    Grasp,
    Palmar,
    Lateral,
    Rest,
}

impl ClassLabel {
    pub const ALL: [ClassLabel; 5] = [
        ClassLabel::Touch,
        ClassLabel::Grasp,
        ClassLabel::Palmar,
        ClassLabel::Lateral,
        ClassLabel::Rest,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ClassLabel::Touch => "touch",
            ClassLabel::Grasp => "grasp",
            ClassLabel::Palmar => "palmar",
            ClassLabel::Lateral => "lateral",
            ClassLabel::Rest => "rest",
        }
    }

    pub fn parse(s: &str) -> Option<ClassLabel> {
        ClassLabel::ALL.iter().copied().find(|c| c.as_str() == s)
    }

    /// Stable numeric code used by the binary file formats.
    pub fn code(&self) -> u8 {
        match self {
            ClassLabel::Touch => 0,
            ClassLabel::Grasp => 1,
            ClassLabel::Palmar => 2,
            ClassLabel::Lateral => 3,
            ClassLabel::Rest => 4,
        }
    }

    pub fn from_code(code: u8) -> Option<ClassLabel> {
        ClassLabel::ALL.get(code as usize).copied()
    }
}

impl std::fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum DataError {
    #[error("class {label} has {count} trials, need at least {min} for a stratified 5-fold split")]
    TooFewTrials {
        label: ClassLabel,
        count: usize,
        min: usize,
    },
    #[error("no trials given")]
    Empty,
    #[error("epoch sets are incompatible: {0}")]
    Incompatible(String),
}

/// Continuous multichannel recording, amplitudes in microvolts.
#[derive(Debug, Clone)]
pub struct Recording {
    /// n_channels × n_samples.
    pub data: ndarray::Array2<f64>,
    /// Sampling rate in Hz.
    pub fs: f64,
    pub channel_labels: Vec<String>,
}

impl Recording {
    pub fn new(data: ndarray::Array2<f64>, fs: f64, channel_labels: Vec<String>) -> Recording {
        Recording {
            data,
            fs,
            channel_labels,
        }
    }

    pub fn n_channels(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.data.ncols()
    }
}

/// A single invariant violation found by [`validate_recording`]. Violations
/// are data, not errors: a caller may collect and report them.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    EmptyData,
    NonPositiveFs { fs: f64 },
    NonFiniteSample { channel: usize, sample: usize },
    LabelCountMismatch { labels: usize, channels: usize },
    DuplicateLabel { label: String },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::EmptyData => write!(f, "data: empty (need at least 1 channel and 1 sample)"),
            Violation::NonPositiveFs { fs } => write!(f, "fs: {fs} is not positive"),
            Violation::NonFiniteSample { channel, sample } => {
                write!(f, "data: non-finite value at (channel {channel}, sample {sample})")
            }
            Violation::LabelCountMismatch { labels, channels } => {
                write!(f, "channel_labels: {labels} labels for {channels} channels")
            }
            Violation::DuplicateLabel { label } => {
                write!(f, "channel_labels: duplicate label {label:?}")
            }
        }
    }
}

/// Check every [`Recording`] invariant; returns an empty list iff all hold.
pub fn validate_recording(r: &Recording) -> Vec<Violation> {
    let mut out = Vec::new();
    if r.data.nrows() == 0 || r.data.ncols() == 0 {
        out.push(Violation::EmptyData);
    }
    if !(r.fs > 0.0) {
        out.push(Violation::NonPositiveFs { fs: r.fs });
    }
    for (c, row) in r.data.axis_iter(Axis(0)).enumerate() {
        for (s, v) in row.iter().enumerate() {
            if !v.is_finite() {
                out.push(Violation::NonFiniteSample {
                    channel: c,
                    sample: s,
                });
            }
        }
    }
    if r.channel_labels.len() != r.data.nrows() {
        out.push(Violation::LabelCountMismatch {
            labels: r.channel_labels.len(),
            channels: r.data.nrows(),
        });
    }
    let mut seen = std::collections::BTreeSet::new();
    for label in &r.channel_labels {
        if !seen.insert(label.as_str()) {
            out.push(Violation::DuplicateLabel {
                label: label.clone(),
            });
        }
    }
    out
}

/// Movement onset: sample index in the parent recording plus class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Onset {
    pub sample: usize,
    pub label: ClassLabel,
}

/// Movement onsets and rest periods of one recording.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventList {
    pub onsets: Vec<Onset>,
    /// Half-open `[start, end)` sample intervals free of movement activity.
    pub rest_intervals: Vec<(usize, usize)>,
}

impl EventList {
    /// Check ordering, bounds, and disjointness against a recording of
    /// `n_samples` at `fs`. Rest intervals must not touch any
    /// `[onset − 2 s, onset + 3 s)` window.
    pub fn validate(&self, n_samples: usize, fs: f64) -> Result<(), String> {
        let pre = (2.0 * fs).round() as usize;
        let post = (3.0 * fs).round() as usize;
        for w in self.onsets.windows(2) {
            if w[1].sample <= w[0].sample {
                return Err(format!(
                    "onsets not strictly increasing at sample {}",
                    w[1].sample
                ));
            }
        }
        for o in &self.onsets {
            if o.sample >= n_samples {
                return Err(format!("onset {} out of bounds ({n_samples})", o.sample));
            }
        }
        for w in self.rest_intervals.windows(2) {
            if w[1].0 < w[0].1 {
                return Err(format!("rest intervals overlap near sample {}", w[1].0));
            }
        }
        for &(s, e) in &self.rest_intervals {
            if s >= e || e > n_samples {
                return Err(format!("rest interval ({s}, {e}) invalid"));
            }
            for o in &self.onsets {
                let win_start = o.sample.saturating_sub(pre);
                let win_end = o.sample + post;
                if s < win_end && win_start < e {
                    return Err(format!(
                        "rest interval ({s}, {e}) overlaps onset window at {}",
                        o.sample
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Trials × channels × samples tensor with per-trial labels.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochSet {
    pub tensor: Array3<f64>,
    pub labels: Vec<ClassLabel>,
    pub fs: f64,
    /// Index of the time-zero (onset) sample within each epoch.
    pub t0_offset: usize,
}

impl EpochSet {
    pub fn n_trials(&self) -> usize {
        self.tensor.shape()[0]
    }

    pub fn n_channels(&self) -> usize {
        self.tensor.shape()[1]
    }

    pub fn n_samples(&self) -> usize {
        self.tensor.shape()[2]
    }

    pub fn trial(&self, i: usize) -> ArrayView2<'_, f64> {
        self.tensor.index_axis(Axis(0), i)
    }

    /// Distinct labels present, in the fixed [`ClassLabel`] order. The index
    /// into this list is the "class index" used for tie-breaking everywhere.
    pub fn class_set(&self) -> Vec<ClassLabel> {
        let mut set: Vec<ClassLabel> = Vec::new();
        for c in ClassLabel::ALL {
            if self.labels.contains(&c) {
                set.push(c);
            }
        }
        set
    }

    /// New set holding the given trials, in the given order.
    pub fn subset(&self, indices: &[usize]) -> EpochSet {
        let (_, c, s) = self.tensor.dim();
        let mut tensor = Array3::zeros((indices.len(), c, s));
        let mut labels = Vec::with_capacity(indices.len());
        for (row, &i) in indices.iter().enumerate() {
            tensor.index_axis_mut(Axis(0), row).assign(&self.trial(i));
            labels.push(self.labels[i]);
        }
        EpochSet {
            tensor,
            labels,
            fs: self.fs,
            t0_offset: self.t0_offset,
        }
    }

    /// Concatenate along the trial axis. Shapes, rate, and t0 must agree.
    pub fn concat(parts: &[&EpochSet]) -> Result<EpochSet, DataError> {
        let first = parts.first().ok_or(DataError::Empty)?;
        let (c, s) = (first.n_channels(), first.n_samples());
        for p in parts {
            if p.n_channels() != c || p.n_samples() != s {
                return Err(DataError::Incompatible("shape mismatch".into()));
            }
            if p.fs != first.fs || p.t0_offset != first.t0_offset {
                return Err(DataError::Incompatible("fs or t0_offset mismatch".into()));
            }
        }
        let n: usize = parts.iter().map(|p| p.n_trials()).sum();
        let mut tensor = Array3::zeros((n, c, s));
        let mut labels = Vec::with_capacity(n);
        let mut row = 0;
        for p in parts {
            for i in 0..p.n_trials() {
                tensor.index_axis_mut(Axis(0), row).assign(&p.trial(i));
                labels.push(p.labels[i]);
                row += 1;
            }
        }
        Ok(EpochSet {
            tensor,
            labels,
            fs: first.fs,
            t0_offset: first.t0_offset,
        })
    }
}

/// Deterministic 75/25 split plus repeated stratified 5-fold assignment over
/// the training portion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitPlan {
    /// Sorted ascending.
    pub train_indices: Vec<usize>,
    /// Sorted ascending; disjoint from `train_indices`.
    pub validation_indices: Vec<usize>,
    /// `fold_assignments[repeat][fold]` lists trial indices, in shuffled
    /// order. Folds within a repeat partition `train_indices`.
    pub fold_assignments: Vec<Vec<Vec<usize>>>,
    pub seed: u64,
}

impl SplitPlan {
    pub fn n_repeats(&self) -> usize {
        self.fold_assignments.len()
    }

    pub fn n_folds(&self) -> usize {
        self.fold_assignments.first().map_or(0, |r| r.len())
    }

    /// Training indices of one (repeat, fold) cell: the union of the other
    /// folds of that repeat, sorted ascending.
    pub fn fold_train(&self, repeat: usize, fold: usize) -> Vec<usize> {
        let mut out = Vec::new();
        for (f, list) in self.fold_assignments[repeat].iter().enumerate() {
            if f != fold {
                out.extend_from_slice(list);
            }
        }
        out.sort_unstable();
        out
    }
}

pub const N_FOLDS: usize = 5;
pub const DEFAULT_REPEATS: usize = 10;
pub const DEFAULT_VALIDATION_FRACTION: f64 = 0.25;

/// Stratified 75/25 split with 10× repeated 5-fold assignments. Pure
/// function of `(labels, seed)`.
pub fn make_split_plan(labels: &[ClassLabel], seed: u64) -> Result<SplitPlan, DataError> {
    make_split_plan_cfg(labels, seed, DEFAULT_REPEATS, DEFAULT_VALIDATION_FRACTION)
}

/// As [`make_split_plan`] but with the repeat count and validation fraction
/// exposed (desk-scale runs use fewer repeats; `validation_fraction = 0`
/// yields plain repeated k-fold over everything).
pub fn make_split_plan_cfg(
    labels: &[ClassLabel],
    seed: u64,
    n_repeats: usize,
    validation_fraction: f64,
) -> Result<SplitPlan, DataError> {
    if labels.is_empty() {
        return Err(DataError::Empty);
    }
    let classes: Vec<ClassLabel> = ClassLabel::ALL
        .iter()
        .copied()
        .filter(|c| labels.contains(c))
        .collect();
    let mut by_class: Vec<Vec<usize>> = classes
        .iter()
        .map(|&c| {
            (0..labels.len())
                .filter(|&i| labels[i] == c)
                .collect::<Vec<_>>()
        })
        .collect();
    for (c, idx) in classes.iter().zip(&by_class) {
        if idx.len() < N_FOLDS {
            return Err(DataError::TooFewTrials {
                label: *c,
                count: idx.len(),
                min: N_FOLDS,
            });
        }
    }

    // Validation sizes: largest-remainder allocation so the total hits
    // round(fraction · n) while every class stays within ±1 of proportion.
    let total = labels.len();
    let val_total = (validation_fraction * total as f64).round() as usize;
    let targets: Vec<f64> = by_class
        .iter()
        .map(|idx| validation_fraction * idx.len() as f64)
        .collect();
    let mut val_counts: Vec<usize> = targets.iter().map(|t| t.floor() as usize).collect();
    let mut remainder = val_total.saturating_sub(val_counts.iter().sum());
    let mut order: Vec<usize> = (0..classes.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = targets[a] - targets[a].floor();
        let fb = targets[b] - targets[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for &c in &order {
        if remainder == 0 {
            break;
        }
        val_counts[c] += 1;
        remainder -= 1;
    }

    let mut rng = stream_rng(seed, stream_id(ns::SPLIT, 0));
    let mut train_indices = Vec::new();
    let mut validation_indices = Vec::new();
    let mut train_by_class: Vec<Vec<usize>> = Vec::new();
    for (idx, &vc) in by_class.iter_mut().zip(&val_counts) {
        idx.shuffle(&mut rng);
        validation_indices.extend_from_slice(&idx[..vc]);
        train_indices.extend_from_slice(&idx[vc..]);
        train_by_class.push(idx[vc..].to_vec());
    }
    train_indices.sort_unstable();
    validation_indices.sort_unstable();

    let mut fold_assignments = Vec::with_capacity(n_repeats);
    for repeat in 0..n_repeats {
        let mut rng = stream_rng(seed, stream_id(ns::FOLD, repeat as u32));
        let mut folds: Vec<Vec<usize>> = vec![Vec::new(); N_FOLDS];
        for (c, class_idx) in train_by_class.iter().enumerate() {
            let mut shuffled = class_idx.clone();
            shuffled.shuffle(&mut rng);
            // Offset by class so per-class remainders don't pile onto fold 0.
            for (i, &t) in shuffled.iter().enumerate() {
                folds[(i + c) % N_FOLDS].push(t);
            }
        }
        fold_assignments.push(folds);
    }

    Ok(SplitPlan {
        train_indices,
        validation_indices,
        fold_assignments,
        seed,
    })
}
