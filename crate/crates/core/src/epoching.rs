//! Segmentation of a preprocessed recording into trials, rest-trial
//! extraction, and amplitude/kurtosis outlier rejection.

use crate::data::{ClassLabel, EpochSet, EventList, Recording};
use ndarray::Array3;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EpochError {
    #[error("onset at sample {onset} yields window [{start}, {end}) outside 0..{n_samples}")]
    OnsetOutOfBounds {
        onset: usize,
        start: i64,
        end: i64,
        n_samples: usize,
    },
    #[error("rest intervals hold only {available} non-overlapping epochs, {requested} requested")]
    InsufficientRestData { available: usize, requested: usize },
    #[error("need at least 2 trials, got {0}")]
    TooFewTrials(usize),
}

/// Cut one epoch per onset, `t_pre`..`t_post` seconds around it (`t_pre` is
/// negative for pre-onset context). Epoch length is
/// `round((t_post − t_pre) · fs)` and `t0_offset = round(−t_pre · fs)`.
pub fn extract_epochs(
    r: &Recording,
    ev: &EventList,
    t_pre: f64,
    t_post: f64,
) -> Result<EpochSet, EpochError> {
    let len = ((t_post - t_pre) * r.fs).round() as usize;
    let offset = (-t_pre * r.fs).round() as i64;
    let n_ch = r.n_channels();
    let mut tensor = Array3::zeros((ev.onsets.len(), n_ch, len));
    let mut labels = Vec::with_capacity(ev.onsets.len());
    for (i, onset) in ev.onsets.iter().enumerate() {
        let start = onset.sample as i64 - offset;
        let end = start + len as i64;
        if start < 0 || end > r.n_samples() as i64 {
            return Err(EpochError::OnsetOutOfBounds {
                onset: onset.sample,
                start,
                end,
                n_samples: r.n_samples(),
            });
        }
        let slice = r
            .data
            .slice(ndarray::s![.., start as usize..end as usize]);
        tensor.index_axis_mut(ndarray::Axis(0), i).assign(&slice);
        labels.push(onset.label);
    }
    Ok(EpochSet {
        tensor,
        labels,
        fs: r.fs,
        t0_offset: offset as usize,
    })
}

/// Cut `n_target` non-overlapping rest epochs of `epoch_len` seconds,
/// tiling the rest intervals left to right. `t0_offset` is fixed at
/// `round(2 · fs)` so rest trials are shape-compatible with −2 s..+3 s
/// movement trials.
pub fn extract_rest_epochs(
    r: &Recording,
    ev: &EventList,
    epoch_len: f64,
    n_target: usize,
) -> Result<EpochSet, EpochError> {
    let len = (epoch_len * r.fs).round() as usize;
    let mut starts = Vec::new();
    'outer: for &(iv_start, iv_end) in &ev.rest_intervals {
        if starts.len() == n_target {
            break;
        }
        let iv_end = iv_end.min(r.n_samples());
        let mut s = iv_start;
        while s + len <= iv_end {
            starts.push(s);
            s += len;
            if starts.len() == n_target {
                break 'outer;
            }
        }
    }
    if starts.len() < n_target {
        return Err(EpochError::InsufficientRestData {
            available: starts.len(),
            requested: n_target,
        });
    }
    let n_ch = r.n_channels();
    let mut tensor = Array3::zeros((n_target, n_ch, len));
    for (i, &s) in starts.iter().enumerate() {
        tensor
            .index_axis_mut(ndarray::Axis(0), i)
            .assign(&r.data.slice(ndarray::s![.., s..s + len]));
    }
    Ok(EpochSet {
        tensor,
        labels: vec![ClassLabel::Rest; n_target],
        fs: r.fs,
        t0_offset: (2.0 * r.fs).round() as usize,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RejectReason {
    Amplitude,
    Kurtosis,
}

impl std::fmt::Display for RejectReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RejectReason::Amplitude => "amplitude",
            RejectReason::Kurtosis => "kurtosis",
        })
    }
}

/// Outcome of [`reject_outliers`]: kept/rejected trial indices with the
/// reason(s) for every rejection and the thresholds that were applied.
#[derive(Debug, Clone, PartialEq)]
pub struct RejectionReport {
    pub kept_indices: Vec<usize>,
    pub rejected_indices: Vec<usize>,
    pub reasons: Vec<(usize, Vec<RejectReason>)>,
    pub amp_limit: f64,
    pub kurt_factor: f64,
}

/// Keep a trial iff (1) its absolute amplitude never exceeds `amp_limit`
/// µV and (2) no channel's excess kurtosis exceeds the across-trials mean
/// by more than `kurt_factor` across-trials standard deviations.
pub fn reject_outliers(
    e: &EpochSet,
    amp_limit: f64,
    kurt_factor: f64,
) -> Result<(EpochSet, RejectionReport), EpochError> {
    let n = e.n_trials();
    if n < 2 {
        return Err(EpochError::TooFewTrials(n));
    }
    let n_ch = e.n_channels();

    // Per-trial, per-channel excess kurtosis.
    let mut kurt = ndarray::Array2::zeros((n, n_ch));
    for t in 0..n {
        let trial = e.trial(t);
        for c in 0..n_ch {
            kurt[[t, c]] = excess_kurtosis(trial.row(c).as_slice().unwrap());
        }
    }
    // Across-trials mean and population std per channel.
    let mut bounds = vec![0.0; n_ch];
    for c in 0..n_ch {
        let col = kurt.column(c);
        let mean = col.sum() / n as f64;
        let var = col.iter().map(|k| (k - mean) * (k - mean)).sum::<f64>() / n as f64;
        bounds[c] = mean + kurt_factor * var.sqrt();
    }

    let mut kept_indices = Vec::new();
    let mut rejected_indices = Vec::new();
    let mut reasons = Vec::new();
    for t in 0..n {
        let mut why = Vec::new();
        let peak = e.trial(t).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if peak > amp_limit {
            why.push(RejectReason::Amplitude);
        }
        if (0..n_ch).any(|c| kurt[[t, c]] > bounds[c]) {
            why.push(RejectReason::Kurtosis);
        }
        if why.is_empty() {
            kept_indices.push(t);
        } else {
            rejected_indices.push(t);
            reasons.push((t, why));
        }
    }
    let kept = e.subset(&kept_indices);
    Ok((
        kept,
        RejectionReport {
            kept_indices,
            rejected_indices,
            reasons,
            amp_limit,
            kurt_factor,
        },
    ))
}

/// Excess kurtosis (Gaussian → 0) from population moments. A constant
/// signal (second moment below 1e−24, i.e. std under 1e−12 µV) is assigned
/// kurtosis 0 rather than 0/0.
pub fn excess_kurtosis(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let m2 = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    if m2 < 1e-24 {
        return 0.0;
    }
    let m4 = x.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n;
    m4 / (m2 * m2) - 3.0
}
