//! Digital filtering chain: IIR design, zero-phase application, common
//! average reference, and anti-aliased resampling.
//!
//! Filters are designed and applied as cascaded second-order sections. The
//! expanded `(b, a)` polynomials are kept on the struct for inspection, but
//! the 0.01 Hz edge of the wide Chebyshev band-pass puts pole clusters so
//! close to z = 1 that a direct-form realization of the expanded polynomial
//! is numerically worthless in f64; the cascade is exact where the
//! polynomial is not.

mod design;
mod filtfilt;
mod resample;

pub use design::design_filter;
pub use filtfilt::filtfilt;
pub use resample::resample;

use crate::data::{validate_recording, Recording};
use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DspError {
    #[error("invalid band {0:?} for fs {1} Hz")]
    InvalidBand((f64, f64), f64),
    #[error("design produced an unstable filter (pole magnitude {0})")]
    UnstableDesign(f64),
    #[error("signal too short: {len} samples, need more than {min}")]
    SignalTooShort { len: usize, min: usize },
    #[error("common average reference needs at least 2 channels")]
    SingleChannel,
    #[error("resample target {target} Hz is not below the input rate {fs} Hz")]
    InvalidTarget { target: f64, fs: f64 },
    #[error("invalid input recording: {0}")]
    InvalidInput(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterFamily {
    Chebyshev1,
    Butterworth,
    Notch,
}

/// Frequency specification of a design: a pass band or a notch center, Hz.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Band {
    Pass(f64, f64),
    Center(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignMeta {
    pub family: FilterFamily,
    pub order: usize,
    pub band: Band,
    pub fs: f64,
    /// Passband ripple in dB (Chebyshev) or quality factor (notch); unused
    /// for Butterworth.
    pub ripple_or_q: f64,
}

/// One second-order section; `a0` is normalized to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 3],
}

impl Biquad {
    /// Complex poles of the section.
    pub fn poles(&self) -> [Complex64; 2] {
        let half = -self.a[1] / 2.0;
        let disc = Complex64::new(self.a[1] * self.a[1] / 4.0 - self.a[2], 0.0).sqrt();
        [Complex64::new(half, 0.0) + disc, Complex64::new(half, 0.0) - disc]
    }

    /// Transfer function at normalized angular frequency `w` (rad/sample).
    pub fn response(&self, w: f64) -> Complex64 {
        let z1 = Complex64::from_polar(1.0, -w);
        let z2 = Complex64::from_polar(1.0, -2.0 * w);
        (self.b[0] + self.b[1] * z1 + self.b[2] * z2)
            / (self.a[0] + self.a[1] * z1 + self.a[2] * z2)
    }
}

/// Designed IIR filter: cascade of biquads plus the expanded polynomials.
#[derive(Debug, Clone, PartialEq)]
pub struct IirFilter {
    pub b: Vec<f64>,
    pub a: Vec<f64>,
    pub sections: Vec<Biquad>,
    pub design: DesignMeta,
}

impl IirFilter {
    /// Transfer function at `f_hz`, evaluated section by section (stable even
    /// where the expanded polynomials are not).
    pub fn response(&self, f_hz: f64) -> Complex64 {
        let w = 2.0 * std::f64::consts::PI * f_hz / self.design.fs;
        self.sections
            .iter()
            .fold(Complex64::new(1.0, 0.0), |acc, s| acc * s.response(w))
    }

    /// Largest pole magnitude across sections.
    pub fn max_pole_magnitude(&self) -> f64 {
        self.sections
            .iter()
            .flat_map(|s| s.poles())
            .map(|p| p.norm())
            .fold(0.0, f64::max)
    }
}

/// Common average reference: subtract the across-channel mean at every
/// sample.
pub fn car(r: &Recording) -> Result<Recording, DspError> {
    if r.n_channels() < 2 {
        return Err(DspError::SingleChannel);
    }
    let mut data = r.data.clone();
    let n_ch = data.nrows();
    for mut col in data.columns_mut() {
        let mean = col.sum() / n_ch as f64;
        col.mapv_inplace(|v| v - mean);
    }
    Ok(Recording::new(data, r.fs, r.channel_labels.clone()))
}

/// Parameters of the §-by-§ preprocessing chain. Defaults reproduce the
/// reference pipeline at 256 Hz: Chebyshev-I 0.01–100 Hz order 8 (0.5 dB
/// ripple), 50 Hz notch (Q 35), Butterworth 0.3–3 Hz order 4, CAR,
/// resample to 16 Hz.
#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessConfig {
    pub wide_band: (f64, f64),
    pub wide_order: usize,
    pub wide_ripple_db: f64,
    pub notch_hz: f64,
    pub notch_q: f64,
    pub narrow_band: (f64, f64),
    pub narrow_order: usize,
    pub target_fs: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            wide_band: (0.01, 100.0),
            wide_order: 8,
            wide_ripple_db: 0.5,
            notch_hz: 50.0,
            notch_q: 35.0,
            narrow_band: (0.3, 3.0),
            narrow_order: 4,
            target_fs: 16.0,
        }
    }
}

/// Full preprocessing chain, all filters applied forward-backward. Channels
/// are filtered in parallel; results are identical to sequential execution.
pub fn preprocess_chain(r: &Recording, cfg: &PreprocessConfig) -> Result<Recording, DspError> {
    let violations = validate_recording(r);
    if let Some(v) = violations.first() {
        return Err(DspError::InvalidInput(v.to_string()));
    }
    let wide = design_filter(
        FilterFamily::Chebyshev1,
        cfg.wide_order,
        Band::Pass(cfg.wide_band.0, cfg.wide_band.1),
        r.fs,
        cfg.wide_ripple_db,
    )?;
    let notch = design_filter(
        FilterFamily::Notch,
        2,
        Band::Center(cfg.notch_hz),
        r.fs,
        cfg.notch_q,
    )?;
    let narrow = design_filter(
        FilterFamily::Butterworth,
        cfg.narrow_order,
        Band::Pass(cfg.narrow_band.0, cfg.narrow_band.1),
        r.fs,
        0.0,
    )?;

    let filtered: Result<Vec<Vec<f64>>, DspError> = r
        .data
        .rows()
        .into_iter()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|row| {
            let x = row.to_vec();
            let x = filtfilt(&wide, &x)?;
            let x = filtfilt(&notch, &x)?;
            filtfilt(&narrow, &x)
        })
        .collect();
    let filtered = filtered?;
    let n_samples = filtered[0].len();
    let mut data = ndarray::Array2::zeros((filtered.len(), n_samples));
    for (c, row) in filtered.into_iter().enumerate() {
        data.row_mut(c).assign(&ndarray::ArrayView1::from(&row));
    }

    let referenced = car(&Recording::new(data, r.fs, r.channel_labels.clone()))?;
    resample(&referenced, cfg.target_fs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::Array2;

    #[test]
    fn car_subtracts_column_mean() {
        let data = ndarray::arr2(&[[1.0], [2.0], [3.0]]);
        let r = Recording::new(data, 16.0, vec!["a".into(), "b".into(), "c".into()]);
        let out = car(&r).unwrap();
        assert_abs_diff_eq!(out.data[[0, 0]], -1.0);
        assert_abs_diff_eq!(out.data[[1, 0]], 0.0);
        assert_abs_diff_eq!(out.data[[2, 0]], 1.0);
    }

    #[test]
    fn car_identical_channels_go_to_zero() {
        let data = Array2::from_elem((4, 10), 3.25);
        let r = Recording::new(data, 16.0, (0..4).map(|i| i.to_string()).collect());
        let out = car(&r).unwrap();
        assert!(out.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn car_zero_mean_per_sample() {
        use rand::Rng;
        let mut rng = crate::rng::stream_rng(3, 0);
        let data = Array2::from_shape_fn((58, 100), |_| rng.gen_range(-50.0..50.0));
        let r = Recording::new(data, 256.0, (0..58).map(|i| i.to_string()).collect());
        let out = car(&r).unwrap();
        for col in out.data.columns() {
            assert!(col.sum().abs() < 1e-10);
        }
    }

    #[test]
    fn car_idempotent() {
        use rand::Rng;
        let mut rng = crate::rng::stream_rng(4, 0);
        let data = Array2::from_shape_fn((8, 64), |_| rng.gen_range(-50.0..50.0));
        let r = Recording::new(data, 256.0, (0..8).map(|i| i.to_string()).collect());
        let once = car(&r).unwrap();
        let twice = car(&once).unwrap();
        for (a, b) in once.data.iter().zip(twice.data.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-10);
        }
    }

    #[test]
    fn car_single_channel_rejected() {
        let r = Recording::new(Array2::zeros((1, 16)), 16.0, vec!["a".into()]);
        assert_eq!(car(&r).unwrap_err(), DspError::SingleChannel);
    }

    #[test]
    fn chain_length_arithmetic() {
        // 58 channels, 256 Hz, 60 s → 58 channels, 16 Hz, 960 samples.
        let data = Array2::from_shape_fn((58, 60 * 256), |(c, s)| {
            let t = s as f64 / 256.0;
            2.0 * (2.0 * std::f64::consts::PI * 1.0 * t + c as f64).sin()
        });
        let r = Recording::new(data, 256.0, (0..58).map(|i| i.to_string()).collect());
        let out = preprocess_chain(&r, &PreprocessConfig::default()).unwrap();
        assert_eq!(out.n_channels(), 58);
        assert_eq!(out.fs, 16.0);
        assert_eq!(out.n_samples(), 960);
    }

    #[test]
    fn chain_removes_line_noise() {
        // Pure 50 Hz interference: output RMS ≤ 1% of input RMS.
        let data = Array2::from_shape_fn((4, 40 * 256), |(c, s)| {
            let t = s as f64 / 256.0;
            10.0 * (2.0 * std::f64::consts::PI * 50.0 * t + 0.3 * c as f64).sin()
        });
        let rms_in = (data.iter().map(|v| v * v).sum::<f64>() / data.len() as f64).sqrt();
        let r = Recording::new(data, 256.0, (0..4).map(|i| i.to_string()).collect());
        let out = preprocess_chain(&r, &PreprocessConfig::default()).unwrap();
        let rms_out =
            (out.data.iter().map(|v| v * v).sum::<f64>() / out.data.len() as f64).sqrt();
        assert!(
            rms_out <= 0.01 * rms_in,
            "rms_out {rms_out} vs rms_in {rms_in}"
        );
    }
}
