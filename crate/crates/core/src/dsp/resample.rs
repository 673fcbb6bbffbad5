//! Polyphase rational resampling with a Kaiser-windowed anti-aliasing
//! low-pass (10 zero-crossings per side, β = 5.0).

use super::DspError;
use crate::data::Recording;
use rayon::prelude::*;

const HALF_WIDTH_CROSSINGS: usize = 10;
const KAISER_BETA: f64 = 5.0;

/// Downsample a recording to `target_fs`. The rate ratio need not be an
/// integer; it is approximated by a reduced fraction `p/q` (relative error
/// below 1e−9). Output length is `round(n · target_fs / fs)`.
pub fn resample(r: &Recording, target_fs: f64) -> Result<Recording, DspError> {
    if !(target_fs > 0.0) || target_fs >= r.fs {
        return Err(DspError::InvalidTarget {
            target: target_fs,
            fs: r.fs,
        });
    }
    let (p, q) = rational_approx(target_fs / r.fs);
    let max_rate = p.max(q);
    let half_len = HALF_WIDTH_CROSSINGS * max_rate;
    // Cutoff at the lower of the two Nyquist rates, normalized to the
    // upsampled rate; gain p preserves amplitude after zero-stuffing.
    let h = lowpass_kaiser(2 * half_len + 1, 1.0 / max_rate as f64, KAISER_BETA)
        .into_iter()
        .map(|c| c * p as f64)
        .collect::<Vec<_>>();

    let n_in = r.n_samples();
    let n_out = (n_in * p + q / 2) / q;

    let rows: Vec<Vec<f64>> = r
        .data
        .rows()
        .into_iter()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|row| {
            let x = row.as_slice().expect("recording rows are contiguous");
            polyphase_channel(x, &h, p, q, half_len, n_out)
        })
        .collect();

    let mut data = ndarray::Array2::zeros((rows.len(), n_out));
    for (c, row) in rows.into_iter().enumerate() {
        data.row_mut(c).assign(&ndarray::ArrayView1::from(&row));
    }
    Ok(Recording::new(data, target_fs, r.channel_labels.clone()))
}

/// One output channel. Output sample m sits at upsampled position `m·q`;
/// only taps landing on real input samples contribute. Samples outside the
/// input are treated as zero.
fn polyphase_channel(
    x: &[f64],
    h: &[f64],
    p: usize,
    q: usize,
    center: usize,
    n_out: usize,
) -> Vec<f64> {
    let n_in = x.len() as i64;
    let taps = h.len() as i64;
    let (p, q, center) = (p as i64, q as i64, center as i64);
    (0..n_out as i64)
        .map(|m| {
            let t = m * q + center; // upsampled index of tap 0
            let mut acc = 0.0;
            // smallest k ≥ max(0, t − p·(n_in−1)) with (t − k) ≡ 0 (mod p)
            let k_min = (t - p * (n_in - 1)).max(0);
            let mut k = k_min + (t - k_min).rem_euclid(p);
            let k_max = taps.min(t + 1);
            while k < k_max {
                let j = (t - k) / p;
                acc += h[k as usize] * x[j as usize];
                k += p;
            }
            acc
        })
        .collect()
}

/// Windowed-sinc low-pass; `cutoff` in Nyquist units (1.0 = fs/2),
/// normalized to unit DC gain.
fn lowpass_kaiser(taps: usize, cutoff: f64, beta: f64) -> Vec<f64> {
    let m = (taps - 1) as f64 / 2.0;
    let mut h: Vec<f64> = (0..taps)
        .map(|i| {
            let t = i as f64 - m;
            let s = if t == 0.0 {
                cutoff
            } else {
                (std::f64::consts::PI * cutoff * t).sin() / (std::f64::consts::PI * t)
            };
            s * kaiser(i as f64, (taps - 1) as f64, beta)
        })
        .collect();
    let sum: f64 = h.iter().sum();
    for c in &mut h {
        *c /= sum;
    }
    h
}

fn kaiser(i: f64, m: f64, beta: f64) -> f64 {
    let r = 2.0 * i / m - 1.0;
    bessel_i0(beta * (1.0 - r * r).max(0.0).sqrt()) / bessel_i0(beta)
}

/// Modified Bessel function of the first kind, order zero (power series).
fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let half = x / 2.0;
    for k in 1..=30 {
        term *= (half / k as f64) * (half / k as f64);
        sum += term;
        if term < 1e-18 * sum {
            break;
        }
    }
    sum
}

/// Best rational approximation of `ratio` by continued fractions, with the
/// denominator capped.
fn rational_approx(ratio: f64) -> (usize, usize) {
    let mut best = (1usize, 1usize);
    let (mut h0, mut h1) = (0i64, 1i64);
    let (mut k0, mut k1) = (1i64, 0i64);
    let mut x = ratio;
    for _ in 0..64 {
        let a = x.floor() as i64;
        let h2 = a * h1 + h0;
        let k2 = a * k1 + k0;
        if k2 > 1_000_000 || k2 <= 0 {
            break;
        }
        best = (h2 as usize, k2 as usize);
        if (h2 as f64 / k2 as f64 - ratio).abs() < 1e-12 * ratio {
            break;
        }
        let frac = x - a as f64;
        if frac <= f64::EPSILON {
            break;
        }
        x = 1.0 / frac;
        h0 = h1;
        h1 = h2;
        k0 = k1;
        k1 = k2;
    }
    best
}
