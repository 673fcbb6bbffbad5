//! IIR design: Butterworth and Chebyshev-I band-pass via the analog
//! prototype → band transform → bilinear route, plus a constrained biquad
//! notch. Everything stays in zero-pole-gain form until the final pairing
//! into second-order sections.

use super::{Band, Biquad, DesignMeta, DspError, FilterFamily, IirFilter};
use num_complex::Complex64;

const POLE_MARGIN: f64 = 1e-9;

/// Design a stable IIR filter.
///
/// * `Butterworth` / `Chebyshev1`: `band` must be `Band::Pass(lo, hi)` with
///   `0 < lo < hi < fs/2`; `order` is the analog prototype order (the digital
///   band-pass has `2·order` poles). `ripple_or_q` is the passband ripple in
///   dB for Chebyshev (ignored for Butterworth).
/// * `Notch`: `band` must be `Band::Center(f0)` with `0 < f0 < fs/2`;
///   `ripple_or_q` is the quality factor.
pub fn design_filter(
    family: FilterFamily,
    order: usize,
    band: Band,
    fs: f64,
    ripple_or_q: f64,
) -> Result<IirFilter, DspError> {
    let nyq = fs / 2.0;
    let sections = match (family, band) {
        (FilterFamily::Notch, Band::Center(f0)) => {
            if !(f0 > 0.0 && f0 < nyq) {
                return Err(DspError::InvalidBand((f0, f0), fs));
            }
            vec![notch_biquad(f0, fs, ripple_or_q)]
        }
        (FilterFamily::Notch, Band::Pass(lo, hi)) => {
            return Err(DspError::InvalidBand((lo, hi), fs));
        }
        (_, Band::Center(f0)) => {
            return Err(DspError::InvalidBand((f0, f0), fs));
        }
        (fam, Band::Pass(lo, hi)) => {
            if !(lo > 0.0 && lo < hi && hi < nyq) || order == 0 {
                return Err(DspError::InvalidBand((lo, hi), fs));
            }
            let (poles, gain) = match fam {
                FilterFamily::Butterworth => butter_prototype(order),
                FilterFamily::Chebyshev1 => cheby1_prototype(order, ripple_or_q),
                FilterFamily::Notch => unreachable!(),
            };
            bandpass_sections(&poles, gain, lo, hi, fs)
        }
    };

    let filter = IirFilter {
        b: expand(sections.iter().map(|s| s.b)),
        a: expand(sections.iter().map(|s| s.a)),
        sections,
        design: DesignMeta {
            family,
            order,
            band,
            fs,
            ripple_or_q,
        },
    };
    let max_pole = filter.max_pole_magnitude();
    if max_pole >= 1.0 - POLE_MARGIN {
        return Err(DspError::UnstableDesign(max_pole));
    }
    Ok(filter)
}

/// Analog Butterworth prototype: poles on the unit half-circle, unit gain.
/// Only the upper-half poles (Im > 0) are returned, plus any real pole;
/// conjugates are implied.
fn butter_prototype(order: usize) -> (Vec<Complex64>, f64) {
    let n = order as f64;
    let mut poles = Vec::new();
    for k in 0..order {
        let m = -(n - 1.0) + 2.0 * k as f64;
        let p = -Complex64::from_polar(1.0, std::f64::consts::PI * m / (2.0 * n));
        if p.im > 1e-12 || p.im.abs() <= 1e-12 {
            poles.push(Complex64::new(p.re, p.im.max(0.0)));
        }
    }
    (poles, 1.0)
}

/// Analog Chebyshev type-I prototype with `ripple_db` passband ripple.
fn cheby1_prototype(order: usize, ripple_db: f64) -> (Vec<Complex64>, f64) {
    let n = order as f64;
    let eps = (10f64.powf(0.1 * ripple_db) - 1.0).sqrt();
    let mu = (1.0 / eps).asinh() / n;
    let mut upper = Vec::new();
    let mut gain = 1.0;
    for k in 0..order {
        let m = -(n - 1.0) + 2.0 * k as f64;
        let theta = std::f64::consts::PI * m / (2.0 * n);
        // p = -sinh(mu + iθ)
        let p = Complex64::new(-mu.sinh() * theta.cos(), -mu.cosh() * theta.sin());
        gain *= (-p).norm();
        if p.im > 1e-12 || p.im.abs() <= 1e-12 {
            upper.push(Complex64::new(p.re, p.im.max(0.0)));
        }
    }
    if order % 2 == 0 {
        gain /= (1.0 + eps * eps).sqrt();
    }
    (upper, gain)
}

/// Low-pass prototype → digital band-pass second-order sections.
///
/// The prototype is given by its upper-half-plane poles (conjugates
/// implied) and overall gain. Frequencies are prewarped, the band transform
/// doubles the pole count, and the bilinear transform lands n zeros at
/// z = +1 and n at z = −1. Sections pair conjugate poles; zeros are handed
/// out nearest-first with the highest-Q sections served first.
fn bandpass_sections(
    upper_poles: &[Complex64],
    prototype_gain: f64,
    lo_hz: f64,
    hi_hz: f64,
    fs: f64,
) -> Vec<Biquad> {
    let fs2 = 2.0 * fs;
    let warped_lo = fs2 * (std::f64::consts::PI * lo_hz / fs).tan();
    let warped_hi = fs2 * (std::f64::consts::PI * hi_hz / fs).tan();
    let wo = (warped_lo * warped_hi).sqrt();
    let bw = warped_hi - warped_lo;

    // Band transform on every pole (conjugates generated explicitly so the
    // pair structure is exact), then bilinear to the z plane.
    let mut z_poles: Vec<Complex64> = Vec::new();
    let mut analog_poles: Vec<Complex64> = Vec::new();
    for &p in upper_poles {
        let full: &[Complex64] = if p.im.abs() <= 1e-12 {
            &[p]
        } else {
            &[p, p.conj()]
        };
        for &q in full {
            let lp = q * (bw / 2.0);
            let disc = (lp * lp - Complex64::new(wo * wo, 0.0)).sqrt();
            analog_poles.push(lp + disc);
            analog_poles.push(lp - disc);
        }
    }
    let order = analog_poles.len() / 2; // prototype order n; 2n analog poles
    let mut gain_num = Complex64::new(1.0, 0.0);
    let mut gain_den = Complex64::new(1.0, 0.0);
    for &p in &analog_poles {
        z_poles.push((Complex64::new(fs2, 0.0) + p) / (Complex64::new(fs2, 0.0) - p));
        gain_den *= Complex64::new(fs2, 0.0) - p;
    }
    // n analog zeros at s = 0 (the other n are at infinity → z = −1).
    for _ in 0..order {
        gain_num *= Complex64::new(fs2, 0.0);
    }
    let k = prototype_gain * bw.powi(order as i32) * (gain_num / gain_den).re;

    // Pair poles into conjugate (or real) pairs.
    let mut pairs: Vec<(Complex64, Complex64)> = Vec::new();
    let mut reals: Vec<Complex64> = Vec::new();
    let mut uppers: Vec<Complex64> = Vec::new();
    for p in z_poles {
        if p.im.abs() <= 1e-10 * p.re.abs().max(1.0) {
            reals.push(p);
        } else if p.im > 0.0 {
            uppers.push(p);
        }
        // lower-half poles are the implied conjugates
    }
    for p in uppers {
        pairs.push((p, p.conj()));
    }
    reals.sort_by(|a, b| a.re.partial_cmp(&b.re).unwrap());
    for chunk in reals.chunks(2) {
        if chunk.len() == 2 {
            pairs.push((chunk[0], chunk[1]));
        } else {
            pairs.push((chunk[0], Complex64::new(0.0, 0.0)));
        }
    }
    // Highest-Q (closest to the unit circle) sections get their zeros first.
    pairs.sort_by(|x, y| {
        let dx = 1.0 - x.0.norm();
        let dy = 1.0 - y.0.norm();
        dx.partial_cmp(&dy).unwrap()
    });

    let mut plus_left = order; // zeros at z = +1
    let mut minus_left = order; // zeros at z = −1
    let mut sections = Vec::with_capacity(pairs.len());
    for (p1, p2) in pairs {
        let a = [1.0, -(p1 + p2).re, (p1 * p2).re];
        let d_plus = (p1 - Complex64::new(1.0, 0.0)).norm();
        let d_minus = (p1 + Complex64::new(1.0, 0.0)).norm();
        let b = if plus_left >= 2 && (d_plus <= d_minus || minus_left < 2) {
            plus_left -= 2;
            [1.0, -2.0, 1.0]
        } else if minus_left >= 2 {
            minus_left -= 2;
            [1.0, 2.0, 1.0]
        } else {
            plus_left -= 1;
            minus_left -= 1;
            [1.0, 0.0, -1.0]
        };
        sections.push(Biquad { b, a });
    }
    // Overall gain goes on the first section.
    if let Some(first) = sections.first_mut() {
        for c in &mut first.b {
            *c *= k;
        }
    }
    sections
}

/// Constrained biquad notch at `f0` with quality factor `q`: unit gain far
/// from the notch, exact zeros on the unit circle at ±f0.
fn notch_biquad(f0: f64, fs: f64, q: f64) -> Biquad {
    let w0 = 2.0 * std::f64::consts::PI * f0 / fs;
    let alpha = w0.sin() / (2.0 * q);
    let a0 = 1.0 + alpha;
    Biquad {
        b: [1.0 / a0, -2.0 * w0.cos() / a0, 1.0 / a0],
        a: [1.0, -2.0 * w0.cos() / a0, (1.0 - alpha) / a0],
    }
}

/// Multiply section polynomials into one expanded polynomial.
fn expand(polys: impl Iterator<Item = [f64; 3]>) -> Vec<f64> {
    let mut acc = vec![1.0];
    for p in polys {
        let mut next = vec![0.0; acc.len() + 2];
        for (i, &x) in acc.iter().enumerate() {
            for (j, &y) in p.iter().enumerate() {
                next[i + j] += x * y;
            }
        }
        acc = next;
    }
    acc
}
