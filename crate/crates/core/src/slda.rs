//! Shrinkage-regularized linear discriminant analysis with sliding-window
//! training and model selection.
//!
//! The pooled within-class covariance is shrunk toward the scaled identity
//! ν·I with the analytic optimal weight (sample variance of the covariance
//! entries over squared distance to the target, clipped to [0, 1]).
//!
//! Fold scoring inside the window scan runs in the dual: with
//! Σ = α·I + β·X̂ᵀX̂ the Woodbury identity turns every d×d solve into an
//! n×n one, which is what makes scanning ~100 windows × 50 folds over
//! ~900-dimensional features affordable. The final model is always refit in
//! the primal with the full covariance matrix.

use crate::data::{ClassLabel, EpochSet, SplitPlan};
use ndarray::{Array1, Array2, ArrayView2, Axis};
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SldaError {
    #[error("window [{start}, {start_plus_len}) exceeds epoch length {n_samples}")]
    WindowOutOfBounds {
        start: usize,
        start_plus_len: usize,
        n_samples: usize,
    },
    #[error("need at least 2 classes, got {0}")]
    TooFewClasses(usize),
    #[error("class {0} has fewer than 2 trials")]
    TooFewTrialsPerClass(ClassLabel),
    #[error("empty feature matrix")]
    EmptyFeatures,
    #[error("shrunk covariance is not positive definite (gamma = {gamma})")]
    SingularAfterShrinkage { gamma: f64 },
    #[error("feature vector has length {got}, model expects {expected}")]
    DimensionMismatch { got: usize, expected: usize },
    #[error("invalid window request: {0}")]
    InvalidWindow(String),
}

/// Analysis window within an epoch, in samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub start: usize,
    pub len: usize,
}

/// Reshape a window of every trial into Eq.-style flat features: feature
/// `t·n_channels + c` holds channel `c` at sample `start + t`.
pub fn flatten_window(
    e: &EpochSet,
    start: usize,
    len: usize,
) -> Result<Array2<f64>, SldaError> {
    if start + len > e.n_samples() {
        return Err(SldaError::WindowOutOfBounds {
            start,
            start_plus_len: start + len,
            n_samples: e.n_samples(),
        });
    }
    let n_ch = e.n_channels();
    let mut out = Array2::zeros((e.n_trials(), n_ch * len));
    for i in 0..e.n_trials() {
        let trial = e.trial(i);
        let mut row = out.row_mut(i);
        for t in 0..len {
            for c in 0..n_ch {
                row[t * n_ch + c] = trial[[c, start + t]];
            }
        }
    }
    Ok(out)
}

/// Result of the analytic shrinkage estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Shrinkage {
    pub gamma: f64,
    /// Set when the denominator vanished (all trials identical); gamma is
    /// forced to 1.
    pub degenerate: bool,
}

/// Optimal shrinkage weight toward ν·I from per-class feature matrices.
///
/// Classes are centered individually; with n total trials over C classes
/// the pooled covariance uses n − C degrees of freedom, and
///
/// ```text
/// gamma = Σ_ij Var̂(S_ij) / Σ_ij (S_ij − ν δ_ij)²   clipped to [0, 1]
/// ```
///
/// Both sums are evaluated through Gram-matrix identities, which is exact
/// and avoids materializing S.
pub fn estimate_shrinkage(class_features: &[ArrayView2<f64>]) -> Result<Shrinkage, SldaError> {
    let n: usize = class_features.iter().map(|f| f.nrows()).sum();
    let n_classes = class_features.len();
    if n < 2 || n_classes == 0 {
        return Err(SldaError::EmptyFeatures);
    }
    let d = class_features[0].ncols();
    let mut centered = Array2::zeros((n, d));
    let mut row = 0;
    for feats in class_features {
        let mean = feats.mean_axis(Axis(0)).ok_or(SldaError::EmptyFeatures)?;
        for r in feats.rows() {
            let mut dst = centered.row_mut(row);
            for j in 0..d {
                dst[j] = r[j] - mean[j];
            }
            row += 1;
        }
    }
    let m_df = (n - n_classes).max(1) as f64;
    Ok(shrinkage_from_centered(&centered, m_df))
}

/// Shrinkage weight from centered rows via Gram identities:
/// `Σ_k ||x̂_k||⁴ = Σ_k G_kk²`, `Σ_kl (x̂_kᵀ x̂_l)² = ||G||_F²`,
/// `||S||_F² = ||G||_F² / m_df²`.
fn shrinkage_from_centered(centered: &Array2<f64>, m_df: f64) -> Shrinkage {
    let n = centered.nrows();
    let d = centered.ncols();
    let nf = n as f64;

    let mut gram_diag_sq = 0.0;
    let mut gram_frob_sq = 0.0;
    for i in 0..n {
        let ri = centered.row(i);
        let ri = ri.as_slice().unwrap();
        for j in i..n {
            let rj = centered.row(j);
            let rj = rj.as_slice().unwrap();
            let g: f64 = ri.iter().zip(rj).map(|(a, b)| a * b).sum();
            if i == j {
                gram_diag_sq += g * g;
                gram_frob_sq += g * g;
            } else {
                gram_frob_sq += 2.0 * g * g;
            }
        }
    }
    // diag(S) and ν
    let mut diag_sq_sum = 0.0;
    let mut trace = 0.0;
    for j in 0..d {
        let s_jj = centered.column(j).iter().map(|v| v * v).sum::<f64>() / m_df;
        diag_sq_sum += s_jj * s_jj;
        trace += s_jj;
    }
    let nu = trace / d as f64;

    let num = if n > 1 {
        nf / (m_df * m_df * (nf - 1.0)) * (gram_diag_sq - gram_frob_sq / nf)
    } else {
        0.0
    };
    let den = gram_frob_sq / (m_df * m_df) - diag_sq_sum
        + (diag_sq_sum - 2.0 * nu * trace + d as f64 * nu * nu);
    if !(den > 0.0) || !num.is_finite() {
        return Shrinkage {
            gamma: 1.0,
            degenerate: true,
        };
    }
    Shrinkage {
        gamma: (num / den).clamp(0.0, 1.0),
        degenerate: false,
    }
}

/// Trained shrinkage-LDA classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct SldaModel {
    pub classes: Vec<ClassLabel>,
    /// n_classes × d.
    pub class_means: Array2<f64>,
    /// d × d, symmetric positive definite.
    pub shrunk_covariance: Array2<f64>,
    pub gamma: f64,
    pub priors: Vec<f64>,
    pub window: Option<Window>,
    /// Σ⁻¹ μ_k, cached at construction.
    weights: Array2<f64>,
    /// −½ μ_kᵀ Σ⁻¹ μ_k + ln prior_k.
    biases: Vec<f64>,
}

impl SldaModel {
    pub fn dim(&self) -> usize {
        self.class_means.ncols()
    }

    /// Rebuild a model from its serialized parts, re-deriving the cached
    /// discriminant weights (Cholesky of the stored covariance).
    pub fn from_parts(
        classes: Vec<ClassLabel>,
        class_means: Array2<f64>,
        shrunk_covariance: Array2<f64>,
        gamma: f64,
        priors: Vec<f64>,
        window: Option<Window>,
    ) -> Result<SldaModel, SldaError> {
        let d = class_means.ncols();
        let k = class_means.nrows();
        let chol = nalgebra::Cholesky::new(nalgebra::DMatrix::from_fn(d, d, |i, j| {
            shrunk_covariance[[i, j]]
        }))
        .ok_or(SldaError::SingularAfterShrinkage { gamma })?;
        let mut weights = Array2::zeros((k, d));
        let mut biases = Vec::with_capacity(k);
        for c in 0..k {
            let mu = nalgebra::DVector::from_fn(d, |i, _| class_means[[c, i]]);
            let w = chol.solve(&mu);
            let mut dot = 0.0;
            for i in 0..d {
                weights[[c, i]] = w[i];
                dot += class_means[[c, i]] * w[i];
            }
            biases.push(-0.5 * dot + priors[c].ln());
        }
        Ok(SldaModel {
            classes,
            class_means,
            shrunk_covariance,
            gamma,
            priors,
            window,
            weights,
            biases,
        })
    }
}

fn class_partition(
    labels: &[ClassLabel],
) -> Result<(Vec<ClassLabel>, Vec<Vec<usize>>), SldaError> {
    let classes: Vec<ClassLabel> = ClassLabel::ALL
        .iter()
        .copied()
        .filter(|c| labels.contains(c))
        .collect();
    if classes.len() < 2 {
        return Err(SldaError::TooFewClasses(classes.len()));
    }
    let rows: Vec<Vec<usize>> = classes
        .iter()
        .map(|&c| {
            (0..labels.len())
                .filter(|&i| labels[i] == c)
                .collect::<Vec<_>>()
        })
        .collect();
    for (c, r) in classes.iter().zip(&rows) {
        if r.len() < 2 {
            return Err(SldaError::TooFewTrialsPerClass(*c));
        }
    }
    Ok((classes, rows))
}

/// Fit an sLDA model, estimating the shrinkage weight from the data.
pub fn fit_slda(features: ArrayView2<f64>, labels: &[ClassLabel]) -> Result<SldaModel, SldaError> {
    fit_slda_with_gamma(features, labels, None)
}

/// As [`fit_slda`] with the shrinkage weight forced (`Some(gamma)`),
/// bypassing the analytic estimate.
pub fn fit_slda_with_gamma(
    features: ArrayView2<f64>,
    labels: &[ClassLabel],
    forced_gamma: Option<f64>,
) -> Result<SldaModel, SldaError> {
    if features.nrows() != labels.len() || features.nrows() == 0 {
        return Err(SldaError::EmptyFeatures);
    }
    let (classes, rows) = class_partition(labels)?;
    let n = features.nrows();
    let d = features.ncols();
    let k = classes.len();

    let mut class_means = Array2::zeros((k, d));
    let mut priors = Vec::with_capacity(k);
    for (c, r) in rows.iter().enumerate() {
        for &i in r {
            for j in 0..d {
                class_means[[c, j]] += features[[i, j]];
            }
        }
        let nc = r.len() as f64;
        class_means.row_mut(c).mapv_inplace(|v| v / nc);
        priors.push(nc / n as f64);
    }

    let mut centered = Array2::zeros((n, d));
    for (c, r) in rows.iter().enumerate() {
        for &i in r {
            for j in 0..d {
                centered[[i, j]] = features[[i, j]] - class_means[[c, j]];
            }
        }
    }
    let m_df = (n - k).max(1) as f64;
    let gamma = match forced_gamma {
        Some(g) => g.clamp(0.0, 1.0),
        None => shrinkage_from_centered(&centered, m_df).gamma,
    };

    // Pooled covariance S = X̂ᵀX̂ / m_df (upper triangle, mirrored), then
    // the shrunk blend (1−γ)·S + γ·ν·I.
    let mut cov: Array2<f64> = Array2::zeros((d, d));
    for r in centered.rows() {
        let r = r.as_slice().unwrap();
        for i in 0..d {
            let ri = r[i];
            if ri == 0.0 {
                continue;
            }
            let row = &mut cov.as_slice_mut().unwrap()[i * d..(i + 1) * d];
            for (j, v) in r[i..].iter().enumerate() {
                row[i + j] += ri * v;
            }
        }
    }
    let trace: f64 = (0..d).map(|i| cov[[i, i]]).sum::<f64>() / m_df;
    let nu = trace / d as f64;
    for i in 0..d {
        for j in i..d {
            let s = cov[[i, j]] / m_df;
            let blended = (1.0 - gamma) * s + if i == j { gamma * nu } else { 0.0 };
            cov[[i, j]] = blended;
            cov[[j, i]] = blended;
        }
    }

    SldaModel::from_parts(classes, class_means, cov, gamma, priors, None)
}

/// Classify a feature vector: arg max of the linear discriminants
/// `δ_k(x) = xᵀ Σ⁻¹ μ_k − ½ μ_kᵀ Σ⁻¹ μ_k + ln prior_k`, ties broken by the
/// smallest class index. Returns the class and all discriminant scores.
pub fn predict_slda(m: &SldaModel, x: &[f64]) -> Result<(ClassLabel, Vec<f64>), SldaError> {
    if x.len() != m.dim() {
        return Err(SldaError::DimensionMismatch {
            got: x.len(),
            expected: m.dim(),
        });
    }
    let mut scores = Vec::with_capacity(m.classes.len());
    for c in 0..m.classes.len() {
        let w = m.weights.row(c);
        let w = w.as_slice().unwrap();
        let dot: f64 = w.iter().zip(x).map(|(a, b)| a * b).sum();
        scores.push(dot + m.biases[c]);
    }
    let best = argmax_first(&scores);
    Ok((m.classes[best], scores))
}

fn argmax_first(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// Per-window cross-validation scores over a sliding scan.
#[derive(Debug, Clone)]
pub struct WindowScan {
    pub win_len: usize,
    pub starts: Vec<usize>,
    /// `fold_accuracies[w][r·n_folds + f]`; NaN marks a failed fold.
    pub fold_accuracies: Vec<Vec<f64>>,
    /// Mean fold accuracy per window; a window with any failed fold scores 0.
    pub mean_accuracy: Vec<f64>,
    pub best_index: usize,
}

impl WindowScan {
    pub fn best_start(&self) -> usize {
        self.starts[self.best_index]
    }
}

/// Candidate window starts for epochs of `n_samples`: fully contained
/// windows only, `floor((N − L)/step) + 1` of them.
pub fn window_starts(n_samples: usize, len: usize, step: usize) -> Vec<usize> {
    if len > n_samples || step == 0 {
        return Vec::new();
    }
    (0..=n_samples - len).step_by(step).collect()
}

/// Scan all candidate windows, scoring each by the plan's repeated folds
/// with a caller-supplied trainer. `score_fold(features, labels, train
/// rows, test rows, stream index)` returns the fold accuracy. Windows run
/// in parallel; the reduction is by window index, so results do not depend
/// on worker count.
pub fn scan_windows<F>(
    e: &EpochSet,
    win_len: usize,
    step: usize,
    plan: &SplitPlan,
    score_fold: F,
) -> Result<WindowScan, SldaError>
where
    F: Fn(&Array2<f64>, &[ClassLabel], &[usize], &[usize], u32) -> Result<f64, String> + Sync,
{
    let starts = window_starts(e.n_samples(), win_len, step);
    if starts.is_empty() {
        return Err(SldaError::InvalidWindow(format!(
            "window of {win_len} samples with step {step} does not fit {} samples",
            e.n_samples()
        )));
    }
    let n_folds = plan.n_folds();
    let folds: Vec<(Vec<usize>, &[usize])> = (0..plan.n_repeats())
        .flat_map(|r| {
            (0..n_folds).map(move |f| (plan.fold_train(r, f), plan.fold_assignments[r][f].as_slice()))
        })
        .collect();

    let results: Vec<(Vec<f64>, f64)> = starts
        .par_iter()
        .enumerate()
        .map(|(w, &start)| {
            let features = flatten_window(e, start, win_len).expect("start is in range");
            let mut accs = Vec::with_capacity(folds.len());
            let mut failed = false;
            for (fi, (train, test)) in folds.iter().enumerate() {
                let stream = (w * folds.len() + fi) as u32;
                match score_fold(&features, &e.labels, train, test, stream) {
                    Ok(a) => accs.push(a),
                    Err(_) => {
                        accs.push(f64::NAN);
                        failed = true;
                    }
                }
            }
            let mean = if failed || accs.is_empty() {
                0.0
            } else {
                accs.iter().sum::<f64>() / accs.len() as f64
            };
            (accs, mean)
        })
        .collect();

    let mut best = 0;
    for (i, r) in results.iter().enumerate() {
        if r.1 > results[best].1 {
            best = i;
        }
    }
    Ok(WindowScan {
        win_len,
        starts,
        fold_accuracies: results.iter().map(|r| r.0.clone()).collect(),
        mean_accuracy: results.iter().map(|r| r.1).collect(),
        best_index: best,
    })
}

/// Outcome of [`sliding_window_select`]: the model refit on the full
/// training set at the best-scoring window, plus the scan it won.
#[derive(Debug, Clone)]
pub struct SlidingSelection {
    pub model: SldaModel,
    pub scan: WindowScan,
}

/// Train one sLDA per fully-contained window of `win_len_s` seconds
/// (stride `step` samples), score each by the plan's repeated folds
/// (training folds only), and refit on the full training set at the best
/// start. Ties go to the earliest window.
pub fn sliding_window_select(
    e: &EpochSet,
    win_len_s: f64,
    step: usize,
    plan: &SplitPlan,
) -> Result<SlidingSelection, SldaError> {
    let win_len = (win_len_s * e.fs).round() as usize;
    let scan = scan_windows(e, win_len, step, plan, |features, labels, train, test, _| {
        score_fold_dual(features, labels, train, test)
    })?;
    let start = scan.best_start();
    let features = flatten_window(e, start, win_len)?;
    let train_feats = select_rows(&features, &plan.train_indices);
    let train_labels: Vec<ClassLabel> = plan.train_indices.iter().map(|&i| e.labels[i]).collect();
    let mut model = fit_slda(train_feats.view(), &train_labels)?;
    model.window = Some(Window {
        start,
        len: win_len,
    });
    Ok(SlidingSelection { model, scan })
}

pub(crate) fn select_rows(features: &Array2<f64>, rows: &[usize]) -> Array2<f64> {
    let d = features.ncols();
    let mut out = Array2::zeros((rows.len(), d));
    for (dst, &src) in rows.iter().enumerate() {
        out.row_mut(dst).assign(&features.row(src));
    }
    out
}

/// Fold accuracy via the dual-form discriminants (identical math to
/// [`fit_slda`] + [`predict_slda`], verified in tests; no d×d matrix is
/// formed).
pub(crate) fn score_fold_dual(
    features: &Array2<f64>,
    labels: &[ClassLabel],
    train: &[usize],
    test: &[usize],
) -> Result<f64, String> {
    let train_labels: Vec<ClassLabel> = train.iter().map(|&i| labels[i]).collect();
    let (classes, rows) = class_partition(&train_labels).map_err(|e| e.to_string())?;
    let train_feats = select_rows(features, train);
    let disc = fit_dual(&train_feats, &classes, &rows).map_err(|e| e.to_string())?;

    let mut correct = 0usize;
    for &t in test {
        let x = features.row(t);
        let x = x.as_slice().unwrap();
        let mut scores = Vec::with_capacity(classes.len());
        for c in 0..classes.len() {
            let w = disc.weights.row(c);
            let w = w.as_slice().unwrap();
            let dot: f64 = w.iter().zip(x).map(|(a, b)| a * b).sum();
            scores.push(dot + disc.biases[c]);
        }
        if classes[argmax_first(&scores)] == labels[t] {
            correct += 1;
        }
    }
    Ok(correct as f64 / test.len().max(1) as f64)
}

struct DualDiscriminant {
    weights: Array2<f64>,
    biases: Vec<f64>,
}

/// Discriminant weights via the Woodbury identity:
/// `Σ⁻¹ u = (u − X̂ᵀ K⁻¹ X̂ u)/α` with `K = (α/β)·I + X̂X̂ᵀ`,
/// `α = γν`, `β = (1−γ)/m_df`.
fn fit_dual(
    features: &Array2<f64>,
    classes: &[ClassLabel],
    rows: &[Vec<usize>],
) -> Result<DualDiscriminant, SldaError> {
    let n = features.nrows();
    let d = features.ncols();
    let k = classes.len();
    let m_df = (n - k).max(1) as f64;

    let mut class_means = Array2::zeros((k, d));
    let mut priors = Vec::with_capacity(k);
    for (c, r) in rows.iter().enumerate() {
        for &i in r {
            for j in 0..d {
                class_means[[c, j]] += features[[i, j]];
            }
        }
        let nc = r.len() as f64;
        class_means.row_mut(c).mapv_inplace(|v| v / nc);
        priors.push(nc / n as f64);
    }
    let mut centered = Array2::zeros((n, d));
    for (c, r) in rows.iter().enumerate() {
        for &i in r {
            for j in 0..d {
                centered[[i, j]] = features[[i, j]] - class_means[[c, j]];
            }
        }
    }

    let sh = shrinkage_from_centered(&centered, m_df);
    let gamma = sh.gamma;
    let trace: f64 = centered.iter().map(|v| v * v).sum::<f64>() / m_df;
    let nu = trace / d as f64;

    let weights = if gamma >= 1.0 - 1e-12 || nu == 0.0 {
        // Σ = ν·I
        let scale = if nu > 0.0 { 1.0 / nu } else { 0.0 };
        let mut w = class_means.clone();
        w.mapv_inplace(|v| v * scale);
        w
    } else if gamma <= 1e-12 {
        // No shrinkage: fall back to the primal solve.
        let mut cov: Array2<f64> = Array2::zeros((d, d));
        for r in centered.rows() {
            let r = r.as_slice().unwrap();
            for i in 0..d {
                if r[i] == 0.0 {
                    continue;
                }
                for j in i..d {
                    cov[[i, j]] += r[i] * r[j];
                }
            }
        }
        let chol = nalgebra::Cholesky::new(nalgebra::DMatrix::from_fn(d, d, |i, j| {
            cov[[i.min(j), i.max(j)]] / m_df
        }))
        .ok_or(SldaError::SingularAfterShrinkage { gamma })?;
        let mut w = Array2::zeros((k, d));
        for c in 0..k {
            let mu = nalgebra::DVector::from_fn(d, |i, _| class_means[[c, i]]);
            let sol = chol.solve(&mu);
            for i in 0..d {
                w[[c, i]] = sol[i];
            }
        }
        w
    } else {
        let alpha = gamma * nu;
        let beta = (1.0 - gamma) / m_df;
        let ridge = alpha / beta;
        let mut gram = nalgebra::DMatrix::zeros(n, n);
        for i in 0..n {
            let ri = centered.row(i);
            let ri = ri.as_slice().unwrap();
            for j in i..n {
                let rj = centered.row(j);
                let rj = rj.as_slice().unwrap();
                let g: f64 = ri.iter().zip(rj).map(|(a, b)| a * b).sum();
                gram[(i, j)] = g;
                gram[(j, i)] = g;
            }
            gram[(i, i)] += ridge;
        }
        let chol = nalgebra::Cholesky::new(gram)
            .ok_or(SldaError::SingularAfterShrinkage { gamma })?;
        let mut w = Array2::zeros((k, d));
        for c in 0..k {
            let mu = class_means.row(c);
            let mu = mu.as_slice().unwrap();
            let v = nalgebra::DVector::from_fn(n, |i, _| {
                let ri = centered.row(i);
                let ri = ri.as_slice().unwrap();
                ri.iter().zip(mu).map(|(a, b)| a * b).sum()
            });
            let u = chol.solve(&v);
            for j in 0..d {
                let mut back = 0.0;
                for i in 0..n {
                    back += centered[[i, j]] * u[i];
                }
                w[[c, j]] = (mu[j] - back) / alpha;
            }
        }
        w
    };

    let mut biases = Vec::with_capacity(k);
    for c in 0..k {
        let mut dot = 0.0;
        for j in 0..d {
            dot += class_means[[c, j]] * weights[[c, j]];
        }
        biases.push(-0.5 * dot + priors[c].ln());
    }
    Ok(DualDiscriminant { weights, biases })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::data::make_split_plan_cfg;
    use approx::assert_abs_diff_eq;
    use ndarray::Array3;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn flatten_matches_channel_major_order() {
        // Two channels, two samples, values [[1,2],[3,4]] → [1, 3, 2, 4].
        let mut tensor = Array3::zeros((1, 2, 2));
        tensor[[0, 0, 0]] = 1.0;
        tensor[[0, 0, 1]] = 2.0;
        tensor[[0, 1, 0]] = 3.0;
        tensor[[0, 1, 1]] = 4.0;
        let e = EpochSet {
            tensor,
            labels: vec![ClassLabel::Touch],
            fs: 16.0,
            t0_offset: 0,
        };
        let f = flatten_window(&e, 0, 2).unwrap();
        assert_eq!(f.row(0).to_vec(), vec![1.0, 3.0, 2.0, 4.0]);
    }

    #[test]
    fn flatten_dimension_is_channels_times_len() {
        let e = EpochSet {
            tensor: Array3::zeros((3, 58, 80)),
            labels: vec![ClassLabel::Touch, ClassLabel::Grasp, ClassLabel::Rest],
            fs: 16.0,
            t0_offset: 32,
        };
        assert_eq!(flatten_window(&e, 0, 16).unwrap().ncols(), 928);
        assert!(matches!(
            flatten_window(&e, 79, 16),
            Err(SldaError::WindowOutOfBounds { .. })
        ));
    }

    /// Direct double-loop implementation of the shrinkage formula, kept
    /// independent of the Gram-identity route used by the library.
    fn shrinkage_direct(class_feats: &[Array2<f64>]) -> f64 {
        let n: usize = class_feats.iter().map(|f| f.nrows()).sum();
        let c = class_feats.len();
        let d = class_feats[0].ncols();
        let mut xc = Vec::new();
        for f in class_feats {
            let mean = f.mean_axis(Axis(0)).unwrap();
            for r in f.rows() {
                xc.push((0..d).map(|j| r[j] - mean[j]).collect::<Vec<f64>>());
            }
        }
        let m_df = (n - c) as f64;
        let mut s = vec![vec![0.0; d]; d];
        for x in &xc {
            for i in 0..d {
                for j in 0..d {
                    s[i][j] += x[i] * x[j] / m_df;
                }
            }
        }
        let nu = (0..d).map(|i| s[i][i]).sum::<f64>() / d as f64;
        let mut num = 0.0;
        for i in 0..d {
            for j in 0..d {
                let wbar = s[i][j] * m_df / n as f64;
                let var: f64 = xc
                    .iter()
                    .map(|x| (x[i] * x[j] - wbar) * (x[i] * x[j] - wbar))
                    .sum();
                num += n as f64 / (m_df * m_df * (n as f64 - 1.0)) * var;
            }
        }
        let mut den = 0.0;
        for i in 0..d {
            for j in 0..d {
                let target = if i == j { nu } else { 0.0 };
                den += (s[i][j] - target) * (s[i][j] - target);
            }
        }
        (num / den).clamp(0.0, 1.0)
    }

    #[test]
    fn shrinkage_matches_direct_formula() {
        let mut rng = crate::rng::stream_rng(21, 0);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let a = Array2::from_shape_fn((6, 10), |_| normal.sample(&mut rng));
        let b = Array2::from_shape_fn((7, 10), |_| 0.5 + normal.sample(&mut rng));
        let expected = shrinkage_direct(&[a.clone(), b.clone()]);
        let got = estimate_shrinkage(&[a.view(), b.view()]).unwrap();
        assert_abs_diff_eq!(got.gamma, expected, epsilon = 1e-10);
        assert!(!got.degenerate);
    }

    #[test]
    fn shrinkage_two_trials_total_is_full() {
        // One trial per class: centering leaves nothing → heaviest shrinkage.
        let mut rng = crate::rng::stream_rng(22, 0);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let a = Array2::from_shape_fn((1, 400), |_| normal.sample(&mut rng));
        let b = Array2::from_shape_fn((1, 400), |_| normal.sample(&mut rng));
        let got = estimate_shrinkage(&[a.view(), b.view()]).unwrap();
        assert_eq!(got.gamma, 1.0);
        assert!(got.degenerate);
    }

    #[test]
    fn shrinkage_high_dim_few_trials_is_heavy() {
        let mut rng = crate::rng::stream_rng(22, 1);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let a = Array2::from_shape_fn((3, 400), |_| normal.sample(&mut rng));
        let b = Array2::from_shape_fn((3, 400), |_| normal.sample(&mut rng));
        let got = estimate_shrinkage(&[a.view(), b.view()]).unwrap();
        assert!(got.gamma > 0.5, "gamma {}", got.gamma);
    }

    #[test]
    fn shrinkage_many_iid_trials_near_zero() {
        // Distinct per-feature scales keep the target ν·I away from the
        // truth, so plentiful data drives the weight to zero.
        let mut rng = crate::rng::stream_rng(23, 0);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let a = Array2::from_shape_fn((10_000, 5), |(_, j)| {
            (1.0 + j as f64) * normal.sample(&mut rng)
        });
        let got = estimate_shrinkage(&[a.view()]).unwrap();
        assert!(got.gamma < 0.05, "gamma {}", got.gamma);
    }

    #[test]
    fn shrinkage_degenerate_data_flags() {
        let a = Array2::from_elem((4, 6), 2.0);
        let got = estimate_shrinkage(&[a.view()]).unwrap();
        assert_eq!(got.gamma, 1.0);
        assert!(got.degenerate);
    }

    fn gaussian_two_class(
        n_per_class: usize,
        d: usize,
        sep: f64,
        seed: u64,
    ) -> (Array2<f64>, Vec<ClassLabel>) {
        let mut rng = crate::rng::stream_rng(seed, 0);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let mut feats = Array2::zeros((2 * n_per_class, d));
        let mut labels = Vec::new();
        for i in 0..2 * n_per_class {
            let class_a = i < n_per_class;
            for j in 0..d {
                let mean = if j == 0 {
                    if class_a {
                        -sep
                    } else {
                        sep
                    }
                } else {
                    0.0
                };
                feats[[i, j]] = mean + normal.sample(&mut rng);
            }
            labels.push(if class_a {
                ClassLabel::Touch
            } else {
                ClassLabel::Grasp
            });
        }
        (feats, labels)
    }

    #[test]
    fn well_separated_gaussians_classified() {
        let (feats, labels) = gaussian_two_class(200, 2, 5.0, 31);
        let model = fit_slda(feats.view(), &labels).unwrap();
        let (test, test_labels) = gaussian_two_class(100, 2, 5.0, 32);
        let mut correct = 0;
        for i in 0..test.nrows() {
            let (pred, _) = predict_slda(&model, test.row(i).as_slice().unwrap()).unwrap();
            if pred == test_labels[i] {
                correct += 1;
            }
        }
        assert!(correct as f64 / test.nrows() as f64 >= 0.98);
    }

    #[test]
    fn forced_gamma_limits() {
        let (feats, labels) = gaussian_two_class(30, 4, 1.0, 33);
        let m1 = fit_slda_with_gamma(feats.view(), &labels, Some(1.0)).unwrap();
        // γ = 1 → exactly ν·I.
        let nu = m1.shrunk_covariance[[0, 0]];
        for i in 0..4 {
            for j in 0..4 {
                let expected = if i == j { nu } else { 0.0 };
                assert_abs_diff_eq!(m1.shrunk_covariance[[i, j]], expected, epsilon = 1e-12);
            }
        }
        // γ = 0 → exactly the pooled covariance (off-diagonals nonzero).
        let m0 = fit_slda_with_gamma(feats.view(), &labels, Some(0.0)).unwrap();
        assert!(m0.shrunk_covariance[[0, 1]] != 0.0);
    }

    #[test]
    fn predict_at_class_mean_returns_that_class() {
        let (feats, labels) = gaussian_two_class(50, 3, 4.0, 34);
        let model = fit_slda(feats.view(), &labels).unwrap();
        for c in 0..2 {
            let mu = model.class_means.row(c).to_vec();
            let (pred, _) = predict_slda(&model, &mu).unwrap();
            assert_eq!(pred, model.classes[c]);
        }
    }

    #[test]
    fn translation_invariance_of_prediction() {
        let (feats, labels) = gaussian_two_class(50, 3, 2.0, 35);
        let model = fit_slda(feats.view(), &labels).unwrap();
        let shift = [10.0, -3.0, 7.0];
        let mut shifted_means = model.class_means.clone();
        for c in 0..2 {
            for j in 0..3 {
                shifted_means[[c, j]] += shift[j];
            }
        }
        let shifted = SldaModel::from_parts(
            model.classes.clone(),
            shifted_means,
            model.shrunk_covariance.clone(),
            model.gamma,
            model.priors.clone(),
            None,
        )
        .unwrap();
        let mut rng = crate::rng::stream_rng(36, 0);
        for _ in 0..50 {
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let xs: Vec<f64> = x.iter().zip(&shift).map(|(a, b)| a + b).collect();
            let (p1, _) = predict_slda(&model, &x).unwrap();
            let (p2, _) = predict_slda(&shifted, &xs).unwrap();
            assert_eq!(p1, p2);
        }
    }

    #[test]
    fn predict_matches_brute_force_discriminants() {
        let (feats, labels) = gaussian_two_class(20, 5, 1.5, 37);
        let model = fit_slda(feats.view(), &labels).unwrap();
        // Brute force: solve Σ w = μ by Gaussian elimination, evaluate δ_k.
        let d = 5;
        let mut rng = crate::rng::stream_rng(38, 0);
        for _ in 0..100 {
            let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let (pred, scores) = predict_slda(&model, &x).unwrap();
            let mut best = (0, f64::MIN);
            for c in 0..2 {
                let w = gauss_solve(&model.shrunk_covariance, model.class_means.row(c).to_vec());
                let xw: f64 = x.iter().zip(&w).map(|(a, b)| a * b).sum();
                let mw: f64 = model
                    .class_means
                    .row(c)
                    .iter()
                    .zip(&w)
                    .map(|(a, b)| a * b)
                    .sum();
                let delta = xw - 0.5 * mw + model.priors[c].ln();
                assert_abs_diff_eq!(delta, scores[c], epsilon = 1e-8);
                if delta > best.1 {
                    best = (c, delta);
                }
            }
            assert_eq!(model.classes[best.0], pred);
        }
    }

    fn gauss_solve(a: &Array2<f64>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        let mut m: Vec<Vec<f64>> = (0..n).map(|i| a.row(i).to_vec()).collect();
        for col in 0..n {
            let piv = (col..n)
                .max_by(|&x, &y| m[x][col].abs().partial_cmp(&m[y][col].abs()).unwrap())
                .unwrap();
            m.swap(col, piv);
            b.swap(col, piv);
            for r in col + 1..n {
                let f = m[r][col] / m[col][col];
                for c in col..n {
                    m[r][c] -= f * m[col][c];
                }
                b[r] -= f * b[col];
            }
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let mut acc = b[i];
            for j in i + 1..n {
                acc -= m[i][j] * x[j];
            }
            x[i] = acc / m[i][i];
        }
        x
    }

    #[test]
    fn dual_matches_primal_discriminants() {
        let mut rng = crate::rng::stream_rng(40, 0);
        let normal = Normal::new(0.0, 1.0).unwrap();
        for trial in 0..20 {
            let n_per = 8 + (trial % 5);
            let d = 12 + 3 * (trial % 4);
            let (feats, labels) = gaussian_two_class(n_per, d, 1.0, 41 + trial as u64);
            let model = fit_slda(feats.view(), &labels).unwrap();
            let (classes, rows) = class_partition(&labels).unwrap();
            let dual = fit_dual(&feats, &classes, &rows).unwrap();
            for _ in 0..10 {
                let x: Vec<f64> = (0..d).map(|_| normal.sample(&mut rng)).collect();
                let (_, primal_scores) = predict_slda(&model, &x).unwrap();
                for c in 0..2 {
                    let w = dual.weights.row(c);
                    let dot: f64 = w.iter().zip(&x).map(|(a, b)| a * b).sum();
                    let dual_score = dot + dual.biases[c];
                    let scale = primal_scores[c].abs().max(1.0);
                    assert!(
                        (dual_score - primal_scores[c]).abs() / scale < 1e-8,
                        "dual {dual_score} vs primal {}",
                        primal_scores[c]
                    );
                }
            }
        }
    }

    #[test]
    fn eigenvalues_interpolate_between_pooled_and_target() {
        let (feats, labels) = gaussian_two_class(12, 6, 1.0, 50);
        let model = fit_slda(feats.view(), &labels).unwrap();
        let d = 6;
        // Recompute pooled covariance eigenvalues and ν.
        let m0 = fit_slda_with_gamma(feats.view(), &labels, Some(0.0)).unwrap();
        let eig = |m: &Array2<f64>| -> Vec<f64> {
            let dm = nalgebra::DMatrix::from_fn(d, d, |i, j| m[[i, j]]);
            let mut v: Vec<f64> = dm.symmetric_eigen().eigenvalues.iter().copied().collect();
            v.sort_by(|a, b| a.partial_cmp(b).unwrap());
            v
        };
        let pooled = eig(&m0.shrunk_covariance);
        let shrunk = eig(&model.shrunk_covariance);
        let nu: f64 = (0..d).map(|i| m0.shrunk_covariance[[i, i]]).sum::<f64>() / d as f64;
        let lo = pooled[0].min(nu) - 1e-9;
        let hi = pooled[d - 1].max(nu) + 1e-9;
        for ev in shrunk {
            assert!(ev >= lo && ev <= hi, "eigenvalue {ev} outside [{lo}, {hi}]");
        }
    }

    #[test]
    fn scale_invariance_with_equal_priors() {
        let (feats, labels) = gaussian_two_class(40, 4, 1.5, 51);
        let m1 = fit_slda(feats.view(), &labels).unwrap();
        let scaled = feats.mapv(|v| 3.0 * v);
        let m2 = fit_slda_with_gamma(scaled.view(), &labels, Some(m1.gamma)).unwrap();
        let mut rng = crate::rng::stream_rng(52, 0);
        for _ in 0..50 {
            let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-4.0..4.0)).collect();
            let xs: Vec<f64> = x.iter().map(|v| 3.0 * v).collect();
            let (p1, _) = predict_slda(&m1, &x).unwrap();
            let (p2, _) = predict_slda(&m2, &xs).unwrap();
            assert_eq!(p1, p2);
        }
    }

    /// Discriminative signal confined to samples [32, 48); `sep` sets its
    /// strength relative to unit noise.
    pub(crate) fn windowed_epochs(seed: u64, sep: f64) -> EpochSet {
        let mut rng = crate::rng::stream_rng(seed, 0);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let n_per = 30;
        let n_ch = 6;
        let mut tensor = Array3::zeros((3 * n_per, n_ch, 80));
        let mut labels = Vec::new();
        let class_of = |i: usize| match i / n_per {
            0 => ClassLabel::Touch,
            1 => ClassLabel::Grasp,
            _ => ClassLabel::Rest,
        };
        for i in 0..3 * n_per {
            let label = class_of(i);
            labels.push(label);
            for c in 0..n_ch {
                for s in 0..80 {
                    let mut v = normal.sample(&mut rng);
                    if (32..48).contains(&s) {
                        v += match label {
                            ClassLabel::Touch => sep,
                            ClassLabel::Grasp => -sep,
                            _ => 0.0,
                        } * ((c + 1) as f64 / n_ch as f64);
                    }
                    tensor[[i, c, s]] = v;
                }
            }
        }
        EpochSet {
            tensor,
            labels,
            fs: 16.0,
            t0_offset: 32,
        }
    }

    #[test]
    fn window_accounting() {
        assert_eq!(window_starts(80, 16, 2).len(), 33);
        assert_eq!(window_starts(80, 16, 2).last(), Some(&64));
        assert_eq!(window_starts(80, 10, 2).len(), 36);
        assert_eq!(window_starts(80, 13, 2).len(), 34);
        assert_eq!(window_starts(10, 16, 2).len(), 0);
    }

    #[test]
    fn selection_finds_informative_window() {
        let e = windowed_epochs(60, 0.45);
        let plan = make_split_plan_cfg(&e.labels, 60, 2, 0.25).unwrap();
        let sel = sliding_window_select(&e, 1.0, 2, &plan).unwrap();
        assert_eq!(sel.scan.starts.len(), 33);
        let best = sel.scan.best_start();
        assert!(
            (26..=38).contains(&best),
            "best start {best}, curve {:?}",
            sel.scan.mean_accuracy
        );
        assert_eq!(sel.model.window.unwrap().len, 16);
        assert_eq!(sel.model.window.unwrap().start, best);
    }

    #[test]
    fn step_two_at_16_hz_is_125_ms() {
        let e = windowed_epochs(61, 1.0);
        assert_abs_diff_eq!(2.0 / e.fs, 0.125);
    }
}
