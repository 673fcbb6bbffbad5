//! Network building blocks with explicit forward/backward passes.
//!
//! Shapes follow the epoch layout: a batch is `(B, C, T)` (trials ×
//! channels × samples). The temporal convolution is valid along T with one
//! kernel bank shared across channels; the spatial convolution is valid
//! along the channel axis with kernel size equal to the channel count, so
//! it collapses that axis to one. Convolutions run as matrix products.

use ndarray::{Array1, Array2, Array3, Array4, ArrayView2, ArrayView3, Axis};

/// Temporal convolution: `x (B, C, T)`, `w (D, K)`, `bias (D)` →
/// `(B, D, C, L)` with `L = T − K + 1`.
pub fn conv_temporal_forward(
    x: &ArrayView3<f64>,
    w: &ArrayView2<f64>,
    bias: &Array1<f64>,
) -> Array4<f64> {
    let (b, c, t) = x.dim();
    let (d, k) = w.dim();
    let l = t - k + 1;
    let cols = im2col_time(x, k, l);
    let out_mat = cols.dot(&w.t()); // (B·C·L, D)
    let mut out = Array4::zeros((b, d, c, l));
    for bi in 0..b {
        for ci in 0..c {
            let base = (bi * c + ci) * l;
            for di in 0..d {
                let bias_d = bias[di];
                for ti in 0..l {
                    out[[bi, di, ci, ti]] = out_mat[[base + ti, di]] + bias_d;
                }
            }
        }
    }
    out
}

/// Gradients of [`conv_temporal_forward`] given upstream `dout (B, D, C, L)`.
pub fn conv_temporal_backward(
    x: &ArrayView3<f64>,
    w: &ArrayView2<f64>,
    dout: &Array4<f64>,
) -> (Array3<f64>, Array2<f64>, Array1<f64>) {
    let (b, c, t) = x.dim();
    let (d, k) = w.dim();
    let l = t - k + 1;
    let cols = im2col_time(x, k, l);

    let mut dout_mat = Array2::zeros((b * c * l, d));
    let mut db = Array1::zeros(d);
    for bi in 0..b {
        for di in 0..d {
            for ci in 0..c {
                let base = (bi * c + ci) * l;
                for ti in 0..l {
                    let g = dout[[bi, di, ci, ti]];
                    dout_mat[[base + ti, di]] = g;
                    db[di] += g;
                }
            }
        }
    }
    let dw = dout_mat.t().dot(&cols); // (D, K)
    let dcols = dout_mat.dot(w); // (B·C·L, K)
    let mut dx = Array3::zeros((b, c, t));
    for bi in 0..b {
        for ci in 0..c {
            let base = (bi * c + ci) * l;
            for ti in 0..l {
                let row = dcols.row(base + ti);
                let row = row.as_slice().unwrap();
                for (ki, &g) in row.iter().enumerate() {
                    dx[[bi, ci, ti + ki]] += g;
                }
            }
        }
    }
    (dx, dw, db)
}

fn im2col_time(x: &ArrayView3<f64>, k: usize, l: usize) -> Array2<f64> {
    let (b, c, _) = x.dim();
    let mut cols = Array2::zeros((b * c * l, k));
    let cols_slice = cols.as_slice_mut().unwrap();
    for bi in 0..b {
        for ci in 0..c {
            let row = x.index_axis(Axis(0), bi);
            let row = row.index_axis(Axis(0), ci);
            let row = row.as_slice().unwrap();
            let base = (bi * c + ci) * l;
            for ti in 0..l {
                cols_slice[(base + ti) * k..(base + ti + 1) * k]
                    .copy_from_slice(&row[ti..ti + k]);
            }
        }
    }
    cols
}

/// Spatial convolution over the channel axis: `x (B, D, C, L)`,
/// `w (E, D, C)` (kernel spans all C channels), `bias (E)` → `(B, E, L)`.
pub fn conv_spatial_forward(
    x: &Array4<f64>,
    w: &Array3<f64>,
    bias: &Array1<f64>,
) -> Array3<f64> {
    let (b, d, c, l) = x.dim();
    let e = w.dim().0;
    let w2 = w.to_shape((e, d * c)).unwrap();
    let mut out = Array3::zeros((b, e, l));
    for bi in 0..b {
        let xb = x.index_axis(Axis(0), bi);
        let xb = xb.to_shape((d * c, l)).unwrap();
        let ob = w2.dot(&xb); // (E, L)
        let mut dst = out.index_axis_mut(Axis(0), bi);
        dst.assign(&ob);
        for ei in 0..e {
            let bias_e = bias[ei];
            let mut row = dst.index_axis_mut(Axis(0), ei);
            row.mapv_inplace(|v| v + bias_e);
        }
    }
    out
}

/// Gradients of [`conv_spatial_forward`] given `dout (B, E, L)`.
pub fn conv_spatial_backward(
    x: &Array4<f64>,
    w: &Array3<f64>,
    dout: &Array3<f64>,
) -> (Array4<f64>, Array3<f64>, Array1<f64>) {
    let (b, d, c, l) = x.dim();
    let e = w.dim().0;
    let w2 = w.to_shape((e, d * c)).unwrap();
    let mut dw2 = Array2::<f64>::zeros((e, d * c));
    let mut db = Array1::zeros(e);
    let mut dx = Array4::zeros((b, d, c, l));
    for bi in 0..b {
        let xb = x.index_axis(Axis(0), bi);
        let xb = xb.to_shape((d * c, l)).unwrap();
        let gb = dout.index_axis(Axis(0), bi);
        dw2 = dw2 + gb.dot(&xb.t());
        for ei in 0..e {
            db[ei] += gb.row(ei).sum();
        }
        let dxb = w2.t().dot(&gb); // (D·C, L)
        dx.index_axis_mut(Axis(0), bi)
            .assign(&dxb.to_shape((d, c, l)).unwrap());
    }
    (dx, dw2.to_shape((e, d, c)).unwrap().to_owned(), db)
}

/// Saved statistics from a train-mode batch-norm pass, needed by the
/// backward pass.
#[derive(Debug, Clone)]
pub struct BnCache {
    pub mean: Array1<f64>,
    pub inv_std: Array1<f64>,
    /// Elements per feature in the normalized axes.
    pub count: usize,
}

/// Batch normalization over the feature axis (axis 1); all other axes are
/// reduced. `x` is any of the activation layouts flattened to
/// `(features, elements)` by the caller. Returns the normalized output
/// before scale/shift plus the cache; the caller applies γ/β.
pub fn bn_normalize_train(x2: &Array2<f64>, eps: f64) -> (Array2<f64>, BnCache) {
    let (d, m) = x2.dim();
    let mut mean = Array1::zeros(d);
    let mut inv_std = Array1::zeros(d);
    let mut out = Array2::zeros((d, m));
    for f in 0..d {
        let row = x2.row(f);
        let row = row.as_slice().unwrap();
        let mu = row.iter().sum::<f64>() / m as f64;
        let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / m as f64;
        let is = 1.0 / (var + eps).sqrt();
        mean[f] = mu;
        inv_std[f] = is;
        let dst = &mut out.as_slice_mut().unwrap()[f * m..(f + 1) * m];
        for (o, &v) in dst.iter_mut().zip(row) {
            *o = (v - mu) * is;
        }
    }
    (
        out,
        BnCache {
            mean,
            inv_std,
            count: m,
        },
    )
}

/// Gradient of the train-mode normalization: given `dxhat` (upstream
/// gradient times γ) and the cached statistics, return `dx`.
pub fn bn_normalize_backward(
    xhat: &Array2<f64>,
    dxhat: &Array2<f64>,
    cache: &BnCache,
) -> Array2<f64> {
    let (d, m) = xhat.dim();
    let mf = m as f64;
    let mut dx = Array2::zeros((d, m));
    for f in 0..d {
        let xh = xhat.row(f);
        let xh = xh.as_slice().unwrap();
        let g = dxhat.row(f);
        let g = g.as_slice().unwrap();
        let sum_g: f64 = g.iter().sum();
        let sum_gx: f64 = g.iter().zip(xh).map(|(a, b)| a * b).sum();
        let is = cache.inv_std[f];
        let dst = &mut dx.as_slice_mut().unwrap()[f * m..(f + 1) * m];
        for i in 0..m {
            dst[i] = is / mf * (mf * g[i] - sum_g - xh[i] * sum_gx);
        }
    }
    dx
}

/// ELU activation, in place; returns the pre-activation copy needed by the
/// backward pass.
pub fn elu_forward(x: &mut [f64], alpha: f64) {
    for v in x.iter_mut() {
        if *v < 0.0 {
            *v = alpha * (v.exp() - 1.0);
        }
    }
}

/// ELU derivative from the *output* values: 1 where y > 0, y + α where
/// y ≤ 0 (since y = α(eˣ − 1) there).
pub fn elu_backward(y: &[f64], dout: &mut [f64], alpha: f64) {
    for (g, &yv) in dout.iter_mut().zip(y) {
        if yv <= 0.0 {
            *g *= yv + alpha;
        }
    }
}

/// Non-overlapping average pooling along the last axis: `(B, D, L)` →
/// `(B, D, floor(L/k))`; trailing samples beyond `P·k` are dropped.
pub fn avg_pool_forward(x: &Array3<f64>, k: usize) -> Array3<f64> {
    let (b, d, l) = x.dim();
    let p = l / k;
    let mut out = Array3::zeros((b, d, p));
    for bi in 0..b {
        for di in 0..d {
            for pi in 0..p {
                let mut acc = 0.0;
                for j in 0..k {
                    acc += x[[bi, di, pi * k + j]];
                }
                out[[bi, di, pi]] = acc / k as f64;
            }
        }
    }
    out
}

pub fn avg_pool_backward(dout: &Array3<f64>, k: usize, l_in: usize) -> Array3<f64> {
    let (b, d, p) = dout.dim();
    let mut dx = Array3::zeros((b, d, l_in));
    for bi in 0..b {
        for di in 0..d {
            for pi in 0..p {
                let g = dout[[bi, di, pi]] / k as f64;
                for j in 0..k {
                    dx[[bi, di, pi * k + j]] = g;
                }
            }
        }
    }
    dx
}

/// Fully connected layer: `x (B, in)`, `w (out, in)`, `bias (out)` →
/// `(B, out)`.
pub fn dense_forward(x: &Array2<f64>, w: &Array2<f64>, bias: &Array1<f64>) -> Array2<f64> {
    let mut out = x.dot(&w.t());
    for mut row in out.rows_mut() {
        row += bias;
    }
    out
}

pub fn dense_backward(
    x: &Array2<f64>,
    w: &Array2<f64>,
    dout: &Array2<f64>,
) -> (Array2<f64>, Array2<f64>, Array1<f64>) {
    let dx = dout.dot(w);
    let dw = dout.t().dot(x);
    let db = dout.sum_axis(Axis(0));
    (dx, dw, db)
}

/// Row-wise stable softmax.
pub fn softmax(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

/// Mean categorical cross-entropy of `probs (B, K)` against target class
/// indices.
pub fn cross_entropy(probs: &Array2<f64>, targets: &[usize]) -> f64 {
    let b = probs.nrows() as f64;
    -targets
        .iter()
        .enumerate()
        .map(|(i, &t)| probs[[i, t]].max(1e-300).ln())
        .sum::<f64>()
        / b
}

/// Combined softmax + cross-entropy gradient with respect to the logits:
/// `(probs − one_hot) / B`.
pub fn softmax_xent_backward(probs: &Array2<f64>, targets: &[usize]) -> Array2<f64> {
    let b = probs.nrows() as f64;
    let mut d = probs.clone();
    for (i, &t) in targets.iter().enumerate() {
        d[[i, t]] -= 1.0;
    }
    d.mapv_inplace(|v| v / b);
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr1, arr2};

    #[test]
    fn temporal_conv_shape_and_values() {
        // One sample, one channel, T=4, K=2, D=1: plain valid correlation.
        let x = Array3::from_shape_vec((1, 1, 4), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let w = arr2(&[[1.0, -1.0]]);
        let b = arr1(&[0.5]);
        let y = conv_temporal_forward(&x.view(), &w.view(), &b);
        assert_eq!(y.dim(), (1, 1, 1, 3));
        assert_eq!(y[[0, 0, 0, 0]], 1.0 - 2.0 + 0.5);
        assert_eq!(y[[0, 0, 0, 2]], 3.0 - 4.0 + 0.5);
    }

    #[test]
    fn spatial_conv_collapses_channels() {
        let x = Array4::from_elem((2, 3, 5, 7), 1.0);
        let w = Array3::from_elem((4, 3, 5), 0.1);
        let b = Array1::zeros(4);
        let y = conv_spatial_forward(&x, &w, &b);
        assert_eq!(y.dim(), (2, 4, 7));
        for v in y.iter() {
            assert!((v - 1.5).abs() < 1e-12); // 3·5·0.1
        }
    }

    #[test]
    fn pool_drops_tail() {
        let x = Array3::from_shape_fn((1, 1, 7), |(_, _, i)| i as f64);
        let y = avg_pool_forward(&x, 3);
        assert_eq!(y.dim(), (1, 1, 2));
        assert_eq!(y[[0, 0, 0]], 1.0);
        assert_eq!(y[[0, 0, 1]], 4.0);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let logits = arr2(&[[1.0, 2.0, 3.0], [-5.0, 0.0, 5.0]]);
        let p = softmax(&logits);
        for row in p.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn uniform_prediction_loss_is_ln3() {
        let probs = Array2::from_elem((4, 3), 1.0 / 3.0);
        let loss = cross_entropy(&probs, &[0, 1, 2, 0]);
        assert!((loss - 3.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn bn_normalizes_batch() {
        let mut rng = crate::rng::stream_rng(2, 0);
        use rand::Rng;
        let x = Array2::from_shape_fn((5, 64), |_| rng.gen_range(-3.0..9.0));
        let (xhat, _) = bn_normalize_train(&x, 1e-5);
        for f in 0..5 {
            let row = xhat.row(f);
            let mean = row.sum() / 64.0;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 64.0;
            assert!(mean.abs() < 1e-5);
            assert!((var - 1.0).abs() < 1e-4);
        }
    }
}
