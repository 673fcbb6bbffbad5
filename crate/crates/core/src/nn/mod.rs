//! Minimal convolutional network engine with reverse-mode gradients, sized
//! for the 7-layer epoch classifier: temporal convolution → batch norm →
//! ELU → spatial convolution (collapses the channel axis) → batch norm →
//! ELU → average pooling → two dense layers → softmax.

pub mod layers;
mod grid;
mod train;

pub use grid::{grid_search, GridOutcome, GridRanges, ParticipantGrid};
pub use train::{train_cnn, EpochStats, TrainHistory};

use crate::data::ClassLabel;
use layers::*;
use ndarray::{Array1, Array2, Array3, Array4, ArrayView2, Axis};
use rand::Rng;
use thiserror::Error;

pub const ELU_ALPHA: f64 = 1.0;
pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Error, PartialEq)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("loss became non-finite")]
    NonFiniteLoss,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("label {0} not in the model's class set")]
    UnknownLabel(ClassLabel),
    #[error("operation requires train mode")]
    WrongMode,
}

/// Architecture hyperparameters. Defaults are the selected configuration:
/// temporal kernel 30, spatial kernel = channel count (58), depth 40,
/// pool 15, 80 hidden units, 3 classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CnnSpec {
    pub temporal_kernel: usize,
    pub spatial_kernel: usize,
    pub depth: usize,
    pub pool_kernel: usize,
    pub fc1_units: usize,
    pub n_classes: usize,
}

impl Default for CnnSpec {
    fn default() -> Self {
        CnnSpec {
            temporal_kernel: 30,
            spatial_kernel: 58,
            depth: 40,
            pool_kernel: 15,
            fc1_units: 80,
            n_classes: 3,
        }
    }
}

/// Derived layer sizes for a given input shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shapes {
    pub conv_len: usize,
    pub pooled: usize,
    pub flat: usize,
}

impl CnnSpec {
    /// Check the spec against an input shape and derive the layer sizes.
    /// The spatial kernel must equal the channel count (that is what
    /// collapses the channel axis to one under valid convolution).
    pub fn shapes(&self, n_channels: usize, n_samples: usize) -> Result<Shapes, NnError> {
        if self.spatial_kernel != n_channels {
            return Err(NnError::ShapeMismatch(format!(
                "spatial kernel {} must equal channel count {n_channels}",
                self.spatial_kernel
            )));
        }
        if self.temporal_kernel == 0 || self.temporal_kernel > n_samples {
            return Err(NnError::ShapeMismatch(format!(
                "temporal kernel {} does not fit {n_samples} samples",
                self.temporal_kernel
            )));
        }
        let conv_len = n_samples - self.temporal_kernel + 1;
        let pooled = conv_len / self.pool_kernel;
        if pooled == 0 || self.depth == 0 || self.fc1_units == 0 || self.n_classes == 0 {
            return Err(NnError::ShapeMismatch(
                "a layer output would be empty".into(),
            ));
        }
        Ok(Shapes {
            conv_len,
            pooled,
            flat: self.depth * pooled,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Inference,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
    pub momentum: f64,
    pub eps: f64,
}

impl BatchNorm {
    fn new(features: usize) -> BatchNorm {
        BatchNorm {
            gamma: Array1::ones(features),
            beta: Array1::zeros(features),
            running_mean: Array1::zeros(features),
            running_var: Array1::ones(features),
            momentum: BN_MOMENTUM,
            eps: BN_EPS,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CnnModel {
    pub spec: CnnSpec,
    pub classes: Vec<ClassLabel>,
    pub n_channels: usize,
    pub n_samples: usize,
    pub conv1_w: Array2<f64>,
    pub conv1_b: Array1<f64>,
    pub bn1: BatchNorm,
    pub conv2_w: Array3<f64>,
    pub conv2_b: Array1<f64>,
    pub bn2: BatchNorm,
    pub fc1_w: Array2<f64>,
    pub fc1_b: Array1<f64>,
    pub fc2_w: Array2<f64>,
    pub fc2_b: Array1<f64>,
    pub mode: Mode,
    pub seed: u64,
}

impl CnnModel {
    /// Fresh model with fan-in-scaled uniform weights drawn from the given
    /// stream; batch-norm scale 1, shift 0.
    pub fn init(
        spec: CnnSpec,
        classes: Vec<ClassLabel>,
        n_channels: usize,
        n_samples: usize,
        seed: u64,
        rng: &mut impl Rng,
    ) -> Result<CnnModel, NnError> {
        let shapes = spec.shapes(n_channels, n_samples)?;
        if classes.len() != spec.n_classes {
            return Err(NnError::InvalidConfig(format!(
                "{} classes given for an {}-way head",
                classes.len(),
                spec.n_classes
            )));
        }
        let mut uniform = |fan_in: usize, shape: &[usize]| -> ndarray::ArrayD<f64> {
            let bound = 1.0 / (fan_in as f64).sqrt();
            ndarray::ArrayD::from_shape_fn(shape, |_| rng.gen_range(-bound..bound))
        };
        let conv1_w = uniform(spec.temporal_kernel, &[spec.depth, spec.temporal_kernel]);
        let conv1_b = uniform(spec.temporal_kernel, &[spec.depth]);
        let conv2_fan = spec.depth * spec.spatial_kernel;
        let conv2_w = uniform(conv2_fan, &[spec.depth, spec.depth, spec.spatial_kernel]);
        let conv2_b = uniform(conv2_fan, &[spec.depth]);
        let fc1_w = uniform(shapes.flat, &[spec.fc1_units, shapes.flat]);
        let fc1_b = uniform(shapes.flat, &[spec.fc1_units]);
        let fc2_w = uniform(spec.fc1_units, &[spec.n_classes, spec.fc1_units]);
        let fc2_b = uniform(spec.fc1_units, &[spec.n_classes]);
        Ok(CnnModel {
            spec,
            classes,
            n_channels,
            n_samples,
            conv1_w: conv1_w.into_dimensionality().unwrap(),
            conv1_b: conv1_b.into_dimensionality().unwrap(),
            bn1: BatchNorm::new(spec.depth),
            conv2_w: conv2_w.into_dimensionality().unwrap(),
            conv2_b: conv2_b.into_dimensionality().unwrap(),
            bn2: BatchNorm::new(spec.depth),
            fc1_w: fc1_w.into_dimensionality().unwrap(),
            fc1_b: fc1_b.into_dimensionality().unwrap(),
            fc2_w: fc2_w.into_dimensionality().unwrap(),
            fc2_b: fc2_b.into_dimensionality().unwrap(),
            mode: Mode::Train,
            seed,
        })
    }

    pub fn all_parameters_finite(&self) -> bool {
        self.conv1_w.iter().all(|v| v.is_finite())
            && self.conv1_b.iter().all(|v| v.is_finite())
            && self.bn1.gamma.iter().all(|v| v.is_finite())
            && self.bn1.beta.iter().all(|v| v.is_finite())
            && self.conv2_w.iter().all(|v| v.is_finite())
            && self.conv2_b.iter().all(|v| v.is_finite())
            && self.bn2.gamma.iter().all(|v| v.is_finite())
            && self.bn2.beta.iter().all(|v| v.is_finite())
            && self.fc1_w.iter().all(|v| v.is_finite())
            && self.fc1_b.iter().all(|v| v.is_finite())
            && self.fc2_w.iter().all(|v| v.is_finite())
            && self.fc2_b.iter().all(|v| v.is_finite())
    }
}

/// Per-parameter gradients, same shapes as the model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub conv1_w: Array2<f64>,
    pub conv1_b: Array1<f64>,
    pub bn1_gamma: Array1<f64>,
    pub bn1_beta: Array1<f64>,
    pub conv2_w: Array3<f64>,
    pub conv2_b: Array1<f64>,
    pub bn2_gamma: Array1<f64>,
    pub bn2_beta: Array1<f64>,
    pub fc1_w: Array2<f64>,
    pub fc1_b: Array1<f64>,
    pub fc2_w: Array2<f64>,
    pub fc2_b: Array1<f64>,
}

impl Gradients {
    pub fn zeros_like(m: &CnnModel) -> Gradients {
        Gradients {
            conv1_w: Array2::zeros(m.conv1_w.raw_dim()),
            conv1_b: Array1::zeros(m.conv1_b.raw_dim()),
            bn1_gamma: Array1::zeros(m.bn1.gamma.raw_dim()),
            bn1_beta: Array1::zeros(m.bn1.beta.raw_dim()),
            conv2_w: Array3::zeros(m.conv2_w.raw_dim()),
            conv2_b: Array1::zeros(m.conv2_b.raw_dim()),
            bn2_gamma: Array1::zeros(m.bn2.gamma.raw_dim()),
            bn2_beta: Array1::zeros(m.bn2.beta.raw_dim()),
            fc1_w: Array2::zeros(m.fc1_w.raw_dim()),
            fc1_b: Array1::zeros(m.fc1_b.raw_dim()),
            fc2_w: Array2::zeros(m.fc2_w.raw_dim()),
            fc2_b: Array1::zeros(m.fc2_b.raw_dim()),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.conv1_w.iter().all(|v| v.is_finite())
            && self.conv2_w.iter().all(|v| v.is_finite())
            && self.fc1_w.iter().all(|v| v.is_finite())
            && self.fc2_w.iter().all(|v| v.is_finite())
    }
}

/// Feature-major view of a 4-D activation: `(B, D, C, L)` → `(D, B·C·L)`.
fn feat_major4(x: &Array4<f64>) -> Array2<f64> {
    let (b, d, c, l) = x.dim();
    let mut out = Array2::zeros((d, b * c * l));
    for bi in 0..b {
        for di in 0..d {
            for ci in 0..c {
                for ti in 0..l {
                    out[[di, (bi * c + ci) * l + ti]] = x[[bi, di, ci, ti]];
                }
            }
        }
    }
    out
}

fn unfeat_major4(x2: &Array2<f64>, dims: (usize, usize, usize, usize)) -> Array4<f64> {
    let (b, d, c, l) = dims;
    let mut out = Array4::zeros(dims);
    for bi in 0..b {
        for di in 0..d {
            for ci in 0..c {
                for ti in 0..l {
                    out[[bi, di, ci, ti]] = x2[[di, (bi * c + ci) * l + ti]];
                }
            }
        }
    }
    out
}

fn feat_major3(x: &Array3<f64>) -> Array2<f64> {
    let (b, d, l) = x.dim();
    let mut out = Array2::zeros((d, b * l));
    for bi in 0..b {
        for di in 0..d {
            for ti in 0..l {
                out[[di, bi * l + ti]] = x[[bi, di, ti]];
            }
        }
    }
    out
}

fn unfeat_major3(x2: &Array2<f64>, dims: (usize, usize, usize)) -> Array3<f64> {
    let (b, d, l) = dims;
    let mut out = Array3::zeros(dims);
    for bi in 0..b {
        for di in 0..d {
            for ti in 0..l {
                out[[bi, di, ti]] = x2[[di, bi * l + ti]];
            }
        }
    }
    out
}

/// Scale/shift in feature-major layout; `x2` is consumed in place.
fn bn_scale_shift(x2: &mut Array2<f64>, bn: &BatchNorm) {
    for (f, mut row) in x2.rows_mut().into_iter().enumerate() {
        let g = bn.gamma[f];
        let b = bn.beta[f];
        row.mapv_inplace(|v| g * v + b);
    }
}

/// Inference-mode normalization with running statistics.
fn bn_infer(x2: &mut Array2<f64>, bn: &BatchNorm) {
    for (f, mut row) in x2.rows_mut().into_iter().enumerate() {
        let mu = bn.running_mean[f];
        let inv = 1.0 / (bn.running_var[f] + bn.eps).sqrt();
        let g = bn.gamma[f];
        let b = bn.beta[f];
        row.mapv_inplace(|v| g * ((v - mu) * inv) + b);
    }
}

struct ForwardCache {
    xhat1: Array2<f64>,
    bn1_stats: BnCache,
    h1: Array4<f64>,
    xhat2: Array2<f64>,
    bn2_stats: BnCache,
    h2: Array3<f64>,
    flat: Array2<f64>,
    fc1_out: Array2<f64>,
    probs: Array2<f64>,
}

/// Batch forward pass. In train mode the batch-norm layers use (and
/// update) batch statistics; in inference mode they use the frozen running
/// statistics and nothing is updated.
pub(crate) fn forward_batch(
    m: &mut CnnModel,
    x: &Array3<f64>,
    with_cache: bool,
) -> Result<(Array2<f64>, Option<ForwardCache>), NnError> {
    let (b, c, t) = x.dim();
    if c != m.n_channels || t != m.n_samples {
        return Err(NnError::ShapeMismatch(format!(
            "input {c}×{t}, model expects {}×{}",
            m.n_channels, m.n_samples
        )));
    }
    let shapes = m.spec.shapes(c, t)?;
    let train = m.mode == Mode::Train;

    let a1 = conv_temporal_forward(&x.view(), &m.conv1_w.view(), &m.conv1_b);
    let mut x2 = feat_major4(&a1);
    let (xhat1, bn1_stats) = if train {
        let (xhat, stats) = bn_normalize_train(&x2, m.bn1.eps);
        update_running(&mut m.bn1, &stats);
        x2 = xhat.clone();
        bn_scale_shift(&mut x2, &m.bn1);
        (xhat, stats)
    } else {
        bn_infer(&mut x2, &m.bn1);
        (
            Array2::zeros((0, 0)),
            BnCache {
                mean: Array1::zeros(0),
                inv_std: Array1::zeros(0),
                count: 0,
            },
        )
    };
    elu_forward(x2.as_slice_mut().unwrap(), ELU_ALPHA);
    let h1 = unfeat_major4(&x2, a1.dim());

    let a2 = conv_spatial_forward(&h1, &m.conv2_w, &m.conv2_b);
    let mut y2 = feat_major3(&a2);
    let (xhat2, bn2_stats) = if train {
        let (xhat, stats) = bn_normalize_train(&y2, m.bn2.eps);
        update_running(&mut m.bn2, &stats);
        y2 = xhat.clone();
        bn_scale_shift(&mut y2, &m.bn2);
        (xhat, stats)
    } else {
        bn_infer(&mut y2, &m.bn2);
        (
            Array2::zeros((0, 0)),
            BnCache {
                mean: Array1::zeros(0),
                inv_std: Array1::zeros(0),
                count: 0,
            },
        )
    };
    elu_forward(y2.as_slice_mut().unwrap(), ELU_ALPHA);
    let h2 = unfeat_major3(&y2, a2.dim());

    let pooled = avg_pool_forward(&h2, m.spec.pool_kernel);
    let flat = pooled
        .to_shape((b, shapes.flat))
        .map_err(|e| NnError::ShapeMismatch(e.to_string()))?
        .to_owned();

    let mut fc1_out = dense_forward(&flat, &m.fc1_w, &m.fc1_b);
    elu_forward(fc1_out.as_slice_mut().unwrap(), ELU_ALPHA);
    let logits = dense_forward(&fc1_out, &m.fc2_w, &m.fc2_b);
    let probs = softmax(&logits);

    let cache = with_cache.then(|| ForwardCache {
        xhat1,
        bn1_stats,
        h1,
        xhat2,
        bn2_stats,
        h2,
        flat,
        fc1_out,
        probs: probs.clone(),
    });
    Ok((probs, cache))
}

fn update_running(bn: &mut BatchNorm, stats: &BnCache) {
    let m = stats.count as f64;
    let bessel = if stats.count > 1 { m / (m - 1.0) } else { 1.0 };
    for f in 0..bn.gamma.len() {
        let var = 1.0 / (stats.inv_std[f] * stats.inv_std[f]) - bn.eps;
        bn.running_mean[f] =
            (1.0 - bn.momentum) * bn.running_mean[f] + bn.momentum * stats.mean[f];
        bn.running_var[f] =
            (1.0 - bn.momentum) * bn.running_var[f] + bn.momentum * (var * bessel).max(bn.eps);
    }
}

/// Class probabilities for one epoch (channels × samples), using the
/// model's frozen running statistics.
pub fn forward(m: &CnnModel, x: ArrayView2<f64>) -> Result<Array1<f64>, NnError> {
    let (c, t) = x.dim();
    let mut batch = Array3::zeros((1, c, t));
    batch.index_axis_mut(Axis(0), 0).assign(&x);
    Ok(predict_batch(m, &batch)?.row(0).to_owned())
}

/// Inference-mode class probabilities for a batch of epochs `(B, C, T)`.
pub fn predict_batch(m: &CnnModel, x: &Array3<f64>) -> Result<Array2<f64>, NnError> {
    let mut frozen = m.clone();
    frozen.mode = Mode::Inference;
    let (probs, _) = forward_batch(&mut frozen, x, false)?;
    Ok(probs)
}

/// Predicted class for one epoch: arg max probability, ties to the lowest
/// class index.
pub fn predict(m: &CnnModel, x: ArrayView2<f64>) -> Result<ClassLabel, NnError> {
    let probs = forward(m, x)?;
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate().skip(1) {
        if p > probs[best] {
            best = i;
        }
    }
    Ok(m.classes[best])
}

/// Mean cross-entropy loss and gradients for every parameter. The model
/// must be in train mode; batch statistics are updated as a side effect.
pub fn loss_and_gradients(
    m: &mut CnnModel,
    x: &Array3<f64>,
    labels: &[ClassLabel],
) -> Result<(f64, Gradients), NnError> {
    if m.mode != Mode::Train {
        return Err(NnError::WrongMode);
    }
    if x.dim().0 == 0 || x.dim().0 != labels.len() {
        return Err(NnError::ShapeMismatch(format!(
            "batch of {} inputs with {} labels",
            x.dim().0,
            labels.len()
        )));
    }
    let targets: Result<Vec<usize>, NnError> = labels
        .iter()
        .map(|l| {
            m.classes
                .iter()
                .position(|c| c == l)
                .ok_or(NnError::UnknownLabel(*l))
        })
        .collect();
    let targets = targets?;

    let (probs, cache) = forward_batch(m, x, true)?;
    let cache = cache.expect("cache requested");
    let loss = cross_entropy(&probs, &targets);
    if !loss.is_finite() {
        return Err(NnError::NonFiniteLoss);
    }

    let (b, _, _) = x.dim();
    let shapes = m.spec.shapes(m.n_channels, m.n_samples)?;

    let dlogits = softmax_xent_backward(&cache.probs, &targets);
    let (mut dfc1_out, fc2_dw, fc2_db) = dense_backward(&cache.fc1_out, &m.fc2_w, &dlogits);
    elu_backward(
        cache.fc1_out.as_slice().unwrap(),
        dfc1_out.as_slice_mut().unwrap(),
        ELU_ALPHA,
    );
    let (dflat, fc1_dw, fc1_db) = dense_backward(&cache.flat, &m.fc1_w, &dfc1_out);
    let dpooled = dflat
        .to_shape((b, m.spec.depth, shapes.pooled))
        .map_err(|e| NnError::ShapeMismatch(e.to_string()))?
        .to_owned();
    let mut dh2 = avg_pool_backward(&dpooled, m.spec.pool_kernel, shapes.conv_len);

    elu_backward(
        cache.h2.as_slice().unwrap(),
        dh2.as_slice_mut().unwrap(),
        ELU_ALPHA,
    );
    let dout2 = feat_major3(&dh2);
    let (bn2_dgamma, bn2_dbeta, dxhat2) = bn_param_grads(&cache.xhat2, &dout2, &m.bn2);
    let da2_fm = bn_normalize_backward(&cache.xhat2, &dxhat2, &cache.bn2_stats);
    let da2 = unfeat_major3(&da2_fm, cache.h2.dim());
    let (mut dh1, conv2_dw, conv2_db) = conv_spatial_backward(&cache.h1, &m.conv2_w, &da2);

    elu_backward(
        cache.h1.as_slice().unwrap(),
        dh1.as_slice_mut().unwrap(),
        ELU_ALPHA,
    );
    let dout1 = feat_major4(&dh1);
    let (bn1_dgamma, bn1_dbeta, dxhat1) = bn_param_grads(&cache.xhat1, &dout1, &m.bn1);
    let da1_fm = bn_normalize_backward(&cache.xhat1, &dxhat1, &cache.bn1_stats);
    let da1 = unfeat_major4(&da1_fm, cache.h1.dim());
    let (_, conv1_dw, conv1_db) = conv_temporal_backward(&x.view(), &m.conv1_w.view(), &da1);

    Ok((
        loss,
        Gradients {
            conv1_w: conv1_dw,
            conv1_b: conv1_db,
            bn1_gamma: bn1_dgamma,
            bn1_beta: bn1_dbeta,
            conv2_w: conv2_dw,
            conv2_b: conv2_db,
            bn2_gamma: bn2_dgamma,
            bn2_beta: bn2_dbeta,
            fc1_w: fc1_dw,
            fc1_b: fc1_db,
            fc2_w: fc2_dw,
            fc2_b: fc2_db,
        },
    ))
}

/// (dγ, dβ, dx̂): per-feature sums of the upstream gradient against the
/// normalized activations, plus the gradient flowing into the
/// normalization itself.
fn bn_param_grads(
    xhat: &Array2<f64>,
    dout: &Array2<f64>,
    bn: &BatchNorm,
) -> (Array1<f64>, Array1<f64>, Array2<f64>) {
    let (d, _) = xhat.dim();
    let mut dgamma = Array1::zeros(d);
    let mut dbeta = Array1::zeros(d);
    let mut dxhat = dout.clone();
    for f in 0..d {
        let x = xhat.row(f);
        let g = dout.row(f);
        dgamma[f] = x.iter().zip(g.iter()).map(|(a, b)| a * b).sum();
        dbeta[f] = g.sum();
        dxhat.row_mut(f).mapv_inplace(|v| v * bn.gamma[f]);
    }
    (dgamma, dbeta, dxhat)
}

/// Adaptive-moment optimizer state (first/second moment running averages).
pub struct AdamState {
    m: Gradients,
    v: Gradients,
    t: u64,
}

impl AdamState {
    pub fn new(model: &CnnModel) -> AdamState {
        AdamState {
            m: Gradients::zeros_like(model),
            v: Gradients::zeros_like(model),
            t: 0,
        }
    }

    pub fn step(
        &mut self,
        model: &mut CnnModel,
        grads: &Gradients,
        lr: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
    ) {
        self.t += 1;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        macro_rules! upd {
            ($p:expr, $g:expr, $m:expr, $v:expr) => {
                for ((p, &g), (m, v)) in $p
                    .iter_mut()
                    .zip($g.iter())
                    .zip($m.iter_mut().zip($v.iter_mut()))
                {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    *p -= lr * (*m / bc1) / ((*v / bc2).sqrt() + eps);
                }
            };
        }
        upd!(model.conv1_w, grads.conv1_w, self.m.conv1_w, self.v.conv1_w);
        upd!(model.conv1_b, grads.conv1_b, self.m.conv1_b, self.v.conv1_b);
        upd!(model.bn1.gamma, grads.bn1_gamma, self.m.bn1_gamma, self.v.bn1_gamma);
        upd!(model.bn1.beta, grads.bn1_beta, self.m.bn1_beta, self.v.bn1_beta);
        upd!(model.conv2_w, grads.conv2_w, self.m.conv2_w, self.v.conv2_w);
        upd!(model.conv2_b, grads.conv2_b, self.m.conv2_b, self.v.conv2_b);
        upd!(model.bn2.gamma, grads.bn2_gamma, self.m.bn2_gamma, self.v.bn2_gamma);
        upd!(model.bn2.beta, grads.bn2_beta, self.m.bn2_beta, self.v.bn2_beta);
        upd!(model.fc1_w, grads.fc1_w, self.m.fc1_w, self.v.fc1_w);
        upd!(model.fc1_b, grads.fc1_b, self.m.fc1_b, self.v.fc1_b);
        upd!(model.fc2_w, grads.fc2_w, self.m.fc2_w, self.v.fc2_w);
        upd!(model.fc2_b, grads.fc2_b, self.m.fc2_b, self.v.fc2_b);
    }
}

/// Training hyperparameters. The optimizer is adaptive-moment gradient
/// descent; early stopping watches a stratified 20% holdback of the
/// training trials.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    pub holdback_fraction: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 16,
            max_epochs: 300,
            early_stop_patience: 20,
            holdback_fraction: 0.2,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
        }
    }
}
