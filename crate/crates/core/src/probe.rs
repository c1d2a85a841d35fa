//! Softmax linear probes trained on frozen hidden-layer features.
//!
//! The training objective mixes cross entropy against the true labels and
//! against the analyzed model's own predictions:
//!
//! ```text
//! loss = lambda * CE(z, y) + (1 - lambda) * CE(z, y_model) + weight_decay/2 * ||W||_F^2
//! ```
//!
//! averaged over the batch, with `z = softmax(W h + b)`.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{split_dataset, FeatureDataset, LayerEpochKey};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    Zeros,
    Gaussian { scale: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub weight_decay: f64,
    /// Probe-epochs without internal-validation improvement before stopping; 0 disables.
    pub patience: usize,
    pub optimizer: Optimizer,
    pub init: Init,
    pub internal_val_fraction: f64,
    /// Stop once the epoch train loss changes by less than this; 0 disables.
    pub convergence_tol: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            learning_rate: 1e-3,
            batch_size: 256,
            max_epochs: 110,
            weight_decay: 0.0,
            patience: 0,
            optimizer: Optimizer::Sgd,
            init: Init::Zeros,
            internal_val_fraction: 0.1,
            convergence_tol: 0.0,
        }
    }
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            ));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be positive".into());
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad(format!(
                "weight_decay must be nonnegative, got {}",
                self.weight_decay
            ));
        }
        if !(0.0..1.0).contains(&self.internal_val_fraction) {
            return bad(format!(
                "internal_val_fraction must lie in [0, 1), got {}",
                self.internal_val_fraction
            ));
        }
        if self.patience > 0 && self.internal_val_fraction <= 0.0 {
            return bad("patience > 0 requires internal_val_fraction > 0".into());
        }
        if let Init::Gaussian { scale } = self.init {
            if !(scale >= 0.0 && scale.is_finite()) {
                return bad(format!("gaussian init scale must be nonnegative, got {scale}"));
            }
        }
        if !(self.convergence_tol >= 0.0) {
            return bad("convergence_tol must be nonnegative".into());
        }
        Ok(())
    }
}

/// Partial [`ProbeConfig`] used for per-layer overrides in run manifests.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfigPatch {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_epochs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight_decay: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub patience: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimizer: Option<Optimizer>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<Init>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub internal_val_fraction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convergence_tol: Option<f64>,
}

impl ProbeConfigPatch {
    pub fn apply(&self, config: &mut ProbeConfig) {
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = self.$field {
                    config.$field = v;
                }
            )*};
        }
        set!(
            learning_rate,
            batch_size,
            max_epochs,
            weight_decay,
            patience,
            optimizer,
            init,
            internal_val_fraction,
            convergence_tol
        );
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearProbe {
    /// N x d
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub key: Option<LayerEpochKey>,
    pub lambda: f64,
    pub seed: u64,
}

impl LinearProbe {
    pub fn zeros(num_classes: usize, feature_dim: usize) -> Self {
        LinearProbe {
            weights: Array2::zeros((num_classes, feature_dim)),
            bias: Array1::zeros(num_classes),
            key: None,
            lambda: 1.0,
            seed: 0,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.weights.nrows()
    }

    pub fn feature_dim(&self) -> usize {
        self.weights.ncols()
    }

    fn check_features(&self, d: usize) -> Result<()> {
        if d != self.feature_dim() {
            return Err(Error::DimensionMismatch(format!(
                "probe expects {} features, got {d}",
                self.feature_dim()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    Patience,
    MaxEpochs,
}

impl std::fmt::Display for StopReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            StopReason::Converged => "converged",
            StopReason::Patience => "patience",
            StopReason::MaxEpochs => "max_epochs",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingTrace {
    pub train_loss: Vec<f64>,
    /// Internal-validation loss per probe-epoch; empty when early stopping is off.
    pub val_loss: Vec<f64>,
    pub stop_reason: StopReason,
    /// Probe-epoch (0-based) whose parameters were returned.
    pub best_epoch: usize,
}

fn to_f64(features: ArrayView2<'_, f32>) -> Array2<f64> {
    features.mapv(f64::from)
}

fn logits_f64(probe: &LinearProbe, features: &Array2<f64>) -> Array2<f64> {
    let mut z = features.dot(&probe.weights.t());
    z += &probe.bias;
    z
}

/// Pre-softmax outputs `W h_i + b`, one row per sample.
pub fn probe_logits(probe: &LinearProbe, features: ArrayView2<'_, f32>) -> Result<Array2<f64>> {
    probe.check_features(features.ncols())?;
    Ok(logits_f64(probe, &to_f64(features)))
}

/// Index of the largest entry; ties go to the lowest index.
fn argmax(row: ndarray::ArrayView1<'_, f64>) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

pub fn predict(probe: &LinearProbe, features: ArrayView2<'_, f32>) -> Result<Vec<u32>> {
    let z = probe_logits(probe, features)?;
    Ok(z.rows().into_iter().map(|r| argmax(r) as u32).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossAndGrad {
    pub loss: f64,
    pub grad_weights: Array2<f64>,
    pub grad_bias: Array1<f64>,
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidArgument(format!(
            "lambda must lie in [0, 1], got {lambda}"
        )));
    }
    Ok(())
}

/// Weight and bias gradients.
type Gradients = (Array2<f64>, Array1<f64>);

/// Core of the objective on f64 features. Also returns the two unweighted
/// mean cross entropies.
fn mixed_objective(
    probe: &LinearProbe,
    features: &Array2<f64>,
    y: &[u32],
    y_model: Option<&[u32]>,
    lambda: f64,
    weight_decay: f64,
    with_grad: bool,
) -> (f64, Option<Gradients>) {
    let batch = features.nrows();
    let mut z = logits_f64(probe, features);
    let mut ce_true = 0.0;
    let mut ce_model = 0.0;
    for (i, mut row) in z.axis_iter_mut(Axis(0)).enumerate() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let sum: f64 = row.iter().map(|&v| (v - max).exp()).sum();
        let log_norm = max + sum.ln();
        ce_true += log_norm - row[y[i] as usize];
        if let Some(ym) = y_model {
            ce_model += log_norm - row[ym[i] as usize];
        }
        if with_grad {
            // row becomes softmax minus the mixed one-hot target
            row.mapv_inplace(|v| (v - log_norm).exp());
            row[y[i] as usize] -= lambda;
            if let Some(ym) = y_model {
                row[ym[i] as usize] -= 1.0 - lambda;
            }
        }
    }
    let b = batch as f64;
    let mut loss = lambda * (ce_true / b);
    if y_model.is_some() {
        loss += (1.0 - lambda) * (ce_model / b);
    }
    if weight_decay > 0.0 {
        loss += 0.5 * weight_decay * probe.weights.iter().map(|w| w * w).sum::<f64>();
    }
    if !with_grad {
        return (loss, None);
    }
    z /= b;
    let mut grad_w = z.t().dot(features);
    if weight_decay > 0.0 {
        grad_w.scaled_add(weight_decay, &probe.weights);
    }
    let grad_b = z.sum_axis(Axis(0));
    (loss, Some((grad_w, grad_b)))
}

fn check_batch(
    probe: &LinearProbe,
    d: usize,
    n: usize,
    y: &[u32],
    y_model: Option<&[u32]>,
    lambda: f64,
) -> Result<()> {
    check_lambda(lambda)?;
    probe.check_features(d)?;
    if n == 0 {
        return Err(Error::EmptyBatch);
    }
    if y.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} labels for {n} samples",
            y.len()
        )));
    }
    let classes = probe.num_classes() as u32;
    if let Some(&l) = y.iter().find(|&&l| l >= classes) {
        return Err(Error::InvalidArgument(format!("label {l} out of range")));
    }
    match y_model {
        None if lambda < 1.0 => Err(Error::MissingPredictions {
            what: "batch".into(),
            lambda,
        }),
        Some(ym) if ym.len() != n => Err(Error::DimensionMismatch(format!(
            "{} predicted labels for {n} samples",
            ym.len()
        ))),
        Some(ym) if ym.iter().any(|&l| l >= classes) => {
            Err(Error::InvalidArgument("predicted label out of range".into()))
        }
        _ => Ok(()),
    }
}

/// Batch-mean mixed cross entropy plus L2 penalty, with exact gradients.
pub fn mixed_loss_and_grad(
    probe: &LinearProbe,
    features: ArrayView2<'_, f32>,
    y: &[u32],
    y_model: Option<&[u32]>,
    lambda: f64,
    weight_decay: f64,
) -> Result<LossAndGrad> {
    check_batch(probe, features.ncols(), features.nrows(), y, y_model, lambda)?;
    let y_model = if lambda < 1.0 { y_model } else { None };
    let (loss, grads) = mixed_objective(probe, &to_f64(features), y, y_model, lambda, weight_decay, true);
    let (grad_weights, grad_bias) = grads.expect("requested");
    Ok(LossAndGrad {
        loss,
        grad_weights,
        grad_bias,
    })
}

/// Objective value only.
pub fn mixed_loss(
    probe: &LinearProbe,
    features: ArrayView2<'_, f32>,
    y: &[u32],
    y_model: Option<&[u32]>,
    lambda: f64,
    weight_decay: f64,
) -> Result<f64> {
    check_batch(probe, features.ncols(), features.nrows(), y, y_model, lambda)?;
    let y_model = if lambda < 1.0 { y_model } else { None };
    Ok(mixed_objective(probe, &to_f64(features), y, y_model, lambda, weight_decay, false).0)
}

struct Adam {
    m_w: Array2<f64>,
    v_w: Array2<f64>,
    m_b: Array1<f64>,
    v_b: Array1<f64>,
    step: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize, d: usize) -> Self {
        Adam {
            m_w: Array2::zeros((n, d)),
            v_w: Array2::zeros((n, d)),
            m_b: Array1::zeros(n),
            v_b: Array1::zeros(n),
            step: 0,
        }
    }

    fn update(&mut self, probe: &mut LinearProbe, gw: &Array2<f64>, gb: &Array1<f64>, lr: f64) {
        self.step += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.step);
        let c2 = 1.0 - Self::BETA2.powi(self.step);
        let apply = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
            *m = Self::BETA1 * *m + (1.0 - Self::BETA1) * g;
            *v = Self::BETA2 * *v + (1.0 - Self::BETA2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + Self::EPS);
        };
        ndarray::Zip::from(&mut probe.weights)
            .and(&mut self.m_w)
            .and(&mut self.v_w)
            .and(gw)
            .for_each(|p, m, v, &g| apply(p, m, v, g));
        ndarray::Zip::from(&mut probe.bias)
            .and(&mut self.m_b)
            .and(&mut self.v_b)
            .and(gb)
            .for_each(|p, m, v, &g| apply(p, m, v, g));
    }
}

fn gather(ds: &FeatureDataset, idx: &[usize]) -> (Array2<f64>, Vec<u32>, Option<Vec<u32>>) {
    let x = ds.features.select(Axis(0), idx).mapv(f64::from);
    let y = idx.iter().map(|&i| ds.true_labels[i]).collect();
    let ym = ds
        .predicted_labels
        .as_ref()
        .map(|p| idx.iter().map(|&i| p[i]).collect());
    (x, y, ym)
}

/// Full-set data loss (no weight penalty), evaluated in fixed-size chunks.
fn dataset_loss(probe: &LinearProbe, ds: &FeatureDataset, lambda: f64) -> f64 {
    let n = ds.len();
    let all: Vec<usize> = (0..n).collect();
    let mut total = 0.0;
    for chunk in all.chunks(4096) {
        let (x, y, ym) = gather(ds, chunk);
        let ym = if lambda < 1.0 { ym.as_deref() } else { None };
        let (loss, _) = mixed_objective(probe, &x, &y, ym, lambda, 0.0, false);
        total += loss * chunk.len() as f64;
    }
    total / n as f64
}

pub fn train_probe(
    train: &FeatureDataset,
    lambda: f64,
    config: &ProbeConfig,
    seed: u64,
) -> Result<(LinearProbe, TrainingTrace)> {
    train_probe_from(train, lambda, config, seed, None)
}

/// Like [`train_probe`], optionally starting from `warm` instead of the
/// configured initialization.
pub fn train_probe_from(
    train: &FeatureDataset,
    lambda: f64,
    config: &ProbeConfig,
    seed: u64,
    warm: Option<&LinearProbe>,
) -> Result<(LinearProbe, TrainingTrace)> {
    check_lambda(lambda)?;
    config.validate()?;
    train.validate()?;
    if lambda < 1.0 && !train.has_predictions() {
        return Err(Error::MissingPredictions {
            what: "training dataset".into(),
            lambda,
        });
    }
    let num_classes = train.num_classes as usize;
    let d = train.feature_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let (fit, internal_val) = if config.patience > 0 {
        let split = split_dataset(train, 1.0 - config.internal_val_fraction, seed)?;
        (split.probe_train, Some(split.probe_eval))
    } else {
        (train.clone(), None)
    };

    let mut probe = match warm {
        Some(w) => {
            if w.num_classes() != num_classes || w.feature_dim() != d {
                return Err(Error::DimensionMismatch(
                    "warm-start probe does not match the training data".into(),
                ));
            }
            w.clone()
        }
        None => {
            let mut p = LinearProbe::zeros(num_classes, d);
            if let Init::Gaussian { scale } = config.init {
                let normal = Normal::new(0.0, scale).expect("scale validated");
                p.weights.mapv_inplace(|_| normal.sample(&mut rng));
            }
            p
        }
    };
    probe.lambda = lambda;
    probe.seed = seed;
    probe.key = match (train.meta.epoch, &train.meta.layer) {
        (Some(epoch), Some(layer)) => Some(LayerEpochKey::new(epoch, layer.clone())),
        _ => None,
    };

    let mut adam = (config.optimizer == Optimizer::Adam).then(|| Adam::new(num_classes, d));
    let mut order: Vec<usize> = (0..fit.len()).collect();
    let mut trace = TrainingTrace {
        train_loss: Vec::new(),
        val_loss: Vec::new(),
        stop_reason: StopReason::MaxEpochs,
        best_epoch: 0,
    };
    let mut best: Option<(f64, LinearProbe)> = None;
    let mut since_best = 0;

    for epoch in 0..config.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            let (x, y, ym) = gather(&fit, batch);
            let ym = if lambda < 1.0 { ym.as_deref() } else { None };
            let (loss, grads) = mixed_objective(&probe, &x, &y, ym, lambda, config.weight_decay, true);
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, loss });
            }
            epoch_loss += loss * batch.len() as f64;
            let (gw, gb) = grads.expect("requested");
            match adam.as_mut() {
                Some(adam) => adam.update(&mut probe, &gw, &gb, config.learning_rate),
                None => {
                    probe.weights.scaled_add(-config.learning_rate, &gw);
                    probe.bias.scaled_add(-config.learning_rate, &gb);
                }
            }
        }
        if probe
            .weights
            .iter()
            .chain(probe.bias.iter())
            .any(|v| !v.is_finite())
        {
            return Err(Error::Diverged {
                epoch,
                loss: f64::NAN,
            });
        }
        let epoch_loss = epoch_loss / fit.len() as f64;
        let prev = trace.train_loss.last().copied();
        trace.train_loss.push(epoch_loss);

        if let Some(val) = &internal_val {
            let vl = dataset_loss(&probe, val, lambda);
            if !vl.is_finite() {
                return Err(Error::Diverged { epoch, loss: vl });
            }
            trace.val_loss.push(vl);
            if best.as_ref().is_none_or(|(b, _)| vl < *b) {
                best = Some((vl, probe.clone()));
                trace.best_epoch = epoch;
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= config.patience {
                    trace.stop_reason = StopReason::Patience;
                    break;
                }
            }
        } else {
            trace.best_epoch = epoch;
        }

        if config.convergence_tol > 0.0 {
            if let Some(prev) = prev {
                if (prev - epoch_loss).abs() < config.convergence_tol {
                    trace.stop_reason = StopReason::Converged;
                    break;
                }
            }
        }
    }

    if let Some((_, best_probe)) = best {
        probe = best_probe;
    }
    Ok((probe, trace))
}

const CHECKPOINT_MAGIC: [u8; 4] = *b"GFP1";
const CHECKPOINT_VERSION: u32 = 1;

/// Probe checkpoint: `"GFP1" | version u32 | d u32 | N u32 | lambda f64 | seed u64 |
/// W (N*d f32, row-major) | b (N f32)`, little-endian.
pub fn write_probe(probe: &LinearProbe, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    buf.extend_from_slice(&CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(probe.feature_dim() as u32).to_le_bytes());
    buf.extend_from_slice(&(probe.num_classes() as u32).to_le_bytes());
    buf.extend_from_slice(&probe.lambda.to_le_bytes());
    buf.extend_from_slice(&probe.seed.to_le_bytes());
    for w in probe.weights.iter().chain(probe.bias.iter()) {
        buf.extend_from_slice(&(*w as f32).to_le_bytes());
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn read_probe(path: impl AsRef<Path>) -> Result<LinearProbe> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    const HEADER: usize = 4 + 4 + 4 + 4 + 8 + 8;
    if bytes.len() < HEADER {
        return Err(Error::Truncated {
            path: path.into(),
            expected: HEADER as u64,
            actual: bytes.len() as u64,
        });
    }
    let magic: [u8; 4] = bytes[..4].try_into().unwrap();
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::BadMagic {
            path: path.into(),
            found: magic,
        });
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let version = u32_at(4);
    if version != CHECKPOINT_VERSION {
        return Err(Error::UnsupportedVersion {
            path: path.into(),
            version,
        });
    }
    let d = u32_at(8) as usize;
    let n = u32_at(12) as usize;
    let lambda = f64::from_le_bytes(bytes[16..24].try_into().unwrap());
    let seed = u64::from_le_bytes(bytes[24..32].try_into().unwrap());
    let expected = (HEADER + (n * d + n) * 4) as u64;
    if bytes.len() as u64 != expected {
        return Err(Error::Truncated {
            path: path.into(),
            expected,
            actual: bytes.len() as u64,
        });
    }
    let vals: Vec<f64> = bytes[HEADER..]
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
        .collect();
    let weights = Array2::from_shape_vec((n, d), vals[..n * d].to_vec()).expect("sized");
    let bias = Array1::from(vals[n * d..].to_vec());
    Ok(LinearProbe {
        weights,
        bias,
        key: None,
        lambda,
        seed,
    })
}
