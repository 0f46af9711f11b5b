//! The learned influence predictor: a small MLP (4-64-64-1, ReLU) trained
//! with Adam on per-sample cost features, plus binary model persistence.
//!
//! Costs span several orders of magnitude, and a sample's influence is set
//! by where its cost sits relative to the rest of its instance, not by the
//! raw magnitude. The feature pre-map therefore turns the total cost into a
//! within-instance z-score (asinh-compressed) and sends the violation, mean,
//! and std channels through `log1p`; targets go through `asinh`. Dataset-wide
//! z-scoring follows, with the statistics stored inside the model file.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;
use crate::scalar::Scalar;

pub const FEATURE_DIM: usize = 4;
const MAGIC: &[u8; 10] = b"DMMPPI-MLP";
const FORMAT_VERSION: u8 = 1;
const ACTIVATION_RELU: u8 = 1;

/// One training example: total cost, violation cost, instance mean and
/// standard deviation, and the fitted influence coefficient as the target.
#[derive(Debug, Clone, Copy)]
pub struct FeatureRow<S> {
    pub c_total: S,
    pub c_viol: S,
    pub c_mean: S,
    pub c_std: S,
    pub target: S,
}

impl<S: Scalar> FeatureRow<S> {
    pub fn features(&self) -> [S; FEATURE_DIM] {
        [self.c_total, self.c_viol, self.c_mean, self.c_std]
    }
}

/// Re-express raw features for the net: the within-instance z-score of the
/// total cost (asinh keeps heavy tails bounded) next to `log1p` of the cost,
/// violation, and instance mean. The z-score separates penalized samples
/// from clean ones inside one instance; the log channels resolve cost ratios
/// near the instance minimum, where the weight mass sits. Applied
/// identically at training and inference time.
fn pre_map<S: Scalar>(f: [S; FEATURE_DIM]) -> [S; FEATURE_DIM] {
    let sigma = f[3].max(S::from_f64(1e-9));
    [((f[0] - f[2]) / sigma).asinh(), f[1].ln_1p(), f[0].ln_1p(), f[2].ln_1p()]
}

/// A dense layer: weights in row-major `[out x in]` order plus biases.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer<S> {
    pub w: Vec<S>,
    pub b: Vec<S>,
    pub n_in: usize,
    pub n_out: usize,
}

impl<S: Scalar> Layer<S> {
    fn zeros(n_in: usize, n_out: usize) -> Self {
        Layer { w: vec![S::zero(); n_in * n_out], b: vec![S::zero(); n_out], n_in, n_out }
    }
}

/// The raw network: ReLU hidden layers, identity output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<S> {
    pub layers: Vec<Layer<S>>,
}

impl<S: Scalar> Mlp<S> {
    /// He-uniform initialization over the given dimension chain.
    pub fn init<R: Rng>(dims: &[usize], rng: &mut R) -> Self {
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for win in dims.windows(2) {
            let (n_in, n_out) = (win[0], win[1]);
            let limit = (6.0 / n_in as f64).sqrt();
            let mut layer = Layer::zeros(n_in, n_out);
            for w in &mut layer.w {
                *w = S::from_f64(rng.gen_range(-limit..limit));
            }
            layers.push(layer);
        }
        Mlp { layers }
    }

    fn zeros_like(&self) -> Self {
        Mlp {
            layers: self
                .layers
                .iter()
                .map(|l| Layer::zeros(l.n_in, l.n_out))
                .collect(),
        }
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut d: Vec<usize> = self.layers.iter().map(|l| l.n_in).collect();
        d.push(self.layers.last().map_or(0, |l| l.n_out));
        d
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn get_param(&self, mut idx: usize) -> S {
        for l in &self.layers {
            if idx < l.w.len() {
                return l.w[idx];
            }
            idx -= l.w.len();
            if idx < l.b.len() {
                return l.b[idx];
            }
            idx -= l.b.len();
        }
        panic!("parameter index out of range");
    }

    pub fn set_param(&mut self, mut idx: usize, v: S) {
        for l in &mut self.layers {
            if idx < l.w.len() {
                l.w[idx] = v;
                return;
            }
            idx -= l.w.len();
            if idx < l.b.len() {
                l.b[idx] = v;
                return;
            }
            idx -= l.b.len();
        }
        panic!("parameter index out of range");
    }

    /// Forward pass on one normalized input.
    pub fn forward(&self, x: &[S]) -> S {
        let n_layers = self.layers.len();
        let mut act = x.to_vec();
        for (li, l) in self.layers.iter().enumerate() {
            let mut next = vec![S::zero(); l.n_out];
            for o in 0..l.n_out {
                let row = &l.w[o * l.n_in..(o + 1) * l.n_in];
                let mut z = l.b[o];
                for (wi, ai) in row.iter().zip(&act) {
                    z += *wi * *ai;
                }
                next[o] = if li + 1 < n_layers && z < S::zero() { S::zero() } else { z };
            }
            act = next;
        }
        act[0]
    }
}

/// Mean squared error of the network over normalized rows.
pub fn batch_loss<S: Scalar>(net: &Mlp<S>, xs: &[[S; FEATURE_DIM]], ys: &[S]) -> S {
    let mut sum = S::zero();
    for (x, &y) in xs.iter().zip(ys) {
        let d = net.forward(x) - y;
        sum += d * d;
    }
    sum / S::from_usize(xs.len())
}

/// Exact backpropagation: mean squared error over the batch, with gradients
/// returned in a network-shaped container.
pub fn batch_loss_and_grad<S: Scalar>(
    net: &Mlp<S>,
    xs: &[[S; FEATURE_DIM]],
    ys: &[S],
) -> (S, Mlp<S>) {
    let n_layers = net.layers.len();
    let mut grads = net.zeros_like();
    let batch = S::from_usize(xs.len());
    let mut loss = S::zero();
    let dims = net.dims();
    let mut acts: Vec<Vec<S>> = dims.iter().map(|&d| vec![S::zero(); d]).collect();
    let mut deltas: Vec<Vec<S>> = dims.iter().map(|&d| vec![S::zero(); d]).collect();
    let two_over_batch = S::from_f64(2.0) / batch;
    for (x, &y) in xs.iter().zip(ys) {
        acts[0].copy_from_slice(x);
        for li in 0..n_layers {
            let l = &net.layers[li];
            let (lo, hi) = acts.split_at_mut(li + 1);
            let prev = &lo[li];
            let next = &mut hi[0];
            for o in 0..l.n_out {
                let row = &l.w[o * l.n_in..(o + 1) * l.n_in];
                let mut z = l.b[o];
                for (wi, ai) in row.iter().zip(prev.iter()) {
                    z += *wi * *ai;
                }
                next[o] = if li + 1 < n_layers && z < S::zero() { S::zero() } else { z };
            }
        }
        let diff = acts[n_layers][0] - y;
        loss += diff * diff;
        deltas[n_layers][0] = two_over_batch * diff;
        for li in (0..n_layers).rev() {
            let l = &net.layers[li];
            let g = &mut grads.layers[li];
            let (dlo, dhi) = deltas.split_at_mut(li + 1);
            let delta = &dhi[0];
            let prev_act = &acts[li];
            for o in 0..l.n_out {
                let d = delta[o];
                g.b[o] += d;
                let grow = &mut g.w[o * l.n_in..(o + 1) * l.n_in];
                for (gw, ai) in grow.iter_mut().zip(prev_act.iter()) {
                    *gw += d * *ai;
                }
            }
            if li > 0 {
                let pd = &mut dlo[li];
                for v in pd.iter_mut() {
                    *v = S::zero();
                }
                for o in 0..l.n_out {
                    let d = delta[o];
                    let row = &l.w[o * l.n_in..(o + 1) * l.n_in];
                    for (p, wi) in pd.iter_mut().zip(row) {
                        *p += *wi * d;
                    }
                }
                // gradient only flows where the ReLU below was active
                for (p, a) in pd.iter_mut().zip(prev_act.iter()) {
                    if *a <= S::zero() {
                        *p = S::zero();
                    }
                }
            }
        }
    }
    (loss / batch, grads)
}

/// Training hyperparameters. Defaults follow the benchmark setup: Adam at
/// 1e-3 for 1000 epochs, batches of 256, a 10% validation split, and the
/// best-validation parameters returned.
#[derive(Debug, Clone, Copy)]
pub struct TrainConfig<S> {
    pub epochs: usize,
    pub lr: S,
    pub beta1: S,
    pub beta2: S,
    pub adam_eps: S,
    pub batch_size: usize,
    pub val_fraction: f64,
    pub seed: u64,
}

impl<S: Scalar> TrainConfig<S> {
    pub fn standard() -> Self {
        TrainConfig {
            epochs: 1000,
            lr: S::from_f64(1e-3),
            beta1: S::from_f64(0.9),
            beta2: S::from_f64(0.999),
            adam_eps: S::from_f64(1e-8),
            batch_size: 256,
            val_fraction: 0.1,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TrainLogRow<S> {
    pub epoch: usize,
    pub train_loss: S,
    pub val_loss: S,
}

/// Render the training curve as CSV (`epoch,train_loss,val_loss`).
pub fn training_log_csv<S: Scalar>(rows: &[TrainLogRow<S>]) -> String {
    let mut out = String::from("epoch,train_loss,val_loss\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{}\n",
            r.epoch,
            crate::env::fmt_full(r.train_loss.to_f64()),
            crate::env::fmt_full(r.val_loss.to_f64())
        ));
    }
    out
}

/// The full predictor: network plus the feature/target transforms baked in.
/// `tau` is the pruning threshold calibrated after training; it rides along
/// in the model file so online runs pick it up automatically.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictorModel<S> {
    pub net: Mlp<S>,
    pub feat_mean: [S; FEATURE_DIM],
    pub feat_std: [S; FEATURE_DIM],
    pub target_mean: S,
    pub target_std: S,
    pub tau: S,
}

impl<S: Scalar> PredictorModel<S> {
    /// Predicted influence coefficient for one raw feature vector
    /// (C_k, C_viol_k, C_mean, C_std).
    pub fn forward(&self, features: [S; FEATURE_DIM]) -> S {
        let mut x = pre_map(features);
        for i in 0..FEATURE_DIM {
            x[i] = (x[i] - self.feat_mean[i]) / self.feat_std[i];
        }
        let z = self.net.forward(&x);
        (z * self.target_std + self.target_mean).sinh()
    }

    /// A model that outputs `value` for every input (used for mode
    /// equivalence and as a stub in tests).
    pub fn constant(value: S) -> Self {
        PredictorModel {
            net: Mlp {
                layers: vec![
                    Layer::zeros(FEATURE_DIM, 64),
                    Layer::zeros(64, 64),
                    Layer::zeros(64, 1),
                ],
            },
            feat_mean: [S::zero(); FEATURE_DIM],
            feat_std: [S::one(); FEATURE_DIM],
            target_mean: value.asinh(),
            target_std: S::one(),
            tau: S::zero(),
        }
    }
}

/// Train the predictor. Transforms, splits, initializes, runs Adam over
/// shuffled mini-batches, and returns the parameters that scored the best
/// validation loss together with the loss curves.
pub fn train<S: Scalar>(
    rows: &[FeatureRow<S>],
    cfg: &TrainConfig<S>,
) -> Result<(PredictorModel<S>, Vec<TrainLogRow<S>>)> {
    if rows.len() < 2 {
        return Err(Error::Domain(format!(
            "training needs at least 2 rows, got {}",
            rows.len()
        )));
    }
    let n = rows.len();
    // transform: feature pre-map, asinh targets
    let mut xs: Vec<[S; FEATURE_DIM]> = Vec::with_capacity(n);
    let mut ys: Vec<S> = Vec::with_capacity(n);
    for r in rows {
        xs.push(pre_map(r.features()));
        ys.push(r.target.asinh());
    }
    // dataset-wide normalization statistics, stds floored at 1e-12
    let n_s = S::from_usize(n);
    let floor = S::from_f64(1e-12);
    let mut feat_mean = [S::zero(); FEATURE_DIM];
    let mut feat_std = [S::zero(); FEATURE_DIM];
    for i in 0..FEATURE_DIM {
        let mean = xs.iter().map(|x| x[i]).sum::<S>() / n_s;
        let var = xs.iter().map(|x| (x[i] - mean) * (x[i] - mean)).sum::<S>() / n_s;
        feat_mean[i] = mean;
        feat_std[i] = var.sqrt().max(floor);
    }
    let target_mean = ys.iter().copied().sum::<S>() / n_s;
    let target_var =
        ys.iter().map(|&y| (y - target_mean) * (y - target_mean)).sum::<S>() / n_s;
    let target_std = target_var.sqrt().max(floor);
    for x in &mut xs {
        for i in 0..FEATURE_DIM {
            x[i] = (x[i] - feat_mean[i]) / feat_std[i];
        }
    }
    for y in &mut ys {
        *y = (*y - target_mean) / target_std;
    }

    let mut rng = rng_from_seed(cfg.seed);
    // validation split: leading slice of one shuffled permutation
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);
    let n_val = ((cfg.val_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let (val_idx, train_idx) = perm.split_at(n_val);
    let val_x: Vec<[S; FEATURE_DIM]> = val_idx.iter().map(|&i| xs[i]).collect();
    let val_y: Vec<S> = val_idx.iter().map(|&i| ys[i]).collect();
    let mut order: Vec<usize> = train_idx.to_vec();

    let mut net = Mlp::init(&[FEATURE_DIM, 64, 64, 1], &mut rng);
    let mut adam_m = net.zeros_like();
    let mut adam_v = net.zeros_like();
    let mut adam_t = 0u32;

    let mut best_val = S::infinity();
    let mut best_net = net.clone();
    let mut log = Vec::with_capacity(cfg.epochs);
    let one = S::one();
    let mut bx: Vec<[S; FEATURE_DIM]> = Vec::with_capacity(cfg.batch_size);
    let mut by: Vec<S> = Vec::with_capacity(cfg.batch_size);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = S::zero();
        let mut batches = 0usize;
        for (batch_no, chunk) in order.chunks(cfg.batch_size).enumerate() {
            bx.clear();
            by.clear();
            bx.extend(chunk.iter().map(|&i| xs[i]));
            by.extend(chunk.iter().map(|&i| ys[i]));
            let (loss, grads) = batch_loss_and_grad(&net, &bx, &by);
            if !loss.is_finite() {
                return Err(Error::TrainingDiverged { epoch, batch: batch_no });
            }
            epoch_loss += loss;
            batches += 1;
            adam_t += 1;
            let bc1 = one - cfg.beta1.powi(adam_t as i32);
            let bc2 = one - cfg.beta2.powi(adam_t as i32);
            for (li, gl) in grads.layers.iter().enumerate() {
                let l = &mut net.layers[li];
                let m = &mut adam_m.layers[li];
                let v = &mut adam_v.layers[li];
                for (i, &g) in gl.w.iter().enumerate() {
                    m.w[i] = cfg.beta1 * m.w[i] + (one - cfg.beta1) * g;
                    v.w[i] = cfg.beta2 * v.w[i] + (one - cfg.beta2) * g * g;
                    l.w[i] -= cfg.lr * (m.w[i] / bc1) / ((v.w[i] / bc2).sqrt() + cfg.adam_eps);
                }
                for (i, &g) in gl.b.iter().enumerate() {
                    m.b[i] = cfg.beta1 * m.b[i] + (one - cfg.beta1) * g;
                    v.b[i] = cfg.beta2 * v.b[i] + (one - cfg.beta2) * g * g;
                    l.b[i] -= cfg.lr * (m.b[i] / bc1) / ((v.b[i] / bc2).sqrt() + cfg.adam_eps);
                }
            }
        }
        let val_loss = batch_loss(&net, &val_x, &val_y);
        if val_loss < best_val {
            best_val = val_loss;
            best_net = net.clone();
        }
        log.push(TrainLogRow {
            epoch: epoch + 1,
            train_loss: epoch_loss / S::from_usize(batches.max(1)),
            val_loss,
        });
    }

    Ok((
        PredictorModel {
            net: best_net,
            feat_mean,
            feat_std,
            target_mean,
            target_std,
            tau: S::zero(),
        },
        log,
    ))
}

/// Validation MSE of the returned model (normalized target space), read off
/// the log at the best epoch.
pub fn best_val_loss<S: Scalar>(log: &[TrainLogRow<S>]) -> S {
    log.iter()
        .map(|r| r.val_loss)
        .fold(S::infinity(), |a, b| if b < a { b } else { a })
}

// ---------------------------------------------------------------------------
// persistence

struct ByteWriter {
    buf: Vec<u8>,
}

impl ByteWriter {
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
}

struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Parse {
                offset: self.pos,
                message: format!("truncated file while reading {what}"),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }
    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
    fn f64(&mut self, what: &str) -> Result<f64> {
        let b = self.take(8, what)?;
        Ok(f64::from_le_bytes(b.try_into().unwrap()))
    }
}

impl<S: Scalar> PredictorModel<S> {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter { buf: Vec::new() };
        w.buf.extend_from_slice(MAGIC);
        w.u8(FORMAT_VERSION);
        w.u8(ACTIVATION_RELU);
        let dims = self.net.dims();
        w.u32(self.net.layers.len() as u32);
        for d in &dims {
            w.u32(*d as u32);
        }
        for l in &self.net.layers {
            for &p in &l.w {
                w.f64(p.to_f64());
            }
            for &p in &l.b {
                w.f64(p.to_f64());
            }
        }
        for &v in &self.feat_mean {
            w.f64(v.to_f64());
        }
        for &v in &self.feat_std {
            w.f64(v.to_f64());
        }
        w.f64(self.target_mean.to_f64());
        w.f64(self.target_std.to_f64());
        w.f64(self.tau.to_f64());
        w.buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader { buf: bytes, pos: 0 };
        let magic = r.take(MAGIC.len(), "magic")?;
        if magic != MAGIC {
            return Err(Error::Parse { offset: 0, message: "bad magic header".into() });
        }
        let version = r.u8("format version")?;
        if version != FORMAT_VERSION {
            return Err(Error::Parse {
                offset: MAGIC.len(),
                message: format!(
                    "unsupported format version {version} (expected {FORMAT_VERSION})"
                ),
            });
        }
        let act = r.u8("activation tag")?;
        if act != ACTIVATION_RELU {
            return Err(Error::Parse {
                offset: MAGIC.len() + 1,
                message: format!("unknown activation tag {act}"),
            });
        }
        let n_layers = r.u32("layer count")? as usize;
        if n_layers == 0 || n_layers > 64 {
            return Err(Error::Parse {
                offset: r.pos - 4,
                message: format!("implausible layer count {n_layers}"),
            });
        }
        let mut dims = Vec::with_capacity(n_layers + 1);
        for _ in 0..=n_layers {
            dims.push(r.u32("layer dimension")? as usize);
        }
        let mut layers = Vec::with_capacity(n_layers);
        for li in 0..n_layers {
            let (n_in, n_out) = (dims[li], dims[li + 1]);
            let mut layer = Layer::zeros(n_in, n_out);
            for p in &mut layer.w {
                *p = S::from_f64(r.f64("layer weights")?);
            }
            for p in &mut layer.b {
                *p = S::from_f64(r.f64("layer biases")?);
            }
            layers.push(layer);
        }
        let mut feat_mean = [S::zero(); FEATURE_DIM];
        let mut feat_std = [S::zero(); FEATURE_DIM];
        for v in &mut feat_mean {
            *v = S::from_f64(r.f64("feature means")?);
        }
        for v in &mut feat_std {
            *v = S::from_f64(r.f64("feature stds")?);
        }
        let target_mean = S::from_f64(r.f64("target mean")?);
        let target_std = S::from_f64(r.f64("target std")?);
        let tau = S::from_f64(r.f64("tau")?);
        if r.pos != bytes.len() {
            return Err(Error::Parse {
                offset: r.pos,
                message: format!("{} unexpected trailing bytes", bytes.len() - r.pos),
            });
        }
        Ok(PredictorModel {
            net: Mlp { layers },
            feat_mean,
            feat_std,
            target_mean,
            target_std,
            tau,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synth_rows(n: usize, seed: u64) -> Vec<FeatureRow<f64>> {
        // linear rule theta = 0.3 * C - 0.1 * C_mean over a plausible range
        let mut rng = rng_from_seed(seed);
        (0..n)
            .map(|_| {
                let c: f64 = rng.gen_range(0.0..40.0);
                let cm: f64 = rng.gen_range(5.0..30.0);
                let cv: f64 = rng.gen_range(0.0..2.0);
                let cs: f64 = rng.gen_range(1.0..10.0);
                FeatureRow {
                    c_total: c,
                    c_viol: cv,
                    c_mean: cm,
                    c_std: cs,
                    target: 0.3 * c - 0.1 * cm,
                }
            })
            .collect()
    }

    #[test]
    fn constant_model_outputs_its_value() {
        let m = PredictorModel::constant(2.5f64);
        assert!((m.forward([0.0, 0.0, 0.0, 0.0]) - 2.5).abs() < 1e-12);
        assert!((m.forward([100.0, 3.0, 50.0, 10.0]) - 2.5).abs() < 1e-12);
    }

    #[test]
    fn hand_built_single_layer_sums_inputs() {
        let mut net = Mlp { layers: vec![Layer::zeros(4, 1)] };
        for w in &mut net.layers[0].w {
            *w = 1.0;
        }
        let out = net.forward(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(out, 10.0);
    }

    #[test]
    fn zero_batch_gradients_when_predictions_match() {
        let mut net = Mlp { layers: vec![Layer::zeros(4, 1)] };
        net.layers[0].b[0] = 3.0;
        let xs = [[0.5, -1.0, 2.0, 0.0], [1.0, 1.0, 1.0, 1.0]];
        let ys = [3.0, 3.0];
        // weights are zero, bias 3 -> predictions equal targets
        let (loss, grads) = batch_loss_and_grad(&net, &xs, &ys);
        assert_eq!(loss, 0.0);
        for l in &grads.layers {
            assert!(l.w.iter().all(|g| *g == 0.0));
            assert!(l.b.iter().all(|g| *g == 0.0));
        }
    }

    #[test]
    fn duplicated_rows_leave_mean_loss_unchanged() {
        let mut rng = rng_from_seed(2);
        let net = Mlp::<f64>::init(&[4, 8, 1], &mut rng);
        let xs = [[0.1, 0.2, 0.3, 0.4], [0.5, -0.6, 0.7, -0.8]];
        let ys = [0.3, -0.2];
        let (l1, g1) = batch_loss_and_grad(&net, &xs, &ys);
        let xs2 = [xs[0], xs[1], xs[0], xs[1]];
        let ys2 = [ys[0], ys[1], ys[0], ys[1]];
        let (l2, g2) = batch_loss_and_grad(&net, &xs2, &ys2);
        assert!((l1 - l2).abs() < 1e-14);
        for (a, b) in g1.layers.iter().zip(&g2.layers) {
            for (x, y) in a.w.iter().zip(&b.w) {
                assert!((x - y).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn finite_difference_spot_check() {
        let mut rng = rng_from_seed(3);
        let mut net = Mlp::<f64>::init(&[4, 16, 16, 1], &mut rng);
        let xs: Vec<[f64; 4]> = (0..8)
            .map(|_| [rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()])
            .collect();
        let ys: Vec<f64> = (0..8).map(|_| rng.gen::<f64>()).collect();
        let (_, grads) = batch_loss_and_grad(&net, &xs, &ys);
        let h = 1e-6;
        for &idx in &[0usize, 5, 40, 80, net.param_count() - 1] {
            let orig = net.get_param(idx);
            net.set_param(idx, orig + h);
            let lp = batch_loss(&net, &xs, &ys);
            net.set_param(idx, orig - h);
            let lm = batch_loss(&net, &xs, &ys);
            net.set_param(idx, orig);
            let fd = (lp - lm) / (2.0 * h);
            let an = grads.get_param(idx);
            let denom = fd.abs().max(an.abs()).max(1e-8);
            assert!(
                ((fd - an) / denom).abs() < 1e-5,
                "param {idx}: finite diff {fd} vs analytic {an}"
            );
        }
    }

    #[test]
    fn training_learns_constant_targets() {
        let rows: Vec<FeatureRow<f64>> = synth_rows(200, 5)
            .into_iter()
            .map(|mut r| {
                r.target = 4.0;
                r
            })
            .collect();
        let mut cfg = TrainConfig::standard();
        cfg.epochs = 100;
        let (model, log) = train(&rows, &cfg).unwrap();
        assert!(best_val_loss(&log) < log.first().unwrap().val_loss);
        // target std collapses to the floor, so any network output maps back
        // to the constant
        let p = model.forward([10.0, 0.5, 12.0, 4.0]);
        assert!((p - 4.0).abs() < 1e-6, "prediction {p}");
    }

    #[test]
    fn training_learns_linear_rule() {
        let rows = synth_rows(3000, 6);
        let held = synth_rows(500, 7);
        let mut cfg = TrainConfig::standard();
        cfg.epochs = 250;
        let (model, log) = train(&rows, &cfg).unwrap();
        let preds: Vec<f64> = held.iter().map(|r| model.forward(r.features())).collect();
        let mean = held.iter().map(|r| r.target).sum::<f64>() / held.len() as f64;
        let ss_tot: f64 = held.iter().map(|r| (r.target - mean).powi(2)).sum();
        let ss_res: f64 = held
            .iter()
            .zip(&preds)
            .map(|(r, p)| (r.target - p).powi(2))
            .sum();
        let r2 = 1.0 - ss_res / ss_tot;
        assert!(r2 > 0.95, "held-out R^2 {r2}");
        let final_val = log.last().unwrap().val_loss;
        assert!(final_val < log.first().unwrap().val_loss);
    }

    #[test]
    fn training_is_deterministic() {
        let rows = synth_rows(300, 8);
        let mut cfg = TrainConfig::standard();
        cfg.epochs = 20;
        let (m1, _) = train(&rows, &cfg).unwrap();
        let (m2, _) = train(&rows, &cfg).unwrap();
        assert_eq!(m1, m2);
    }

    #[test]
    fn rejects_tiny_datasets() {
        let rows = synth_rows(1, 10);
        assert!(train(&rows, &TrainConfig::standard()).is_err());
    }

    #[test]
    fn save_load_round_trip() {
        let mut rng = rng_from_seed(9);
        let model = PredictorModel {
            net: Mlp::<f64>::init(&[4, 64, 64, 1], &mut rng),
            feat_mean: [0.1, 0.2, 0.3, 0.4],
            feat_std: [1.0, 2.0, 3.0, 4.0],
            target_mean: -0.5,
            target_std: 2.5,
            tau: 0.236,
        };
        let bytes = model.to_bytes();
        let back = PredictorModel::<f64>::from_bytes(&bytes).unwrap();
        assert_eq!(model, back);
    }

    #[test]
    fn truncated_file_rejected() {
        let model = PredictorModel::constant(1.0f64);
        let bytes = model.to_bytes();
        let cut = &bytes[..bytes.len() / 2];
        match PredictorModel::<f64>::from_bytes(cut) {
            Err(Error::Parse { offset, .. }) => assert!(offset <= cut.len()),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn wrong_magic_rejected() {
        let model = PredictorModel::constant(1.0f64);
        let mut bytes = model.to_bytes();
        bytes[0] = b'X';
        match PredictorModel::<f64>::from_bytes(&bytes) {
            Err(Error::Parse { offset: 0, .. }) => {}
            other => panic!("expected magic error, got {other:?}"),
        }
    }

    #[test]
    fn trailing_bytes_rejected() {
        let model = PredictorModel::constant(1.0f64);
        let mut bytes = model.to_bytes();
        bytes.push(0);
        assert!(PredictorModel::<f64>::from_bytes(&bytes).is_err());
    }
}
