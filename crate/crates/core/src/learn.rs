//! Feed-forward regression of tail-sensitive moments.
//!
//! A plain MLP (ReLU hidden layers, linear output) trained with Adam on a
//! mean-squared-error loss, with early stopping on the validation split.
//! Everything runs single-threaded and is bit-reproducible for a seed.

use std::collections::HashMap;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{PolymerRecord, SplitAssignment, Target};
use crate::encode::{EmbeddingKind, EncoderConfig};
use crate::error::{domain, PolysetError, Result};
use crate::seed;

/// Multi-layer perceptron with a flat parameter vector.
///
/// Layer `l` maps `dims[l]` inputs to `dims[l+1]` outputs; its weights are
/// stored row-major (`out × in`) followed by its biases.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    layer_dims: Vec<usize>,
    params: Vec<f64>,
    offsets: Vec<usize>,
}

fn layer_offsets(dims: &[usize]) -> Vec<usize> {
    let mut offsets = Vec::with_capacity(dims.len());
    let mut at = 0;
    offsets.push(0);
    for w in dims.windows(2) {
        at += w[0] * w[1] + w[1];
        offsets.push(at);
    }
    offsets
}

impl MlpModel {
    pub fn zeros(layer_dims: &[usize]) -> Result<Self> {
        if layer_dims.len() < 2 || layer_dims.contains(&0) {
            return Err(PolysetError::Shape(format!("invalid layer dims {layer_dims:?}")));
        }
        if *layer_dims.last().unwrap() != 1 {
            return Err(PolysetError::Shape("output layer must have width 1".into()));
        }
        let offsets = layer_offsets(layer_dims);
        Ok(MlpModel { layer_dims: layer_dims.to_vec(), params: vec![0.0; *offsets.last().unwrap()], offsets })
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(layer_dims: &[usize], seed: u64) -> Result<Self> {
        let mut model = Self::zeros(layer_dims)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for l in 0..model.n_layers() {
            let (fan_in, fan_out) = (model.layer_dims[l], model.layer_dims[l + 1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let w0 = model.offsets[l];
            for p in &mut model.params[w0..w0 + fan_in * fan_out] {
                *p = limit * (2.0 * rng.random::<f64>() - 1.0);
            }
        }
        Ok(model)
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn n_layers(&self) -> usize {
        self.layer_dims.len() - 1
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    fn weights(&self, l: usize) -> &[f64] {
        let start = self.offsets[l];
        &self.params[start..start + self.layer_dims[l] * self.layer_dims[l + 1]]
    }

    fn biases(&self, l: usize) -> &[f64] {
        let start = self.offsets[l] + self.layer_dims[l] * self.layer_dims[l + 1];
        &self.params[start..start + self.layer_dims[l + 1]]
    }

    /// Row-major weight matrices and bias vectors per layer.
    pub fn to_nested(&self) -> (Vec<Vec<Vec<f64>>>, Vec<Vec<f64>>) {
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for l in 0..self.n_layers() {
            weights.push(self.weights(l).chunks(self.layer_dims[l]).map(<[f64]>::to_vec).collect());
            biases.push(self.biases(l).to_vec());
        }
        (weights, biases)
    }

    pub fn from_nested(layer_dims: &[usize], weights: &[Vec<Vec<f64>>], biases: &[Vec<f64>]) -> Result<Self> {
        let mut model = Self::zeros(layer_dims)?;
        if weights.len() != model.n_layers() || biases.len() != model.n_layers() {
            return Err(PolysetError::Shape("layer count mismatch".into()));
        }
        let mut at = 0;
        for l in 0..model.n_layers() {
            let (fan_in, fan_out) = (layer_dims[l], layer_dims[l + 1]);
            if weights[l].len() != fan_out || weights[l].iter().any(|row| row.len() != fan_in) {
                return Err(PolysetError::Shape(format!("layer {l} weights are not {fan_out}x{fan_in}")));
            }
            if biases[l].len() != fan_out {
                return Err(PolysetError::Shape(format!("layer {l} biases are not {fan_out}")));
            }
            for v in weights[l].iter().flatten().chain(&biases[l]) {
                model.params[at] = *v;
                at += 1;
            }
        }
        Ok(model)
    }

    /// Forward pass keeping every layer's post-activation (input first).
    fn forward_trace(&self, x: &[f64], trace: &mut Vec<Vec<f64>>) -> Result<f64> {
        if x.len() != self.input_dim() {
            return Err(PolysetError::Shape(format!("input has {} features, model expects {}", x.len(), self.input_dim())));
        }
        trace.resize(self.layer_dims.len(), Vec::new());
        trace[0].clear();
        trace[0].extend_from_slice(x);
        for l in 0..self.n_layers() {
            let (fan_in, fan_out) = (self.layer_dims[l], self.layer_dims[l + 1]);
            let hidden = l + 1 < self.n_layers();
            let (prev, rest) = trace.split_at_mut(l + 1);
            let input = &prev[l];
            let out = &mut rest[0];
            out.clear();
            let w = self.weights(l);
            for (row, b) in w.chunks_exact(fan_in).zip(self.biases(l)) {
                let z = b + row.iter().zip(input).map(|(a, b)| a * b).sum::<f64>();
                out.push(if hidden { z.max(0.0) } else { z });
            }
            debug_assert_eq!(out.len(), fan_out);
            if let Some(bad) = out.iter().find(|v| !v.is_finite()) {
                return Err(PolysetError::Numeric { layer: l, detail: format!("activation {bad}") });
            }
        }
        Ok(trace[self.n_layers()][0])
    }

    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        self.forward_trace(x, &mut Vec::new())
    }
}

/// Mean squared error over the batch and its gradient with respect to every
/// parameter, by reverse-mode accumulation.
pub fn loss_and_gradients(model: &MlpModel, xs: &[&[f64]], ys: &[f64]) -> Result<(f64, Vec<f64>)> {
    if xs.is_empty() || xs.len() != ys.len() {
        return Err(PolysetError::Shape(format!("batch has {} inputs and {} targets", xs.len(), ys.len())));
    }
    let n = xs.len() as f64;
    let mut grads = vec![0.0; model.params.len()];
    let mut trace = Vec::new();
    let mut delta = Vec::new();
    let mut delta_prev = Vec::new();
    let mut loss = 0.0;
    for (x, &y) in xs.iter().zip(ys) {
        let out = model.forward_trace(x, &mut trace)?;
        let err = out - y;
        loss += err * err;
        delta.clear();
        delta.push(2.0 * err / n);
        for l in (0..model.n_layers()).rev() {
            let fan_in = model.layer_dims[l];
            let input = &trace[l];
            let w_off = model.offsets[l];
            let b_off = w_off + fan_in * model.layer_dims[l + 1];
            for (j, d) in delta.iter().enumerate() {
                if *d == 0.0 {
                    continue;
                }
                let row = &mut grads[w_off + j * fan_in..w_off + (j + 1) * fan_in];
                for (g, a) in row.iter_mut().zip(input) {
                    *g += d * a;
                }
                grads[b_off + j] += d;
            }
            if l > 0 {
                let w = model.weights(l);
                delta_prev.clear();
                delta_prev.resize(fan_in, 0.0);
                for (row, d) in w.chunks_exact(fan_in).zip(&delta) {
                    for (dp, wv) in delta_prev.iter_mut().zip(row) {
                        *dp += d * wv;
                    }
                }
                // ReLU derivative, from the post-activation.
                for (dp, a) in delta_prev.iter_mut().zip(input) {
                    if *a <= 0.0 {
                        *dp = 0.0;
                    }
                }
                std::mem::swap(&mut delta, &mut delta_prev);
            }
        }
    }
    Ok((loss / n, grads))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub hidden: Vec<usize>,
    pub target: Target,
    /// Standardize PolySet embedding features as well. Scalar baseline
    /// features are always standardized.
    pub standardize_embeddings: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 64,
            max_epochs: 500,
            patience: 25,
            seed: 0,
            hidden: vec![64, 64],
            target: Target::Mz1,
            standardize_embeddings: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.learning_rate, self.beta1, self.beta2, self.epsilon];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) || self.beta1 >= 1.0 || self.beta2 >= 1.0 {
            return Err(domain("learning rate, betas and epsilon must be positive (betas < 1)"));
        }
        if self.batch_size == 0 {
            return Err(domain("batch size must be positive"));
        }
        if self.max_epochs > 0 && !(1..=self.max_epochs).contains(&self.patience) {
            return Err(domain(format!("patience must lie in [1, max_epochs], got {}", self.patience)));
        }
        if self.hidden.contains(&0) {
            return Err(domain("hidden layer widths must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl AdamState {
    pub fn new(n_params: usize) -> Self {
        AdamState { m: vec![0.0; n_params], v: vec![0.0; n_params], step: 0 }
    }

    pub fn step(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update of `params` in place.
pub fn adam_step(params: &mut [f64], state: &mut AdamState, grads: &[f64], cfg: &TrainConfig) -> Result<()> {
    if params.len() != grads.len() || state.m.len() != params.len() {
        return Err(PolysetError::Shape(format!(
            "{} parameters, {} gradients, optimizer sized for {}",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        params[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
    }
    Ok(())
}

/// Per-feature affine scaling fitted on the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub x_mean: Vec<f64>,
    pub x_std: Vec<f64>,
    pub y_mean: f64,
    pub y_std: f64,
    /// Features with zero spread on the training split (left unscaled).
    pub constant_features: Vec<usize>,
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl Standardizer {
    /// `scale_features = false` keeps inputs as they are (mean 0, std 1).
    pub fn fit(xs: &[Vec<f64>], ys: &[f64], scale_features: bool) -> Result<Self> {
        if xs.is_empty() || xs.len() != ys.len() {
            return Err(domain("standardizer needs a non-empty, aligned training set"));
        }
        let dim = xs[0].len();
        let mut x_mean = vec![0.0; dim];
        let mut x_std = vec![1.0; dim];
        let mut constant_features = Vec::new();
        if scale_features {
            for j in 0..dim {
                let (m, s) = mean_std(xs.iter().map(|x| x[j]));
                x_mean[j] = m;
                if s > 1e-12 * m.abs().max(1e-300) && s > 0.0 {
                    x_std[j] = s;
                } else {
                    constant_features.push(j);
                }
            }
        }
        let (y_mean, mut y_std) = mean_std(ys.iter().copied());
        if !(y_std > 0.0) {
            y_std = 1.0;
        }
        Ok(Standardizer { x_mean, x_std, y_mean, y_std, constant_features })
    }

    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(self.x_mean.iter().zip(&self.x_std)).map(|(v, (m, s))| (v - m) / s).collect()
    }

    pub fn transform_y(&self, y: f64) -> f64 {
        (y - self.y_mean) / self.y_std
    }

    pub fn inverse_y(&self, z: f64) -> f64 {
        z * self.y_std + self.y_mean
    }
}

/// `1 - SS_res / SS_tot`.
pub fn r_squared(y: &[f64], yhat: &[f64]) -> Result<f64> {
    if y.len() != yhat.len() || y.len() < 2 {
        return Err(domain(format!("r_squared needs equal lengths >= 2, got {} and {}", y.len(), yhat.len())));
    }
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(domain("r_squared undefined for constant targets"));
    }
    let ss_res: f64 = y.iter().zip(yhat).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Per-sample symmetric absolute percentage error, `0/0 = 0`.
pub fn smape_terms(y: &[f64], yhat: &[f64]) -> Result<Vec<f64>> {
    if y.len() != yhat.len() || y.is_empty() {
        return Err(domain(format!("smape needs equal non-empty lengths, got {} and {}", y.len(), yhat.len())));
    }
    if y.iter().chain(yhat).any(|v| !(*v >= 0.0)) {
        return Err(domain("smape expects non-negative values"));
    }
    Ok(y.iter()
        .zip(yhat)
        .map(|(a, b)| {
            let denom = a.abs() + b.abs();
            if denom == 0.0 {
                0.0
            } else {
                200.0 * (a - b).abs() / denom
            }
        })
        .collect())
}

/// Symmetric mean absolute percentage error, in percent.
pub fn smape(y: &[f64], yhat: &[f64]) -> Result<f64> {
    let terms = smape_terms(y, yhat)?;
    Ok(terms.iter().sum::<f64>() / terms.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestMetrics {
    /// R² on the log10 target.
    pub r2: f64,
    /// SMAPE (%) on the linear-scale moment.
    pub smape: f64,
    /// SMAPE (%) on the log10 target; reported, not gated.
    pub smape_log: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub representation: EmbeddingKind,
    pub target: Target,
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    /// 1-based epoch with the lowest validation loss; `None` if no epoch ran.
    pub best_epoch: Option<usize>,
    pub best_val_loss: Option<f64>,
    pub test: TestMetrics,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    /// Excluded from serialization so reports are reproducible byte for byte.
    #[serde(skip)]
    pub wall_clock_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: u64,
    /// log10 of the true moment.
    pub y_true: f64,
    /// log10 of the predicted moment.
    pub y_pred: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: MlpModel,
    pub standardizer: Standardizer,
    pub report: TrainReport,
    pub test_predictions: Vec<Prediction>,
}

/// Design matrix and log10 targets for the given ids.
pub fn design_matrix(
    records: &[PolymerRecord],
    ids: &[u64],
    kind: EmbeddingKind,
    enc: &EncoderConfig,
    target: Target,
) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let by_id: HashMap<u64, &PolymerRecord> = records.iter().map(|r| (r.id, r)).collect();
    let mut xs = Vec::with_capacity(ids.len());
    let mut ys = Vec::with_capacity(ids.len());
    for id in ids {
        let r = by_id.get(id).ok_or_else(|| domain(format!("split references unknown record id {id}")))?;
        xs.push(r.embedding(kind, enc)?.values);
        ys.push(r.target(target));
    }
    Ok((xs, ys))
}

fn mse(model: &MlpModel, xs: &[Vec<f64>], ys: &[f64]) -> Result<f64> {
    let mut trace = Vec::new();
    let mut total = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        let e = model.forward_trace(x, &mut trace)? - y;
        total += e * e;
    }
    Ok(total / xs.len() as f64)
}

/// Trains and evaluates one representation; see [`train_with_observer`].
pub fn train(
    records: &[PolymerRecord],
    representation: EmbeddingKind,
    split: &SplitAssignment,
    enc: &EncoderConfig,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    train_with_observer(records, representation, split, enc, cfg, |_, _, _| {})
}

/// Like [`train`], calling `on_epoch(epoch, train_mse, val_mse)` after each
/// epoch so callers can keep partial curves if training diverges.
pub fn train_with_observer(
    records: &[PolymerRecord],
    representation: EmbeddingKind,
    split: &SplitAssignment,
    enc: &EncoderConfig,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(usize, f64, f64),
) -> Result<TrainOutcome> {
    let started = Instant::now();
    cfg.validate()?;
    enc.validate()?;
    if split.train.is_empty() || split.val.is_empty() || split.test.is_empty() {
        return Err(PolysetError::DegenerateSplit("train, validation and test splits must be non-empty".into()));
    }
    let (train_x, train_y) = design_matrix(records, &split.train, representation, enc, cfg.target)?;
    let (val_x, val_y) = design_matrix(records, &split.val, representation, enc, cfg.target)?;
    let (test_x, test_y) = design_matrix(records, &split.test, representation, enc, cfg.target)?;

    let scale_features = representation == EmbeddingKind::Baseline || cfg.standardize_embeddings;
    let standardizer = Standardizer::fit(&train_x, &train_y, scale_features)?;
    let prep = |xs: &[Vec<f64>], ys: &[f64]| -> (Vec<Vec<f64>>, Vec<f64>) {
        (
            xs.iter().map(|x| standardizer.transform(x)).collect(),
            ys.iter().map(|&y| standardizer.transform_y(y)).collect(),
        )
    };
    let (train_xs, train_ys) = prep(&train_x, &train_y);
    let (val_xs, val_ys) = prep(&val_x, &val_y);

    let mut dims = vec![train_xs[0].len()];
    dims.extend(&cfg.hidden);
    dims.push(1);
    let mut model = MlpModel::init(&dims, seed::derive(cfg.seed, &[0]))?;
    let mut adam = AdamState::new(model.params.len());
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(seed::derive(cfg.seed, &[1]));

    let mut train_loss = Vec::new();
    let mut val_loss = Vec::new();
    let mut best: Option<(usize, f64, Vec<f64>)> = None;
    let mut order: Vec<usize> = (0..train_xs.len()).collect();
    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let xs: Vec<&[f64]> = batch.iter().map(|&i| train_xs[i].as_slice()).collect();
            let ys: Vec<f64> = batch.iter().map(|&i| train_ys[i]).collect();
            let (loss, grads) = loss_and_gradients(&model, &xs, &ys).map_err(|e| PolysetError::Training {
                epoch,
                detail: e.to_string(),
            })?;
            epoch_loss += loss * batch.len() as f64;
            adam_step(&mut model.params, &mut adam, &grads, cfg)?;
        }
        let train_mse = epoch_loss / train_xs.len() as f64;
        let val_mse = mse(&model, &val_xs, &val_ys).unwrap_or(f64::NAN);
        train_loss.push(train_mse);
        val_loss.push(val_mse);
        on_epoch(epoch, train_mse, val_mse);
        if !val_mse.is_finite() || !train_mse.is_finite() {
            return Err(PolysetError::Training { epoch, detail: format!("validation loss {val_mse}") });
        }
        match &best {
            Some((_, best_val, _)) if val_mse >= *best_val => {}
            _ => best = Some((epoch, val_mse, model.params.clone())),
        }
        let best_epoch = best.as_ref().map(|b| b.0).unwrap_or(0);
        if epoch - best_epoch >= cfg.patience {
            break;
        }
    }
    let (best_epoch, best_val_loss) = match best {
        Some((epoch, val, params)) => {
            model.params = params;
            (Some(epoch), Some(val))
        }
        None => (None, None),
    };

    let mut test_predictions = Vec::with_capacity(test_x.len());
    let mut trace = Vec::new();
    for ((id, x), y) in split.test.iter().zip(&test_x).zip(&test_y) {
        let z = model.forward_trace(&standardizer.transform(x), &mut trace)?;
        test_predictions.push(Prediction { id: *id, y_true: *y, y_pred: standardizer.inverse_y(z) });
    }
    let test = evaluate(&test_predictions)?;

    let report = TrainReport {
        representation,
        target: cfg.target,
        train_loss,
        val_loss,
        best_epoch,
        best_val_loss,
        test,
        n_train: split.train.len(),
        n_val: split.val.len(),
        n_test: split.test.len(),
        wall_clock_secs: started.elapsed().as_secs_f64(),
    };
    Ok(TrainOutcome { model, standardizer, report, test_predictions })
}

/// Test metrics from log10 predictions.
pub fn evaluate(predictions: &[Prediction]) -> Result<TestMetrics> {
    let y: Vec<f64> = predictions.iter().map(|p| p.y_true).collect();
    let yhat: Vec<f64> = predictions.iter().map(|p| p.y_pred).collect();
    let lin = |v: &[f64]| v.iter().map(|x| 10f64.powf(*x)).collect::<Vec<_>>();
    let clamp = |v: &[f64]| v.iter().map(|x| x.max(0.0)).collect::<Vec<_>>();
    Ok(TestMetrics {
        r2: r_squared(&y, &yhat)?,
        smape: smape(&lin(&y), &lin(&yhat))?,
        smape_log: smape(&clamp(&y), &clamp(&yhat))?,
        n: predictions.len(),
    })
}

/// Everything needed to reload a trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub layer_dims: Vec<usize>,
    pub weights: Vec<Vec<Vec<f64>>>,
    pub biases: Vec<Vec<f64>>,
    pub standardizer: Standardizer,
    pub representation: EmbeddingKind,
    pub encoder: EncoderConfig,
    pub config: TrainConfig,
    pub seed: u64,
}

impl Checkpoint {
    pub fn new(outcome: &TrainOutcome, encoder: &EncoderConfig, config: &TrainConfig) -> Self {
        let (weights, biases) = outcome.model.to_nested();
        Checkpoint {
            layer_dims: outcome.model.layer_dims.clone(),
            weights,
            biases,
            standardizer: outcome.standardizer.clone(),
            representation: outcome.report.representation,
            encoder: encoder.clone(),
            config: config.clone(),
            seed: config.seed,
        }
    }

    pub fn model(&self) -> Result<MlpModel> {
        MlpModel::from_nested(&self.layer_dims, &self.weights, &self.biases)
    }

    /// Predicted log10 moment for a raw (unstandardized) embedding.
    pub fn predict(&self, embedding: &[f64]) -> Result<f64> {
        let z = self.model()?.forward(&self.standardizer.transform(embedding))?;
        Ok(self.standardizer.inverse_y(z))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn zero_model_outputs_zero() {
        let m = MlpModel::zeros(&[3, 4, 1]).unwrap();
        assert_eq!(m.forward(&[1.0, -2.0, 5.0]).unwrap(), 0.0);
    }

    #[test]
    fn identity_network() {
        let m = MlpModel::from_nested(&[1, 1], &[vec![vec![1.0]]], &[vec![0.0]]).unwrap();
        for x in [-3.0, 0.0, 2.5] {
            assert_eq!(m.forward(&[x]).unwrap(), x);
        }
    }

    #[test]
    fn hand_built_2_2_1() {
        // h1 = relu(1*1 + 2*(-1) + 0.5) = relu(-0.5) = 0
        // h2 = relu(-1*1 + 1*(-1) + 3)  = relu(1)    = 1
        // y  = 2*h1 - 3*h2 + 0.25 = -2.75
        let m = MlpModel::from_nested(
            &[2, 2, 1],
            &[vec![vec![1.0, 2.0], vec![-1.0, 1.0]], vec![vec![2.0, -3.0]]],
            &[vec![0.5, 3.0], vec![0.25]],
        )
        .unwrap();
        assert_eq!(m.forward(&[1.0, -1.0]).unwrap(), -2.75);
        assert!(matches!(m.forward(&[1.0]), Err(PolysetError::Shape(_))));
    }

    #[test]
    fn perfect_model_has_zero_loss_and_gradient() {
        let m = MlpModel::from_nested(&[1, 1], &[vec![vec![2.0]]], &[vec![1.0]]).unwrap();
        let xs: Vec<&[f64]> = vec![&[1.0], &[2.0], &[-1.0]];
        let (loss, g) = loss_and_gradients(&m, &xs, &[3.0, 5.0, -1.0]).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn one_parameter_gradient() {
        let m = MlpModel::from_nested(&[1, 1], &[vec![vec![0.0]]], &[vec![0.0]]).unwrap();
        let (loss, g) = loss_and_gradients(&m, &[&[1.0]], &[2.0]).unwrap();
        assert_eq!(loss, 4.0);
        assert_eq!(g[0], -4.0);
        assert!(loss_and_gradients(&m, &[], &[]).is_err());
    }

    #[test]
    fn non_finite_activation_names_layer() {
        let m = MlpModel::from_nested(&[1, 1, 1], &[vec![vec![1e300]], vec![vec![1e300]]], &[vec![0.0], vec![0.0]])
            .unwrap();
        assert!(matches!(m.forward(&[1e10]), Err(PolysetError::Numeric { layer: 0, .. })));
        assert!(matches!(m.forward(&[1.0]), Err(PolysetError::Numeric { layer: 1, .. })));
    }

    #[test]
    fn adam_first_step() {
        let cfg = TrainConfig::default();
        let mut p = vec![0.3];
        let mut s = AdamState::new(1);
        adam_step(&mut p, &mut s, &[0.5], &cfg).unwrap();
        let expected = 0.3 - 1e-3 * 0.5 / (0.5 + 1e-8);
        assert_relative_eq!(p[0], expected, max_relative = 1e-15);
        assert!((p[0] - (0.3 - 1e-3)).abs() < 1e-10);
        assert_eq!(s.step(), 1);

        let mut p = vec![0.3];
        adam_step(&mut p, &mut AdamState::new(1), &[0.0], &cfg).unwrap();
        assert_eq!(p[0], 0.3);

        assert!(adam_step(&mut [0.0, 1.0], &mut AdamState::new(2), &[1.0], &cfg).is_err());
    }

    #[test]
    fn adam_is_deterministic() {
        let run = || {
            let mut m = MlpModel::init(&[3, 8, 1], 5).unwrap();
            let mut s = AdamState::new(m.params().len());
            let mut history = Vec::new();
            for i in 0..20 {
                let x = [i as f64 * 0.1, 1.0, -0.5];
                let (_, g) = loss_and_gradients(&m, &[&x], &[1.0]).unwrap();
                adam_step(m.params_mut(), &mut s, &g, &TrainConfig::default()).unwrap();
                history.push(m.params().to_vec());
            }
            history
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn metric_examples() {
        assert_eq!(r_squared(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 1.0);
        assert_eq!(r_squared(&[1.0, 2.0, 3.0], &[2.0, 2.0, 2.0]).unwrap(), 0.0);
        assert_eq!(r_squared(&[1.0, 2.0, 3.0], &[1.0, 2.0, 4.0]).unwrap(), 0.5);
        assert!(r_squared(&[2.0, 2.0], &[1.0, 3.0]).is_err());
        assert!(r_squared(&[2.0], &[1.0]).is_err());

        assert_eq!(smape(&[5.0, 7.0], &[5.0, 7.0]).unwrap(), 0.0);
        assert_relative_eq!(smape(&[100.0], &[50.0]).unwrap(), 200.0 / 3.0, max_relative = 1e-15);
        assert_eq!(smape(&[0.0], &[0.0]).unwrap(), 0.0);
        assert!(smape(&[-1.0], &[1.0]).is_err());
        assert!(smape(&[], &[]).is_err());
    }

    #[test]
    fn standardizer_flags_constant_features() {
        let xs = vec![vec![1.0, 5.0], vec![3.0, 5.0]];
        let s = Standardizer::fit(&xs, &[0.0, 2.0], true).unwrap();
        assert_eq!(s.constant_features, vec![1]);
        assert_eq!(s.x_std[1], 1.0);
        assert_eq!(s.transform(&[2.0, 5.0]), vec![0.0, 0.0]);
        assert_eq!(s.inverse_y(s.transform_y(1.7)), 1.7);
        let identity = Standardizer::fit(&xs, &[0.0, 2.0], false).unwrap();
        assert_eq!(identity.transform(&[2.0, 5.0]), vec![2.0, 5.0]);
    }

    #[test]
    fn checkpoint_round_trip_through_nested() {
        let m = MlpModel::init(&[4, 6, 3, 1], 9).unwrap();
        let (w, b) = m.to_nested();
        assert_eq!(w[0].len(), 6);
        assert_eq!(w[0][0].len(), 4);
        let back = MlpModel::from_nested(m.layer_dims(), &w, &b).unwrap();
        assert_eq!(back, m);
        assert!(MlpModel::from_nested(&[4, 6, 1], &w, &b).is_err());
    }

    #[test]
    fn learns_linear_task() {
        // y = 3x - 1 + small noise.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 600;
        let xs: Vec<Vec<f64>> = (0..n).map(|_| vec![4.0 * rng.random::<f64>() - 2.0]).collect();
        let ys: Vec<f64> = xs
            .iter()
            .map(|x| {
                let noise: f64 = StandardNormal.sample(&mut rng);
                3.0 * x[0] - 1.0 + 0.01 * noise
            })
            .collect();
        let cfg = TrainConfig { max_epochs: 200, ..Default::default() };
        let std = Standardizer::fit(&xs[..400], &ys[..400], true).unwrap();
        let mut model = MlpModel::init(&[1, 64, 64, 1], 1).unwrap();
        let mut adam = AdamState::new(model.params().len());
        let tx: Vec<Vec<f64>> = xs[..400].iter().map(|x| std.transform(x)).collect();
        let ty: Vec<f64> = ys[..400].iter().map(|y| std.transform_y(*y)).collect();
        for _ in 0..cfg.max_epochs {
            for chunk in (0..400).collect::<Vec<_>>().chunks(cfg.batch_size) {
                let bx: Vec<&[f64]> = chunk.iter().map(|&i| tx[i].as_slice()).collect();
                let by: Vec<f64> = chunk.iter().map(|&i| ty[i]).collect();
                let (_, g) = loss_and_gradients(&model, &bx, &by).unwrap();
                adam_step(model.params_mut(), &mut adam, &g, &cfg).unwrap();
            }
        }
        let pred: Vec<f64> =
            xs[400..].iter().map(|x| std.inverse_y(model.forward(&std.transform(x)).unwrap())).collect();
        let r2 = r_squared(&ys[400..], &pred).unwrap();
        assert!(r2 >= 0.999, "{r2}");
    }
}
