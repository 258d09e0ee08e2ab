//! Mini-batch training with Adam and early stopping on validation AUC.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{sigmoid, Tape};
use crate::error::{Error, Result};
use crate::graph::{DatasetSplit, Label, MultiRelationGraph, NodeId};
use crate::metrics::{evaluate, EvalResult, DEFAULT_THRESHOLD};
use crate::model::{forward, forward_on_tape, CatGnnParams, Mode, ModelConfig, ParamVars};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Epochs without a validation AUC improvement before stopping.
    pub early_stop_patience: usize,
    /// Disable to always run the full epoch budget.
    pub early_stopping: bool,
    /// Coefficient η of the `η‖Θ‖²` penalty.
    pub weight_decay: f64,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Batch size for inference-only passes.
    pub eval_batch_size: usize,
    pub threshold: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.003,
            batch_size: 256,
            epochs: 100,
            early_stop_patience: 10,
            early_stopping: true,
            weight_decay: 1e-4,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            eval_batch_size: 1024,
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidInput(msg));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if self.batch_size == 0 || self.epochs == 0 || self.eval_batch_size == 0 {
            return fail("batch_size, epochs and eval_batch_size must be positive".into());
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return fail(format!("weight_decay must be >= 0, got {}", self.weight_decay));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return fail(format!("betas must be in [0, 1), got ({}, {})", self.beta1, self.beta2));
        }
        if !(self.epsilon > 0.0) {
            return fail(format!("epsilon must be positive, got {}", self.epsilon));
        }
        Ok(())
    }
}

/// First and second moment estimates, one pair per parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub step: u64,
}

impl AdamState {
    pub fn zeros_like(params: &[Tensor]) -> Self {
        let zeros: Vec<Tensor> = params.iter().map(|p| Tensor::zeros(p.rows(), p.cols())).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl From<&TrainConfig> for AdamConfig {
    fn from(c: &TrainConfig) -> Self {
        Self {
            lr: c.learning_rate,
            beta1: c.beta1,
            beta2: c.beta2,
            eps: c.epsilon,
            weight_decay: c.weight_decay,
        }
    }
}

/// One bias-corrected Adam update. The penalty `η‖θ‖²` enters as `2ηθ` added
/// to each gradient.
pub fn adam_step(params: &mut [Tensor], grads: &[Tensor], state: &mut AdamState, hp: &AdamConfig) -> Result<()> {
    if grads.len() != params.len() || state.m.len() != params.len() || state.v.len() != params.len() {
        return Err(Error::shape(
            "adam_step",
            format!(
                "{} params, {} grads, {}/{} moments",
                params.len(),
                grads.len(),
                state.m.len(),
                state.v.len()
            ),
        ));
    }
    for (i, p) in params.iter().enumerate() {
        if grads[i].shape() != p.shape() || state.m[i].shape() != p.shape() || state.v[i].shape() != p.shape() {
            return Err(Error::shape(
                "adam_step",
                format!("tensor {i}: param {:?}, grad {:?}", p.shape(), grads[i].shape()),
            ));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - hp.beta1.powi(t);
    let c2 = 1.0 - hp.beta2.powi(t);
    for (i, p) in params.iter_mut().enumerate() {
        let (m, v) = (state.m[i].data_mut(), state.v[i].data_mut());
        for (k, theta) in p.data_mut().iter_mut().enumerate() {
            let g = grads[i].data()[k] + 2.0 * hp.weight_decay * *theta;
            m[k] = hp.beta1 * m[k] + (1.0 - hp.beta1) * g;
            v[k] = hp.beta2 * v[k] + (1.0 - hp.beta2) * g * g;
            *theta -= hp.lr * (m[k] / c1) / ((v[k] / c2).sqrt() + hp.eps);
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean over batches of `BCE + η‖Θ‖²`, with Θ taken before each update.
    pub train_loss: f64,
    pub valid: Option<EvalResult>,
}

/// Counts of work done, independent of wall-clock time.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkCounters {
    pub steps: usize,
    pub edges: usize,
    pub env_edges: usize,
    pub mixed_edges: usize,
    pub dropped_edges: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub model_config: ModelConfig,
    pub train_config: TrainConfig,
    pub num_parameters: usize,
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were returned (0-based).
    pub best_epoch: usize,
    pub best_valid_auc: Option<f64>,
    pub stopped_early: bool,
    pub test: Option<EvalResult>,
    pub work: WorkCounters,
    /// Wall-clock seconds per epoch, training and validation included.
    pub epoch_seconds: Vec<f64>,
}

impl TrainReport {
    pub fn total_seconds(&self) -> f64 {
        self.epoch_seconds.iter().sum()
    }

    /// The report with timings cleared; equal across identical runs.
    pub fn without_timing(&self) -> TrainReport {
        TrainReport {
            epoch_seconds: Vec::new(),
            ..self.clone()
        }
    }
}

/// `BCE + η‖Θ‖²` on the labeled nodes of `batch`.
#[allow(clippy::too_many_arguments)]
pub fn objective(
    graph: &MultiRelationGraph,
    observed: &[Label],
    batch: &[NodeId],
    params: &CatGnnParams,
    config: &ModelConfig,
    weight_decay: f64,
    mode: Mode,
    seed: u64,
) -> Result<f64> {
    let logits = forward(graph, observed, batch, params, config, mode, seed)?;
    let (targets, mask) = targets(graph, batch);
    let mut tape = Tape::new();
    let z = tape.constant(Tensor::column(logits));
    let bce = tape.bce_with_logits(z, &targets, &mask)?;
    Ok(tape.value(bce).data()[0] + weight_decay * params.l2_norm_sq())
}

/// Masked BCE of one batch and its gradient for every parameter, in
/// [`CatGnnParams::ids`] order. The weight-decay term is left to the optimizer.
pub struct BatchGradients {
    pub loss: f64,
    pub grads: Vec<Tensor>,
    pub work: WorkCounters,
}

#[allow(clippy::too_many_arguments)]
pub fn batch_gradients(
    graph: &MultiRelationGraph,
    observed: &[Label],
    batch: &[NodeId],
    params: &CatGnnParams,
    config: &ModelConfig,
    mode: Mode,
    seed: u64,
) -> Result<BatchGradients> {
    let (targets, mask) = targets(graph, batch);
    let mut tape = Tape::new();
    let vars = ParamVars::register(&mut tape, params, true);
    let trace = forward_on_tape(&mut tape, &vars, graph, observed, batch, params, config, mode, seed)?;
    let loss = tape.bce_with_logits(trace.logits, &targets, &mask)?;
    let value = tape.value(loss).data()[0];
    let grads = tape.backward(loss)?;
    let grads = params
        .ids()
        .map(|id| {
            grads
                .get(id)
                .cloned()
                .unwrap_or_else(|| Tensor::zeros(params.get(id).rows(), params.get(id).cols()))
        })
        .collect();
    Ok(BatchGradients {
        loss: value,
        grads,
        work: WorkCounters {
            steps: 1,
            edges: trace.edges,
            env_edges: trace.env_edges,
            mixed_edges: trace.mixed_edges,
            dropped_edges: trace.dropped_edges,
        },
    })
}

fn targets(graph: &MultiRelationGraph, batch: &[NodeId]) -> (Vec<f64>, Vec<bool>) {
    batch
        .iter()
        .map(|&v| match graph.labels()[v].target() {
            Some(y) => (y, true),
            None => (0.0, false),
        })
        .unzip()
}

/// Fraud probabilities for `nodes`, in chunks of `chunk`.
pub fn predict(
    graph: &MultiRelationGraph,
    observed: &[Label],
    nodes: &[NodeId],
    params: &CatGnnParams,
    config: &ModelConfig,
    chunk: usize,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(nodes.len());
    for part in nodes.chunks(chunk.max(1)) {
        let logits = forward(graph, observed, part, params, config, Mode::Eval, 0)?;
        out.extend(logits.into_iter().map(sigmoid));
    }
    Ok(out)
}

/// Metrics over the labeled members of `nodes`; `None` if they do not contain
/// both classes.
pub fn evaluate_nodes(
    graph: &MultiRelationGraph,
    observed: &[Label],
    nodes: &[NodeId],
    params: &CatGnnParams,
    config: &ModelConfig,
    chunk: usize,
    threshold: f64,
) -> Result<Option<EvalResult>> {
    let labeled: Vec<NodeId> = nodes.iter().copied().filter(|&v| graph.labels()[v].is_labeled()).collect();
    let truth: Vec<bool> = labeled.iter().map(|&v| graph.labels()[v] == Label::Fraud).collect();
    if !truth.iter().any(|&y| y) || truth.iter().all(|&y| y) {
        return Ok(None);
    }
    let scores = predict(graph, observed, &labeled, params, config, chunk)?;
    evaluate(&scores, &truth, threshold).map(Some)
}

/// Trains from a fresh initialization and returns the parameters of the best
/// validation epoch (the last epoch when validation AUC is undefined).
pub fn train(
    graph: &MultiRelationGraph,
    split: &DatasetSplit,
    model_config: &ModelConfig,
    train_config: &TrainConfig,
) -> Result<(CatGnnParams, TrainReport)> {
    model_config.validate()?;
    train_config.validate()?;
    split.validate(graph)?;
    if split.train.is_empty() || split.train.iter().any(|&v| !graph.labels()[v].is_labeled()) {
        return Err(Error::InvalidSplit("training needs a non-empty set of labeled nodes".into()));
    }

    let observed = graph.observed_labels(&split.train);
    let mut rng = ChaCha8Rng::seed_from_u64(train_config.seed);
    let mut params = CatGnnParams::init(graph.feature_dim(), model_config, rng.gen())?;
    let mut state = AdamState::zeros_like(params.tensors());
    let hp = AdamConfig::from(train_config);

    let mut order = split.train.clone();
    let mut epochs = Vec::new();
    let mut epoch_seconds = Vec::new();
    let mut work = WorkCounters::default();
    let mut best: Option<(f64, usize, CatGnnParams)> = None;
    let mut stopped_early = false;

    for epoch in 0..train_config.epochs {
        let started = Instant::now();
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0;
        for (b, batch) in order.chunks(train_config.batch_size).enumerate() {
            let at = |e: Error| match e {
                Error::NumericsError(op) => Error::NumericsError(format!("{op} (epoch {epoch}, batch {b})")),
                other => other,
            };
            let bg = batch_gradients(graph, &observed, batch, &params, model_config, Mode::Train, rng.gen()).map_err(at)?;
            let value = bg.loss + train_config.weight_decay * params.l2_norm_sq();
            if !value.is_finite() {
                return Err(Error::NumericsError(format!("loss (epoch {epoch}, batch {b})")));
            }
            let dense = bg.grads;
            let mut tensors = params.tensors().to_vec();
            adam_step(&mut tensors, &dense, &mut state, &hp)?;
            params = CatGnnParams::from_tensors(graph.feature_dim(), model_config, tensors).map_err(at)?;

            loss_sum += value;
            batches += 1;
            work.steps += 1;
            work.edges += bg.work.edges;
            work.env_edges += bg.work.env_edges;
            work.mixed_edges += bg.work.mixed_edges;
            work.dropped_edges += bg.work.dropped_edges;
        }

        let valid = evaluate_nodes(
            graph,
            &observed,
            &split.valid,
            &params,
            model_config,
            train_config.eval_batch_size,
            train_config.threshold,
        )?;
        epochs.push(EpochRecord {
            epoch,
            train_loss: loss_sum / batches as f64,
            valid,
        });
        epoch_seconds.push(started.elapsed().as_secs_f64());

        match valid {
            Some(v) if train_config.early_stopping => {
                if best.as_ref().is_none_or(|(auc, _, _)| v.auc > *auc) {
                    best = Some((v.auc, epoch, params.clone()));
                } else if epoch - best.as_ref().map_or(0, |b| b.1) >= train_config.early_stop_patience {
                    stopped_early = true;
                    break;
                }
            }
            _ => {}
        }
    }

    let last_epoch = epochs.len() - 1;
    let (best_valid_auc, best_epoch, params) = match best {
        Some((auc, epoch, p)) => (Some(auc), epoch, p),
        None => (epochs[last_epoch].valid.map(|v| v.auc), last_epoch, params),
    };
    let test = evaluate_nodes(
        graph,
        &observed,
        &split.test,
        &params,
        model_config,
        train_config.eval_batch_size,
        train_config.threshold,
    )?;
    let report = TrainReport {
        model_config: model_config.clone(),
        train_config: train_config.clone(),
        num_parameters: params.num_parameters(),
        epochs,
        best_epoch,
        best_valid_auc,
        stopped_early,
        test,
        work,
        epoch_seconds,
    };
    Ok((params, report))
}
