//! Maximum-likelihood training of flows with Adam.
//!
//! The objective is the mean negative log-likelihood of a minibatch. Its
//! gradient with respect to every conditioner weight, and to `θ` for the
//! tail-adaptive source, comes from one reverse sweep per sample.

mod adam;

use std::time::Instant;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autograd::{NodeId, Tape};
use crate::flow::{ConditionerSpec, FlowError, FlowModel, FlowStack, LayerKind, Source, TafSource};
use crate::tailquant::{estimate_gamma, norm_reduce, FitWindow, GammaMethod, TailError, TailProfile};

pub use adam::{AdamHyper, AdamState};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("non-finite log-likelihood at batch row {index}")]
    NonFiniteLoss { index: usize },
    #[error("training diverged in epoch {epoch}: {reason}")]
    Diverged { epoch: usize, reason: String, partial: Box<TrainHistory> },
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Tail(#[from] TailError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceMode {
    Gaussian,
    Taf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Learning rate of the source parameter `θ`; `None` uses `learning_rate`.
    pub source_learning_rate: Option<f64>,
    pub adam: AdamHyper,
    pub blocks: usize,
    pub layer_kind: LayerKind,
    pub conditioner: ConditionerSpec,
    pub source_mode: SourceMode,
    pub initial_nu: f64,
    pub seed: u64,
    pub split_ratio: (usize, usize, usize),
    pub gamma_window: FitWindow,
    pub gamma_samples: usize,
    /// Mean NLL above which training is aborted.
    pub divergence_threshold: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 40,
            batch_size: 128,
            learning_rate: 1e-3,
            source_learning_rate: Some(DEFAULT_SOURCE_LEARNING_RATE),
            adam: AdamHyper::default(),
            blocks: 5,
            layer_kind: LayerKind::AffineCoupling,
            conditioner: ConditionerSpec::default(),
            source_mode: SourceMode::Gaussian,
            initial_nu: crate::flow::DEFAULT_NU,
            seed: 0,
            split_ratio: (2, 1, 1),
            gamma_window: FitWindow::default(),
            gamma_samples: 10_000,
            divergence_threshold: 1e6,
        }
    }
}

/// Default step size for `θ`.
pub const DEFAULT_SOURCE_LEARNING_RATE: f64 = 0.05;

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if self.batch_size == 0 {
            return bad("batch size must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        if let Some(r) = self.source_learning_rate {
            if !(r > 0.0 && r.is_finite()) {
                return bad("source learning rate must be positive");
            }
        }
        let (a, b, c) = self.split_ratio;
        if a == 0 || b == 0 || c == 0 {
            return bad("split ratio entries must be positive");
        }
        if self.layer_kind == LayerKind::Permutation {
            return bad("blocks need a parameterised layer kind");
        }
        if !(self.initial_nu >= 1.0) {
            return bad("initial degrees of freedom must be at least one");
        }
        if self.gamma_samples < crate::tailquant::MIN_SAMPLES {
            return bad("too few samples for tail estimation");
        }
        Ok(())
    }

    /// The train/validation/test partition [`train`] uses for `data`.
    pub fn split(&self, data: ArrayView2<f64>) -> Result<Split, TrainError> {
        split_dataset(data, self.split_ratio, derive_seed(self.seed, 0))
    }

    pub fn build_model(&self, dim: usize) -> Result<FlowModel, TrainError> {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, 1));
        let stack = FlowStack::blocks(dim, self.blocks, self.layer_kind, &self.conditioner, &mut rng)?;
        let source = match self.source_mode {
            SourceMode::Gaussian => Source::gaussian(dim),
            SourceMode::Taf => Source::TailAdaptive(TafSource::with_nu(self.initial_nu, dim)?),
        };
        Ok(FlowModel::new(stack, source)?)
    }
}

/// Per-epoch losses, kept even when training aborts.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub train_nll: Vec<f64>,
    pub val_nll: Vec<f64>,
    pub nu: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub config: TrainConfig,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    /// Validation NLL of the initial model, before any step.
    pub initial_val_nll: f64,
    pub history: TrainHistory,
    pub test_nll: f64,
    pub nu: Option<f64>,
    pub gamma_source: TailProfile,
    pub gamma_target: TailProfile,
    pub gamma_model: TailProfile,
    pub wall_clock_seconds: f64,
}

/// Train/validation/test partition.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Array2<f64>,
    pub val: Array2<f64>,
    pub test: Array2<f64>,
}

/// SplitMix64 of `seed` combined with a stream tag.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Shuffled partition with sizes `⌊n·a/(a+b+c)⌋` etc.; the remainder goes to
/// the training set.
pub fn split_dataset(data: ArrayView2<f64>, ratio: (usize, usize, usize), seed: u64) -> Result<Split, TrainError> {
    let (a, b, c) = ratio;
    let total = a + b + c;
    if a == 0 || b == 0 || c == 0 {
        return Err(TrainError::Config(format!("degenerate split ratio {ratio:?}")));
    }
    let n = data.nrows();
    if n < total {
        return Err(TrainError::Config(format!("{n} rows cannot be split {a}:{b}:{c}")));
    }
    let n_val = n * b / total;
    let n_test = n * c / total;
    let n_train = n - n_val - n_test;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let take = |r: &[usize]| data.select(Axis(0), r);
    Ok(Split {
        train: take(&idx[..n_train]),
        val: take(&idx[n_train..n_train + n_val]),
        test: take(&idx[n_train + n_val..]),
    })
}

/// Reusable scratch space for [`nll_batch`].
#[derive(Debug, Default)]
pub struct Workspace {
    tape: Tape,
    adj: Vec<f64>,
    leaves: Vec<NodeId>,
}

/// Mean negative log-likelihood of `batch` and its gradient with respect to
/// the flat model parameters.
pub fn nll_batch(model: &FlowModel, batch: ArrayView2<f64>) -> Result<(f64, Vec<f64>), TrainError> {
    nll_batch_with(model, &model.params(), batch, &mut Workspace::default())
}

pub fn nll_batch_with(
    model: &FlowModel,
    params: &[f64],
    batch: ArrayView2<f64>,
    ws: &mut Workspace,
) -> Result<(f64, Vec<f64>), TrainError> {
    let n = batch.nrows();
    if n == 0 {
        return Err(TrainError::Config("empty batch".into()));
    }
    let p = params.len();
    let mut grads = vec![0.0; p];
    let mut loss = 0.0;
    let inv_n = 1.0 / n as f64;
    let mut x = vec![0.0; batch.ncols()];
    for (i, row) in batch.rows().into_iter().enumerate() {
        ws.tape.clear();
        ws.leaves.clear();
        // Parameters are the first `p` nodes, so their adjoints are adj[..p].
        for &v in params {
            ws.leaves.push(ws.tape.leaf(v));
        }
        x.iter_mut().zip(row.iter()).for_each(|(d, s)| *d = *s);
        let lp = match model.log_prob_on(&mut ws.tape, &ws.leaves, &x) {
            Ok(lp) => lp,
            Err(FlowError::NonFinite { .. }) => return Err(TrainError::NonFiniteLoss { index: i }),
            Err(e) => return Err(e.into()),
        };
        let v = ws.tape.value_of(lp);
        if !v.is_finite() {
            return Err(TrainError::NonFiniteLoss { index: i });
        }
        loss -= v * inv_n;
        ws.tape.backward_into(lp, &mut ws.adj);
        for (g, a) in grads.iter_mut().zip(&ws.adj[..p]) {
            *g -= a * inv_n;
        }
    }
    Ok((loss, grads))
}

/// Mean negative log-likelihood without gradients.
pub fn mean_nll(model: &FlowModel, data: ArrayView2<f64>) -> Result<f64, TrainError> {
    let mut acc = 0.0;
    for (i, row) in data.rows().into_iter().enumerate() {
        let lp = match model.log_prob(row.as_slice().expect("standard layout")) {
            Ok(v) => v,
            Err(FlowError::NonFinite { .. }) => return Err(TrainError::NonFiniteLoss { index: i }),
            Err(e) => return Err(e.into()),
        };
        if !lp.is_finite() {
            return Err(TrainError::NonFiniteLoss { index: i });
        }
        acc -= lp;
    }
    Ok(acc / data.nrows() as f64)
}

/// Tail coefficient of the row norms of `points`.
pub fn gamma_of_points(points: &Array2<f64>, window: FitWindow) -> Result<TailProfile, TrainError> {
    Ok(estimate_gamma(&norm_reduce(points), window, GammaMethod::default())?)
}

/// Trains a fresh model built from `config` on `data`.
pub fn train(config: &TrainConfig, data: &Array2<f64>) -> Result<(FlowModel, TrainReport), TrainError> {
    config.validate()?;
    if let Some((i, _)) = data.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(TrainError::Config(format!("data entry {i} is not finite")));
    }
    let start = Instant::now();
    if data.ncols() == 0 {
        return Err(TrainError::Config("data has no columns".into()));
    }
    let data_owned = data.as_standard_layout().into_owned();
    let split = config.split(data_owned.view())?;
    let mut model = config.build_model(data.ncols())?;

    let n_stack = model.stack.n_params();
    let source_lr = config.source_learning_rate.unwrap_or(config.learning_rate);
    let lr = |i: usize| if i < n_stack { config.learning_rate } else { source_lr };

    let mut params = model.params();
    let mut adam = AdamState::new(params.len());
    let mut ws = Workspace::default();
    let mut history = TrainHistory::default();
    let initial_val_nll = mean_nll(&model, split.val.view())?;

    let n_train = split.train.nrows();
    let mut order: Vec<usize> = (0..n_train).collect();
    for epoch in 0..config.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 1000 + epoch as u64));
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch = split.train.select(Axis(0), chunk);
            let (loss, grads) = match nll_batch_with(&model, &params, batch.view(), &mut ws) {
                Ok(r) => r,
                Err(TrainError::NonFiniteLoss { index }) => {
                    return Err(diverged(epoch, format!("non-finite log-likelihood at training row {}", chunk[index]), history));
                }
                Err(e) => return Err(e),
            };
            if !(loss < config.divergence_threshold) || grads.iter().any(|g| !g.is_finite()) {
                return Err(diverged(epoch, format!("minibatch NLL {loss:.3e}"), history));
            }
            epoch_loss += loss * chunk.len() as f64;
            adam.step_with(&mut params, &grads, &config.adam, lr);
            model.set_params(&params)?;
        }
        let train_nll = epoch_loss / n_train as f64;
        let val_nll = match mean_nll(&model, split.val.view()) {
            Ok(v) => v,
            Err(e) => return Err(diverged(epoch, e.to_string(), history)),
        };
        history.train_nll.push(train_nll);
        history.val_nll.push(val_nll);
        if let Some(nu) = model.source.nu() {
            history.nu.push(nu);
        }
        log::info!("epoch {epoch}: train NLL {train_nll:.4}, validation NLL {val_nll:.4}");
        if !(val_nll < config.divergence_threshold) {
            return Err(diverged(epoch, format!("validation NLL {val_nll:.3e}"), history));
        }
    }

    let test_nll = mean_nll(&model, split.test.view())?;
    let w = config.gamma_window;
    let m = config.gamma_samples;
    let gamma_source = gamma_of_points(&model.source.sample(derive_seed(config.seed, 2), m), w)?;
    let target_rows = data_owned.nrows().min(m);
    let gamma_target = gamma_of_points(&data_owned.slice(ndarray::s![..target_rows, ..]).to_owned(), w)?;
    let gamma_model = gamma_of_points(&model.sample(derive_seed(config.seed, 3), m)?, w)?;

    let report = TrainReport {
        config: config.clone(),
        n_train,
        n_val: split.val.nrows(),
        n_test: split.test.nrows(),
        initial_val_nll,
        history,
        test_nll,
        nu: model.source.nu(),
        gamma_source,
        gamma_target,
        gamma_model,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    };
    Ok((model, report))
}

fn diverged(epoch: usize, reason: String, history: TrainHistory) -> TrainError {
    log::error!("training diverged in epoch {epoch}: {reason}");
    TrainError::Diverged { epoch, reason, partial: Box::new(history) }
}

impl TrainReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialise")
    }
}
