//! The training loop: seeded shuffling, per-sample tapes, fixed-order
//! gradient reduction, and two optimizers.
//!
//! Determinism contract: (dataset, config, seed) fully determines the
//! resulting parameters. Per-sample gradients inside a batch may be
//! computed on worker threads, but they are reduced in sample order, so the
//! thread count never changes a single bit of the result.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::attributes::{ClassDictionary, Split};
use crate::audio::MelSpectrogram;
use crate::loss::{total_loss, LossConfig, LossError, LossMode, SeenSavMatrix};
use crate::model::{init_params, EncoderConfig, ModelConfig, ModelError, ModelParams};
use crate::tape::GradientTape;
use crate::tensor::{Tensor, TensorError};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("training contract violation: {0}")]
    Contract(String),
    #[error("training configuration error: {0}")]
    Config(String),
    #[error("non-finite loss at epoch {epoch}, batch {batch}: {detail}")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        detail: String,
    },
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    SgdMomentum,
    Adam,
}

impl OptimizerKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "sgd-momentum" => Some(OptimizerKind::SgdMomentum),
            "adam" => Some(OptimizerKind::Adam),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            OptimizerKind::SgdMomentum => "sgd-momentum",
            OptimizerKind::Adam => "adam",
        }
    }
}

/// Everything a training run depends on.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    pub loss: LossConfig,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 16,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::Adam,
            seed: 0,
            loss: LossConfig::sm_local(),
            model: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    /// Parse the line-based `key = value` config format. Keys omitted fall
    /// back to defaults; `loss.lambda` defaults per mode (1.0 with bce,
    /// 10.0 with sm) unless given explicitly.
    pub fn parse(text: &str) -> Result<Self, TrainError> {
        let mut cfg = TrainConfig::default();
        let mut mode: Option<LossMode> = None;
        let mut use_local: Option<bool> = None;
        let mut lambda: Option<f64> = None;

        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                TrainError::Config(format!("line {line_no}: expected `key = value`"))
            })?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |detail: &str| TrainError::Config(format!("line {line_no}: {detail}"));
            match key {
                "epochs" => {
                    cfg.epochs = value.parse().map_err(|_| bad("bad epochs"))?;
                }
                "batch_size" => {
                    cfg.batch_size = value.parse().map_err(|_| bad("bad batch_size"))?;
                }
                "learning_rate" => {
                    cfg.learning_rate = value.parse().map_err(|_| bad("bad learning_rate"))?;
                }
                "optimizer" => {
                    cfg.optimizer = OptimizerKind::parse(value)
                        .ok_or_else(|| bad(&format!("unknown optimizer `{value}`")))?;
                }
                "seed" => {
                    cfg.seed = value.parse().map_err(|_| bad("bad seed"))?;
                }
                "loss.mode" => {
                    mode = Some(
                        LossMode::parse(value)
                            .ok_or_else(|| bad(&format!("unknown loss mode `{value}`")))?,
                    );
                }
                "loss.use_local" => {
                    use_local = Some(match value {
                        "true" => true,
                        "false" => false,
                        _ => return Err(bad("loss.use_local must be true or false")),
                    });
                }
                "loss.lambda" => {
                    lambda = Some(value.parse().map_err(|_| bad("bad loss.lambda"))?);
                }
                "encoder.blocks" => {
                    cfg.model.encoder =
                        EncoderConfig::parse(value).map_err(|e| bad(&e.to_string()))?;
                }
                "basemod.hidden" => {
                    cfg.model.basemod_hidden =
                        value.parse().map_err(|_| bad("bad basemod.hidden"))?;
                }
                _ => return Err(bad(&format!("unknown key `{key}`"))),
            }
        }

        let mode = mode.unwrap_or(LossMode::Sm);
        let use_local = use_local.unwrap_or(true);
        let lambda = lambda.unwrap_or(match mode {
            LossMode::Bce => 1.0,
            LossMode::Sm => 10.0,
        });
        cfg.loss = LossConfig::new(mode, use_local, lambda)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, TrainError> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    fn validate(&self) -> Result<(), TrainError> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(TrainError::Config(
                "epochs and batch_size must be positive".into(),
            ));
        }
        if self.learning_rate < 0.0 || self.learning_rate.is_nan() {
            return Err(TrainError::Config(format!(
                "bad learning_rate {}",
                self.learning_rate
            )));
        }
        self.model.encoder.feature_shape()?;
        Ok(())
    }

    /// Canonical echo of every key, stored inside checkpoints.
    pub fn to_config_string(&self) -> String {
        format!(
            "epochs = {}\nbatch_size = {}\nlearning_rate = {}\noptimizer = {}\nseed = {}\n\
             loss.mode = {}\nloss.use_local = {}\nloss.lambda = {}\nencoder.blocks = {}\n\
             basemod.hidden = {}\n",
            self.epochs,
            self.batch_size,
            self.learning_rate,
            self.optimizer.as_str(),
            self.seed,
            self.loss.mode.as_str(),
            self.loss.use_local,
            self.loss.lambda,
            self.model.encoder.to_config_string(),
            self.model.basemod_hidden,
        )
    }
}

/// SGD with classical momentum (mu = 0.9) or Adam (0.9, 0.999, 1e-8).
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    /// Momentum buffers (sgd) or first moments (adam), one per tensor.
    m: Vec<Vec<f64>>,
    /// Second moments (adam only).
    v: Vec<Vec<f64>>,
    t: u64,
}

const MOMENTUM: f64 = 0.9;
const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, params: &ModelParams) -> Self {
        let sizes: Vec<usize> = params.tensors().iter().map(|(_, t)| t.numel()).collect();
        let m = sizes.iter().map(|&n| vec![0.0; n]).collect();
        let v = match kind {
            OptimizerKind::Adam => sizes.iter().map(|&n| vec![0.0; n]).collect(),
            OptimizerKind::SgdMomentum => Vec::new(),
        };
        Self {
            kind,
            lr,
            m,
            v,
            t: 0,
        }
    }

    /// Apply one update. `grads` must align with `params.tensors()` order.
    pub fn step(&mut self, params: &mut ModelParams, grads: &[Tensor]) -> Result<(), TrainError> {
        let mut slots = params.tensors_mut();
        if slots.len() != grads.len() {
            return Err(TrainError::Contract(format!(
                "{} gradients for {} parameter tensors",
                grads.len(),
                slots.len()
            )));
        }
        self.t += 1;
        for (i, (name, tensor)) in slots.iter_mut().enumerate() {
            let g = grads[i].data();
            if g.len() != tensor.numel() {
                return Err(TrainError::Contract(format!(
                    "gradient shape mismatch for `{name}`"
                )));
            }
            let theta = tensor.data_mut();
            match self.kind {
                OptimizerKind::SgdMomentum => {
                    let m = &mut self.m[i];
                    for ((th, &gk), mk) in theta.iter_mut().zip(g).zip(m.iter_mut()) {
                        *mk = MOMENTUM * *mk + gk;
                        *th -= self.lr * *mk;
                    }
                }
                OptimizerKind::Adam => {
                    let bc1 = 1.0 - ADAM_BETA1.powi(self.t as i32);
                    let bc2 = 1.0 - ADAM_BETA2.powi(self.t as i32);
                    let m = &mut self.m[i];
                    let v = &mut self.v[i];
                    for (((th, &gk), mk), vk) in
                        theta.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut())
                    {
                        *mk = ADAM_BETA1 * *mk + (1.0 - ADAM_BETA1) * gk;
                        *vk = ADAM_BETA2 * *vk + (1.0 - ADAM_BETA2) * gk * gk;
                        let m_hat = *mk / bc1;
                        let v_hat = *vk / bc2;
                        *th -= self.lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
                    }
                }
            }
        }
        Ok(())
    }
}

/// Final parameters plus the per-epoch mean loss trace.
#[derive(Debug)]
pub struct TrainResult {
    pub params: ModelParams,
    pub trace: Vec<f64>,
}

/// Train on seen-class samples. `on_epoch` receives (epoch index, mean
/// loss) after every epoch; pass a no-op closure when the trace in the
/// result is enough.
pub fn train(
    dataset: &[(MelSpectrogram, String)],
    dict: &ClassDictionary,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<TrainResult, TrainError> {
    if dataset.is_empty() {
        return Err(TrainError::Contract("empty training dataset".into()));
    }
    for (_, label) in dataset {
        match dict.get(label) {
            Some((_, Split::Seen)) => {}
            Some((_, Split::Unseen)) => {
                return Err(TrainError::Contract(format!(
                    "training sample labeled `{label}` is tagged unseen; zero-shot discipline forbids training on it"
                )));
            }
            None => {
                return Err(TrainError::Contract(format!(
                    "training label `{label}` is not in the dictionary"
                )));
            }
        }
    }
    let seen = SeenSavMatrix::build(dict)?;

    let mut params = init_params(&config.model, config.seed)?;
    let mut optimizer = Optimizer::new(config.optimizer, config.learning_rate, &params);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut trace = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (batch_idx, batch) in order.chunks(config.batch_size).enumerate() {
            let per_sample: Vec<Result<(f64, Vec<Tensor>), TrainError>> = batch
                .par_iter()
                .map(|&i| sample_grad(&params, &dataset[i], dict, &seen, &config.loss))
                .collect();

            let mut batch_loss = 0.0;
            let mut acc: Option<Vec<Tensor>> = None;
            for result in per_sample {
                let (loss, grads) = result.map_err(|e| match e {
                    TrainError::Tensor(TensorError::NonFinite { op, index }) => {
                        TrainError::NonFiniteLoss {
                            epoch,
                            batch: batch_idx,
                            detail: format!("non-finite value in op `{op}` at index {index}"),
                        }
                    }
                    other => other,
                })?;
                batch_loss += loss;
                match &mut acc {
                    None => acc = Some(grads),
                    Some(acc) => {
                        for (a, g) in acc.iter_mut().zip(&grads) {
                            for (av, gv) in a.data_mut().iter_mut().zip(g.data()) {
                                *av += gv;
                            }
                        }
                    }
                }
            }
            let n = batch.len() as f64;
            batch_loss /= n;
            if !batch_loss.is_finite() {
                return Err(TrainError::NonFiniteLoss {
                    epoch,
                    batch: batch_idx,
                    detail: format!("batch mean loss is {batch_loss}"),
                });
            }
            let mut grads = acc.expect("non-empty batch");
            for g in &mut grads {
                for v in g.data_mut() {
                    *v /= n;
                }
            }
            optimizer.step(&mut params, &grads)?;
            epoch_loss += batch_loss * n;
        }
        let mean = epoch_loss / dataset.len() as f64;
        trace.push(mean);
        on_epoch(epoch, mean);
    }

    Ok(TrainResult { params, trace })
}

/// Forward + backward for one sample on its own tape. Returns the scalar
/// loss and gradients in `params.tensors()` order (zeros where a parameter
/// does not participate, e.g. prototypes when the local term is off).
fn sample_grad(
    params: &ModelParams,
    sample: &(MelSpectrogram, String),
    dict: &ClassDictionary,
    seen: &SeenSavMatrix,
    loss_config: &LossConfig,
) -> Result<(f64, Vec<Tensor>), TrainError> {
    let (spec, label) = sample;
    let mut tape = GradientTape::new();
    let bound = params.bind(&mut tape);
    let pass = bound.forward(&mut tape, spec)?;
    let loss = total_loss(&mut tape, loss_config, pass.g, pass.h, label, dict, seen)?;
    let loss_value = tape.value(loss).scalar_value();
    let mut grads = tape.backward(loss)?;
    let out = bound
        .param_ids()
        .iter()
        .enumerate()
        .map(|(i, &id)| match grads.take(id) {
            Some(g) => g,
            None => {
                let dims = params.tensors()[i].1.dims().to_vec();
                Tensor::zeros(dims).expect("valid parameter dims")
            }
        })
        .collect();
    Ok((loss_value, out))
}
