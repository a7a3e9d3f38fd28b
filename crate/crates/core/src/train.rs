//! Mini-batch gradient descent on the mean CTC loss of the fusion module and
//! classifier head. Lip features are fixed inputs.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ctc::{ctc_loss, greedy_decode, CtcError};
use crate::fusion::{
    check_inputs, forward, head_logits, project_hand, FusionError, FusionParams, HandMatrix,
    LipFeatures,
};

#[derive(Debug, Error, PartialEq)]
pub enum TrainError {
    #[error("training set is empty")]
    Empty,
    #[error("sample {index}: {source}")]
    Sample {
        index: usize,
        #[source]
        source: FusionError,
    },
    #[error("sample {index}: {source}")]
    Ctc {
        index: usize,
        #[source]
        source: CtcError,
    },
    #[error("loss became non-finite in epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("invalid training config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Worker threads for per-sample gradients; results do not depend on it.
    pub jobs: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            learning_rate: 0.002,
            batch_size: 8,
            seed: 0,
            jobs: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.batch_size == 0 || self.jobs == 0 {
            return Err(TrainError::Config(
                "batch_size and jobs must be >= 1".into(),
            ));
        }
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(TrainError::Config(format!(
                "learning_rate must be finite and >= 0, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    pub lip: LipFeatures,
    pub hand: HandMatrix,
    /// Vocabulary indices, no blanks.
    pub target: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub params: FusionParams,
    /// Mean per-sample loss of each epoch.
    pub epoch_losses: Vec<f64>,
}

/// Loss of one sample and its gradient in parameter layout.
pub fn sample_gradient(
    sample: &TrainingSample,
    params: &FusionParams,
) -> Result<(f64, FusionParams), TrainError> {
    check_inputs(&sample.lip, &sample.hand, params)
        .map_err(|source| TrainError::Sample { index: 0, source })?;
    let projected = project_hand(&sample.hand, params);
    let mut fused = sample.lip.to_matrix();
    fused.axpy(params.lambda, &projected);
    let logits = head_logits(&fused, params);
    let (loss, g_logits) =
        ctc_loss(&logits, &sample.target).map_err(|source| TrainError::Ctc { index: 0, source })?;

    let d = params.dim();
    let mut grad = FusionParams::zeros(d);
    fused.add_tmatmul_into(&g_logits, &mut grad.head_weights);
    grad.head_bias = g_logits.column_sums();

    let g_fused = g_logits.matmul_t(&params.head_weights);
    grad.lambda = g_fused
        .data()
        .iter()
        .zip(projected.data())
        .map(|(a, b)| a * b)
        .sum();
    sample
        .hand
        .matrix()
        .add_tmatmul_into(&g_fused, &mut grad.linear_weights);
    grad.linear_weights.scale(params.lambda);
    grad.linear_bias = g_fused
        .column_sums()
        .into_iter()
        .map(|v| v * params.lambda)
        .collect();
    Ok((loss, grad))
}

fn add_into(acc: &mut FusionParams, g: &FusionParams) {
    acc.linear_weights.axpy(1.0, &g.linear_weights);
    acc.head_weights.axpy(1.0, &g.head_weights);
    acc.lambda += g.lambda;
    for (a, b) in acc.linear_bias.iter_mut().zip(&g.linear_bias) {
        *a += b;
    }
    for (a, b) in acc.head_bias.iter_mut().zip(&g.head_bias) {
        *a += b;
    }
}

fn step(params: &mut FusionParams, grad: &FusionParams, rate: f64) {
    params.linear_weights.axpy(-rate, &grad.linear_weights);
    params.head_weights.axpy(-rate, &grad.head_weights);
    params.lambda -= rate * grad.lambda;
    for (p, g) in params.linear_bias.iter_mut().zip(&grad.linear_bias) {
        *p -= rate * g;
    }
    for (p, g) in params.head_bias.iter_mut().zip(&grad.head_bias) {
        *p -= rate * g;
    }
}

/// Per-sample gradients for `batch`, returned in batch order.
fn batch_gradients(
    samples: &[TrainingSample],
    batch: &[usize],
    params: &FusionParams,
    jobs: usize,
) -> Vec<Result<(f64, FusionParams), TrainError>> {
    let tag = |index: usize, r: Result<(f64, FusionParams), TrainError>| {
        r.map_err(|e| match e {
            TrainError::Sample { source, .. } => TrainError::Sample { index, source },
            TrainError::Ctc { source, .. } => TrainError::Ctc { index, source },
            other => other,
        })
    };
    if jobs <= 1 || batch.len() <= 1 {
        return batch
            .iter()
            .map(|&i| tag(i, sample_gradient(&samples[i], params)))
            .collect();
    }
    let chunk = batch.len().div_ceil(jobs);
    std::thread::scope(|scope| {
        let handles: Vec<_> = batch
            .chunks(chunk)
            .map(|ids| {
                scope.spawn(move || {
                    ids.iter()
                        .map(|&i| tag(i, sample_gradient(&samples[i], params)))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("gradient worker panicked"))
            .collect()
    })
}

/// Trains from [`FusionParams::init`] with `cfg.seed`.
pub fn train_head(
    samples: &[TrainingSample],
    cfg: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    let dim = samples.first().ok_or(TrainError::Empty)?.lip.dim();
    train_from(samples, FusionParams::init(dim, cfg.seed), cfg)
}

pub fn train_from(
    samples: &[TrainingSample],
    mut params: FusionParams,
    cfg: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(TrainError::Empty);
    }
    for (index, s) in samples.iter().enumerate() {
        check_inputs(&s.lip, &s.hand, &params)
            .map_err(|source| TrainError::Sample { index, source })?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x005e_ed0f_7a1e);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut acc = FusionParams::zeros(params.dim());
            for r in batch_gradients(samples, batch, &params, cfg.jobs) {
                let (loss, g) = r?;
                if !loss.is_finite() {
                    return Err(TrainError::Diverged { epoch });
                }
                total += loss;
                add_into(&mut acc, &g);
            }
            step(&mut params, &acc, cfg.learning_rate / batch.len() as f64);
            if params.validate().is_err() {
                return Err(TrainError::Diverged { epoch });
            }
        }
        epoch_losses.push(total / samples.len() as f64);
    }
    Ok(TrainOutcome {
        params,
        epoch_losses,
    })
}

/// Mean CTC loss of `samples` under `params`.
pub fn mean_loss(samples: &[TrainingSample], params: &FusionParams) -> Result<f64, TrainError> {
    if samples.is_empty() {
        return Err(TrainError::Empty);
    }
    let mut total = 0.0;
    for (index, s) in samples.iter().enumerate() {
        let logits = forward(&s.lip, &s.hand, params)
            .map_err(|source| TrainError::Sample { index, source })?;
        total += ctc_loss(&logits, &s.target)
            .map_err(|source| TrainError::Ctc { index, source })?
            .0;
    }
    Ok(total / samples.len() as f64)
}

/// Greedy CTC transcription of one utterance.
pub fn decode(
    lip: &LipFeatures,
    hand: &HandMatrix,
    params: &FusionParams,
) -> Result<Vec<usize>, FusionError> {
    Ok(greedy_decode(&forward(lip, hand, params)?))
}
