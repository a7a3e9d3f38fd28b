//! Hand/lip fusion: one-hot hand embedding, linear projection to the lip
//! feature width, and weighted addition `P = L + λ·(H·W + b)`, followed by a
//! linear classifier over the 45 CTC classes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::domain::{CodingTable, NUM_CLASSES, NUM_TOKENS};
use crate::keyframe::KeyframeResult;
use crate::matrix::Matrix;
use crate::recognizer::RecognitionResult;

/// Lip-feature width of the pretrained lip-reading encoder.
pub const DEFAULT_FEATURE_DIM: usize = 768;

#[derive(Debug, Error, PartialEq)]
pub enum FusionError {
    #[error("{labels} recognition labels for {groups} keyframe groups")]
    LabelCount { labels: usize, groups: usize },
    #[error("group frame {frame} outside a {frames}-frame video")]
    FrameOutOfRange { frame: usize, frames: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

/// `T × 44` binary matrix of hand-coded phoneme hypotheses.
#[derive(Debug, Clone, PartialEq)]
pub struct HandMatrix(Matrix);

impl HandMatrix {
    pub fn zeros(frames: usize) -> Self {
        Self(Matrix::zeros(frames, NUM_TOKENS))
    }

    pub fn frames(&self) -> usize {
        self.0.rows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    /// Vocabulary indices (1-based) marked on frame `t`.
    pub fn row_tokens(&self, t: usize) -> Vec<usize> {
        self.0
            .row(t)
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(|(c, _)| c + 1)
            .collect()
    }
}

/// Writes each group's recognized phoneme set onto every member frame.
pub fn embed_hand(
    rec: &RecognitionResult,
    keyframes: &KeyframeResult,
    frames: usize,
    table: &CodingTable,
) -> Result<HandMatrix, FusionError> {
    if rec.len() != keyframes.len() {
        return Err(FusionError::LabelCount {
            labels: rec.len(),
            groups: keyframes.len(),
        });
    }
    let mut hand = HandMatrix::zeros(frames);
    for (label, group) in rec.labels.iter().zip(&keyframes.groups) {
        let tokens = table.phonemes_for(label.position, label.shape);
        for &frame in &group.members {
            if frame >= frames {
                return Err(FusionError::FrameOutOfRange { frame, frames });
            }
            let row = hand.0.row_mut(frame);
            for &tok in &tokens {
                row[tok - 1] = 1.0;
            }
        }
    }
    Ok(hand)
}

/// `T × d` lip-reading features, stored as `f32` like the on-disk format.
#[derive(Debug, Clone, PartialEq)]
pub struct LipFeatures {
    frames: usize,
    dim: usize,
    values: Vec<f32>,
}

impl LipFeatures {
    pub fn new(frames: usize, dim: usize, values: Vec<f32>) -> Result<Self, FusionError> {
        if dim == 0 {
            return Err(FusionError::Shape("feature dimension must be >= 1".into()));
        }
        if values.len() != frames * dim {
            return Err(FusionError::Shape(format!(
                "{} values for {frames}x{dim} features",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(FusionError::NonFinite("lip features"));
        }
        Ok(Self {
            frames,
            dim,
            values,
        })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn to_matrix(&self) -> Matrix {
        Matrix::from_vec(
            self.frames,
            self.dim,
            self.values.iter().map(|&v| v as f64).collect(),
        )
    }
}

/// Learnable fusion and classifier parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionParams {
    /// `44 × d`
    pub linear_weights: Matrix,
    /// `d`
    pub linear_bias: Vec<f64>,
    pub lambda: f64,
    /// `d × 45`
    pub head_weights: Matrix,
    /// `45`
    pub head_bias: Vec<f64>,
}

impl FusionParams {
    /// λ = 1, projection weights uniform in ±1/√44, head weights uniform in
    /// ±1/√d, biases zero.
    pub fn init(dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = 1.0 / (NUM_TOKENS as f64).sqrt();
        let linear_weights = Matrix::from_fn(NUM_TOKENS, dim, |_, _| rng.gen_range(-k..k));
        let kh = 1.0 / (dim as f64).sqrt();
        let head_weights = Matrix::from_fn(dim, NUM_CLASSES, |_, _| rng.gen_range(-kh..kh));
        Self {
            linear_weights,
            linear_bias: vec![0.0; dim],
            lambda: 1.0,
            head_weights,
            head_bias: vec![0.0; NUM_CLASSES],
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            linear_weights: Matrix::zeros(NUM_TOKENS, dim),
            linear_bias: vec![0.0; dim],
            lambda: 0.0,
            head_weights: Matrix::zeros(dim, NUM_CLASSES),
            head_bias: vec![0.0; NUM_CLASSES],
        }
    }

    pub fn dim(&self) -> usize {
        self.linear_bias.len()
    }

    pub fn validate(&self) -> Result<(), FusionError> {
        let d = self.dim();
        if self.linear_weights.shape() != (NUM_TOKENS, d)
            || self.head_weights.shape() != (d, NUM_CLASSES)
            || self.head_bias.len() != NUM_CLASSES
        {
            return Err(FusionError::Shape(
                "inconsistent parameter dimensions".into(),
            ));
        }
        let finite = self.linear_weights.is_finite()
            && self.head_weights.is_finite()
            && self.lambda.is_finite()
            && self
                .linear_bias
                .iter()
                .chain(&self.head_bias)
                .all(|v| v.is_finite());
        if !finite {
            return Err(FusionError::NonFinite("fusion parameters"));
        }
        Ok(())
    }

    /// Number of scalar parameters.
    pub fn len(&self) -> usize {
        let d = self.dim();
        NUM_TOKENS * d + d + 1 + d * NUM_CLASSES + NUM_CLASSES
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Flattened in field order.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.len());
        v.extend_from_slice(self.linear_weights.data());
        v.extend_from_slice(&self.linear_bias);
        v.push(self.lambda);
        v.extend_from_slice(self.head_weights.data());
        v.extend_from_slice(&self.head_bias);
        v
    }

    pub fn from_flat(dim: usize, flat: &[f64]) -> Result<Self, FusionError> {
        let expected = FusionParams::zeros(dim).len();
        if flat.len() != expected {
            return Err(FusionError::Shape(format!(
                "{} values for {expected} parameters",
                flat.len()
            )));
        }
        let (lw, rest) = flat.split_at(NUM_TOKENS * dim);
        let (lb, rest) = rest.split_at(dim);
        let (lambda, rest) = rest.split_at(1);
        let (hw, hb) = rest.split_at(dim * NUM_CLASSES);
        Ok(Self {
            linear_weights: Matrix::from_vec(NUM_TOKENS, dim, lw.to_vec()),
            linear_bias: lb.to_vec(),
            lambda: lambda[0],
            head_weights: Matrix::from_vec(dim, NUM_CLASSES, hw.to_vec()),
            head_bias: hb.to_vec(),
        })
    }
}

/// `f(H) = H·W + b`
pub fn project_hand(hand: &HandMatrix, params: &FusionParams) -> Matrix {
    let mut out = hand.0.matmul(&params.linear_weights);
    out.add_row_broadcast(&params.linear_bias);
    out
}

/// `P = L + λ·f(H)`
pub fn fuse(
    lip: &LipFeatures,
    hand: &HandMatrix,
    params: &FusionParams,
) -> Result<Matrix, FusionError> {
    check_inputs(lip, hand, params)?;
    if params.lambda == 0.0 {
        // exact identity, including signed zeros in the lip features
        return Ok(lip.to_matrix());
    }
    let projected = project_hand(hand, params);
    let mut fused = lip.to_matrix();
    fused.axpy(params.lambda, &projected);
    Ok(fused)
}

pub(crate) fn check_inputs(
    lip: &LipFeatures,
    hand: &HandMatrix,
    params: &FusionParams,
) -> Result<(), FusionError> {
    if lip.frames() != hand.frames() {
        return Err(FusionError::Shape(format!(
            "lip features have {} frames, hand matrix {}",
            lip.frames(),
            hand.frames()
        )));
    }
    if lip.dim() != params.dim() {
        return Err(FusionError::Shape(format!(
            "lip features are {}-dimensional, parameters expect {}",
            lip.dim(),
            params.dim()
        )));
    }
    Ok(())
}

/// Classifier logits `P·W_head + b_head` (`T × 45`).
pub fn head_logits(fused: &Matrix, params: &FusionParams) -> Matrix {
    let mut logits = fused.matmul(&params.head_weights);
    logits.add_row_broadcast(&params.head_bias);
    logits
}

/// Fuse and classify in one step.
pub fn forward(
    lip: &LipFeatures,
    hand: &HandMatrix,
    params: &FusionParams,
) -> Result<Matrix, FusionError> {
    Ok(head_logits(&fuse(lip, hand, params)?, params))
}
