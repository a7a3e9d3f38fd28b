//! Glue between stages: keyframes detected on a trajectory are labelled from
//! ground truth (optionally corrupted by the mock recognizer) and turned into
//! hand matrices and training samples.

use thiserror::Error;

use crate::domain::CodingTable;
use crate::fusion::{embed_hand, FusionError, HandMatrix, LipFeatures};
use crate::keyframe::{filter_keyframes, FilterConfig, KeyframeResult, Trajectory};
use crate::recognizer::{recognize_mock, FrameLabel, MockConfig, MockError, RecognitionResult};
use crate::synth::{derive_seed, SynthSample};
use crate::train::TrainingSample;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Mock(#[from] MockError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error("trajectory has {traj} frames but lip features have {lip}")]
    FrameMismatch { traj: usize, lip: usize },
}

/// Where the hand stream comes from when building fused inputs.
#[derive(Debug, Clone, PartialEq)]
pub enum HandSource {
    /// Lip-only: an all-zero hand matrix.
    Disabled,
    /// Detected keyframes labelled with the true code.
    Truth,
    /// Detected keyframes labelled by the mock recognizer.
    Mock(MockConfig),
}

/// Keeps the detected groups whose keyframe lies inside a truth group and
/// labels them with that group's code.
pub fn label_detected(
    detected: &KeyframeResult,
    truth_groups: &KeyframeResult,
    truth_labels: &RecognitionResult,
) -> (KeyframeResult, RecognitionResult) {
    let mut groups = Vec::new();
    let mut labels = Vec::new();
    for g in &detected.groups {
        if let Some(t) = truth_groups.group_of(g.keyframe) {
            let l = truth_labels.labels[t];
            groups.push(g.clone());
            labels.push(FrameLabel {
                frame: g.keyframe,
                ..l
            });
        }
    }
    (KeyframeResult { groups }, RecognitionResult { labels })
}

/// Hand matrix for one utterance. `stream` decorrelates the mock's draws
/// across utterances.
pub fn observed_hand(
    trajectory: &Trajectory,
    truth_groups: &KeyframeResult,
    truth_labels: &RecognitionResult,
    filter: &FilterConfig,
    source: &HandSource,
    table: &CodingTable,
    stream: u64,
) -> Result<HandMatrix, PipelineError> {
    let frames = trajectory.len();
    let mock = match source {
        HandSource::Disabled => return Ok(HandMatrix::zeros(frames)),
        HandSource::Truth => None,
        HandSource::Mock(cfg) => Some(cfg),
    };
    let detected = filter_keyframes(trajectory, filter);
    let (groups, truth) = label_detected(&detected, truth_groups, truth_labels);
    let labels = match mock {
        None => truth,
        Some(cfg) => recognize_mock(
            &truth,
            &MockConfig {
                rng_seed: derive_seed(cfg.rng_seed, stream),
                ..cfg.clone()
            },
        )?,
    };
    Ok(embed_hand(&labels, &groups, frames, table)?)
}

pub fn training_sample(
    lip: LipFeatures,
    hand: HandMatrix,
    target: Vec<usize>,
) -> Result<TrainingSample, PipelineError> {
    if hand.frames() != lip.frames() {
        return Err(PipelineError::FrameMismatch {
            traj: hand.frames(),
            lip: lip.frames(),
        });
    }
    Ok(TrainingSample { lip, hand, target })
}

/// Training samples for synthetic utterances; sample `i` uses mock stream `i`.
pub fn synth_training_samples(
    samples: &[SynthSample],
    filter: &FilterConfig,
    source: &HandSource,
    table: &CodingTable,
) -> Result<Vec<TrainingSample>, PipelineError> {
    samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let hand = observed_hand(
                &s.trajectory,
                &s.truth_groups,
                &s.truth_labels,
                filter,
                source,
                table,
                i as u64,
            )?;
            training_sample(s.lip.clone(), hand, s.target.clone())
        })
        .collect()
}
