use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{FrameLabel, RecognitionResult};
use crate::domain::{HandPosition, HandShape, NUM_POSITIONS, NUM_SHAPES};

/// Per-position and per-shape accuracy measured with the full prompt template
/// and support set.
pub const DEFAULT_POSITION_ACCURACY: f64 = 0.9601;
pub const DEFAULT_SHAPE_ACCURACY: f64 = 0.8472;

#[derive(Debug, Error, PartialEq)]
pub enum MockError {
    #[error("{0} must lie in [0, 1], got {1}")]
    Probability(&'static str, f64),
    #[error("{name} confusion weights: {msg}")]
    Weights { name: &'static str, msg: String },
}

/// Row `i` weights the wrong labels chosen when true class `i + 1` is corrupted.
/// Diagonal entries are ignored.
pub type ConfusionWeights = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MockConfig {
    pub position_accuracy: f64,
    pub shape_accuracy: f64,
    pub rng_seed: u64,
    pub position_confusion: Option<ConfusionWeights>,
    pub shape_confusion: Option<ConfusionWeights>,
}

impl Default for MockConfig {
    fn default() -> Self {
        Self {
            position_accuracy: DEFAULT_POSITION_ACCURACY,
            shape_accuracy: DEFAULT_SHAPE_ACCURACY,
            rng_seed: 0,
            position_confusion: None,
            shape_confusion: None,
        }
    }
}

impl MockConfig {
    pub fn perfect(rng_seed: u64) -> Self {
        Self {
            position_accuracy: 1.0,
            shape_accuracy: 1.0,
            rng_seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), MockError> {
        for (name, p) in [
            ("position_accuracy", self.position_accuracy),
            ("shape_accuracy", self.shape_accuracy),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(MockError::Probability(name, p));
            }
        }
        check_weights(
            "position",
            self.position_confusion.as_ref(),
            NUM_POSITIONS as usize,
        )?;
        check_weights("shape", self.shape_confusion.as_ref(), NUM_SHAPES as usize)?;
        Ok(())
    }
}

fn check_weights(
    name: &'static str,
    w: Option<&ConfusionWeights>,
    n: usize,
) -> Result<(), MockError> {
    let Some(w) = w else { return Ok(()) };
    let err = |msg: String| Err(MockError::Weights { name, msg });
    if w.len() != n || w.iter().any(|r| r.len() != n) {
        return err(format!("expected a {n}x{n} matrix"));
    }
    for (i, row) in w.iter().enumerate() {
        if row.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return err(format!("row {} has a negative or non-finite weight", i + 1));
        }
        let off: f64 = row
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, v)| v)
            .sum();
        if off <= 0.0 {
            return err(format!("row {} has no off-diagonal mass", i + 1));
        }
    }
    Ok(())
}

/// Draws a label different from `truth` (1-based, `n` classes).
fn corrupt(rng: &mut ChaCha8Rng, truth: u8, n: u8, weights: Option<&ConfusionWeights>) -> u8 {
    match weights {
        None => {
            let k = rng.gen_range(1..n);
            if k >= truth {
                k + 1
            } else {
                k
            }
        }
        Some(w) => {
            let row: Vec<f64> = w[truth as usize - 1]
                .iter()
                .enumerate()
                .map(|(j, &v)| if j + 1 == truth as usize { 0.0 } else { v })
                .collect();
            let dist = WeightedIndex::new(&row).expect("validated weights");
            dist.sample(rng) as u8 + 1
        }
    }
}

/// Offline stand-in for the multimodal model: each true position survives with
/// `position_accuracy`, otherwise it is replaced by a different position;
/// shapes likewise. Bit-reproducible for a fixed seed.
pub fn recognize_mock(
    truth: &RecognitionResult,
    cfg: &MockConfig,
) -> Result<RecognitionResult, MockError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let labels = truth
        .labels
        .iter()
        .map(|l| {
            let keep_pos = rng.gen::<f64>() < cfg.position_accuracy;
            let keep_shape = rng.gen::<f64>() < cfg.shape_accuracy;
            let position = if keep_pos {
                l.position
            } else {
                let id = corrupt(
                    &mut rng,
                    l.position.id(),
                    NUM_POSITIONS,
                    cfg.position_confusion.as_ref(),
                );
                HandPosition::new(id).expect("in range")
            };
            let shape = if keep_shape {
                l.shape
            } else {
                let id = corrupt(
                    &mut rng,
                    l.shape.id(),
                    NUM_SHAPES,
                    cfg.shape_confusion.as_ref(),
                );
                HandShape::new(id).expect("in range")
            };
            FrameLabel {
                frame: l.frame,
                position,
                shape,
            }
        })
        .collect();
    Ok(RecognitionResult { labels })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::HandCode;

    fn truth(n: usize) -> RecognitionResult {
        let codes: Vec<HandCode> = HandCode::all().cycle().take(n).collect();
        let frames: Vec<usize> = (0..n).map(|i| i * 7 + 3).collect();
        RecognitionResult::from_codes(&frames, &codes)
    }

    #[test]
    fn perfect_accuracy_is_identity() {
        let t = truth(200);
        assert_eq!(recognize_mock(&t, &MockConfig::perfect(3)).unwrap(), t);
    }

    #[test]
    fn zero_accuracy_never_matches() {
        let t = truth(500);
        let cfg = MockConfig {
            position_accuracy: 0.0,
            shape_accuracy: 0.0,
            rng_seed: 9,
            ..MockConfig::default()
        };
        let out = recognize_mock(&t, &cfg).unwrap();
        for (a, b) in t.labels.iter().zip(&out.labels) {
            assert_ne!(a.position, b.position);
            assert_ne!(a.shape, b.shape);
            assert_eq!(a.frame, b.frame);
        }
    }

    #[test]
    fn weighted_confusion_follows_weights() {
        let t = truth(400);
        let mut w = vec![vec![0.0; 8]; 8];
        for (i, row) in w.iter_mut().enumerate() {
            // every shape collapses onto its successor
            row[(i + 1) % 8] = 1.0;
        }
        let cfg = MockConfig {
            position_accuracy: 1.0,
            shape_accuracy: 0.0,
            rng_seed: 1,
            shape_confusion: Some(w),
            ..MockConfig::default()
        };
        let out = recognize_mock(&t, &cfg).unwrap();
        for (a, b) in t.labels.iter().zip(&out.labels) {
            assert_eq!(b.shape.id(), a.shape.id() % 8 + 1);
        }
    }

    #[test]
    fn seeded_runs_are_identical() {
        let t = truth(300);
        let cfg = MockConfig {
            rng_seed: 42,
            ..MockConfig::default()
        };
        assert_eq!(
            recognize_mock(&t, &cfg).unwrap(),
            recognize_mock(&t, &cfg).unwrap()
        );
    }

    #[test]
    fn invalid_configs() {
        let bad = MockConfig {
            position_accuracy: 1.5,
            ..MockConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = MockConfig {
            shape_confusion: Some(vec![vec![1.0; 8]; 7]),
            ..MockConfig::default()
        };
        assert!(bad.validate().is_err());
        let mut w = vec![vec![1.0; 5]; 5];
        w[2][0] = -1.0;
        let bad = MockConfig {
            position_confusion: Some(w),
            ..MockConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
