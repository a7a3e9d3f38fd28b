//! Cued-speech recognition from a hand trajectory and lip features: keyframe
//! filtering, hand-code prompting and recognition, fused CTC decoding, and
//! error-rate evaluation.

pub mod ctc;
pub mod domain;
pub mod eval;
pub mod fusion;
pub mod io;
pub mod keyframe;
pub mod matrix;
pub mod pipeline;
pub mod prompting;
pub mod recognizer;
pub mod synth;
pub mod train;

pub use domain::{CodingTable, HandCode, HandPosition, HandShape, Vocabulary};
pub use keyframe::{filter_keyframes, FilterConfig, KeyframeResult, Trajectory};
pub use recognizer::{FrameLabel, RecognitionResult};
