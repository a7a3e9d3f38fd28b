//! Browser bindings for the interactive demo page in `www/`.
//!
//! Each export takes and returns JSON strings. The `*_json` functions hold the
//! logic and are plain Rust so they can be tested natively.

use acsr_core::domain::{CodingTable, Vocabulary};
use acsr_core::eval::{edit_distance, token_errors, word_errors, AlignOp, Transcript};
use acsr_core::keyframe::{
    filter_keyframes, movement_distances, slow_frames, FilterConfig, Trajectory,
};
use acsr_core::synth::{generate_corpus, SynthConfig};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

fn trajectory_json(traj: &Trajectory, cfg: &FilterConfig) -> Value {
    let distances = movement_distances(traj);
    let result = filter_keyframes(traj, cfg);
    let points: Vec<[f64; 2]> = traj.points().iter().map(|p| [p.x, p.y]).collect();
    json!({
        "points": points,
        "distances": distances.values,
        "slow": slow_frames(&distances, cfg),
        "keyframes": result.keyframes(),
        "groups": result.groups.iter().map(|g| &g.members).collect::<Vec<_>>(),
    })
}

/// Runs the keyframe filter on `frame,x,y` CSV text.
pub fn filter_json(csv: &str, sigma: f64, theta: usize) -> Result<String, String> {
    let cfg = FilterConfig::new(sigma, theta).map_err(|e| e.to_string())?;
    let traj = Trajectory::read_csv(csv.as_bytes()).map_err(|e| e.to_string())?;
    Ok(trajectory_json(&traj, &cfg).to_string())
}

/// One synthetic utterance: its trajectory as CSV, transcript and true groups.
pub fn synth_json(seed: u64) -> Result<String, String> {
    let vocab = Vocabulary::builtin();
    let table = CodingTable::builtin(&vocab);
    let cfg = SynthConfig {
        lip_dim: 1,
        rng_seed: seed,
        ..SynthConfig::default()
    };
    let sample = generate_corpus(1, &vocab, &table, &cfg)
        .map_err(|e| e.to_string())?
        .remove(0);
    let mut csv = Vec::new();
    sample
        .trajectory
        .write_csv(&mut csv)
        .map_err(|e| e.to_string())?;
    let codes: Vec<[u8; 2]> = sample
        .truth_labels
        .labels
        .iter()
        .map(|l| [l.position.id(), l.shape.id()])
        .collect();
    Ok(json!({
        "csv": String::from_utf8(csv).map_err(|e| e.to_string())?,
        "transcript": sample.transcript.to_line(),
        "truth_keyframes": sample.truth_groups.keyframes(),
        "truth_codes": codes,
    })
    .to_string())
}

/// CER, WER and the token alignment of two `/`-delimited transcript lines.
pub fn score_json(reference: &str, hypothesis: &str) -> Result<String, String> {
    let r = Transcript::parse_line(reference);
    let h = Transcript::parse_line(hypothesis);
    let refs = std::slice::from_ref(&r);
    let hyps = std::slice::from_ref(&h);
    let tokens = token_errors(refs, hyps).map_err(|e| e.to_string())?;
    let words = word_errors(refs, hyps).map_err(|e| e.to_string())?;
    let (_, alignment) = edit_distance(&r.phonemes, &h.phonemes);
    let steps: Vec<Value> = alignment
        .ops
        .iter()
        .map(|op| match *op {
            AlignOp::Match { r: i, h: j } => json!(["=", r.phonemes[i], h.phonemes[j]]),
            AlignOp::Substitute { r: i, h: j } => json!(["S", r.phonemes[i], h.phonemes[j]]),
            AlignOp::Delete { r: i } => json!(["D", r.phonemes[i], ""]),
            AlignOp::Insert { h: j } => json!(["I", "", h.phonemes[j]]),
        })
        .collect();
    Ok(json!({
        "cer": tokens.rate(),
        "wer": words.rate(),
        "token_edits": tokens.edits,
        "tokens": tokens.reference_len,
        "word_edits": words.edits,
        "words": words.reference_len,
        "alignment": steps,
    })
    .to_string())
}

#[wasm_bindgen]
pub fn filter(csv: &str, sigma: f64, theta: usize) -> Result<String, JsError> {
    filter_json(csv, sigma, theta).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn synth(seed: u64) -> Result<String, JsError> {
    synth_json(seed).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn score(reference: &str, hypothesis: &str) -> Result<String, JsError> {
    score_json(reference, hypothesis).map_err(|e| JsError::new(&e))
}
