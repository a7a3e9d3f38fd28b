//! Per-keyframe hand-code recognition results, the structured response
//! contract, and the two recognizers (remote model endpoint and seeded mock).

mod mock;
#[cfg(feature = "remote")]
mod remote;

pub use mock::{recognize_mock, ConfusionWeights, MockConfig, MockError};
#[cfg(feature = "remote")]
pub use remote::{recognize_remote, EndpointConfig, RemoteError, RemoteRecognizer};

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::domain::{HandCode, HandPosition, HandShape, NUM_POSITIONS, NUM_SHAPES};

/// Key wrapping the label array in the request schema; structured-output
/// endpoints require an object at the root.
pub const RESPONSE_KEY: &str = "keyframes";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameLabel {
    /// Absolute frame index of the keyframe.
    pub frame: usize,
    pub position: HandPosition,
    pub shape: HandShape,
}

impl FrameLabel {
    pub fn code(&self) -> HandCode {
        HandCode::new(self.position, self.shape)
    }
}

/// One label per keyframe, in temporal order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct RecognitionResult {
    pub labels: Vec<FrameLabel>,
}

#[derive(Debug, Error, PartialEq)]
pub enum ResponseError {
    #[error("malformed JSON: {0}")]
    Malformed(String),
    #[error("expected {expected} labels, found {found}")]
    Arity { expected: usize, found: usize },
    #[error("entry {entry}: `{field}` = {value} outside {min}..={max}")]
    Range {
        entry: usize,
        field: &'static str,
        value: i64,
        min: i64,
        max: i64,
    },
    #[error("entry {entry}: `{field}` must be an integer")]
    Type { entry: usize, field: &'static str },
    #[error("entry {entry}: missing `{field}`")]
    Missing { entry: usize, field: &'static str },
    #[error("entry {entry}: unexpected property `{field}`")]
    ExtraProperty { entry: usize, field: String },
    #[error("duplicate frame ordinal {0}")]
    DuplicateOrdinal(usize),
    #[error("keyframe count mismatch: {labels} labels for {frames} frames")]
    FrameCount { labels: usize, frames: usize },
}

impl RecognitionResult {
    pub fn from_codes(frames: &[usize], codes: &[HandCode]) -> Self {
        assert_eq!(frames.len(), codes.len());
        Self {
            labels: frames
                .iter()
                .zip(codes)
                .map(|(&frame, c)| FrameLabel {
                    frame,
                    position: c.position,
                    shape: c.shape,
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn codes(&self) -> Vec<HandCode> {
        self.labels.iter().map(FrameLabel::code).collect()
    }

    /// Replaces ordinal frame numbers with absolute keyframe indices.
    pub fn with_frames(mut self, frames: &[usize]) -> Result<Self, ResponseError> {
        if frames.len() != self.labels.len() {
            return Err(ResponseError::FrameCount {
                labels: self.labels.len(),
                frames: frames.len(),
            });
        }
        for (label, &frame) in self.labels.iter_mut().zip(frames) {
            label.frame = frame;
        }
        Ok(self)
    }

    /// `{"labels":[{"frame":..,"position":..,"shape":..}]}`
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("labels serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| e.to_string())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, String> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::from_json(&text)
    }

    /// The structured-response form a model would return: labels keyed by ordinal.
    pub fn to_response_body(&self) -> String {
        let entries: Vec<Value> = self
            .labels
            .iter()
            .enumerate()
            .map(|(i, l)| {
                json!({
                    "frame_ordinal": i,
                    "position": l.position.id(),
                    "shape": l.shape.id(),
                })
            })
            .collect();
        json!({ RESPONSE_KEY: entries }).to_string()
    }
}

/// JSON schema for an array of exactly `m` keyframe labels.
pub fn response_schema_value(m: usize) -> Value {
    json!({
        "type": "array",
        "minItems": m,
        "maxItems": m,
        "items": {
            "type": "object",
            "properties": {
                "frame_ordinal": { "type": "integer", "minimum": 0, "maximum": m.saturating_sub(1) },
                "position": { "type": "integer", "minimum": 1, "maximum": NUM_POSITIONS },
                "shape": { "type": "integer", "minimum": 1, "maximum": NUM_SHAPES },
            },
            "required": ["frame_ordinal", "position", "shape"],
            "additionalProperties": false,
        },
    })
}

pub fn response_schema(m: usize) -> String {
    serde_json::to_string_pretty(&response_schema_value(m)).expect("schema serializes")
}

/// The schema sent to the endpoint: the label array under [`RESPONSE_KEY`].
pub fn wrapped_response_schema(m: usize) -> Value {
    json!({
        "type": "object",
        "properties": { RESPONSE_KEY: response_schema_value(m) },
        "required": [RESPONSE_KEY],
        "additionalProperties": false,
    })
}

/// Strictly validates a model response. Frames in the result are ordinals `0..m`.
///
/// Accepts either the bare label array or the object wrapping it under
/// [`RESPONSE_KEY`].
pub fn parse_response(body: &str, m: usize) -> Result<RecognitionResult, ResponseError> {
    let value: Value =
        serde_json::from_str(body).map_err(|e| ResponseError::Malformed(e.to_string()))?;
    let entries = match &value {
        Value::Array(a) => a,
        Value::Object(o) => match o.get(RESPONSE_KEY) {
            Some(Value::Array(a)) if o.len() == 1 => a,
            _ => {
                return Err(ResponseError::Malformed(format!(
                    "expected an array or {{\"{RESPONSE_KEY}\": [..]}}"
                )))
            }
        },
        _ => return Err(ResponseError::Malformed("expected an array".into())),
    };
    if entries.len() != m {
        return Err(ResponseError::Arity {
            expected: m,
            found: entries.len(),
        });
    }
    let mut slots: Vec<Option<FrameLabel>> = vec![None; m];
    for (entry, item) in entries.iter().enumerate() {
        let Value::Object(obj) = item else {
            return Err(ResponseError::Malformed(format!(
                "entry {entry} is not an object"
            )));
        };
        if let Some(extra) = obj
            .keys()
            .find(|k| !matches!(k.as_str(), "frame_ordinal" | "position" | "shape"))
        {
            return Err(ResponseError::ExtraProperty {
                entry,
                field: extra.clone(),
            });
        }
        let ordinal = int_field(obj, entry, "frame_ordinal", 0, m as i64 - 1)? as usize;
        let position = int_field(obj, entry, "position", 1, NUM_POSITIONS as i64)? as u8;
        let shape = int_field(obj, entry, "shape", 1, NUM_SHAPES as i64)? as u8;
        if slots[ordinal].is_some() {
            return Err(ResponseError::DuplicateOrdinal(ordinal));
        }
        slots[ordinal] = Some(FrameLabel {
            frame: ordinal,
            position: HandPosition::new(position).expect("range checked"),
            shape: HandShape::new(shape).expect("range checked"),
        });
    }
    Ok(RecognitionResult {
        labels: slots
            .into_iter()
            .map(|s| s.expect("m unique ordinals in 0..m fill every slot"))
            .collect(),
    })
}

fn int_field(
    obj: &serde_json::Map<String, Value>,
    entry: usize,
    field: &'static str,
    min: i64,
    max: i64,
) -> Result<i64, ResponseError> {
    let v = obj
        .get(field)
        .ok_or(ResponseError::Missing { entry, field })?;
    let n = v.as_i64().ok_or(ResponseError::Type { entry, field })?;
    if n < min || n > max {
        return Err(ResponseError::Range {
            entry,
            field,
            value: n,
            min,
            max,
        });
    }
    Ok(n)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn body(entries: &[(i64, i64, i64)]) -> String {
        let v: Vec<Value> = entries
            .iter()
            .map(|&(o, p, s)| json!({"frame_ordinal": o, "position": p, "shape": s}))
            .collect();
        Value::Array(v).to_string()
    }

    #[test]
    fn parses_well_formed_body() {
        let r = parse_response(&body(&[(0, 2, 5), (1, 1, 1), (2, 5, 8)]), 3).unwrap();
        assert_eq!(r.len(), 3);
        assert_eq!(r.labels[2].shape.id(), 8);
        let r = r.with_frames(&[10, 20, 30]).unwrap();
        assert_eq!(r.labels[1].frame, 20);
    }

    #[test]
    fn ordinals_may_arrive_out_of_order() {
        let r = parse_response(&body(&[(1, 3, 3), (0, 2, 2)]), 2).unwrap();
        assert_eq!(r.labels[0].position.id(), 2);
    }

    #[test]
    fn accepts_wrapped_object() {
        let wrapped = format!("{{\"keyframes\":{}}}", body(&[(0, 1, 1)]));
        assert_eq!(parse_response(&wrapped, 1).unwrap().len(), 1);
    }

    #[test]
    fn rejections() {
        assert!(matches!(
            parse_response(&body(&[(0, 1, 1), (1, 1, 1)]), 3),
            Err(ResponseError::Arity {
                expected: 3,
                found: 2
            })
        ));
        assert_eq!(
            parse_response(&body(&[(0, 1, 1), (0, 2, 2)]), 2),
            Err(ResponseError::DuplicateOrdinal(0))
        );
        assert!(matches!(
            parse_response(&body(&[(0, 6, 1)]), 1),
            Err(ResponseError::Range {
                field: "position",
                ..
            })
        ));
        assert!(matches!(
            parse_response(r#"[{"frame_ordinal":0,"position":1,"shape":2.5}]"#, 1),
            Err(ResponseError::Type { field: "shape", .. })
        ));
        assert!(matches!(
            parse_response(r#"[{"frame_ordinal":0,"position":1,"shape":2,"x":1}]"#, 1),
            Err(ResponseError::ExtraProperty { .. })
        ));
        assert!(matches!(
            parse_response("not json", 1),
            Err(ResponseError::Malformed(_))
        ));
    }

    #[test]
    fn result_file_format() {
        let r = RecognitionResult::from_codes(
            &[4, 9],
            &[
                HandCode::new(HandPosition::new(1).unwrap(), HandShape::new(3).unwrap()),
                HandCode::new(HandPosition::new(5).unwrap(), HandShape::new(8).unwrap()),
            ],
        );
        let json = r.to_json();
        assert_eq!(
            json,
            r#"{"labels":[{"frame":4,"position":1,"shape":3},{"frame":9,"position":5,"shape":8}]}"#
        );
        assert_eq!(RecognitionResult::from_json(&json).unwrap(), r);
        assert!(
            RecognitionResult::from_json(r#"{"labels":[{"frame":1,"position":0,"shape":1}]}"#)
                .is_err()
        );
    }
}
