//! Prompt assembly for hand position/shape recognition.
//!
//! A payload is a flat sequence of text and image parts. Sections appear in a
//! fixed order, each opened by a sentinel header line:
//! background, in-context references, contrastive pairs, chain of thought,
//! then the keyframes to label.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use base64::Engine as _;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::domain::{HandCode, HandPosition, HandShape};
use crate::recognizer::{response_schema, wrapped_response_schema};

pub const SECTION_BACKGROUND: &str = "### BACKGROUND";
pub const SECTION_IN_CONTEXT: &str = "### IN-CONTEXT EXAMPLES";
pub const SECTION_CONTRASTIVE: &str = "### CONTRASTIVE";
pub const SECTION_CHAIN_OF_THOUGHT: &str = "### CHAIN OF THOUGHT";
pub const SECTION_KEYFRAMES: &str = "### KEYFRAMES";

pub const SECTION_ORDER: [&str; 5] = [
    SECTION_BACKGROUND,
    SECTION_IN_CONTEXT,
    SECTION_CONTRASTIVE,
    SECTION_CHAIN_OF_THOUGHT,
    SECTION_KEYFRAMES,
];

const DEFAULT_TEMPLATE: &str = include_str!("../data/prompt_template.toml");

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("manifest parse error: {0}")]
    Parse(String),
    #[error("support set is missing position {position}, shape {shape}")]
    MissingPair { position: u8, shape: u8 },
    #[error("support set lists position {position}, shape {shape} twice")]
    DuplicatePair { position: u8, shape: u8 },
    #[error("support entry {entry}: {msg}")]
    BadEntry { entry: usize, msg: String },
    #[error("cannot read image {path}: {source}")]
    UnreadableImage {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("at least one keyframe is required")]
    NoKeyframes,
    #[error("template: {0}")]
    Template(String),
}

/// An image attached to a prompt: a file on disk or inline bytes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageRef {
    Path(PathBuf),
    Inline { mime: String, bytes: Vec<u8> },
}

impl ImageRef {
    fn mime_for(path: &Path) -> &'static str {
        match path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .as_deref()
        {
            Some("jpg" | "jpeg") => "image/jpeg",
            Some("webp") => "image/webp",
            Some("gif") => "image/gif",
            _ => "image/png",
        }
    }

    /// `data:<mime>;base64,<payload>`
    pub fn data_url(&self) -> Result<String, PromptError> {
        let (mime, bytes) = match self {
            ImageRef::Path(p) => {
                let bytes = std::fs::read(p).map_err(|source| PromptError::UnreadableImage {
                    path: p.display().to_string(),
                    source,
                })?;
                (Self::mime_for(p).to_string(), bytes)
            }
            ImageRef::Inline { mime, bytes } => (mime.clone(), bytes.clone()),
        };
        Ok(format!(
            "data:{mime};base64,{}",
            base64::engine::general_purpose::STANDARD.encode(bytes)
        ))
    }
}

/// One reference image for each of the 40 (position, shape) pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportSet {
    entries: BTreeMap<HandCode, ImageRef>,
}

#[derive(Debug, Deserialize, Serialize)]
struct ManifestEntry {
    position: u8,
    shape: u8,
    image: PathBuf,
}

impl SupportSet {
    pub fn from_entries(
        entries: impl IntoIterator<Item = (HandCode, ImageRef)>,
    ) -> Result<Self, PromptError> {
        let mut map = BTreeMap::new();
        for (code, image) in entries {
            if map.insert(code, image).is_some() {
                return Err(PromptError::DuplicatePair {
                    position: code.position.id(),
                    shape: code.shape.id(),
                });
            }
        }
        if let Some(code) = HandCode::all().find(|c| !map.contains_key(c)) {
            return Err(PromptError::MissingPair {
                position: code.position.id(),
                shape: code.shape.id(),
            });
        }
        Ok(Self { entries: map })
    }

    /// Loads a JSON manifest `[{"position":1,"shape":1,"image":"p1s1.png"},..]`.
    /// Relative image paths resolve against the manifest's directory.
    pub fn load(manifest: impl AsRef<Path>) -> Result<Self, PromptError> {
        let manifest = manifest.as_ref();
        let text = std::fs::read_to_string(manifest)
            .map_err(|e| PromptError::Parse(format!("{}: {e}", manifest.display())))?;
        let base = manifest.parent().unwrap_or(Path::new("."));
        Self::parse_manifest(&text, base)
    }

    pub fn parse_manifest(text: &str, base: &Path) -> Result<Self, PromptError> {
        let raw: Vec<ManifestEntry> =
            serde_json::from_str(text).map_err(|e| PromptError::Parse(e.to_string()))?;
        let mut entries = Vec::with_capacity(raw.len());
        for (i, e) in raw.into_iter().enumerate() {
            let position = HandPosition::new(e.position).ok_or_else(|| PromptError::BadEntry {
                entry: i,
                msg: format!("position {} out of range", e.position),
            })?;
            let shape = HandShape::new(e.shape).ok_or_else(|| PromptError::BadEntry {
                entry: i,
                msg: format!("shape {} out of range", e.shape),
            })?;
            let path = if e.image.is_absolute() {
                e.image
            } else {
                base.join(e.image)
            };
            std::fs::File::open(&path).map_err(|source| PromptError::UnreadableImage {
                path: path.display().to_string(),
                source,
            })?;
            entries.push((HandCode::new(position, shape), ImageRef::Path(path)));
        }
        Self::from_entries(entries)
    }

    pub fn get(&self, code: HandCode) -> &ImageRef {
        &self.entries[&code]
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairKind {
    Position,
    Shape,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContrastivePair {
    pub kind: PairKind,
    pub a: u8,
    pub b: u8,
    /// Completes "The difference between them is that ...".
    pub text: String,
}

/// All prompt text. Every field can be overridden from a TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptTemplateConfig {
    pub background_text: String,
    pub position_intro: String,
    pub shape_intro: String,
    pub cot_instructions: String,
    pub output_instructions: String,
    /// Keyed by position id as a string ("1".."5").
    pub positions: BTreeMap<String, String>,
    /// Keyed by shape id as a string ("1".."8").
    pub shapes: BTreeMap<String, String>,
    #[serde(default)]
    pub contrastive: Vec<ContrastivePair>,
}

impl Default for PromptTemplateConfig {
    fn default() -> Self {
        Self::parse(DEFAULT_TEMPLATE).expect("bundled template is valid")
    }
}

impl PromptTemplateConfig {
    pub fn parse(text: &str) -> Result<Self, PromptError> {
        let cfg: Self = toml::from_str(text).map_err(|e| PromptError::Template(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PromptError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| PromptError::Template(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<(), PromptError> {
        let bad = |m: String| Err(PromptError::Template(m));
        for (name, text) in [
            ("background_text", &self.background_text),
            ("position_intro", &self.position_intro),
            ("shape_intro", &self.shape_intro),
            ("cot_instructions", &self.cot_instructions),
            ("output_instructions", &self.output_instructions),
        ] {
            if text.trim().is_empty() {
                return bad(format!("{name} is empty"));
            }
        }
        for p in HandPosition::all() {
            if self.position_text(p).trim().is_empty() {
                return bad(format!("position {} has no description", p.id()));
            }
        }
        for s in HandShape::all() {
            if self.shape_text(s).trim().is_empty() {
                return bad(format!("shape {} has no finger description", s.id()));
            }
        }
        for pair in &self.contrastive {
            let valid = |id: u8| match pair.kind {
                PairKind::Position => HandPosition::new(id).is_some(),
                PairKind::Shape => HandShape::new(id).is_some(),
            };
            if !valid(pair.a) || !valid(pair.b) || pair.a == pair.b {
                return bad(format!(
                    "contrastive pair {}/{} is not a valid label pair",
                    pair.a, pair.b
                ));
            }
            if pair.text.trim().is_empty() {
                return bad(format!(
                    "contrastive pair {}/{} has no text",
                    pair.a, pair.b
                ));
            }
        }
        Ok(())
    }

    fn position_text(&self, p: HandPosition) -> &str {
        self.positions
            .get(&p.id().to_string())
            .map_or("", String::as_str)
    }

    fn shape_text(&self, s: HandShape) -> &str {
        self.shapes
            .get(&s.id().to_string())
            .map_or("", String::as_str)
    }

    fn render_pair(&self, pair: &ContrastivePair) -> String {
        let (label, describe): (&str, Box<dyn Fn(u8) -> String>) = match pair.kind {
            PairKind::Shape => (
                "Shape",
                Box::new(|id| {
                    self.shape_text(HandShape::new(id).expect("validated"))
                        .to_string()
                }),
            ),
            PairKind::Position => (
                "Position",
                Box::new(|id| {
                    self.position_text(HandPosition::new(id).expect("validated"))
                        .to_string()
                }),
            ),
        };
        format!(
            "{label} {} ({}) is easily confused with label {} ({}) The difference between them is that {}",
            pair.a,
            describe(pair.a).trim_end_matches('.').to_string() + ".",
            pair.b,
            describe(pair.b).trim_end_matches('.').to_string() + ".",
            pair.text
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageRole {
    Support(HandCode),
    Keyframe { ordinal: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptPart {
    Text(String),
    Image { role: ImageRole, image: ImageRef },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptPayload {
    pub parts: Vec<PromptPart>,
    /// JSON schema of the expected label array.
    pub response_schema: String,
    /// Absolute frame index of each keyframe ordinal.
    pub keyframe_frames: Vec<usize>,
}

impl PromptPayload {
    pub fn images(&self) -> impl Iterator<Item = (&ImageRole, &ImageRef)> {
        self.parts.iter().filter_map(|p| match p {
            PromptPart::Image { role, image } => Some((role, image)),
            PromptPart::Text(_) => None,
        })
    }

    pub fn image_count(&self) -> usize {
        self.images().count()
    }

    pub fn keyframe_count(&self) -> usize {
        self.keyframe_frames.len()
    }

    /// Section sentinels in the order they occur in the text parts.
    pub fn section_headers(&self) -> Vec<&str> {
        self.parts
            .iter()
            .filter_map(|p| match p {
                PromptPart::Text(t) => Some(t.as_str()),
                PromptPart::Image { .. } => None,
            })
            .flat_map(str::lines)
            .filter(|l| l.starts_with("### "))
            .collect()
    }

    /// OpenAI-compatible chat-completions request body with base64 images and
    /// a strict JSON-schema response format.
    pub fn chat_request(&self, model: &str, temperature: f64) -> Result<Value, PromptError> {
        let mut content = Vec::with_capacity(self.parts.len());
        for part in &self.parts {
            content.push(match part {
                PromptPart::Text(t) => json!({ "type": "text", "text": t }),
                PromptPart::Image { image, .. } => json!({
                    "type": "image_url",
                    "image_url": { "url": image.data_url()?, "detail": "auto" },
                }),
            });
        }
        Ok(json!({
            "model": model,
            "temperature": temperature,
            "messages": [{ "role": "user", "content": content }],
            "response_format": {
                "type": "json_schema",
                "json_schema": {
                    "name": "hand_keyframe_labels",
                    "strict": true,
                    "schema": wrapped_response_schema(self.keyframe_count()),
                },
            },
        }))
    }
}

/// Assembles the full prompt for the keyframes of one video, in temporal order.
pub fn build_prompt(
    keyframes: &[(usize, ImageRef)],
    support: &SupportSet,
    cfg: &PromptTemplateConfig,
) -> Result<PromptPayload, PromptError> {
    if keyframes.is_empty() {
        return Err(PromptError::NoKeyframes);
    }
    cfg.validate()?;
    let mut parts = Vec::new();
    let text = |s: String| PromptPart::Text(s);

    parts.push(text(format!(
        "{SECTION_BACKGROUND}\n{}",
        cfg.background_text.trim()
    )));

    parts.push(text(format!(
        "{SECTION_IN_CONTEXT}\n{}",
        cfg.position_intro.trim()
    )));
    for p in HandPosition::all() {
        parts.push(text(format!(
            "Position {} ({}). {}",
            p.id(),
            p.name(),
            cfg.position_text(p).trim()
        )));
        for s in HandShape::all() {
            let code = HandCode::new(p, s);
            parts.push(text(format!(
                "Reference P{}-S{}: position {}, shape {}.",
                p.id(),
                s.id(),
                p.id(),
                s.id()
            )));
            parts.push(PromptPart::Image {
                role: ImageRole::Support(code),
                image: support.get(code).clone(),
            });
        }
    }
    let mut shapes = cfg.shape_intro.trim().to_string();
    for s in HandShape::all() {
        let refs: Vec<String> = HandPosition::all()
            .map(|p| format!("P{}-S{}", p.id(), s.id()))
            .collect();
        shapes.push_str(&format!(
            "\nShape {}: {} Reference frames: {}.",
            s.id(),
            cfg.shape_text(s).trim(),
            refs.join(", ")
        ));
    }
    parts.push(text(shapes));

    let mut contrastive = SECTION_CONTRASTIVE.to_string();
    for pair in &cfg.contrastive {
        contrastive.push('\n');
        contrastive.push_str(&cfg.render_pair(pair));
    }
    parts.push(text(contrastive));

    parts.push(text(format!(
        "{SECTION_CHAIN_OF_THOUGHT}\n{}\n{}",
        cfg.cot_instructions.trim(),
        cfg.output_instructions.trim()
    )));

    parts.push(text(format!(
        "{SECTION_KEYFRAMES}\nThere are {} keyframes, shown in temporal order. Label each one.",
        keyframes.len()
    )));
    for (ordinal, (_, image)) in keyframes.iter().enumerate() {
        parts.push(text(format!("Keyframe {ordinal}:")));
        parts.push(PromptPart::Image {
            role: ImageRole::Keyframe { ordinal },
            image: image.clone(),
        });
    }

    Ok(PromptPayload {
        parts,
        response_schema: response_schema(keyframes.len()),
        keyframe_frames: keyframes.iter().map(|(f, _)| *f).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn inline(tag: &str) -> ImageRef {
        ImageRef::Inline {
            mime: "image/png".into(),
            bytes: tag.as_bytes().to_vec(),
        }
    }

    fn support() -> SupportSet {
        SupportSet::from_entries(
            HandCode::all().map(|c| (c, inline(&format!("p{}s{}", c.position.id(), c.shape.id())))),
        )
        .unwrap()
    }

    #[test]
    fn default_template_is_valid() {
        let cfg = PromptTemplateConfig::default();
        assert_eq!(cfg.contrastive.len(), 2);
        assert_eq!(cfg.positions.len(), 5);
        assert_eq!(cfg.shapes.len(), 8);
    }

    #[test]
    fn contrastive_rendering() {
        let cfg = PromptTemplateConfig::default();
        let line = cfg.render_pair(&cfg.contrastive[0]);
        assert!(line.starts_with("Shape 3 (Middle, ring, and pinky fingers are straight. Thumb and index fingers are bent.) is easily confused with label 4 (Index, middle, ring and pinky fingers are straight. Thumb is bent.) The difference"), "{line}");
    }

    #[test]
    fn payload_structure() {
        let kf = vec![(12, inline("k0")), (30, inline("k1"))];
        let p = build_prompt(&kf, &support(), &PromptTemplateConfig::default()).unwrap();
        assert_eq!(p.image_count(), 42);
        assert_eq!(p.section_headers(), SECTION_ORDER.to_vec());
        assert_eq!(p.keyframe_frames, vec![12, 30]);
        let support_roles: Vec<_> = p
            .images()
            .filter_map(|(r, _)| match r {
                ImageRole::Support(c) => Some(*c),
                _ => None,
            })
            .collect();
        assert_eq!(support_roles, HandCode::all().collect::<Vec<_>>());
    }

    #[test]
    fn empty_keyframes_rejected() {
        assert!(matches!(
            build_prompt(&[], &support(), &PromptTemplateConfig::default()),
            Err(PromptError::NoKeyframes)
        ));
    }

    #[test]
    fn support_set_errors() {
        let all: Vec<_> = HandCode::all().map(|c| (c, inline("x"))).collect();
        let missing = SupportSet::from_entries(all[..39].to_vec()).unwrap_err();
        assert!(matches!(
            missing,
            PromptError::MissingPair {
                position: 5,
                shape: 8
            }
        ));
        let mut dup = all.clone();
        dup.push(all[0].clone());
        assert!(matches!(
            SupportSet::from_entries(dup),
            Err(PromptError::DuplicatePair {
                position: 1,
                shape: 1
            })
        ));
    }

    #[test]
    fn template_validation() {
        let mut cfg = PromptTemplateConfig::default();
        cfg.contrastive.push(ContrastivePair {
            kind: PairKind::Position,
            a: 2,
            b: 6,
            text: "x".into(),
        });
        assert!(cfg.validate().is_err());
        let mut cfg = PromptTemplateConfig::default();
        cfg.background_text = " ".into();
        assert!(cfg.validate().is_err());
    }
}
