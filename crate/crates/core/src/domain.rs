//! Mandarin cued-speech phoneme inventory and hand-coding tables.
//!
//! The vocabulary holds 40 phonemes and 4 auxiliary symbols. Index 0 is
//! reserved for the CTC blank, so token indices run `1..=44` and the
//! hand-embedding column of a token is `index - 1`.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of non-blank tokens (40 phonemes + 4 symbols).
pub const NUM_TOKENS: usize = 44;
/// Width of the CTC output layer: the 44 tokens plus blank.
pub const NUM_CLASSES: usize = NUM_TOKENS + 1;
pub const BLANK: usize = 0;
pub const BLANK_SYMBOL: &str = "<blank>";

pub const NUM_POSITIONS: u8 = 5;
pub const NUM_SHAPES: u8 = 8;
pub const NUM_VOWELS: usize = 16;
pub const NUM_CONSONANTS: usize = 24;

pub const WORD_BOUNDARY: &str = "/";
pub const SENTENCE_START: &str = "<s>";
pub const SENTENCE_END: &str = "</s>";
pub const UNKNOWN: &str = "<unk>";

const DEFAULT_VOCAB: &str = include_str!("../data/vocab.tsv");
const DEFAULT_CODING_TABLE: &str = include_str!("../data/coding_table.toml");

#[derive(Debug, Error)]
pub enum DomainError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("validation error: {0}")]
    Validation(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhonemeKind {
    Vowel,
    Consonant,
    Symbol,
}

impl PhonemeKind {
    fn parse(tag: &str) -> Option<Self> {
        match tag {
            "vowel" => Some(Self::Vowel),
            "consonant" => Some(Self::Consonant),
            "symbol" => Some(Self::Symbol),
            _ => None,
        }
    }

    fn tag(self) -> &'static str {
        match self {
            Self::Vowel => "vowel",
            Self::Consonant => "consonant",
            Self::Symbol => "symbol",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Phoneme {
    pub symbol: String,
    pub kind: PhonemeKind,
}

/// Ordered token inventory with the CTC blank at index 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<Phoneme>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Parses the tab-separated `symbol<TAB>kind` format. The blank is implicit.
    pub fn parse(text: &str) -> Result<Self, DomainError> {
        let mut tokens = Vec::with_capacity(NUM_TOKENS);
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (symbol, tag) = line.split_once('\t').ok_or_else(|| {
                DomainError::Parse(format!("line {}: expected `symbol<TAB>kind`", lineno + 1))
            })?;
            let kind = PhonemeKind::parse(tag.trim()).ok_or_else(|| {
                DomainError::Parse(format!(
                    "line {}: unknown kind `{}`",
                    lineno + 1,
                    tag.trim()
                ))
            })?;
            tokens.push(Phoneme {
                symbol: symbol.to_string(),
                kind,
            });
        }
        Self::from_tokens(tokens)
    }

    pub fn from_tokens(tokens: Vec<Phoneme>) -> Result<Self, DomainError> {
        if tokens.len() != NUM_TOKENS {
            return Err(DomainError::Validation(format!(
                "vocabulary must hold {NUM_TOKENS} tokens, found {}",
                tokens.len()
            )));
        }
        let count = |k: PhonemeKind| tokens.iter().filter(|t| t.kind == k).count();
        let (vowels, consonants, symbols) = (
            count(PhonemeKind::Vowel),
            count(PhonemeKind::Consonant),
            count(PhonemeKind::Symbol),
        );
        if vowels + consonants != 40 || symbols != 4 {
            return Err(DomainError::Validation(format!(
                "expected 40 phonemes and 4 symbols, found {vowels} vowels, {consonants} consonants, {symbols} symbols"
            )));
        }
        let mut index = HashMap::with_capacity(NUM_TOKENS + 1);
        index.insert(BLANK_SYMBOL.to_string(), BLANK);
        for (i, t) in tokens.iter().enumerate() {
            if t.symbol.is_empty() || t.symbol.chars().any(char::is_whitespace) {
                return Err(DomainError::Validation(format!(
                    "invalid token symbol `{}`",
                    t.symbol
                )));
            }
            if index.insert(t.symbol.clone(), i + 1).is_some() {
                return Err(DomainError::Validation(format!(
                    "duplicate symbol `{}`",
                    t.symbol
                )));
            }
        }
        Ok(Self { tokens, index })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DomainError> {
        Self::parse(&read_text(path.as_ref())?)
    }

    /// The vocabulary shipped with the crate.
    pub fn builtin() -> Self {
        Self::parse(DEFAULT_VOCAB).expect("bundled vocabulary is valid")
    }

    pub fn to_tsv(&self) -> String {
        self.tokens
            .iter()
            .map(|t| format!("{}\t{}\n", t.symbol, t.kind.tag()))
            .collect()
    }

    /// Number of indices including blank.
    pub fn len(&self) -> usize {
        self.tokens.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn index_of(&self, symbol: &str) -> Option<usize> {
        self.index.get(symbol).copied()
    }

    pub fn symbol(&self, index: usize) -> Option<&str> {
        match index {
            BLANK => Some(BLANK_SYMBOL),
            i => self.tokens.get(i - 1).map(|t| t.symbol.as_str()),
        }
    }

    /// Token at a non-blank index.
    pub fn token(&self, index: usize) -> Option<&Phoneme> {
        index.checked_sub(1).and_then(|i| self.tokens.get(i))
    }

    /// Non-blank tokens in index order (index = position + 1).
    pub fn tokens(&self) -> &[Phoneme] {
        &self.tokens
    }

    pub fn word_boundary(&self) -> usize {
        self.index_of(WORD_BOUNDARY)
            .expect("vocabulary carries the word-boundary symbol")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct HandPosition(u8);

impl HandPosition {
    pub const NAMES: [&'static str; 5] = ["mouth", "chin", "throat", "side", "cheek"];

    pub fn new(id: u8) -> Option<Self> {
        (1..=NUM_POSITIONS).contains(&id).then_some(Self(id))
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::NAMES
            .iter()
            .position(|n| *n == name)
            .map(|i| Self(i as u8 + 1))
    }

    pub fn id(self) -> u8 {
        self.0
    }

    pub fn name(self) -> &'static str {
        Self::NAMES[self.0 as usize - 1]
    }

    pub fn all() -> impl Iterator<Item = Self> + Clone {
        (1..=NUM_POSITIONS).map(Self)
    }
}

impl TryFrom<u8> for HandPosition {
    type Error = String;
    fn try_from(id: u8) -> Result<Self, Self::Error> {
        Self::new(id).ok_or_else(|| format!("hand position {id} out of range 1..=5"))
    }
}

impl From<HandPosition> for u8 {
    fn from(p: HandPosition) -> u8 {
        p.0
    }
}

impl fmt::Display for HandPosition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({})", self.0, self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct HandShape(u8);

impl HandShape {
    pub fn new(id: u8) -> Option<Self> {
        (1..=NUM_SHAPES).contains(&id).then_some(Self(id))
    }

    pub fn id(self) -> u8 {
        self.0
    }

    pub fn all() -> impl Iterator<Item = Self> + Clone {
        (1..=NUM_SHAPES).map(Self)
    }
}

impl TryFrom<u8> for HandShape {
    type Error = String;
    fn try_from(id: u8) -> Result<Self, Self::Error> {
        Self::new(id).ok_or_else(|| format!("hand shape {id} out of range 1..=8"))
    }
}

impl From<HandShape> for u8 {
    fn from(s: HandShape) -> u8 {
        s.0
    }
}

impl fmt::Display for HandShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A (position, shape) hand code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct HandCode {
    pub position: HandPosition,
    pub shape: HandShape,
}

impl HandCode {
    pub fn new(position: HandPosition, shape: HandShape) -> Self {
        Self { position, shape }
    }

    /// All 40 codes, position-major.
    pub fn all() -> impl Iterator<Item = Self> + Clone {
        HandPosition::all().flat_map(|p| HandShape::all().map(move |s| Self::new(p, s)))
    }
}

#[derive(Debug, Deserialize, Serialize)]
struct TableFile {
    #[serde(default)]
    version: Option<u32>,
    positions: Vec<PositionEntry>,
    shapes: Vec<ShapeEntry>,
}

#[derive(Debug, Deserialize, Serialize)]
struct PositionEntry {
    id: u8,
    name: String,
    vowels: Vec<String>,
}

#[derive(Debug, Deserialize, Serialize)]
struct ShapeEntry {
    id: u8,
    finger_spec: String,
    consonants: Vec<String>,
}

/// Hand-coding table: positions carry vowel groups, shapes carry consonant groups.
///
/// Phoneme sets are stored as sorted vocabulary indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodingTable {
    position_vowels: [BTreeSet<usize>; NUM_POSITIONS as usize],
    shape_consonants: [BTreeSet<usize>; NUM_SHAPES as usize],
    finger_specs: [String; NUM_SHAPES as usize],
}

impl CodingTable {
    pub fn parse(text: &str, vocab: &Vocabulary) -> Result<Self, DomainError> {
        let file: TableFile =
            toml::from_str(text).map_err(|e| DomainError::Parse(e.to_string()))?;
        Self::from_file(file, vocab)
    }

    pub fn load(path: impl AsRef<Path>, vocab: &Vocabulary) -> Result<Self, DomainError> {
        Self::parse(&read_text(path.as_ref())?, vocab)
    }

    pub fn builtin(vocab: &Vocabulary) -> Self {
        Self::parse(DEFAULT_CODING_TABLE, vocab).expect("bundled coding table is valid")
    }

    fn from_file(file: TableFile, vocab: &Vocabulary) -> Result<Self, DomainError> {
        let invalid = |msg: String| Err(DomainError::Validation(msg));

        let mut position_vowels: [BTreeSet<usize>; 5] = Default::default();
        let mut seen_pos = [false; 5];
        for entry in &file.positions {
            let Some(pos) = HandPosition::new(entry.id) else {
                return invalid(format!("position id {} out of range 1..=5", entry.id));
            };
            if seen_pos[pos.0 as usize - 1] {
                return invalid(format!("position {} listed twice", entry.id));
            }
            seen_pos[pos.0 as usize - 1] = true;
            if pos.name() != entry.name {
                return invalid(format!(
                    "position {} must be named `{}`, found `{}`",
                    entry.id,
                    pos.name(),
                    entry.name
                ));
            }
            let set = &mut position_vowels[pos.0 as usize - 1];
            for sym in &entry.vowels {
                let idx = lookup_kind(vocab, sym, PhonemeKind::Vowel)?;
                if !set.insert(idx) {
                    return invalid(format!(
                        "vowel `{sym}` repeated under position {}",
                        entry.id
                    ));
                }
            }
        }
        if let Some(i) = seen_pos.iter().position(|s| !s) {
            return invalid(format!(
                "missing position {} ({})",
                i + 1,
                HandPosition::NAMES[i]
            ));
        }

        let mut shape_consonants: [BTreeSet<usize>; 8] = Default::default();
        let mut finger_specs: [String; 8] = Default::default();
        for entry in &file.shapes {
            let Some(shape) = HandShape::new(entry.id) else {
                return invalid(format!("shape id {} out of range 1..=8", entry.id));
            };
            let slot = shape.0 as usize - 1;
            if !finger_specs[slot].is_empty() {
                return invalid(format!("shape {} listed twice", entry.id));
            }
            if entry.finger_spec.trim().is_empty() {
                return invalid(format!("shape {} has an empty finger_spec", entry.id));
            }
            finger_specs[slot] = entry.finger_spec.clone();
            for sym in &entry.consonants {
                let idx = lookup_kind(vocab, sym, PhonemeKind::Consonant)?;
                if !shape_consonants[slot].insert(idx) {
                    return invalid(format!(
                        "consonant `{sym}` repeated under shape {}",
                        entry.id
                    ));
                }
            }
        }
        if let Some(i) = finger_specs.iter().position(String::is_empty) {
            return invalid(format!("missing shape {}", i + 1));
        }

        check_partition(vocab, &position_vowels, PhonemeKind::Vowel, "position")?;
        check_partition(vocab, &shape_consonants, PhonemeKind::Consonant, "shape")?;
        let covered: usize = shape_consonants.iter().map(BTreeSet::len).sum();
        if covered != NUM_CONSONANTS {
            return invalid(format!(
                "shapes must cover exactly {NUM_CONSONANTS} consonants, found {covered}"
            ));
        }

        Ok(Self {
            position_vowels,
            shape_consonants,
            finger_specs,
        })
    }

    pub fn to_toml(&self, vocab: &Vocabulary) -> String {
        let names = |set: &BTreeSet<usize>| -> Vec<String> {
            set.iter()
                .map(|&i| vocab.symbol(i).unwrap_or_default().to_string())
                .collect()
        };
        let file = TableFile {
            version: Some(1),
            positions: HandPosition::all()
                .map(|p| PositionEntry {
                    id: p.id(),
                    name: p.name().to_string(),
                    vowels: names(self.vowels(p)),
                })
                .collect(),
            shapes: HandShape::all()
                .map(|s| ShapeEntry {
                    id: s.id(),
                    finger_spec: self.finger_spec(s).to_string(),
                    consonants: names(self.consonants(s)),
                })
                .collect(),
        };
        toml::to_string(&file).expect("table serializes")
    }

    pub fn vowels(&self, position: HandPosition) -> &BTreeSet<usize> {
        &self.position_vowels[position.0 as usize - 1]
    }

    pub fn consonants(&self, shape: HandShape) -> &BTreeSet<usize> {
        &self.shape_consonants[shape.0 as usize - 1]
    }

    pub fn finger_spec(&self, shape: HandShape) -> &str {
        &self.finger_specs[shape.0 as usize - 1]
    }

    /// Vocabulary indices coded by a (position, shape) pair.
    pub fn phonemes_for(&self, position: HandPosition, shape: HandShape) -> BTreeSet<usize> {
        self.vowels(position)
            .union(self.consonants(shape))
            .copied()
            .collect()
    }

    pub fn position_of_vowel(&self, index: usize) -> Option<HandPosition> {
        HandPosition::all().find(|&p| self.vowels(p).contains(&index))
    }

    pub fn shape_of_consonant(&self, index: usize) -> Option<HandShape> {
        HandShape::all().find(|&s| self.consonants(s).contains(&index))
    }
}

fn lookup_kind(vocab: &Vocabulary, sym: &str, kind: PhonemeKind) -> Result<usize, DomainError> {
    let idx = vocab
        .index_of(sym)
        .filter(|&i| i != BLANK)
        .ok_or_else(|| DomainError::Validation(format!("unknown phoneme symbol `{sym}`")))?;
    let actual = vocab.token(idx).map(|t| t.kind);
    if actual != Some(kind) {
        return Err(DomainError::Validation(format!(
            "`{sym}` is not a {}",
            kind.tag()
        )));
    }
    Ok(idx)
}

fn check_partition(
    vocab: &Vocabulary,
    sets: &[BTreeSet<usize>],
    kind: PhonemeKind,
    owner: &str,
) -> Result<(), DomainError> {
    let mut owner_of: HashMap<usize, usize> = HashMap::new();
    for (i, set) in sets.iter().enumerate() {
        if set.is_empty() {
            return Err(DomainError::Validation(format!(
                "{owner} {} codes nothing",
                i + 1
            )));
        }
        for &idx in set {
            if let Some(prev) = owner_of.insert(idx, i) {
                return Err(DomainError::Validation(format!(
                    "`{}` appears under {owner} {} and {owner} {}",
                    vocab.symbol(idx).unwrap_or("?"),
                    prev + 1,
                    i + 1
                )));
            }
        }
    }
    for (i, t) in vocab.tokens().iter().enumerate() {
        if t.kind == kind && !owner_of.contains_key(&(i + 1)) {
            return Err(DomainError::Validation(format!(
                "{} `{}` is not coded by any {owner}",
                kind.tag(),
                t.symbol
            )));
        }
    }
    Ok(())
}

pub(crate) fn read_text(path: &Path) -> Result<String, DomainError> {
    std::fs::read_to_string(path).map_err(|source| DomainError::Io {
        path: path.display().to_string(),
        source,
    })
}
