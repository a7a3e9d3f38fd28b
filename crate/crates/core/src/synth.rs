//! Synthetic cuer: hand trajectories that dwell at vowel positions between
//! fast transits, the matching ground truth, and noisy lip features.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{CodingTable, HandCode, HandShape, PhonemeKind, Vocabulary, WORD_BOUNDARY};
use crate::eval::Transcript;
use crate::fusion::{embed_hand, HandMatrix, LipFeatures, DEFAULT_FEATURE_DIM};
use crate::keyframe::{
    select_keyframes, FilterConfig, KeyframeResult, Point, SlowMotionGroup, Trajectory,
};
use crate::recognizer::RecognitionResult;

pub const FRAME_WIDTH: f64 = 1280.0;
pub const FRAME_HEIGHT: f64 = 720.0;

/// Lip noise at which lip features alone still transcribe almost perfectly.
pub const DEFAULT_LIP_NOISE_SIGMA: f64 = 1.0;
/// Lip noise at which same-class phonemes become hard to tell apart from the
/// lips alone, so the hand stream matters.
pub const HARD_LIP_NOISE_SIGMA: f64 = 2.5;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("unknown phoneme `{0}`")]
    UnknownPhoneme(String),
    #[error("`{0}` is not a {1}")]
    WrongKind(String, &'static str),
    #[error("invalid synth config: {0}")]
    Config(String),
    #[error("sentence has no syllables")]
    Empty,
    #[error("{path}: {msg}")]
    Io { path: String, msg: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    /// Hand-centre anchor of positions 1..=5, in pixels.
    pub anchors: [[f64; 2]; 5],
    /// Resting hand location at the first frame.
    pub rest: [f64; 2],
    /// Inclusive range of frames the hand dwells per syllable.
    pub dwell_frames: [usize; 2],
    /// Inclusive range of frames between dwells.
    pub transit_frames: [usize; 2],
    /// Maximum distance between consecutive dwell frames.
    pub jitter_amplitude: f64,
    /// Minimum distance per transit step.
    pub transit_step: f64,
    /// Per-dimension standard deviation of lip-feature noise.
    pub lip_noise_sigma: f64,
    pub lip_dim: usize,
    /// Share of a phoneme's lip pattern not common to its lip-shape class,
    /// in `(0, 1]`; see [`LipEmbedding`].
    pub viseme_spread: f64,
    /// Shape reported for syllables without a consonant.
    pub no_consonant_shape: u8,
    /// Keyframe filter the trajectories are built to satisfy.
    pub filter: FilterConfig,
    pub syllables_per_sentence: [usize; 2],
    pub syllables_per_word: [usize; 2],
    pub vowel_only_probability: f64,
    pub rng_seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            anchors: [
                [700.0, 420.0], // mouth
                [690.0, 500.0], // chin
                [680.0, 600.0], // throat
                [860.0, 470.0], // side
                [760.0, 350.0], // cheek
            ],
            rest: [900.0, 700.0],
            dwell_frames: [4, 7],
            transit_frames: [2, 4],
            jitter_amplitude: 2.0,
            transit_step: 14.0,
            lip_noise_sigma: DEFAULT_LIP_NOISE_SIGMA,
            lip_dim: DEFAULT_FEATURE_DIM,
            viseme_spread: 0.25,
            no_consonant_shape: 5,
            filter: FilterConfig::default(),
            syllables_per_sentence: [4, 25],
            syllables_per_word: [1, 3],
            vowel_only_probability: 0.2,
            rng_seed: 7,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::Config(m));
        self.filter
            .validate()
            .map_err(|e| SynthError::Config(e.to_string()))?;
        if !(self.jitter_amplitude >= 0.0 && self.jitter_amplitude < self.filter.sigma) {
            return bad(format!(
                "jitter_amplitude {} must be >= 0 and below sigma {}",
                self.jitter_amplitude, self.filter.sigma
            ));
        }
        if !self.transit_step.is_finite()
            || self.transit_step.partial_cmp(&self.filter.sigma)
                != Some(std::cmp::Ordering::Greater)
        {
            return bad(format!(
                "transit_step {} must exceed sigma {}",
                self.transit_step, self.filter.sigma
            ));
        }
        if self.dwell_frames[0] < 3 || self.dwell_frames[0] > self.dwell_frames[1] {
            return bad("dwell_frames must be an increasing range starting at >= 3".into());
        }
        let min_transit = self.filter.theta.saturating_sub(1).max(1);
        if self.transit_frames[0] < min_transit || self.transit_frames[0] > self.transit_frames[1] {
            return bad(format!(
                "transit_frames must be an increasing range starting at >= {min_transit} for theta {}",
                self.filter.theta
            ));
        }
        for (i, [x, y]) in self
            .anchors
            .iter()
            .chain(std::iter::once(&self.rest))
            .enumerate()
        {
            if !(0.0..=FRAME_WIDTH).contains(x) || !(0.0..=FRAME_HEIGHT).contains(y) {
                return bad(format!(
                    "anchor {} ({x}, {y}) is outside the 1280x720 frame",
                    i + 1
                ));
            }
        }
        if !self.lip_noise_sigma.is_finite() || self.lip_noise_sigma < 0.0 || self.lip_dim == 0 {
            return bad("lip_noise_sigma must be finite and >= 0 and lip_dim >= 1".into());
        }
        if !(self.viseme_spread > 0.0 && self.viseme_spread <= 1.0) {
            return bad(format!(
                "viseme_spread {} outside (0, 1]",
                self.viseme_spread
            ));
        }
        if HandShape::new(self.no_consonant_shape).is_none() {
            return bad(format!(
                "no_consonant_shape {} out of range",
                self.no_consonant_shape
            ));
        }
        let [lo, hi] = self.syllables_per_sentence;
        let [wlo, whi] = self.syllables_per_word;
        if lo == 0 || lo > hi || wlo == 0 || wlo > whi {
            return bad("syllable ranges must be non-empty and start at >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.vowel_only_probability) {
            return bad("vowel_only_probability must lie in [0, 1]".into());
        }
        Ok(())
    }

    fn anchor(&self, code: HandCode) -> Point {
        let [x, y] = self.anchors[code.position.id() as usize - 1];
        Point::new(x, y)
    }
}

/// One consonant-vowel (or bare vowel) unit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Syllable {
    pub consonant: Option<String>,
    pub vowel: String,
    /// Whether a new word begins at this syllable.
    pub word_start: bool,
}

impl Syllable {
    pub fn new(consonant: Option<&str>, vowel: &str, word_start: bool) -> Self {
        Self {
            consonant: consonant.map(str::to_string),
            vowel: vowel.to_string(),
            word_start,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSample {
    pub trajectory: Trajectory,
    pub truth_groups: KeyframeResult,
    /// One label per truth group, at the group's keyframe.
    pub truth_labels: RecognitionResult,
    pub transcript: Transcript,
    /// CTC target indices including word boundaries.
    pub target: Vec<usize>,
    pub lip: LipFeatures,
}

impl SynthSample {
    /// Hand matrix built from the ground-truth labels.
    pub fn truth_hand(&self, table: &CodingTable) -> HandMatrix {
        embed_hand(
            &self.truth_labels,
            &self.truth_groups,
            self.trajectory.len(),
            table,
        )
        .expect("synthetic truth is consistent")
    }
}

/// SplitMix64 mix of a base seed and a stream index.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-token lip embeddings shared across a corpus: row 0 is the closed-mouth
/// (silence) pattern, row `i` the pattern of vocabulary index `i`.
///
/// Phonemes are grouped into lip-shape classes that cut across the hand code:
/// the k-th consonant of every hand shape shares one class, as does the k-th
/// vowel of every position. A row is `sqrt(1 - s^2) * class + s * own` with
/// standard-normal components, so `s = viseme_spread` sets how far apart
/// same-class phonemes look while every row keeps unit per-entry variance.
#[derive(Debug, Clone, PartialEq)]
pub struct LipEmbedding {
    dim: usize,
    rows: Vec<Vec<f64>>,
}

/// Lip-shape class of every vocabulary index (blank and symbols get their own).
pub fn viseme_classes(vocab: &Vocabulary, table: &CodingTable) -> Vec<usize> {
    let mut classes = Vec::with_capacity(vocab.len());
    let mut next_own = 64;
    for index in 0..vocab.len() {
        let rank_in =
            |set: &std::collections::BTreeSet<usize>| set.iter().position(|&i| i == index);
        let class = if let Some(p) = table.position_of_vowel(index) {
            rank_in(table.vowels(p)).map(|r| 32 + r)
        } else if let Some(s) = table.shape_of_consonant(index) {
            rank_in(table.consonants(s))
        } else {
            None
        };
        classes.push(class.unwrap_or_else(|| {
            next_own += 1;
            next_own
        }));
    }
    classes
}

impl LipEmbedding {
    pub fn new(vocab: &Vocabulary, table: &CodingTable, cfg: &SynthConfig) -> Self {
        let dim = cfg.lip_dim;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.rng_seed, u64::MAX));
        let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            (0..dim).map(|_| StandardNormal.sample(rng)).collect()
        };
        let classes = viseme_classes(vocab, table);
        let mut class_rows = std::collections::BTreeMap::new();
        for &c in &classes {
            class_rows.entry(c).or_insert_with(|| draw(&mut rng));
        }
        let s = cfg.viseme_spread;
        let shared = (1.0 - s * s).sqrt();
        let rows = classes
            .iter()
            .map(|c| {
                let own = draw(&mut rng);
                class_rows[c]
                    .iter()
                    .zip(own)
                    .map(|(a, b)| shared * a + s * b)
                    .collect()
            })
            .collect();
        Self { dim, rows }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, class: usize) -> &[f64] {
        &self.rows[class]
    }
}

fn lookup(vocab: &Vocabulary, sym: &str, kind: PhonemeKind) -> Result<usize, SynthError> {
    let idx = vocab
        .index_of(sym)
        .filter(|&i| i != 0)
        .ok_or_else(|| SynthError::UnknownPhoneme(sym.to_string()))?;
    if vocab.token(idx).map(|t| t.kind) != Some(kind) {
        let name = if kind == PhonemeKind::Vowel {
            "vowel"
        } else {
            "consonant"
        };
        return Err(SynthError::WrongKind(sym.to_string(), name));
    }
    Ok(idx)
}

struct Builder<'a> {
    cfg: &'a SynthConfig,
    rng: ChaCha8Rng,
    points: Vec<Point>,
    /// Lip class per frame; 0 is silence.
    lip_class: Vec<usize>,
}

impl Builder<'_> {
    fn jittered(&mut self, anchor: Point) -> Point {
        // consecutive offsets within J/2 of the anchor stay within J of each other
        let radius = self.cfg.jitter_amplitude / 2.0 * self.rng.gen::<f64>().sqrt();
        let angle = self.rng.gen::<f64>() * std::f64::consts::TAU;
        Point::new(
            anchor.x + radius * angle.cos(),
            anchor.y + radius * angle.sin(),
        )
    }

    /// `frames` points from the current position toward `target`, zig-zagging
    /// perpendicular to the path so each step (including the one into the
    /// next dwell) exceeds `transit_step`.
    fn transit(&mut self, target: Point, frames: usize, lip: usize) {
        let start = *self.points.last().expect("transit follows a frame");
        let (dx, dy) = (target.x - start.x, target.y - start.y);
        let len = dx.hypot(dy);
        let (ux, uy) = if len > 1e-9 {
            (-dy / len, dx / len)
        } else {
            (0.0, 1.0)
        };
        let amplitude = self.cfg.transit_step + self.cfg.jitter_amplitude + 1.0;
        for i in 1..=frames {
            let f = i as f64 / (frames + 1) as f64;
            let sign = if i % 2 == 1 { 1.0 } else { -1.0 };
            self.points.push(Point::new(
                start.x + f * dx + sign * amplitude * ux,
                start.y + f * dy + sign * amplitude * uy,
            ));
            self.lip_class.push(lip);
        }
    }
}

/// Renders one sentence. `sample_seed` drives jitter, timing and lip noise;
/// `embedding` fixes the lip pattern of each token.
pub fn synth_sentence(
    syllables: &[Syllable],
    vocab: &Vocabulary,
    table: &CodingTable,
    embedding: &LipEmbedding,
    cfg: &SynthConfig,
    sample_seed: u64,
) -> Result<SynthSample, SynthError> {
    cfg.validate()?;
    if syllables.is_empty() {
        return Err(SynthError::Empty);
    }
    if embedding.dim() != cfg.lip_dim {
        return Err(SynthError::Config(format!(
            "embedding is {}-dimensional, config asks for {}",
            embedding.dim(),
            cfg.lip_dim
        )));
    }
    let boundary = vocab
        .index_of(WORD_BOUNDARY)
        .ok_or_else(|| SynthError::UnknownPhoneme(WORD_BOUNDARY.into()))?;
    let no_consonant = HandShape::new(cfg.no_consonant_shape).expect("validated");

    let mut b = Builder {
        cfg,
        rng: ChaCha8Rng::seed_from_u64(sample_seed),
        points: vec![Point::new(cfg.rest[0], cfg.rest[1])],
        lip_class: vec![0],
    };
    let mut groups = Vec::with_capacity(syllables.len());
    let mut codes = Vec::with_capacity(syllables.len());
    let mut tokens: Vec<String> = Vec::new();
    let mut target = Vec::new();

    for (k, syl) in syllables.iter().enumerate() {
        let vowel = lookup(vocab, &syl.vowel, PhonemeKind::Vowel)?;
        let consonant = syl
            .consonant
            .as_deref()
            .map(|c| lookup(vocab, c, PhonemeKind::Consonant))
            .transpose()?;
        let position = table
            .position_of_vowel(vowel)
            .ok_or_else(|| SynthError::UnknownPhoneme(syl.vowel.clone()))?;
        let shape = match consonant {
            Some(c) => table.shape_of_consonant(c).ok_or_else(|| {
                SynthError::UnknownPhoneme(syl.consonant.clone().unwrap_or_default())
            })?,
            None => no_consonant,
        };
        let code = HandCode::new(position, shape);

        let new_word = k > 0 && syl.word_start;
        if new_word {
            tokens.push(WORD_BOUNDARY.to_string());
            target.push(boundary);
        }
        let transit = b
            .rng
            .gen_range(cfg.transit_frames[0]..=cfg.transit_frames[1]);
        let anchor = cfg.anchor(code);
        b.transit(anchor, transit, if new_word { boundary } else { 0 });

        let dwell = b.rng.gen_range(cfg.dwell_frames[0]..=cfg.dwell_frames[1]);
        let start = b.points.len();
        let consonant_frames = if consonant.is_some() {
            dwell.div_ceil(2)
        } else {
            0
        };
        for i in 0..dwell {
            let p = b.jittered(anchor);
            b.points.push(p);
            b.lip_class.push(match consonant {
                Some(c) if i < consonant_frames => c,
                _ => vowel,
            });
        }
        // the first dwell frame arrives by a fast step, so it is not slow
        groups.push(SlowMotionGroup {
            members: (start + 1..start + dwell).collect(),
            keyframe: start + 1,
        });
        codes.push(code);
        if let Some(c) = consonant {
            tokens.push(syl.consonant.clone().unwrap_or_default());
            target.push(c);
        }
        tokens.push(syl.vowel.clone());
        target.push(vowel);
    }
    let lead_out = cfg.transit_frames[0];
    b.transit(Point::new(cfg.rest[0], cfg.rest[1]), lead_out, 0);

    let truth_groups = select_keyframes(groups);
    let truth_labels = RecognitionResult::from_codes(&truth_groups.keyframes(), &codes);

    let frames = b.points.len();
    let noise = Normal::new(0.0, cfg.lip_noise_sigma).expect("validated sigma");
    let mut values = Vec::with_capacity(frames * cfg.lip_dim);
    for &class in &b.lip_class {
        for &e in embedding.row(class) {
            let n = if cfg.lip_noise_sigma > 0.0 {
                noise.sample(&mut b.rng)
            } else {
                0.0
            };
            values.push((e + n) as f32);
        }
    }
    let lip = LipFeatures::new(frames, cfg.lip_dim, values)
        .map_err(|e| SynthError::Config(e.to_string()))?;
    let trajectory = Trajectory::new(b.points).map_err(|e| SynthError::Config(e.to_string()))?;

    Ok(SynthSample {
        trajectory,
        truth_groups,
        truth_labels,
        transcript: Transcript::from_tokens(&tokens),
        target,
        lip,
    })
}

/// Draws a random sentence: length uniform in `syllables_per_sentence`,
/// words of `syllables_per_word` syllables, consonants dropped with
/// `vowel_only_probability`.
pub fn random_syllables(
    vocab: &Vocabulary,
    cfg: &SynthConfig,
    rng: &mut impl Rng,
) -> Vec<Syllable> {
    let vowels: Vec<&str> = vocab
        .tokens()
        .iter()
        .filter(|t| t.kind == PhonemeKind::Vowel)
        .map(|t| t.symbol.as_str())
        .collect();
    let consonants: Vec<&str> = vocab
        .tokens()
        .iter()
        .filter(|t| t.kind == PhonemeKind::Consonant)
        .map(|t| t.symbol.as_str())
        .collect();
    let n = rng.gen_range(cfg.syllables_per_sentence[0]..=cfg.syllables_per_sentence[1]);
    let mut out = Vec::with_capacity(n);
    let mut left_in_word = 0;
    for _ in 0..n {
        let word_start = left_in_word == 0;
        if word_start {
            left_in_word = rng.gen_range(cfg.syllables_per_word[0]..=cfg.syllables_per_word[1]);
        }
        left_in_word -= 1;
        let consonant = (rng.gen::<f64>() >= cfg.vowel_only_probability)
            .then(|| consonants[rng.gen_range(0..consonants.len())]);
        let vowel = vowels[rng.gen_range(0..vowels.len())];
        out.push(Syllable::new(consonant, vowel, word_start));
    }
    out
}

/// `n` random samples; sample `i` uses `derive_seed(cfg.rng_seed, i)`.
pub fn generate_corpus(
    n: usize,
    vocab: &Vocabulary,
    table: &CodingTable,
    cfg: &SynthConfig,
) -> Result<Vec<SynthSample>, SynthError> {
    cfg.validate()?;
    let embedding = LipEmbedding::new(vocab, table, cfg);
    (0..n)
        .map(|i| {
            let seed = derive_seed(cfg.rng_seed, i as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let syllables = random_syllables(vocab, cfg, &mut rng);
            synth_sentence(
                &syllables,
                vocab,
                table,
                &embedding,
                cfg,
                derive_seed(seed, 1),
            )
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub seed: u64,
    pub split: Split,
    pub frames: usize,
    pub trajectory: PathBuf,
    pub lip: PathBuf,
    pub truth: PathBuf,
    pub transcript: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub config: SynthConfig,
    pub samples: Vec<ManifestEntry>,
    pub train_transcripts: PathBuf,
    pub eval_transcripts: PathBuf,
}

impl Manifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, SynthError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| SynthError::Io {
            path: path.display().to_string(),
            msg: e.to_string(),
        })?;
        serde_json::from_str(&text).map_err(|e| SynthError::Io {
            path: path.display().to_string(),
            msg: e.to_string(),
        })
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.samples.iter().filter(move |s| s.split == split)
    }
}

/// Truth file: keyframe groups plus per-group labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthFile {
    pub keyframes: Vec<usize>,
    pub groups: Vec<Vec<usize>>,
    pub labels: Vec<crate::recognizer::FrameLabel>,
}

impl TruthFile {
    pub fn from_sample(s: &SynthSample) -> Self {
        Self {
            keyframes: s.truth_groups.keyframes(),
            groups: s
                .truth_groups
                .groups
                .iter()
                .map(|g| g.members.clone())
                .collect(),
            labels: s.truth_labels.labels.clone(),
        }
    }

    pub fn groups(&self) -> Result<KeyframeResult, String> {
        KeyframeResult::from_json(
            &serde_json::json!({"keyframes": self.keyframes, "groups": self.groups}).to_string(),
        )
    }

    pub fn labels(&self) -> RecognitionResult {
        RecognitionResult {
            labels: self.labels.clone(),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, String> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }
}

/// Writes the corpus to `dir`; the last `n_eval` samples form the eval split.
/// Paths in the manifest are relative to `dir`.
pub fn write_corpus(
    dir: impl AsRef<Path>,
    samples: &[SynthSample],
    cfg: &SynthConfig,
    n_eval: usize,
) -> Result<Manifest, SynthError> {
    let dir = dir.as_ref();
    let io = |path: &Path, e: &dyn std::fmt::Display| SynthError::Io {
        path: path.display().to_string(),
        msg: e.to_string(),
    };
    std::fs::create_dir_all(dir).map_err(|e| io(dir, &e))?;
    let n_train = samples.len().saturating_sub(n_eval);
    let mut entries = Vec::with_capacity(samples.len());
    let (mut train_lines, mut eval_lines) = (String::new(), String::new());
    for (i, s) in samples.iter().enumerate() {
        let id = format!("s{i:05}");
        let traj = PathBuf::from(format!("{id}.traj.csv"));
        let lip = PathBuf::from(format!("{id}.lipf"));
        let truth = PathBuf::from(format!("{id}.truth.json"));
        s.trajectory
            .save(dir.join(&traj))
            .map_err(|e| io(&dir.join(&traj), &e))?;
        crate::io::save_lipf(dir.join(&lip), &s.lip).map_err(|e| io(&dir.join(&lip), &e))?;
        let truth_json = serde_json::to_string(&TruthFile::from_sample(s)).expect("serializes");
        std::fs::write(dir.join(&truth), truth_json).map_err(|e| io(&dir.join(&truth), &e))?;
        let split = if i < n_train {
            Split::Train
        } else {
            Split::Eval
        };
        let line = s.transcript.to_line();
        match split {
            Split::Train => train_lines.push_str(&line),
            Split::Eval => eval_lines.push_str(&line),
        }
        match split {
            Split::Train => train_lines.push('\n'),
            Split::Eval => eval_lines.push('\n'),
        }
        entries.push(ManifestEntry {
            id,
            seed: derive_seed(cfg.rng_seed, i as u64),
            split,
            frames: s.trajectory.len(),
            trajectory: traj,
            lip,
            truth,
            transcript: line,
        });
    }
    let manifest = Manifest {
        seed: cfg.rng_seed,
        config: cfg.clone(),
        samples: entries,
        train_transcripts: PathBuf::from("train_refs.txt"),
        eval_transcripts: PathBuf::from("eval_refs.txt"),
    };
    for (name, body) in [
        (&manifest.train_transcripts, &train_lines),
        (&manifest.eval_transcripts, &eval_lines),
    ] {
        std::fs::write(dir.join(name), body).map_err(|e| io(&dir.join(name), &e))?;
    }
    let path = dir.join("manifest.json");
    std::fs::write(
        &path,
        serde_json::to_string_pretty(&manifest).expect("serializes"),
    )
    .map_err(|e| io(&path, &e))?;
    Ok(manifest)
}
