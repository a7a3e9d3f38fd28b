use std::path::{Path, PathBuf};

use acsr_core::domain::{CodingTable, Vocabulary};
use acsr_core::eval::{
    confusion_matrix, read_transcripts, render_heatmap, token_errors, word_errors, Transcript,
};
use acsr_core::io::{load_lipf, load_mfmp, save_mfmp};
use acsr_core::keyframe::{filter_keyframes, FilterConfig, KeyframeResult, Trajectory};
use acsr_core::pipeline::{label_detected, observed_hand, training_sample, HandSource};
use acsr_core::prompting::{build_prompt, ImageRef, PromptPayload, SupportSet};
use acsr_core::recognizer::{recognize_mock, recognize_remote, MockConfig, RecognitionResult};
use acsr_core::synth::{generate_corpus, write_corpus, Manifest, ManifestEntry, Split, TruthFile};
use acsr_core::train::{decode as decode_utterance, train_head, TrainingSample};
use anyhow::{anyhow, bail, Context, Result};
use serde_json::json;

use crate::config::PipelineConfig;
use crate::{
    ConfusionArgs, DecodeArgs, EvalArgs, FilterArgs, HandArg, HandOptions, ImageArgs, PromptArgs,
    RecognizeArgs, RecognizeMode, SplitArg, SynthArgs, TrainArgs,
};

const FRAME_PLACEHOLDER: &str = "{frame}";

/// Writes `body` to `out`, or to stdout when there is no destination.
fn emit(out: Option<PathBuf>, body: &str) -> Result<()> {
    match out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).with_context(|| dir.display().to_string())?;
            }
            std::fs::write(&path, body).with_context(|| path.display().to_string())
        }
        None => {
            print!("{body}");
            Ok(())
        }
    }
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| path.display().to_string())
}

fn load_keyframes(path: &Path) -> Result<KeyframeResult> {
    KeyframeResult::from_json(&read_text(path)?).map_err(|e| anyhow!("{}: {e}", path.display()))
}

fn mock_config(cfg: &PipelineConfig, position: Option<f64>, shape: Option<f64>) -> MockConfig {
    MockConfig {
        position_accuracy: position.unwrap_or(cfg.mock.position_accuracy),
        shape_accuracy: shape.unwrap_or(cfg.mock.shape_accuracy),
        ..cfg.mock.clone()
    }
}

pub fn filter(cfg: &PipelineConfig, a: FilterArgs) -> Result<()> {
    let filter = FilterConfig {
        sigma: a.sigma.unwrap_or(cfg.filter.sigma),
        theta: a.theta.map_or(cfg.filter.theta, |t| t as usize),
    };
    filter.validate()?;
    let traj =
        Trajectory::load(&a.traj).with_context(|| format!("trajectory {}", a.traj.display()))?;
    let result = filter_keyframes(&traj, &filter);
    emit(
        cfg.output(a.out, "keyframes.json"),
        &format!("{}\n", result.to_json()),
    )
}

fn keyframe_payload(cfg: &PipelineConfig, a: &ImageArgs) -> Result<PromptPayload> {
    let keyframes = load_keyframes(&a.keyframes)?;
    let pattern = a
        .frame_pattern
        .as_deref()
        .ok_or_else(|| anyhow!("--frame-pattern is required"))?;
    if !pattern.contains(FRAME_PLACEHOLDER) {
        bail!("--frame-pattern must contain {FRAME_PLACEHOLDER}");
    }
    let support_path = a
        .support
        .as_ref()
        .or(cfg.support_manifest.as_ref())
        .ok_or_else(|| anyhow!("a support manifest is required (--support or support_manifest)"))?;
    let support = SupportSet::load(support_path)?;
    let images: Vec<(usize, ImageRef)> = keyframes
        .keyframes()
        .into_iter()
        .map(|f| {
            let path = PathBuf::from(pattern.replace(FRAME_PLACEHOLDER, &f.to_string()));
            (f, ImageRef::Path(path))
        })
        .collect();
    Ok(build_prompt(&images, &support, &cfg.template()?)?)
}

pub fn prompt(cfg: &PipelineConfig, a: PromptArgs) -> Result<()> {
    let payload = keyframe_payload(cfg, &a.images)?;
    let request = payload.chat_request(&cfg.endpoint.model_name, cfg.endpoint.temperature)?;
    let body = serde_json::to_string_pretty(&request)? + "\n";
    emit(cfg.output(a.out, "prompt_request.json"), &body)
}

/// Truth labels for the detected keyframes. A synth truth file matches by group
/// containment; a plain recognition file matches by exact frame.
fn truth_for(detected: &KeyframeResult, path: &Path) -> Result<RecognitionResult> {
    let text = read_text(path)?;
    if let Ok(truth) = serde_json::from_str::<TruthFile>(&text) {
        let groups = truth
            .groups()
            .map_err(|e| anyhow!("{}: {e}", path.display()))?;
        return Ok(label_detected(detected, &groups, &truth.labels()).1);
    }
    let truth =
        RecognitionResult::from_json(&text).map_err(|e| anyhow!("{}: {e}", path.display()))?;
    let labels = detected
        .keyframes()
        .into_iter()
        .filter_map(|f| truth.labels.iter().find(|l| l.frame == f).copied())
        .collect();
    Ok(RecognitionResult { labels })
}

pub fn recognize(cfg: &PipelineConfig, a: RecognizeArgs) -> Result<()> {
    let result = match a.mode {
        RecognizeMode::Mock => {
            let truth_path = a
                .truth
                .as_ref()
                .ok_or_else(|| anyhow!("--truth is required in mock mode"))?;
            let detected = load_keyframes(&a.images.keyframes)?;
            let truth = truth_for(&detected, truth_path)?;
            recognize_mock(
                &truth,
                &mock_config(cfg, a.position_accuracy, a.shape_accuracy),
            )?
        }
        RecognizeMode::Remote => {
            cfg.endpoint.validate()?;
            let var = &cfg.endpoint.api_key_env_var_name;
            if std::env::var(var).map_or(true, |v| v.is_empty()) {
                bail!("endpoint config: environment variable {var} is not set");
            }
            let payload = keyframe_payload(cfg, &a.images)?;
            recognize_remote(&payload, &cfg.endpoint)?
        }
    };
    emit(
        cfg.output(a.out, "recognition.json"),
        &format!("{}\n", result.to_json()),
    )
}

fn hand_source(cfg: &PipelineConfig, h: &HandOptions) -> HandSource {
    match h.hand {
        HandArg::None => HandSource::Disabled,
        HandArg::Truth => HandSource::Truth,
        HandArg::Mock => HandSource::Mock(mock_config(cfg, h.position_accuracy, h.shape_accuracy)),
    }
}

struct Corpus {
    manifest: Manifest,
    dir: PathBuf,
}

impl Corpus {
    fn load(path: &Path) -> Result<Self> {
        Ok(Self {
            manifest: Manifest::load(path)?,
            dir: path.parent().unwrap_or(Path::new(".")).to_path_buf(),
        })
    }

    /// Entries of `split` with their index in the whole corpus, which keys the
    /// mock recognizer's draws.
    fn entries(&self, split: Split) -> impl Iterator<Item = (u64, &ManifestEntry)> {
        self.manifest
            .samples
            .iter()
            .enumerate()
            .filter(move |(_, e)| e.split == split)
            .map(|(i, e)| (i as u64, e))
    }

    fn sample(
        &self,
        stream: u64,
        e: &ManifestEntry,
        target: Vec<usize>,
        source: &HandSource,
        filter: &FilterConfig,
        table: &CodingTable,
    ) -> Result<TrainingSample> {
        let traj_path = self.dir.join(&e.trajectory);
        let traj = Trajectory::load(&traj_path)
            .with_context(|| format!("trajectory {}", traj_path.display()))?;
        let lip_path = self.dir.join(&e.lip);
        let lip = load_lipf(&lip_path).with_context(|| format!("lip {}", lip_path.display()))?;
        let truth_path = self.dir.join(&e.truth);
        let truth = TruthFile::load(&truth_path).map_err(|e| anyhow!(e))?;
        let groups = truth
            .groups()
            .map_err(|m| anyhow!("{}: {m}", truth_path.display()))?;
        let hand = observed_hand(
            &traj,
            &groups,
            &truth.labels(),
            filter,
            source,
            table,
            stream,
        )
        .with_context(|| e.id.clone())?;
        training_sample(lip, hand, target).with_context(|| e.id.clone())
    }
}

fn tables(cfg: &PipelineConfig) -> Result<(Vocabulary, CodingTable)> {
    let vocab = cfg.vocabulary()?;
    let table = cfg.coding_table(&vocab)?;
    Ok((vocab, table))
}

pub fn train(cfg: &PipelineConfig, a: TrainArgs) -> Result<()> {
    let out = cfg
        .output(a.out, "model.mfmp")
        .ok_or_else(|| anyhow!("--out is required (or set output_dir)"))?;
    let mut train_cfg = cfg.train.clone();
    if let Some(e) = a.epochs {
        train_cfg.epochs = e;
    }
    if let Some(lr) = a.lr {
        train_cfg.learning_rate = lr;
    }
    if let Some(b) = a.batch_size {
        train_cfg.batch_size = b as usize;
    }
    train_cfg.validate()?;
    let (vocab, table) = tables(cfg)?;
    let corpus = Corpus::load(&a.manifest)?;
    let source = hand_source(cfg, &a.hand);
    let samples = corpus
        .entries(Split::Train)
        .map(|(stream, e)| {
            let target = Transcript::parse_line(&e.transcript)
                .to_indices(&vocab)
                .ok_or_else(|| anyhow!("{}: transcript has tokens outside the vocabulary", e.id))?;
            corpus.sample(stream, e, target, &source, &cfg.filter, &table)
        })
        .collect::<Result<Vec<_>>>()?;
    let outcome = train_head(&samples, &train_cfg)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| dir.display().to_string())?;
    }
    save_mfmp(&out, &outcome.params).with_context(|| out.display().to_string())?;
    let summary = json!({
        "model": out,
        "samples": samples.len(),
        "epochs": train_cfg.epochs,
        "epoch_losses": outcome.epoch_losses,
    });
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

pub fn decode(cfg: &PipelineConfig, a: DecodeArgs) -> Result<()> {
    let (vocab, table) = tables(cfg)?;
    let params = load_mfmp(&a.model).with_context(|| format!("model {}", a.model.display()))?;
    let corpus = Corpus::load(&a.manifest)?;
    let source = hand_source(cfg, &a.hand);
    let split = match a.split {
        SplitArg::Train => Split::Train,
        SplitArg::Eval => Split::Eval,
    };
    let mut body = String::new();
    for (stream, e) in corpus.entries(split) {
        let s = corpus.sample(stream, e, Vec::new(), &source, &cfg.filter, &table)?;
        let indices = decode_utterance(&s.lip, &s.hand, &params).with_context(|| e.id.clone())?;
        body.push_str(&Transcript::from_indices(&indices, &vocab).to_line());
        body.push('\n');
    }
    emit(cfg.output(a.out, "hyps.txt"), &body)
}

pub fn eval(cfg: &PipelineConfig, a: EvalArgs) -> Result<()> {
    let refs = read_transcripts(&a.refs)?;
    let hyps = read_transcripts(&a.hyps)?;
    let tokens = token_errors(&refs, &hyps)?;
    let words = word_errors(&refs, &hyps)?;
    let metrics = json!({
        "cer": tokens.rate(),
        "wer": words.rate(),
        "token_edits": tokens.edits,
        "tokens": tokens.reference_len,
        "word_edits": words.edits,
        "words": words.reference_len,
        "sentences": refs.len(),
    });
    emit(
        cfg.output(a.out, "metrics.json"),
        &(serde_json::to_string_pretty(&metrics)? + "\n"),
    )
}

pub fn confusion(cfg: &PipelineConfig, a: ConfusionArgs) -> Result<()> {
    let vocab = cfg.vocabulary()?;
    let refs = read_transcripts(&a.refs)?;
    let hyps = read_transcripts(&a.hyps)?;
    let matrix = confusion_matrix(&refs, &hyps, &vocab)?;
    let base = cfg
        .output(a.out, "confusion")
        .unwrap_or_else(|| PathBuf::from("confusion"));
    if let Some(dir) = base.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| dir.display().to_string())?;
    }
    render_heatmap(&matrix, &vocab, &base)?;
    println!("{}", base.with_extension("csv").display());
    println!("{}", base.with_extension("pgm").display());
    Ok(())
}

pub fn synth(cfg: &PipelineConfig, a: SynthArgs) -> Result<()> {
    let dir = a
        .out_dir
        .or_else(|| cfg.output_dir.clone())
        .ok_or_else(|| anyhow!("--out-dir is required (or set output_dir)"))?;
    let n = a.n as usize;
    let n_eval = a.eval_count.unwrap_or(n / 5);
    if n_eval > n {
        bail!("--eval-count {n_eval} exceeds --n {n}");
    }
    let mut synth_cfg = cfg.synth.clone();
    if let Some(noise) = a.noise {
        synth_cfg.lip_noise_sigma = noise;
    }
    if let Some(d) = a.lip_dim {
        synth_cfg.lip_dim = d as usize;
    }
    synth_cfg.validate()?;
    let (vocab, table) = tables(cfg)?;
    let samples = generate_corpus(n, &vocab, &table, &synth_cfg)?;
    write_corpus(&dir, &samples, &synth_cfg, n_eval)?;
    let summary = json!({
        "manifest": dir.join("manifest.json"),
        "train": n - n_eval,
        "eval": n_eval,
        "seed": synth_cfg.rng_seed,
    });
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}
