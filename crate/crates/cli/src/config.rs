use std::path::{Path, PathBuf};

use acsr_core::domain::{CodingTable, Vocabulary};
use acsr_core::keyframe::FilterConfig;
use acsr_core::prompting::PromptTemplateConfig;
use acsr_core::recognizer::{EndpointConfig, MockConfig};
use acsr_core::synth::SynthConfig;
use acsr_core::train::TrainConfig;
use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

/// TOML pipeline configuration. Every section is optional; relative paths are
/// resolved against the directory holding the config file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub vocabulary: Option<PathBuf>,
    pub coding_table: Option<PathBuf>,
    pub support_manifest: Option<PathBuf>,
    pub template: Option<PathBuf>,
    /// Default destination for outputs not given with `--out`.
    pub output_dir: Option<PathBuf>,
    pub filter: FilterConfig,
    pub mock: MockConfig,
    pub endpoint: EndpointConfig,
    pub train: TrainConfig,
    pub synth: SynthConfig,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("{}", path.display()))?;
        let mut cfg: Self = toml::from_str(&text).with_context(|| format!("{}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut cfg.vocabulary,
            &mut cfg.coding_table,
            &mut cfg.support_manifest,
            &mut cfg.template,
            &mut cfg.output_dir,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    /// Applies the global `--seed` and `--jobs` flags.
    pub fn apply_globals(&mut self, seed: Option<u64>, jobs: Option<usize>) {
        if let Some(seed) = seed {
            self.synth.rng_seed = seed;
            self.mock.rng_seed = seed;
            self.train.seed = seed;
        }
        if let Some(jobs) = jobs {
            self.train.jobs = jobs;
        }
    }

    pub fn vocabulary(&self) -> Result<Vocabulary> {
        match &self.vocabulary {
            Some(p) => Vocabulary::load(p).with_context(|| format!("vocabulary {}", p.display())),
            None => Ok(Vocabulary::builtin()),
        }
    }

    pub fn coding_table(&self, vocab: &Vocabulary) -> Result<CodingTable> {
        match &self.coding_table {
            Some(p) => {
                CodingTable::load(p, vocab).with_context(|| format!("coding table {}", p.display()))
            }
            None => Ok(CodingTable::builtin(vocab)),
        }
    }

    pub fn template(&self) -> Result<PromptTemplateConfig> {
        match &self.template {
            Some(p) => Ok(PromptTemplateConfig::load(p)?),
            None => Ok(PromptTemplateConfig::default()),
        }
    }

    /// `explicit`, else `output_dir/name`, else `None`.
    pub fn output(&self, explicit: Option<PathBuf>, name: &str) -> Option<PathBuf> {
        explicit.or_else(|| self.output_dir.as_ref().map(|d| d.join(name)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_sections_keep_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(
            &path,
            "template = \"t.toml\"\n[filter]\nsigma = 4.5\n[train]\nepochs = 3\n",
        )
        .unwrap();
        let cfg = PipelineConfig::load(&path).unwrap();
        assert_eq!(cfg.filter.sigma, 4.5);
        assert_eq!(cfg.filter.theta, FilterConfig::default().theta);
        assert_eq!(cfg.train.epochs, 3);
        assert_eq!(
            cfg.train.learning_rate,
            TrainConfig::default().learning_rate
        );
        assert_eq!(cfg.template, Some(dir.path().join("t.toml")));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "sigmaa = 3\n").unwrap();
        assert!(PipelineConfig::load(&path).is_err());
    }

    #[test]
    fn seed_flag_reaches_every_stage() {
        let mut cfg = PipelineConfig::default();
        cfg.apply_globals(Some(42), Some(3));
        assert_eq!(
            (
                cfg.synth.rng_seed,
                cfg.mock.rng_seed,
                cfg.train.seed,
                cfg.train.jobs
            ),
            (42, 42, 42, 3)
        );
    }
}
