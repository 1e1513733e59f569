//! The TOML run configuration.

use std::fs;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use nl2code_core::pipeline::{LexiconConfig, LexiconPaths};
use nl2code_core::Lang;
use nl2code_models::seq2seq::Seq2SeqConfig;
use nl2code_models::transformer::TransformerConfig;
use serde::{Deserialize, Serialize};

use crate::exit::{usage, CliResult};

pub const RESOLVED_CONFIG_FILE: &str = "resolved_config.toml";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Seq2seq,
    Transformer,
    /// Lookup table over the training intents; no learning.
    Echo,
}

/// Corpus locations. Either `corpus` (split here by program) or explicit
/// `train`/`dev`/`test` files.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corpus: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dev: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test: Option<PathBuf>,
    /// Pre-training corpus; falls back to the training split.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pretrain: Option<PathBuf>,
    #[serde(default)]
    pub test_programs: Vec<String>,
    #[serde(default)]
    pub dev_fraction: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LexiconFiles {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stopwords: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub asm_keywords: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub py_keywords: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub english_words: Option<PathBuf>,
}

impl LexiconFiles {
    pub fn load(&self) -> CliResult<LexiconConfig> {
        let paths = LexiconPaths {
            stopwords: self.stopwords.as_deref(),
            asm_keywords: self.asm_keywords.as_deref(),
            py_keywords: self.py_keywords.as_deref(),
            english_words: self.english_words.as_deref(),
        };
        Ok(LexiconConfig::load(&paths)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub lang: Lang,
    #[serde(default = "default_model")]
    pub model: ModelKind,
    /// The one seed; copied into every model section on resolution.
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Directory of a pre-trained transformer to fine-tune.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pretrained: Option<PathBuf>,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub lexicon: LexiconFiles,
    #[serde(default)]
    pub seq2seq: Seq2SeqConfig,
    #[serde(default)]
    pub transformer: TransformerConfig,
}

fn default_model() -> ModelKind {
    ModelKind::Seq2seq
}

fn default_seed() -> u64 {
    1
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub model: Option<ModelKind>,
    pub lang: Option<Lang>,
    pub beam: Option<usize>,
}

impl RunConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| usage(format!("config: {e}")))
    }

    /// Reads a config file; relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.rebase(base);
        Ok(cfg)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(p) = p {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        };
        fix(&mut self.pretrained);
        let d = &mut self.data;
        for p in [&mut d.corpus, &mut d.train, &mut d.dev, &mut d.test, &mut d.pretrain] {
            fix(p);
        }
        let l = &mut self.lexicon;
        for p in [&mut l.stopwords, &mut l.asm_keywords, &mut l.py_keywords, &mut l.english_words] {
            fix(p);
        }
    }

    /// Applies overrides, propagates the seed and validates everything.
    pub fn resolve(mut self, o: &Overrides) -> CliResult<Self> {
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(model) = o.model {
            self.model = model;
        }
        if let Some(lang) = o.lang {
            self.lang = lang;
        }
        if let Some(beam) = o.beam {
            self.seq2seq.beam_size = beam;
            self.transformer.beam_size = beam;
        }
        self.seq2seq.seed = self.seed;
        self.transformer.seed = self.seed;
        self.seq2seq.validate().map_err(|e| usage(format!("[seq2seq] {e}")))?;
        self.transformer.validate().map_err(|e| usage(format!("[transformer] {e}")))?;
        if self.data.corpus.is_some() && (self.data.train.is_some() || self.data.dev.is_some() || self.data.test.is_some()) {
            return Err(usage("[data] give either `corpus` or explicit train/dev/test files, not both"));
        }
        if !(0.0..1.0).contains(&self.data.dev_fraction) {
            return Err(usage(format!("[data] dev_fraction {} outside [0, 1)", self.data.dev_fraction)));
        }
        if self.data.corpus.is_none() && (!self.data.test_programs.is_empty() || self.data.dev_fraction > 0.0) {
            return Err(usage("[data] test_programs and dev_fraction need `corpus`"));
        }
        if self.pretrained.is_some() && self.model != ModelKind::Transformer {
            return Err(usage("`pretrained` only applies to the transformer"));
        }
        Ok(self)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn write_resolved(&self, dir: &Path) -> CliResult<PathBuf> {
        let path = dir.join(RESOLVED_CONFIG_FILE);
        fs::write(&path, self.to_toml()).map_err(|e| usage(format!("cannot write {}: {e}", path.display())))?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "lang = \"assembly\"\n[data]\ntrain = \"train.jsonl\"\n";

    #[test]
    fn minimal_config_gets_defaults() {
        let c = RunConfig::parse(MINIMAL).unwrap();
        assert_eq!(c.model, ModelKind::Seq2seq);
        assert_eq!(c.seed, 1);
        assert_eq!(c.seq2seq, Seq2SeqConfig::desk());
    }

    #[test]
    fn unknown_keys_rejected() {
        for extra in ["bogus = 1\n", "[seq2seq]\nhidden = 3\n", "[data]\ntrain = \"x\"\nsplit = 2\n"] {
            let text = format!("lang = \"python\"\n{extra}");
            assert!(RunConfig::parse(&text).is_err(), "{extra}");
        }
    }

    #[test]
    fn seed_reaches_every_model_section() {
        let c = RunConfig::parse(MINIMAL)
            .unwrap()
            .resolve(&Overrides {
                seed: Some(9),
                ..Overrides::default()
            })
            .unwrap();
        assert_eq!((c.seed, c.seq2seq.seed, c.transformer.seed), (9, 9, 9));
    }

    #[test]
    fn resolved_config_parses_back() {
        let c = RunConfig::parse(MINIMAL).unwrap().resolve(&Overrides::default()).unwrap();
        assert_eq!(RunConfig::parse(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn relative_paths_follow_the_config_file() {
        let mut c = RunConfig::parse(MINIMAL).unwrap();
        c.rebase(Path::new("/runs/a"));
        assert_eq!(c.data.train.as_deref(), Some(Path::new("/runs/a/train.jsonl")));
    }

    #[test]
    fn conflicting_data_sources_rejected() {
        let text = "lang = \"assembly\"\n[data]\ncorpus = \"a\"\ntrain = \"b\"\n";
        assert!(RunConfig::parse(text).unwrap().resolve(&Overrides::default()).is_err());
    }
}
