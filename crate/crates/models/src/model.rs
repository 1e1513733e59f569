//! A trained network bundled with its pre/post-processing, plus on-disk
//! persistence as `model.ckpt` and a `model.json` sidecar.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use nl2code_core::eval::Translator;
use nl2code_core::corpus::Corpus;
use nl2code_core::pipeline::{clean_snippet, tokenize_snippet_lenient, LexiconConfig, Pipeline, Rendered, TokenSeq};
use nl2code_core::{CoreError, Lang};
use nl2code_tensor::{checkpoint, ParamStore};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{ModelError, Result};
use crate::seq2seq::{Seq2Seq, Seq2SeqConfig};
use crate::transformer::{Stage, Transformer, TransformerConfig};
use crate::vocab::Vocabulary;

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const SIDECAR_FILE: &str = "model.json";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub enum Network {
    Seq2Seq(Seq2Seq),
    Transformer(Transformer),
    Echo(EchoTable),
}

/// A lookup baseline with no weights. Known intents map to their stored
/// snippet; anything else is echoed back as its standardized intent tokens.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EchoTable {
    pub entries: BTreeMap<String, String>,
}

impl EchoTable {
    /// First occurrence wins for repeated intents.
    pub fn from_corpus(corpus: &Corpus) -> Self {
        let mut entries = BTreeMap::new();
        for s in corpus.samples() {
            entries.entry(s.intent.trim().to_string()).or_insert_with(|| s.snippet.clone());
        }
        Self { entries }
    }

    pub fn lookup(&self, intent: &str) -> Option<&str> {
        self.entries.get(intent.trim()).map(String::as_str)
    }
}

/// Everything in the sidecar except the weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Architecture {
    Seq2seq {
        config: Seq2SeqConfig,
        src_vocab: Vocabulary,
        tgt_vocab: Vocabulary,
    },
    Transformer {
        config: TransformerConfig,
        vocab: Vocabulary,
        stage: Stage,
    },
    Echo {
        table: EchoTable,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sidecar {
    pub format_version: u32,
    pub lang: Lang,
    pub beam_size: usize,
    pub config_fingerprint: String,
    pub lexicon: LexiconConfig,
    pub architecture: Architecture,
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub pipeline: Pipeline,
    pub network: Network,
    pub beam_size: usize,
}

impl TrainedModel {
    pub fn new(network: Network, pipeline: Pipeline) -> Self {
        let beam_size = match &network {
            Network::Seq2Seq(m) => m.config.beam_size,
            Network::Transformer(m) => m.config.beam_size,
            Network::Echo(_) => 1,
        };
        Self {
            pipeline,
            network,
            beam_size,
        }
    }

    pub fn with_beam(mut self, beam: usize) -> Self {
        self.beam_size = beam.max(1);
        self
    }

    pub fn kind(&self) -> &'static str {
        match self.network {
            Network::Seq2Seq(_) => "seq2seq",
            Network::Transformer(_) => "transformer",
            Network::Echo(_) => "echo",
        }
    }

    fn architecture(&self) -> Architecture {
        match &self.network {
            Network::Seq2Seq(m) => Architecture::Seq2seq {
                config: m.config.clone(),
                src_vocab: m.src_vocab.clone(),
                tgt_vocab: m.tgt_vocab.clone(),
            },
            Network::Transformer(m) => Architecture::Transformer {
                config: m.config.clone(),
                vocab: m.vocab.clone(),
                stage: m.stage,
            },
            Network::Echo(t) => Architecture::Echo { table: t.clone() },
        }
    }

    /// SHA-256 over the architecture kind, its config and the language.
    pub fn config_fingerprint(&self) -> String {
        let config = match &self.network {
            Network::Seq2Seq(m) => serde_json::to_string(&m.config),
            Network::Transformer(m) => serde_json::to_string(&m.config),
            Network::Echo(t) => serde_json::to_string(t),
        }
        .expect("configs serialize");
        let mut h = Sha256::new();
        h.update(self.kind().as_bytes());
        h.update(b"\0");
        h.update(self.pipeline.lang.as_str().as_bytes());
        h.update(b"\0");
        h.update(config.as_bytes());
        hex::encode(h.finalize())
    }

    pub fn sidecar(&self) -> Sidecar {
        Sidecar {
            format_version: FORMAT_VERSION,
            lang: self.pipeline.lang,
            beam_size: self.beam_size,
            config_fingerprint: self.config_fingerprint(),
            lexicon: self.pipeline.lexicon.clone(),
            architecture: self.architecture(),
        }
    }

    fn params(&self) -> ParamStore {
        match &self.network {
            Network::Seq2Seq(m) => m.params.clone(),
            Network::Transformer(m) => m.params.clone(),
            Network::Echo(_) => ParamStore::new(),
        }
    }

    /// Writes the checkpoint and sidecar into `dir`, creating it.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let io = |source| ModelError::Io {
            path: dir.to_path_buf(),
            source,
        };
        fs::create_dir_all(dir).map_err(io)?;
        checkpoint::save(&self.params(), dir.join(CHECKPOINT_FILE))?;
        let json = serde_json::to_string_pretty(&self.sidecar()).expect("sidecar serializes");
        fs::write(dir.join(SIDECAR_FILE), json + "\n").map_err(|source| ModelError::Io {
            path: dir.join(SIDECAR_FILE),
            source,
        })
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let side_path = dir.join(SIDECAR_FILE);
        let text = fs::read_to_string(&side_path).map_err(|source| ModelError::Io {
            path: side_path.clone(),
            source,
        })?;
        let side: Sidecar =
            serde_json::from_str(&text).map_err(|e| ModelError::Metadata(format!("{}: {e}", side_path.display())))?;
        if side.format_version != FORMAT_VERSION {
            return Err(ModelError::Metadata(format!(
                "unsupported format version {}",
                side.format_version
            )));
        }
        let params = checkpoint::load(dir.join(CHECKPOINT_FILE))?;
        let network = match side.architecture {
            Architecture::Seq2seq {
                config,
                src_vocab,
                tgt_vocab,
            } => Network::Seq2Seq(Seq2Seq::from_parts(config, src_vocab, tgt_vocab, params)?),
            Architecture::Transformer { config, vocab, stage } => {
                Network::Transformer(Transformer::from_parts(config, vocab, params, stage)?)
            }
            Architecture::Echo { table } => {
                if !params.is_empty() {
                    return Err(ModelError::Metadata("echo model with non-empty checkpoint".into()));
                }
                Network::Echo(table)
            }
        };
        let model = Self {
            pipeline: Pipeline::new(side.lang, side.lexicon),
            network,
            beam_size: side.beam_size.max(1),
        };
        if model.config_fingerprint() != side.config_fingerprint {
            return Err(ModelError::Metadata("config fingerprint does not match the stored config".into()));
        }
        Ok(model)
    }

    /// Standardized intent tokens in, standardized snippet tokens out.
    pub fn decode_tokens(&self, intent: &[String]) -> Result<Vec<String>> {
        match &self.network {
            Network::Seq2Seq(m) => m.decode_tokens(intent, self.beam_size),
            Network::Transformer(m) => m.decode_tokens(intent, self.beam_size),
            Network::Echo(_) => Ok(intent.to_vec()),
        }
    }

    /// The full chain from raw intent to cleaned snippet.
    pub fn translate_rendered(&self, intent: &str) -> Result<Rendered> {
        if let Network::Echo(table) = &self.network {
            if let Some(snippet) = table.lookup(intent) {
                let tokens = tokenize_snippet_lenient(snippet, self.pipeline.lang);
                let text = clean_snippet(&tokens, self.pipeline.lang);
                return Ok(Rendered {
                    tokens,
                    text,
                    unbound_placeholders: Vec::new(),
                });
            }
        }
        let prepared = self.pipeline.prepare_intent(intent)?;
        let decoded = self.decode_tokens(&prepared.tokens)?;
        let decoded = TokenSeq::new(decoded)?;
        Ok(self.pipeline.render(&decoded, &prepared.slots))
    }
}

impl Translator for TrainedModel {
    fn lang(&self) -> Lang {
        self.pipeline.lang
    }

    fn translate(&self, intent: &str) -> nl2code_core::Result<String> {
        match self.translate_rendered(intent) {
            Ok(r) => Ok(r.text),
            Err(ModelError::Core(e)) => Err(e),
            Err(e) => Err(CoreError::Translation(e.to_string())),
        }
    }
}
