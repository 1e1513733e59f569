//! A small pre-norm encoder-decoder transformer with learned positions and
//! embeddings tied to every output head.

mod finetune;
mod pretrain;

use nl2code_tensor::{Graph, ParamId, ParamStore, Tensor, TensorError, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::beam::{beam_search, greedy, Decoded, StepModel};
use crate::error::{ModelError, Result};
use crate::vocab::{Vocabulary, BOS, EOS, UNK};

pub use finetune::{fine_tune, fit_translation, memorized_fraction, train, translation_loss, TranslationPair};
pub use pretrain::{
    mlm_loss, pretrain, pretrain_objective, pretrain_steps, rtd_loss, sample_corruption, CorruptionPlan, MaskingPlan, PretrainPair,
    PretrainStep,
};

/// Which expression the replaced-token-detection loss evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RtdLoss {
    /// `-sum[s log p + (1 - s) log(1 - p)]`.
    #[default]
    Standard,
    /// `sum[s log p + (1 - s)(1 - log p)]`, for comparison only.
    Literal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransformerConfig {
    pub heads: usize,
    pub model_dim: usize,
    pub enc_layers: usize,
    pub dec_layers: usize,
    pub max_positions: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub beam_size: usize,
    /// Pre-training optimizer steps.
    pub train_steps: usize,
    pub seed: u64,
    pub mask_fraction: f64,
    pub corrupt_fraction: f64,
    pub fine_tune_epochs: usize,
    /// Dev-loss patience during fine-tuning (ignored without a dev set).
    pub patience: usize,
    pub max_decode_len: usize,
    pub clip_norm: f64,
    /// End fine-tuning once greedy decoding reproduces every training target.
    pub stop_when_memorized: bool,
    pub rtd_loss: RtdLoss,
}

impl Default for TransformerConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl TransformerConfig {
    pub fn desk() -> Self {
        Self {
            heads: 2,
            model_dim: 64,
            enc_layers: 2,
            dec_layers: 2,
            max_positions: 64,
            learning_rate: 1e-3,
            batch_size: 8,
            beam_size: 10,
            train_steps: 200,
            seed: 1,
            mask_fraction: 0.15,
            corrupt_fraction: 0.15,
            fine_tune_epochs: 50,
            patience: 10,
            max_decode_len: 63,
            clip_norm: 1.0,
            stop_when_memorized: false,
            rtd_loss: RtdLoss::Standard,
        }
    }

    pub fn full_scale() -> Self {
        Self {
            heads: 12,
            model_dim: 768,
            enc_layers: 12,
            dec_layers: 6,
            max_positions: 514,
            learning_rate: 5e-5,
            batch_size: 32,
            beam_size: 10,
            train_steps: 2800,
            max_decode_len: 128,
            ..Self::desk()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("heads", self.heads),
            ("model_dim", self.model_dim),
            ("max_positions", self.max_positions),
            ("batch_size", self.batch_size),
            ("beam_size", self.beam_size),
            ("max_decode_len", self.max_decode_len),
        ] {
            if v == 0 {
                return Err(ModelError::Config(format!("{name} must be at least 1")));
            }
        }
        if self.model_dim % self.heads != 0 {
            return Err(ModelError::Config(format!(
                "model_dim {} is not divisible by heads {}",
                self.model_dim, self.heads
            )));
        }
        for (name, f) in [("mask_fraction", self.mask_fraction), ("corrupt_fraction", self.corrupt_fraction)] {
            if !(f > 0.0 && f < 1.0) {
                return Err(ModelError::Config(format!("{name} must lie in (0, 1), got {f}")));
            }
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(ModelError::Config("learning_rate must be positive".into()));
        }
        if !(self.clip_norm > 0.0) {
            return Err(ModelError::Config("clip_norm must be positive".into()));
        }
        Ok(())
    }

    fn generator_dim(&self) -> usize {
        (self.model_dim / 2).max(1)
    }
}

/// How far a transformer's weights have been trained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Initialized,
    Pretrained,
    FineTuned,
}

#[derive(Debug, Clone, Copy)]
pub struct AttnWeights {
    pub wq: ParamId,
    pub wk: ParamId,
    pub wv: ParamId,
    pub wo: ParamId,
    pub bo: ParamId,
}

#[derive(Debug, Clone, Copy)]
struct Norm {
    gain: ParamId,
    bias: ParamId,
}

#[derive(Debug, Clone, Copy)]
struct FeedForward {
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
}

#[derive(Debug, Clone, Copy)]
struct EncLayer {
    ln1: Norm,
    attn: AttnWeights,
    ln2: Norm,
    ff: FeedForward,
}

#[derive(Debug, Clone, Copy)]
struct DecLayer {
    ln1: Norm,
    self_attn: AttnWeights,
    ln2: Norm,
    cross: AttnWeights,
    ln3: Norm,
    ff: FeedForward,
}

/// Token embedding, position table and layer stack of one encoder.
#[derive(Debug, Clone)]
struct EncoderWeights {
    embed: ParamId,
    pos: ParamId,
    layers: Vec<EncLayer>,
    norm: Option<Norm>,
    heads: usize,
}

#[derive(Debug, Clone)]
struct Weights {
    encoder: EncoderWeights,
    dec_pos: ParamId,
    dec_layers: Vec<DecLayer>,
    dec_norm: Option<Norm>,
    out_b: ParamId,
    mlm_b: ParamId,
    rtd_w: ParamId,
    rtd_b: ParamId,
    gen_e: (EncoderWeights, ParamId),
    gen_c: (EncoderWeights, ParamId),
}

struct Builder<'a> {
    store: &'a mut ParamStore,
    rng: &'a mut ChaCha8Rng,
}

impl Builder<'_> {
    fn matrix(&mut self, name: String, rows: usize, cols: usize) -> Result<ParamId> {
        Ok(self.store.add_uniform(name, rows, cols, rows, self.rng)?)
    }

    fn filled(&mut self, name: String, cols: usize, v: f64) -> Result<ParamId> {
        Ok(self.store.add_filled(name, 1, cols, v)?)
    }

    fn norm(&mut self, p: &str, d: usize) -> Result<Norm> {
        Ok(Norm {
            gain: self.filled(format!("{p}.g"), d, 1.0)?,
            bias: self.filled(format!("{p}.b"), d, 0.0)?,
        })
    }

    fn attn(&mut self, p: &str, d: usize) -> Result<AttnWeights> {
        Ok(AttnWeights {
            wq: self.matrix(format!("{p}.wq"), d, d)?,
            wk: self.matrix(format!("{p}.wk"), d, d)?,
            wv: self.matrix(format!("{p}.wv"), d, d)?,
            wo: self.matrix(format!("{p}.wo"), d, d)?,
            bo: self.filled(format!("{p}.bo"), d, 0.0)?,
        })
    }

    fn ff(&mut self, p: &str, d: usize) -> Result<FeedForward> {
        Ok(FeedForward {
            w1: self.matrix(format!("{p}.w1"), d, 4 * d)?,
            b1: self.filled(format!("{p}.b1"), 4 * d, 0.0)?,
            w2: self.matrix(format!("{p}.w2"), 4 * d, d)?,
            b2: self.filled(format!("{p}.b2"), d, 0.0)?,
        })
    }

    fn encoder(&mut self, p: &str, vocab: usize, d: usize, layers: usize, heads: usize, positions: usize) -> Result<EncoderWeights> {
        let embed = self.matrix(format!("{p}.embed"), vocab, d)?;
        let pos = self.store.add_uniform(format!("{p}.pos"), positions, d, d, self.rng)?;
        let mut ls = Vec::new();
        for l in 0..layers {
            ls.push(EncLayer {
                ln1: self.norm(&format!("{p}{l}.ln1"), d)?,
                attn: self.attn(&format!("{p}{l}.attn"), d)?,
                ln2: self.norm(&format!("{p}{l}.ln2"), d)?,
                ff: self.ff(&format!("{p}{l}.ff"), d)?,
            });
        }
        let norm = if layers > 0 { Some(self.norm(&format!("{p}.ln"), d)?) } else { None };
        Ok(EncoderWeights {
            embed,
            pos,
            layers: ls,
            norm,
            heads,
        })
    }
}

struct Lookup<'a>(&'a ParamStore);

impl Lookup<'_> {
    fn id(&self, name: String) -> Result<ParamId> {
        Ok(self.0.id(&name)?)
    }

    fn norm(&self, p: &str) -> Result<Norm> {
        Ok(Norm {
            gain: self.id(format!("{p}.g"))?,
            bias: self.id(format!("{p}.b"))?,
        })
    }

    fn attn(&self, p: &str) -> Result<AttnWeights> {
        Ok(AttnWeights {
            wq: self.id(format!("{p}.wq"))?,
            wk: self.id(format!("{p}.wk"))?,
            wv: self.id(format!("{p}.wv"))?,
            wo: self.id(format!("{p}.wo"))?,
            bo: self.id(format!("{p}.bo"))?,
        })
    }

    fn ff(&self, p: &str) -> Result<FeedForward> {
        Ok(FeedForward {
            w1: self.id(format!("{p}.w1"))?,
            b1: self.id(format!("{p}.b1"))?,
            w2: self.id(format!("{p}.w2"))?,
            b2: self.id(format!("{p}.b2"))?,
        })
    }

    fn encoder(&self, p: &str, layers: usize, heads: usize) -> Result<EncoderWeights> {
        let mut ls = Vec::new();
        for l in 0..layers {
            ls.push(EncLayer {
                ln1: self.norm(&format!("{p}{l}.ln1"))?,
                attn: self.attn(&format!("{p}{l}.attn"))?,
                ln2: self.norm(&format!("{p}{l}.ln2"))?,
                ff: self.ff(&format!("{p}{l}.ff"))?,
            });
        }
        Ok(EncoderWeights {
            embed: self.id(format!("{p}.embed"))?,
            pos: self.id(format!("{p}.pos"))?,
            layers: ls,
            norm: if layers > 0 { Some(self.norm(&format!("{p}.ln"))?) } else { None },
            heads,
        })
    }
}

impl Weights {
    fn lookup(store: &ParamStore, cfg: &TransformerConfig) -> Result<Self> {
        let lk = Lookup(store);
        let mut dec_layers = Vec::new();
        for l in 0..cfg.dec_layers {
            dec_layers.push(DecLayer {
                ln1: lk.norm(&format!("dec{l}.ln1"))?,
                self_attn: lk.attn(&format!("dec{l}.self"))?,
                ln2: lk.norm(&format!("dec{l}.ln2"))?,
                cross: lk.attn(&format!("dec{l}.cross"))?,
                ln3: lk.norm(&format!("dec{l}.ln3"))?,
                ff: lk.ff(&format!("dec{l}.ff"))?,
            });
        }
        Ok(Self {
            encoder: lk.encoder("enc", cfg.enc_layers, cfg.heads)?,
            dec_pos: lk.id("dec.pos".into())?,
            dec_layers,
            dec_norm: if cfg.dec_layers > 0 { Some(lk.norm("dec.ln")?) } else { None },
            out_b: lk.id("out.b".into())?,
            mlm_b: lk.id("mlm.b".into())?,
            rtd_w: lk.id("rtd.w".into())?,
            rtd_b: lk.id("rtd.b".into())?,
            gen_e: (lk.encoder("gen_e", 1, 1)?, lk.id("gen_e.out_b".into())?),
            gen_c: (lk.encoder("gen_c", 1, 1)?, lk.id("gen_c.out_b".into())?),
        })
    }
}

/// `softmax(Q K^T / sqrt(d_k) + mask) V`. Returns the output and the
/// attention weights.
pub fn scaled_dot_attention(g: &mut Graph<'_>, q: Var, k: Var, v: Var, mask: Option<Var>) -> Result<(Var, Var)> {
    let (_, dq) = g.shape(q);
    let (kr, dk) = g.shape(k);
    let (vr, _) = g.shape(v);
    if dq != dk || kr != vr {
        return Err(TensorError::ShapeMismatch {
            op: "scaled_dot_attention",
            left: vec![dq, kr],
            right: vec![dk, vr],
        }
        .into());
    }
    let kt = g.transpose(k);
    let scores = g.matmul(q, kt)?;
    let mut scores = g.scale(scores, 1.0 / (dk as f64).sqrt());
    if let Some(m) = mask {
        scores = g.add(scores, m)?;
    }
    let weights = g.softmax_rows(scores);
    let out = g.matmul(weights, v)?;
    Ok((out, weights))
}

/// `Concat(head_1..head_h) W^O + b`, where head `i` attends with the
/// `i`-th column block of the projections. Attention weights of every head
/// are pushed onto `probe`.
pub fn multi_head(
    g: &mut Graph<'_>,
    xq: Var,
    xkv: Var,
    w: &AttnWeights,
    heads: usize,
    mask: Option<Var>,
    probe: &mut Vec<Var>,
) -> Result<Var> {
    let (_, d) = g.shape(xq);
    if heads == 0 || d % heads != 0 {
        return Err(ModelError::Config(format!("width {d} is not divisible by {heads} heads")));
    }
    let dk = d / heads;
    let wq = g.param(w.wq);
    let wk = g.param(w.wk);
    let wv = g.param(w.wv);
    let q = g.matmul(xq, wq)?;
    let k = g.matmul(xkv, wk)?;
    let v = g.matmul(xkv, wv)?;
    let mut outs = Vec::with_capacity(heads);
    for h in 0..heads {
        let qh = g.slice_cols(q, h * dk, dk)?;
        let kh = g.slice_cols(k, h * dk, dk)?;
        let vh = g.slice_cols(v, h * dk, dk)?;
        let (o, weights) = scaled_dot_attention(g, qh, kh, vh, mask)?;
        probe.push(weights);
        outs.push(o);
    }
    let cat = if heads == 1 { outs[0] } else { g.concat_cols(&outs)? };
    let wo = g.param(w.wo);
    let bo = g.param(w.bo);
    let out = g.matmul(cat, wo)?;
    Ok(g.add(out, bo)?)
}

/// Adds row `i` of the position table to embedding row `i`.
pub fn positional_encode(g: &mut Graph<'_>, embeddings: Var, table: Var) -> Result<Var> {
    let (n, _) = g.shape(embeddings);
    let (max, _) = g.shape(table);
    if n > max {
        return Err(ModelError::LengthOverflow { len: n, max });
    }
    let pos = g.slice_rows(table, 0, n)?;
    Ok(g.add(embeddings, pos)?)
}

/// `T x T` additive mask with `-inf` above the diagonal.
pub fn causal_mask(n: usize) -> Tensor {
    let mut t = Tensor::zeros(&[n, n]);
    for r in 0..n {
        for c in r + 1..n {
            t.data_mut()[r * n + c] = f64::NEG_INFINITY;
        }
    }
    t
}

fn norm(g: &mut Graph<'_>, x: Var, n: &Norm) -> Result<Var> {
    let gain = g.param(n.gain);
    let bias = g.param(n.bias);
    Ok(g.layer_norm(x, gain, bias)?)
}

fn feed_forward(g: &mut Graph<'_>, x: Var, f: &FeedForward) -> Result<Var> {
    let w1 = g.param(f.w1);
    let b1 = g.param(f.b1);
    let w2 = g.param(f.w2);
    let b2 = g.param(f.b2);
    let h = g.matmul(x, w1)?;
    let h = g.add(h, b1)?;
    let h = g.gelu(h);
    let h = g.matmul(h, w2)?;
    Ok(g.add(h, b2)?)
}

fn run_encoder(g: &mut Graph<'_>, w: &EncoderWeights, ids: &[usize], probe: &mut Vec<Var>) -> Result<Var> {
    let table = g.param(w.embed);
    let (vocab, _) = g.shape(table);
    check_ids(ids, vocab)?;
    let emb = g.gather_rows(table, ids)?;
    let pos = g.param(w.pos);
    let mut x = positional_encode(g, emb, pos)?;
    for layer in &w.layers {
        let h = norm(g, x, &layer.ln1)?;
        let a = multi_head(g, h, h, &layer.attn, w.heads, None, probe)?;
        x = g.add(x, a)?;
        let h = norm(g, x, &layer.ln2)?;
        let f = feed_forward(g, h, &layer.ff)?;
        x = g.add(x, f)?;
    }
    match &w.norm {
        Some(n) => norm(g, x, n),
        None => Ok(x),
    }
}

fn check_ids(ids: &[usize], vocab: usize) -> Result<()> {
    if ids.is_empty() {
        return Err(ModelError::Empty("input sequence"));
    }
    match ids.iter().find(|&&i| i >= vocab) {
        Some(&id) => Err(ModelError::InvalidId { id, size: vocab }),
        None => Ok(()),
    }
}

/// Logits `h E^T + b` against a tied embedding table.
fn tied_logits(g: &mut Graph<'_>, h: Var, embed: ParamId, bias: ParamId) -> Result<Var> {
    let e = g.param(embed);
    let et = g.transpose(e);
    let b = g.param(bias);
    let logits = g.matmul(h, et)?;
    Ok(g.add(logits, b)?)
}

#[derive(Debug, Clone)]
pub struct Transformer {
    pub config: TransformerConfig,
    pub vocab: Vocabulary,
    pub params: ParamStore,
    pub stage: Stage,
    w: Weights,
}

impl Transformer {
    /// Fresh weights for the translator, the pre-training heads and both
    /// generators, drawn from the config seed.
    pub fn init(config: TransformerConfig, vocab: Vocabulary) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut store = ParamStore::new();
        let (d, v, p) = (config.model_dim, vocab.len(), config.max_positions);
        {
            let mut b = Builder {
                store: &mut store,
                rng: &mut rng,
            };
            b.encoder("enc", v, d, config.enc_layers, config.heads, p)?;
            b.store.add_uniform("dec.pos", p, d, d, b.rng)?;
            for l in 0..config.dec_layers {
                b.norm(&format!("dec{l}.ln1"), d)?;
                b.attn(&format!("dec{l}.self"), d)?;
                b.norm(&format!("dec{l}.ln2"), d)?;
                b.attn(&format!("dec{l}.cross"), d)?;
                b.norm(&format!("dec{l}.ln3"), d)?;
                b.ff(&format!("dec{l}.ff"), d)?;
            }
            if config.dec_layers > 0 {
                b.norm("dec.ln", d)?;
            }
            b.filled("out.b".into(), v, 0.0)?;
            b.filled("mlm.b".into(), v, 0.0)?;
            b.matrix("rtd.w".into(), d, 1)?;
            b.filled("rtd.b".into(), 1, 0.0)?;
            let gd = config.generator_dim();
            b.encoder("gen_e", v, gd, 1, 1, p)?;
            b.filled("gen_e.out_b".into(), v, 0.0)?;
            b.encoder("gen_c", v, gd, 1, 1, p)?;
            b.filled("gen_c.out_b".into(), v, 0.0)?;
        }
        Self::from_parts(config, vocab, store, Stage::Initialized)
    }

    pub fn from_parts(config: TransformerConfig, vocab: Vocabulary, params: ParamStore, stage: Stage) -> Result<Self> {
        config.validate()?;
        let w = Weights::lookup(&params, &config)?;
        let embed = params.get(w.encoder.embed);
        if embed.rows() != vocab.len() || embed.cols() != config.model_dim {
            return Err(ModelError::Metadata(format!(
                "embedding has shape {:?}, expected [{}, {}]",
                embed.shape(),
                vocab.len(),
                config.model_dim
            )));
        }
        let pos = params.get(w.encoder.pos);
        if pos.rows() != config.max_positions {
            return Err(ModelError::Metadata(format!(
                "position table has {} rows, expected {}",
                pos.rows(),
                config.max_positions
            )));
        }
        Ok(Self {
            config,
            vocab,
            params,
            stage,
            w,
        })
    }

    pub fn embed_param(&self) -> ParamId {
        self.w.encoder.embed
    }

    pub fn encoder_positions(&self) -> ParamId {
        self.w.encoder.pos
    }

    pub fn decoder_positions(&self) -> ParamId {
        self.w.dec_pos
    }

    pub fn output_bias(&self) -> ParamId {
        self.w.out_b
    }

    pub fn mlm_bias(&self) -> ParamId {
        self.w.mlm_b
    }

    pub fn rtd_head(&self) -> (ParamId, ParamId) {
        (self.w.rtd_w, self.w.rtd_b)
    }

    /// Encoder output `T x d`.
    pub fn encode_stack(&self, g: &mut Graph<'_>, ids: &[usize]) -> Result<Var> {
        self.encode_stack_probed(g, ids, &mut Vec::new())
    }

    /// As [`Self::encode_stack`], collecting every attention-weight matrix.
    pub fn encode_stack_probed(&self, g: &mut Graph<'_>, ids: &[usize], probe: &mut Vec<Var>) -> Result<Var> {
        run_encoder(g, &self.w.encoder, ids, probe)
    }

    /// Decoder log-probabilities `T x V` for input `ids` (starting with BOS)
    /// attending to `memory`.
    pub fn decode_stack(&self, g: &mut Graph<'_>, ids: &[usize], memory: Var) -> Result<Var> {
        self.decode_stack_probed(g, ids, memory, &mut Vec::new())
    }

    pub fn decode_stack_probed(&self, g: &mut Graph<'_>, ids: &[usize], memory: Var, probe: &mut Vec<Var>) -> Result<Var> {
        check_ids(ids, self.vocab.len())?;
        let table = g.param(self.w.encoder.embed);
        let emb = g.gather_rows(table, ids)?;
        let pos = g.param(self.w.dec_pos);
        let mut x = positional_encode(g, emb, pos)?;
        let mask = g.leaf(causal_mask(ids.len()));
        let heads = self.config.heads;
        for layer in &self.w.dec_layers {
            let h = norm(g, x, &layer.ln1)?;
            let a = multi_head(g, h, h, &layer.self_attn, heads, Some(mask), probe)?;
            x = g.add(x, a)?;
            let h = norm(g, x, &layer.ln2)?;
            let a = multi_head(g, h, memory, &layer.cross, heads, None, probe)?;
            x = g.add(x, a)?;
            let h = norm(g, x, &layer.ln3)?;
            let f = feed_forward(g, h, &layer.ff)?;
            x = g.add(x, f)?;
        }
        if let Some(n) = &self.w.dec_norm {
            x = norm(g, x, n)?;
        }
        let logits = tied_logits(g, x, self.w.encoder.embed, self.w.out_b)?;
        Ok(g.log_softmax_rows(logits))
    }

    /// MLM head log-probabilities over encoder output `h`.
    pub fn mlm_logp(&self, g: &mut Graph<'_>, h: Var) -> Result<Var> {
        let logits = tied_logits(g, h, self.w.encoder.embed, self.w.mlm_b)?;
        Ok(g.log_softmax_rows(logits))
    }

    /// Discriminator logits `T x 1` (positive means "original").
    pub fn rtd_logits(&self, g: &mut Graph<'_>, h: Var) -> Result<Var> {
        let w = g.param(self.w.rtd_w);
        let b = g.param(self.w.rtd_b);
        let z = g.matmul(h, w)?;
        Ok(g.add(z, b)?)
    }

    /// Log-probabilities of generator `which` (0 for intents, 1 for
    /// snippets) over the masked input.
    pub fn generator_logp(&self, g: &mut Graph<'_>, which: usize, ids: &[usize]) -> Result<Var> {
        let (enc, bias) = if which == 0 { &self.w.gen_e } else { &self.w.gen_c };
        let h = run_encoder(g, enc, ids, &mut Vec::new())?;
        let logits = tied_logits(g, h, enc.embed, *bias)?;
        Ok(g.log_softmax_rows(logits))
    }

    pub fn max_decode_len(&self) -> usize {
        self.config.max_decode_len.min(self.config.max_positions.saturating_sub(1)).max(1)
    }

    /// Source ids for intent tokens; an empty intent becomes a lone UNK.
    pub fn source_ids(&self, tokens: &[String]) -> Vec<usize> {
        let ids = self.vocab.encode(tokens);
        if ids.is_empty() {
            vec![UNK]
        } else {
            ids
        }
    }

    pub fn searcher(&self, src: &[usize]) -> Result<TransformerSearch<'_>> {
        let mut g = Graph::new(&self.params);
        let memory = self.encode_stack(&mut g, src)?;
        Ok(TransformerSearch {
            model: self,
            memory: g.value(memory).clone(),
        })
    }

    pub fn decode_ids(&self, src: &[usize], beam: usize) -> Result<Decoded> {
        let s = self.searcher(src)?;
        if beam <= 1 {
            greedy(&s, self.max_decode_len())
        } else {
            beam_search(&s, beam, self.max_decode_len())
        }
    }

    pub fn decode_tokens(&self, intent: &[String], beam: usize) -> Result<Vec<String>> {
        let d = self.decode_ids(&self.source_ids(intent), beam)?;
        self.vocab.decode(&d.token_ids)
    }
}

/// Frozen encoder memory for one source; decoder states are prefixes.
pub struct TransformerSearch<'m> {
    model: &'m Transformer,
    memory: Tensor,
}

impl StepModel for TransformerSearch<'_> {
    type State = Vec<usize>;

    fn start(&self) -> Result<Vec<usize>> {
        Ok(Vec::new())
    }

    fn step(&self, prefix: &Vec<usize>, token: usize) -> Result<(Vec<usize>, Vec<f64>)> {
        let mut ids = prefix.clone();
        ids.push(token);
        let mut g = Graph::new(&self.model.params);
        let memory = g.leaf(self.memory.clone());
        let logp = self.model.decode_stack(&mut g, &ids, memory)?;
        let last = g.value(logp).row_slice(ids.len() - 1).to_vec();
        Ok((ids, last))
    }

    fn bos(&self) -> usize {
        BOS
    }

    fn eos(&self) -> usize {
        EOS
    }
}
