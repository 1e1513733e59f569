//! Bidirectional LSTM encoder, additive attention and an LSTM decoder.

use log::info;
use nl2code_core::corpus::Corpus;
use nl2code_core::pipeline::Pipeline;
use nl2code_tensor::{clip_grad_norm, lstm_cell, AdamConfig, AdamState, Graph, LstmWeights, ParamId, ParamStore, Tensor, Var};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::beam::{beam_search, greedy, Decoded, StepModel};
use crate::error::{ModelError, Result};
use crate::train_log::{EpochRecord, TrainLog};
use crate::vocab::{Vocabulary, BOS, EOS, UNK};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Seq2SeqConfig {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub layers: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub beam_size: usize,
    pub max_decode_len: usize,
    pub seed: u64,
    pub learning_rate: f64,
    pub clip_norm: f64,
}

impl Default for Seq2SeqConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl Seq2SeqConfig {
    /// Small enough to train on a laptop CPU in minutes.
    pub fn desk() -> Self {
        Self {
            embed_dim: 64,
            hidden_dim: 128,
            layers: 1,
            max_epochs: 200,
            patience: 10,
            beam_size: 5,
            max_decode_len: 64,
            seed: 1,
            learning_rate: 1e-3,
            clip_norm: 5.0,
        }
    }

    pub fn full_scale() -> Self {
        Self {
            embed_dim: 512,
            hidden_dim: 512,
            ..Self::desk()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("embed_dim", self.embed_dim),
            ("hidden_dim", self.hidden_dim),
            ("layers", self.layers),
            ("max_epochs", self.max_epochs),
            ("patience", self.patience),
            ("beam_size", self.beam_size),
            ("max_decode_len", self.max_decode_len),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(ModelError::Config(format!("{name} must be at least 1")));
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
}

#[derive(Debug, Clone)]
struct Weights {
    src_embed: ParamId,
    tgt_embed: ParamId,
    enc: Vec<(LstmWeights, LstmWeights)>,
    bridge: Vec<(ParamId, ParamId)>,
    att_wh: ParamId,
    att_ws: ParamId,
    att_b: ParamId,
    att_v: ParamId,
    dec: Vec<LstmWeights>,
    out_w: ParamId,
    out_b: ParamId,
}

impl Weights {
    fn lookup(store: &ParamStore, layers: usize) -> Result<Self> {
        let mut enc = Vec::new();
        let mut bridge = Vec::new();
        let mut dec = Vec::new();
        for l in 0..layers {
            enc.push((
                LstmWeights::lookup(store, &format!("enc{l}.fwd"))?,
                LstmWeights::lookup(store, &format!("enc{l}.bwd"))?,
            ));
            bridge.push((store.id(&format!("bridge{l}.w"))?, store.id(&format!("bridge{l}.b"))?));
            dec.push(LstmWeights::lookup(store, &format!("dec{l}"))?);
        }
        Ok(Self {
            src_embed: store.id("src_embed")?,
            tgt_embed: store.id("tgt_embed")?,
            enc,
            bridge,
            att_wh: store.id("att.wh")?,
            att_ws: store.id("att.ws")?,
            att_b: store.id("att.b")?,
            att_v: store.id("att.v")?,
            dec,
            out_w: store.id("out.w")?,
            out_b: store.id("out.b")?,
        })
    }
}

/// Encoder output: `states` is `T x 2*hidden`, `summary` is the last
/// forward state next to the first backward state of the top layer.
#[derive(Debug, Clone, Copy)]
pub struct Encoded {
    pub states: Var,
    pub projected: Var,
    pub summary: Var,
}

/// Per-layer decoder state.
#[derive(Debug, Clone)]
pub struct DecoderState {
    pub h: Vec<Var>,
    pub c: Vec<Var>,
}

/// Output of one decoder step.
#[derive(Debug, Clone)]
pub struct Step {
    pub state: DecoderState,
    pub logp: Var,
    pub alpha: Var,
}

#[derive(Debug, Clone)]
pub struct Seq2Seq {
    pub config: Seq2SeqConfig,
    pub src_vocab: Vocabulary,
    pub tgt_vocab: Vocabulary,
    pub params: ParamStore,
    w: Weights,
}

impl Seq2Seq {
    /// Fresh parameters drawn from the config seed.
    pub fn init(config: Seq2SeqConfig, src_vocab: Vocabulary, tgt_vocab: Vocabulary) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let (e, h) = (config.embed_dim, config.hidden_dim);
        let mut store = ParamStore::new();
        store.add_uniform("src_embed", src_vocab.len(), e, 1, &mut rng)?;
        store.add_uniform("tgt_embed", tgt_vocab.len(), e, 1, &mut rng)?;
        for l in 0..config.layers {
            let input = if l == 0 { e } else { 2 * h };
            LstmWeights::register(&mut store, &format!("enc{l}.fwd"), input, h, &mut rng)?;
            LstmWeights::register(&mut store, &format!("enc{l}.bwd"), input, h, &mut rng)?;
        }
        for l in 0..config.layers {
            store.add_uniform(format!("bridge{l}.w"), 2 * h, h, 2 * h, &mut rng)?;
            store.add_filled(format!("bridge{l}.b"), 1, h, 0.0)?;
        }
        store.add_uniform("att.wh", 2 * h, h, 2 * h, &mut rng)?;
        store.add_uniform("att.ws", h, h, h, &mut rng)?;
        store.add_filled("att.b", 1, h, 0.0)?;
        store.add_uniform("att.v", h, 1, h, &mut rng)?;
        for l in 0..config.layers {
            let input = if l == 0 { e + 2 * h } else { h };
            LstmWeights::register(&mut store, &format!("dec{l}"), input, h, &mut rng)?;
        }
        let out_in = e + 3 * h;
        store.add_uniform("out.w", out_in, tgt_vocab.len(), out_in, &mut rng)?;
        store.add_filled("out.b", 1, tgt_vocab.len(), 0.0)?;
        Self::from_parts(config, src_vocab, tgt_vocab, store)
    }

    /// Reassembles a model from loaded parts, checking every tensor shape.
    pub fn from_parts(
        config: Seq2SeqConfig,
        src_vocab: Vocabulary,
        tgt_vocab: Vocabulary,
        params: ParamStore,
    ) -> Result<Self> {
        config.validate()?;
        let w = Weights::lookup(&params, config.layers)?;
        let (e, h) = (config.embed_dim, config.hidden_dim);
        let expect = |id: ParamId, rows: usize, cols: usize| -> Result<()> {
            let t = params.get(id);
            if t.rows() != rows || t.cols() != cols {
                return Err(ModelError::Metadata(format!(
                    "parameter {} has shape {:?}, expected [{rows}, {cols}]",
                    params.name(id),
                    t.shape()
                )));
            }
            Ok(())
        };
        expect(w.src_embed, src_vocab.len(), e)?;
        expect(w.tgt_embed, tgt_vocab.len(), e)?;
        for (l, (f, b)) in w.enc.iter().enumerate() {
            let input = if l == 0 { e } else { 2 * h };
            expect(f.weight, input + h, 4 * h)?;
            expect(b.weight, input + h, 4 * h)?;
        }
        for (l, d) in w.dec.iter().enumerate() {
            let input = if l == 0 { e + 2 * h } else { h };
            expect(d.weight, input + h, 4 * h)?;
        }
        expect(w.att_wh, 2 * h, h)?;
        expect(w.att_v, h, 1)?;
        expect(w.out_w, e + 3 * h, tgt_vocab.len())?;
        Ok(Self {
            config,
            src_vocab,
            tgt_vocab,
            params,
            w,
        })
    }

    pub fn hidden(&self) -> usize {
        self.config.hidden_dim
    }

    /// Source ids for intent tokens; an empty intent becomes a lone UNK.
    pub fn source_ids(&self, tokens: &[String]) -> Vec<usize> {
        let ids = self.src_vocab.encode(tokens);
        if ids.is_empty() {
            vec![UNK]
        } else {
            ids
        }
    }

    /// Runs both directions over every layer.
    pub fn encode(&self, g: &mut Graph<'_>, ids: &[usize]) -> Result<Encoded> {
        if ids.is_empty() {
            return Err(ModelError::Empty("intent"));
        }
        if let Some(&bad) = ids.iter().find(|&&i| i >= self.src_vocab.len()) {
            return Err(ModelError::InvalidId {
                id: bad,
                size: self.src_vocab.len(),
            });
        }
        let hd = self.hidden();
        let n = ids.len();
        let table = g.param(self.w.src_embed);
        let mut x = g.gather_rows(table, ids)?;
        let mut summary = None;
        for (fwd, bwd) in &self.w.enc {
            let inputs: Vec<Var> = (0..n).map(|t| g.row(x, t)).collect::<std::result::Result<_, _>>()?;
            let zero = g.leaf(Tensor::zeros(&[1, hd]));
            let (mut h, mut c) = (zero, zero);
            let mut f_states = Vec::with_capacity(n);
            for &xt in &inputs {
                (h, c) = lstm_cell(g, xt, h, c, fwd)?;
                f_states.push(h);
            }
            let (mut h, mut c) = (zero, zero);
            let mut b_states = vec![zero; n];
            for t in (0..n).rev() {
                (h, c) = lstm_cell(g, inputs[t], h, c, bwd)?;
                b_states[t] = h;
            }
            let rows: Vec<Var> = (0..n)
                .map(|t| g.concat_cols(&[f_states[t], b_states[t]]))
                .collect::<std::result::Result<_, _>>()?;
            x = g.concat_rows(&rows)?;
            summary = Some(g.concat_cols(&[f_states[n - 1], b_states[0]])?);
        }
        let wh = g.param(self.w.att_wh);
        let projected = g.matmul(x, wh)?;
        Ok(Encoded {
            states: x,
            projected,
            summary: summary.expect("at least one layer"),
        })
    }

    /// Decoder state before the first step: `tanh(W [h_fwd_last; h_bwd_first] + b)`
    /// per layer, zero cells.
    pub fn initial_state(&self, g: &mut Graph<'_>, enc: &Encoded) -> Result<DecoderState> {
        let mut h = Vec::new();
        let mut c = Vec::new();
        for &(w, b) in &self.w.bridge {
            let w = g.param(w);
            let b = g.param(b);
            let z = g.matmul(enc.summary, w)?;
            let z = g.add(z, b)?;
            h.push(g.tanh(z));
            c.push(g.leaf(Tensor::zeros(&[1, self.hidden()])));
        }
        Ok(DecoderState { h, c })
    }

    /// Additive attention of `s_prev` over encoder states. Returns the
    /// context `1 x 2*hidden` and the weights `1 x T`.
    pub fn attention(&self, g: &mut Graph<'_>, s_prev: Var, enc: &Encoded) -> Result<(Var, Var)> {
        let ws = g.param(self.w.att_ws);
        let b = g.param(self.w.att_b);
        let v = g.param(self.w.att_v);
        let q = g.matmul(s_prev, ws)?;
        let q = g.add(q, b)?;
        let e = g.add(enc.projected, q)?;
        let e = g.tanh(e);
        let scores = g.matmul(e, v)?;
        let scores = g.transpose(scores);
        let alpha = g.softmax_rows(scores);
        let ctx = g.matmul(alpha, enc.states)?;
        Ok((ctx, alpha))
    }

    /// One decoder step from the previous token.
    pub fn decode_step(&self, g: &mut Graph<'_>, a_prev: usize, state: &DecoderState, enc: &Encoded) -> Result<Step> {
        if a_prev >= self.tgt_vocab.len() {
            return Err(ModelError::InvalidId {
                id: a_prev,
                size: self.tgt_vocab.len(),
            });
        }
        let table = g.param(self.w.tgt_embed);
        let emb = g.gather_rows(table, &[a_prev])?;
        let top = *state.h.last().expect("at least one layer");
        let (ctx, alpha) = self.attention(g, top, enc)?;
        let mut input = g.concat_cols(&[emb, ctx])?;
        let mut next = DecoderState {
            h: Vec::with_capacity(state.h.len()),
            c: Vec::with_capacity(state.c.len()),
        };
        for (l, w) in self.w.dec.iter().enumerate() {
            let (h, c) = lstm_cell(g, input, state.h[l], state.c[l], w)?;
            next.h.push(h);
            next.c.push(c);
            input = h;
        }
        let feats = g.concat_cols(&[emb, input, ctx])?;
        let w = g.param(self.w.out_w);
        let b = g.param(self.w.out_b);
        let logits = g.matmul(feats, w)?;
        let logits = g.add(logits, b)?;
        let logp = g.log_softmax_rows(logits);
        Ok(Step {
            state: next,
            logp,
            alpha,
        })
    }

    /// Teacher-forced negative log-likelihood of `target` followed by EOS.
    pub fn sequence_loss(&self, g: &mut Graph<'_>, src: &[usize], target: &[usize]) -> Result<Var> {
        let enc = self.encode(g, src)?;
        let mut state = self.initial_state(g, &enc)?;
        let mut prev = BOS;
        let mut rows = Vec::with_capacity(target.len() + 1);
        let mut gold = Vec::with_capacity(target.len() + 1);
        for &tok in target.iter().chain(std::iter::once(&EOS)) {
            let step = self.decode_step(g, prev, &state, &enc)?;
            rows.push(step.logp);
            gold.push(Some(tok));
            state = step.state;
            prev = tok;
        }
        let logp = g.concat_rows(&rows)?;
        Ok(g.nll_rows(logp, &gold)?)
    }

    /// Search handle for one source sequence.
    pub fn searcher(&self, src: &[usize]) -> Result<Seq2SeqSearch<'_>> {
        let mut g = Graph::new(&self.params);
        let enc = self.encode(&mut g, src)?;
        let init = self.initial_state(&mut g, &enc)?;
        Ok(Seq2SeqSearch {
            model: self,
            states: g.value(enc.states).clone(),
            projected: g.value(enc.projected).clone(),
            init: (
                init.h.iter().map(|&v| g.value(v).clone()).collect(),
                init.c.iter().map(|&v| g.value(v).clone()).collect(),
            ),
        })
    }

    /// Beam search (greedy when `beam == 1`) over target ids.
    pub fn decode_ids(&self, src: &[usize], beam: usize) -> Result<Decoded> {
        let s = self.searcher(src)?;
        if beam <= 1 {
            greedy(&s, self.config.max_decode_len)
        } else {
            beam_search(&s, beam, self.config.max_decode_len)
        }
    }

    /// Decodes standardized intent tokens into standardized snippet tokens.
    pub fn decode_tokens(&self, intent: &[String], beam: usize) -> Result<Vec<String>> {
        let d = self.decode_ids(&self.source_ids(intent), beam)?;
        self.tgt_vocab.decode(&d.token_ids)
    }

    /// Mean per-token loss over `data` without updating anything.
    pub fn mean_loss(&self, data: &[EncodedPair]) -> Result<f64> {
        let mut total = 0.0;
        let mut tokens = 0usize;
        for p in data {
            let mut g = Graph::new(&self.params);
            let loss = self.sequence_loss(&mut g, &p.src, &p.tgt)?;
            total += g.value(loss).item();
            tokens += p.tgt.len() + 1;
        }
        Ok(total / tokens.max(1) as f64)
    }
}

/// Frozen encoder output plus the initial decoder state.
pub struct Seq2SeqSearch<'m> {
    model: &'m Seq2Seq,
    states: Tensor,
    projected: Tensor,
    init: (Vec<Tensor>, Vec<Tensor>),
}

impl StepModel for Seq2SeqSearch<'_> {
    type State = (Vec<Tensor>, Vec<Tensor>);

    fn start(&self) -> Result<Self::State> {
        Ok(self.init.clone())
    }

    fn step(&self, state: &Self::State, token: usize) -> Result<(Self::State, Vec<f64>)> {
        let mut g = Graph::new(&self.model.params);
        let states = g.leaf(self.states.clone());
        let projected = g.leaf(self.projected.clone());
        let enc = Encoded {
            states,
            projected,
            summary: states,
        };
        let ds = DecoderState {
            h: state.0.iter().map(|t| g.leaf(t.clone())).collect(),
            c: state.1.iter().map(|t| g.leaf(t.clone())).collect(),
        };
        let step = self.model.decode_step(&mut g, token, &ds, &enc)?;
        let next = (
            step.state.h.iter().map(|&v| g.value(v).clone()).collect(),
            step.state.c.iter().map(|&v| g.value(v).clone()).collect(),
        );
        Ok((next, g.value(step.logp).data().to_vec()))
    }

    fn bos(&self) -> usize {
        BOS
    }

    fn eos(&self) -> usize {
        EOS
    }
}

/// A training pair as vocabulary ids (target without BOS/EOS).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedPair {
    pub src: Vec<usize>,
    pub tgt: Vec<usize>,
}

/// Standardized token pairs for every sample.
pub fn prepare(corpus: &Corpus, pipeline: &Pipeline) -> Result<Vec<(Vec<String>, Vec<String>)>> {
    corpus
        .samples()
        .iter()
        .map(|s| {
            let p = pipeline.prepare_pair(&s.intent, &s.snippet)?;
            Ok((p.intent.into_vec(), p.snippet.into_vec()))
        })
        .collect()
}

/// Trains with teacher forcing, single-sample Adam updates and gradient
/// clipping. With a non-empty dev set, stops after `patience` epochs
/// without dev-loss improvement and keeps the best parameters.
pub fn train(train: &Corpus, dev: &Corpus, cfg: &Seq2SeqConfig, pipeline: &Pipeline) -> Result<(Seq2Seq, TrainLog)> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(ModelError::Empty("training corpus"));
    }
    let train_tok = prepare(train, pipeline)?;
    let dev_tok = prepare(dev, pipeline)?;
    let src_vocab = Vocabulary::build(train_tok.iter().map(|p| &p.0))?;
    let tgt_vocab = Vocabulary::build(train_tok.iter().map(|p| &p.1))?;
    let mut model = Seq2Seq::init(cfg.clone(), src_vocab, tgt_vocab)?;
    let encode = |m: &Seq2Seq, pairs: &[(Vec<String>, Vec<String>)]| -> Vec<EncodedPair> {
        pairs
            .iter()
            .map(|(i, s)| EncodedPair {
                src: m.source_ids(i),
                tgt: m.tgt_vocab.encode(s),
            })
            .collect()
    };
    let train_ids = encode(&model, &train_tok);
    let dev_ids = encode(&model, &dev_tok);
    let log = fit(&mut model, &train_ids, &dev_ids)?;
    Ok((model, log))
}

/// The optimization loop behind [`train`], on already-encoded pairs.
pub fn fit(model: &mut Seq2Seq, train: &[EncodedPair], dev: &[EncodedPair]) -> Result<TrainLog> {
    if train.is_empty() {
        return Err(ModelError::Empty("training corpus"));
    }
    let cfg = model.config.clone();
    let mut adam = AdamState::new(
        AdamConfig {
            learning_rate: cfg.learning_rate,
            ..AdamConfig::default()
        },
        &model.params,
    );
    let mut order_rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x9e37_79b9));
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut log = TrainLog::default();
    let mut best: Option<(f64, ParamStore, usize)> = None;
    let mut stale = 0;
    let mut steps = 0u64;
    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut order_rng);
        let mut total = 0.0;
        let mut tokens = 0usize;
        for &i in &order {
            let pair = &train[i];
            let mut grads = {
                let mut g = Graph::new(&model.params);
                let loss = model.sequence_loss(&mut g, &pair.src, &pair.tgt)?;
                total += g.value(loss).item();
                g.backward(loss)?.into_param_grads(model.params.len())
            };
            tokens += pair.tgt.len() + 1;
            clip_grad_norm(&mut grads, cfg.clip_norm);
            adam.step(&mut model.params, &grads)?;
            steps += 1;
        }
        let train_loss = total / tokens.max(1) as f64;
        let dev_loss = if dev.is_empty() { None } else { Some(model.mean_loss(dev)?) };
        info!(
            "epoch {epoch}: train loss {train_loss:.4}{}",
            dev_loss.map(|d| format!(", dev loss {d:.4}")).unwrap_or_default()
        );
        log.records.push(EpochRecord {
            epoch,
            steps,
            train_loss,
            dev_loss,
            train_acc: None,
        });
        if let Some(d) = dev_loss {
            if best.as_ref().map_or(true, |(b, _, _)| d < *b) {
                best = Some((d, model.params.clone(), epoch));
                stale = 0;
            } else {
                stale += 1;
                if stale >= cfg.patience {
                    log.stopped_early = true;
                    break;
                }
            }
        }
    }
    match best {
        Some((_, params, epoch)) => {
            model.params = params;
            log.best_epoch = Some(epoch);
        }
        None => log.best_epoch = log.records.last().map(|r| r.epoch),
    }
    Ok(log)
}
