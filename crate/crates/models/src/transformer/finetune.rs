//! Translation training for the transformer.

use std::collections::BTreeSet;

use log::info;
use nl2code_core::corpus::Corpus;
use nl2code_core::pipeline::Pipeline;
use nl2code_tensor::{clip_grad_norm, AdamConfig, AdamState, Graph, ParamStore, Var};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Stage, Transformer, TransformerConfig};
use crate::beam::greedy;
use crate::error::{ModelError, Result};
use crate::seq2seq::prepare;
use crate::train_log::{EpochRecord, TrainLog};
use crate::vocab::{Vocabulary, BOS, EOS};

/// Source ids and target ids (without BOS/EOS).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TranslationPair {
    pub src: Vec<usize>,
    pub tgt: Vec<usize>,
}

/// Teacher-forced negative log-likelihood of `tgt` followed by EOS.
pub fn translation_loss(model: &Transformer, g: &mut Graph<'_>, pair: &TranslationPair) -> Result<Var> {
    let memory = model.encode_stack(g, &pair.src)?;
    let mut input = Vec::with_capacity(pair.tgt.len() + 1);
    input.push(BOS);
    input.extend_from_slice(&pair.tgt);
    let logp = model.decode_stack(g, &input, memory)?;
    let targets: Vec<Option<usize>> = pair.tgt.iter().copied().chain([EOS]).map(Some).collect();
    Ok(g.nll_rows(logp, &targets)?)
}

fn mean_loss(model: &Transformer, data: &[TranslationPair]) -> Result<f64> {
    let mut total = 0.0;
    let mut tokens = 0;
    for p in data {
        let mut g = Graph::new(&model.params);
        let l = translation_loss(model, &mut g, p)?;
        total += g.value(l).item();
        tokens += p.tgt.len() + 1;
    }
    Ok(total / tokens.max(1) as f64)
}

/// Fraction of pairs whose greedy decode reproduces the target exactly.
pub fn memorized_fraction(model: &Transformer, data: &[TranslationPair]) -> Result<f64> {
    let mut hits = 0;
    for p in data {
        let s = model.searcher(&p.src)?;
        let d = greedy(&s, model.max_decode_len())?;
        if d.ended && d.token_ids == p.tgt {
            hits += 1;
        }
    }
    Ok(hits as f64 / data.len().max(1) as f64)
}

/// Mini-batch Adam on translation cross-entropy for
/// `config.fine_tune_epochs` epochs. Zero epochs leave the model untouched.
pub fn fit_translation(model: &mut Transformer, train: &[TranslationPair], dev: &[TranslationPair]) -> Result<TrainLog> {
    let cfg = model.config.clone();
    let mut log = TrainLog::default();
    if cfg.fine_tune_epochs == 0 {
        return Ok(log);
    }
    if train.is_empty() {
        return Err(ModelError::Empty("training corpus"));
    }
    for p in train.iter().chain(dev) {
        let need = (p.tgt.len() + 1).max(p.src.len());
        if need > cfg.max_positions {
            return Err(ModelError::LengthOverflow {
                len: need,
                max: cfg.max_positions,
            });
        }
    }
    let mut adam = AdamState::new(
        AdamConfig {
            learning_rate: cfg.learning_rate,
            ..AdamConfig::default()
        },
        &model.params,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x6674_756e);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut steps = 0u64;
    let mut best: Option<(f64, ParamStore, usize)> = None;
    let mut stale = 0;
    for epoch in 1..=cfg.fine_tune_epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut tokens = 0;
        for batch in order.chunks(cfg.batch_size) {
            let mut grads = {
                let mut g = Graph::new(&model.params);
                let mut loss = None;
                for &i in batch {
                    let l = translation_loss(model, &mut g, &train[i])?;
                    total += g.value(l).item();
                    tokens += train[i].tgt.len() + 1;
                    loss = Some(match loss {
                        None => l,
                        Some(acc) => g.add(acc, l)?,
                    });
                }
                let loss = g.scale(loss.expect("non-empty batch"), 1.0 / batch.len() as f64);
                g.backward(loss)?.into_param_grads(model.params.len())
            };
            clip_grad_norm(&mut grads, cfg.clip_norm);
            adam.step(&mut model.params, &grads)?;
            steps += 1;
        }
        let train_loss = total / tokens.max(1) as f64;
        let dev_loss = if dev.is_empty() { None } else { Some(mean_loss(model, dev)?) };
        let train_acc = if cfg.stop_when_memorized {
            Some(memorized_fraction(model, train)?)
        } else {
            None
        };
        info!("fine-tune epoch {epoch}: train loss {train_loss:.4}");
        log.records.push(EpochRecord {
            epoch,
            steps,
            train_loss,
            dev_loss,
            train_acc,
        });
        if train_acc == Some(1.0) {
            break;
        }
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
    let memorized = log.records.last().and_then(|r| r.train_acc) == Some(1.0);
    match best {
        Some((_, params, epoch)) if !memorized => {
            model.params = params;
            log.best_epoch = Some(epoch);
        }
        _ => log.best_epoch = log.records.last().map(|r| r.epoch),
    }
    model.stage = Stage::FineTuned;
    Ok(log)
}

fn encode_pairs(model: &Transformer, tokens: &[(Vec<String>, Vec<String>)]) -> Vec<TranslationPair> {
    tokens
        .iter()
        .map(|(i, s)| TranslationPair {
            src: model.source_ids(i),
            tgt: model.vocab.encode(s),
        })
        .collect()
}

/// Continues training `model` on translation only. Every snippet token
/// must already be in the model's vocabulary.
pub fn fine_tune(
    mut model: Transformer,
    train: &Corpus,
    dev: &Corpus,
    pipeline: &Pipeline,
) -> Result<(Transformer, TrainLog)> {
    let train_tok = prepare(train, pipeline)?;
    let dev_tok = prepare(dev, pipeline)?;
    let missing: BTreeSet<String> = train_tok
        .iter()
        .chain(&dev_tok)
        .flat_map(|(_, s)| s.iter())
        .filter(|t| !model.vocab.contains(t))
        .cloned()
        .collect();
    if !missing.is_empty() {
        return Err(ModelError::VocabularyMismatch(missing.into_iter().collect()));
    }
    let train_ids = encode_pairs(&model, &train_tok);
    let dev_ids = encode_pairs(&model, &dev_tok);
    let log = fit_translation(&mut model, &train_ids, &dev_ids)?;
    Ok((model, log))
}

/// Translation training from random initialization, with a vocabulary
/// built from the training split.
pub fn train(
    train: &Corpus,
    dev: &Corpus,
    cfg: &TransformerConfig,
    pipeline: &Pipeline,
) -> Result<(Transformer, TrainLog)> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(ModelError::Empty("training corpus"));
    }
    let tokens = prepare(train, pipeline)?;
    let vocab = Vocabulary::build(tokens.iter().flat_map(|(i, s)| [i, s]))?;
    let model = Transformer::init(cfg.clone(), vocab)?;
    fine_tune(model, train, dev, pipeline)
}
