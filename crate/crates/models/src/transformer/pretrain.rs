//! Masked-token prediction and replaced-token detection.

use log::info;
use nl2code_core::corpus::Corpus;
use nl2code_core::pipeline::Pipeline;
use nl2code_tensor::{clip_grad_norm, AdamConfig, AdamState, Graph, Tensor, Var};
use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{RtdLoss, Stage, Transformer};
use crate::error::{ModelError, Result};
use crate::seq2seq::prepare;
use crate::train_log::{EpochRecord, TrainLog};
use crate::vocab::{Vocabulary, MASK, SEP};

/// An intent/snippet pair as ids, joined as `intent SEP snippet`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PretrainPair {
    pub intent: Vec<usize>,
    pub snippet: Vec<usize>,
}

impl PretrainPair {
    pub fn joined(&self) -> Vec<usize> {
        let mut ids = self.intent.clone();
        ids.push(SEP);
        ids.extend_from_slice(&self.snippet);
        ids
    }

    /// Index into [`Self::joined`] of snippet position `j`.
    pub fn snippet_offset(&self) -> usize {
        self.intent.len() + 1
    }

    /// Every joined position except the separator, intent first.
    pub fn content_positions(&self) -> Vec<usize> {
        (0..self.intent.len())
            .chain(self.snippet_offset()..self.snippet_offset() + self.snippet.len())
            .collect()
    }
}

fn sample_count(len: usize, fraction: f64) -> usize {
    if len == 0 {
        0
    } else {
        ((fraction * len as f64).round() as usize).clamp(1, len)
    }
}

fn sorted_sample(rng: &mut ChaCha8Rng, len: usize, k: usize) -> Vec<usize> {
    let mut v = sample(rng, len, k).into_vec();
    v.sort_unstable();
    v
}

/// Positions chosen for masking in each segment (segment-relative), with
/// the original tokens in intent-then-snippet order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskingPlan {
    pub intent_positions: Vec<usize>,
    pub snippet_positions: Vec<usize>,
    pub originals: Vec<usize>,
}

impl MaskingPlan {
    pub fn new(pair: &PretrainPair, mut intent_positions: Vec<usize>, mut snippet_positions: Vec<usize>) -> Result<Self> {
        intent_positions.sort_unstable();
        intent_positions.dedup();
        snippet_positions.sort_unstable();
        snippet_positions.dedup();
        if let Some(&p) = intent_positions.iter().find(|&&p| p >= pair.intent.len()) {
            return Err(ModelError::InvalidId {
                id: p,
                size: pair.intent.len(),
            });
        }
        if let Some(&p) = snippet_positions.iter().find(|&&p| p >= pair.snippet.len()) {
            return Err(ModelError::InvalidId {
                id: p,
                size: pair.snippet.len(),
            });
        }
        let originals = intent_positions
            .iter()
            .map(|&p| pair.intent[p])
            .chain(snippet_positions.iter().map(|&p| pair.snippet[p]))
            .collect();
        Ok(Self {
            intent_positions,
            snippet_positions,
            originals,
        })
    }

    /// `max(1, round(fraction * len))` positions per non-empty segment.
    pub fn sample(pair: &PretrainPair, fraction: f64, rng: &mut ChaCha8Rng) -> Self {
        let e = sorted_sample(rng, pair.intent.len(), sample_count(pair.intent.len(), fraction));
        let c = sorted_sample(rng, pair.snippet.len(), sample_count(pair.snippet.len(), fraction));
        Self::new(pair, e, c).expect("sampled positions are in range")
    }

    pub fn len(&self) -> usize {
        self.originals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.originals.is_empty()
    }

    /// Masked positions as indices into the joined sequence.
    pub fn absolute_positions(&self, pair: &PretrainPair) -> Vec<usize> {
        let off = pair.snippet_offset();
        self.intent_positions
            .iter()
            .copied()
            .chain(self.snippet_positions.iter().map(|&p| p + off))
            .collect()
    }

    /// The joined sequence with MASK at every planned position.
    pub fn masked_input(&self, pair: &PretrainPair) -> Vec<usize> {
        let mut ids = pair.joined();
        for p in self.absolute_positions(pair) {
            ids[p] = MASK;
        }
        ids
    }
}

/// Replacement tokens at joined positions, plus the per-position labels
/// (1 where the corrupted token equals the original) over every non-SEP
/// position in intent-then-snippet order.
#[derive(Debug, Clone, PartialEq)]
pub struct CorruptionPlan {
    pub replaced_positions: Vec<usize>,
    pub replacement_tokens: Vec<usize>,
    pub labels: Vec<f64>,
}

impl CorruptionPlan {
    pub fn new(pair: &PretrainPair, replaced_positions: Vec<usize>, replacement_tokens: Vec<usize>) -> Result<Self> {
        if replaced_positions.len() != replacement_tokens.len() {
            return Err(ModelError::Config("one replacement token per position is required".into()));
        }
        let original = pair.joined();
        let mut corrupted = original.clone();
        for (&p, &t) in replaced_positions.iter().zip(&replacement_tokens) {
            if p >= original.len() || p == pair.intent.len() {
                return Err(ModelError::InvalidId {
                    id: p,
                    size: original.len(),
                });
            }
            corrupted[p] = t;
        }
        let labels = pair
            .content_positions()
            .into_iter()
            .map(|i| if corrupted[i] == original[i] { 1.0 } else { 0.0 })
            .collect();
        Ok(Self {
            replaced_positions,
            replacement_tokens,
            labels,
        })
    }

    pub fn corrupted_input(&self, pair: &PretrainPair) -> Vec<usize> {
        let mut ids = pair.joined();
        for (&p, &t) in self.replaced_positions.iter().zip(&self.replacement_tokens) {
            ids[p] = t;
        }
        ids
    }
}

/// `sum over masked positions of -log p(original | masked pair)`.
pub fn mlm_loss(model: &Transformer, g: &mut Graph<'_>, pair: &PretrainPair, plan: &MaskingPlan) -> Result<Var> {
    let input = plan.masked_input(pair);
    let h = model.encode_stack(g, &input)?;
    let logp = model.mlm_logp(g, h)?;
    let mut targets = vec![None; input.len()];
    for (p, &orig) in plan.absolute_positions(pair).into_iter().zip(&plan.originals) {
        targets[p] = Some(orig);
    }
    Ok(g.nll_rows(logp, &targets)?)
}

/// Discriminator loss over every non-SEP position of the corrupted pair.
pub fn rtd_loss(model: &Transformer, g: &mut Graph<'_>, pair: &PretrainPair, plan: &CorruptionPlan) -> Result<Var> {
    let input = plan.corrupted_input(pair);
    let h = model.encode_stack(g, &input)?;
    let z = model.rtd_logits(g, h)?;
    let mut parts = Vec::with_capacity(2);
    if !pair.intent.is_empty() {
        parts.push(g.slice_rows(z, 0, pair.intent.len())?);
    }
    if !pair.snippet.is_empty() {
        parts.push(g.slice_rows(z, pair.snippet_offset(), pair.snippet.len())?);
    }
    let z = g.concat_rows(&parts)?;
    match model.config.rtd_loss {
        RtdLoss::Standard => Ok(g.bce_with_logits(z, &plan.labels)?),
        RtdLoss::Literal => {
            let n = plan.labels.len();
            let zero = g.leaf(Tensor::zeros(&[n, 1]));
            let pair_logits = g.concat_cols(&[zero, z])?;
            let lp = g.log_softmax_rows(pair_logits);
            let log_p = g.slice_cols(lp, 1, 1)?;
            let sigma = g.leaf(Tensor::new(vec![n, 1], plan.labels.clone())?);
            let not_sigma = g.leaf(Tensor::new(vec![n, 1], plan.labels.iter().map(|s| 1.0 - s).collect())?);
            let ones = g.leaf(Tensor::filled(&[n, 1], 1.0));
            let a = g.mul(sigma, log_p)?;
            let one_minus = g.sub(ones, log_p)?;
            let b = g.mul(not_sigma, one_minus)?;
            let total = g.add(a, b)?;
            Ok(g.sum(total))
        }
    }
}

fn draw(rng: &mut ChaCha8Rng, logp: &[f64]) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, lp) in logp.iter().enumerate() {
        acc += lp.exp();
        if u < acc {
            return i;
        }
    }
    logp.len() - 1
}

/// Masks `corrupt_fraction` of each segment, lets the intent and snippet
/// generators sample replacements there, and returns the plan with the
/// generators' own masked-prediction loss.
pub fn sample_corruption(
    model: &Transformer,
    g: &mut Graph<'_>,
    pair: &PretrainPair,
    rng: &mut ChaCha8Rng,
) -> Result<(CorruptionPlan, Var)> {
    let mask = MaskingPlan::sample(pair, model.config.corrupt_fraction, rng);
    let input = mask.masked_input(pair);
    let off = pair.snippet_offset();
    let mut positions = Vec::with_capacity(mask.len());
    let mut tokens = Vec::with_capacity(mask.len());
    let mut losses = Vec::with_capacity(2);
    for (which, segment) in [(0, &mask.intent_positions), (1, &mask.snippet_positions)] {
        if segment.is_empty() {
            continue;
        }
        let logp = model.generator_logp(g, which, &input)?;
        let mut targets = vec![None; input.len()];
        for &p in segment.iter() {
            let abs = if which == 0 { p } else { p + off };
            let original = pair.joined()[abs];
            targets[abs] = Some(original);
            positions.push(abs);
            tokens.push(draw(rng, g.value(logp).row_slice(abs)));
        }
        losses.push(g.nll_rows(logp, &targets)?);
    }
    let gen_loss = match losses.as_slice() {
        [] => g.scalar(0.0),
        [one] => *one,
        [a, b] => g.add(*a, *b)?,
        _ => unreachable!(),
    };
    Ok((CorruptionPlan::new(pair, positions, tokens)?, gen_loss))
}

/// One sample's pre-training terms.
#[derive(Debug, Clone)]
pub struct PretrainStep {
    pub mask_plan: MaskingPlan,
    pub corruption_plan: CorruptionPlan,
    pub mlm: Var,
    pub rtd: Var,
    pub generator: Var,
    /// `mlm + rtd`.
    pub combined: Var,
    /// `combined + generator`, the quantity minimized.
    pub total: Var,
}

pub fn pretrain_objective(
    model: &Transformer,
    g: &mut Graph<'_>,
    pair: &PretrainPair,
    rng: &mut ChaCha8Rng,
) -> Result<PretrainStep> {
    let mask_plan = MaskingPlan::sample(pair, model.config.mask_fraction, rng);
    let mlm = mlm_loss(model, g, pair, &mask_plan)?;
    let (corruption_plan, generator) = sample_corruption(model, g, pair, rng)?;
    let rtd = rtd_loss(model, g, pair, &corruption_plan)?;
    let combined = g.add(mlm, rtd)?;
    let total = g.add(combined, generator)?;
    Ok(PretrainStep {
        mask_plan,
        corruption_plan,
        mlm,
        rtd,
        generator,
        combined,
        total,
    })
}

fn check_length(model: &Transformer, pair: &PretrainPair) -> Result<()> {
    let len = pair.intent.len() + 1 + pair.snippet.len();
    if len > model.config.max_positions {
        return Err(ModelError::LengthOverflow {
            len,
            max: model.config.max_positions,
        });
    }
    Ok(())
}

/// Runs `config.train_steps` Adam steps on mini-batches drawn by cycling
/// through shuffled passes of `data`. One log record per step holds the
/// batch-mean combined loss.
pub fn pretrain_steps(model: &mut Transformer, data: &[PretrainPair]) -> Result<TrainLog> {
    if data.is_empty() {
        return Err(ModelError::Empty("pre-training corpus"));
    }
    for p in data {
        check_length(model, p)?;
    }
    let cfg = model.config.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x7072_6574);
    let mut adam = AdamState::new(
        AdamConfig {
            learning_rate: cfg.learning_rate,
            ..AdamConfig::default()
        },
        &model.params,
    );
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut rng);
    let mut cursor = 0;
    let mut log = TrainLog::default();
    let scale = 1.0 / cfg.batch_size as f64;
    for step in 1..=cfg.train_steps {
        let mut grads = {
            let mut g = Graph::new(&model.params);
            let mut totals = Vec::with_capacity(cfg.batch_size);
            let mut combined = 0.0;
            for _ in 0..cfg.batch_size {
                if cursor == order.len() {
                    order.shuffle(&mut rng);
                    cursor = 0;
                }
                let pair = &data[order[cursor]];
                cursor += 1;
                let s = pretrain_objective(model, &mut g, pair, &mut rng)?;
                combined += g.value(s.combined).item();
                totals.push(s.total);
            }
            let mut loss = totals[0];
            for &t in &totals[1..] {
                loss = g.add(loss, t)?;
            }
            let loss = g.scale(loss, scale);
            let mean = combined * scale;
            if step == 1 || step % 50 == 0 {
                info!("pretrain step {step}: combined loss {mean:.4}");
            }
            log.records.push(EpochRecord {
                epoch: step,
                steps: step as u64,
                train_loss: mean,
                dev_loss: None,
                train_acc: None,
            });
            g.backward(loss)?.into_param_grads(model.params.len())
        };
        clip_grad_norm(&mut grads, cfg.clip_norm);
        adam.step(&mut model.params, &grads)?;
    }
    log.best_epoch = log.records.last().map(|r| r.epoch);
    if cfg.train_steps > 0 {
        model.stage = Stage::Pretrained;
    }
    Ok(log)
}

/// Builds a shared vocabulary from the standardized pairs and pre-trains
/// a fresh model on them.
pub fn pretrain(
    corpus: &Corpus,
    cfg: &super::TransformerConfig,
    pipeline: &Pipeline,
) -> Result<(Transformer, TrainLog)> {
    cfg.validate()?;
    if corpus.is_empty() {
        return Err(ModelError::Empty("pre-training corpus"));
    }
    let tokens = prepare(corpus, pipeline)?;
    let vocab = Vocabulary::build(tokens.iter().flat_map(|(i, s)| [i, s]))?;
    let mut model = Transformer::init(cfg.clone(), vocab)?;
    let data: Vec<PretrainPair> = tokens
        .iter()
        .map(|(i, s)| PretrainPair {
            intent: model.vocab.encode(i),
            snippet: model.vocab.encode(s),
        })
        .collect();
    let log = pretrain_steps(&mut model, &data)?;
    Ok((model, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transformer::tests::toy;

    fn pair() -> PretrainPair {
        PretrainPair {
            intent: vec![6, 7, 8],
            snippet: vec![9, 6, 7, 8, 9],
        }
    }

    #[test]
    fn plans_respect_fractions_and_ranges() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = pair();
        let plan = MaskingPlan::sample(&p, 0.15, &mut rng);
        assert_eq!(plan.intent_positions.len(), 1);
        assert_eq!(plan.snippet_positions.len(), 1);
        let masked = plan.masked_input(&p);
        assert_eq!(masked.iter().filter(|&&t| t == MASK).count(), 2);
        assert_eq!(masked[3], SEP);
        assert!(MaskingPlan::new(&p, vec![3], vec![]).is_err());
    }

    #[test]
    fn corruption_labels_follow_token_identity() {
        let p = pair();
        // Position 4 gets its own token back, position 0 a different one.
        let plan = CorruptionPlan::new(&p, vec![0, 4], vec![9, 9]).unwrap();
        assert_eq!(plan.labels, vec![0.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0]);
        assert!(CorruptionPlan::new(&p, vec![3], vec![9]).is_err());
    }

    #[test]
    fn generator_samples_cover_planned_positions() {
        let m = toy(1, 1);
        let mut g = Graph::new(&m.params);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (plan, loss) = sample_corruption(&m, &mut g, &pair(), &mut rng).unwrap();
        assert_eq!(plan.replaced_positions.len(), 2);
        assert_eq!(plan.labels.len(), 8);
        assert!(g.value(loss).item() > 0.0);
    }

    #[test]
    fn literal_form_differs_from_standard() {
        let mut m = toy(1, 1);
        let p = pair();
        let plan = CorruptionPlan::new(&p, vec![0], vec![9]).unwrap();
        let mut g = Graph::new(&m.params);
        let std_loss = rtd_loss(&m, &mut g, &p, &plan).unwrap();
        let std_loss = g.value(std_loss).item();
        m.config.rtd_loss = RtdLoss::Literal;
        let mut g = Graph::new(&m.params);
        let lit = rtd_loss(&m, &mut g, &p, &plan).unwrap();
        let lit = g.value(lit).item();
        assert!(std_loss > 0.0);
        assert!(lit != std_loss);
    }
}
