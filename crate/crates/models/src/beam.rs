//! Beam and greedy search over any step-wise decoder.

use std::cmp::Ordering;

use crate::error::Result;

/// A decoder that scores the next token given its state.
pub trait StepModel {
    type State: Clone;

    fn start(&self) -> Result<Self::State>;
    /// Advances with `token` (BOS on the first call) and returns the new
    /// state plus log-probabilities over the vocabulary.
    fn step(&self, state: &Self::State, token: usize) -> Result<(Self::State, Vec<f64>)>;
    fn bos(&self) -> usize;
    fn eos(&self) -> usize;
}

#[derive(Debug, Clone)]
pub struct Hypothesis<S> {
    /// Emitted tokens, without BOS and without the final EOS.
    pub token_ids: Vec<usize>,
    pub logprob: f64,
    pub ended: bool,
    pub state: S,
}

/// Search outcome: tokens without specials, summed log-probability, and
/// whether EOS was produced before `max_len`.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub token_ids: Vec<usize>,
    pub logprob: f64,
    pub ended: bool,
}

/// Number of emitted tokens including the EOS, if any.
fn emitted(ids: &[usize], ended: bool) -> usize {
    ids.len() + usize::from(ended)
}

/// Better-first order: higher logprob, then fewer emitted tokens, then
/// lexicographically smaller ids.
pub fn compare(a: (&[usize], f64, bool), b: (&[usize], f64, bool)) -> Ordering {
    b.1.partial_cmp(&a.1)
        .unwrap_or(Ordering::Equal)
        .then_with(|| emitted(a.0, a.2).cmp(&emitted(b.0, b.2)))
        .then_with(|| a.0.cmp(b.0))
}

fn cmp_hyp<S>(a: &Hypothesis<S>, b: &Hypothesis<S>) -> Ordering {
    compare((&a.token_ids, a.logprob, a.ended), (&b.token_ids, b.logprob, b.ended))
}

/// Keeps the `beam` best partial hypotheses per step. A hypothesis ends
/// when it emits EOS or reaches `max_len` emitted tokens. Scores are raw
/// summed log-probabilities; non-finite candidates are dropped.
pub fn beam_search<M: StepModel>(model: &M, beam: usize, max_len: usize) -> Result<Decoded> {
    let beam = beam.max(1);
    let eos = model.eos();
    let mut live = vec![Hypothesis {
        token_ids: Vec::new(),
        logprob: 0.0,
        ended: false,
        state: model.start()?,
    }];
    let mut finished: Vec<Hypothesis<M::State>> = Vec::new();
    for t in 0..max_len {
        let mut candidates: Vec<(usize, usize, f64)> = Vec::new();
        let mut states = Vec::with_capacity(live.len());
        for (h_idx, hyp) in live.iter().enumerate() {
            let last = hyp.token_ids.last().copied().unwrap_or(model.bos());
            let (state, logp) = model.step(&hyp.state, last)?;
            for (tok, &lp) in logp.iter().enumerate() {
                let score = hyp.logprob + lp;
                if score.is_finite() {
                    candidates.push((h_idx, tok, score));
                }
            }
            states.push(state);
        }
        let mut expanded: Vec<Hypothesis<M::State>> = candidates
            .into_iter()
            .map(|(h_idx, tok, score)| {
                let parent = &live[h_idx];
                let ended = tok == eos;
                let mut ids = parent.token_ids.clone();
                if !ended {
                    ids.push(tok);
                }
                Hypothesis {
                    token_ids: ids,
                    logprob: score,
                    ended,
                    state: states[h_idx].clone(),
                }
            })
            .collect();
        expanded.sort_by(cmp_hyp);
        expanded.truncate(beam);
        live = Vec::with_capacity(beam);
        for hyp in expanded {
            if hyp.ended || t + 1 == max_len {
                finished.push(hyp);
            } else {
                live.push(hyp);
            }
        }
        let best_done = finished.iter().map(|h| h.logprob).fold(f64::NEG_INFINITY, f64::max);
        let best_live = live.iter().map(|h| h.logprob).fold(f64::NEG_INFINITY, f64::max);
        if live.is_empty() || best_done >= best_live {
            break;
        }
    }
    finished.sort_by(cmp_hyp);
    Ok(finished
        .into_iter()
        .next()
        .map(|h| Decoded {
            token_ids: h.token_ids,
            logprob: h.logprob,
            ended: h.ended,
        })
        .unwrap_or(Decoded {
            token_ids: Vec::new(),
            logprob: f64::NEG_INFINITY,
            ended: false,
        }))
}

/// Argmax decoding; ties go to EOS, then to the smaller id, matching the
/// beam order.
pub fn greedy<M: StepModel>(model: &M, max_len: usize) -> Result<Decoded> {
    let mut state = model.start()?;
    let mut ids = Vec::new();
    let mut logprob = 0.0;
    let mut last = model.bos();
    for _ in 0..max_len {
        let (next, logp) = model.step(&state, last)?;
        state = next;
        let eos = model.eos();
        let Some((tok, lp)) = logp
            .iter()
            .copied()
            .enumerate()
            .filter(|(_, lp)| lp.is_finite())
            .fold(None, |best: Option<(usize, f64)>, (i, lp)| match best {
                Some((b_i, b)) if b > lp || (b == lp && (b_i == eos || i != eos)) => best,
                _ => Some((i, lp)),
            })
        else {
            break;
        };
        logprob += lp;
        if tok == model.eos() {
            return Ok(Decoded {
                token_ids: ids,
                logprob,
                ended: true,
            });
        }
        ids.push(tok);
        last = tok;
    }
    Ok(Decoded {
        token_ids: ids,
        logprob,
        ended: false,
    })
}
