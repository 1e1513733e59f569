//! Corpus-level BLEU with a single reference and unsmoothed precisions.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::eval::PredictionRecord;
use crate::pipeline::tokenize_snippet_lenient;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BleuReport {
    /// BLEU-1..BLEU-n as percentages.
    pub bleu: Vec<f64>,
    pub precisions: Vec<f64>,
    pub brevity_penalty: f64,
    pub candidate_length: usize,
    pub reference_length: usize,
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for g in tokens.windows(n) {
            *counts.entry(g).or_insert(0) += 1;
        }
    }
    counts
}

/// BLEU over pre-tokenized `(candidate, reference)` pairs.
pub fn bleu_from_tokens(pairs: &[(Vec<String>, Vec<String>)], max_n: usize) -> Result<BleuReport> {
    if pairs.is_empty() {
        return Err(CoreError::EmptyInput("prediction records"));
    }
    if max_n == 0 {
        return Err(CoreError::EmptyInput("n-gram order"));
    }
    if let Some(i) = pairs.iter().position(|(_, r)| r.is_empty()) {
        return Err(CoreError::InvalidSample(format!("record {i} has an empty reference")));
    }
    let mut matched = vec![0usize; max_n];
    let mut total = vec![0usize; max_n];
    let (mut c_len, mut r_len) = (0, 0);
    for (cand, reference) in pairs {
        c_len += cand.len();
        r_len += reference.len();
        for n in 1..=max_n {
            let ref_counts = ngram_counts(reference, n);
            for (g, c) in ngram_counts(cand, n) {
                matched[n - 1] += c.min(ref_counts.get(g).copied().unwrap_or(0));
            }
            total[n - 1] += cand.len().saturating_sub(n - 1);
        }
    }
    let precisions: Vec<f64> = matched
        .iter()
        .zip(&total)
        .map(|(&m, &t)| if t == 0 { 0.0 } else { m as f64 / t as f64 })
        .collect();
    let bp = if c_len == 0 {
        0.0
    } else {
        (1.0 - r_len as f64 / c_len as f64).min(0.0).exp()
    };
    let mut bleu = Vec::with_capacity(max_n);
    let mut log_sum = 0.0;
    let mut zero = false;
    for (k, &p) in precisions.iter().enumerate() {
        if p == 0.0 {
            zero = true;
        } else {
            log_sum += p.ln();
        }
        bleu.push(if zero || bp == 0.0 {
            0.0
        } else {
            100.0 * bp * (log_sum / (k + 1) as f64).exp()
        });
    }
    Ok(BleuReport {
        bleu,
        precisions,
        brevity_penalty: bp,
        candidate_length: c_len,
        reference_length: r_len,
    })
}

/// Tokenizes candidates and references with the snippet tokenizer of each
/// record's language, then scores them.
pub fn corpus_bleu(records: &[PredictionRecord], max_n: usize) -> Result<BleuReport> {
    let pairs: Vec<(Vec<String>, Vec<String>)> = records
        .iter()
        .map(|r| {
            (
                tokenize_snippet_lenient(&r.candidate, r.lang).into_vec(),
                tokenize_snippet_lenient(&r.reference, r.lang).into_vec(),
            )
        })
        .collect();
    bleu_from_tokens(&pairs, max_n)
}
