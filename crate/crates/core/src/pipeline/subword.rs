//! Optional byte-pair subword layer over word tokens.
//!
//! Non-final pieces of a split word carry the [`CONTINUATION`] suffix, so
//! [`Bpe::decode`] can rejoin them. Placeholders, separators, quoted
//! literals and caller-declared atoms are never split.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::pipeline::{is_quoted, placeholder_index, TokenSeq, NEWLINE};

pub const CONTINUATION: &str = "@@";

/// Learned merge table. Merges are applied in rank order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bpe {
    merges: Vec<(String, String)>,
    #[serde(default)]
    atoms: Vec<String>,
    #[serde(skip)]
    ranks: HashMap<(String, String), usize>,
}

fn symbols(word: &str) -> Vec<String> {
    word.chars().map(|c| c.to_string()).collect()
}

impl Bpe {
    /// Learns up to `merges` merge operations from word frequencies.
    /// Ties on pair frequency break towards the lexicographically smallest
    /// pair so training is deterministic.
    pub fn train<'a, I>(words: I, merges: usize, atoms: &[String]) -> Self
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut freq: BTreeMap<&str, usize> = BTreeMap::new();
        let atom_set: HashSet<&str> = atoms.iter().map(String::as_str).collect();
        for w in words {
            if !is_atomic(w, &atom_set) {
                *freq.entry(w).or_default() += 1;
            }
        }
        let mut vocab: Vec<(Vec<String>, usize)> = freq.into_iter().map(|(w, n)| (symbols(w), n)).collect();
        let mut learned = Vec::new();
        for _ in 0..merges {
            let mut counts: BTreeMap<(&str, &str), usize> = BTreeMap::new();
            for (syms, n) in &vocab {
                for pair in syms.windows(2) {
                    *counts.entry((&pair[0], &pair[1])).or_default() += n;
                }
            }
            let best = counts
                .into_iter()
                .fold(None::<((&str, &str), usize)>, |best, (pair, n)| match best {
                    Some((_, m)) if m >= n => best,
                    _ => Some((pair, n)),
                });
            let Some(((a, b), n)) = best else { break };
            if n < 2 {
                break;
            }
            let pair = (a.to_string(), b.to_string());
            for (syms, _) in &mut vocab {
                *syms = merge_pair(syms, &pair);
            }
            learned.push(pair);
        }
        let mut bpe = Self {
            merges: learned,
            atoms: atoms.to_vec(),
            ranks: HashMap::new(),
        };
        bpe.index();
        bpe
    }

    fn index(&mut self) {
        self.ranks = self.merges.iter().cloned().enumerate().map(|(i, p)| (p, i)).collect();
    }

    /// Rebuilds lookup tables after deserialization.
    pub fn reindex(mut self) -> Self {
        self.index();
        self
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    fn split_word(&self, word: &str) -> Vec<String> {
        let mut syms = symbols(word);
        loop {
            let best = syms
                .windows(2)
                .filter_map(|p| self.ranks.get(&(p[0].clone(), p[1].clone())).map(|r| (*r, p[0].clone(), p[1].clone())))
                .min();
            match best {
                Some((_, a, b)) => syms = merge_pair(&syms, &(a, b)),
                None => return syms,
            }
        }
    }

    pub fn encode(&self, tokens: &TokenSeq) -> TokenSeq {
        let atom_set: HashSet<&str> = self.atoms.iter().map(String::as_str).collect();
        let mut out = Vec::with_capacity(tokens.len());
        for t in tokens.iter() {
            if is_atomic(t, &atom_set) {
                out.push(t.clone());
                continue;
            }
            let pieces = self.split_word(t);
            let last = pieces.len() - 1;
            for (i, p) in pieces.into_iter().enumerate() {
                out.push(if i < last { format!("{p}{CONTINUATION}") } else { p });
            }
        }
        TokenSeq::from_trusted(out)
    }

    /// Rejoins continued pieces. A dangling continuation at the end is
    /// emitted without its marker.
    pub fn decode(tokens: &TokenSeq) -> TokenSeq {
        let mut out = Vec::new();
        let mut pending = String::new();
        for t in tokens.iter() {
            match t.strip_suffix(CONTINUATION) {
                Some(stem) if !stem.is_empty() => pending.push_str(stem),
                _ => {
                    pending.push_str(t);
                    out.push(std::mem::take(&mut pending));
                }
            }
        }
        if !pending.is_empty() {
            out.push(pending);
        }
        TokenSeq::from_trusted(out)
    }
}

fn is_atomic(t: &str, atoms: &HashSet<&str>) -> bool {
    t.chars().count() < 2
        || t == NEWLINE
        || placeholder_index(t).is_some()
        || is_quoted(t)
        || t.ends_with(CONTINUATION)
        || atoms.contains(t)
}

fn merge_pair(syms: &[String], pair: &(String, String)) -> Vec<String> {
    let mut out = Vec::with_capacity(syms.len());
    let mut i = 0;
    while i < syms.len() {
        if i + 1 < syms.len() && syms[i] == pair.0 && syms[i + 1] == pair.1 {
            out.push(format!("{}{}", pair.0, pair.1));
            i += 2;
        } else {
            out.push(syms[i].clone());
            i += 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(tokens: &[&str]) -> TokenSeq {
        TokenSeq::new(tokens.iter().map(|s| s.to_string()).collect()).unwrap()
    }

    #[test]
    fn learns_frequent_pairs() {
        let words = ["lower", "lowest", "low", "low", "newer"];
        let bpe = Bpe::train(words, 3, &[]);
        assert_eq!(bpe.merges()[0], ("l".to_string(), "o".to_string()));
        assert_eq!(bpe.merges()[1], ("lo".to_string(), "w".to_string()));
        let enc = bpe.encode(&seq(&["lowest"]));
        assert_eq!(enc[0], "low@@");
    }

    #[test]
    fn placeholders_and_separators_stay_whole() {
        let bpe = Bpe::train(["var0", "var0", "varx", "varx"], 10, &[]);
        let s = seq(&["mov", "var0", ",", "varx", NEWLINE, "'a b'"]);
        let enc = bpe.encode(&s);
        assert!(enc.iter().any(|t| t == "var0"));
        assert!(enc.iter().any(|t| t == NEWLINE));
        assert_eq!(Bpe::decode(&enc), s);
    }

    #[test]
    fn serde_round_trip() {
        let bpe = Bpe::train(["abab", "abab", "abc"], 4, &["<s>".to_string()]);
        let json = serde_json::to_string(&bpe).unwrap();
        let back: Bpe = serde_json::from_str::<Bpe>(&json).unwrap().reindex();
        let s = seq(&["ababc", "<s>"]);
        assert_eq!(back.encode(&s), bpe.encode(&s));
    }
}
