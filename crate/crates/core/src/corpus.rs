//! Intent/snippet corpora: loading, splitting and statistics.

use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::pipeline::{split_lines, tokenize_intent, tokenize_snippet, NEWLINE};
use crate::Lang;

/// One intent/snippet pair.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Sample {
    pub intent: String,
    pub snippet: String,
    pub lang: Lang,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub program_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

impl Sample {
    pub fn new(intent: impl Into<String>, snippet: impl Into<String>, lang: Lang) -> Self {
        Self {
            intent: intent.into(),
            snippet: snippet.into(),
            lang,
            program_id: None,
            source: None,
        }
    }

    pub fn with_program(mut self, id: impl Into<String>) -> Self {
        self.program_id = Some(id.into());
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.intent.trim().is_empty() {
            return Err(CoreError::InvalidSample("empty intent".into()));
        }
        if self.snippet.trim().is_empty() {
            return Err(CoreError::InvalidSample("empty snippet".into()));
        }
        if split_lines(&self.snippet, self.lang).iter().any(String::is_empty) {
            return Err(CoreError::InvalidSample("line separator without code on both sides".into()));
        }
        Ok(())
    }

    pub fn is_multiline(&self) -> bool {
        split_lines(&self.snippet, self.lang).len() > 1
    }

    fn key(&self) -> (&str, &str) {
        (&self.intent, &self.snippet)
    }
}

/// Validated samples of a single language with unique (intent, snippet)
/// pairs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Corpus {
    lang: Lang,
    samples: Vec<Sample>,
}

impl Corpus {
    pub fn empty(lang: Lang) -> Self {
        Self { lang, samples: Vec::new() }
    }

    /// Builds a corpus, dropping repeated pairs. Returns the corpus and the
    /// number of duplicates dropped.
    pub fn from_samples(lang: Lang, samples: Vec<Sample>) -> Result<(Self, usize)> {
        let mut seen = HashSet::new();
        let mut kept = Vec::with_capacity(samples.len());
        let mut duplicates = 0;
        for s in samples {
            if s.lang != lang {
                return Err(CoreError::InvalidSample(format!("sample language {} in a {lang} corpus", s.lang)));
            }
            s.validate()?;
            if seen.insert((s.intent.clone(), s.snippet.clone())) {
                kept.push(s);
            } else {
                duplicates += 1;
            }
        }
        Ok((Self { lang, samples: kept }, duplicates))
    }

    pub fn lang(&self) -> Lang {
        self.lang
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Distinct program ids in order of first appearance.
    pub fn program_ids(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        self.samples
            .iter()
            .filter_map(|s| s.program_id.clone())
            .filter(|p| seen.insert(p.clone()))
            .collect()
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for s in &self.samples {
            out.push_str(&serde_json::to_string(s).expect("sample serializes"));
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let io = |source| CoreError::Io { path: path.to_path_buf(), source };
        let mut f = fs::File::create(path).map_err(io)?;
        f.write_all(self.to_jsonl().as_bytes()).map_err(io)
    }
}

/// A loaded corpus together with the number of dropped duplicate pairs.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub corpus: Corpus,
    pub duplicates: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    intent: String,
    snippet: String,
    lang: Lang,
    #[serde(default)]
    program_id: Option<String>,
    #[serde(default)]
    source: Option<String>,
}

/// Parses JSON-lines corpus text. Blank lines are ignored; line numbers in
/// errors are 1-based.
pub fn parse_corpus(text: &str, lang: Lang) -> Result<Loaded> {
    let mut samples = Vec::new();
    let mut seen = HashSet::new();
    let mut duplicates = 0;
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let r: Record = serde_json::from_str(line).map_err(|e| CoreError::MalformedRecord {
            line: line_no,
            message: e.to_string(),
        })?;
        if r.lang != lang {
            return Err(CoreError::LangMismatch {
                line: line_no,
                expected: lang,
                found: r.lang,
            });
        }
        let sample = Sample {
            intent: r.intent,
            snippet: r.snippet,
            lang: r.lang,
            program_id: r.program_id,
            source: r.source,
        };
        sample.validate().map_err(|e| CoreError::MalformedRecord {
            line: line_no,
            message: e.to_string(),
        })?;
        if seen.insert((sample.intent.clone(), sample.snippet.clone())) {
            samples.push(sample);
        } else {
            duplicates += 1;
        }
    }
    if duplicates > 0 {
        log::warn!("dropped {duplicates} duplicate intent/snippet pairs");
    }
    Ok(Loaded {
        corpus: Corpus { lang, samples },
        duplicates,
    })
}

pub fn load_corpus(path: &Path, lang: Lang) -> Result<Loaded> {
    let text = fs::read_to_string(path).map_err(|source| CoreError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_corpus(&text, lang)
}

/// Which programs form the test set and how much of the rest becomes dev.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub test_program_ids: BTreeSet<String>,
    pub dev_fraction: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Corpus,
    pub dev: Corpus,
    pub test: Corpus,
}

/// Holds out whole programs for testing and draws dev from the rest by a
/// seeded shuffle. Each part keeps corpus order.
pub fn split_by_program(corpus: &Corpus, spec: &SplitSpec) -> Result<Split> {
    if !(0.0..1.0).contains(&spec.dev_fraction) {
        return Err(CoreError::BadFraction(spec.dev_fraction));
    }
    let known: HashSet<String> = corpus.program_ids().into_iter().collect();
    if let Some(missing) = spec.test_program_ids.iter().find(|p| !known.contains(*p)) {
        return Err(CoreError::UnknownProgram(missing.clone()));
    }
    let is_test = |s: &Sample| s.program_id.as_ref().is_some_and(|p| spec.test_program_ids.contains(p));
    let rest: Vec<usize> = (0..corpus.len()).filter(|&i| !is_test(&corpus.samples[i])).collect();
    let n_dev = (spec.dev_fraction * rest.len() as f64).round() as usize;
    let mut order = rest.clone();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let dev_set: HashSet<usize> = order[..n_dev].iter().copied().collect();

    let part = |pred: &dyn Fn(usize) -> bool| Corpus {
        lang: corpus.lang,
        samples: (0..corpus.len()).filter(|&i| pred(i)).map(|i| corpus.samples[i].clone()).collect(),
    };
    let split = Split {
        train: part(&|i| !is_test(&corpus.samples[i]) && !dev_set.contains(&i)),
        dev: part(&|i| dev_set.contains(&i)),
        test: part(&|i| is_test(&corpus.samples[i])),
    };
    if split.train.is_empty() {
        log::warn!("split leaves the training set empty");
    }
    debug_assert!(split
        .test
        .samples
        .iter()
        .all(|t| !split.train.samples.iter().chain(&split.dev.samples).any(|s| s.key() == t.key())));
    Ok(split)
}

/// Size and token statistics. Token counts use the pipeline tokenizers
/// before stopword removal and include line separators.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub size: usize,
    pub unique_snippets: usize,
    pub unique_intents: usize,
    pub unique_tokens_snippets: usize,
    pub unique_tokens_intents: usize,
    pub avg_tokens_per_snippet: f64,
    pub avg_tokens_per_intent: f64,
    pub multiline_count: usize,
    pub multiline_fraction: f64,
}

pub fn compute_stats(corpus: &Corpus) -> CorpusStats {
    if corpus.is_empty() {
        return CorpusStats::default();
    }
    let mut snippets = HashSet::new();
    let mut intents = HashSet::new();
    let mut snippet_vocab = HashSet::new();
    let mut intent_vocab = HashSet::new();
    let (mut snippet_tokens, mut intent_tokens, mut multiline) = (0usize, 0usize, 0usize);
    for s in &corpus.samples {
        snippets.insert(s.snippet.as_str());
        intents.insert(s.intent.as_str());
        let it = tokenize_intent(&s.intent).unwrap_or_default();
        let st = tokenize_snippet(&s.snippet, corpus.lang).unwrap_or_default();
        intent_tokens += it.len();
        snippet_tokens += st.len();
        if st.iter().any(|t| t == NEWLINE) {
            multiline += 1;
        }
        intent_vocab.extend(it.into_vec());
        snippet_vocab.extend(st.into_vec());
    }
    let n = corpus.len();
    CorpusStats {
        size: n,
        unique_snippets: snippets.len(),
        unique_intents: intents.len(),
        unique_tokens_snippets: snippet_vocab.len(),
        unique_tokens_intents: intent_vocab.len(),
        avg_tokens_per_snippet: snippet_tokens as f64 / n as f64,
        avg_tokens_per_intent: intent_tokens as f64 / n as f64,
        multiline_count: multiline,
        multiline_fraction: multiline as f64 / n as f64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(intent: &str, snippet: &str, pid: &str) -> String {
        serde_json::json!({"intent": intent, "snippet": snippet, "lang": "assembly", "program_id": pid}).to_string()
    }

    #[test]
    fn load_three_distinct() {
        let text = [rec("a", "nop", "A"), rec("b", "nop", "A"), rec("c", "ret", "B")].join("\n");
        let l = parse_corpus(&text, Lang::Assembly).unwrap();
        assert_eq!((l.corpus.len(), l.duplicates), (3, 0));
    }

    #[test]
    fn duplicates_dropped() {
        let text = [rec("a", "nop", "A"), rec("a", "nop", "A")].join("\n");
        let l = parse_corpus(&text, Lang::Assembly).unwrap();
        assert_eq!((l.corpus.len(), l.duplicates), (1, 1));
    }

    #[test]
    fn bad_records_name_their_line() {
        let text = [rec("a", "nop", "A"), rec("b", "  ", "A")].join("\n");
        match parse_corpus(&text, Lang::Assembly) {
            Err(CoreError::MalformedRecord { line: 2, .. }) => {}
            other => panic!("{other:?}"),
        }
        match parse_corpus("{\"intent\": 1}", Lang::Assembly) {
            Err(CoreError::MalformedRecord { line: 1, .. }) => {}
            other => panic!("{other:?}"),
        }
        match parse_corpus(&rec("a", "nop \\n ", "A"), Lang::Assembly) {
            Err(CoreError::MalformedRecord { line: 1, .. }) => {}
            other => panic!("{other:?}"),
        }
        match parse_corpus(&rec("a", "nop", "A"), Lang::Python) {
            Err(CoreError::LangMismatch { line: 1, .. }) => {}
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            load_corpus(Path::new("/nonexistent/corpus.jsonl"), Lang::Python),
            Err(CoreError::Io { .. })
        ));
    }

    fn abc() -> Corpus {
        let text = [
            rec("a1", "nop", "A"),
            rec("b1", "nop", "B"),
            rec("c1", "nop", "C"),
            rec("a2", "ret", "A"),
            rec("c2", "ret", "C"),
        ]
        .join("\n");
        parse_corpus(&text, Lang::Assembly).unwrap().corpus
    }

    fn spec(test: &[&str], dev: f64, seed: u64) -> SplitSpec {
        SplitSpec {
            test_program_ids: test.iter().map(|s| s.to_string()).collect(),
            dev_fraction: dev,
            seed,
        }
    }

    #[test]
    fn split_examples() {
        let c = abc();
        let s = split_by_program(&c, &spec(&["C"], 0.0, 1)).unwrap();
        assert_eq!(s.train.len(), 3);
        assert!(s.dev.is_empty());
        assert_eq!(s.test.program_ids(), ["C"]);
        let s = split_by_program(&c, &spec(&["A", "B", "C"], 0.0, 1)).unwrap();
        assert!(s.train.is_empty());
        assert_eq!(s.test.len(), 5);
        let a = split_by_program(&c, &spec(&["C"], 0.5, 9)).unwrap();
        let b = split_by_program(&c, &spec(&["C"], 0.5, 9)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.dev.len(), 2);
        assert!(matches!(split_by_program(&c, &spec(&["Z"], 0.0, 1)), Err(CoreError::UnknownProgram(_))));
        assert!(matches!(split_by_program(&c, &spec(&[], 1.0, 1)), Err(CoreError::BadFraction(_))));
    }

    #[test]
    fn stats_small() {
        assert_eq!(compute_stats(&Corpus::empty(Lang::Python)), CorpusStats::default());
        let (c, _) = Corpus::from_samples(
            Lang::Assembly,
            vec![
                Sample::new("zero out the eax register", "xor eax, eax", Lang::Assembly),
                Sample::new("x", "nop\\nnop", Lang::Assembly),
            ],
        )
        .unwrap();
        let st = compute_stats(&c);
        assert_eq!(st.size, 2);
        assert_eq!(st.multiline_count, 1);
        assert_eq!(st.avg_tokens_per_intent, 3.0);
        assert_eq!(st.avg_tokens_per_snippet, 3.5);
        assert_eq!(st.multiline_fraction, 0.5);
    }
}
