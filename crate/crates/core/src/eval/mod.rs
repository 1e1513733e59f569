//! Evaluation: BLEU, exact match, syntactic and semantic correctness per
//! snippet and per program.

mod bleu;
mod judge;
pub mod syntax;

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use bleu::{bleu_from_tokens, corpus_bleu, BleuReport};
pub use judge::{
    judge_snippet, program_metrics, Annotations, JudgmentSource, LineAnnotation, LineJudgment, ProgramReport,
    SnippetJudgment,
};
pub use syntax::{check_line, check_syntax, SyntaxChecker, Verdict};

use crate::corpus::Corpus;
use crate::error::{CoreError, Result};
use crate::pipeline::{clean_snippet, tokenize_snippet_lenient};
use crate::Lang;

/// A translated test item in final (destandardized, cleaned) form.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub intent: String,
    pub reference: String,
    pub candidate: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub program_id: Option<String>,
    pub lang: Lang,
}

impl PredictionRecord {
    pub fn new(
        intent: impl Into<String>,
        reference: impl Into<String>,
        candidate: impl Into<String>,
        program_id: Option<String>,
        lang: Lang,
    ) -> Self {
        Self {
            intent: intent.into(),
            reference: reference.into(),
            candidate: candidate.into(),
            program_id,
            lang,
        }
    }
}

/// Canonical text of a snippet: tokenized and re-cleaned.
pub fn normalize(text: &str, lang: Lang) -> String {
    clean_snippet(&tokenize_snippet_lenient(text, lang), lang)
}

/// Fraction of records whose candidate equals the reference after
/// normalization.
pub fn exact_match_acc(records: &[PredictionRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(CoreError::EmptyInput("prediction records"));
    }
    let hits = records
        .iter()
        .filter(|r| normalize(&r.candidate, r.lang) == normalize(&r.reference, r.lang))
        .count();
    Ok(hits as f64 / records.len() as f64)
}

/// Anything that turns an English intent into final snippet text.
pub trait Translator: Sync {
    fn lang(&self) -> Lang;
    fn translate(&self, intent: &str) -> Result<String>;
}

#[derive(Debug, Clone, Default)]
pub struct EvalOptions {
    pub checker: SyntaxChecker,
    pub annotations: Option<Annotations>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgedRecord {
    #[serde(flatten)]
    pub record: PredictionRecord,
    pub judgment: SnippetJudgment,
}

/// Method notes stored in every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportNotes {
    pub bleu: String,
    pub exact_match: String,
    pub semantic: String,
}

impl Default for ReportNotes {
    fn default() -> Self {
        Self {
            bleu: "corpus-level, single reference, uniform weights, unsmoothed; tokens of the destandardized, cleaned output".into(),
            exact_match: "destandardized, cleaned output compared with the cleaned reference".into(),
            semantic: "annotation label when present, otherwise exact line match".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub notes: ReportNotes,
    pub lang: Lang,
    pub size: usize,
    pub bleu1: f64,
    pub bleu2: f64,
    pub bleu3: f64,
    pub bleu4: f64,
    pub acc: f64,
    pub bleu_detail: BleuReport,
    pub avg_syntactic_ratio: f64,
    pub avg_semantic_ratio: f64,
    pub snippet_syntactic_ratio: f64,
    pub snippet_semantic_ratio: f64,
    pub needs_annotation: usize,
    pub programs: Vec<ProgramReport>,
    pub records: Vec<JudgedRecord>,
}

impl EvalReport {
    /// Builds the report from finished predictions.
    pub fn from_records(records: Vec<PredictionRecord>, options: &EvalOptions) -> Result<Self> {
        let Some(first) = records.first() else {
            return Err(CoreError::EmptyInput("prediction records"));
        };
        let lang = first.lang;
        if let Some(max) = options.annotations.as_ref().and_then(Annotations::max_record_index) {
            if max >= records.len() {
                return Err(CoreError::Annotation(format!(
                    "record index {max} out of range for {} records",
                    records.len()
                )));
            }
        }
        let judgments: Vec<SnippetJudgment> = records
            .par_iter()
            .enumerate()
            .map(|(i, r)| {
                let ann = options.annotations.as_ref().and_then(|a| a.for_record(i));
                judge_snippet(&r.candidate, &r.reference, r.lang, ann, &options.checker)
                    .map_err(|e| CoreError::Annotation(format!("record {i}: {e}")))
            })
            .collect::<Result<_>>()?;
        let bleu = corpus_bleu(&records, 4)?;
        let acc = exact_match_acc(&records)?;
        let programs = program_metrics(&records, &judgments)?;
        let n = records.len() as f64;
        let snippet_syn = judgments.iter().map(|j| j.syntactic).sum::<f64>() / n;
        let snippet_sem = judgments.iter().map(|j| j.semantic).sum::<f64>() / n;
        let (avg_syn, avg_sem) = if programs.is_empty() {
            (snippet_syn, snippet_sem)
        } else {
            let p = programs.len() as f64;
            (
                programs.iter().map(|r| r.syntactic_ratio).sum::<f64>() / p,
                programs.iter().map(|r| r.semantic_ratio).sum::<f64>() / p,
            )
        };
        let needs_annotation = judgments
            .iter()
            .map(|j| j.lines.iter().filter(|l| l.needs_annotation).count())
            .sum();
        Ok(Self {
            notes: ReportNotes::default(),
            lang,
            size: records.len(),
            bleu1: bleu.bleu[0],
            bleu2: bleu.bleu[1],
            bleu3: bleu.bleu[2],
            bleu4: bleu.bleu[3],
            acc,
            bleu_detail: bleu,
            avg_syntactic_ratio: avg_syn,
            avg_semantic_ratio: avg_sem,
            snippet_syntactic_ratio: snippet_syn,
            snippet_semantic_ratio: snippet_sem,
            needs_annotation,
            programs,
            records: records
                .into_iter()
                .zip(judgments)
                .map(|(record, judgment)| JudgedRecord { record, judgment })
                .collect(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Human-readable summary table.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<22} {:>10}", "metric", "value");
        for (name, v) in [
            ("BLEU-1", self.bleu1),
            ("BLEU-2", self.bleu2),
            ("BLEU-3", self.bleu3),
            ("BLEU-4", self.bleu4),
        ] {
            let _ = writeln!(s, "{name:<22} {v:>10.2}");
        }
        let _ = writeln!(s, "{:<22} {:>10.2}", "ACC (%)", self.acc * 100.0);
        let _ = writeln!(s, "{:<22} {:>10.4}", "avg syntactic ratio", self.avg_syntactic_ratio);
        let _ = writeln!(s, "{:<22} {:>10.4}", "avg semantic ratio", self.avg_semantic_ratio);
        let _ = writeln!(s, "{:<22} {:>10}", "lines to annotate", self.needs_annotation);
        if !self.programs.is_empty() {
            let _ = writeln!(s, "\n{:<12} {:>5} {:>6} {:>6} {:>8} {:>8}", "program", "n_t", "n_syn", "n_sem", "syn", "sem");
            for p in &self.programs {
                let _ = writeln!(
                    s,
                    "{:<12} {:>5} {:>6} {:>6} {:>8.4} {:>8.4}",
                    p.program_id, p.n_t, p.n_syn, p.n_sem, p.syntactic_ratio, p.semantic_ratio
                );
            }
        }
        s
    }
}

/// Translates every test intent and scores the results.
pub fn evaluate_model(model: &dyn Translator, test: &Corpus, options: &EvalOptions) -> Result<EvalReport> {
    if model.lang() != test.lang() {
        return Err(CoreError::ModelLangMismatch {
            model: model.lang(),
            data: test.lang(),
        });
    }
    if test.is_empty() {
        return Err(CoreError::EmptyInput("test corpus"));
    }
    let records: Vec<PredictionRecord> = test
        .samples()
        .par_iter()
        .map(|s| {
            model.translate(&s.intent).map(|candidate| {
                PredictionRecord::new(&s.intent, &s.snippet, candidate, s.program_id.clone(), s.lang)
            })
        })
        .collect::<Result<_>>()?;
    EvalReport::from_records(records, options)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Sample;
    use std::collections::HashMap;

    struct Lookup(HashMap<String, String>, Lang);

    impl Translator for Lookup {
        fn lang(&self) -> Lang {
            self.1
        }
        fn translate(&self, intent: &str) -> Result<String> {
            Ok(self.0.get(intent).cloned().unwrap_or_default())
        }
    }

    fn corpus() -> Corpus {
        let samples = vec![
            Sample::new("zero ecx", "xor ecx, ecx", Lang::Assembly).with_program("A"),
            Sample::new("two lines", "xor eax, eax\\nmov al, 0x0b", Lang::Assembly).with_program("A"),
            Sample::new("push", "push eax", Lang::Assembly).with_program("B"),
        ];
        Corpus::from_samples(Lang::Assembly, samples).unwrap().0
    }

    #[test]
    fn echo_scores_perfectly() {
        let c = corpus();
        let echo = Lookup(
            c.samples().iter().map(|s| (s.intent.clone(), s.snippet.replace("\\n", "\n"))).collect(),
            Lang::Assembly,
        );
        let r = evaluate_model(&echo, &c, &EvalOptions::default()).unwrap();
        assert_eq!([r.bleu1, r.bleu2, r.bleu3, r.bleu4], [100.0; 4]);
        assert_eq!(r.acc, 1.0);
        assert_eq!((r.avg_syntactic_ratio, r.avg_semantic_ratio), (1.0, 1.0));
        assert_eq!(r.programs.len(), 2);
        assert_eq!(r.needs_annotation, 0);
        let json: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        for key in ["bleu1", "bleu2", "bleu3", "bleu4", "acc", "avg_syntactic_ratio", "avg_semantic_ratio", "programs"] {
            assert!(json.get(key).is_some(), "{key}");
        }
        assert!(r.to_table().contains("BLEU-4"));
    }

    #[test]
    fn empty_outputs_score_zero() {
        let c = corpus();
        let r = evaluate_model(&Lookup(HashMap::new(), Lang::Assembly), &c, &EvalOptions::default()).unwrap();
        assert_eq!([r.bleu1, r.bleu4, r.acc], [0.0; 3]);
        assert_eq!(r.avg_syntactic_ratio, 0.0);
    }

    #[test]
    fn language_mismatch() {
        let r = evaluate_model(&Lookup(HashMap::new(), Lang::Python), &corpus(), &EvalOptions::default());
        assert!(matches!(r, Err(CoreError::ModelLangMismatch { .. })));
    }

    #[test]
    fn exact_match_counts() {
        let rec = |c: &str, r: &str| PredictionRecord::new("i", r, c, None, Lang::Python);
        assert_eq!(exact_match_acc(&[rec("x=1", "x = 1")]).unwrap(), 1.0);
        let acc = exact_match_acc(&[rec("x = 1", "x = 1"), rec("x = 2", "x = 1"), rec("", "x = 1")]).unwrap();
        assert!((acc - 1.0 / 3.0).abs() < 1e-15);
        assert!(exact_match_acc(&[]).is_err());
    }

    #[test]
    fn annotations_out_of_range() {
        let mut a = Annotations::default();
        a.insert(9, 0, LineAnnotation { semantic: false, syntactic: None });
        let opts = EvalOptions { annotations: Some(a), ..Default::default() };
        let recs = vec![PredictionRecord::new("i", "nop", "nop", None, Lang::Assembly)];
        assert!(EvalReport::from_records(recs, &opts).is_err());
    }
}
