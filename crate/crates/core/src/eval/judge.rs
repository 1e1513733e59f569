//! Per-snippet and per-program correctness judgments.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::eval::syntax::SyntaxChecker;
use crate::eval::{normalize, PredictionRecord};
use crate::pipeline::split_lines;
use crate::Lang;

/// Human label for one line of one prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineAnnotation {
    pub semantic: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub syntactic: Option<bool>,
}

/// Annotations keyed by record index, then line index.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Annotations {
    by_record: BTreeMap<usize, BTreeMap<usize, LineAnnotation>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AnnotationRecord {
    record_index: usize,
    line_index: usize,
    semantic: bool,
    #[serde(default)]
    syntactic: Option<bool>,
}

impl Annotations {
    /// Parses JSON lines with `record_index`, `line_index`, `semantic` and
    /// an optional `syntactic` override.
    pub fn parse(text: &str) -> Result<Self> {
        let mut by_record: BTreeMap<usize, BTreeMap<usize, LineAnnotation>> = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let r: AnnotationRecord = serde_json::from_str(line).map_err(|e| CoreError::MalformedRecord {
                line: i + 1,
                message: e.to_string(),
            })?;
            let entry = LineAnnotation {
                semantic: r.semantic,
                syntactic: r.syntactic,
            };
            if by_record.entry(r.record_index).or_default().insert(r.line_index, entry).is_some() {
                return Err(CoreError::MalformedRecord {
                    line: i + 1,
                    message: format!("duplicate annotation for record {} line {}", r.record_index, r.line_index),
                });
            }
        }
        Ok(Self { by_record })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CoreError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn insert(&mut self, record: usize, line: usize, annotation: LineAnnotation) {
        self.by_record.entry(record).or_default().insert(line, annotation);
    }

    pub fn for_record(&self, record: usize) -> Option<&BTreeMap<usize, LineAnnotation>> {
        self.by_record.get(&record)
    }

    pub fn max_record_index(&self) -> Option<usize> {
        self.by_record.keys().next_back().copied()
    }

    pub fn is_empty(&self) -> bool {
        self.by_record.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JudgmentSource {
    Auto,
    Annotation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineJudgment {
    pub syntactic: bool,
    pub semantic: bool,
    pub needs_annotation: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnippetJudgment {
    pub syntactic: f64,
    pub semantic: f64,
    pub sub_snippet_count: usize,
    pub source: JudgmentSource,
    pub lines: Vec<LineJudgment>,
}

fn non_empty_lines(text: &str, lang: Lang) -> Vec<String> {
    split_lines(text, lang).into_iter().filter(|l| !l.is_empty()).collect()
}

/// Judges a candidate line by line against the reference at the same
/// position. Missing candidate lines count as incorrect.
pub fn judge_snippet(
    candidate: &str,
    reference: &str,
    lang: Lang,
    annotation: Option<&BTreeMap<usize, LineAnnotation>>,
    checker: &SyntaxChecker,
) -> Result<SnippetJudgment> {
    let cand = non_empty_lines(candidate, lang);
    let refs = non_empty_lines(reference, lang);
    let count = cand.len().max(refs.len()).max(1);
    if let Some((&bad, _)) = annotation.and_then(|a| a.range(count..).next()) {
        return Err(CoreError::Annotation(format!(
            "line index {bad} out of range for a snippet of {count} line(s)"
        )));
    }
    let mut lines = Vec::with_capacity(count);
    for i in 0..count {
        let c = cand.get(i);
        let verdict = c.map(|c| checker.check_line(c, lang));
        let ann = annotation.and_then(|a| a.get(&i));
        let syntactic = ann.and_then(|a| a.syntactic).unwrap_or_else(|| verdict.as_ref().is_some_and(|v| v.ok));
        let exact = matches!((c, refs.get(i)), (Some(c), Some(r)) if normalize(c, lang) == normalize(r, lang));
        let (semantic, needs_annotation) = match ann {
            Some(a) => {
                if a.semantic && !syntactic {
                    return Err(CoreError::Annotation(format!(
                        "line {i} is annotated semantically correct but is syntactically incorrect"
                    )));
                }
                (a.semantic, false)
            }
            None => (exact && syntactic, !exact && c.is_some()),
        };
        let reason = match (c, verdict) {
            (None, _) => Some("missing line".to_string()),
            (_, Some(v)) if !syntactic => v.reason,
            _ => None,
        };
        lines.push(LineJudgment {
            syntactic,
            semantic,
            needs_annotation,
            reason,
        });
    }
    let ratio = |f: fn(&LineJudgment) -> bool| lines.iter().filter(|l| f(l)).count() as f64 / count as f64;
    Ok(SnippetJudgment {
        syntactic: ratio(|l| l.syntactic),
        semantic: ratio(|l| l.semantic),
        sub_snippet_count: count,
        source: if annotation.is_some_and(|a| !a.is_empty()) {
            JudgmentSource::Annotation
        } else {
            JudgmentSource::Auto
        },
        lines,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgramReport {
    pub program_id: String,
    pub n_t: usize,
    pub n_syn: usize,
    pub n_sem: usize,
    pub syntactic_ratio: f64,
    pub semantic_ratio: f64,
}

impl ProgramReport {
    pub fn from_counts(program_id: impl Into<String>, n_t: usize, n_syn: usize, n_sem: usize) -> Result<Self> {
        let program_id = program_id.into();
        if n_t == 0 {
            return Err(CoreError::EmptyProgram(program_id));
        }
        if n_syn > n_t || n_sem > n_t {
            return Err(CoreError::InvalidSample(format!(
                "program {program_id}: counts ({n_syn}, {n_sem}) exceed {n_t} lines"
            )));
        }
        Ok(Self {
            program_id,
            n_t,
            n_syn,
            n_sem,
            syntactic_ratio: n_syn as f64 / n_t as f64,
            semantic_ratio: n_sem as f64 / n_t as f64,
        })
    }
}

/// Whole-program ratios. `n_t` counts reference lines; correct lines beyond
/// a record's reference length do not count. Records without a program id
/// are skipped. Programs appear in order of first record.
pub fn program_metrics(records: &[PredictionRecord], judgments: &[SnippetJudgment]) -> Result<Vec<ProgramReport>> {
    if records.len() != judgments.len() {
        return Err(CoreError::InvalidSample(format!(
            "{} records but {} judgments",
            records.len(),
            judgments.len()
        )));
    }
    let mut order: Vec<String> = Vec::new();
    let mut counts: HashMap<String, (usize, usize, usize)> = HashMap::new();
    for (r, j) in records.iter().zip(judgments) {
        let Some(pid) = &r.program_id else { continue };
        let n_ref = non_empty_lines(&r.reference, r.lang).len();
        let entry = counts.entry(pid.clone()).or_insert_with(|| {
            order.push(pid.clone());
            (0, 0, 0)
        });
        entry.0 += n_ref;
        entry.1 += j.lines.iter().take(n_ref).filter(|l| l.syntactic).count();
        entry.2 += j.lines.iter().take(n_ref).filter(|l| l.semantic).count();
    }
    order
        .into_iter()
        .map(|pid| {
            let (n_t, n_syn, n_sem) = counts[&pid];
            ProgramReport::from_counts(pid, n_t, n_syn, n_sem)
        })
        .collect()
}
