use std::collections::BTreeSet;
use std::path::Path;

use crate::error::{CoreError, Result};
use crate::Lang;

const DEFAULT_STOPWORDS: &str = include_str!("../../data/stopwords.txt");
const DEFAULT_ASM_KEYWORDS: &str = include_str!("../../data/asm_keywords.txt");
const DEFAULT_PY_KEYWORDS: &str = include_str!("../../data/py_keywords.txt");
const DEFAULT_ENGLISH: &str = include_str!("../../data/english_words.txt");

/// Word sets that drive stopword filtering and slot detection.
///
/// Entries are stored lowercase; lookups lowercase their argument.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct LexiconConfig {
    pub stopwords: BTreeSet<String>,
    pub asm_keywords: BTreeSet<String>,
    pub py_keywords: BTreeSet<String>,
    pub english_words: BTreeSet<String>,
}

/// Optional overrides for the bundled lexicon files.
#[derive(Debug, Clone, Default)]
pub struct LexiconPaths<'a> {
    pub stopwords: Option<&'a Path>,
    pub asm_keywords: Option<&'a Path>,
    pub py_keywords: Option<&'a Path>,
    pub english_words: Option<&'a Path>,
}

/// Parses a lexicon file: one token per line, `#` starts a comment line.
pub fn parse_word_list(text: &str) -> BTreeSet<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
        .collect()
}

fn is_placeholder_like(w: &str) -> bool {
    w.len() > 3 && w.starts_with("var") && w[3..].bytes().all(|b| b.is_ascii_digit())
}

impl Default for LexiconConfig {
    fn default() -> Self {
        Self {
            stopwords: parse_word_list(DEFAULT_STOPWORDS),
            asm_keywords: parse_word_list(DEFAULT_ASM_KEYWORDS),
            py_keywords: parse_word_list(DEFAULT_PY_KEYWORDS),
            english_words: parse_word_list(DEFAULT_ENGLISH),
        }
    }
}

impl LexiconConfig {
    /// Loads the bundled defaults, replacing any list for which a path is given.
    pub fn load(paths: &LexiconPaths<'_>) -> Result<Self> {
        let read = |p: Option<&Path>, fallback: &str| -> Result<BTreeSet<String>> {
            match p {
                Some(p) => std::fs::read_to_string(p)
                    .map(|t| parse_word_list(&t))
                    .map_err(|source| CoreError::Io {
                        path: p.to_path_buf(),
                        source,
                    }),
                None => Ok(parse_word_list(fallback)),
            }
        };
        let lex = Self {
            stopwords: read(paths.stopwords, DEFAULT_STOPWORDS)?,
            asm_keywords: read(paths.asm_keywords, DEFAULT_ASM_KEYWORDS)?,
            py_keywords: read(paths.py_keywords, DEFAULT_PY_KEYWORDS)?,
            english_words: read(paths.english_words, DEFAULT_ENGLISH)?,
        };
        lex.validate()?;
        Ok(lex)
    }

    /// Keyword and stopword sets must not contain placeholder-shaped entries.
    pub fn validate(&self) -> Result<()> {
        for set in [&self.stopwords, &self.asm_keywords, &self.py_keywords] {
            if let Some(w) = set.iter().find(|w| is_placeholder_like(w)) {
                return Err(CoreError::InvalidToken(format!("lexicon entry {w} looks like a placeholder")));
            }
        }
        Ok(())
    }

    pub fn keywords(&self, lang: Lang) -> &BTreeSet<String> {
        match lang {
            Lang::Python => &self.py_keywords,
            Lang::Assembly => &self.asm_keywords,
        }
    }

    pub fn is_keyword(&self, token: &str, lang: Lang) -> bool {
        self.keywords(lang).contains(&token.to_lowercase())
    }

    pub fn is_stopword(&self, token: &str) -> bool {
        self.stopwords.contains(&token.to_lowercase())
    }

    pub fn is_english(&self, token: &str) -> bool {
        self.english_words.contains(&token.to_lowercase())
    }
}
