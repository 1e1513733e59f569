//! Pre- and post-processing around the translation models: tokenization,
//! stopword filtering, intent parsing, slot standardization and snippet
//! cleaning.

mod clean;
mod intent;
mod lexicon;
mod slots;
pub mod subword;
mod tokenize;

use std::ops::Deref;

use serde::{Deserialize, Serialize};

pub use clean::{clean_snippet, collapse_backslashes};
pub use intent::{parse_intent, SlotClass};
pub use lexicon::{parse_word_list, LexiconConfig, LexiconPaths};
pub use slots::{destandardize, placeholder, placeholder_index, standardize, SlotMap, StandardizedPair};
pub use tokenize::{tokenize_intent, tokenize_snippet, tokenize_snippet_lenient, split_lines, NEWLINE};

use crate::error::{CoreError, Result};
use crate::Lang;

/// Token sequence. Tokens are non-empty and carry no whitespace, except
/// inside quoted string literals.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct TokenSeq(Vec<String>);

/// True for tokens that open a string literal, allowing a short alphabetic
/// prefix such as `b'` or `rb"`.
pub fn is_quoted(token: &str) -> bool {
    let rest = token.trim_start_matches(|c: char| c.is_ascii_alphabetic());
    token.len() - rest.len() <= 2 && rest.starts_with(['\'', '"', '`'])
}

impl TokenSeq {
    pub fn new(tokens: Vec<String>) -> Result<Self> {
        for t in &tokens {
            if t.is_empty() || (t.chars().any(char::is_whitespace) && !is_quoted(t)) {
                return Err(CoreError::InvalidToken(t.clone()));
            }
        }
        Ok(Self(tokens))
    }

    pub(crate) fn from_trusted(tokens: Vec<String>) -> Self {
        debug_assert!(Self::new(tokens.clone()).is_ok());
        Self(tokens)
    }

    pub fn into_vec(self) -> Vec<String> {
        self.0
    }

    pub fn as_slice(&self) -> &[String] {
        &self.0
    }

    /// Space-joined form, used for display and logging.
    pub fn joined(&self) -> String {
        self.0.join(" ")
    }

    /// Splits at [`NEWLINE`] tokens. An empty sequence has no lines.
    pub fn lines(&self) -> Vec<&[String]> {
        if self.0.is_empty() {
            return Vec::new();
        }
        self.0.split(|t| t == NEWLINE).collect()
    }
}

impl Deref for TokenSeq {
    type Target = [String];

    fn deref(&self) -> &[String] {
        &self.0
    }
}

impl TryFrom<Vec<String>> for TokenSeq {
    type Error = CoreError;

    fn try_from(v: Vec<String>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<TokenSeq> for Vec<String> {
    fn from(t: TokenSeq) -> Self {
        t.0
    }
}

/// Drops tokens whose lowercase form is a stopword.
pub fn filter_stopwords(tokens: &TokenSeq, lex: &LexiconConfig) -> TokenSeq {
    TokenSeq(tokens.iter().filter(|t| !lex.is_stopword(t)).cloned().collect())
}

/// An intent after tokenization, slot detection, standardization and
/// stopword removal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreparedIntent {
    pub tokens: TokenSeq,
    pub slots: SlotMap,
}

/// Output of post-processing a decoded token sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rendered {
    pub tokens: TokenSeq,
    pub text: String,
    pub unbound_placeholders: Vec<String>,
}

/// The full pre/post-processing chain for one target language.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub lang: Lang,
    pub lexicon: LexiconConfig,
}

impl Pipeline {
    pub fn new(lang: Lang, lexicon: LexiconConfig) -> Self {
        Self { lang, lexicon }
    }

    pub fn with_defaults(lang: Lang) -> Self {
        Self::new(lang, LexiconConfig::default())
    }

    /// Tokenize, detect slots on the unfiltered tokens, substitute, then
    /// drop stopwords.
    pub fn prepare_intent(&self, text: &str) -> Result<PreparedIntent> {
        let raw = tokenize_intent(text)?;
        let slots = parse_intent(&raw, self.lang, &self.lexicon);
        let std = standardize(&raw, &TokenSeq::default(), &slots);
        Ok(PreparedIntent {
            tokens: filter_stopwords(&std.intent, &self.lexicon),
            slots,
        })
    }

    /// Standardized training pair: filtered intent tokens and the snippet
    /// with the intent's slot surfaces replaced.
    pub fn prepare_pair(&self, intent: &str, snippet: &str) -> Result<StandardizedPair> {
        let prepared = self.prepare_intent(intent)?;
        let snippet = tokenize_snippet(snippet, self.lang)?;
        let std = standardize(&TokenSeq::default(), &snippet, &prepared.slots);
        Ok(StandardizedPair {
            intent: prepared.tokens,
            snippet: std.snippet,
            slots: prepared.slots,
        })
    }

    /// Destandardize and clean decoded tokens.
    pub fn render(&self, decoded: &TokenSeq, slots: &SlotMap) -> Rendered {
        let (tokens, unbound) = destandardize(decoded, slots);
        let text = clean_snippet(&tokens, self.lang);
        Rendered {
            tokens,
            text,
            unbound_placeholders: unbound,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(tokens: &[&str]) -> TokenSeq {
        TokenSeq::new(tokens.iter().map(|s| s.to_string()).collect()).unwrap()
    }

    #[test]
    fn token_validation() {
        assert!(TokenSeq::new(vec!["".into()]).is_err());
        assert!(TokenSeq::new(vec!["a b".into()]).is_err());
        assert!(TokenSeq::new(vec!["'a b'".into(), "b\"x y\"".into()]).is_ok());
        assert!(serde_json::from_str::<TokenSeq>(r#"["ok", ""]"#).is_err());
    }

    #[test]
    fn stopword_examples() {
        let mut lex = LexiconConfig::default();
        lex.stopwords = ["the", "to"].iter().map(|s| s.to_string()).collect();
        assert_eq!(filter_stopwords(&seq(&["jump", "to", "the", "label"]), &lex), seq(&["jump", "label"]));
        assert!(filter_stopwords(&seq(&["The", "to"]), &lex).is_empty());
        lex.stopwords.clear();
        let s = seq(&["jump", "to", "the", "label"]);
        assert_eq!(filter_stopwords(&s, &lex), s);
    }

    #[test]
    fn lines_split_on_separator() {
        let s = seq(&["xor", "ecx", ",", "ecx", NEWLINE, "mul", "ecx"]);
        assert_eq!(s.lines().len(), 2);
        assert!(TokenSeq::default().lines().is_empty());
    }

    #[test]
    fn fig1_round_trip() {
        let p = Pipeline::with_defaults(Lang::Assembly);
        let pair = p
            .prepare_pair(
                "xor the dl register with 0xbb and if zero jump to next_cycle",
                "xor dl, 0xbb\\njz next_cycle",
            )
            .unwrap();
        assert_eq!(pair.slots.to_json(), r#"{"var0":"dl","var1":"0xbb","var2":"next_cycle"}"#);
        assert_eq!(pair.snippet, seq(&["xor", "var0", ",", "var1", NEWLINE, "jz", "var2"]));
        assert!(!pair.intent.iter().any(|t| t == "the"));
        let out = p.render(&pair.snippet, &pair.slots);
        assert_eq!(out.text, "xor dl, 0xbb\njz next_cycle");
        assert!(out.unbound_placeholders.is_empty());
    }
}
