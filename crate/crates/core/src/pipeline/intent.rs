//! Intent parser: picks the intent tokens that become slots.

use serde::Serialize;

use crate::pipeline::{is_quoted, LexiconConfig, SlotMap, TokenSeq};
use crate::Lang;

/// Why a token was judged standardizable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotClass {
    Hex,
    Quoted,
    Bracketed,
    Identifier,
    FunctionName,
    MathExpression,
    ByteArray,
    UnknownWord,
}

fn is_ident(t: &str) -> bool {
    let mut chars = t.chars();
    matches!(chars.next(), Some(c) if c.is_alphabetic() || c == '_') && chars.all(|c| c.is_alphanumeric() || c == '_')
}

fn is_hex_value(t: &str) -> bool {
    let body = t.strip_prefix("0x").or_else(|| t.strip_prefix("0X"));
    matches!(body, Some(b) if !b.is_empty() && b.bytes().all(|c| c.is_ascii_hexdigit()))
}

fn is_byte_array(t: &str) -> bool {
    let b = t.as_bytes();
    !b.is_empty()
        && b.len() % 4 == 0
        && b.chunks(4).all(|c| c[0] == b'\\' && c[1] == b'x' && c[2].is_ascii_hexdigit() && c[3].is_ascii_hexdigit())
}

fn is_compound_ident(t: &str) -> bool {
    if !is_ident(t) {
        return false;
    }
    let snake = t.contains('_') && t.chars().any(char::is_alphanumeric);
    let camel = t
        .chars()
        .zip(t.chars().skip(1))
        .any(|(a, b)| a.is_lowercase() && b.is_uppercase());
    snake || camel
}

fn is_math_expression(t: &str) -> bool {
    let chars: Vec<char> = t.chars().collect();
    (1..chars.len().saturating_sub(1)).any(|i| {
        matches!(chars[i], '+' | '-' | '*' | '/' | '%' | '^')
            && !chars[i - 1].is_whitespace()
            && !chars[i + 1].is_whitespace()
            && (chars[i - 1].is_alphanumeric() || matches!(chars[i - 1], '_' | ')' | ']'))
            && (chars[i + 1].is_alphanumeric() || matches!(chars[i + 1], '_' | '(' | '['))
    })
}

/// Classifies one token given the token that follows it.
pub fn classify(token: &str, next: Option<&str>, lex: &LexiconConfig) -> Option<SlotClass> {
    if is_hex_value(token) {
        Some(SlotClass::Hex)
    } else if is_byte_array(token) {
        Some(SlotClass::ByteArray)
    } else if token.len() >= 2 && is_quoted(token) {
        Some(SlotClass::Quoted)
    } else if token.len() >= 2 && token.starts_with('[') && token.ends_with(']') {
        Some(SlotClass::Bracketed)
    } else if is_ident(token) && next == Some("(") {
        Some(SlotClass::FunctionName)
    } else if is_compound_ident(token) {
        Some(SlotClass::Identifier)
    } else if is_math_expression(token) {
        Some(SlotClass::MathExpression)
    } else if token.chars().all(char::is_alphabetic) && !lex.is_english(token) {
        Some(SlotClass::UnknownWord)
    } else {
        None
    }
}

/// Scans intent tokens left to right and binds every standardizable,
/// non-keyword token to the next free placeholder.
pub fn parse_intent(tokens: &TokenSeq, lang: Lang, lex: &LexiconConfig) -> SlotMap {
    let mut slots = SlotMap::new();
    for (i, t) in tokens.iter().enumerate() {
        if lex.is_keyword(t, lang) {
            continue;
        }
        let next = tokens.get(i + 1).map(String::as_str);
        if classify(t, next, lex).is_some() {
            slots.bind(t);
        }
    }
    slots
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::tokenize_intent;

    fn slots_of(text: &str, lang: Lang) -> String {
        parse_intent(&tokenize_intent(text).unwrap(), lang, &LexiconConfig::default()).to_json()
    }

    #[test]
    fn fig1_order_of_appearance() {
        assert_eq!(
            slots_of("xor dl with 0xbb and jump to next_cycle if zero", Lang::Assembly),
            r#"{"var0":"dl","var1":"0xbb","var2":"next_cycle"}"#
        );
    }

    #[test]
    fn register_word_is_keyword() {
        assert_eq!(slots_of("zero out the eax register", Lang::Assembly), r#"{"var0":"eax"}"#);
        assert_eq!(slots_of("push the register onto the stack", Lang::Assembly), "{}");
    }

    #[test]
    fn classes() {
        let lex = LexiconConfig::default();
        let c = |t: &str, next: Option<&str>| classify(t, next, &lex);
        assert_eq!(c("0xBB", None), Some(SlotClass::Hex));
        assert_eq!(c("\\xe3\\xa1", None), Some(SlotClass::ByteArray));
        assert_eq!(c("'abc'", None), Some(SlotClass::Quoted));
        assert_eq!(c("[esi]", None), Some(SlotClass::Bracketed));
        assert_eq!(c("encode", Some("(")), Some(SlotClass::FunctionName));
        assert_eq!(c("shellCode", None), Some(SlotClass::Identifier));
        assert_eq!(c("x+1", None), Some(SlotClass::MathExpression));
        assert_eq!(c("esi", None), Some(SlotClass::UnknownWord));
        assert_eq!(c("cycle", None), None);
        assert_eq!(c("42", None), None);
        assert_eq!(c("-", None), None);
    }

    #[test]
    fn keywords_never_bound() {
        let lex = LexiconConfig::default();
        let toks = tokenize_intent("xor mov push eax").unwrap();
        let slots = parse_intent(&toks, Lang::Assembly, &lex);
        assert_eq!(slots.to_json(), r#"{"var0":"eax"}"#);
        let toks = tokenize_intent("lambda yield foo_bar").unwrap();
        assert_eq!(parse_intent(&toks, Lang::Python, &lex).to_json(), r#"{"var0":"foo_bar"}"#);
    }
}
