//! Intent and snippet tokenizers.

use crate::error::{CoreError, Result};
use crate::pipeline::TokenSeq;
use crate::Lang;

/// Multi-line separator token: the two characters backslash and `n`.
pub const NEWLINE: &str = "\\n";

const MATH_OPS: [char; 6] = ['+', '-', '*', '/', '%', '^'];
const QUOTES: [char; 3] = ['\'', '"', '`'];

fn is_operand_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

fn is_hex(c: char) -> bool {
    c.is_ascii_hexdigit()
}

/// Word-level intent tokenizer.
///
/// Splits on whitespace and punctuation, keeping quoted strings (quotes
/// included), `\xHH` byte arrays, whitespace-free bracketed operands,
/// identifiers and operator-joined expressions such as `x+1` whole.
pub fn tokenize_intent(text: &str) -> Result<TokenSeq> {
    if text.trim().is_empty() {
        return Err(CoreError::EmptyInput("intent"));
    }
    let chars: Vec<char> = text.chars().collect();
    let n = chars.len();
    let mut out = Vec::new();
    let mut i = 0;
    while i < n {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if QUOTES.contains(&c) && (i == 0 || !is_operand_char(chars[i - 1])) {
            let close = (i + 1..n).find(|&j| chars[j] == c && (j + 1 == n || !is_operand_char(chars[j + 1])));
            if let Some(j) = close {
                out.push(chars[i..=j].iter().collect());
                i = j + 1;
                continue;
            }
        }
        if c == '\\' && i + 3 < n && chars[i + 1] == 'x' && is_hex(chars[i + 2]) && is_hex(chars[i + 3]) {
            let mut j = i;
            while j + 3 < n && chars[j] == '\\' && chars[j + 1] == 'x' && is_hex(chars[j + 2]) && is_hex(chars[j + 3]) {
                j += 4;
            }
            out.push(chars[i..j].iter().collect());
            i = j;
            continue;
        }
        if c == '[' {
            let close = (i + 1..n).take_while(|&j| !chars[j].is_whitespace()).find(|&j| chars[j] == ']');
            if let Some(j) = close {
                out.push(chars[i..=j].iter().collect());
                i = j + 1;
                continue;
            }
        }
        if is_operand_char(c) {
            let mut j = i;
            while j < n && is_operand_char(chars[j]) {
                j += 1;
            }
            while j + 1 < n && MATH_OPS.contains(&chars[j]) && is_operand_char(chars[j + 1]) {
                j += 1;
                while j < n && is_operand_char(chars[j]) {
                    j += 1;
                }
            }
            out.push(chars[i..j].iter().collect());
            i = j;
            continue;
        }
        out.push(c.to_string());
        i += 1;
    }
    TokenSeq::new(out)
}

/// Snippet tokenizer. Multi-line snippets use [`NEWLINE`] separator tokens;
/// both the two-character escape and a real line break are accepted.
pub fn tokenize_snippet(text: &str, lang: Lang) -> Result<TokenSeq> {
    if text.trim().is_empty() {
        return Err(CoreError::EmptyInput("snippet"));
    }
    let tokens = match lang {
        Lang::Python => lex_python(text),
        Lang::Assembly => lex_assembly(text),
    };
    if tokens.is_empty() {
        return Err(CoreError::EmptyInput("snippet"));
    }
    TokenSeq::new(tokens)
}

/// Like [`tokenize_snippet`] but maps text without tokens to an empty
/// sequence.
pub fn tokenize_snippet_lenient(text: &str, lang: Lang) -> TokenSeq {
    tokenize_snippet(text, lang).unwrap_or_default()
}

/// Splits raw snippet text into lines at separators outside string
/// literals. Lines are returned trimmed and may be empty.
pub fn split_lines(text: &str, lang: Lang) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let n = chars.len();
    let mut lines = Vec::new();
    let mut start = 0;
    let mut i = 0;
    while i < n {
        if let Some(len) = newline_at(&chars, i) {
            lines.push(chars[start..i].iter().collect::<String>().trim().to_string());
            i += len;
            start = i;
            continue;
        }
        let c = chars[i];
        i = match (lang, c) {
            (Lang::Python, '\'' | '"') => scan_py_string(&chars, i).min(n),
            (Lang::Assembly, '\'' | '"' | '`') => {
                let mut j = i + 1;
                while j < n && chars[j] != c && chars[j] != '\n' {
                    j += 1;
                }
                if j < n && chars[j] == c { j + 1 } else { j }
            }
            _ => i + 1,
        };
    }
    lines.push(chars[start..].iter().collect::<String>().trim().to_string());
    lines
}

const PY_OPS3: [&str; 5] = ["**=", "//=", ">>=", "<<=", "..."];
const PY_OPS2: [&str; 19] = [
    "**", "//", "<<", ">>", "<=", ">=", "==", "!=", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "->", "<>",
    ":=",
];
const STRING_PREFIXES: [&str; 8] = ["r", "b", "u", "f", "rb", "br", "ur", "fr"];

fn newline_at(chars: &[char], i: usize) -> Option<usize> {
    match chars[i] {
        '\n' => Some(1),
        '\r' if chars.get(i + 1) == Some(&'\n') => Some(2),
        '\\' if chars.get(i + 1) == Some(&'n') => Some(2),
        _ => None,
    }
}

fn push_separator(out: &mut Vec<String>) {
    if !out.is_empty() && out.last().map(String::as_str) != Some(NEWLINE) {
        out.push(NEWLINE.to_string());
    }
}

fn finish_lines(mut out: Vec<String>) -> Vec<String> {
    while out.last().map(String::as_str) == Some(NEWLINE) {
        out.pop();
    }
    out
}

/// Scans a Python string literal starting at the opening quote `i`.
/// Returns the end index (exclusive); unterminated literals run to the end
/// of the line.
fn scan_py_string(chars: &[char], i: usize) -> usize {
    let q = chars[i];
    let triple = chars.get(i + 1) == Some(&q) && chars.get(i + 2) == Some(&q);
    let mut j = if triple { i + 3 } else { i + 1 };
    while j < chars.len() {
        let c = chars[j];
        if c == '\\' {
            j += 2;
            continue;
        }
        if triple {
            if c == q && chars.get(j + 1) == Some(&q) && chars.get(j + 2) == Some(&q) {
                return j + 3;
            }
        } else if c == q {
            return j + 1;
        } else if c == '\n' {
            return j;
        }
        j += 1;
    }
    chars.len()
}

pub(crate) fn lex_python(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let n = chars.len();
    let mut out: Vec<String> = Vec::new();
    let mut i = 0;
    while i < n {
        if let Some(len) = newline_at(&chars, i) {
            push_separator(&mut out);
            i += len;
            continue;
        }
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c == '\'' || c == '"' {
            let end = scan_py_string(&chars, i).min(n);
            out.push(chars[i..end].iter().collect());
            i = end;
            continue;
        }
        if c.is_alphabetic() || c == '_' {
            let mut j = i;
            while j < n && is_operand_char(chars[j]) {
                j += 1;
            }
            let word: String = chars[i..j].iter().collect();
            if j < n && (chars[j] == '\'' || chars[j] == '"') && STRING_PREFIXES.contains(&word.to_lowercase().as_str())
            {
                let end = scan_py_string(&chars, j).min(n);
                out.push(chars[i..end].iter().collect());
                i = end;
            } else {
                out.push(word);
                i = j;
            }
            continue;
        }
        if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            let mut j = i + 1;
            while j < n {
                let d = chars[j];
                let exp_sign = (d == '+' || d == '-') && matches!(chars[j - 1], 'e' | 'E') && !is_hex_literal(&chars[i..j]);
                if d.is_ascii_alphanumeric() || d == '_' || d == '.' || exp_sign {
                    j += 1;
                } else {
                    break;
                }
            }
            out.push(chars[i..j].iter().collect());
            i = j;
            continue;
        }
        let rest: String = chars[i..n.min(i + 3)].iter().collect();
        if let Some(op) = PY_OPS3.iter().find(|op| rest.starts_with(**op)) {
            out.push(op.to_string());
            i += 3;
        } else if let Some(op) = PY_OPS2.iter().find(|op| rest.starts_with(**op)) {
            out.push(op.to_string());
            i += 2;
        } else {
            out.push(c.to_string());
            i += 1;
        }
    }
    finish_lines(out)
}

fn is_hex_literal(prefix: &[char]) -> bool {
    prefix.len() >= 2 && prefix[0] == '0' && matches!(prefix[1], 'x' | 'X')
}

fn lex_assembly(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let n = chars.len();
    let mut out: Vec<String> = Vec::new();
    let mut i = 0;
    while i < n {
        if let Some(len) = newline_at(&chars, i) {
            push_separator(&mut out);
            i += len;
            continue;
        }
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        match c {
            ';' => {
                // comment: skip to the end of the line
                while i < n && newline_at(&chars, i).is_none() {
                    i += 1;
                }
            }
            ',' | ':' => {
                out.push(c.to_string());
                i += 1;
            }
            '[' => {
                let mut j = i + 1;
                while j < n && chars[j] != ']' && newline_at(&chars, j).is_none() {
                    j += 1;
                }
                let end = if j < n && chars[j] == ']' { j + 1 } else { j };
                out.push(chars[i..end].iter().filter(|c| !c.is_whitespace()).collect());
                i = end;
            }
            '\'' | '"' | '`' => {
                let mut j = i + 1;
                while j < n && chars[j] != c && chars[j] != '\n' {
                    j += 1;
                }
                let end = if j < n && chars[j] == c { j + 1 } else { j };
                out.push(chars[i..end].iter().collect());
                i = end;
            }
            _ => {
                let mut j = i;
                while j < n
                    && !chars[j].is_whitespace()
                    && !matches!(chars[j], ',' | ':' | '[' | ';')
                    && newline_at(&chars, j).is_none()
                {
                    j += 1;
                }
                out.push(chars[i..j].iter().collect());
                i = j;
            }
        }
    }
    finish_lines(out)
}
