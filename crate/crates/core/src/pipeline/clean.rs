//! Renders token sequences back into formatted source text.

use crate::pipeline::tokenize::lex_python;
use crate::pipeline::{is_quoted, TokenSeq};
use crate::Lang;

const ESCAPE_LETTERS: &str = "ntrx0abfvu";

/// Collapses runs of two or more backslashes that precede an escape letter
/// into a single backslash.
pub fn collapse_backslashes(s: &str) -> String {
    let chars: Vec<char> = s.chars().collect();
    let mut out = String::with_capacity(s.len());
    let mut i = 0;
    while i < chars.len() {
        if chars[i] == '\\' {
            let mut j = i;
            while j < chars.len() && chars[j] == '\\' {
                j += 1;
            }
            let run = j - i;
            let escapes = chars.get(j).is_some_and(|c| ESCAPE_LETTERS.contains(*c));
            let keep = if run >= 2 && escapes { 1 } else { run };
            out.extend(std::iter::repeat_n('\\', keep));
            i = j;
        } else {
            out.push(chars[i]);
            i += 1;
        }
    }
    out
}

/// Joins tokens into source text, one line per [`NEWLINE`]-separated
/// segment.
pub fn clean_snippet(tokens: &TokenSeq, lang: Lang) -> String {
    tokens
        .lines()
        .into_iter()
        .map(|line| match lang {
            Lang::Assembly => clean_asm_line(line),
            Lang::Python => clean_py_line(line),
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn clean_asm_line(line: &[String]) -> String {
    let mut out = String::new();
    for (i, t) in line.iter().enumerate() {
        if i > 0 && t != "," && t != ":" {
            out.push(' ');
        }
        if is_quoted(t) {
            out.push_str(&collapse_backslashes(t));
        } else {
            out.push_str(t);
        }
    }
    out
}

const PY_RESERVED: [&str; 26] = [
    "and", "as", "assert", "await", "del", "elif", "else", "except", "for", "from", "global", "if", "import", "in",
    "is", "lambda", "nonlocal", "not", "or", "raise", "return", "while", "with", "yield", "exec", "async",
];

const PY_OPERATORS: [&str; 43] = [
    "+", "-", "*", "/", "%", "**", "//", "<<", ">>", "&", "|", "^", "~", "<", ">", "<=", ">=", "==", "!=", "<>", "=",
    "+=", "-=", "*=", "/=", "%=", "**=", "//=", ">>=", "<<=", "&=", "|=", "^=", "->", ":=", "@", "@=", "!", "?",
    "$", "...", ";", "`",
];

#[derive(Clone, Copy, PartialEq, Eq)]
enum Kind {
    Open,
    Close,
    Comma,
    Colon,
    Dot,
    Op,
    Unary,
    Atom,
    Reserved,
}

fn is_name(t: &str) -> bool {
    let mut chars = t.chars();
    matches!(chars.next(), Some(c) if c.is_alphabetic() || c == '_') && chars.all(|c| c.is_alphanumeric() || c == '_')
}

/// True when appending `next` to `out` without a space would not lex as
/// the `written` tokens followed by `next`.
fn fuses(out: &str, written: &[String], next: &str) -> bool {
    let lexed = lex_python(&format!("{out}{next}"));
    lexed.len() != written.len() + 1 || lexed[..written.len()] != *written || lexed[written.len()] != next
}

fn kind_of(t: &str) -> Kind {
    match t {
        "(" | "[" | "{" => Kind::Open,
        ")" | "]" | "}" => Kind::Close,
        "," => Kind::Comma,
        ":" => Kind::Colon,
        "." => Kind::Dot,
        _ if PY_RESERVED.contains(&t) => Kind::Reserved,
        _ if PY_OPERATORS.contains(&t) => Kind::Op,
        _ => Kind::Atom,
    }
}

fn unary_context(prev: Option<Kind>) -> bool {
    matches!(prev, None | Some(Kind::Open | Kind::Comma | Kind::Colon | Kind::Op | Kind::Unary | Kind::Reserved))
}

fn clean_py_line(line: &[String]) -> String {
    let mut out = String::new();
    let mut stack: Vec<&str> = Vec::new();
    let mut prev: Option<(Kind, &str)> = None;
    let mut written: Vec<String> = Vec::with_capacity(line.len());
    for t in line {
        let mut kind = kind_of(t);
        if matches!(t.as_str(), "-" | "+" | "~" | "*" | "**") && unary_context(prev.map(|p| p.0)) {
            kind = Kind::Unary;
        }
        let top = stack.last().copied();
        let in_subscript = top == Some("[");
        let kwarg_eq = |s: &str| s == "=" && top == Some("(");
        let space = match prev {
            None => false,
            Some((pk, ps)) => {
                if matches!(kind, Kind::Close | Kind::Comma | Kind::Dot) || matches!(pk, Kind::Open | Kind::Dot | Kind::Unary) {
                    false
                } else if kind == Kind::Colon {
                    false
                } else if kind == Kind::Open && t != "{" && matches!(pk, Kind::Atom | Kind::Close) && (is_name(ps) || pk == Kind::Close || is_quoted(ps)) {
                    false
                } else if (kind == Kind::Op && (in_subscript || kwarg_eq(t))) || (pk == Kind::Op && (in_subscript || kwarg_eq(ps))) {
                    false
                } else if pk == Kind::Colon && in_subscript {
                    false
                } else {
                    true
                }
            }
        };
        let text = if is_quoted(t) { collapse_backslashes(t) } else { t.clone() };
        if space || (prev.is_some() && fuses(&out, &written, &text)) {
            out.push(' ');
        }
        out.push_str(&text);
        written.push(text);
        match kind {
            Kind::Open => stack.push(t),
            Kind::Close => {
                stack.pop();
            }
            _ => {}
        }
        prev = Some((kind, t));
    }
    out
}
