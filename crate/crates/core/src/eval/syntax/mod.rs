//! Built-in syntax checkers and the external-command hook.

mod asm;
mod python;

use std::io::Write;
use std::process::Command;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::pipeline::{split_lines, tokenize_snippet_lenient};
use crate::Lang;

/// Outcome of a syntax check with a reason when it fails.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

impl Verdict {
    pub fn pass() -> Self {
        Self { ok: true, reason: None }
    }

    pub fn fail(reason: impl Into<String>) -> Self {
        Self {
            ok: false,
            reason: Some(reason.into()),
        }
    }
}

/// Checks a single line with the built-in grammar.
pub fn check_line(line: &str, lang: Lang) -> Verdict {
    let tokens = tokenize_snippet_lenient(line, lang);
    match lang {
        Lang::Assembly => asm::check_line(&tokens),
        Lang::Python => python::check_line(&tokens),
    }
}

/// Checks a snippet line by line; every line must pass. Lines are
/// separated by real newlines or the two-character escape.
pub fn check_syntax(snippet: &str, lang: Lang) -> Verdict {
    let lines = split_lines(snippet, lang);
    for (i, line) in lines.iter().enumerate() {
        let v = check_line(line, lang);
        if !v.ok {
            let reason = v.reason.unwrap_or_default();
            return Verdict::fail(if lines.len() > 1 { format!("line {}: {reason}", i + 1) } else { reason });
        }
    }
    Verdict::pass()
}

/// Which checker judges syntactic correctness.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum SyntaxChecker {
    #[default]
    Builtin,
    /// Shell command template; `{file}` is replaced by a temporary file
    /// holding the line. Exit status 0 means the line is valid.
    External(String),
}

impl SyntaxChecker {
    /// Parses `builtin` or `external:CMD {file}`.
    pub fn parse(spec: &str) -> Result<Self> {
        if spec == "builtin" {
            return Ok(Self::Builtin);
        }
        match spec.strip_prefix("external:") {
            Some(cmd) if cmd.contains("{file}") => Ok(Self::External(cmd.trim_matches('"').to_string())),
            Some(_) => Err(CoreError::InvalidSample("external checker template needs a {file} placeholder".into())),
            None => Err(CoreError::InvalidSample(format!("unknown checker `{spec}`"))),
        }
    }

    pub fn check_line(&self, line: &str, lang: Lang) -> Verdict {
        match self {
            Self::Builtin => check_line(line, lang),
            Self::External(template) => run_external(template, line, lang),
        }
    }
}

fn run_external(template: &str, line: &str, lang: Lang) -> Verdict {
    let suffix = match lang {
        Lang::Python => ".py",
        Lang::Assembly => ".asm",
    };
    let file = match tempfile::Builder::new().suffix(suffix).tempfile() {
        Ok(f) => f,
        Err(e) => return Verdict::fail(format!("cannot create temp file: {e}")),
    };
    if let Err(e) = writeln!(file.as_file(), "{line}") {
        return Verdict::fail(format!("cannot write temp file: {e}"));
    }
    let cmd = template.replace("{file}", &file.path().display().to_string());
    match Command::new("sh").arg("-c").arg(&cmd).output() {
        Ok(out) if out.status.success() => Verdict::pass(),
        Ok(out) => {
            let stderr = String::from_utf8_lossy(&out.stderr);
            Verdict::fail(stderr.lines().next().unwrap_or("checker rejected the line").to_string())
        }
        Err(e) => Verdict::fail(format!("cannot run checker: {e}")),
    }
}
