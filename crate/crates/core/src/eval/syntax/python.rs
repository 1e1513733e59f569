//! Recursive-descent recognizer for a single-line Python statement subset.

use super::Verdict;

const KEYWORDS: [&str; 35] = [
    "False", "None", "True", "and", "as", "assert", "async", "await", "break", "class", "continue", "def", "del",
    "elif", "else", "except", "exec", "finally", "for", "from", "global", "if", "import", "in", "is", "lambda",
    "nonlocal", "not", "or", "pass", "raise", "return", "try", "while", "with",
];
const CONSTANTS: [&str; 3] = ["False", "None", "True"];
const AUG_ASSIGN: [&str; 12] = ["+=", "-=", "*=", "/=", "//=", "%=", "**=", ">>=", "<<=", "&=", "|=", "^="];
const COMPARE: [&str; 7] = ["<", ">", "==", ">=", "<=", "!=", "<>"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Expr {
    /// Name, attribute or subscript.
    Target,
    /// Tuple or list display whose items are all targets.
    TargetList,
    Other,
}

impl Expr {
    fn assignable(self) -> bool {
        matches!(self, Expr::Target | Expr::TargetList)
    }
}

type PResult<T> = Result<T, String>;

struct Parser<'a> {
    toks: &'a [String],
    pos: usize,
    /// Accept the Python 2 `print` statement.
    python2_print: bool,
}

fn is_name(t: &str) -> bool {
    let mut chars = t.chars();
    matches!(chars.next(), Some(c) if c.is_alphabetic() || c == '_')
        && chars.all(|c| c.is_alphanumeric() || c == '_')
        && !KEYWORDS.contains(&t)
}

fn is_number(t: &str) -> bool {
    let lower = t.to_ascii_lowercase().replace('_', "");
    let body = lower.strip_suffix(['l', 'j']).unwrap_or(&lower);
    if let Some(h) = body.strip_prefix("0x") {
        return !h.is_empty() && h.bytes().all(|b| b.is_ascii_hexdigit());
    }
    if let Some(o) = body.strip_prefix("0o") {
        return !o.is_empty() && o.bytes().all(|b| (b'0'..=b'7').contains(&b));
    }
    if let Some(b) = body.strip_prefix("0b") {
        return !b.is_empty() && b.bytes().all(|c| c == b'0' || c == b'1');
    }
    let (mantissa, exponent) = match body.split_once('e') {
        Some((m, e)) => (m, Some(e)),
        None => (body, None),
    };
    let digits_ok = |s: &str| s.bytes().all(|b| b.is_ascii_digit());
    let mantissa_ok = match mantissa.split_once('.') {
        Some((a, b)) => digits_ok(a) && digits_ok(b) && !(a.is_empty() && b.is_empty()),
        None => !mantissa.is_empty() && digits_ok(mantissa),
    };
    let exponent_ok = exponent.is_none_or(|e| {
        let e = e.strip_prefix(['+', '-']).unwrap_or(e);
        !e.is_empty() && digits_ok(e)
    });
    mantissa_ok && exponent_ok
}

fn string_body(t: &str) -> Option<&str> {
    let rest = t.trim_start_matches(|c: char| c.is_ascii_alphabetic());
    let prefix = &t[..t.len() - rest.len()];
    if prefix.len() > 2 || !prefix.chars().all(|c| "rRbBuUfF".contains(c)) {
        return None;
    }
    Some(rest)
}

fn is_terminated_string(body: &str) -> bool {
    for q in ["'''", "\"\"\"", "'", "\""] {
        if body.starts_with(q) {
            if body.len() < 2 * q.len() || !body.ends_with(q) {
                return false;
            }
            let inner = &body[q.len()..body.len() - q.len()];
            let trailing = inner.chars().rev().take_while(|&c| c == '\\').count();
            return trailing % 2 == 0;
        }
    }
    false
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&'a str> {
        self.toks.get(self.pos).map(String::as_str)
    }

    fn peek_at(&self, k: usize) -> Option<&'a str> {
        self.toks.get(self.pos + k).map(String::as_str)
    }

    fn at(&self, t: &str) -> bool {
        self.peek() == Some(t)
    }

    fn eat(&mut self, t: &str) -> bool {
        if self.at(t) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, t: &str) -> PResult<()> {
        if self.eat(t) {
            Ok(())
        } else {
            Err(self.unexpected(&format!("`{t}`")))
        }
    }

    fn unexpected(&self, wanted: &str) -> String {
        match self.peek() {
            Some(t) => format!("unexpected `{t}` at token {}, expected {wanted}", self.pos),
            None => format!("unexpected end of line, expected {wanted}"),
        }
    }

    fn name(&mut self) -> PResult<&'a str> {
        match self.peek() {
            Some(t) if is_name(t) => {
                self.pos += 1;
                Ok(t)
            }
            _ => Err(self.unexpected("a name")),
        }
    }

    fn at_end(&self) -> bool {
        self.pos >= self.toks.len()
    }

    fn starts_expr(&self) -> bool {
        match self.peek() {
            None => false,
            Some(t) => {
                is_name(t)
                    || is_number(t)
                    || CONSTANTS.contains(&t)
                    || string_body(t).is_some_and(|b| b.starts_with(['\'', '"']))
                    || matches!(t, "(" | "[" | "{" | "-" | "+" | "~" | "not" | "lambda" | "await" | "`" | "...")
            }
        }
    }

    // statements

    fn line(&mut self) -> PResult<()> {
        match self.peek() {
            Some("if" | "elif" | "while") => {
                self.pos += 1;
                self.test()?;
                self.suite_header()
            }
            Some("else" | "try" | "finally") => {
                self.pos += 1;
                self.suite_header()
            }
            Some("for") => {
                self.pos += 1;
                self.target_list()?;
                self.expect("in")?;
                self.testlist()?;
                self.suite_header()
            }
            Some("except") => {
                self.pos += 1;
                if !self.at(":") {
                    self.test()?;
                    if self.eat("as") || self.eat(",") {
                        self.name()?;
                    }
                }
                self.suite_header()
            }
            Some("with") => {
                self.pos += 1;
                loop {
                    self.test()?;
                    if self.eat("as") {
                        self.target()?;
                    }
                    if !self.eat(",") {
                        break;
                    }
                }
                self.suite_header()
            }
            Some("def") => {
                self.pos += 1;
                self.name()?;
                self.expect("(")?;
                self.params(")")?;
                self.expect(")")?;
                if self.eat("->") {
                    self.test()?;
                }
                self.suite_header()
            }
            Some("class") => {
                self.pos += 1;
                self.name()?;
                if self.eat("(") {
                    if !self.at(")") {
                        self.arglist()?;
                    }
                    self.expect(")")?;
                }
                self.suite_header()
            }
            Some("@") => {
                self.pos += 1;
                self.dotted_name()?;
                if self.eat("(") {
                    if !self.at(")") {
                        self.arglist()?;
                    }
                    self.expect(")")?;
                }
                self.end()
            }
            _ => {
                self.simple_statements()?;
                self.end()
            }
        }
    }

    fn end(&self) -> PResult<()> {
        if self.at_end() {
            Ok(())
        } else {
            Err(self.unexpected("end of statement"))
        }
    }

    /// `:` optionally followed by simple statements on the same line.
    fn suite_header(&mut self) -> PResult<()> {
        self.expect(":")?;
        if self.at_end() {
            return Ok(());
        }
        self.simple_statements()?;
        self.end()
    }

    fn simple_statements(&mut self) -> PResult<()> {
        loop {
            self.small_statement()?;
            if !self.eat(";") || self.at_end() {
                return Ok(());
            }
        }
    }

    fn small_statement(&mut self) -> PResult<()> {
        match self.peek() {
            Some("pass" | "break" | "continue") => {
                self.pos += 1;
                Ok(())
            }
            Some("return") => {
                self.pos += 1;
                if self.starts_expr() || self.at("*") {
                    self.testlist()?;
                }
                Ok(())
            }
            Some("raise") => {
                self.pos += 1;
                if self.starts_expr() {
                    self.test()?;
                    if self.eat("from") || self.eat(",") {
                        self.test()?;
                    }
                }
                Ok(())
            }
            Some("global" | "nonlocal") => {
                self.pos += 1;
                self.name()?;
                while self.eat(",") {
                    self.name()?;
                }
                Ok(())
            }
            Some("del") => {
                self.pos += 1;
                self.target_list()?;
                Ok(())
            }
            Some("assert") => {
                self.pos += 1;
                self.test()?;
                if self.eat(",") {
                    self.test()?;
                }
                Ok(())
            }
            Some("import") => {
                self.pos += 1;
                loop {
                    self.dotted_name()?;
                    if self.eat("as") {
                        self.name()?;
                    }
                    if !self.eat(",") {
                        return Ok(());
                    }
                }
            }
            Some("from") => {
                self.pos += 1;
                while self.eat(".") || self.eat("...") {}
                if !self.at("import") {
                    self.dotted_name()?;
                }
                self.expect("import")?;
                if self.eat("*") {
                    return Ok(());
                }
                let paren = self.eat("(");
                loop {
                    self.name()?;
                    if self.eat("as") {
                        self.name()?;
                    }
                    if !self.eat(",") || (paren && self.at(")")) {
                        break;
                    }
                }
                if paren {
                    self.expect(")")?;
                }
                Ok(())
            }
            Some("exec") => {
                self.pos += 1;
                self.expr()?;
                if self.eat("in") {
                    self.test()?;
                    if self.eat(",") {
                        self.test()?;
                    }
                }
                Ok(())
            }
            Some("print") if self.python2_print && !matches!(self.peek_at(1), Some("(" | "=" | "." | "[")) => {
                self.pos += 1;
                if self.eat(">>") {
                    self.test()?;
                    if !self.eat(",") {
                        return Ok(());
                    }
                }
                while self.starts_expr() {
                    self.test()?;
                    if !self.eat(",") {
                        break;
                    }
                }
                Ok(())
            }
            Some("yield") => {
                self.yield_expr()?;
                Ok(())
            }
            _ => self.expr_statement(),
        }
    }

    fn expr_statement(&mut self) -> PResult<()> {
        let first = self.testlist_star()?;
        if let Some(op) = self.peek().filter(|t| AUG_ASSIGN.contains(t)) {
            if first != Expr::Target {
                return Err(format!("cannot augment-assign with `{op}` to this expression"));
            }
            self.pos += 1;
            return if self.at("yield") { self.yield_expr().map(|_| ()) } else { self.testlist().map(|_| ()) };
        }
        if self.at(":") {
            // annotated assignment
            if first != Expr::Target {
                return Err("illegal target for annotation".into());
            }
            self.pos += 1;
            self.test()?;
            if self.eat("=") {
                self.testlist()?;
            }
            return Ok(());
        }
        let mut last = first;
        while self.eat("=") {
            if !last.assignable() {
                return Err("cannot assign to expression".into());
            }
            last = if self.at("yield") { self.yield_expr()? } else { self.testlist_star()? };
        }
        Ok(())
    }

    fn yield_expr(&mut self) -> PResult<Expr> {
        self.expect("yield")?;
        if self.eat("from") {
            self.test()?;
        } else if self.starts_expr() {
            self.testlist()?;
        }
        Ok(Expr::Other)
    }

    fn dotted_name(&mut self) -> PResult<()> {
        self.name()?;
        while self.eat(".") {
            self.name()?;
        }
        Ok(())
    }

    fn params(&mut self, close: &str) -> PResult<()> {
        while !self.at(close) {
            if self.eat("**") {
                self.name()?;
            } else if self.eat("*") {
                if !self.at(",") && !self.at(close) {
                    self.name()?;
                }
            } else if !self.eat("/") {
                self.name()?;
                if close == ")" && self.eat(":") {
                    self.test()?;
                }
                if self.eat("=") {
                    self.test()?;
                }
            }
            if !self.eat(",") {
                break;
            }
        }
        Ok(())
    }

    fn target(&mut self) -> PResult<()> {
        let e = self.star_or_expr()?;
        if e.assignable() {
            Ok(())
        } else {
            Err("invalid assignment target".into())
        }
    }

    fn target_list(&mut self) -> PResult<()> {
        self.target()?;
        while self.eat(",") {
            if self.at("in") || self.at_end() || self.at("=") {
                break;
            }
            self.target()?;
        }
        Ok(())
    }

    // expressions

    fn testlist(&mut self) -> PResult<Expr> {
        self.testlist_star()
    }

    fn testlist_star(&mut self) -> PResult<Expr> {
        let first = self.star_or_test()?;
        if !self.at(",") {
            return Ok(first);
        }
        let mut all_targets = first.assignable();
        while self.eat(",") {
            if !self.starts_expr() && !self.at("*") {
                break;
            }
            all_targets &= self.star_or_test()?.assignable();
        }
        Ok(if all_targets { Expr::TargetList } else { Expr::Other })
    }

    fn star_or_test(&mut self) -> PResult<Expr> {
        if self.eat("*") {
            return self.expr();
        }
        self.test()
    }

    fn star_or_expr(&mut self) -> PResult<Expr> {
        if self.eat("*") {
            return self.expr();
        }
        self.expr()
    }

    fn test(&mut self) -> PResult<Expr> {
        if self.at("lambda") {
            self.pos += 1;
            self.params(":")?;
            self.expect(":")?;
            self.test()?;
            return Ok(Expr::Other);
        }
        let e = self.or_test()?;
        if self.eat("if") {
            self.or_test()?;
            self.expect("else")?;
            self.test()?;
            return Ok(Expr::Other);
        }
        if self.at(":=") {
            if e != Expr::Target {
                return Err("cannot use assignment expression here".into());
            }
            self.pos += 1;
            self.test()?;
            return Ok(Expr::Other);
        }
        Ok(e)
    }

    fn test_nocond(&mut self) -> PResult<()> {
        self.or_test().map(|_| ())
    }

    fn or_test(&mut self) -> PResult<Expr> {
        let mut e = self.and_test()?;
        while self.eat("or") {
            self.and_test()?;
            e = Expr::Other;
        }
        Ok(e)
    }

    fn and_test(&mut self) -> PResult<Expr> {
        let mut e = self.not_test()?;
        while self.eat("and") {
            self.not_test()?;
            e = Expr::Other;
        }
        Ok(e)
    }

    fn not_test(&mut self) -> PResult<Expr> {
        if self.eat("not") {
            self.not_test()?;
            return Ok(Expr::Other);
        }
        self.comparison()
    }

    fn comparison(&mut self) -> PResult<Expr> {
        let mut e = self.expr()?;
        loop {
            let matched = match self.peek() {
                Some(t) if COMPARE.contains(&t) || t == "in" => {
                    self.pos += 1;
                    true
                }
                Some("not") if self.peek_at(1) == Some("in") => {
                    self.pos += 2;
                    true
                }
                Some("is") => {
                    self.pos += 1;
                    self.eat("not");
                    true
                }
                _ => false,
            };
            if !matched {
                return Ok(e);
            }
            self.expr()?;
            e = Expr::Other;
        }
    }

    fn binary(&mut self, ops: &[&str], next: fn(&mut Self) -> PResult<Expr>) -> PResult<Expr> {
        let mut e = next(self)?;
        while self.peek().is_some_and(|t| ops.contains(&t)) {
            self.pos += 1;
            next(self)?;
            e = Expr::Other;
        }
        Ok(e)
    }

    fn expr(&mut self) -> PResult<Expr> {
        self.binary(&["|"], Self::xor_expr)
    }

    fn xor_expr(&mut self) -> PResult<Expr> {
        self.binary(&["^"], Self::and_expr)
    }

    fn and_expr(&mut self) -> PResult<Expr> {
        self.binary(&["&"], Self::shift_expr)
    }

    fn shift_expr(&mut self) -> PResult<Expr> {
        self.binary(&["<<", ">>"], Self::arith_expr)
    }

    fn arith_expr(&mut self) -> PResult<Expr> {
        self.binary(&["+", "-"], Self::term)
    }

    fn term(&mut self) -> PResult<Expr> {
        self.binary(&["*", "/", "%", "//", "@"], Self::factor)
    }

    fn factor(&mut self) -> PResult<Expr> {
        if matches!(self.peek(), Some("+" | "-" | "~")) {
            self.pos += 1;
            self.factor()?;
            return Ok(Expr::Other);
        }
        self.power()
    }

    fn power(&mut self) -> PResult<Expr> {
        self.eat("await");
        let mut e = self.atom()?;
        loop {
            match self.peek() {
                Some("(") => {
                    self.pos += 1;
                    if !self.at(")") {
                        self.arglist()?;
                    }
                    self.expect(")")?;
                    e = Expr::Other;
                }
                Some("[") => {
                    self.pos += 1;
                    self.subscripts()?;
                    self.expect("]")?;
                    e = Expr::Target;
                }
                Some(".") => {
                    self.pos += 1;
                    self.name()?;
                    e = Expr::Target;
                }
                _ => break,
            }
        }
        if self.eat("**") {
            self.factor()?;
            e = Expr::Other;
        }
        Ok(e)
    }

    fn atom(&mut self) -> PResult<Expr> {
        let Some(t) = self.peek() else {
            return Err(self.unexpected("an expression"));
        };
        match t {
            "(" => {
                self.pos += 1;
                if self.eat(")") {
                    return Ok(Expr::Other);
                }
                let e = if self.at("yield") { self.yield_expr()? } else { self.comprehension_or_list()? };
                self.expect(")")?;
                Ok(e)
            }
            "[" => {
                self.pos += 1;
                if self.eat("]") {
                    return Ok(Expr::Other);
                }
                let e = self.comprehension_or_list()?;
                self.expect("]")?;
                Ok(e)
            }
            "{" => {
                self.pos += 1;
                if !self.at("}") {
                    self.dict_or_set()?;
                }
                self.expect("}")?;
                Ok(Expr::Other)
            }
            "`" => {
                self.pos += 1;
                self.testlist()?;
                self.expect("`")?;
                Ok(Expr::Other)
            }
            "..." => {
                self.pos += 1;
                Ok(Expr::Other)
            }
            _ if is_name(t) => {
                self.pos += 1;
                Ok(Expr::Target)
            }
            _ if is_number(t) || CONSTANTS.contains(&t) => {
                self.pos += 1;
                Ok(Expr::Other)
            }
            _ => match string_body(t) {
                Some(body) if body.starts_with(['\'', '"']) => {
                    while let Some(b) = self.peek().and_then(string_body).filter(|b| b.starts_with(['\'', '"'])) {
                        if !is_terminated_string(b) {
                            return Err(format!("unterminated string literal {}", self.peek().unwrap_or_default()));
                        }
                        self.pos += 1;
                    }
                    Ok(Expr::Other)
                }
                _ => Err(self.unexpected("an expression")),
            },
        }
    }

    /// Contents of `(...)` or `[...]`: a single expression, a tuple/list,
    /// or a comprehension.
    fn comprehension_or_list(&mut self) -> PResult<Expr> {
        let first = self.star_or_test()?;
        if self.at("for") || self.at("async") {
            self.comp_for()?;
            return Ok(Expr::Other);
        }
        if !self.at(",") {
            return Ok(first);
        }
        let mut all_targets = first.assignable();
        while self.eat(",") {
            if self.at(")") || self.at("]") {
                break;
            }
            all_targets &= self.star_or_test()?.assignable();
        }
        Ok(if all_targets { Expr::TargetList } else { Expr::Other })
    }

    fn comp_for(&mut self) -> PResult<()> {
        self.eat("async");
        self.expect("for")?;
        self.target_list()?;
        self.expect("in")?;
        self.or_test()?;
        loop {
            if self.at("for") || self.at("async") {
                self.eat("async");
                self.expect("for")?;
                self.target_list()?;
                self.expect("in")?;
                self.or_test()?;
            } else if self.eat("if") {
                self.test_nocond()?;
            } else {
                return Ok(());
            }
        }
    }

    fn dict_or_set(&mut self) -> PResult<()> {
        let dict = if self.eat("**") {
            self.expr()?;
            true
        } else {
            self.star_or_test()?;
            if self.eat(":") {
                self.test()?;
                true
            } else {
                false
            }
        };
        if self.at("for") {
            return self.comp_for();
        }
        while self.eat(",") {
            if self.at("}") {
                break;
            }
            if dict {
                if self.eat("**") {
                    self.expr()?;
                } else {
                    self.test()?;
                    self.expect(":")?;
                    self.test()?;
                }
            } else {
                self.star_or_test()?;
            }
        }
        Ok(())
    }

    fn subscripts(&mut self) -> PResult<()> {
        loop {
            self.subscript()?;
            if !self.eat(",") || self.at("]") {
                return Ok(());
            }
        }
    }

    fn subscript(&mut self) -> PResult<()> {
        if self.eat("...") {
            return Ok(());
        }
        if !self.at(":") {
            self.test()?;
            if !self.at(":") {
                return Ok(());
            }
        }
        self.expect(":")?;
        if self.starts_expr() {
            self.test()?;
        }
        if self.eat(":") && self.starts_expr() {
            self.test()?;
        }
        Ok(())
    }

    fn arglist(&mut self) -> PResult<()> {
        loop {
            if self.eat("**") || self.eat("*") {
                self.test()?;
            } else if self.peek().is_some_and(is_name) && self.peek_at(1) == Some("=") {
                self.pos += 2;
                self.test()?;
            } else {
                self.test()?;
                if self.at("for") || self.at("async") {
                    self.comp_for()?;
                }
            }
            if !self.eat(",") || self.at(")") {
                return Ok(());
            }
        }
    }
}

/// Checks one logical line. `print x` is accepted in its Python 2 form.
pub(super) fn check_line(tokens: &[String]) -> Verdict {
    if tokens.is_empty() {
        return Verdict::fail("empty line");
    }
    for t in tokens {
        if let Some(body) = string_body(t).filter(|b| b.starts_with(['\'', '"'])) {
            if !is_terminated_string(body) {
                return Verdict::fail(format!("unterminated string literal {t}"));
            }
        } else if t.chars().next().is_some_and(|c| c.is_ascii_digit()) && !is_number(t) {
            return Verdict::fail(format!("invalid number literal `{t}`"));
        } else if matches!(t.as_str(), "$" | "?" | "!" | "\\") {
            return Verdict::fail(format!("invalid character `{t}`"));
        }
    }
    let mut p = Parser {
        toks: tokens,
        pos: 0,
        python2_print: true,
    };
    match p.line() {
        Ok(()) => Verdict::pass(),
        Err(e) => Verdict::fail(e),
    }
}
