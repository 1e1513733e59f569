//! NASM-subset grammar for 32-bit x86 snippets.

use super::Verdict;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Size {
    B8,
    B16,
    B32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Operand {
    Reg(Size),
    Mem(Option<Size>),
    Imm,
    Label { short: bool },
}

fn register_size(r: &str) -> Option<Size> {
    match r.to_ascii_lowercase().as_str() {
        "eax" | "ebx" | "ecx" | "edx" | "esi" | "edi" | "esp" | "ebp" => Some(Size::B32),
        "ax" | "bx" | "cx" | "dx" | "si" | "di" | "sp" | "bp" => Some(Size::B16),
        "al" | "bl" | "cl" | "dl" | "ah" | "bh" | "ch" | "dh" => Some(Size::B8),
        _ => None,
    }
}

fn size_keyword(t: &str) -> Option<Size> {
    match t.to_ascii_lowercase().as_str() {
        "byte" => Some(Size::B8),
        "word" => Some(Size::B16),
        "dword" => Some(Size::B32),
        _ => None,
    }
}

fn is_number(t: &str) -> bool {
    let t = t.strip_prefix('-').unwrap_or(t);
    let lower = t.to_ascii_lowercase();
    if let Some(h) = lower.strip_prefix("0x") {
        return !h.is_empty() && h.bytes().all(|b| b.is_ascii_hexdigit() || b == b'_');
    }
    if let Some(b) = lower.strip_prefix("0b") {
        return !b.is_empty() && b.bytes().all(|c| c == b'0' || c == b'1');
    }
    if let Some(h) = lower.strip_suffix('h') {
        return !h.is_empty() && h.as_bytes()[0].is_ascii_digit() && h.bytes().all(|b| b.is_ascii_hexdigit());
    }
    !lower.is_empty() && lower.bytes().all(|b| b.is_ascii_digit())
}

fn is_char_literal(t: &str) -> bool {
    t.len() >= 2 && (t.starts_with('\'') && t.ends_with('\'') || t.starts_with('"') && t.ends_with('"'))
}

fn is_identifier(t: &str) -> bool {
    let mut chars = t.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_' || c == '.')
        && chars.all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '$' | '@'))
}

fn check_memory(inner: &str) -> Result<(), String> {
    if inner.is_empty() {
        return Err("empty memory operand".into());
    }
    let mut regs = 0;
    let mut term = String::new();
    let mut terms = Vec::new();
    for (i, c) in inner.char_indices() {
        if (c == '+' || c == '-') && i > 0 {
            terms.push(std::mem::take(&mut term));
        } else {
            term.push(c);
        }
    }
    terms.push(term);
    for t in terms {
        let t = t.strip_prefix('-').unwrap_or(&t);
        if t.is_empty() {
            return Err("dangling operator in memory operand".into());
        }
        let parts: Vec<&str> = t.split('*').collect();
        match parts.as_slice() {
            [single] => {
                if let Some(size) = register_size(single) {
                    if size != Size::B32 {
                        return Err(format!("`{single}` cannot address memory"));
                    }
                    regs += 1;
                } else if !is_number(single) && !is_identifier(single) {
                    return Err(format!("bad memory term `{single}`"));
                }
            }
            [a, b] => {
                let (reg, scale) = if register_size(a).is_some() { (a, b) } else { (b, a) };
                if register_size(reg) != Some(Size::B32) || !matches!(*scale, "1" | "2" | "4" | "8") {
                    return Err(format!("bad scaled index `{t}`"));
                }
                regs += 1;
            }
            _ => return Err(format!("bad memory term `{t}`")),
        }
    }
    if regs > 2 {
        return Err("too many registers in memory operand".into());
    }
    Ok(())
}

fn parse_operand(tokens: &[String]) -> Result<Operand, String> {
    let (size, rest) = match tokens.first().and_then(|t| size_keyword(t)) {
        Some(s) => (Some(s), &tokens[1..]),
        None => (None, tokens),
    };
    let (short, rest) = match rest.first().map(|t| t.to_ascii_lowercase()) {
        Some(t) if t == "short" || t == "near" => (t == "short", &rest[1..]),
        _ => (false, rest),
    };
    let [tok] = rest else {
        return Err(if rest.is_empty() { "missing operand".into() } else { format!("unexpected `{}`", rest[1]) });
    };
    if let Some(inner) = tok.strip_prefix('[') {
        let inner = inner.strip_suffix(']').ok_or_else(|| format!("unclosed memory operand `{tok}`"))?;
        check_memory(inner)?;
        if short {
            return Err("`short` applies to jump targets only".into());
        }
        return Ok(Operand::Mem(size));
    }
    if size.is_some() && !is_number(tok) && !is_char_literal(tok) {
        if let Some(rs) = register_size(tok) {
            if Some(rs) != size {
                return Err(format!("size specifier conflicts with register `{tok}`"));
            }
            return Ok(Operand::Reg(rs));
        }
    }
    if let Some(s) = register_size(tok) {
        if short {
            return Err("`short` applies to jump targets only".into());
        }
        return Ok(Operand::Reg(s));
    }
    if is_number(tok) || is_char_literal(tok) {
        return Ok(Operand::Imm);
    }
    if is_identifier(tok) {
        return Ok(Operand::Label { short });
    }
    Err(format!("bad operand `{tok}`"))
}

#[derive(Clone, Copy)]
enum Form {
    /// No operands.
    Nullary,
    /// Two operands: destination register/memory, source register/memory/immediate.
    Binary,
    /// `xchg`: register or memory pairs, no immediates.
    Exchange,
    /// Register, memory.
    Lea,
    /// One register or memory operand.
    Unary,
    Push,
    Pop,
    /// Register/memory, then immediate or `cl`.
    Shift,
    /// Label target; `jmp` and `call` also take register/memory.
    Jump { indirect: bool },
    /// Immediate.
    Interrupt,
    /// Optional immediate.
    Return,
    /// Wide register, narrower register or memory.
    Extend,
}

fn form_of(mnemonic: &str) -> Option<Form> {
    use Form::*;
    Some(match mnemonic {
        "nop" | "cdq" | "cld" | "std" | "clc" | "stc" | "pushad" | "popad" | "pusha" | "popa" | "leave" | "hlt"
        | "int3" | "lodsb" | "lodsw" | "lodsd" | "stosb" | "stosw" | "stosd" | "movsb" | "movsw" | "movsd"
        | "scasb" | "cmpsb" | "pushfd" | "popfd" | "sahf" | "lahf" | "cwd" | "cbw" | "cwde" => Nullary,
        "mov" | "add" | "sub" | "xor" | "and" | "or" | "cmp" | "test" | "adc" | "sbb" => Binary,
        "xchg" => Exchange,
        "lea" => Lea,
        "inc" | "dec" | "neg" | "not" | "mul" | "div" | "imul" | "idiv" => Unary,
        "push" => Push,
        "pop" => Pop,
        "shl" | "shr" | "sal" | "sar" | "rol" | "ror" | "rcl" | "rcr" => Shift,
        "jmp" | "call" => Jump { indirect: true },
        "je" | "jz" | "jne" | "jnz" | "jl" | "jg" | "jle" | "jge" | "ja" | "jb" | "jae" | "jbe" | "jc" | "jnc"
        | "js" | "jns" | "jo" | "jno" | "jp" | "jnp" | "jecxz" | "loop" | "loope" | "loopne" | "loopz"
        | "loopnz" => Jump { indirect: false },
        "int" => Interrupt,
        "ret" | "retn" => Return,
        "movzx" | "movsx" => Extend,
        _ => return None,
    })
}

fn rm_size(op: &Operand) -> Option<Option<Size>> {
    match op {
        Operand::Reg(s) => Some(Some(*s)),
        Operand::Mem(s) => Some(*s),
        _ => None,
    }
}

fn check_instruction(mnemonic: &str, ops: &[Operand], raw: &[&[String]]) -> Result<(), String> {
    let form = form_of(mnemonic).ok_or_else(|| format!("unknown mnemonic `{mnemonic}`"))?;
    let arity = |n: usize| -> Result<(), String> {
        if ops.len() == n {
            Ok(())
        } else {
            Err(format!("`{mnemonic}` takes {n} operand(s), got {}", ops.len()))
        }
    };
    let no_short = || {
        if ops.iter().any(|o| matches!(o, Operand::Label { short: true })) {
            Err("`short` applies to jump targets only".to_string())
        } else {
            Ok(())
        }
    };
    match form {
        Form::Nullary => arity(0),
        Form::Binary => {
            arity(2)?;
            no_short()?;
            let dst = rm_size(&ops[0]).ok_or("destination must be a register or memory")?;
            match &ops[1] {
                Operand::Reg(s) => {
                    if matches!(ops[0], Operand::Mem(_)) {
                        if dst.is_some_and(|d| d != *s) {
                            return Err("operand sizes differ".into());
                        }
                    } else if dst != Some(*s) {
                        return Err("operand sizes differ".into());
                    }
                    Ok(())
                }
                Operand::Mem(s) => match &ops[0] {
                    Operand::Reg(d) if s.is_none_or(|s| s == *d) => Ok(()),
                    Operand::Reg(_) => Err("operand sizes differ".into()),
                    _ => Err("memory to memory is not encodable".into()),
                },
                Operand::Imm | Operand::Label { .. } => {
                    if dst.is_none() {
                        Err("operation size not specified".into())
                    } else {
                        Ok(())
                    }
                }
            }
        }
        Form::Exchange => {
            arity(2)?;
            match (&ops[0], &ops[1]) {
                (Operand::Reg(a), Operand::Reg(b)) if a == b => Ok(()),
                (Operand::Reg(a), Operand::Mem(s)) | (Operand::Mem(s), Operand::Reg(a)) if s.is_none_or(|s| s == *a) => {
                    Ok(())
                }
                _ => Err("invalid operands for `xchg`".into()),
            }
        }
        Form::Lea => {
            arity(2)?;
            match (&ops[0], &ops[1]) {
                (Operand::Reg(Size::B32 | Size::B16), Operand::Mem(_)) => Ok(()),
                _ => Err("`lea` needs a wide register and a memory operand".into()),
            }
        }
        Form::Unary => {
            arity(1)?;
            match &ops[0] {
                Operand::Reg(_) | Operand::Mem(Some(_)) => Ok(()),
                Operand::Mem(None) => Err("operation size not specified".into()),
                _ => Err(format!("`{mnemonic}` needs a register or memory operand")),
            }
        }
        Form::Push | Form::Pop => {
            arity(1)?;
            no_short()?;
            match &ops[0] {
                Operand::Reg(Size::B32 | Size::B16) | Operand::Mem(Some(Size::B32 | Size::B16)) => Ok(()),
                Operand::Imm | Operand::Label { .. } if matches!(form, Form::Push) => Ok(()),
                Operand::Mem(None) => Err("operation size not specified".into()),
                _ => Err(format!("invalid operand for `{mnemonic}`")),
            }
        }
        Form::Shift => {
            arity(2)?;
            match &ops[0] {
                Operand::Reg(_) | Operand::Mem(Some(_)) => {}
                Operand::Mem(None) => return Err("operation size not specified".into()),
                _ => return Err("shift destination must be a register or memory".into()),
            }
            match &ops[1] {
                Operand::Imm => Ok(()),
                Operand::Reg(_) if raw[1].len() == 1 && raw[1][0].eq_ignore_ascii_case("cl") => Ok(()),
                _ => Err("shift count must be an immediate or `cl`".into()),
            }
        }
        Form::Jump { indirect } => {
            arity(1)?;
            match &ops[0] {
                Operand::Label { .. } | Operand::Imm => Ok(()),
                Operand::Reg(Size::B32) | Operand::Mem(None | Some(Size::B32)) if indirect => Ok(()),
                _ => Err(format!("invalid target for `{mnemonic}`")),
            }
        }
        Form::Interrupt => {
            arity(1)?;
            match ops[0] {
                Operand::Imm => Ok(()),
                _ => Err("`int` needs an immediate vector".into()),
            }
        }
        Form::Return => match ops {
            [] | [Operand::Imm] => Ok(()),
            _ => Err("`ret` takes an optional immediate".into()),
        },
        Form::Extend => {
            arity(2)?;
            let Operand::Reg(dst) = ops[0] else {
                return Err(format!("`{mnemonic}` needs a register destination"));
            };
            let src = rm_size(&ops[1]).ok_or("source must be a register or memory")?;
            match (dst, src) {
                (Size::B16, Some(Size::B8)) | (Size::B32, Some(Size::B8 | Size::B16)) => Ok(()),
                (_, None) => Err("operation size not specified".into()),
                _ => Err("invalid operand sizes for extension".into()),
            }
        }
    }
}

const DATA_DIRECTIVES: [&str; 6] = ["db", "dw", "dd", "resb", "resw", "resd"];

fn split_operands(tokens: &[String]) -> Vec<&[String]> {
    if tokens.is_empty() {
        return Vec::new();
    }
    tokens.split(|t| t == ",").collect()
}

fn check_directive(head: &str, rest: &[String]) -> Option<Result<(), String>> {
    let head = head.to_ascii_lowercase();
    Some(match head.as_str() {
        "section" | "segment" => match rest {
            [name] if is_identifier(name) => Ok(()),
            _ => Err("`section` takes one name".into()),
        },
        "global" | "extern" => {
            if rest.is_empty() {
                Err(format!("`{head}` needs a symbol"))
            } else if split_operands(rest).iter().all(|o| matches!(o, [s] if is_identifier(s))) {
                Ok(())
            } else {
                Err(format!("bad symbol list for `{head}`"))
            }
        }
        "bits" => match rest {
            [n] if matches!(n.as_str(), "16" | "32" | "64") => Ok(()),
            _ => Err("`bits` takes 16, 32 or 64".into()),
        },
        d if DATA_DIRECTIVES.contains(&d) => {
            if rest.is_empty() {
                Err(format!("`{d}` needs a value"))
            } else if split_operands(rest)
                .iter()
                .all(|o| matches!(o, [v] if is_number(v) || is_char_literal(v)))
            {
                Ok(())
            } else {
                Err(format!("bad value list for `{d}`"))
            }
        }
        _ => return None,
    })
}

/// Checks one line of assembly given its tokens.
pub(super) fn check_line(tokens: &[String]) -> Verdict {
    let mut rest = tokens;
    if rest.len() >= 2 && rest[1] == ":" {
        if !is_identifier(&rest[0]) || register_size(&rest[0]).is_some() {
            return Verdict::fail(format!("bad label `{}`", rest[0]));
        }
        rest = &rest[2..];
    }
    let Some(head) = rest.first() else {
        return if tokens.is_empty() { Verdict::fail("empty line") } else { Verdict::pass() };
    };
    if let Some(r) = check_directive(head, &rest[1..]) {
        return r.map_or_else(Verdict::fail, |_| Verdict::pass());
    }
    if rest.len() >= 2 && DATA_DIRECTIVES.contains(&rest[1].to_ascii_lowercase().as_str()) && is_identifier(head) {
        return check_directive(&rest[1], &rest[2..]).expect("data directive").map_or_else(Verdict::fail, |_| Verdict::pass());
    }
    let mnemonic = head.to_ascii_lowercase();
    let raw = split_operands(&rest[1..]);
    let mut ops = Vec::new();
    for group in &raw {
        match parse_operand(group) {
            Ok(op) => ops.push(op),
            Err(e) => return Verdict::fail(e),
        }
    }
    match check_instruction(&mnemonic, &ops, &raw) {
        Ok(()) => Verdict::pass(),
        Err(e) => Verdict::fail(e),
    }
}
