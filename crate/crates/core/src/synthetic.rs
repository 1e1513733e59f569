//! Deterministic template-generated micro-corpora.
//!
//! Every template names the values it fills in; register names, labels,
//! hex literals, memory operands and variable names are written into the
//! intent exactly as they appear in the snippet and become slots. Small decimal constants are copied verbatim and
//! stay ordinary tokens.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Corpus, Sample};
use crate::error::{CoreError, Result};
use crate::Lang;

/// Samples per program id.
pub const PROGRAM_SIZE: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Fill {
    /// Register from the instance's size class; repeated `Reg`s are distinct.
    Reg,
    Reg32,
    Reg8,
    Hex,
    Dec,
    Label,
    Mem,
    Var,
    QuotedHex,
}

struct Template {
    intent: &'static str,
    snippet: &'static str,
    fills: &'static [Fill],
}

const fn t(intent: &'static str, snippet: &'static str, fills: &'static [Fill]) -> Template {
    Template { intent, snippet, fills }
}

use Fill::*;

const ASM: &[Template] = &[
    t("move {0} in the {1} register", "mov {1}, {0}", &[Dec, Reg]),
    t("move {0} into {1}", "mov {1}, {0}", &[Hex, Reg]),
    t("copy the value of {0} into {1}", "mov {1}, {0}", &[Reg, Reg]),
    t("zero out the {0} register", "xor {0}, {0}", &[Reg]),
    t("xor the {0} register with {1}", "xor {0}, {1}", &[Reg, Hex]),
    t("xor {0} with {1}", "xor {0}, {1}", &[Reg, Reg]),
    t("xor the byte at {0} with {1}", "xor byte {0}, {1}", &[Mem, Reg8]),
    t("add {0} to {1}", "add {1}, {0}", &[Hex, Reg]),
    t("add the {0} register to {1}", "add {1}, {0}", &[Reg, Reg]),
    t("subtract {0} from {1}", "sub {1}, {0}", &[Hex, Reg]),
    t("increment the {0} register", "inc {0}", &[Reg]),
    t("decrement {0}", "dec {0}", &[Reg]),
    t("increment the address in {0}", "inc {0}", &[Reg32]),
    t("push {0} onto the stack", "push {0}", &[Reg32]),
    t("pop the top of the stack into {0}", "pop {0}", &[Reg32]),
    t("jump to {0}", "jmp {0}", &[Label]),
    t("jump short to {0}", "jmp short {0}", &[Label]),
    t("if zero jump to {0}", "jz {0}", &[Label]),
    t("jump to {0} if not zero", "jnz {0}", &[Label]),
    t("call {0}", "call {0}", &[Label]),
    t("loop back to {0}", "loop {0}", &[Label]),
    t("define the {0} label", "{0}:", &[Label]),
    t("compare {0} with {1}", "cmp {0}, {1}", &[Reg, Hex]),
    t("compare the byte at {0} with {1}", "cmp byte {0}, {1}", &[Mem, Hex]),
    t("shift {0} left by {1} bits", "shl {0}, {1}", &[Reg, Dec]),
    t("shift {0} right by {1} bits", "shr {0}, {1}", &[Reg, Dec]),
    t("rotate the {0} register right by {1}", "ror {0}, {1}", &[Reg, Dec]),
    t("rotate {0} left by {1} bits", "rol {0}, {1}", &[Reg, Dec]),
    t("swap {0} and {1}", "xchg {0}, {1}", &[Reg, Reg]),
    t("negate the {0} register", "neg {0}", &[Reg]),
    t("and {0} with {1}", "and {0}, {1}", &[Reg, Hex]),
    t("or {0} with {1}", "or {0}, {1}", &[Reg, Hex]),
    t("test {0} against itself", "test {0}, {0}", &[Reg]),
    t("move the byte at {0} into {1}", "mov {1}, byte {0}", &[Mem, Reg8]),
    t("load the address of {0} into {1}", "lea {1}, {0}", &[Mem, Reg32]),
    t("make the system call", "int 0x80", &[]),
];

const PY: &[Template] = &[
    t("append {0} to {1}", "{1} += {0}", &[QuotedHex, Var]),
    t("initialize {0} to an empty string", "{0} = ''", &[Var]),
    t("set {0} to {1}", "{0} = {1}", &[Var, Hex]),
    t("copy {0} into {1}", "{1} = {0}", &[Var, Var]),
    t("xor {0} with {1}", "{0} = {0} ^ {1}", &[Var, Hex]),
    t("store the bitwise and of {0} and {1} in {2}", "{2} = {0} & {1}", &[Var, Var, Var]),
    t("store the bitwise or of {0} and {1} in {2}", "{2} = {0} | {1}", &[Var, Var, Var]),
    t("add {0} to {1}", "{1} = {1} + {0}", &[Hex, Var]),
    t("subtract {0} from {1}", "{1} = {1} - {0}", &[Hex, Var]),
    t("increment {0} by {1}", "{0} += {1}", &[Var, Dec]),
    t("shift {0} left by {1} bits", "{0} = {0} << {1}", &[Var, Dec]),
    t("shift {0} right by {1} bits", "{0} = {0} >> {1}", &[Var, Dec]),
    t("convert {0} to hex and store it in {1}", "{1} = hex({0})", &[Var, Var]),
    t(
        "convert {0} to hex, remove the first {1} characters and convert it to integer into {2}",
        "{2} = int(hex({0})[{1}:], 16)",
        &[Var, Dec, Var],
    ),
    t("append {0} to the list {1}", "{1}.append({0})", &[Var, Var]),
    t("store the length of {0} in {1}", "{1} = len({0})", &[Var, Var]),
    t("print {0}", "print({0})", &[Var]),
    t("return {0}", "return {0}", &[Var]),
    t("for each {0} in {1}", "for {0} in {1}:", &[Var, Var]),
    t("if {0} equals {1}", "if {0} == {1}:", &[Var, Hex]),
    t("store the character of {0} in {1}", "{1} = chr({0})", &[Var, Var]),
    t("concatenate {0} and {1} into {2}", "{2} = {0} + {1}", &[Var, Var, Var]),
];

const REG32: [&str; 6] = ["eax", "ebx", "ecx", "edx", "esi", "edi"];
const REG16: [&str; 4] = ["ax", "bx", "cx", "dx"];
const REG8: [&str; 8] = ["al", "bl", "cl", "dl", "ah", "bh", "ch", "dh"];
const DECIMALS: [&str; 8] = ["1", "2", "3", "4", "5", "7", "8", "16"];
const LABEL_PARTS: [&str; 12] = [
    "decode", "next", "loop", "cycle", "shift", "done", "stage", "check", "start", "exit", "main", "call",
];
const VAR_PARTS: [&str; 12] = ["enc", "dec", "buf", "shell", "key", "byte", "res", "val", "out", "tmp", "data", "code"];
const MEM_BASES: [&str; 2] = ["esi", "edi"];

fn joined_name(rng: &mut ChaCha8Rng, parts: &[&str]) -> String {
    let a = parts.choose(rng).expect("non-empty");
    let b = loop {
        let b = parts.choose(rng).expect("non-empty");
        if b != a {
            break b;
        }
    };
    format!("{a}_{b}")
}

fn hex_byte(rng: &mut ChaCha8Rng) -> String {
    format!("0x{:02x}", rng.gen_range(1u8..=255))
}

/// A filled template: intent text, snippet text and the values in the
/// order they first appear in the intent.
struct Filled {
    intent: String,
    snippet: String,
}

fn fill(rng: &mut ChaCha8Rng, tpl: &Template, regs: &[&'static str]) -> Filled {
    let mut values: Vec<String> = Vec::with_capacity(tpl.fills.len());
    for kind in tpl.fills {
        let v = loop {
            let v = match kind {
                Reg => regs.choose(rng).expect("non-empty").to_string(),
                Reg32 => REG32.choose(rng).expect("non-empty").to_string(),
                Reg8 => REG8.choose(rng).expect("non-empty").to_string(),
                Hex => hex_byte(rng),
                Dec => DECIMALS.choose(rng).expect("non-empty").to_string(),
                Label => joined_name(rng, &LABEL_PARTS),
                Mem => {
                    let base = MEM_BASES.choose(rng).expect("non-empty");
                    match rng.gen_range(0..3) {
                        0 => format!("[{base}]"),
                        _ => format!("[{base}+{}]", rng.gen_range(1..=8)),
                    }
                }
                Var => joined_name(rng, &VAR_PARTS),
                QuotedHex => format!("'{}'", hex_byte(rng)),
            };
            if !values.contains(&v) {
                break v;
            }
        };
        values.push(v);
    }
    let render = |pattern: &str| {
        let mut out = pattern.to_string();
        for (i, v) in values.iter().enumerate() {
            out = out.replace(&format!("{{{i}}}"), v);
        }
        out
    };
    Filled {
        intent: render(tpl.intent),
        snippet: render(tpl.snippet),
    }
}

fn line_count(rng: &mut ChaCha8Rng) -> usize {
    match rng.gen_range(0..100) {
        0..=49 => 2,
        50..=79 => 3,
        80..=91 => 4,
        _ => 5,
    }
}

fn one_line(rng: &mut ChaCha8Rng, lang: Lang) -> Filled {
    match lang {
        Lang::Assembly => {
            let tpl = ASM.choose(rng).expect("non-empty");
            let regs: &[&'static str] = match rng.gen_range(0..4) {
                0 | 1 => &REG32,
                2 => &REG16,
                _ => &REG8,
            };
            fill(rng, tpl, regs)
        }
        Lang::Python => {
            let tpl = PY.choose(rng).expect("non-empty");
            fill(rng, tpl, &[])
        }
    }
}

/// Generates `n` unique samples. Every fourth sample (starting with the
/// first) spans 2 to 5 lines; program ids are assigned in consecutive
/// blocks of [`PROGRAM_SIZE`].
pub fn generate_synthetic_corpus(seed: u64, n: usize, lang: Lang) -> Result<Corpus> {
    if n == 0 {
        return Err(CoreError::Generation("requested zero samples".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = HashSet::new();
    let mut samples = Vec::with_capacity(n);
    let mut attempts = 0usize;
    while samples.len() < n {
        attempts += 1;
        if attempts > n * 100 {
            return Err(CoreError::Generation(format!("could only produce {} unique samples", samples.len())));
        }
        let i = samples.len();
        let lines = if i % 4 == 0 { line_count(&mut rng) } else { 1 };
        let parts: Vec<Filled> = (0..lines).map(|_| one_line(&mut rng, lang)).collect();
        let intent = parts.iter().map(|p| p.intent.as_str()).collect::<Vec<_>>().join(" then ");
        let snippet = parts.iter().map(|p| p.snippet.as_str()).collect::<Vec<_>>().join("\\n");
        if !seen.insert((intent.clone(), snippet.clone())) {
            continue;
        }
        let program = format!("prog{:03}", i / PROGRAM_SIZE);
        samples.push(Sample::new(intent, snippet, lang).with_program(program));
    }
    let (corpus, duplicates) = Corpus::from_samples(lang, samples)?;
    debug_assert_eq!(duplicates, 0);
    Ok(corpus)
}
