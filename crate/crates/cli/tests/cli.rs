use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nl2code_cli::commands::{repl, translate_batch, PROMPT};
use nl2code_cli::{cmd_eval, cmd_train, EvalArgs, ModelKind, TrainArgs};
use nl2code_core::corpus::{Corpus, CorpusStats, Sample};
use nl2code_core::Lang;
use nl2code_models::TrainedModel;
use tempfile::TempDir;

const CORE_GOLDEN: &str = include_str!("../../core/tests/golden/synthetic_stats.json");

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nl2code")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn asm_corpus() -> Corpus {
    let samples = vec![
        Sample::new("xor the dl register with 0xbb", "xor dl, 0xbb", Lang::Assembly).with_program("p1"),
        Sample::new("zero out eax and return", "xor eax, eax\nret", Lang::Assembly).with_program("p1"),
        Sample::new("push ebx onto the stack", "push ebx", Lang::Assembly).with_program("p2"),
    ];
    Corpus::from_samples(Lang::Assembly, samples).unwrap().0
}

/// Writes the corpus and a config training an echo model on it.
fn echo_setup(dir: &Path) -> PathBuf {
    asm_corpus().save(&dir.join("data.jsonl")).unwrap();
    let cfg = dir.join("run.toml");
    fs::write(&cfg, "lang = \"assembly\"\nmodel = \"echo\"\n[data]\ntrain = \"data.jsonl\"\n").unwrap();
    cfg
}

fn train_args(config: &Path, out: &Path) -> TrainArgs {
    TrainArgs {
        config: config.to_path_buf(),
        seed: None,
        model: None,
        lang: None,
        beam: None,
        out: out.to_path_buf(),
    }
}

fn eval_args(checkpoint: &Path, test: &Path, out: &Path) -> EvalArgs {
    EvalArgs {
        checkpoint: checkpoint.to_path_buf(),
        test: test.to_path_buf(),
        annotations: None,
        checker: "builtin".into(),
        beam: None,
        lang: None,
        out: out.to_path_buf(),
    }
}

fn echo_model(dir: &TempDir) -> PathBuf {
    let cfg = echo_setup(dir.path());
    let out = dir.path().join("echo");
    cmd_train(&train_args(&cfg, &out)).unwrap();
    out
}

#[test]
fn stats_table_matches_golden_values_in_row_order() {
    let dir = TempDir::new().unwrap();
    let corpus = dir.path().join("syn.jsonl");
    let o = bin(&["generate", "--lang", "assembly", "--n", "500", "--seed", "1", "--out", s(&corpus)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = bin(&["stats", s(&corpus), "--lang", "assembly"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let golden: serde_json::Value = serde_json::from_str(CORE_GOLDEN).unwrap();
    let g: CorpusStats = serde_json::from_value(golden["assembly_seed1_n500"].clone()).unwrap();
    let want = [
        ("Dataset size", g.size.to_string()),
        ("Unique Snippets", g.unique_snippets.to_string()),
        ("Unique Intents", g.unique_intents.to_string()),
        ("Unique tokens (Snippets)", g.unique_tokens_snippets.to_string()),
        ("Unique tokens (Intents)", g.unique_tokens_intents.to_string()),
        ("Avg. tokens per Snippet", format!("{:.2}", g.avg_tokens_per_snippet)),
        ("Avg. tokens per Intent", format!("{:.2}", g.avg_tokens_per_intent)),
    ];
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    for (i, (label, value)) in want.iter().enumerate() {
        assert!(lines[i].starts_with(label), "row {i}: {}", lines[i]);
        assert_eq!(lines[i].split_whitespace().last().unwrap(), value, "{label}");
    }
}

#[test]
fn stats_on_empty_file_is_all_zeros() {
    let dir = TempDir::new().unwrap();
    let p = dir.path().join("empty.jsonl");
    fs::write(&p, "").unwrap();
    let o = bin(&["stats", s(&p), "--lang", "python", "--json"]);
    assert_eq!(o.status.code(), Some(0));
    let got: CorpusStats = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(got, CorpusStats::default());
}

#[test]
fn stats_on_malformed_file_names_the_line() {
    let dir = TempDir::new().unwrap();
    let p = dir.path().join("bad.jsonl");
    fs::write(&p, "{\"intent\":\"a\",\"snippet\":\"nop\",\"lang\":\"assembly\"}\n{oops\n").unwrap();
    let o = bin(&["stats", s(&p), "--lang", "assembly"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
}

#[test]
fn missing_corpus_path_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "lang = \"assembly\"\n[data]\ntrain = \"nowhere.jsonl\"\n").unwrap();
    let o = bin(&["train", "--config", s(&cfg), "--out", s(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn bad_configs_are_usage_errors() {
    let dir = TempDir::new().unwrap();
    echo_setup(dir.path());
    for (name, body) in [
        ("unknown.toml", "lang = \"assembly\"\nlearning_rate = 3\n[data]\ntrain = \"data.jsonl\"\n"),
        ("invalid.toml", "lang = \"assembly\"\n[data]\ntrain = \"data.jsonl\"\n[seq2seq]\nhidden_dim = 0\n"),
        ("nolang.toml", "[data]\ntrain = \"data.jsonl\"\n"),
    ] {
        let cfg = dir.path().join(name);
        fs::write(&cfg, body).unwrap();
        let o = bin(&["train", "--config", s(&cfg), "--out", s(&dir.path().join("o"))]);
        assert_eq!(o.status.code(), Some(2), "{name}: {}", stderr(&o));
    }
    let o = bin(&["train", "--config"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn train_writes_checkpoint_config_and_log() {
    let dir = TempDir::new().unwrap();
    let cfg = echo_setup(dir.path());
    let out = dir.path().join("run");
    let o = bin(&["train", "--config", s(&cfg), "--seed", "7", "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["model.ckpt", "model.json", "resolved_config.toml", "train_log.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let resolved = fs::read_to_string(out.join("resolved_config.toml")).unwrap();
    let back = nl2code_cli::RunConfig::parse(&resolved).unwrap();
    assert_eq!((back.seed, back.seq2seq.seed, back.model), (7, 7, ModelKind::Echo));
}

#[test]
fn batch_translation_emits_one_record_per_intent() {
    let dir = TempDir::new().unwrap();
    let model_dir = echo_model(&dir);
    let intents = dir.path().join("intents.txt");
    fs::write(
        &intents,
        "xor the dl register with 0xbb\nzero out eax and return\npush ebx onto the stack\n",
    )
    .unwrap();
    let o = bin(&["translate", "--checkpoint", s(&model_dir), "--input", s(&intents)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let records: Vec<&str> = text.trim_end().split("\n\n").collect();
    assert_eq!(records, ["xor dl, 0xbb", "xor eax, eax\nret", "push ebx"]);
}

#[test]
fn batch_skips_blank_input_lines() {
    let dir = TempDir::new().unwrap();
    let model = TrainedModel::load(&echo_model(&dir)).unwrap();
    let mut out = Vec::new();
    let n = translate_batch(&model, &mut Cursor::new("\npush ebx onto the stack\n\n"), &mut out).unwrap();
    assert_eq!(n, 1);
    assert_eq!(String::from_utf8(out).unwrap(), "push ebx\n");
}

#[test]
fn repl_reprompts_on_empty_lines() {
    let dir = TempDir::new().unwrap();
    let model = TrainedModel::load(&echo_model(&dir)).unwrap();
    let mut out = Vec::new();
    repl(&model, &mut Cursor::new("\n   \npush ebx onto the stack\n"), &mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert_eq!(text.matches(PROMPT).count(), 4);
    assert!(text.contains("push ebx\n"));
    assert!(!text.contains("error"));
}

#[test]
fn eval_of_echo_model_scores_bleu_100() {
    let dir = TempDir::new().unwrap();
    let model_dir = echo_model(&dir);
    let out = dir.path().join("eval");
    let mut table = Vec::new();
    let report = cmd_eval(&eval_args(&model_dir, &dir.path().join("data.jsonl"), &out), &mut table).unwrap();
    assert_eq!(report.bleu4, 100.0);
    assert_eq!(report.acc, 1.0);
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("eval_report.json")).unwrap()).unwrap();
    assert_eq!(json["bleu4"], 100.0);
    assert_eq!(fs::read_to_string(out.join("eval_report.txt")).unwrap(), String::from_utf8(table).unwrap());
}

#[test]
fn eval_passes_annotations_through() {
    let dir = TempDir::new().unwrap();
    let model_dir = echo_model(&dir);
    let ann = dir.path().join("ann.jsonl");
    fs::write(
        &ann,
        "{\"record_index\":1,\"line_index\":0,\"semantic\":false}\n{\"record_index\":1,\"line_index\":1,\"semantic\":true}\n",
    )
    .unwrap();
    let mut args = eval_args(&model_dir, &dir.path().join("data.jsonl"), &dir.path().join("eval"));
    args.annotations = Some(ann);
    let report = cmd_eval(&args, &mut Vec::new()).unwrap();
    assert_eq!(report.records[1].judgment.semantic, 0.5);
    assert_eq!(report.records[0].judgment.semantic, 1.0);
}

#[test]
fn eval_warns_on_missing_annotation_file() {
    let dir = TempDir::new().unwrap();
    let model_dir = echo_model(&dir);
    let o = bin(&[
        "eval",
        "--checkpoint",
        s(&model_dir),
        "--test",
        s(&dir.path().join("data.jsonl")),
        "--annotations",
        s(&dir.path().join("absent.jsonl")),
        "--out",
        s(&dir.path().join("eval")),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stderr(&o).contains("not found"), "{}", stderr(&o));
    assert!(dir.path().join("eval/eval_report.json").exists());
}

#[test]
fn language_and_checkpoint_mismatches_exit_3() {
    let dir = TempDir::new().unwrap();
    let model_dir = echo_model(&dir);
    let py = dir.path().join("py.jsonl");
    fs::write(&py, "{\"intent\":\"print x\",\"snippet\":\"print(x)\",\"lang\":\"python\"}\n").unwrap();
    let o = bin(&["eval", "--checkpoint", s(&model_dir), "--test", s(&py), "--out", s(&dir.path().join("e"))]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));

    let o = bin(&["translate", "--checkpoint", s(&model_dir), "--lang", "python"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));

    let side = model_dir.join("model.json");
    let text = fs::read_to_string(&side).unwrap().replace("push ebx", "push ecx");
    fs::write(&side, text).unwrap();
    let o = bin(&["translate", "--checkpoint", s(&model_dir)]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn parse_intent_shows_slots() {
    let o = bin(&["parse-intent", "xor dl with 0xbb and jump to next_cycle if zero", "--lang", "assembly"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains(r#"{"var0":"dl","var1":"0xbb","var2":"next_cycle"}"#), "{text}");
}

#[test]
fn parse_intent_keeps_quotes_in_slot_surfaces() {
    let o = bin(&["parse-intent", "print 'hello world' to the screen", "--lang", "python"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains(r#""var0":"'hello world'""#), "{}", stdout(&o));
}

#[test]
fn parse_intent_of_stopwords_only_warns() {
    let o = bin(&["parse-intent", "the an a", "--lang", "python"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).lines().any(|l| l.trim_end() == "standardized:"), "{}", stdout(&o));
    assert!(stderr(&o).contains("stopword"), "{}", stderr(&o));
}

fn low_byte(r: &str) -> &'static str {
    match r {
        "eax" => "al",
        "ebx" => "bl",
        "ecx" => "cl",
        _ => "dl",
    }
}

#[test]
fn trained_model_gives_two_lines_for_a_two_step_intent() {
    let dir = TempDir::new().unwrap();
    let mut samples = Vec::new();
    for (i, r) in ["eax", "ebx", "edx"].iter().enumerate() {
        for n in [3 + i, 17 + i, 40 + i] {
            samples.push(Sample::new(
                format!("zero out the {r} register and move {n} in the lower 8 bits of the register"),
                format!("xor {r}, {r}\nmov {}, {n}", low_byte(r)),
                Lang::Assembly,
            ));
            samples.push(Sample::new(format!("push {r} onto the stack"), format!("push {r}"), Lang::Assembly));
        }
    }
    Corpus::from_samples(Lang::Assembly, samples).unwrap().0.save(&dir.path().join("t.jsonl")).unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        "lang = \"assembly\"\n[data]\ntrain = \"t.jsonl\"\n[seq2seq]\nembed_dim = 16\nhidden_dim = 32\nmax_epochs = 60\n",
    )
    .unwrap();
    let out = dir.path().join("s2s");
    cmd_train(&train_args(&cfg, &out)).unwrap();
    let intents = dir.path().join("in.txt");
    fs::write(&intents, "zero out the ecx register and move 25 in the lower 8 bits of the register\n").unwrap();
    let o = bin(&["translate", "--checkpoint", s(&out), "--input", s(&intents)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let lines: Vec<&str> = text.trim_end().lines().collect();
    assert_eq!(lines.len(), 2, "{text}");
    assert!(lines[0].starts_with("xor "), "{text}");
    assert!(lines[1].starts_with("mov "), "{text}");
}
