use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use log::{info, warn};
use nl2code_core::corpus::{compute_stats, load_corpus, split_by_program, Corpus, CorpusStats, SplitSpec};
use nl2code_core::eval::{evaluate_model, Annotations, EvalOptions, EvalReport, SyntaxChecker};
use nl2code_core::pipeline::{filter_stopwords, parse_intent, tokenize_intent, LexiconConfig, Pipeline};
use nl2code_core::synthetic::generate_synthetic_corpus;
use nl2code_core::Lang;
use nl2code_models::transformer::{self, Stage};
use nl2code_models::{seq2seq, EchoTable, Network, TrainedModel};

use crate::config::{ModelKind, Overrides, RunConfig};
use crate::exit::{mismatch, usage, CliResult};
use crate::{EvalArgs, GenerateArgs, ParseIntentArgs, SplitArgs, StatsArgs, TrainArgs, TranslateArgs};

pub const TRAIN_LOG_FILE: &str = "train_log.csv";
pub const EVAL_JSON_FILE: &str = "eval_report.json";
pub const EVAL_TABLE_FILE: &str = "eval_report.txt";

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    fs::write(path, contents).with_context(|| format!("cannot write {}", path.display()))
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

/// Rows in the order of the dataset statistics table.
pub fn stats_table(stats: &CorpusStats) -> String {
    let rows: [(&str, String); 9] = [
        ("Dataset size", stats.size.to_string()),
        ("Unique Snippets", stats.unique_snippets.to_string()),
        ("Unique Intents", stats.unique_intents.to_string()),
        ("Unique tokens (Snippets)", stats.unique_tokens_snippets.to_string()),
        ("Unique tokens (Intents)", stats.unique_tokens_intents.to_string()),
        ("Avg. tokens per Snippet", format!("{:.2}", stats.avg_tokens_per_snippet)),
        ("Avg. tokens per Intent", format!("{:.2}", stats.avg_tokens_per_intent)),
        ("Multi-line snippets", stats.multiline_count.to_string()),
        ("Multi-line fraction", format!("{:.4}", stats.multiline_fraction)),
    ];
    let mut s = String::new();
    for (name, value) in rows {
        let _ = writeln!(s, "{name:<26} {value:>10}");
    }
    s
}

pub fn cmd_stats(args: &StatsArgs, out: &mut dyn Write) -> CliResult<()> {
    let loaded = load_corpus(&args.corpus, args.lang)?;
    let stats = compute_stats(&loaded.corpus);
    if args.json {
        writeln!(out, "{}", serde_json::to_string_pretty(&stats)?)?;
    } else {
        write!(out, "{}", stats_table(&stats))?;
    }
    Ok(())
}

pub fn cmd_generate(args: &GenerateArgs, out: &mut dyn Write) -> CliResult<()> {
    let corpus = generate_synthetic_corpus(args.seed, args.n, args.lang)?;
    corpus.save(&args.out)?;
    writeln!(out, "wrote {} samples to {}", corpus.len(), args.out.display())?;
    Ok(())
}

fn save_split(dir: &Path, train: &Corpus, dev: &Corpus, test: &Corpus) -> CliResult<()> {
    create_dir(dir)?;
    for (name, part) in [("train", train), ("dev", dev), ("test", test)] {
        part.save(&dir.join(format!("{name}.jsonl")))?;
    }
    Ok(())
}

pub fn cmd_split(args: &SplitArgs, out: &mut dyn Write) -> CliResult<()> {
    let loaded = load_corpus(&args.corpus, args.lang)?;
    let spec = SplitSpec {
        test_program_ids: args.test_programs.iter().cloned().collect(),
        dev_fraction: args.dev_fraction,
        seed: args.seed,
    };
    let split = split_by_program(&loaded.corpus, &spec)?;
    save_split(&args.out, &split.train, &split.dev, &split.test)?;
    writeln!(
        out,
        "train {} / dev {} / test {} written to {}",
        split.train.len(),
        split.dev.len(),
        split.test.len(),
        args.out.display()
    )?;
    Ok(())
}

struct Data {
    train: Corpus,
    dev: Corpus,
    test: Corpus,
}

fn load_optional(path: Option<&Path>, lang: Lang) -> CliResult<Corpus> {
    match path {
        Some(p) => Ok(load_corpus(p, lang)?.corpus),
        None => Ok(Corpus::empty(lang)),
    }
}

fn load_data(cfg: &RunConfig) -> CliResult<Data> {
    let d = &cfg.data;
    if let Some(path) = &d.corpus {
        let corpus = load_corpus(path, cfg.lang)?.corpus;
        let spec = SplitSpec {
            test_program_ids: d.test_programs.iter().cloned().collect(),
            dev_fraction: d.dev_fraction,
            seed: cfg.seed,
        };
        let s = split_by_program(&corpus, &spec)?;
        return Ok(Data {
            train: s.train,
            dev: s.dev,
            test: s.test,
        });
    }
    Ok(Data {
        train: load_optional(d.train.as_deref(), cfg.lang)?,
        dev: load_optional(d.dev.as_deref(), cfg.lang)?,
        test: load_optional(d.test.as_deref(), cfg.lang)?,
    })
}

fn resolve(args: &TrainArgs) -> CliResult<RunConfig> {
    RunConfig::load(&args.config)?.resolve(&Overrides {
        seed: args.seed,
        model: args.model,
        lang: args.lang,
        beam: args.beam,
    })
}

/// Files written by `train` and `pretrain`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub out: PathBuf,
    pub checkpoint: PathBuf,
    pub resolved_config: PathBuf,
    pub train_log: PathBuf,
    /// Present when the run split a corpus itself.
    pub split_dir: Option<PathBuf>,
    pub kind: &'static str,
    pub epochs: usize,
}

impl TrainOutcome {
    pub fn report(&self, out: &mut dyn Write) -> CliResult<()> {
        writeln!(out, "{} model written to {}", self.kind, self.out.display())?;
        writeln!(out, "records logged: {}", self.epochs)?;
        if let Some(dir) = &self.split_dir {
            writeln!(out, "split written to {}", dir.display())?;
        }
        Ok(())
    }
}

fn finish(
    cfg: &RunConfig,
    out: &Path,
    model: &TrainedModel,
    log_csv: String,
    epochs: usize,
    split_dir: Option<PathBuf>,
) -> CliResult<TrainOutcome> {
    model.save(out)?;
    let resolved_config = cfg.write_resolved(out)?;
    let train_log = out.join(TRAIN_LOG_FILE);
    write_file(&train_log, &log_csv)?;
    Ok(TrainOutcome {
        out: out.to_path_buf(),
        checkpoint: out.join(nl2code_models::model::CHECKPOINT_FILE),
        resolved_config,
        train_log,
        split_dir,
        kind: model.kind(),
        epochs,
    })
}

/// Trains the configured model; writes the checkpoint, its sidecar, the
/// resolved config and the training log into `--out`.
pub fn cmd_train(args: &TrainArgs) -> CliResult<TrainOutcome> {
    let cfg = resolve(args)?;
    let pipeline = Pipeline::new(cfg.lang, cfg.lexicon.load()?);
    let data = load_data(&cfg)?;
    if data.train.is_empty() {
        return Err(usage("no training data: set [data] train or corpus"));
    }
    create_dir(&args.out)?;
    let split_dir = match cfg.data.corpus {
        Some(_) => {
            let dir = args.out.join("split");
            save_split(&dir, &data.train, &data.dev, &data.test)?;
            Some(dir)
        }
        None => None,
    };
    info!("training {:?} on {} samples", cfg.model, data.train.len());
    let (network, log) = match cfg.model {
        ModelKind::Seq2seq => {
            let (m, log) = seq2seq::train(&data.train, &data.dev, &cfg.seq2seq, &pipeline)?;
            (Network::Seq2Seq(m), Some(log))
        }
        ModelKind::Transformer => {
            let (m, log) = match &cfg.pretrained {
                Some(dir) => {
                    let base = load_pretrained(dir, &cfg)?;
                    transformer::fine_tune(base, &data.train, &data.dev, &pipeline)?
                }
                None => transformer::train(&data.train, &data.dev, &cfg.transformer, &pipeline)?,
            };
            (Network::Transformer(m), Some(log))
        }
        ModelKind::Echo => {
            let mut all = data.train.samples().to_vec();
            all.extend_from_slice(data.dev.samples());
            let (corpus, _) = Corpus::from_samples(cfg.lang, all)?;
            (Network::Echo(EchoTable::from_corpus(&corpus)), None)
        }
    };
    let model = TrainedModel::new(network, pipeline);
    let (csv, epochs) = match log {
        Some(l) => (l.to_csv(), l.records.len()),
        None => (nl2code_models::train_log::TrainLog::default().to_csv(), 0),
    };
    finish(&cfg, &args.out, &model, csv, epochs, split_dir)
}

/// A pre-trained transformer whose language matches and whose fine-tuning
/// settings come from the current config.
fn load_pretrained(dir: &Path, cfg: &RunConfig) -> CliResult<transformer::Transformer> {
    let base = TrainedModel::load(dir).with_context(|| format!("loading pre-trained model {}", dir.display()))?;
    if base.pipeline.lang != cfg.lang {
        return Err(mismatch(format!(
            "pre-trained model is {}, config is {}",
            base.pipeline.lang, cfg.lang
        )));
    }
    let Network::Transformer(mut t) = base.network else {
        return Err(mismatch(format!("{} is not a transformer", dir.display())));
    };
    let arch = |c: &transformer::TransformerConfig| (c.heads, c.model_dim, c.enc_layers, c.dec_layers, c.max_positions);
    if arch(&t.config) != arch(&cfg.transformer) {
        return Err(mismatch("pre-trained architecture differs from [transformer]"));
    }
    t.config = cfg.transformer.clone();
    Ok(t)
}

/// MLM + RTD pre-training of a transformer on the pre-training corpus
/// (the training split when none is configured).
pub fn cmd_pretrain(args: &TrainArgs) -> CliResult<TrainOutcome> {
    let cfg = resolve(args)?;
    if cfg.model != ModelKind::Transformer {
        return Err(usage("pretrain needs model = \"transformer\""));
    }
    let pipeline = Pipeline::new(cfg.lang, cfg.lexicon.load()?);
    let corpus = match &cfg.data.pretrain {
        Some(p) => load_corpus(p, cfg.lang)?.corpus,
        None => load_data(&cfg)?.train,
    };
    if corpus.is_empty() {
        return Err(usage("no pre-training data: set [data] pretrain, train or corpus"));
    }
    create_dir(&args.out)?;
    info!("pre-training on {} samples for {} steps", corpus.len(), cfg.transformer.train_steps);
    let (m, log) = transformer::pretrain(&corpus, &cfg.transformer, &pipeline)?;
    debug_assert_eq!(m.stage, Stage::Pretrained);
    let model = TrainedModel::new(Network::Transformer(m), pipeline);
    finish(&cfg, &args.out, &model, log.to_csv(), log.records.len(), None)
}

fn load_model(dir: &Path, lang: Option<Lang>, beam: Option<usize>) -> CliResult<TrainedModel> {
    let model = TrainedModel::load(dir).map_err(|e| match e {
        nl2code_models::ModelError::Io { .. } => anyhow::Error::from(e),
        other => mismatch(format!("cannot load {}: {other}", dir.display())),
    })?;
    if let Some(l) = lang {
        if l != model.pipeline.lang {
            return Err(mismatch(format!("model translates {}, not {l}", model.pipeline.lang)));
        }
    }
    Ok(match beam {
        Some(b) => model.with_beam(b),
        None => model,
    })
}

fn translate_one(model: &TrainedModel, intent: &str) -> CliResult<String> {
    let r = model.translate_rendered(intent)?;
    if !r.unbound_placeholders.is_empty() {
        warn!("unbound placeholders in output: {}", r.unbound_placeholders.join(", "));
    }
    Ok(r.text)
}

/// One intent per non-blank input line; snippets are separated by a blank
/// line.
pub fn translate_batch(model: &TrainedModel, input: &mut dyn BufRead, out: &mut dyn Write) -> CliResult<usize> {
    let mut count = 0;
    for (i, line) in input.lines().enumerate() {
        let line = line.context("reading intents")?;
        if line.trim().is_empty() {
            continue;
        }
        let snippet = translate_one(model, &line).with_context(|| format!("input line {}", i + 1))?;
        if count > 0 {
            writeln!(out)?;
        }
        writeln!(out, "{snippet}")?;
        count += 1;
    }
    out.flush()?;
    Ok(count)
}

pub const PROMPT: &str = "nl2code> ";

/// Prompt, translate, print, until end of input. Blank lines re-prompt;
/// per-intent errors are printed and the loop continues.
pub fn repl(model: &TrainedModel, input: &mut dyn BufRead, out: &mut dyn Write) -> CliResult<()> {
    let mut line = String::new();
    loop {
        write!(out, "{PROMPT}")?;
        out.flush()?;
        line.clear();
        if input.read_line(&mut line)? == 0 {
            writeln!(out)?;
            return Ok(());
        }
        let intent = line.trim();
        if intent.is_empty() {
            continue;
        }
        match translate_one(model, intent) {
            Ok(s) => writeln!(out, "{s}")?,
            Err(e) => writeln!(out, "error: {e:#}")?,
        }
    }
}

pub fn cmd_translate(args: &TranslateArgs, input: &mut dyn BufRead, out: &mut dyn Write) -> CliResult<()> {
    let model = load_model(&args.checkpoint, args.lang, args.beam)?;
    if args.repl {
        return repl(&model, input, out);
    }
    match &args.input {
        Some(p) => {
            let f = fs::File::open(p).with_context(|| format!("cannot open {}", p.display()))?;
            translate_batch(&model, &mut std::io::BufReader::new(f), out)?;
        }
        None => {
            translate_batch(&model, input, out)?;
        }
    }
    Ok(())
}

/// Writes `eval_report.json` and `eval_report.txt` into `--out` and prints
/// the table. Scores never affect the exit status.
pub fn cmd_eval(args: &EvalArgs, out: &mut dyn Write) -> CliResult<EvalReport> {
    let model = load_model(&args.checkpoint, args.lang, args.beam)?;
    let test = load_corpus(&args.test, model.pipeline.lang)?.corpus;
    let checker = SyntaxChecker::parse(&args.checker).map_err(|e| usage(e.to_string()))?;
    let annotations = match &args.annotations {
        Some(p) if p.exists() => Some(Annotations::load(p)?),
        Some(p) => {
            warn!("annotation file {} not found; judging syntax and exact matches only", p.display());
            None
        }
        None => None,
    };
    let report = evaluate_model(&model, &test, &EvalOptions { checker, annotations })?;
    create_dir(&args.out)?;
    write_file(&args.out.join(EVAL_JSON_FILE), &(report.to_json() + "\n"))?;
    let table = report.to_table();
    write_file(&args.out.join(EVAL_TABLE_FILE), &table)?;
    write!(out, "{table}")?;
    Ok(report)
}

pub fn cmd_parse_intent(args: &ParseIntentArgs, out: &mut dyn Write) -> CliResult<()> {
    let lexicon = match &args.config {
        Some(p) => RunConfig::load(p)?.lexicon.load()?,
        None => LexiconConfig::default(),
    };
    let tokens = tokenize_intent(&args.intent)?;
    let filtered = filter_stopwords(&tokens, &lexicon);
    let slots = parse_intent(&tokens, args.lang, &lexicon);
    let pipeline = Pipeline::new(args.lang, lexicon);
    let prepared = pipeline.prepare_intent(&args.intent)?;
    if prepared.tokens.is_empty() {
        warn!("every intent token is a stopword; standardized intent is empty");
    }
    writeln!(out, "tokenized:    {}", tokens.joined())?;
    writeln!(out, "filtered:     {}", filtered.joined())?;
    writeln!(out, "slots:        {}", slots.to_json())?;
    writeln!(out, "standardized: {}", prepared.tokens.joined())?;
    Ok(())
}
