use std::collections::BTreeSet;
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use log::{info, warn};
use serde::Serialize;
use typelink::corpus::{read_corpus, read_jsonl, write_jsonl, Document};
use typelink::eval::{benchmark, evaluate_ed, evaluate_el, PassAccounting, Regime};
use typelink::kb::{build_from_files, container, KbStore, TypeId, DEFAULT_RELATIONS};
use typelink::model::{load_checkpoint, Checkpoint};
use typelink::pipeline::{annotate_corpus, dangling_references, InferenceOptions, LinkedDocument, Mode, Trainer};
use typelink::synthetic::{self, SyntheticSpec};
use typelink::type_selection::{build_separation_examples, greedy_select_types, ExampleStats};
use typelink::{Config, Error};

use crate::{Cli, Command, Global, InferArgs};

/// A failed run and its exit code.
#[derive(Debug)]
pub enum Failure {
    /// Bad arguments that parsed but make no sense together.
    Usage(String),
    Core(Error),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Core(e) if e.is_validation() => 2,
            Failure::Core(_) => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "{m}"),
            Failure::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

type Result<T> = std::result::Result<T, Failure>;

pub fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    if g.threads == 0 {
        return Err(Failure::Usage("--threads must be >= 1".into()));
    }
    match cli.command {
        Command::BuildKb {
            entities,
            hierarchy,
            types,
            out,
        } => build_kb(&entities, hierarchy.as_deref(), types.as_deref(), &out),
        Command::SelectTypes { kb, train, budget, out } => select_types(g, &kb, &train, budget, out.as_deref()),
        Command::Train {
            kb,
            train,
            out,
            log,
            resume,
            checkpoint_every,
            max_steps,
        } => train_model(
            g,
            &kb,
            &train,
            &out,
            log.as_deref(),
            resume.as_deref(),
            checkpoint_every,
            max_steps,
        ),
        Command::Link(io) => annotate(g, &io, Mode::Link),
        Command::Disambiguate(io) => annotate(g, &io, Mode::Disambiguate),
        Command::Evaluate { io, train } => evaluate(g, &io, train.as_deref()),
        Command::Bench { io, regime } => bench(g, &io, regime),
        Command::Synth {
            out,
            docs,
            groups,
            held_out_groups,
            held_out_per_group,
            bench_docs,
            bench_mentions,
        } => {
            let spec = SyntheticSpec {
                groups,
                docs,
                held_out_groups,
                held_out_per_group,
                seed: g.seed,
                ..SyntheticSpec::default()
            };
            let bench = bench_docs.zip(bench_mentions);
            synth(&spec, &out, bench)
        }
    }
}

/// Defaults, then the config file, then each `--set` in order.
fn resolve_config(g: &Global, base: Config) -> Result<Config> {
    let mut cfg = match &g.config {
        Some(p) => Config::from_file(p)?,
        None => base,
    };
    for o in &g.overrides {
        cfg.set(o).map_err(|e| Failure::Usage(e.to_string()))?;
    }
    info!("config: {}", serde_json::to_string(&cfg).expect("config serialises"));
    Ok(cfg)
}

fn check_references(g: &Global, corpus: &[Document], store: &KbStore) -> Result<()> {
    if !g.strict {
        return Ok(());
    }
    let missing = dangling_references(corpus, store);
    if missing.is_empty() {
        Ok(())
    } else {
        Err(Error::Validation(format!("unknown entity ids: {}", missing.join(", "))).into())
    }
}

fn write_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    text.push('\n');
    write_text(&text, out)
}

fn write_text(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| io_error(p, e)),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| io_error(Path::new("<stdout>"), e))
        }
    }
}

fn io_error(path: &Path, e: std::io::Error) -> Failure {
    Failure::Core(Error::Invalid(format!("{}: {e}", path.display())))
}

fn build_kb(entities: &Path, hierarchy: Option<&Path>, types: Option<&Path>, out: &Path) -> Result<()> {
    let selected = match types {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| io_error(p, e))?;
            let report: SelectionReport = serde_json::from_str(&text).map_err(|e| Error::Json {
                path: p.to_path_buf(),
                line: e.line(),
                source: e,
            })?;
            Some(report.types)
        }
        None => None,
    };
    let kb = build_from_files(entities, hierarchy, selected, &DEFAULT_RELATIONS)?;
    let stats = kb.stats();
    if stats.dropped_types > 0 {
        warn!("dropped {} types with relations outside the whitelist", stats.dropped_types);
    }
    info!("{} entities, {} types", kb.len(), kb.type_vocab().len());
    container::save(&kb, out)?;
    Ok(())
}

#[derive(Serialize, serde::Deserialize)]
struct SelectionReport {
    types: Vec<TypeId>,
    #[serde(default)]
    coverage: Vec<usize>,
    #[serde(default)]
    examples: usize,
    #[serde(default)]
    example_stats: ExampleStats,
    #[serde(default)]
    budget: usize,
    #[serde(default)]
    config: Option<Config>,
}

fn select_types(g: &Global, kb: &Path, train: &Path, budget: Option<usize>, out: Option<&Path>) -> Result<()> {
    let cfg = resolve_config(g, Config::default())?;
    let store = container::load(kb)?;
    let corpus = read_corpus(train)?;
    check_references(g, &corpus, &store)?;
    let budget = budget.unwrap_or(cfg.entity_type_budget);
    let (examples, stats) = build_separation_examples(&corpus, &store, cfg.num_candidates);
    let sel = greedy_select_types(&examples, store.type_vocab(), budget);
    write_json(
        &SelectionReport {
            types: sel.types,
            coverage: sel.coverage,
            examples: sel.examples,
            example_stats: stats,
            budget,
            config: Some(cfg),
        },
        out,
    )
}

#[allow(clippy::too_many_arguments)]
fn train_model(
    g: &Global,
    kb: &Path,
    train: &Path,
    out: &Path,
    log_path: Option<&Path>,
    resume: Option<&Path>,
    every: Option<u64>,
    max_steps: Option<u64>,
) -> Result<()> {
    let store = container::load(kb)?;
    let corpus = read_corpus(train)?;
    check_references(g, &corpus, &store)?;
    let mut trainer = match resume {
        Some(p) => {
            if g.config.is_some() || !g.overrides.is_empty() {
                return Err(Failure::Usage("--resume continues with the saved config; drop --config/--set".into()));
            }
            Trainer::resume(load_checkpoint(p)?, &corpus, &store)?
        }
        None => Trainer::new(&corpus, &store, &resolve_config(g, Config::default())?, g.seed)?,
    };
    let mut log = match log_path {
        Some(p) => {
            let f = if resume.is_some() {
                File::options().append(true).create(true).open(p)
            } else {
                File::create(p)
            };
            Some(BufWriter::new(f.map_err(|e| io_error(p, e))?))
        }
        None => None,
    };
    let total = trainer.config().training_steps;
    let stop = max_steps.map_or(total, |n| trainer.step_count().saturating_add(n).min(total));
    while trainer.step_count() < stop {
        let line = trainer.step(&store)?;
        if let Some(w) = log.as_mut() {
            serde_json::to_writer(&mut *w, &line).map_err(|e| Error::Format(e.to_string()))?;
            w.write_all(b"\n").map_err(|e| io_error(log_path.expect("log open"), e))?;
        }
        if line.step % 100 == 0 || line.step == total {
            info!("step {}/{total} loss {:.4}", line.step, line.loss);
        }
        if every.is_some_and(|n| n > 0 && line.step % n == 0) {
            trainer.save(out)?;
        }
    }
    if let Some(mut w) = log {
        w.flush().map_err(|e| io_error(log_path.expect("log open"), e))?;
    }
    trainer.save(out)?;
    Ok(())
}

/// The checkpoint's config with the command line applied on top.
fn load_model(g: &Global, io: &InferArgs) -> Result<(Checkpoint, KbStore, Config, Vec<Document>)> {
    let ckpt = load_checkpoint(&io.model)?;
    let cfg = resolve_config(g, ckpt.config.clone())?;
    let store = container::load(&io.kb)?;
    let corpus = read_corpus(&io.input)?;
    Ok((ckpt, store, cfg, corpus))
}

fn annotate(g: &Global, io: &InferArgs, mode: Mode) -> Result<()> {
    let (ckpt, store, cfg, corpus) = load_model(g, io)?;
    if mode == Mode::Disambiguate {
        check_references(g, &corpus, &store)?;
    }
    let opts = InferenceOptions::from_config(&cfg);
    let docs = annotate_corpus(&corpus, &ckpt.model, &store, &opts, mode, g.threads)?;
    match &io.out {
        Some(p) => write_jsonl(p, &docs)?,
        None => {
            let mut text = String::new();
            for d in &docs {
                text.push_str(&serde_json::to_string(d).map_err(|e| Error::Format(e.to_string()))?);
                text.push('\n');
            }
            write_text(&text, None)?;
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct EvaluateReport {
    seed: u64,
    config: Config,
    linking: typelink::eval::EvalReport,
    disambiguation: typelink::eval::EvalReport,
}

fn evaluate(g: &Global, io: &InferArgs, train: Option<&Path>) -> Result<()> {
    let (ckpt, store, cfg, corpus) = load_model(g, io)?;
    check_references(g, &corpus, &store)?;
    let opts = InferenceOptions::from_config(&cfg);
    let linked = annotate_corpus(&corpus, &ckpt.model, &store, &opts, Mode::Link, g.threads)?;
    let given = annotate_corpus(&corpus, &ckpt.model, &store, &opts, Mode::Disambiguate, g.threads)?;
    let seen: BTreeSet<String> = match train {
        Some(p) => read_jsonl::<Document>(p)?
            .iter()
            .flat_map(|d| d.mentions.iter().filter_map(|m| m.entity_id.clone()))
            .collect(),
        None => BTreeSet::new(),
    };
    let mut disambiguation = evaluate_ed(&given, &corpus, &store, &seen);
    if train.is_none() {
        disambiguation.seen_accuracy = None;
        disambiguation.unseen_accuracy = None;
        disambiguation.unseen_mentions = 0;
    }
    write_json(
        &EvaluateReport {
            seed: ckpt.seed,
            config: cfg,
            linking: evaluate_el(&linked, &corpus, &store)?,
            disambiguation,
        },
        io.out.as_deref(),
    )
}

#[derive(Serialize)]
struct BenchReport {
    config: Config,
    documents: usize,
    regimes: Vec<PassAccounting>,
    /// Generative decoding is not implemented.
    autoregressive: &'static str,
    /// Whether single_pass and bi_encoder made the same predictions with
    /// scores within 1e-5; absent unless both ran.
    single_matches_bi: Option<bool>,
}

fn same_predictions(a: &[LinkedDocument], b: &[LinkedDocument]) -> bool {
    a.len() == b.len()
        && a.iter().zip(b).all(|(x, y)| {
            x.doc_id == y.doc_id
                && x.mentions.len() == y.mentions.len()
                && x.mentions.iter().zip(&y.mentions).all(|(m, n)| {
                    (m.start, m.end) == (n.start, n.end)
                        && m.entity_id == n.entity_id
                        && (m.score - n.score).abs() <= 1e-5
                })
        })
}

fn bench(g: &Global, io: &InferArgs, regime: Option<Regime>) -> Result<()> {
    let (ckpt, store, cfg, corpus) = load_model(g, io)?;
    let opts = InferenceOptions::from_config(&cfg);
    let regimes = match regime {
        Some(r) => vec![r],
        None => Regime::ALL.to_vec(),
    };
    let mut accounts = Vec::new();
    let mut preds = Vec::new();
    for r in regimes {
        let (mut acc, p) = benchmark(&corpus, &ckpt.model, &store, &opts, r)?;
        if g.no_timing {
            acc.wall_time_ms = 0;
        }
        info!("{r}: {} encoder passes", acc.encoder_passes);
        accounts.push(acc);
        preds.push((r, p));
    }
    let find = |r: Regime| preds.iter().find(|(x, _)| *x == r).map(|(_, p)| p);
    let single_matches_bi = find(Regime::SinglePass)
        .zip(find(Regime::BiEncoder))
        .map(|(a, b)| same_predictions(a, b));
    write_json(
        &BenchReport {
            config: cfg,
            documents: corpus.len(),
            regimes: accounts,
            autoregressive: "not_applicable",
            single_matches_bi,
        },
        io.out.as_deref(),
    )
}

fn synth(spec: &SyntheticSpec, out: &Path, bench: Option<(usize, usize)>) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| io_error(out, e))?;
    let data = synthetic::generate(spec);
    let edges: Vec<_> = data.types.hierarchy().edges().collect();
    write_jsonl(&out.join("entities.jsonl"), &data.entities)?;
    write_jsonl(&out.join("hierarchy.jsonl"), &edges)?;
    write_jsonl(&out.join("train.jsonl"), &data.train)?;
    write_jsonl(&out.join("test.jsonl"), &data.test)?;
    let held: Vec<&String> = data.held_out.iter().collect();
    write_json(&held, Some(&out.join("held_out.json")))?;
    if let Some((docs, mentions)) = bench {
        let (corpus, _, _) = synthetic::bench_corpus(docs, mentions, spec.groups, spec.seed);
        write_jsonl(&out.join("bench.jsonl"), &corpus)?;
    }
    Ok(())
}
