//! `kiosk`: operator tooling for the kiosk assistant.
//!
//! Exit codes: 0 on success, 1 on a domain or I/O error, 2 on a usage error.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use kiosk_core::analytics::{compute_stats, load_log, DayCount};
use kiosk_core::augment::{augment_corpus, mine_frequent_ngrams, CategoryLexicon};
use kiosk_core::classify::{
    evaluate, train_mnb_with_stopwords, LabeledCorpus, MnbModel, DEFAULT_ALPHA,
};
use kiosk_core::events::{EventTemplate, RuleSet};
use kiosk_core::qa::{
    self, extract_short_answer, grade_short_answer, load_short_answer_suite, AnswerConfig,
    ShortAnswerConfig, DEFAULT_QUANTITY_MARKERS, DEFAULT_THRESHOLD,
};
use kiosk_core::text::{join_tokens, tokenize, StopWords, Token};
use kiosk_server::ServerConfig;
use serde::Serialize;

#[derive(Parser)]
#[command(name = "kiosk", version, about = "Offline kiosk assistant tooling")]
struct Cli {
    /// Print machine-readable JSON instead of tables.
    #[arg(long, global = true)]
    json: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a naive Bayes intent classifier from a labeled corpus.
    Train(TrainArgs),
    /// Classify a request with a trained model.
    Classify(ClassifyArgs),
    /// Answer a request from a FAQ knowledge base.
    Ask(AskArgs),
    /// Grow a labeled corpus by lexicon term substitution.
    Augment(AugmentArgs),
    /// List the most frequent n-grams of a corpus.
    MineNgrams(MineArgs),
    /// Extract a short answer to a question from a page.
    Extract(ExtractArgs),
    /// Usage statistics from a request log.
    Stats(StatsArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    alpha: f64,
    #[arg(long, default_value_t = 1)]
    min_count: usize,
    #[arg(long)]
    stopwords: Option<PathBuf>,
    /// Hold out this fraction per category for evaluation; the saved model
    /// is trained on the remainder.
    #[arg(long)]
    test_fraction: Option<f64>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Args)]
struct ClassifyArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    text: String,
}

#[derive(Args)]
struct AskArgs {
    #[arg(long)]
    kb: PathBuf,
    #[arg(long)]
    text: String,
    #[arg(long)]
    model: Option<PathBuf>,
    /// Route through these command rules before searching the knowledge base.
    #[arg(long)]
    rules: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    threshold: f64,
    /// Restrict candidates to the category predicted by --model.
    #[arg(long)]
    category_filter: bool,
    #[arg(long)]
    stopwords: Option<PathBuf>,
    #[arg(long)]
    fallback_text: Option<String>,
}

#[derive(Args)]
struct AugmentArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    lexicon: PathBuf,
    #[arg(long)]
    target: usize,
    /// Maximum variants generated per sentence.
    #[arg(long, default_value_t = 10)]
    cap: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MineArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value_t = 3)]
    n: usize,
    #[arg(long, default_value_t = 50)]
    top: usize,
    /// Only mine records with this label.
    #[arg(long)]
    label: Option<String>,
    #[arg(long)]
    stopwords: Option<PathBuf>,
    /// Also write the table as CSV to this path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExtractArgs {
    #[arg(long, required_unless_present = "suite", requires = "page")]
    question: Option<String>,
    #[arg(long)]
    page: Option<PathBuf>,
    /// Grade every case of a suite file instead of a single question.
    #[arg(long, conflicts_with_all = ["question", "page"])]
    suite: Option<PathBuf>,
    /// Comma-separated quantity markers.
    #[arg(long, value_delimiter = ',')]
    markers: Option<Vec<String>>,
    #[arg(long)]
    stopwords: Option<PathBuf>,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    log: PathBuf,
    #[arg(long, default_value_t = kiosk_server::DEFAULT_TOP)]
    top: usize,
    /// Divide by days with requests instead of the full calendar span.
    #[arg(long)]
    active_days: bool,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, env = "KIOSK_PORT", default_value_t = kiosk_server::DEFAULT_PORT)]
    port: u16,
    #[arg(long, env = "KIOSK_KB")]
    kb: Option<PathBuf>,
    #[arg(long, env = "KIOSK_MODEL")]
    model: Option<PathBuf>,
    #[arg(long, env = "KIOSK_RULES")]
    rules: Option<PathBuf>,
    #[arg(long, env = "KIOSK_LOG")]
    log: Option<PathBuf>,
    #[arg(long, env = "KIOSK_THRESHOLD", default_value_t = DEFAULT_THRESHOLD)]
    threshold: f64,
    #[arg(long, env = "KIOSK_STOPWORDS")]
    stopwords: Option<PathBuf>,
    #[arg(long)]
    category_filter: bool,
    #[arg(long)]
    fallback_text: Option<String>,
    /// Serve a static kiosk UI from this directory under /ui.
    #[arg(long, env = "KIOSK_UI_DIR")]
    ui_dir: Option<PathBuf>,
    #[arg(long, env = "KIOSK_CORS_ORIGIN")]
    cors_origin: Option<String>,
}

/// `println!` that reports write failures instead of panicking.
macro_rules! out {
    ($($arg:tt)*) => {
        writeln!(std::io::stdout().lock(), $($arg)*)?
    };
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        // reader went away, e.g. `kiosk ... | head`
        Err(e)
            if e.downcast_ref::<std::io::Error>()
                .is_some_and(|io| io.kind() == std::io::ErrorKind::BrokenPipe) =>
        {
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let json = cli.json;
    match cli.command {
        Command::Train(a) => train(a, json),
        Command::Classify(a) => classify(a, json),
        Command::Ask(a) => ask(a, json),
        Command::Augment(a) => augment(a, json),
        Command::MineNgrams(a) => mine(a, json),
        Command::Extract(a) => extract(a, json),
        Command::Stats(a) => stats(a, json),
        Command::Serve(a) => serve(a),
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    out!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn stopwords(path: Option<&Path>) -> Result<StopWords> {
    Ok(match path {
        Some(p) => StopWords::load(p)?,
        None => StopWords::none(),
    })
}

#[derive(Serialize)]
struct TrainSummary {
    records: usize,
    classes: Vec<String>,
    vocabulary: usize,
    alpha: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    evaluation: Option<kiosk_core::classify::EvalReport>,
}

fn train(a: TrainArgs, json: bool) -> Result<()> {
    let corpus = LabeledCorpus::load(&a.data)?;
    let sw = stopwords(a.stopwords.as_deref())?;
    let (train_set, held_out) = match a.test_fraction {
        Some(f) => {
            let (tr, te) = corpus.split_stratified(f, a.seed)?;
            (tr, Some(te))
        }
        None => (corpus, None),
    };
    let model = train_mnb_with_stopwords(&train_set, a.alpha, a.min_count, &sw)?;
    model.save(&a.out)?;
    let evaluation = held_out.map(|h| evaluate(&model, &h)).transpose()?;
    let summary = TrainSummary {
        records: train_set.len(),
        classes: model.labels().map(str::to_owned).collect(),
        vocabulary: model.vocabulary().len(),
        alpha: model.alpha(),
        evaluation,
    };
    if json {
        return print_json(&summary);
    }
    out!(
        "trained on {} records: {} classes, {} terms, alpha {}",
        summary.records,
        summary.classes.len(),
        summary.vocabulary,
        summary.alpha
    );
    out!("model written to {}", a.out.display());
    if let Some(r) = &summary.evaluation {
        out!("accuracy  {:.4}", r.accuracy);
        out!("macro-F1  {:.4}", r.macro_f1);
        out!(
            "{:<16} {:>9} {:>9} {:>9} {:>8}",
            "class",
            "precision",
            "recall",
            "f1",
            "support"
        );
        for c in &r.per_class {
            out!(
                "{:<16} {:>9.4} {:>9.4} {:>9.4} {:>8}",
                c.label,
                c.precision,
                c.recall,
                c.f1,
                c.support
            );
        }
    }
    Ok(())
}

fn classify(a: ClassifyArgs, json: bool) -> Result<()> {
    let model = MnbModel::load(&a.model)?;
    let p = model.predict(&a.text);
    if json {
        return print_json(&p);
    }
    out!("{}", p.label);
    for (label, prob) in &p.posteriors {
        out!("  {label:<16} {prob:.6}");
    }
    Ok(())
}

#[derive(Serialize)]
struct CommandOutput<'a> {
    command: &'a str,
    response_text: &'a str,
    events: &'a [EventTemplate],
}

fn ask(a: AskArgs, json: bool) -> Result<()> {
    if let Some(path) = &a.rules {
        let rules = RuleSet::load(path)?;
        if let Some(m) = rules.route(&a.text) {
            let out = CommandOutput {
                command: &m.rule.triggers[0],
                response_text: &m.rule.response_text,
                events: &m.rule.events,
            };
            if json {
                return print_json(&out);
            }
            out!("[command: {}] {}", out.command, out.response_text);
            for e in out.events {
                out!("  event {:?} {} {}", e.kind, e.name, e.payload);
            }
            return Ok(());
        }
    }
    let kb = qa::load_kb(&a.kb)?;
    let model = a.model.as_deref().map(MnbModel::load).transpose()?;
    let mut config = AnswerConfig {
        threshold: a.threshold,
        category_filter: a.category_filter,
        stopwords: stopwords(a.stopwords.as_deref())?,
        ..AnswerConfig::default()
    };
    if let Some(t) = a.fallback_text {
        config.fallback_text = t;
    }
    let r = qa::answer(&a.text, &kb, model.as_ref(), &config)?;
    if json {
        return print_json(&r);
    }
    out!("{}", r.answer_text);
    out!(
        "  entry {}  score {:.4} (recall {:.4} + precision {:.4}){}",
        r.entry_id.as_deref().unwrap_or("-"),
        r.score,
        r.recall_term,
        r.precision_term,
        if r.fallback { "  [fallback]" } else { "" }
    );
    Ok(())
}

#[derive(Serialize)]
struct AugmentSummary {
    input: usize,
    output: usize,
    generated: usize,
}

fn augment(a: AugmentArgs, json: bool) -> Result<()> {
    let corpus = LabeledCorpus::load(&a.corpus)?;
    let lexicon = CategoryLexicon::load(&a.lexicon)?;
    let grown = augment_corpus(&corpus, &lexicon, a.target, a.cap)?;
    std::fs::write(&a.out, grown.to_json() + "\n")
        .with_context(|| format!("writing {}", a.out.display()))?;
    let s = AugmentSummary {
        input: corpus.len(),
        output: grown.len(),
        generated: grown.len() - corpus.len(),
    };
    if json {
        return print_json(&s);
    }
    out!(
        "{} -> {} records ({} generated), written to {}",
        s.input,
        s.output,
        s.generated,
        a.out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct NgramRow {
    ngram: String,
    count: usize,
}

fn mine(a: MineArgs, json: bool) -> Result<()> {
    let corpus = LabeledCorpus::load(&a.corpus)?;
    let sw = stopwords(a.stopwords.as_deref())?;
    let docs: Vec<Vec<Token>> = corpus
        .records()
        .iter()
        .filter(|r| a.label.as_deref().is_none_or(|l| r.label == l))
        .map(|r| sw.filter(tokenize(&r.text)))
        .collect();
    let table = mine_frequent_ngrams(&docs, a.n, a.top)?;
    if let Some(out) = &a.out {
        let f =
            std::fs::File::create(out).with_context(|| format!("creating {}", out.display()))?;
        table.write_csv(f)?;
    }
    if json {
        let rows: Vec<NgramRow> = table
            .entries()
            .iter()
            .map(|e| NgramRow {
                ngram: join_tokens(&e.ngram),
                count: e.count,
            })
            .collect();
        return print_json(&rows);
    }
    std::io::stdout()
        .lock()
        .write_all(table.to_csv().as_bytes())?;
    Ok(())
}

#[derive(Serialize)]
struct SuiteRow {
    question: String,
    expected: String,
    extracted: Option<String>,
    sentence: Option<String>,
    passed: bool,
}

#[derive(Serialize)]
struct SuiteReport {
    cases: usize,
    passed: usize,
    pass_rate: f64,
    results: Vec<SuiteRow>,
}

fn extract(a: ExtractArgs, json: bool) -> Result<()> {
    let config = ShortAnswerConfig {
        quantity_markers: a.markers.unwrap_or_else(|| {
            DEFAULT_QUANTITY_MARKERS
                .iter()
                .map(|s| s.to_string())
                .collect()
        }),
        stopwords: stopwords(a.stopwords.as_deref())?,
    };
    if let Some(suite) = &a.suite {
        let report = run_suite(suite, &config)?;
        if json {
            return print_json(&report);
        }
        for r in &report.results {
            out!(
                "{} {:<60} expected {:<10} got {}",
                if r.passed { "PASS" } else { "FAIL" },
                r.question,
                r.expected,
                r.extracted
                    .as_deref()
                    .or(r.sentence.as_deref())
                    .unwrap_or("-")
            );
        }
        out!(
            "{}/{} passed ({:.0}%)",
            report.passed,
            report.cases,
            report.pass_rate * 100.0
        );
        return Ok(());
    }
    let question = a.question.expect("clap enforces --question");
    let page_path = a.page.expect("clap enforces --page");
    let page = std::fs::read_to_string(&page_path)
        .with_context(|| format!("reading {}", page_path.display()))?;
    let ans = extract_short_answer(&question, &page, &config)?;
    if json {
        return print_json(&ans);
    }
    match &ans.extracted {
        Some(x) => out!("{x}"),
        None => out!("{}", ans.sentence),
    }
    Ok(())
}

fn run_suite(path: &Path, config: &ShortAnswerConfig) -> Result<SuiteReport> {
    let cases = load_short_answer_suite(path)?;
    let mut results = Vec::with_capacity(cases.len());
    for (case, page) in cases {
        let row = match extract_short_answer(&case.question, &page, config) {
            Ok(ans) => SuiteRow {
                passed: grade_short_answer(&case.answer, &ans),
                extracted: ans.extracted,
                sentence: Some(ans.sentence),
                question: case.question,
                expected: case.answer,
            },
            Err(_) => SuiteRow {
                passed: false,
                extracted: None,
                sentence: None,
                question: case.question,
                expected: case.answer,
            },
        };
        results.push(row);
    }
    let passed = results.iter().filter(|r| r.passed).count();
    Ok(SuiteReport {
        cases: results.len(),
        passed,
        pass_rate: if results.is_empty() {
            0.0
        } else {
            passed as f64 / results.len() as f64
        },
        results,
    })
}

fn stats(a: StatsArgs, json: bool) -> Result<()> {
    let records = load_log(&a.log)?;
    let days = if a.active_days {
        DayCount::ActiveDays
    } else {
        DayCount::CalendarSpan
    };
    let s = compute_stats(&records, a.top, days);
    if json {
        return print_json(&s);
    }
    out!("total requests  {}", s.total);
    out!("days            {}", s.days);
    out!("mean per day    {:.2}", s.mean_daily);
    const NAMES: [&str; 7] = ["Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun"];
    for (i, (name, n)) in NAMES.iter().zip(s.by_weekday).enumerate() {
        out!("  {i} {name} {n:>8}");
    }
    out!("top requests:");
    for t in &s.top_requests {
        out!("  {:>6}  {}", t.count, t.text);
    }
    Ok(())
}

fn serve(a: ServeArgs) -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .init();
    let config = ServerConfig {
        port: a.port,
        kb: a.kb,
        model: a.model,
        rules: a.rules,
        log: a.log,
        threshold: a.threshold,
        stopwords: a.stopwords,
        category_filter: a.category_filter,
        fallback_text: a.fallback_text,
        ui_dir: a.ui_dir,
        cors_origin: a.cors_origin,
    };
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(kiosk_server::run(config))?;
    Ok(())
}
