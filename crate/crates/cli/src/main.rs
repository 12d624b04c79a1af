mod config;
mod error;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use simplicity_core::corpus::{self, Corpus, CorpusFormat, DocKind, Document};
use simplicity_core::genai::{batch_generate, Generator, HttpTransport};
use simplicity_core::mem::{
    build_dtm, extract_themes, theme_report, write_loadings_csv, write_theme_scores_csv, CellMode, DtmOptions,
    Stoplist, ThemeCount, ThemeOptions,
};
use simplicity_core::pipeline::{
    self, report_json, ExperimentOptions, GenerationOptions, GenerationSource, Measure, RunContext, Study,
    StudyReport, SummaryInput,
};
use simplicity_core::stats::density::{caption, density_svg, write_density_csv, DEFAULT_BINS};
use simplicity_core::stats::{density_summary, power_n, GroupSummary, PowerDesign, PowerRequest};
use simplicity_core::textmetrics::{self, simplicity_index, ScoreCard};

use config::Config;
use error::CliError;

#[derive(Parser, Debug)]
#[command(name = "simplicity", version, about = "Linguistic simplicity of scientific texts")]
struct Cli {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Seed for every randomized step.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for scoring, fitting and generation.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Score every document of a corpus.
    Score(ScoreArgs),
    /// Welch t, Cohen's d and bootstrap intervals between two groups.
    Compare(CompareArgs),
    /// Generate AI lay summaries for the abstracts of a corpus.
    Generate(GenerateArgs),
    /// Extract themes with the meaning extraction method.
    Themes(ThemesArgs),
    /// Fit crossed random-intercept models to trial-level data.
    Lmm(LmmArgs),
    /// Required sample size for a target power.
    Power(PowerArgs),
    /// Pick the stimulus pairs whose versions differ most.
    Select(SelectArgs),
    /// Histogram and kernel density per document kind.
    Density(DensityArgs),
    /// Draw a random subset of a corpus.
    Sample(SampleArgs),
}

#[derive(Args, Debug)]
struct CorpusInput {
    /// Corpus file (JSONL or CSV with id, kind, text).
    #[arg(long = "in", value_name = "PATH")]
    input: PathBuf,

    /// Overrides the format inferred from the extension.
    #[arg(long, value_name = "jsonl|csv")]
    input_format: Option<CorpusFormat>,
}

impl CorpusInput {
    fn load(&self) -> Result<Corpus, CliError> {
        let format = self.input_format.unwrap_or_else(|| CorpusFormat::from_path(&self.input));
        Ok(corpus::load_corpus(&self.input, format)?)
    }
}

#[derive(Args, Debug)]
struct LexiconArgs {
    /// Category lexicon; the bundled demo lexicon when omitted.
    #[arg(long, value_name = "PATH")]
    lexicon: Option<PathBuf>,

    /// Common-word list; the bundled list when omitted.
    #[arg(long, value_name = "PATH")]
    common_words: Option<PathBuf>,
}

impl LexiconArgs {
    fn apply(&self, config: &mut Config) {
        if let Some(p) = &self.lexicon {
            config.lexicon = Some(p.clone());
        }
        if let Some(p) = &self.common_words {
            config.common_words = Some(p.clone());
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum TableFormat {
    Csv,
    Jsonl,
}

#[derive(Args, Debug)]
struct ScoreArgs {
    #[command(flatten)]
    corpus: CorpusInput,
    #[command(flatten)]
    lexicons: LexiconArgs,

    /// Output file; stdout when omitted.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,

    /// Output format; inferred from the --out extension, CSV otherwise.
    #[arg(long, value_enum)]
    format: Option<TableFormat>,

    /// Also compute the simplicity index standardized over the whole corpus.
    #[arg(long)]
    index: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum StudyKind {
    Yoked,
    Generation,
}

#[derive(Args, Debug)]
struct CompareArgs {
    /// Two groups as "M,SD,N" each.
    #[arg(long, num_args = 2, value_names = ["A", "B"], conflicts_with_all = ["scores", "corpus"])]
    summary: Option<Vec<String>>,

    /// Measure named in a --summary report.
    #[arg(long, default_value = "common_words", value_parser = parse_measure)]
    measure: Measure,

    /// Group labels for a --summary report, as "A,B".
    #[arg(long, default_value = "a,b")]
    labels: String,

    /// Score table from `score` (CSV or JSONL).
    #[arg(long, value_name = "PATH", conflicts_with = "corpus", requires_all = ["a", "b"])]
    scores: Option<PathBuf>,

    /// First document kind in a --scores comparison.
    #[arg(long)]
    a: Option<DocKind>,

    /// Second document kind in a --scores comparison.
    #[arg(long)]
    b: Option<DocKind>,

    /// Corpus files; repeat to merge abstracts, human and AI lay summaries.
    #[arg(long, value_name = "PATH")]
    corpus: Vec<PathBuf>,

    /// Workflow for --corpus; also labels --summary reports.
    #[arg(long, value_enum, default_value = "yoked")]
    study: StudyKind,

    /// Skip the covariate models of the generation study.
    #[arg(long)]
    no_robustness: bool,

    /// Also compare AI summaries with the abstracts.
    #[arg(long)]
    against_abstracts: bool,

    #[command(flatten)]
    lexicons: LexiconArgs,

    /// Bootstrap resamples for the d interval.
    #[arg(long)]
    replicates: Option<usize>,

    /// JSON report; the plain-text report always goes to stdout.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[command(flatten)]
    corpus: CorpusInput,

    /// AI lay summaries as JSONL.
    #[arg(long, value_name = "PATH")]
    out: PathBuf,

    /// Append-only audit log, also used to resume.
    #[arg(long, value_name = "PATH")]
    audit: PathBuf,

    /// Chat-completion URL.
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    temperature: Option<f64>,
    /// Rewrites requested after an over-length reply.
    #[arg(long)]
    max_retries: Option<usize>,
    /// Longest accepted summary, in words.
    #[arg(long)]
    word_limit: Option<usize>,
}

#[derive(Args, Debug)]
struct ThemesArgs {
    #[command(flatten)]
    corpus: CorpusInput,

    /// Restrict to one document kind.
    #[arg(long)]
    kind: Option<DocKind>,

    /// Number of themes, or "auto" for eigenvalues above one.
    #[arg(long, default_value = "auto", value_parser = parse_theme_count)]
    k: ThemeCount,

    /// Rotated term loadings as CSV.
    #[arg(long, value_name = "PATH")]
    loadings: Option<PathBuf>,

    /// Per-document theme scores.
    #[arg(long, value_name = "PATH")]
    scores: Option<PathBuf>,

    /// Plain-text summary; stdout when omitted.
    #[arg(long, value_name = "PATH")]
    report: Option<PathBuf>,

    /// Share of documents a term must appear in.
    #[arg(long)]
    min_doc_fraction: Option<f64>,

    /// Loading magnitude for a term to count toward a theme.
    #[arg(long)]
    threshold: Option<f64>,

    /// Term frequencies instead of presence indicators.
    #[arg(long)]
    frequency: bool,

    /// Strip common suffixes before counting.
    #[arg(long)]
    stem: bool,

    /// Stoplist replacing the bundled one, one word per line.
    #[arg(long, value_name = "PATH")]
    stopwords: Option<PathBuf>,

    /// Terms listed per theme in the report.
    #[arg(long, default_value_t = 10)]
    top: usize,
}

#[derive(Args, Debug)]
struct LmmArgs {
    /// Wide CSV with participant, stimulus, condition and outcome columns.
    #[arg(long, value_name = "PATH")]
    trials: PathBuf,

    /// Outcomes to fit; every outcome column when omitted.
    #[arg(long)]
    outcome: Vec<String>,

    /// Reference condition level.
    #[arg(long)]
    reference: Option<String>,

    /// Items averaged into the perception index.
    #[arg(long, value_delimiter = ',')]
    items: Option<Vec<String>>,

    /// JSON report; the plain-text report always goes to stdout.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum PowerKind {
    /// Two-sample t test, two-tailed.
    T,
    /// Within-subjects repeated-measures ANOVA.
    Rm,
}

#[derive(Args, Debug)]
struct PowerArgs {
    #[arg(long, value_enum)]
    design: PowerKind,

    /// Cohen's d (t design).
    #[arg(long, required_if_eq("design", "t"))]
    d: Option<f64>,

    /// Cohen's f (rm design).
    #[arg(long, required_if_eq("design", "rm"))]
    f: Option<f64>,

    /// Two-tailed significance level.
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,

    /// Target power.
    #[arg(long, default_value_t = 0.8)]
    power: f64,

    /// Measurements per subject.
    #[arg(long, default_value_t = 3)]
    m: usize,

    /// Correlation among repeated measures.
    #[arg(long, default_value_t = 0.5)]
    rho: f64,

    /// Nonsphericity correction.
    #[arg(long, default_value_t = 1.0)]
    epsilon: f64,
}

#[derive(Args, Debug)]
struct SelectArgs {
    /// CSV with id, score_a, score_b.
    #[arg(long, value_name = "PATH")]
    pairs: PathBuf,

    /// Pairs to keep, largest gap first.
    #[arg(long)]
    k: usize,

    /// Selected pairs as CSV; stdout when omitted.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct DensityArgs {
    /// Score table from `score`.
    #[arg(long, value_name = "PATH")]
    scores: PathBuf,

    /// Column to plot; the index is computed when absent.
    #[arg(long, default_value = "simplicity_index", value_parser = parse_measure)]
    measure: Measure,

    /// Histogram bins.
    #[arg(long, default_value_t = DEFAULT_BINS)]
    bins: usize,

    /// Curve points as CSV; stdout when omitted.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,

    /// Overlay of the density curves as SVG.
    #[arg(long, value_name = "PATH")]
    svg: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SampleArgs {
    #[command(flatten)]
    corpus: CorpusInput,

    /// Documents to draw without replacement.
    #[arg(long)]
    n: usize,

    /// Sampled corpus as JSONL; stdout when omitted.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

fn parse_measure(s: &str) -> Result<Measure, String> {
    s.parse().map_err(|e: simplicity_core::Error| e.to_string())
}

fn parse_theme_count(s: &str) -> Result<ThemeCount, String> {
    if s.eq_ignore_ascii_case("auto") {
        return Ok(ThemeCount::Auto);
    }
    match s.parse::<usize>() {
        Ok(k) if k > 0 => Ok(ThemeCount::Fixed(k)),
        _ => Err(format!("expected \"auto\" or a positive integer, got {s:?}")),
    }
}

fn parse_summary(s: &str) -> Result<GroupSummary, CliError> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let bad = || CliError::Usage(format!("--summary expects \"M,SD,N\", got {s:?}"));
    let [m, sd, n] = parts.as_slice() else {
        return Err(bad());
    };
    let m: f64 = m.parse().map_err(|_| bad())?;
    let sd: f64 = sd.parse().map_err(|_| bad())?;
    let n: usize = n.parse().map_err(|_| bad())?;
    Ok(GroupSummary::new(n, m, sd)?)
}

/// Opens `path` for writing (creating parent directories), or stdout.
fn sink(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
            }
            let file = File::create(p).map_err(|e| CliError::io(p, e))?;
            Ok(Box::new(BufWriter::new(file)))
        }
        None => Ok(Box::new(std::io::stdout().lock())),
    }
}

fn write_all(path: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    let label = path.unwrap_or(Path::new("<stdout>"));
    let mut out = sink(path)?;
    out.write_all(bytes).and_then(|_| out.flush()).map_err(|e| CliError::io(label, e))
}

fn read_scores(path: &Path) -> Result<Vec<ScoreCard>, CliError> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let jsonl = matches!(path.extension().and_then(|e| e.to_str()), Some("jsonl" | "json"));
    Ok(if jsonl {
        textmetrics::read_scores_jsonl(file)?
    } else {
        textmetrics::read_scores_csv(file)?
    })
}

struct App {
    config: Config,
}

impl App {
    fn out(&self, path: Option<&PathBuf>) -> Option<PathBuf> {
        path.map(|p| self.config.output(p))
    }

    fn context(&self, seed: u64) -> RunContext {
        RunContext::new(seed, self.config.replicates, self.config.to_json())
    }

    fn emit_report(&self, report: &StudyReport, out: Option<&PathBuf>) -> Result<(), CliError> {
        print!("{}", pipeline::format_report(report));
        if let Some(path) = self.out(out) {
            write_all(Some(&path), report_json(report).as_bytes())?;
        }
        Ok(())
    }

    fn score(&mut self, args: &ScoreArgs) -> Result<(), CliError> {
        args.lexicons.apply(&mut self.config);
        let scorer = self.config.scorer()?;
        let corpus = args.corpus.load()?;
        let mut cards = scorer.score_all(corpus.documents())?;
        if args.index {
            simplicity_index(&mut cards, "corpus")?;
        }
        let format = args.format.unwrap_or(match args.out.as_deref().and_then(Path::extension) {
            Some(e) if e == "jsonl" || e == "json" => TableFormat::Jsonl,
            _ => TableFormat::Csv,
        });
        let mut buf = Vec::new();
        match format {
            TableFormat::Csv => textmetrics::write_scores_csv(&cards, &mut buf)?,
            TableFormat::Jsonl => textmetrics::write_scores_jsonl(&cards, &mut buf)?,
        }
        write_all(self.out(args.out.as_ref()).as_deref(), &buf)?;
        info!("scored {} documents", cards.len());
        Ok(())
    }

    fn compare(&mut self, args: &CompareArgs) -> Result<(), CliError> {
        args.lexicons.apply(&mut self.config);
        if let Some(r) = args.replicates {
            self.config.replicates = r;
        }
        if let Some(pair) = &args.summary {
            let (label_a, label_b) = args
                .labels
                .split_once(',')
                .ok_or_else(|| CliError::Usage(format!("--labels expects \"A,B\", got {:?}", args.labels)))?;
            let input = SummaryInput {
                measure: args.measure,
                group_a: label_a.trim().into(),
                a: parse_summary(&pair[0])?,
                group_b: label_b.trim().into(),
                b: parse_summary(&pair[1])?,
            };
            let ctx = self.context(self.config.seed.unwrap_or(0));
            let study = match args.study {
                StudyKind::Yoked => Study::YokedComparison,
                StudyKind::Generation => Study::GenerationComparison,
            };
            let report = pipeline::run_summary_comparison(study, &[input], &ctx)?;
            return self.emit_report(&report, args.out.as_ref());
        }

        let seed = self.config.require_seed()?;
        if let Some(path) = &args.scores {
            let (a, b) = (args.a.expect("clap requires --a"), args.b.expect("clap requires --b"));
            let cards = read_scores(path)?;
            let of = |k: DocKind| cards.iter().filter(|c| c.kind == k).cloned().collect::<Vec<_>>();
            let study = if a == DocKind::AiLay || b == DocKind::AiLay {
                Study::GenerationComparison
            } else {
                Study::YokedComparison
            };
            let report = pipeline::run_card_comparison(
                study,
                (a.as_str(), &of(a)),
                (b.as_str(), &of(b)),
                &self.context(seed),
            )?;
            return self.emit_report(&report, args.out.as_ref());
        }

        if args.corpus.is_empty() {
            return Err(CliError::Usage("compare needs --summary, --scores or --corpus".into()));
        }
        let mut docs: Vec<Document> = Vec::new();
        for path in &args.corpus {
            docs.extend(corpus::load_corpus(path, CorpusFormat::from_path(path))?.documents().iter().cloned());
        }
        let corpus = Corpus::from_documents(docs)?;
        let scorer = self.config.scorer()?;
        let ctx = self.context(seed);
        let report = match args.study {
            StudyKind::Yoked => pipeline::run_yoked_comparison(&corpus, &scorer, &ctx)?,
            StudyKind::Generation => {
                let options = GenerationOptions {
                    robustness: !args.no_robustness,
                    against_abstracts: args.against_abstracts,
                    ..GenerationOptions::default()
                };
                pipeline::run_generation_comparison(
                    &corpus,
                    None::<GenerationSource<'_, HttpTransport>>,
                    &scorer,
                    &options,
                    &ctx,
                )?
            }
        };
        self.emit_report(&report, args.out.as_ref())
    }

    fn generate(&mut self, args: &GenerateArgs) -> Result<(), CliError> {
        let g = &mut self.config.generation;
        if let Some(v) = &args.endpoint {
            g.endpoint = v.clone();
        }
        if let Some(v) = &args.model {
            g.model = v.clone();
        }
        if let Some(v) = args.temperature {
            g.temperature = v;
        }
        if let Some(v) = args.max_retries {
            g.max_retries = v;
        }
        if let Some(v) = args.word_limit {
            g.word_limit = v;
        }
        let abstracts = args.corpus.load()?.of_kind(DocKind::Abstract);
        if abstracts.is_empty() {
            return Err(CliError::Core(simplicity_core::Error::InsufficientData(
                "the corpus has no abstracts".into(),
            )));
        }
        let g = &self.config.generation;
        let transport =
            HttpTransport::from_env(g.endpoint.clone(), &g.api_key_env, Duration::from_secs(g.timeout_secs));
        let generator = Generator::new(transport, self.config.generation());
        let outcome = batch_generate(&abstracts, &generator, &args.audit)?;

        let mut buf = Vec::new();
        outcome.corpus()?.write_jsonl(&mut buf)?;
        write_all(self.out(Some(&args.out)).as_deref(), &buf)?;
        eprintln!(
            "generated {}, resumed {}, rejected {}, failed {}",
            outcome.generated,
            outcome.resumed,
            outcome.rejected.len(),
            outcome.failed.len()
        );
        for id in &outcome.rejected {
            warn!("{id}: rejected after exhausting retries");
        }
        if let Some((id, message)) = outcome.failed.first() {
            return Err(CliError::Core(simplicity_core::Error::Transport(format!(
                "{} abstracts failed; first {id}: {message}",
                outcome.failed.len()
            ))));
        }
        Ok(())
    }

    fn themes(&mut self, args: &ThemesArgs) -> Result<(), CliError> {
        if let Some(p) = &args.stopwords {
            self.config.stopwords = Some(p.clone());
        }
        let stoplist = match &self.config.stopwords {
            Some(p) => Stoplist::load(p)?,
            None => Stoplist::builtin(),
        };
        let corpus = args.corpus.load()?;
        let corpus = match args.kind {
            Some(k) => corpus.of_kind(k),
            None => corpus,
        };
        let mut dtm_options = DtmOptions {
            cells: if args.frequency { CellMode::Frequency } else { CellMode::Binary },
            stem: args.stem,
            ..DtmOptions::default()
        };
        if let Some(f) = args.min_doc_fraction {
            dtm_options.min_doc_fraction = f;
        }
        let mut theme_options = ThemeOptions {
            count: args.k.clone(),
            ..ThemeOptions::default()
        };
        if let Some(t) = args.threshold {
            theme_options.loading_threshold = t;
        }
        let dtm = build_dtm(corpus.documents(), &stoplist, &dtm_options)?;
        let solution = extract_themes(&dtm, &theme_options)?;
        if !solution.converged {
            warn!("varimax did not converge within {} sweeps", theme_options.max_sweeps);
        }
        if let Some(p) = self.out(args.loadings.as_ref()) {
            let mut buf = Vec::new();
            write_loadings_csv(&solution, &mut buf)?;
            write_all(Some(&p), &buf)?;
        }
        if let Some(p) = self.out(args.scores.as_ref()) {
            let mut buf = Vec::new();
            write_theme_scores_csv(&solution, &mut buf)?;
            write_all(Some(&p), &buf)?;
        }
        write_all(self.out(args.report.as_ref()).as_deref(), theme_report(&solution, args.top).as_bytes())
    }

    fn lmm(&mut self, args: &LmmArgs) -> Result<(), CliError> {
        let trials = pipeline::load_trials(&args.trials)?;
        let mut options = ExperimentOptions {
            outcomes: args.outcome.clone(),
            reference: args.reference.clone(),
            ..ExperimentOptions::default()
        };
        if let Some(items) = &args.items {
            options.reliability_items = items.clone();
        }
        let ctx = self.context(self.config.seed.unwrap_or(0));
        let report = pipeline::run_experiment_analysis(&trials, &options, &ctx)?;
        self.emit_report(&report, args.out.as_ref())
    }

    fn power(&self, args: &PowerArgs) -> Result<(), CliError> {
        let request = match args.design {
            PowerKind::T => PowerRequest::two_sample_t(args.d.expect("clap requires --d"), args.alpha, args.power),
            PowerKind::Rm => {
                let mut r = PowerRequest::rm_anova(args.f.expect("clap requires --f"), args.m, args.alpha, args.power);
                r.design = PowerDesign::RmAnovaWithin {
                    measurements: args.m,
                    rho: args.rho,
                    epsilon: args.epsilon,
                };
                r
            }
        };
        let result = power_n(&request)?;
        info!("achieved power {:.4}", result.achieved_power);
        println!("{}", result.total_n);
        Ok(())
    }

    fn select(&self, args: &SelectArgs) -> Result<(), CliError> {
        let pairs = corpus::load_stimulus_scores(&args.pairs)?;
        let picked = corpus::select_stimuli(&pairs, args.k)?;
        let mut text = String::from("id,score_a,score_b,gap\n");
        for g in &picked {
            text.push_str(&format!("{},{},{},{}\n", g.id, g.score_a, g.score_b, g.gap));
        }
        write_all(self.out(args.out.as_ref()).as_deref(), text.as_bytes())
    }

    fn density(&self, args: &DensityArgs) -> Result<(), CliError> {
        let mut cards = read_scores(&args.scores)?;
        if args.measure == Measure::SimplicityIndex && cards.iter().any(|c| c.simplicity_z.is_none()) {
            simplicity_index(&mut cards, "scores")?;
        }
        let mut kinds: Vec<DocKind> = cards.iter().map(|c| c.kind).collect();
        kinds.sort();
        kinds.dedup();
        let mut groups = Vec::new();
        for kind in kinds {
            let values: Vec<f64> = cards.iter().filter(|c| c.kind == kind).map(|c| args.measure.value(c)).collect();
            let summary = density_summary(&values, args.bins)?;
            if let Some(w) = &summary.warning {
                warn!("{kind}: {w}");
            }
            eprintln!("{kind}: {}", caption(&values));
            groups.push((kind.to_string(), summary));
        }
        let mut buf = Vec::new();
        write_density_csv(&groups, &mut buf)?;
        write_all(self.out(args.out.as_ref()).as_deref(), &buf)?;
        if let Some(p) = self.out(args.svg.as_ref()) {
            write_all(Some(&p), density_svg(&groups, args.measure.as_str()).as_bytes())?;
        }
        Ok(())
    }

    fn sample(&self, args: &SampleArgs) -> Result<(), CliError> {
        let seed = self.config.require_seed()?;
        let sampled = corpus::sample(&args.corpus.load()?, args.n, seed)?;
        let mut buf = Vec::new();
        sampled.write_jsonl(&mut buf)?;
        write_all(self.out(args.out.as_ref()).as_deref(), &buf)
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut config = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if cli.seed.is_some() {
        config.seed = cli.seed;
    }
    if cli.jobs.is_some() {
        config.jobs = cli.jobs;
    }
    if let Some(jobs) = config.jobs {
        if jobs == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        // Fails only if a pool already exists, which cannot happen this early.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
    let mut app = App { config };
    match &cli.command {
        Command::Score(a) => app.score(a),
        Command::Compare(a) => app.compare(a),
        Command::Generate(a) => app.generate(a),
        Command::Themes(a) => app.themes(a),
        Command::Lmm(a) => app.lmm(a),
        Command::Power(a) => app.power(a),
        Command::Select(a) => app.select(a),
        Command::Density(a) => app.density(a),
        Command::Sample(a) => app.sample(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
