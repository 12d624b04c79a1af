//! End-to-end study workflows: yoked lay-versus-abstract comparison,
//! AI-versus-human lay summary comparison with robustness models, and the
//! mixed-model battery for trial-level experiment data.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{yoke, Corpus, DocKind, Document};
use crate::error::{Error, Result};
use crate::genai::{batch_generate, ChatTransport, Generator};
use crate::lexicon::CONTENT_CATEGORIES;
use crate::lmm::{fit_many, format_p, trim_leading_zero, GroupingFactor, LmmOptions, MixedData, MixedModelFit};
use crate::mem::{build_dtm, extract_themes, DtmOptions, Stoplist, ThemeOptions, ThemeSummary};
use crate::stats::ols::{ols, Coefficient, Design};
use crate::stats::{
    compare_samples, compare_summaries, correlation_table, cronbach_alpha, BootstrapConfig, ComparisonReport,
    CorrelationEntry, GroupSummary,
};
use crate::textmetrics::{simplicity_index, ScoreCard, Scorer, Standardization};

pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Study {
    YokedComparison,
    GenerationComparison,
    ExperimentAnalysis,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    SimplicityIndex,
    CommonWords,
    Analytic,
    Readability,
}

impl Measure {
    pub const ALL: [Measure; 4] = [
        Measure::SimplicityIndex,
        Measure::CommonWords,
        Measure::Analytic,
        Measure::Readability,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Measure::SimplicityIndex => "simplicity_index",
            Measure::CommonWords => "common_words",
            Measure::Analytic => "analytic",
            Measure::Readability => "readability",
        }
    }

    /// Panics for the index if [`simplicity_index`] has not run on `card`.
    pub fn value(self, card: &ScoreCard) -> f64 {
        match self {
            Measure::SimplicityIndex => card.simplicity_z.expect("index computed before comparison"),
            Measure::CommonWords => card.common_pct,
            Measure::Analytic => card.analytic_scaled,
            Measure::Readability => card.flesch,
        }
    }
}

impl std::str::FromStr for Measure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Measure::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown measure {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasuredComparison {
    pub measure: Measure,
    pub group_a: String,
    pub group_b: String,
    #[serde(flatten)]
    pub report: ComparisonReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessStep {
    pub label: String,
    pub covariates: Vec<String>,
    pub group: Coefficient,
    pub r2: f64,
    /// Same sign as the unadjusted effect and p < .05.
    pub survives: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub response: String,
    pub group_indicator: String,
    pub steps: Vec<RobustnessStep>,
    pub themes: Option<ThemeSummary>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeFit {
    pub outcome: String,
    pub fit: MixedModelFit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reliability {
    pub items: Vec<String>,
    pub alpha: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub version: u32,
    pub study: Study,
    pub seed: u64,
    pub config_hash: String,
    pub config: serde_json::Value,
    pub comparisons: Vec<MeasuredComparison>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub standardization: Vec<Standardization>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub robustness: Option<RobustnessReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub lmm_fits: Vec<OutcomeFit>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reliability: Option<Reliability>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub correlations: Vec<CorrelationEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

/// Seed, bootstrap size and the caller's fully resolved configuration,
/// which is embedded and hashed into every report.
#[derive(Debug, Clone, PartialEq)]
pub struct RunContext {
    pub seed: u64,
    pub replicates: usize,
    pub config: serde_json::Value,
}

impl RunContext {
    pub fn new(seed: u64, replicates: usize, config: serde_json::Value) -> Self {
        RunContext {
            seed,
            replicates,
            config,
        }
    }

    fn bootstrap(&self) -> BootstrapConfig {
        BootstrapConfig {
            replicates: self.replicates,
            seed: self.seed,
        }
    }

    fn report(&self, study: Study) -> StudyReport {
        StudyReport {
            version: REPORT_VERSION,
            study,
            seed: self.seed,
            config_hash: config_hash(&self.config),
            config: self.config.clone(),
            comparisons: Vec::new(),
            standardization: Vec::new(),
            robustness: None,
            lmm_fits: Vec::new(),
            reliability: None,
            correlations: Vec::new(),
            notes: Vec::new(),
        }
    }
}

/// SHA-256 of the compact JSON encoding; object keys serialize sorted.
pub fn config_hash(config: &serde_json::Value) -> String {
    let bytes = serde_json::to_vec(config).expect("JSON values serialize");
    hex::encode(Sha256::digest(bytes))
}

/// Standardizes the index over both groups together, then compares every
/// measure as a minus b.
fn compare_groups(
    a: &[ScoreCard],
    b: &[ScoreCard],
    label_a: &str,
    label_b: &str,
    ctx: &RunContext,
) -> Result<(Vec<MeasuredComparison>, Standardization, Vec<ScoreCard>)> {
    let mut pooled: Vec<ScoreCard> = a.iter().chain(b).cloned().collect();
    let std = simplicity_index(&mut pooled, &format!("{label_a}+{label_b}"))?;
    let (pa, pb) = pooled.split_at(a.len());
    let bootstrap = ctx.bootstrap();
    let comparisons = Measure::ALL
        .into_iter()
        .map(|m| {
            let va: Vec<f64> = pa.iter().map(|c| m.value(c)).collect();
            let vb: Vec<f64> = pb.iter().map(|c| m.value(c)).collect();
            Ok(MeasuredComparison {
                measure: m,
                group_a: label_a.to_string(),
                group_b: label_b.to_string(),
                report: compare_samples(&va, &vb, Some(&bootstrap))?,
            })
        })
        .collect::<Result<_>>()?;
    Ok((comparisons, std, pooled))
}

/// Lay summaries against their own abstracts.
pub fn run_yoked_comparison(corpus: &Corpus, scorer: &Scorer, ctx: &RunContext) -> Result<StudyReport> {
    let pairs = yoke(corpus, DocKind::HumanLay)?;
    if pairs.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "yoked comparison needs at least 2 pairs, found {}",
            pairs.len()
        )));
    }
    let lay: Vec<Document> = pairs.iter().map(|p| p.lay.clone()).collect();
    let abs: Vec<Document> = pairs.iter().map(|p| p.abstract_doc.clone()).collect();
    let lay_cards = scorer.score_all(&lay)?;
    let abs_cards = scorer.score_all(&abs)?;
    let (comparisons, std, _) = compare_groups(&lay_cards, &abs_cards, "human_lay", "abstract", ctx)?;

    let mut report = ctx.report(Study::YokedComparison);
    report.comparisons = comparisons;
    report.standardization.push(std);
    let unpaired = corpus.len() - 2 * pairs.len();
    if unpaired > 0 {
        report.notes.push(format!("{unpaired} documents without a yoked partner were excluded"));
    }
    Ok(report)
}

/// Compares two groups of already scored documents, a minus b.
pub fn run_card_comparison(
    study: Study,
    (label_a, a): (&str, &[ScoreCard]),
    (label_b, b): (&str, &[ScoreCard]),
    ctx: &RunContext,
) -> Result<StudyReport> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "each group needs at least 2 score cards ({label_a}: {}, {label_b}: {})",
            a.len(),
            b.len()
        )));
    }
    let (comparisons, std, _) = compare_groups(a, b, label_a, label_b, ctx)?;
    let mut report = ctx.report(study);
    report.comparisons = comparisons;
    report.standardization.push(std);
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationOptions {
    pub robustness: bool,
    /// Also compare AI summaries against the abstracts.
    pub against_abstracts: bool,
    pub dtm: DtmOptions,
    pub themes: ThemeOptions,
}

impl Default for GenerationOptions {
    fn default() -> Self {
        GenerationOptions {
            robustness: true,
            against_abstracts: false,
            dtm: DtmOptions::default(),
            themes: ThemeOptions::default(),
        }
    }
}

/// Source of AI summaries missing from the corpus.
pub struct GenerationSource<'a, T: ChatTransport> {
    pub generator: &'a Generator<T>,
    pub audit_path: &'a Path,
}

/// AI lay summaries against human lay summaries of the same abstracts.
/// Abstracts lacking an AI summary are sent to `source` when one is given.
pub fn run_generation_comparison<T: ChatTransport>(
    corpus: &Corpus,
    source: Option<GenerationSource<'_, T>>,
    scorer: &Scorer,
    options: &GenerationOptions,
    ctx: &RunContext,
) -> Result<StudyReport> {
    let mut report = ctx.report(Study::GenerationComparison);
    let mut docs: Vec<Document> = corpus.documents().to_vec();

    if let Some(src) = source {
        let have: BTreeSet<&str> = corpus
            .documents()
            .iter()
            .filter(|d| d.kind == DocKind::AiLay)
            .map(|d| d.id.as_str())
            .collect();
        let missing: Vec<Document> = corpus
            .documents()
            .iter()
            .filter(|d| d.kind == DocKind::Abstract && !have.contains(d.id.as_str()))
            .cloned()
            .collect();
        if !missing.is_empty() {
            let outcome = batch_generate(&Corpus::from_documents(missing)?, src.generator, src.audit_path)?;
            if !outcome.rejected.is_empty() {
                report.notes.push(format!(
                    "{} generations rejected for exceeding the word limit",
                    outcome.rejected.len()
                ));
            }
            if !outcome.failed.is_empty() {
                report.notes.push(format!("{} generations failed", outcome.failed.len()));
            }
            docs.extend(outcome.documents);
        }
    }
    let all = Corpus::from_documents(docs)?;

    let ai = index_by_id(&all, DocKind::AiLay);
    let human = index_by_id(&all, DocKind::HumanLay);
    let ids: Vec<&String> = ai.keys().filter(|id| human.contains_key(*id)).collect();
    if ids.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "generation comparison needs at least 2 ids with both AI and human lay summaries, found {}",
            ids.len()
        )));
    }
    let ai_docs: Vec<Document> = ids.iter().map(|id| ai[*id].clone()).collect();
    let human_docs: Vec<Document> = ids.iter().map(|id| human[*id].clone()).collect();
    let ai_cards = scorer.score_all(&ai_docs)?;
    let human_cards = scorer.score_all(&human_docs)?;
    let (comparisons, std, pooled) = compare_groups(&ai_cards, &human_cards, "ai_lay", "human_lay", ctx)?;
    report.comparisons = comparisons;
    report.standardization.push(std);

    if options.against_abstracts {
        let abs = index_by_id(&all, DocKind::Abstract);
        let with_abs: Vec<usize> = (0..ids.len()).filter(|&i| abs.contains_key(ids[i])).collect();
        if with_abs.len() >= 2 {
            let a: Vec<ScoreCard> = with_abs.iter().map(|&i| ai_cards[i].clone()).collect();
            let abs_docs: Vec<Document> = with_abs.iter().map(|&i| abs[ids[i]].clone()).collect();
            let b = scorer.score_all(&abs_docs)?;
            let (extra, std, _) = compare_groups(&a, &b, "ai_lay", "abstract", ctx)?;
            report.comparisons.extend(extra);
            report.standardization.push(std);
        } else {
            report.notes.push("too few abstracts for the AI-versus-abstract comparison".into());
        }
    }

    if options.robustness {
        let docs: Vec<Document> = ai_docs.iter().chain(&human_docs).cloned().collect();
        report.robustness = Some(robustness(&pooled, &docs, ai_cards.len(), scorer, options));
    }
    Ok(report)
}

fn index_by_id(corpus: &Corpus, kind: DocKind) -> BTreeMap<String, Document> {
    corpus
        .documents()
        .iter()
        .filter(|d| d.kind == kind)
        .map(|d| (d.id.clone(), d.clone()))
        .collect()
}

/// Cumulative covariate blocks on the simplicity index: group alone, then
/// content categories, then extracted themes.
fn robustness(
    cards: &[ScoreCard],
    docs: &[Document],
    n_group: usize,
    scorer: &Scorer,
    options: &GenerationOptions,
) -> RobustnessReport {
    let y: Vec<f64> = cards.iter().map(|c| c.simplicity_z.unwrap_or(f64::NAN)).collect();
    let group: Vec<f64> = (0..cards.len()).map(|i| f64::from(u8::from(i < n_group))).collect();
    let mut warnings = Vec::new();
    let mut blocks: Vec<(String, Vec<(String, Vec<f64>)>)> = vec![("group only".into(), Vec::new())];

    let missing: Vec<&str> = CONTENT_CATEGORIES
        .iter()
        .copied()
        .filter(|c| !scorer.lexicon.has_category(c))
        .collect();
    let mut content = Vec::new();
    if missing.is_empty() {
        for cat in CONTENT_CATEGORIES {
            content.push((cat.to_string(), cards.iter().map(|c| c.categories[cat]).collect()));
        }
        blocks.push(("+ content categories".into(), content.clone()));
    } else {
        warnings.push(format!("lexicon lacks content categories: {}", missing.join(", ")));
    }

    let mut theme_summary = None;
    let themes = build_dtm(docs, &Stoplist::builtin(), &options.dtm)
        .and_then(|dtm| extract_themes(&dtm, &options.themes));
    match themes {
        Ok(sol) => {
            let mut covs = content.clone();
            for (c, name) in sol.theme_names().into_iter().enumerate() {
                covs.push((name, sol.score_column(c)));
            }
            blocks.push(("+ themes".into(), covs));
            theme_summary = Some(sol.summary(10));
        }
        Err(e) => {
            log::warn!("theme extraction failed, skipping the theme block: {e}");
            warnings.push(format!("theme block skipped: {e}"));
        }
    }

    let mut steps: Vec<RobustnessStep> = Vec::new();
    for (label, covs) in blocks {
        let mut design = Design::with_intercept(y.len());
        design.push("group", group.clone()).expect("lengths match");
        let mut used = Vec::new();
        for (name, values) in covs {
            if values.iter().all(|v| *v == values[0]) {
                warnings.push(format!("{label}: dropped constant covariate {name}"));
                continue;
            }
            design.push(name.clone(), values).expect("lengths match");
            used.push(name);
        }
        match ols(&y, &design) {
            Ok(fit) => {
                let g = fit.coefficient("group").expect("group column present").clone();
                let survives = match steps.first() {
                    None => g.p < 0.05,
                    Some(base) => g.p < 0.05 && g.estimate.signum() == base.group.estimate.signum(),
                };
                steps.push(RobustnessStep {
                    label,
                    covariates: used,
                    group: g,
                    r2: fit.r2,
                    survives,
                });
            }
            Err(e) => warnings.push(format!("{label}: {e}")),
        }
    }
    RobustnessReport {
        response: Measure::SimplicityIndex.as_str().into(),
        group_indicator: "ai_lay = 1".into(),
        steps,
        themes: theme_summary,
        warnings,
    }
}

/// One row of published moments for two groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryInput {
    pub measure: Measure,
    pub group_a: String,
    pub a: GroupSummary,
    pub group_b: String,
    pub b: GroupSummary,
}

/// Comparisons straight from published (M, SD, n); no intervals.
pub fn run_summary_comparison(study: Study, inputs: &[SummaryInput], ctx: &RunContext) -> Result<StudyReport> {
    let mut report = ctx.report(study);
    for input in inputs {
        report.comparisons.push(MeasuredComparison {
            measure: input.measure,
            group_a: input.group_a.clone(),
            group_b: input.group_b.clone(),
            report: compare_summaries(&input.a, &input.b)?,
        });
    }
    report.notes.push("summary-statistics mode: computed from reported moments".into());
    Ok(report)
}

/// Trial-level experiment data in wide form.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialTable {
    pub participant: Vec<String>,
    pub stimulus: Vec<String>,
    pub condition: Vec<String>,
    /// Outcome columns in file order; blank cells are missing.
    pub outcomes: Vec<(String, Vec<Option<f64>>)>,
}

pub const ID_COLUMNS: [&str; 3] = ["participant", "stimulus", "condition"];

impl TrialTable {
    pub fn rows(&self) -> usize {
        self.participant.len()
    }

    pub fn outcome(&self, name: &str) -> Option<&[Option<f64>]> {
        self.outcomes.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }
}

pub fn load_trials(path: &Path) -> Result<TrialTable> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_trials(file)
}

pub fn parse_trials<R: Read>(input: R) -> Result<TrialTable> {
    let mut reader = csv::Reader::from_reader(input);
    let headers = reader.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::MalformedRecord {
                line: 1,
                message: format!("missing column {name:?}"),
            })
    };
    let (ip, is, ic) = (find("participant")?, find("stimulus")?, find("condition")?);
    let outcome_cols: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter(|(_, h)| !ID_COLUMNS.contains(&h.trim()))
        .map(|(i, h)| (i, h.trim().to_string()))
        .collect();
    if outcome_cols.is_empty() {
        return Err(Error::MalformedRecord {
            line: 1,
            message: "no outcome columns".into(),
        });
    }

    let mut table = TrialTable {
        participant: Vec::new(),
        stimulus: Vec::new(),
        condition: Vec::new(),
        outcomes: outcome_cols.iter().map(|(_, n)| (n.clone(), Vec::new())).collect(),
    };
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let line = row + 2;
        let field = |i: usize| record.get(i).unwrap_or("").trim();
        for (i, name) in [(ip, "participant"), (is, "stimulus"), (ic, "condition")] {
            if field(i).is_empty() {
                return Err(Error::MalformedRecord {
                    line,
                    message: format!("empty {name}"),
                });
            }
        }
        table.participant.push(field(ip).to_string());
        table.stimulus.push(field(is).to_string());
        table.condition.push(field(ic).to_string());
        for (k, (i, name)) in outcome_cols.iter().enumerate() {
            let raw = field(*i);
            let value = if raw.is_empty() || raw.eq_ignore_ascii_case("na") {
                None
            } else {
                Some(raw.parse::<f64>().map_err(|_| Error::MalformedRecord {
                    line,
                    message: format!("{name}: {raw:?} is not a number"),
                })?)
            };
            table.outcomes[k].1.push(value);
        }
    }
    if table.rows() == 0 {
        return Err(Error::InsufficientData("trial file has no rows".into()));
    }
    Ok(table)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOptions {
    /// Outcomes to model; empty means every outcome column.
    pub outcomes: Vec<String>,
    /// Reference level of the treatment-coded condition; defaults to "pnas"
    /// when present, otherwise the first level in sorted order.
    pub reference: Option<String>,
    pub reliability_items: Vec<String>,
    /// Name of the averaged reliability items, modelled like an outcome.
    pub index_name: String,
    pub lmm: LmmOptions,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        ExperimentOptions {
            outcomes: Vec::new(),
            reference: None,
            reliability_items: vec!["intelligent".into(), "credible".into(), "trustworthy".into()],
            index_name: "perception".into(),
            lmm: LmmOptions::default(),
        }
    }
}

pub fn condition_term(level: &str) -> String {
    format!("condition[{level}]")
}

pub fn run_experiment_analysis(
    trials: &TrialTable,
    options: &ExperimentOptions,
    ctx: &RunContext,
) -> Result<StudyReport> {
    let mut report = ctx.report(Study::ExperimentAnalysis);
    let levels: BTreeSet<&str> = trials.condition.iter().map(String::as_str).collect();
    if levels.len() < 2 {
        return Err(Error::RankDeficient(format!(
            "condition is {:?} on every row, so its effect is not identified",
            trials.condition[0]
        )));
    }
    let reference = match &options.reference {
        Some(r) if levels.contains(r.as_str()) => r.clone(),
        Some(r) => {
            return Err(Error::InvalidArgument(format!(
                "reference level {r:?} not among conditions {levels:?}"
            )))
        }
        None if levels.contains("pnas") => "pnas".to_string(),
        None => levels.iter().next().expect("at least one row").to_string(),
    };
    report.notes.push(format!("condition treatment-coded against {reference:?}"));

    let mut outcomes: Vec<(String, Vec<Option<f64>>)> = if options.outcomes.is_empty() {
        trials.outcomes.clone()
    } else {
        options
            .outcomes
            .iter()
            .map(|name| {
                trials
                    .outcome(name)
                    .map(|v| (name.clone(), v.to_vec()))
                    .ok_or_else(|| Error::InvalidArgument(format!("no outcome column {name:?}")))
            })
            .collect::<Result<_>>()?
    };

    let items: Vec<&[Option<f64>]> = options
        .reliability_items
        .iter()
        .filter_map(|name| trials.outcome(name))
        .collect();
    if !options.reliability_items.is_empty() && items.len() == options.reliability_items.len() {
        let complete: Vec<usize> = (0..trials.rows()).filter(|&r| items.iter().all(|it| it[r].is_some())).collect();
        let columns: Vec<Vec<f64>> = items
            .iter()
            .map(|it| complete.iter().map(|&r| it[r].expect("complete row")).collect())
            .collect();
        report.reliability = Some(Reliability {
            items: options.reliability_items.clone(),
            alpha: cronbach_alpha(&columns)?,
            n: complete.len(),
        });
        let index: Vec<Option<f64>> = (0..trials.rows())
            .map(|r| {
                let vals: Option<Vec<f64>> = items.iter().map(|it| it[r]).collect();
                vals.map(|v| v.iter().sum::<f64>() / v.len() as f64)
            })
            .collect();
        outcomes.push((options.index_name.clone(), index));
    } else if !options.reliability_items.is_empty() {
        report
            .notes
            .push("reliability items not all present; alpha and the perception index skipped".into());
    }

    let mut models = Vec::new();
    for (name, values) in &outcomes {
        let rows: Vec<usize> = (0..trials.rows()).filter(|&r| values[r].is_some()).collect();
        let y: Vec<f64> = rows.iter().map(|&r| values[r].expect("present")).collect();
        let mut design = Design::with_intercept(rows.len());
        for level in levels.iter().filter(|l| **l != reference) {
            let dummy = rows
                .iter()
                .map(|&r| f64::from(u8::from(trials.condition[r] == *level)))
                .collect();
            design.push(condition_term(level), dummy)?;
        }
        let pick = |v: &[String]| rows.iter().map(|&r| v[r].clone()).collect::<Vec<_>>();
        let data = MixedData::new(
            y,
            design,
            GroupingFactor::from_labels("participant", &pick(&trials.participant)),
            Some(GroupingFactor::from_labels("stimulus", &pick(&trials.stimulus))),
        )?;
        models.push((name.clone(), data));
    }
    for (name, fit) in fit_many(&models, &options.lmm) {
        let fit = fit.map_err(|e| match e {
            Error::RankDeficient(m) => Error::RankDeficient(format!("{name}: {m}")),
            other => other,
        })?;
        if !fit.converged {
            report.notes.push(format!("{name}: optimizer did not converge"));
        }
        report.lmm_fits.push(OutcomeFit { outcome: name, fit });
    }

    let complete: Vec<usize> = (0..trials.rows())
        .filter(|&r| outcomes.iter().all(|(_, v)| v[r].is_some()))
        .collect();
    if complete.len() >= 4 {
        let columns: Vec<(String, Vec<f64>)> = outcomes
            .iter()
            .map(|(n, v)| (n.clone(), complete.iter().map(|&r| v[r].expect("complete")).collect()))
            .collect();
        match correlation_table(&columns) {
            Ok(table) => report.correlations = table,
            Err(e) => report.notes.push(format!("correlation table skipped: {e}")),
        }
    }
    Ok(report)
}

fn format_ci(c: &ComparisonReport) -> String {
    match &c.d_ci {
        Some(ci) => format!(", 95% CI [{:.2}, {:.2}]", ci.lower, ci.upper),
        None => String::new(),
    }
}

fn format_df(df: f64) -> String {
    if (df - df.round()).abs() < 0.05 {
        format!("{df:.0}")
    } else {
        format!("{df:.1}")
    }
}

/// Plain-text rendering in conventional reporting style.
pub fn format_report(report: &StudyReport) -> String {
    let mut s = String::new();
    let study = serde_json::to_value(report.study).expect("enum serializes");
    let _ = writeln!(
        s,
        "{} (seed {}, config {})",
        study.as_str().unwrap_or("study"),
        report.seed,
        &report.config_hash[..12.min(report.config_hash.len())]
    );
    for c in &report.comparisons {
        let r = &c.report;
        let _ = writeln!(
            s,
            "{}: {} (M = {:.2}, SD = {:.2}, n = {}) vs {} (M = {:.2}, SD = {:.2}, n = {}), Welch's t({}) = {:.2}, {}, d = {:.2}{}",
            c.measure.as_str(),
            c.group_a,
            r.group_a.mean,
            r.group_a.sd,
            r.group_a.n,
            c.group_b,
            r.group_b.mean,
            r.group_b.sd,
            r.group_b.n,
            format_df(r.df),
            r.t,
            format_p(r.p),
            r.d,
            format_ci(r)
        );
    }
    if let Some(rob) = &report.robustness {
        let _ = writeln!(s, "\nrobustness ({} on group, {}):", rob.response, rob.group_indicator);
        for step in &rob.steps {
            let _ = writeln!(
                s,
                "  {:<22} B = {:.3}, SE = {:.3}, t = {:.2}, {}{}",
                step.label,
                step.group.estimate,
                step.group.se,
                step.group.t,
                format_p(step.group.p),
                if step.survives { "" } else { "  (does not survive)" }
            );
        }
        for w in &rob.warnings {
            let _ = writeln!(s, "  warning: {w}");
        }
    }
    for of in &report.lmm_fits {
        let _ = writeln!(s, "\n{}", crate::lmm::format_fit(&of.outcome, &of.fit));
        for c in of.fit.coefficients.iter().filter(|c| c.term.starts_with("condition[")) {
            if let Some(line) = of.fit.describe(&c.term) {
                let _ = writeln!(s, "  {}: {line}", c.term);
            }
        }
    }
    if let Some(rel) = &report.reliability {
        let _ = writeln!(
            s,
            "\nCronbach's alpha ({}) = {}, n = {}",
            rel.items.join(", "),
            trim_leading_zero(rel.alpha, 2),
            rel.n
        );
    }
    if !report.correlations.is_empty() {
        let _ = writeln!(s, "\ncorrelations (95% CI):");
        for e in &report.correlations {
            let _ = writeln!(
                s,
                "  {} ~ {}: r = {} [{}, {}]",
                e.a,
                e.b,
                trim_leading_zero(e.r, 2),
                trim_leading_zero(e.lower, 2),
                trim_leading_zero(e.upper, 2)
            );
        }
    }
    for n in &report.notes {
        let _ = writeln!(s, "note: {n}");
    }
    s
}

pub fn report_json(report: &StudyReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexicon::{CommonWordList, Lexicon};
    use crate::textmetrics::AnalyticCalibration;

    fn ctx() -> RunContext {
        RunContext::new(7, 1000, serde_json::json!({"case": "unit"}))
    }

    fn scorer() -> Scorer {
        Scorer::new(Lexicon::builtin(), CommonWordList::builtin(), AnalyticCalibration::default()).unwrap()
    }

    fn summary(n: usize, m: f64, s: f64) -> GroupSummary {
        GroupSummary::new(n, m, s).unwrap()
    }

    #[test]
    fn summary_mode_reproduces_common_words() {
        let input = SummaryInput {
            measure: Measure::CommonWords,
            group_a: "human_lay".into(),
            a: summary(34584, 69.77, 7.14),
            group_b: "abstract".into(),
            b: summary(34584, 67.79, 6.60),
        };
        let report = run_summary_comparison(Study::YokedComparison, &[input], &ctx()).unwrap();
        let c = &report.comparisons[0].report;
        assert!((c.t - 37.79).abs() < 0.1, "{}", c.t);
        assert!((c.d - 0.29).abs() < 0.01);
        assert_eq!(report.version, REPORT_VERSION);
        assert_eq!(report.config_hash, config_hash(&serde_json::json!({"case": "unit"})));
    }

    #[test]
    fn config_hash_ignores_key_order() {
        let a: serde_json::Value = serde_json::from_str(r#"{"b": 1, "a": [1, 2]}"#).unwrap();
        let b: serde_json::Value = serde_json::from_str(r#"{"a": [1, 2], "b": 1}"#).unwrap();
        assert_eq!(config_hash(&a), config_hash(&b));
    }

    fn doc(id: &str, kind: DocKind, text: &str) -> Document {
        Document::new(id, kind, text)
    }

    const SCIENTIFIC: [&str; 4] = [
        "The multifactorial characterization of heterogeneous transcriptional regulation demonstrated considerable variability.",
        "Quantitative measurements of atmospheric particulate concentrations indicated substantial anthropogenic contributions.",
        "Comprehensive phylogenetic reconstruction revealed evolutionary diversification among geographically isolated populations.",
        "Experimental manipulation of neuronal excitability modulated hippocampal synaptic plasticity in adolescent rodents.",
    ];

    #[test]
    fn identical_texts_give_zero_effects() {
        let docs: Vec<Document> = SCIENTIFIC
            .iter()
            .enumerate()
            .flat_map(|(i, t)| [doc(&format!("p{i}"), DocKind::Abstract, t), doc(&format!("p{i}"), DocKind::HumanLay, t)])
            .collect();
        let corpus = Corpus::from_documents(docs).unwrap();
        let report = run_yoked_comparison(&corpus, &scorer(), &ctx()).unwrap();
        assert_eq!(report.comparisons.len(), 4);
        for c in &report.comparisons {
            assert!(c.report.d.abs() < 1e-12, "{:?}", c.measure);
        }
    }

    #[test]
    fn too_few_pairs() {
        let corpus = Corpus::from_documents(vec![
            doc("p1", DocKind::Abstract, SCIENTIFIC[0]),
            doc("p1", DocKind::HumanLay, SCIENTIFIC[1]),
        ])
        .unwrap();
        assert!(matches!(
            run_yoked_comparison(&corpus, &scorer(), &ctx()),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn trial_parsing_and_missing_cells() {
        let csv = "participant,stimulus,condition,clear,credible\np1,s1,pnas,4,5\np1,s2,gpt,,NA\n";
        let t = parse_trials(csv.as_bytes()).unwrap();
        assert_eq!(t.rows(), 2);
        assert_eq!(t.outcome("clear").unwrap(), &[Some(4.0), None]);
        assert_eq!(t.outcome("credible").unwrap(), &[Some(5.0), None]);
        assert!(parse_trials("participant,stimulus,clear\np1,s1,3\n".as_bytes()).is_err());
        assert!(parse_trials("participant,stimulus,condition,clear\np1,s1,gpt,high\n".as_bytes()).is_err());
    }

    #[test]
    fn constant_condition_is_rank_deficient() {
        let mut csv = String::from("participant,stimulus,condition,clear\n");
        for p in 0..6 {
            for s in 0..3 {
                csv.push_str(&format!("p{p},s{s},gpt,{}\n", (p * 3 + s) % 5));
            }
        }
        let t = parse_trials(csv.as_bytes()).unwrap();
        assert!(matches!(
            run_experiment_analysis(&t, &ExperimentOptions::default(), &ctx()),
            Err(Error::RankDeficient(m)) if m.contains("condition")
        ));
    }

    #[test]
    fn p_value_formatting() {
        assert_eq!(format_p(0.0001), "p < .001");
        assert_eq!(format_p(0.246), "p = .246");
        assert_eq!(format_df(1510.04), "1510");
        assert_eq!(format_df(1478.66), "1478.7");
    }
}
