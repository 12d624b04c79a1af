//! Tokenization and the per-document simplicity measures.
//!
//! Word rule: a maximal run of letters and digits, where an apostrophe or
//! hyphen between two such characters joins the run (`don't`, `well-known`
//! and `covid-19` are single words). Runs without any letter are not words.
//!
//! Sentence rule: a run of `.`, `!` or `?` (optionally followed by closing
//! quotes or brackets) ends a sentence when it is followed by whitespace and
//! an uppercase letter, or by the end of the text. A lone period after an
//! entry of the abbreviation stoplist (`e.g.`, `et al.`, `Dr.`, ...) does
//! not end a sentence.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::corpus::{DocKind, Document};
use crate::error::{Error, Result};
use crate::lexicon::{CommonWordList, Lexicon, STYLE_CATEGORIES};

const ABBREVIATIONS: &[&str] = &[
    "e.g", "i.e", "et al", "cf", "viz", "vs", "approx", "ca", "dr", "mr", "mrs", "ms", "prof",
    "st", "jr", "sr", "fig", "figs", "eq", "eqs", "ref", "refs", "vol", "pp", "sec", "inc",
    "ltd", "u.s", "u.k", "ph.d", "resp",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenStream {
    pub words: Vec<String>,
    pub sentence_count: usize,
    pub syllable_counts: Vec<usize>,
}

impl TokenStream {
    pub fn word_count(&self) -> usize {
        self.words.len()
    }

    pub fn syllable_total(&self) -> usize {
        self.syllable_counts.iter().sum()
    }
}

fn is_joiner(c: char) -> bool {
    matches!(c, '\'' | '\u{2019}' | '-' | '\u{2010}' | '\u{2011}')
}

fn normalize_joiner(c: char) -> char {
    match c {
        '\u{2019}' => '\'',
        '\u{2010}' | '\u{2011}' => '-',
        other => other,
    }
}

/// Words with the char offset at which each starts.
fn scan_words(chars: &[char]) -> Vec<(usize, String)> {
    let mut words = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if !chars[i].is_alphanumeric() {
            i += 1;
            continue;
        }
        let start = i;
        let mut word = String::new();
        let mut has_letter = false;
        while i < chars.len() {
            let c = chars[i];
            if c.is_alphanumeric() {
                has_letter |= c.is_alphabetic();
                word.extend(c.to_lowercase());
                i += 1;
            } else if is_joiner(c)
                && i + 1 < chars.len()
                && chars[i + 1].is_alphanumeric()
            {
                word.push(normalize_joiner(c));
                i += 1;
            } else {
                break;
            }
        }
        if has_letter {
            words.push((start, word));
        }
    }
    words
}

fn is_closer(c: char) -> bool {
    matches!(c, '"' | '\'' | ')' | ']' | '\u{201d}' | '\u{2019}' | '\u{bb}')
}

fn is_opener(c: char) -> bool {
    matches!(c, '"' | '\'' | '(' | '[' | '\u{201c}' | '\u{2018}' | '\u{ab}')
}

/// The abbreviation-like token immediately before position `end`, e.g.
/// `"e.g"` for `"(e.g."`, plus the preceding plain word when there is one.
fn word_before(chars: &[char], end: usize) -> (String, Option<String>) {
    let mut start = end;
    while start > 0 && (chars[start - 1].is_alphabetic() || chars[start - 1] == '.') {
        start -= 1;
    }
    let word: String = chars[start..end]
        .iter()
        .flat_map(|c| c.to_lowercase())
        .collect::<String>()
        .trim_start_matches('.')
        .to_string();

    let mut j = start;
    while j > 0 && chars[j - 1].is_whitespace() {
        j -= 1;
    }
    let prev_end = j;
    while j > 0 && chars[j - 1].is_alphabetic() {
        j -= 1;
    }
    let prev = (j < prev_end && prev_end < start)
        .then(|| chars[j..prev_end].iter().flat_map(|c| c.to_lowercase()).collect());
    (word, prev)
}

fn is_abbreviation(chars: &[char], period: usize) -> bool {
    let (word, prev) = word_before(chars, period);
    if word.is_empty() {
        return false;
    }
    if ABBREVIATIONS.contains(&word.as_str()) {
        return true;
    }
    prev.is_some_and(|p| ABBREVIATIONS.contains(&format!("{p} {word}").as_str()))
}

/// Char offsets just past each sentence-ending punctuation run.
fn sentence_breaks(chars: &[char]) -> Vec<usize> {
    let mut breaks = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if !matches!(chars[i], '.' | '!' | '?') {
            i += 1;
            continue;
        }
        let run_start = i;
        while i < chars.len() && matches!(chars[i], '.' | '!' | '?') {
            i += 1;
        }
        let run_end = i;
        let mut k = run_end;
        while k < chars.len() && is_closer(chars[k]) {
            k += 1;
        }
        let rest_blank = chars[k..].iter().all(|c| c.is_whitespace());
        let next_capital = k < chars.len() && chars[k].is_whitespace() && {
            let mut m = k;
            while m < chars.len() && chars[m].is_whitespace() {
                m += 1;
            }
            while m < chars.len() && is_opener(chars[m]) {
                m += 1;
            }
            m < chars.len() && chars[m].is_uppercase()
        };
        if rest_blank || next_capital {
            let lone_period = run_end - run_start == 1 && chars[run_start] == '.';
            if !(next_capital && lone_period && is_abbreviation(chars, run_start)) {
                breaks.push(k);
            }
        }
        i = k.max(run_end);
    }
    breaks
}

/// Splits text into lowercase words and counts sentences and syllables.
pub fn tokenize(text: &str) -> Result<TokenStream> {
    if text.trim().is_empty() {
        return Err(Error::EmptyText);
    }
    let chars: Vec<char> = text.chars().collect();
    let positioned = scan_words(&chars);
    let breaks = sentence_breaks(&chars);

    // A sentence counts when at least one word falls inside it.
    let mut sentence_count = 0;
    let mut segment = usize::MAX;
    for (start, _) in &positioned {
        let seg = breaks.partition_point(|&b| b <= *start);
        if seg != segment {
            sentence_count += 1;
            segment = seg;
        }
    }

    let words: Vec<String> = positioned.into_iter().map(|(_, w)| w).collect();
    let syllable_counts = words.iter().map(|w| count_syllables(w)).collect();
    Ok(TokenStream {
        words,
        sentence_count,
        syllable_counts,
    })
}

/// Number of words under the [`tokenize`] rules; zero for blank text.
pub fn word_count(text: &str) -> usize {
    let chars: Vec<char> = text.chars().collect();
    scan_words(&chars).len()
}

fn is_vowel(c: char) -> bool {
    matches!(c, 'a' | 'e' | 'i' | 'o' | 'u' | 'y')
}

fn syllables_in_part(part: &[char]) -> usize {
    let mut groups = 0;
    let mut in_vowel = false;
    for &c in part {
        let v = is_vowel(c);
        if v && !in_vowel {
            groups += 1;
        }
        in_vowel = v;
    }
    let n = part.len();
    if groups > 1 && n >= 2 && part[n - 1] == 'e' && !is_vowel(part[n - 2]) {
        let consonant_le = n >= 3 && part[n - 2] == 'l' && !is_vowel(part[n - 3]);
        if !consonant_le {
            groups -= 1;
        }
    }
    groups
}

/// Vowel-group syllable estimate with silent-e handling and a floor of one.
/// Hyphenated words are counted part by part.
pub fn count_syllables(word: &str) -> usize {
    let total: usize = word
        .split('-')
        .map(|part| {
            let letters: Vec<char> = part
                .chars()
                .filter(|c| c.is_alphabetic())
                .flat_map(char::to_lowercase)
                .collect();
            syllables_in_part(&letters)
        })
        .sum();
    total.max(1)
}

pub fn flesch_from_counts(words: usize, sentences: usize, syllables: usize) -> Result<f64> {
    if words == 0 || sentences == 0 {
        return Err(Error::EmptyText);
    }
    let words = words as f64;
    Ok(206.835 - 1.015 * (words / sentences as f64) - 84.6 * (syllables as f64 / words))
}

/// Flesch Reading Ease. Not clamped.
pub fn flesch_reading_ease(stream: &TokenStream) -> Result<f64> {
    flesch_from_counts(
        stream.word_count(),
        stream.sentence_count,
        stream.syllable_total(),
    )
}

/// Percentage of tokens matched by each lexicon category.
pub fn category_percentages(stream: &TokenStream, lexicon: &Lexicon) -> Result<BTreeMap<String, f64>> {
    let n = stream.word_count();
    if n == 0 {
        return Err(Error::EmptyText);
    }
    let counts = lexicon.count_matches(stream.words.iter().map(String::as_str));
    Ok(lexicon
        .category_names()
        .iter()
        .zip(counts)
        .map(|(name, c)| (name.clone(), 100.0 * c as f64 / n as f64))
        .collect())
}

pub fn common_words_pct(stream: &TokenStream, list: &CommonWordList) -> Result<f64> {
    let n = stream.word_count();
    if n == 0 {
        return Err(Error::EmptyText);
    }
    let hits = stream.words.iter().filter(|w| list.contains(w)).count();
    Ok(100.0 * hits as f64 / n as f64)
}

/// Normal-CDF scaling of the raw analytic composite onto 0..100.
///
/// The defaults are arbitrary presentation constants; comparisons and the
/// standardized index do not depend on them beyond monotonicity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyticCalibration {
    pub mean: f64,
    pub sd: f64,
}

impl Default for AnalyticCalibration {
    fn default() -> Self {
        AnalyticCalibration { mean: 0.0, sd: 20.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyticScore {
    pub raw: f64,
    pub scaled: f64,
}

pub(crate) fn standard_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// articles + prepositions − pronouns − auxiliary verbs − adverbs −
/// conjunctions − negations, in percentage points.
pub fn analytic_writing(
    categories: &BTreeMap<String, f64>,
    calibration: AnalyticCalibration,
) -> Result<AnalyticScore> {
    if calibration.sd <= 0.0 {
        return Err(Error::InvalidArgument("analytic calibration sd must be positive".into()));
    }
    let get = |name: &str| {
        categories
            .get(name)
            .copied()
            .ok_or_else(|| Error::MissingCategory(name.to_string()))
    };
    let [articles, prepositions, pronouns, auxiliary, adverbs, conjunctions, negations] =
        STYLE_CATEGORIES;
    let raw = get(articles)? + get(prepositions)?
        - get(pronouns)?
        - get(auxiliary)?
        - get(adverbs)?
        - get(conjunctions)?
        - get(negations)?;
    let scaled = 100.0 * standard_normal_cdf((raw - calibration.mean) / calibration.sd);
    Ok(AnalyticScore { raw, scaled })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreCard {
    pub id: String,
    pub kind: DocKind,
    pub word_count: usize,
    pub common_pct: f64,
    pub analytic_raw: f64,
    pub analytic_scaled: f64,
    pub flesch: f64,
    /// Set by [`simplicity_index`]; meaningful only within its population.
    pub simplicity_z: Option<f64>,
    /// Every lexicon category percentage, kept for covariate models.
    #[serde(skip)]
    pub categories: BTreeMap<String, f64>,
}

/// Bundles the lexicon, common-word list and calibration used for scoring.
#[derive(Debug, Clone)]
pub struct Scorer {
    pub lexicon: Lexicon,
    pub common: CommonWordList,
    pub calibration: AnalyticCalibration,
}

impl Scorer {
    pub fn new(lexicon: Lexicon, common: CommonWordList, calibration: AnalyticCalibration) -> Result<Self> {
        lexicon.require(&STYLE_CATEGORIES)?;
        Ok(Scorer {
            lexicon,
            common,
            calibration,
        })
    }

    pub fn score(&self, doc: &Document) -> Result<ScoreCard> {
        let stream = tokenize(&doc.text)?;
        let categories = category_percentages(&stream, &self.lexicon)?;
        let analytic = analytic_writing(&categories, self.calibration)?;
        Ok(ScoreCard {
            id: doc.id.clone(),
            kind: doc.kind,
            word_count: stream.word_count(),
            common_pct: common_words_pct(&stream, &self.common)?,
            analytic_raw: analytic.raw,
            analytic_scaled: analytic.scaled,
            flesch: flesch_reading_ease(&stream)?,
            simplicity_z: None,
            categories,
        })
    }

    /// Scores documents in parallel; output order follows input order.
    pub fn score_all(&self, docs: &[Document]) -> Result<Vec<ScoreCard>> {
        docs.par_iter().map(|d| self.score(d)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    pub sd: f64,
}

impl Moments {
    fn of(values: &[f64], what: &str) -> Result<Self> {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let sd = var.sqrt();
        if !(sd > 0.0) || sd <= 1e-12 * mean.abs().max(1.0) {
            return Err(Error::ZeroVariance(what.to_string()));
        }
        Ok(Moments { mean, sd })
    }

    pub fn z(&self, x: f64) -> f64 {
        (x - self.mean) / self.sd
    }
}

/// The population over which the simplicity index was standardized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub population: String,
    pub n: usize,
    pub common: Moments,
    pub flesch: Moments,
    pub analytic: Moments,
}

/// z(common) + z(flesch) − z(analytic), standardized over all `cards`
/// (sample SD).
pub fn simplicity_index(cards: &mut [ScoreCard], population: &str) -> Result<Standardization> {
    if cards.len() < 2 {
        return Err(Error::InsufficientData(
            "the simplicity index needs at least two score cards".into(),
        ));
    }
    let column = |f: fn(&ScoreCard) -> f64| cards.iter().map(f).collect::<Vec<_>>();
    let common = Moments::of(&column(|c| c.common_pct), "common_pct")?;
    let flesch = Moments::of(&column(|c| c.flesch), "flesch")?;
    let analytic = Moments::of(&column(|c| c.analytic_scaled), "analytic_scaled")?;
    for card in cards.iter_mut() {
        card.simplicity_z = Some(
            common.z(card.common_pct) + flesch.z(card.flesch) - analytic.z(card.analytic_scaled),
        );
    }
    Ok(Standardization {
        population: population.to_string(),
        n: cards.len(),
        common,
        flesch,
        analytic,
    })
}

#[derive(Serialize, Deserialize)]
struct CardRow {
    id: String,
    kind: DocKind,
    word_count: usize,
    common_pct: f64,
    analytic_raw: f64,
    analytic_scaled: f64,
    flesch: f64,
    simplicity_z: Option<f64>,
}

impl From<&ScoreCard> for CardRow {
    fn from(c: &ScoreCard) -> Self {
        CardRow {
            id: c.id.clone(),
            kind: c.kind,
            word_count: c.word_count,
            common_pct: c.common_pct,
            analytic_raw: c.analytic_raw,
            analytic_scaled: c.analytic_scaled,
            flesch: c.flesch,
            simplicity_z: c.simplicity_z,
        }
    }
}

impl From<CardRow> for ScoreCard {
    fn from(r: CardRow) -> Self {
        ScoreCard {
            id: r.id,
            kind: r.kind,
            word_count: r.word_count,
            common_pct: r.common_pct,
            analytic_raw: r.analytic_raw,
            analytic_scaled: r.analytic_scaled,
            flesch: r.flesch,
            simplicity_z: r.simplicity_z,
            categories: BTreeMap::new(),
        }
    }
}

pub fn write_scores_csv<W: Write>(cards: &[ScoreCard], out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    for card in cards {
        writer.serialize(CardRow::from(card))?;
    }
    writer.flush().map_err(|e| Error::io("<output>", e))?;
    Ok(())
}

pub fn write_scores_jsonl<W: Write>(cards: &[ScoreCard], mut out: W) -> Result<()> {
    for card in cards {
        serde_json::to_writer(&mut out, &CardRow::from(card))?;
        out.write_all(b"\n").map_err(|e| Error::io("<output>", e))?;
    }
    Ok(())
}

pub fn read_scores_csv<R: Read>(input: R) -> Result<Vec<ScoreCard>> {
    csv::Reader::from_reader(input)
        .deserialize::<CardRow>()
        .map(|row| Ok(row?.into()))
        .collect()
}

pub fn read_scores_jsonl<R: Read>(mut input: R) -> Result<Vec<ScoreCard>> {
    let mut text = String::new();
    input
        .read_to_string(&mut text)
        .map_err(|e| Error::io("<input>", e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Ok(serde_json::from_str::<CardRow>(l)?.into()))
        .collect()
}
