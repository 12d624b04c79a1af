//! Document corpora: loading, yoked pairing, seeded sampling and stimulus
//! selection.
//!
//! JSONL is the canonical format, one `{"id", "kind", "text"}` object per
//! line. CSV input needs a header row with the columns `id,kind,text`.
//! Records whose text is blank are skipped and counted; everything else that
//! fails validation aborts the load with the offending line number.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::textmetrics;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DocKind {
    Abstract,
    HumanLay,
    AiLay,
}

impl DocKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DocKind::Abstract => "abstract",
            DocKind::HumanLay => "human_lay",
            DocKind::AiLay => "ai_lay",
        }
    }

    pub fn is_lay(self) -> bool {
        !matches!(self, DocKind::Abstract)
    }
}

impl fmt::Display for DocKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DocKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "abstract" => Ok(DocKind::Abstract),
            "human_lay" => Ok(DocKind::HumanLay),
            "ai_lay" => Ok(DocKind::AiLay),
            other => Err(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub kind: DocKind,
    pub text: String,
    /// Token count under [`textmetrics::tokenize`], cached at construction.
    #[serde(default)]
    pub word_count: usize,
}

impl Document {
    pub fn new(id: impl Into<String>, kind: DocKind, text: impl Into<String>) -> Self {
        let text = text.into();
        let word_count = textmetrics::word_count(&text);
        Document {
            id: id.into(),
            kind,
            text,
            word_count,
        }
    }
}

/// Abstract and lay summary of the same article.
#[derive(Debug, Clone, PartialEq)]
pub struct YokedPair {
    pub id: String,
    pub abstract_doc: Document,
    pub lay: Document,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusFormat {
    Jsonl,
    Csv,
}

impl CorpusFormat {
    /// Guesses the format from a file extension, defaulting to JSONL.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => CorpusFormat::Csv,
            _ => CorpusFormat::Jsonl,
        }
    }
}

impl FromStr for CorpusFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "jsonl" => Ok(CorpusFormat::Jsonl),
            "csv" => Ok(CorpusFormat::Csv),
            other => Err(format!("unknown corpus format {other:?}")),
        }
    }
}

/// An immutable, validated collection of documents.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    documents: Vec<Document>,
    /// Records dropped at load time because their text was blank.
    pub skipped_empty: usize,
}

#[derive(Deserialize)]
struct RawRecord {
    id: String,
    kind: String,
    text: String,
}

impl Corpus {
    /// Builds a corpus, rejecting duplicate `(id, kind)` entries and blank texts.
    pub fn from_documents(documents: Vec<Document>) -> Result<Self> {
        let mut seen = HashSet::new();
        for doc in &documents {
            if doc.text.trim().is_empty() {
                return Err(Error::EmptyText);
            }
            if !seen.insert((doc.id.as_str(), doc.kind)) {
                return Err(Error::DuplicateDocument {
                    id: doc.id.clone(),
                    kind: doc.kind.to_string(),
                });
            }
        }
        Ok(Corpus {
            documents,
            skipped_empty: 0,
        })
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn of_kind(&self, kind: DocKind) -> Corpus {
        Corpus {
            documents: self
                .documents
                .iter()
                .filter(|d| d.kind == kind)
                .cloned()
                .collect(),
            skipped_empty: 0,
        }
    }

    pub fn get(&self, id: &str, kind: DocKind) -> Option<&Document> {
        self.documents.iter().find(|d| d.id == id && d.kind == kind)
    }

    pub fn pairs(&self, lay_kind: DocKind) -> Result<Vec<YokedPair>> {
        yoke(self, lay_kind)
    }

    /// Serializes the corpus as canonical JSONL.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        #[derive(Serialize)]
        struct Row<'a> {
            id: &'a str,
            kind: DocKind,
            text: &'a str,
        }
        for doc in &self.documents {
            let row = Row {
                id: &doc.id,
                kind: doc.kind,
                text: &doc.text,
            };
            serde_json::to_writer(&mut out, &row)?;
            out.write_all(b"\n").map_err(|e| Error::io("<output>", e))?;
        }
        Ok(())
    }
}

pub fn load_corpus(path: &Path, format: CorpusFormat) -> Result<Corpus> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    match format {
        CorpusFormat::Jsonl => parse_jsonl(&bytes),
        CorpusFormat::Csv => parse_csv(&bytes),
    }
}

pub fn parse_jsonl(bytes: &[u8]) -> Result<Corpus> {
    let mut builder = Builder::default();
    for (idx, raw) in bytes.split(|&b| b == b'\n').enumerate() {
        let line = idx + 1;
        let text = std::str::from_utf8(raw).map_err(|_| Error::InvalidUtf8 { line })?;
        if text.trim().is_empty() {
            continue;
        }
        let record: RawRecord =
            serde_json::from_str(text).map_err(|e| Error::MalformedRecord {
                line,
                message: e.to_string(),
            })?;
        builder.push(line, record)?;
    }
    Ok(builder.finish())
}

pub fn parse_csv(bytes: &[u8]) -> Result<Corpus> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(bytes);
    let headers = reader.byte_headers()?.clone();
    let column = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name.as_bytes())
            .ok_or_else(|| Error::MalformedRecord {
                line: 1,
                message: format!("missing column {name:?}"),
            })
    };
    let (id_col, kind_col, text_col) = (column("id")?, column("kind")?, column("text")?);

    let mut builder = Builder::default();
    for record in reader.byte_records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            Error::MalformedRecord {
                line,
                message: e.to_string(),
            }
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let field = |col: usize| -> Result<String> {
            let raw = record.get(col).ok_or_else(|| Error::MalformedRecord {
                line,
                message: format!("expected at least {} fields", col + 1),
            })?;
            std::str::from_utf8(raw)
                .map(str::to_owned)
                .map_err(|_| Error::InvalidUtf8 { line })
        };
        builder.push(
            line,
            RawRecord {
                id: field(id_col)?,
                kind: field(kind_col)?,
                text: field(text_col)?,
            },
        )?;
    }
    Ok(builder.finish())
}

#[derive(Default)]
struct Builder {
    documents: Vec<Document>,
    seen: HashSet<(String, DocKind)>,
    skipped_empty: usize,
}

impl Builder {
    fn push(&mut self, line: usize, record: RawRecord) -> Result<()> {
        let kind: DocKind = record
            .kind
            .parse()
            .map_err(|value| Error::UnknownKind { line, value })?;
        if record.id.trim().is_empty() {
            return Err(Error::MalformedRecord {
                line,
                message: "empty id".into(),
            });
        }
        if record.text.trim().is_empty() {
            self.skipped_empty += 1;
            return Ok(());
        }
        if !self.seen.insert((record.id.clone(), kind)) {
            return Err(Error::DuplicateDocument {
                id: record.id,
                kind: kind.to_string(),
            });
        }
        self.documents
            .push(Document::new(record.id, kind, record.text));
        Ok(())
    }

    fn finish(self) -> Corpus {
        if self.skipped_empty > 0 {
            log::warn!("skipped {} records with empty text", self.skipped_empty);
        }
        Corpus {
            documents: self.documents,
            skipped_empty: self.skipped_empty,
        }
    }
}

/// Pairs each abstract with the lay summary of the requested kind.
///
/// Ids missing either member are excluded. Output is sorted by id.
pub fn yoke(corpus: &Corpus, lay_kind: DocKind) -> Result<Vec<YokedPair>> {
    if !lay_kind.is_lay() {
        return Err(Error::InvalidArgument(
            "lay kind must be human_lay or ai_lay".into(),
        ));
    }
    let mut abstracts = BTreeMap::new();
    let mut lays = BTreeMap::new();
    for doc in corpus.documents() {
        if doc.kind == DocKind::Abstract {
            abstracts.insert(doc.id.as_str(), doc);
        } else if doc.kind == lay_kind {
            lays.insert(doc.id.as_str(), doc);
        }
    }
    Ok(abstracts
        .into_iter()
        .filter_map(|(id, abs)| {
            lays.get(id).map(|lay| YokedPair {
                id: id.to_string(),
                abstract_doc: abs.clone(),
                lay: (*lay).clone(),
            })
        })
        .collect())
}

/// Draws `n` documents uniformly without replacement.
///
/// The selection depends only on `(corpus, n, seed)`; chosen documents keep
/// their original relative order.
pub fn sample(corpus: &Corpus, n: usize, seed: u64) -> Result<Corpus> {
    if n > corpus.len() {
        return Err(Error::InvalidArgument(format!(
            "cannot sample {n} documents from a corpus of {}",
            corpus.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, corpus.len(), n).into_vec();
    picked.sort_unstable();
    Ok(Corpus {
        documents: picked
            .into_iter()
            .map(|i| corpus.documents[i].clone())
            .collect(),
        skipped_empty: 0,
    })
}

/// Common-word (or any) scores for the two versions of a candidate stimulus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StimulusScores {
    pub id: String,
    pub score_a: f64,
    pub score_b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StimulusGap {
    pub id: String,
    pub score_a: f64,
    pub score_b: f64,
    pub gap: f64,
}

/// Picks the `k` pairs whose two versions differ most, largest gap first.
/// Equal gaps are ordered by id.
pub fn select_stimuli(pairs: &[StimulusScores], k: usize) -> Result<Vec<StimulusGap>> {
    if k > pairs.len() {
        return Err(Error::InvalidArgument(format!(
            "k = {k} exceeds the {} available pairs",
            pairs.len()
        )));
    }
    let mut gaps: Vec<StimulusGap> = pairs
        .iter()
        .map(|p| StimulusGap {
            id: p.id.clone(),
            score_a: p.score_a,
            score_b: p.score_b,
            gap: (p.score_a - p.score_b).abs(),
        })
        .collect();
    gaps.sort_by(|x, y| match y.gap.total_cmp(&x.gap) {
        Ordering::Equal => x.id.cmp(&y.id),
        other => other,
    });
    gaps.truncate(k);
    Ok(gaps)
}

/// Reads `id,score_a,score_b` rows.
pub fn load_stimulus_scores(path: &Path) -> Result<Vec<StimulusScores>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::Reader::from_reader(bytes.as_slice());
    reader
        .deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}
