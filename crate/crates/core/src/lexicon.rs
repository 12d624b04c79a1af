//! Word-category dictionaries.
//!
//! File format, UTF-8:
//!
//! ```text
//! # comment
//! %category articles
//! a
//! an
//! the
//! %category cognition
//! think*
//! ```
//!
//! An entry ending in `*` matches every token starting with the part before
//! the star (including the bare stem). Entries are lowercased on load.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::path::Path;

use crate::error::{Error, Result};

/// Categories the analytic-writing composite reads.
pub const STYLE_CATEGORIES: [&str; 7] = [
    "articles",
    "prepositions",
    "pronouns",
    "auxiliary_verbs",
    "adverbs",
    "conjunctions",
    "negations",
];

/// Content categories used as covariates by the robustness models.
pub const CONTENT_CATEGORIES: [&str; 4] = ["affect", "cognition", "political", "physical"];

const BUILTIN_LEXICON: &str = include_str!("../data/demo.lex");
const BUILTIN_COMMON_WORDS: &str = include_str!("../data/common_words.txt");

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum Entry {
    Literal(String),
    Prefix(String),
}

fn parse_entry(raw: &str, line: usize) -> Result<Entry> {
    let word = raw.to_lowercase();
    if word.chars().any(char::is_whitespace) {
        return Err(Error::Lexicon {
            line,
            message: format!("entry {raw:?} contains whitespace"),
        });
    }
    match word.find('*') {
        None => Ok(Entry::Literal(word)),
        Some(pos) if pos + 1 == word.len() && pos > 0 => {
            Ok(Entry::Prefix(word[..pos].to_string()))
        }
        Some(_) => Err(Error::Lexicon {
            line,
            message: format!("wildcard allowed only at the end of an entry: {raw:?}"),
        }),
    }
}

/// Literal and prefix lookup tables mapping to category indices.
#[derive(Debug, Clone, Default)]
struct MatchTable {
    literals: HashMap<String, Vec<usize>>,
    prefixes: HashMap<String, Vec<usize>>,
    longest_prefix: usize,
}

impl MatchTable {
    fn insert(&mut self, entry: &Entry, category: usize) {
        let (map, key) = match entry {
            Entry::Literal(w) => (&mut self.literals, w),
            Entry::Prefix(p) => {
                self.longest_prefix = self.longest_prefix.max(p.len());
                (&mut self.prefixes, p)
            }
        };
        let slot = map.entry(key.clone()).or_default();
        if !slot.contains(&category) {
            slot.push(category);
        }
    }

    fn for_each_match(&self, token: &str, mut f: impl FnMut(usize)) {
        if let Some(cats) = self.literals.get(token) {
            cats.iter().for_each(|&c| f(c));
        }
        if self.prefixes.is_empty() {
            return;
        }
        for (end, _) in token
            .char_indices()
            .skip(1)
            .chain(std::iter::once((token.len(), ' ')))
        {
            if end > self.longest_prefix {
                break;
            }
            if let Some(cats) = self.prefixes.get(&token[..end]) {
                cats.iter().for_each(|&c| f(c));
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct Lexicon {
    pub name: String,
    names: Vec<String>,
    sizes: Vec<usize>,
    table: MatchTable,
}

impl Lexicon {
    pub fn parse(name: impl Into<String>, source: &str) -> Result<Self> {
        let mut categories: Vec<(String, usize, Vec<Entry>)> = Vec::new();
        for (idx, raw) in source.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            if let Some(rest) = trimmed.strip_prefix("%category") {
                let cat = rest.trim();
                if cat.is_empty() || cat.chars().any(char::is_whitespace) {
                    return Err(Error::Lexicon {
                        line,
                        message: format!("bad category header {trimmed:?}"),
                    });
                }
                if categories.iter().any(|(n, _, _)| n == cat) {
                    return Err(Error::Lexicon {
                        line,
                        message: format!("duplicate category {cat:?}"),
                    });
                }
                categories.push((cat.to_string(), line, Vec::new()));
                continue;
            }
            let Some((_, _, entries)) = categories.last_mut() else {
                return Err(Error::Lexicon {
                    line,
                    message: "entry appears before any %category header".into(),
                });
            };
            let entry = parse_entry(trimmed, line)?;
            if !entries.contains(&entry) {
                entries.push(entry);
            }
        }

        let mut table = MatchTable::default();
        let mut names = Vec::with_capacity(categories.len());
        let mut sizes = Vec::with_capacity(categories.len());
        for (idx, (cat, line, entries)) in categories.into_iter().enumerate() {
            if entries.is_empty() {
                return Err(Error::Lexicon {
                    line,
                    message: format!("category {cat:?} has no entries"),
                });
            }
            for entry in &entries {
                table.insert(entry, idx);
            }
            names.push(cat);
            sizes.push(entries.len());
        }
        Ok(Lexicon {
            name: name.into(),
            names,
            sizes,
            table,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let source = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let name = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("lexicon");
        Self::parse(name, &source)
    }

    /// The small demonstration lexicon shipped with the crate.
    pub fn builtin() -> Self {
        Self::parse("demo", BUILTIN_LEXICON).expect("bundled lexicon is valid")
    }

    pub fn category_names(&self) -> &[String] {
        &self.names
    }

    pub fn has_category(&self, name: &str) -> bool {
        self.names.iter().any(|n| n == name)
    }

    /// Number of distinct entries per category.
    pub fn entry_counts(&self) -> BTreeMap<&str, usize> {
        self.names
            .iter()
            .map(String::as_str)
            .zip(self.sizes.iter().copied())
            .collect()
    }

    /// Categories covering a lowercase token.
    pub fn matches(&self, token: &str) -> BTreeSet<&str> {
        let mut out = BTreeSet::new();
        self.table
            .for_each_match(token, |c| {
                out.insert(self.names[c].as_str());
            });
        out
    }

    /// Number of tokens matched by each category, indexed like
    /// [`Lexicon::category_names`].
    pub(crate) fn count_matches<'a>(&self, tokens: impl IntoIterator<Item = &'a str>) -> Vec<usize> {
        let mut counts = vec![0usize; self.names.len()];
        let mut hit = vec![false; self.names.len()];
        for token in tokens {
            hit.iter_mut().for_each(|h| *h = false);
            self.table.for_each_match(token, |c| hit[c] = true);
            for (count, &h) in counts.iter_mut().zip(&hit) {
                *count += h as usize;
            }
        }
        counts
    }

    pub fn require(&self, categories: &[&str]) -> Result<()> {
        match categories.iter().find(|c| !self.has_category(c)) {
            Some(missing) => Err(Error::MissingCategory(missing.to_string())),
            None => Ok(()),
        }
    }
}

/// Everyday-word list behind the common-words score.
#[derive(Debug, Clone)]
pub struct CommonWordList {
    pub description: String,
    len: usize,
    table: MatchTable,
}

impl CommonWordList {
    /// One entry per line; `#` lines are comments. Duplicate entries are an
    /// error.
    pub fn parse(description: impl Into<String>, source: &str) -> Result<Self> {
        let mut table = MatchTable::default();
        let mut seen = HashSet::new();
        for (idx, raw) in source.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let entry = parse_entry(trimmed, line)?;
            if !seen.insert(entry.clone()) {
                return Err(Error::Lexicon {
                    line,
                    message: format!("duplicate entry {trimmed:?}"),
                });
            }
            table.insert(&entry, 0);
        }
        if seen.is_empty() {
            return Err(Error::Lexicon {
                line: 0,
                message: "common-word list is empty".into(),
            });
        }
        Ok(CommonWordList {
            description: description.into(),
            len: seen.len(),
            table,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let source = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(path.display().to_string(), &source)
    }

    pub fn builtin() -> Self {
        Self::parse("bundled high-frequency English word list", BUILTIN_COMMON_WORDS)
            .expect("bundled common-word list is valid")
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn contains(&self, token: &str) -> bool {
        let mut hit = false;
        self.table.for_each_match(token, |_| hit = true);
        hit
    }
}
