//! Meaning extraction: a document-term matrix of content words, principal
//! components of its correlation matrix, varimax rotation and
//! loading-thresholded theme scores.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::stats::ols::{ols, Design, OlsFit};
use crate::textmetrics::tokenize;

const BUILTIN_STOPWORDS: &str = include_str!("../data/stopwords.txt");

pub const MIN_DOCS: usize = 20;

#[derive(Debug, Clone)]
pub struct Stoplist {
    words: HashSet<String>,
}

impl Stoplist {
    pub fn parse(source: &str) -> Self {
        let words = source
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_lowercase)
            .collect();
        Stoplist { words }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let source = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::parse(&source))
    }

    pub fn builtin() -> Self {
        Self::parse(BUILTIN_STOPWORDS)
    }

    pub fn empty() -> Self {
        Stoplist { words: HashSet::new() }
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CellMode {
    #[default]
    Binary,
    Frequency,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DtmOptions {
    pub min_doc_fraction: f64,
    pub min_term_len: usize,
    pub cells: CellMode,
    /// Light suffix stripping. Changes which surface forms pool together.
    pub stem: bool,
}

impl Default for DtmOptions {
    fn default() -> Self {
        DtmOptions {
            min_doc_fraction: 0.05,
            min_term_len: 3,
            cells: CellMode::Binary,
            stem: false,
        }
    }
}

/// Documents in rows, retained terms in columns.
#[derive(Debug, Clone, PartialEq)]
pub struct DocTermMatrix {
    pub docs: Vec<String>,
    pub terms: Vec<String>,
    pub cells: DMatrix<f64>,
}

impl DocTermMatrix {
    pub fn new(docs: Vec<String>, terms: Vec<String>, cells: DMatrix<f64>) -> Result<Self> {
        if cells.nrows() != docs.len() || cells.ncols() != terms.len() {
            return Err(Error::InvalidArgument(format!(
                "matrix is {}x{}, labels are {}x{}",
                cells.nrows(),
                cells.ncols(),
                docs.len(),
                terms.len()
            )));
        }
        Ok(DocTermMatrix { docs, terms, cells })
    }
}

/// Strips a handful of common English inflections.
pub fn light_stem(word: &str) -> String {
    let rules: [(&str, &str); 6] = [
        ("ies", "y"),
        ("ing", ""),
        ("ed", ""),
        ("es", ""),
        ("ly", ""),
        ("s", ""),
    ];
    for (suffix, replacement) in rules {
        if let Some(stem) = word.strip_suffix(suffix) {
            if suffix == "s" && (stem.ends_with('s') || stem.ends_with('u') || stem.ends_with('i')) {
                continue;
            }
            if suffix == "es" && !["s", "x", "z", "ch", "sh"].iter().any(|e| stem.ends_with(e)) {
                continue;
            }
            if stem.chars().count() >= 3 {
                return format!("{stem}{replacement}");
            }
        }
    }
    word.to_string()
}

pub fn build_dtm(docs: &[Document], stoplist: &Stoplist, options: &DtmOptions) -> Result<DocTermMatrix> {
    if docs.len() < MIN_DOCS {
        return Err(Error::InsufficientData(format!(
            "theme extraction needs at least {MIN_DOCS} documents, got {}",
            docs.len()
        )));
    }
    if !(options.min_doc_fraction > 0.0 && options.min_doc_fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "min_doc_fraction must lie in (0, 1], got {}",
            options.min_doc_fraction
        )));
    }

    let counts: Vec<BTreeMap<String, usize>> = docs
        .par_iter()
        .map(|doc| {
            let stream = tokenize(&doc.text)?;
            let mut terms = BTreeMap::new();
            for word in stream.words {
                if word.chars().count() < options.min_term_len || stoplist.contains(&word) {
                    continue;
                }
                if !word.chars().any(char::is_alphabetic) {
                    continue;
                }
                let term = if options.stem { light_stem(&word) } else { word };
                *terms.entry(term).or_insert(0) += 1;
            }
            Ok(terms)
        })
        .collect::<Result<_>>()?;

    let mut doc_freq: BTreeMap<&str, usize> = BTreeMap::new();
    for terms in &counts {
        for term in terms.keys() {
            *doc_freq.entry(term).or_insert(0) += 1;
        }
    }
    let needed = options.min_doc_fraction * docs.len() as f64;
    let terms: Vec<String> = doc_freq
        .into_iter()
        .filter(|&(_, df)| df as f64 >= needed - 1e-9)
        .map(|(t, _)| t.to_string())
        .collect();
    if terms.is_empty() {
        return Err(Error::InsufficientData("no terms survive filtering".into()));
    }

    let cells = DMatrix::from_fn(docs.len(), terms.len(), |i, j| {
        let c = counts[i].get(&terms[j]).copied().unwrap_or(0);
        match options.cells {
            CellMode::Binary => f64::from(u8::from(c > 0)),
            CellMode::Frequency => c as f64,
        }
    });
    DocTermMatrix::new(docs.iter().map(|d| d.id.clone()).collect(), terms, cells)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThemeCount {
    /// Components with eigenvalue above one.
    Auto,
    Fixed(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThemeOptions {
    pub count: ThemeCount,
    pub loading_threshold: f64,
    pub tolerance: f64,
    pub max_sweeps: usize,
}

impl Default for ThemeOptions {
    fn default() -> Self {
        ThemeOptions {
            count: ThemeCount::Auto,
            loading_threshold: 0.25,
            tolerance: 1e-6,
            max_sweeps: 1000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ThemeSolution {
    pub docs: Vec<String>,
    pub terms: Vec<String>,
    pub dropped_terms: Vec<String>,
    /// All eigenvalues of the term correlation matrix, descending.
    pub eigenvalues: Vec<f64>,
    pub k: usize,
    /// Terms × components after rotation.
    pub loadings: DMatrix<f64>,
    pub unrotated: DMatrix<f64>,
    pub explained_variance: Vec<f64>,
    /// Documents × components, each cell in [0, 1].
    pub theme_scores: DMatrix<f64>,
    pub theme_terms: Vec<Vec<String>>,
    /// Varimax criterion after each sweep.
    pub criterion_history: Vec<f64>,
    pub converged: bool,
}

impl ThemeSolution {
    pub fn communalities(&self) -> Vec<f64> {
        row_communalities(&self.loadings)
    }

    pub fn theme_names(&self) -> Vec<String> {
        (1..=self.k).map(|c| format!("theme_{c}")).collect()
    }

    pub fn score_column(&self, c: usize) -> Vec<f64> {
        self.theme_scores.column(c).iter().copied().collect()
    }

    pub fn summary(&self, top: usize) -> ThemeSummary {
        ThemeSummary {
            k: self.k,
            terms: self.terms.len(),
            dropped_terms: self.dropped_terms.clone(),
            explained_variance: self.explained_variance.clone(),
            top_terms: (0..self.k).map(|c| self.top_terms(c, top)).collect(),
            converged: self.converged,
        }
    }

    /// Highest-|loading| terms of component `c`, with their loadings.
    pub fn top_terms(&self, c: usize, n: usize) -> Vec<(String, f64)> {
        let mut order: Vec<usize> = (0..self.terms.len()).collect();
        order.sort_by(|&a, &b| {
            self.loadings[(b, c)]
                .abs()
                .total_cmp(&self.loadings[(a, c)].abs())
                .then(a.cmp(&b))
        });
        order
            .into_iter()
            .take(n)
            .map(|i| (self.terms[i].clone(), self.loadings[(i, c)]))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThemeSummary {
    pub k: usize,
    pub terms: usize,
    pub dropped_terms: Vec<String>,
    pub explained_variance: Vec<f64>,
    pub top_terms: Vec<Vec<(String, f64)>>,
    pub converged: bool,
}

fn row_communalities(loadings: &DMatrix<f64>) -> Vec<f64> {
    loadings.row_iter().map(|r| r.norm_squared()).collect()
}

fn correlation_matrix(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows() as f64;
    let mut centered = x.clone();
    for mut col in centered.column_iter_mut() {
        let m = col.sum() / n;
        col.add_scalar_mut(-m);
        let norm = col.norm();
        col /= norm;
    }
    let mut r = centered.transpose() * &centered;
    for i in 0..r.nrows() {
        r[(i, i)] = 1.0;
    }
    r
}

/// Σ_c [ Σ_i a_ic⁴ / p − (Σ_i a_ic² / p)² ]
pub fn varimax_criterion(loadings: &DMatrix<f64>) -> f64 {
    let p = loadings.nrows() as f64;
    loadings
        .column_iter()
        .map(|col| {
            let s2: f64 = col.iter().map(|a| a * a).sum();
            let s4: f64 = col.iter().map(|a| a.powi(4)).sum();
            s4 / p - (s2 / p).powi(2)
        })
        .sum()
}

#[derive(Debug, Clone)]
pub struct VarimaxResult {
    pub loadings: DMatrix<f64>,
    pub criterion_history: Vec<f64>,
    pub converged: bool,
}

/// Kaiser-normalized varimax by sweeps of pairwise planar rotations. Stops
/// when every rotation angle in a sweep is below `tolerance`.
pub fn varimax(loadings: &DMatrix<f64>, tolerance: f64, max_sweeps: usize) -> VarimaxResult {
    let (p, k) = loadings.shape();
    let h: Vec<f64> = row_communalities(loadings).into_iter().map(f64::sqrt).collect();
    let mut a = DMatrix::from_fn(p, k, |i, j| if h[i] > 0.0 { loadings[(i, j)] / h[i] } else { 0.0 });
    let mut history = vec![varimax_criterion(&a)];
    let mut converged = k < 2;

    let pf = p as f64;
    for _ in 0..max_sweeps {
        if converged {
            break;
        }
        let mut largest = 0.0f64;
        for j in 0..k {
            for l in (j + 1)..k {
                let (mut sa, mut sb, mut sc, mut sd) = (0.0, 0.0, 0.0, 0.0);
                for i in 0..p {
                    let (x, y) = (a[(i, j)], a[(i, l)]);
                    let u = x * x - y * y;
                    let v = 2.0 * x * y;
                    sa += u;
                    sb += v;
                    sc += u * u - v * v;
                    sd += 2.0 * u * v;
                }
                let num = sd - 2.0 * sa * sb / pf;
                let den = sc - (sa * sa - sb * sb) / pf;
                let phi = 0.25 * num.atan2(den);
                largest = largest.max(phi.abs());
                if phi.abs() < f64::EPSILON {
                    continue;
                }
                let (s, c) = phi.sin_cos();
                for i in 0..p {
                    let (x, y) = (a[(i, j)], a[(i, l)]);
                    a[(i, j)] = c * x + s * y;
                    a[(i, l)] = -s * x + c * y;
                }
            }
        }
        history.push(varimax_criterion(&a));
        if largest < tolerance {
            converged = true;
        }
    }

    for i in 0..p {
        for j in 0..k {
            a[(i, j)] *= h[i];
        }
    }
    VarimaxResult {
        loadings: a,
        criterion_history: history,
        converged,
    }
}

pub fn extract_themes(dtm: &DocTermMatrix, options: &ThemeOptions) -> Result<ThemeSolution> {
    let n = dtm.cells.nrows();
    if n < 3 {
        return Err(Error::InsufficientData("need at least 3 documents".into()));
    }

    let mut keep = Vec::new();
    let mut dropped_terms = Vec::new();
    for (j, term) in dtm.terms.iter().enumerate() {
        let col = dtm.cells.column(j);
        if col.iter().all(|v| *v == col[0]) {
            dropped_terms.push(term.clone());
        } else {
            keep.push(j);
        }
    }
    if !dropped_terms.is_empty() {
        log::warn!("dropping {} zero-variance term columns: {}", dropped_terms.len(), dropped_terms.join(", "));
    }
    if keep.is_empty() {
        return Err(Error::ZeroVariance("every term column is constant".into()));
    }
    let x = dtm.cells.select_columns(&keep);
    let terms: Vec<String> = keep.iter().map(|&j| dtm.terms[j].clone()).collect();
    let p = terms.len();

    let r = correlation_matrix(&x);
    let eig = SymmetricEigen::new(r);
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let rank = eigenvalues.iter().filter(|&&v| v > 1e-9 * p as f64).count();

    let k = match options.count {
        ThemeCount::Auto => eigenvalues.iter().filter(|&&v| v > 1.0 + 1e-12).count().max(1),
        ThemeCount::Fixed(k) => k,
    };
    if k == 0 {
        return Err(Error::InvalidArgument("component count must be positive".into()));
    }
    if k > rank {
        return Err(Error::InvalidArgument(format!(
            "{k} components requested but the term correlation matrix has rank {rank}"
        )));
    }

    let unrotated = DMatrix::from_fn(p, k, |i, c| {
        let idx = order[c];
        eig.eigenvectors[(i, idx)] * eig.eigenvalues[idx].max(0.0).sqrt()
    });
    let rotated = varimax(&unrotated, options.tolerance, options.max_sweeps);
    if !rotated.converged {
        log::warn!("varimax stopped after {} sweeps without converging", options.max_sweeps);
    }

    let loadings = order_and_orient(rotated.loadings);
    let unrotated = order_and_orient(unrotated);
    let explained_variance: Vec<f64> = loadings.column_iter().map(|c| c.norm_squared()).collect();

    let indicators = x.map(|v| f64::from(u8::from(v > 0.0)));
    let mut theme_terms = Vec::with_capacity(k);
    let mut theme_scores = DMatrix::zeros(n, k);
    for c in 0..k {
        let members: Vec<usize> = (0..p)
            .filter(|&i| loadings[(i, c)].abs() >= options.loading_threshold)
            .collect();
        if members.is_empty() {
            log::warn!("component {} has no term at or above the loading threshold", c + 1);
        } else {
            for d in 0..n {
                let hits: f64 = members.iter().map(|&i| indicators[(d, i)]).sum();
                theme_scores[(d, c)] = hits / members.len() as f64;
            }
        }
        theme_terms.push(members.iter().map(|&i| terms[i].clone()).collect());
    }

    Ok(ThemeSolution {
        docs: dtm.docs.clone(),
        terms,
        dropped_terms,
        eigenvalues,
        k,
        loadings,
        unrotated,
        explained_variance,
        theme_scores,
        theme_terms,
        criterion_history: rotated.criterion_history,
        converged: rotated.converged,
    })
}

/// Sorts columns by explained variance (ties by the row of their largest
/// entry) and flips each so its largest-|loading| entry is positive.
fn order_and_orient(loadings: DMatrix<f64>) -> DMatrix<f64> {
    let k = loadings.ncols();
    let peak_row = |c: usize| peak_row_of(&loadings, c);
    let ss: Vec<f64> = loadings.column_iter().map(|c| c.norm_squared()).collect();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        if (ss[a] - ss[b]).abs() <= 1e-9 * ss[a].max(ss[b]) {
            peak_row(a).cmp(&peak_row(b))
        } else {
            ss[b].total_cmp(&ss[a])
        }
    });
    let mut out = loadings.select_columns(&order);
    for c in 0..k {
        let peak = peak_row_of(&out, c);
        if out[(peak, c)] < 0.0 {
            out.column_mut(c).neg_mut();
        }
    }
    out
}

fn peak_row_of(m: &DMatrix<f64>, c: usize) -> usize {
    let col = m.column(c);
    (0..col.len())
        .max_by(|&a, &b| col[a].abs().total_cmp(&col[b].abs()).then(b.cmp(&a)))
        .unwrap_or(0)
}

/// Regresses `response` on the group indicator plus `extra` covariates and
/// the theme scores.
pub fn theme_covariate_model(
    response: &[f64],
    group: &[f64],
    themes: &ThemeSolution,
    extra: &[(String, Vec<f64>)],
) -> Result<OlsFit> {
    let mut design = Design::with_intercept(response.len());
    design.push("group", group.to_vec())?;
    for (name, values) in extra {
        design.push(name.clone(), values.clone())?;
    }
    for (c, name) in themes.theme_names().into_iter().enumerate() {
        design.push(name, themes.score_column(c))?;
    }
    ols(response, &design)
}

pub fn write_loadings_csv<W: Write>(solution: &ThemeSolution, out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    let mut header = vec!["term".to_string()];
    header.extend(solution.theme_names());
    writer.write_record(&header)?;
    for (i, term) in solution.terms.iter().enumerate() {
        let mut row = vec![term.clone()];
        row.extend((0..solution.k).map(|c| solution.loadings[(i, c)].to_string()));
        writer.write_record(&row)?;
    }
    writer.flush().map_err(|e| Error::io("<output>", e))?;
    Ok(())
}

pub fn write_theme_scores_csv<W: Write>(solution: &ThemeSolution, out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    let mut header = vec!["id".to_string()];
    header.extend(solution.theme_names());
    writer.write_record(&header)?;
    for (d, id) in solution.docs.iter().enumerate() {
        let mut row = vec![id.clone()];
        row.extend((0..solution.k).map(|c| solution.theme_scores[(d, c)].to_string()));
        writer.write_record(&row)?;
    }
    writer.flush().map_err(|e| Error::io("<output>", e))?;
    Ok(())
}

/// Plain-text listing of the top-loading terms per component.
pub fn theme_report(solution: &ThemeSolution, top: usize) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{} components from {} terms ({} dropped as constant)",
        solution.k,
        solution.terms.len(),
        solution.dropped_terms.len()
    );
    for c in 0..solution.k {
        let _ = writeln!(
            s,
            "\ntheme_{} (explained variance {:.3})",
            c + 1,
            solution.explained_variance[c]
        );
        for (term, loading) in solution.top_terms(c, top) {
            let _ = writeln!(s, "  {term:<24} {loading:>7.3}");
        }
    }
    s
}
