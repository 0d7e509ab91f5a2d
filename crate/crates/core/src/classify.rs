//! Template classification: which known form is this page?
//!
//! A page is embedded as the concatenation of two independently normalized
//! parts and matched against a bank of per-template rows by cosine
//! similarity:
//!
//! - a **text part** — TF-IDF over lowercase alphanumeric word tokens, with
//!   smoothed inverse document frequencies and L2 normalization (the usual
//!   `ln((1+N)/(1+df)) + 1` convention), or an externally precomputed
//!   embedding of any fixed length;
//! - a **layout part** — an L2-normalized G x G histogram of entity anchor
//!   points over the page.
//!
//! The parts can be reweighted by a scalar `alpha` in [0, 1] (0.5 means
//! equal weight; cosine scores are invariant to the overall scale, so only
//! the text-to-layout ratio matters).

use crate::geometry::Point;
use crate::ocr::Entity;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ClassifyError {
    /// TF-IDF fitting needs at least one document with at least one token.
    #[error("cannot fit TF-IDF on an empty corpus")]
    EmptyCorpus,
    /// Vector lengths disagree (bank rows among themselves, or query vs bank).
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    /// Template bank invariants violated (duplicate labels, no classes).
    #[error("invalid template bank: {0}")]
    InvalidBank(String),
}

// ── Tokenization and TF-IDF ──────────────────────────────────────────────────

/// Splits text into lowercase word tokens: maximal runs of alphanumeric
/// characters, each at least one character long.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|s| !s.is_empty())
        .map(|s| s.to_lowercase())
        .collect()
}

/// A fitted TF-IDF vocabulary with smoothed inverse document frequencies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfidfModel {
    /// Vocabulary terms in index order (alphabetical), so `terms[i]` is the
    /// term for dimension `i`.
    terms: Vec<String>,
    index: HashMap<String, usize>,
    idf: Vec<f64>,
}

impl TfidfModel {
    /// Fits the vocabulary and IDF weights on a corpus of documents.
    ///
    /// Terms are indexed alphabetically; `idf(t) = ln((1+N)/(1+df(t))) + 1`
    /// where `N` is the corpus size and `df(t)` counts documents containing
    /// `t`. Fails on an empty corpus or one without any tokens.
    pub fn fit(corpus: &[&str]) -> Result<Self, ClassifyError> {
        let n_docs = corpus.len();
        let mut df: HashMap<String, usize> = HashMap::new();
        for doc in corpus {
            let mut seen: Vec<String> = tokenize(doc);
            seen.sort();
            seen.dedup();
            for term in seen {
                *df.entry(term).or_insert(0) += 1;
            }
        }
        if n_docs == 0 || df.is_empty() {
            return Err(ClassifyError::EmptyCorpus);
        }
        let mut terms: Vec<String> = df.keys().cloned().collect();
        terms.sort();
        let index: HashMap<String, usize> = terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        let idf = terms
            .iter()
            .map(|t| ((1.0 + n_docs as f64) / (1.0 + df[t] as f64)).ln() + 1.0)
            .collect();
        Ok(TfidfModel { terms, index, idf })
    }

    /// Number of vocabulary dimensions.
    pub fn dims(&self) -> usize {
        self.terms.len()
    }

    /// Embeds a document: raw term counts weighted by IDF, L2-normalized.
    /// Out-of-vocabulary terms are ignored; a document with no known terms
    /// maps to the zero vector.
    pub fn transform(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.terms.len()];
        for token in tokenize(text) {
            if let Some(&i) = self.index.get(&token) {
                v[i] += self.idf[i];
            }
        }
        l2_normalize(&mut v);
        v
    }
}

/// Scales a vector to unit L2 norm in place; the zero vector stays zero.
pub fn l2_normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
}

/// Cosine similarity of two equal-length vectors; zero whenever either
/// vector has zero norm.
pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64, ClassifyError> {
    if u.len() != v.len() {
        return Err(ClassifyError::DimensionMismatch {
            expected: u.len(),
            got: v.len(),
        });
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Ok(0.0);
    }
    Ok(dot / (nu * nv))
}

// ── Layout histogram ─────────────────────────────────────────────────────────

/// Bins entity anchor points into a G x G grid over the page and returns
/// the L2-normalized cell counts, row-major. Points on the far page edge
/// fall into the last cell; no entities give the zero vector.
pub fn layout_vector(entities: &[Entity], page_w: f64, page_h: f64, g: usize) -> Vec<f64> {
    let mut v = vec![0.0; g * g];
    for e in entities {
        let gx = grid_coord(e.anchor.x, page_w, g);
        let gy = grid_coord(e.anchor.y, page_h, g);
        v[gy * g + gx] += 1.0;
    }
    l2_normalize(&mut v);
    v
}

fn grid_coord(x: f64, extent: f64, g: usize) -> usize {
    let i = (x / extent * g as f64).floor();
    (i.max(0.0) as usize).min(g - 1)
}

/// Anchor point of an entity for layout purposes (top-left of its box).
pub fn entity_anchor(e: &Entity) -> Point {
    e.anchor
}

// ── Document vectors ─────────────────────────────────────────────────────────

/// A page embedding: text and layout parts plus their concatenation.
#[derive(Debug, Clone, PartialEq)]
pub struct DocVector {
    pub text_part: Vec<f64>,
    pub layout_part: Vec<f64>,
    pub combined: Vec<f64>,
}

impl DocVector {
    /// Equal-weight combination: each part L2-normalized independently, then
    /// concatenated.
    pub fn build(text_part: Vec<f64>, layout_part: Vec<f64>) -> Self {
        DocVector::build_weighted(text_part, layout_part, 0.5)
    }

    /// Combination with an explicit text weight `alpha` in [0, 1]: the
    /// normalized parts are scaled by `sqrt(alpha)` and `sqrt(1 - alpha)`
    /// relative to each other. The multipliers are rescaled so `alpha = 0.5`
    /// concatenates the unit parts unchanged; cosine similarity only sees
    /// the ratio, so this choice is cosmetic.
    pub fn build_weighted(text_part: Vec<f64>, layout_part: Vec<f64>, alpha: f64) -> Self {
        let mut text = text_part;
        let mut layout = layout_part;
        l2_normalize(&mut text);
        l2_normalize(&mut layout);
        let (wt, wl) = ((2.0 * alpha).sqrt(), (2.0 * (1.0 - alpha)).sqrt());
        let mut combined = Vec::with_capacity(text.len() + layout.len());
        combined.extend(text.iter().map(|x| x * wt));
        combined.extend(layout.iter().map(|x| x * wl));
        DocVector {
            text_part: text,
            layout_part: layout,
            combined,
        }
    }

    /// A text-only embedding (no layout dimensions at all).
    pub fn text_only(text_part: Vec<f64>) -> Self {
        let mut text = text_part;
        l2_normalize(&mut text);
        DocVector {
            combined: text.clone(),
            text_part: text,
            layout_part: Vec::new(),
        }
    }
}

// ── Template bank ────────────────────────────────────────────────────────────

/// The class rows a page is scored against: one vector per known template.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateMatrix {
    labels: Vec<String>,
    rows: Vec<Vec<f64>>,
    dims: usize,
}

/// Result of classifying one page.
#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    /// Index into the bank's label list.
    pub class_index: usize,
    pub label: String,
    /// Cosine score per class, in bank order.
    pub scores: Vec<f64>,
}

impl TemplateMatrix {
    /// Builds a bank from rows of equal dimension with unique labels.
    pub fn new(labels: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self, ClassifyError> {
        if labels.is_empty() || labels.len() != rows.len() {
            return Err(ClassifyError::InvalidBank(format!(
                "{} labels for {} rows",
                labels.len(),
                rows.len()
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for l in &labels {
            if !seen.insert(l.clone()) {
                return Err(ClassifyError::InvalidBank(format!(
                    "duplicate class label {l:?}"
                )));
            }
        }
        let dims = rows[0].len();
        for (i, r) in rows.iter().enumerate() {
            if r.len() != dims {
                return Err(ClassifyError::DimensionMismatch {
                    expected: dims,
                    got: r.len(),
                });
            }
            let _ = i;
        }
        Ok(TemplateMatrix { labels, rows, dims })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    /// Scores a combined page vector against every class and picks the
    /// argmax; ties resolve to the lowest class index.
    pub fn classify(&self, combined: &[f64]) -> Result<Classification, ClassifyError> {
        if combined.len() != self.dims {
            return Err(ClassifyError::DimensionMismatch {
                expected: self.dims,
                got: combined.len(),
            });
        }
        let mut scores = Vec::with_capacity(self.rows.len());
        for row in &self.rows {
            scores.push(cosine_similarity(row, combined)?);
        }
        let mut class_index = 0;
        for (i, &s) in scores.iter().enumerate() {
            if s > scores[class_index] {
                class_index = i;
            }
            let _ = i;
        }
        Ok(Classification {
            class_index,
            label: self.labels[class_index].clone(),
            scores,
        })
    }
}

// ── Bank construction from documents ─────────────────────────────────────────

/// Parameters for embedding pages: text weight and layout grid resolution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbedConfig {
    /// Text-part weight in [0, 1]; 0.5 weighs text and layout equally.
    pub alpha: f64,
    /// Layout histogram resolution (G x G cells).
    pub grid: usize,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        EmbedConfig {
            alpha: 0.5,
            grid: 8,
        }
    }
}

/// A bank fitted on template documents: knows how to embed a new page the
/// same way (same vocabulary, same grid, same weighting) before scoring it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BankModel {
    pub matrix: TemplateMatrix,
    pub tfidf: TfidfModel,
    pub config: EmbedConfig,
}

/// Joins entity texts in reading order into one classification string.
pub fn entity_text(entities: &[Entity]) -> String {
    entities
        .iter()
        .map(|e| e.text.as_str())
        .collect::<Vec<_>>()
        .join(" ")
}

impl BankModel {
    /// Fits TF-IDF on the template pages (each page's consolidated entities
    /// are one corpus document) and builds one combined text+layout row per
    /// template.
    pub fn fit(
        templates: &[(String, &[Entity], f64, f64)],
        config: EmbedConfig,
    ) -> Result<Self, ClassifyError> {
        let texts: Vec<String> = templates
            .iter()
            .map(|(_, ents, _, _)| entity_text(ents))
            .collect();
        let tfidf = TfidfModel::fit(&texts.iter().map(|s| s.as_str()).collect::<Vec<_>>())?;
        let mut labels = Vec::new();
        let mut rows = Vec::new();
        for ((label, ents, w, h), text) in templates.iter().zip(&texts) {
            labels.push(label.clone());
            let dv = DocVector::build_weighted(
                tfidf.transform(text),
                layout_vector(ents, *w, *h, config.grid),
                config.alpha,
            );
            rows.push(dv.combined);
        }
        Ok(BankModel {
            matrix: TemplateMatrix::new(labels, rows)?,
            tfidf,
            config,
        })
    }

    /// Embeds a page with the bank's own vocabulary and grid.
    pub fn embed(&self, entities: &[Entity], page_w: f64, page_h: f64) -> DocVector {
        DocVector::build_weighted(
            self.tfidf.transform(&entity_text(entities)),
            layout_vector(entities, page_w, page_h, self.config.grid),
            self.config.alpha,
        )
    }

    /// Embeds and classifies a page in one step.
    pub fn classify(
        &self,
        entities: &[Entity],
        page_w: f64,
        page_h: f64,
    ) -> Result<Classification, ClassifyError> {
        self.matrix.classify(&self.embed(entities, page_w, page_h).combined)
    }
}

// ── Bank files ───────────────────────────────────────────────────────────────

/// One class in a serialized template bank: its label, the template's raw
/// text, and optionally a precomputed embedding overriding TF-IDF.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BankClass {
    pub label: String,
    pub text: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vector: Option<Vec<f64>>,
}

/// The template bank file: `{"classes": [...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BankFile {
    pub classes: Vec<BankClass>,
}

/// A bank loaded from file. Text-backed classes share one TF-IDF model
/// fitted over all class texts; classes carrying a precomputed `vector` use
/// it as their row directly (all rows must agree on dimension).
#[derive(Debug, Clone)]
pub struct LoadedBank {
    pub matrix: TemplateMatrix,
    /// Present when at least one class went through TF-IDF; queries must be
    /// embedded with it. A pure precomputed-vector bank has no model, and
    /// queries must arrive as vectors of the bank's dimension.
    pub tfidf: Option<TfidfModel>,
}

/// Parses a bank file from bytes.
pub fn parse_bank_json(bytes: &[u8]) -> Result<BankFile, ClassifyError> {
    serde_json::from_slice(bytes).map_err(|e| ClassifyError::InvalidBank(e.to_string()))
}

/// Builds the scoring matrix for a bank file.
pub fn build_bank(file: &BankFile) -> Result<LoadedBank, ClassifyError> {
    if file.classes.is_empty() {
        return Err(ClassifyError::InvalidBank("no classes".into()));
    }
    let all_precomputed = file.classes.iter().all(|c| c.vector.is_some());
    let labels: Vec<String> = file.classes.iter().map(|c| c.label.clone()).collect();

    if all_precomputed {
        let rows: Vec<Vec<f64>> = file
            .classes
            .iter()
            .map(|c| c.vector.clone().expect("checked"))
            .collect();
        return Ok(LoadedBank {
            matrix: TemplateMatrix::new(labels, rows)?,
            tfidf: None,
        });
    }

    let texts: Vec<&str> = file.classes.iter().map(|c| c.text.as_str()).collect();
    let tfidf = TfidfModel::fit(&texts)?;
    let rows: Vec<Vec<f64>> = file
        .classes
        .iter()
        .map(|c| match &c.vector {
            Some(v) => v.clone(),
            None => tfidf.transform(&c.text),
        })
        .collect();
    Ok(LoadedBank {
        matrix: TemplateMatrix::new(labels, rows)?,
        tfidf: Some(tfidf),
    })
}
