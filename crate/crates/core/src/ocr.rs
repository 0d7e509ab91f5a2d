//! OCR ingestion: parsing raw engine output and consolidating word/fragment
//! tokens into logical entities.
//!
//! OCR engines emit text in small pieces — single words, sometimes single
//! characters — each with its own box. Downstream stages want whole fields
//! ("Date of Birth", "123 Main St"), so this module stitches pieces back
//! together with two pixel thresholds:
//!
//! - tokens belong to the same text line when both their top and bottom
//!   edges agree within `vertical_tol` (default 15 px);
//! - a token continues the entity to its left when the horizontal gap from
//!   the entity's trailing edge is at most `intra_word_gap` (default 60 px).
//!
//! Whether the merged text gets a space depends on how far apart the pieces
//! *start*: fragments that begin within `intra_word_gap` of the previous
//! piece are glued as one word (character-level splits), anything further
//! is a separate word inside the same entity.

use crate::geometry::{BBox, GeometryError, Point};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OcrError {
    /// Structurally invalid input: missing fields, wrong types, bad values.
    #[error("OCR schema error: {0}")]
    Schema(String),
    /// A token box violated geometric invariants.
    #[error("token {index}: {source}")]
    Geometry {
        index: usize,
        source: GeometryError,
    },
    /// The file parsed cleanly but contains no tokens. Warning-level: the
    /// parsed (empty) document is carried so callers may continue with it.
    #[error("document contains no tokens")]
    EmptyDocument { doc: OcrDocument },
}

// ── Types ────────────────────────────────────────────────────────────────────

/// One raw OCR fragment: a piece of text plus its box on the page.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    pub bbox: BBox,
    /// Engine confidence in [0, 1]; defaults to 1.0 when absent.
    #[serde(default = "default_confidence")]
    pub confidence: f64,
}

fn default_confidence() -> f64 {
    1.0
}

/// A parsed OCR page: tokens plus the pixel dimensions they refer to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcrDocument {
    pub source_id: String,
    pub page_width: f64,
    pub page_height: f64,
    pub tokens: Vec<Token>,
}

impl OcrDocument {
    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// A consolidated run of tokens: one logical field worth of text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entity {
    pub text: String,
    pub bbox: BBox,
    /// Top-left corner of `bbox`; the reference point for all distance
    /// computations downstream.
    pub anchor: Point,
    /// How many raw tokens were merged into this entity.
    pub member_count: usize,
    /// Minimum confidence over the merged tokens.
    pub confidence: f64,
}

impl Entity {
    fn from_token(t: &Token) -> Self {
        Entity {
            text: t.text.clone(),
            bbox: t.bbox,
            anchor: t.bbox.top_left(),
            member_count: 1,
            confidence: t.confidence,
        }
    }

    /// Reinterprets the entity as a single token, e.g. to feed a
    /// consolidated document through consolidation again.
    pub fn to_token(&self) -> Token {
        Token {
            text: self.text.clone(),
            bbox: self.bbox,
            confidence: self.confidence,
        }
    }
}

/// Pixel thresholds steering consolidation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConsolidationConfig {
    /// Max difference of top edges (and, separately, bottom edges) for two
    /// boxes to count as the same text line.
    pub vertical_tol: f64,
    /// Max horizontal gap (trailing edge to leading edge) bridged inside
    /// one entity; also the start-to-start distance below which two pieces
    /// are glued without a space.
    pub intra_word_gap: f64,
}

impl Default for ConsolidationConfig {
    fn default() -> Self {
        ConsolidationConfig {
            vertical_tol: 15.0,
            intra_word_gap: 60.0,
        }
    }
}

// ── Parsing ──────────────────────────────────────────────────────────────────

mod raw {
    //! Serde mirror of the input file format. Boxes come either as absolute
    //! pixels (`bbox`) or normalized to the page (`nbbox`); exactly one of
    //! the two must be present per token.
    use serde::Deserialize;

    #[derive(Deserialize)]
    pub struct File {
        pub source_id: String,
        pub page: Page,
        pub tokens: Vec<Token>,
    }

    #[derive(Deserialize)]
    pub struct Page {
        pub width: f64,
        pub height: f64,
    }

    #[derive(Deserialize)]
    pub struct Token {
        pub text: String,
        #[serde(default)]
        pub bbox: Option<[f64; 4]>,
        #[serde(default)]
        pub nbbox: Option<[f64; 4]>,
        #[serde(default)]
        pub confidence: Option<f64>,
    }
}

/// Parses an OCR JSON document from bytes.
///
/// Validates the schema (exactly one of `bbox`/`nbbox` per token, non-empty
/// text, positive page dimensions), converts normalized boxes to pixels and
/// checks every box against geometric invariants. A document with zero
/// tokens comes back as the warning-level [`OcrError::EmptyDocument`], which
/// carries the parsed document for callers that want to proceed.
pub fn parse_ocr_json(bytes: &[u8]) -> Result<OcrDocument, OcrError> {
    let raw: raw::File =
        serde_json::from_slice(bytes).map_err(|e| OcrError::Schema(e.to_string()))?;
    if !(raw.page.width > 0.0) || !(raw.page.height > 0.0) {
        return Err(OcrError::Schema(format!(
            "page dimensions must be positive, got {} x {}",
            raw.page.width, raw.page.height
        )));
    }
    let page = BBox::new(0.0, 0.0, raw.page.width, raw.page.height)
        .expect("positive page dimensions");

    let mut tokens = Vec::with_capacity(raw.tokens.len());
    for (index, t) in raw.tokens.iter().enumerate() {
        if t.text.trim().is_empty() {
            return Err(OcrError::Schema(format!(
                "token {index}: text is empty after trimming whitespace"
            )));
        }
        let [x0, y0, x1, y1] = match (&t.bbox, &t.nbbox) {
            (Some(b), None) => *b,
            (None, Some(n)) => [
                n[0] * raw.page.width,
                n[1] * raw.page.height,
                n[2] * raw.page.width,
                n[3] * raw.page.height,
            ],
            (Some(_), Some(_)) => {
                return Err(OcrError::Schema(format!(
                    "token {index}: both bbox and nbbox present"
                )));
            }
            (None, None) => {
                return Err(OcrError::Schema(format!(
                    "token {index}: neither bbox nor nbbox present"
                )));
            }
        };
        let bbox = BBox::new(x0, y0, x1, y1).map_err(|source| OcrError::Geometry {
            index,
            source,
        })?;
        if !bbox.intersects(&page) {
            return Err(OcrError::Geometry {
                index,
                source: GeometryError::InvertedBox {
                    x_min: x0,
                    y_min: y0,
                    x_max: x1,
                    y_max: y1,
                },
            });
        }
        let confidence = t.confidence.unwrap_or(1.0);
        if !(0.0..=1.0).contains(&confidence) {
            return Err(OcrError::Schema(format!(
                "token {index}: confidence {confidence} outside [0, 1]"
            )));
        }
        tokens.push(Token {
            text: t.text.clone(),
            bbox,
            confidence,
        });
    }

    let doc = OcrDocument {
        source_id: raw.source_id,
        page_width: raw.page.width,
        page_height: raw.page.height,
        tokens,
    };
    if doc.tokens.is_empty() {
        return Err(OcrError::EmptyDocument { doc });
    }
    Ok(doc)
}

/// Unwraps a parse result, downgrading the empty-document case to the
/// (empty) document itself. Other errors pass through.
pub fn parse_ocr_json_lenient(bytes: &[u8]) -> Result<OcrDocument, OcrError> {
    match parse_ocr_json(bytes) {
        Err(OcrError::EmptyDocument { doc }) => Ok(doc),
        other => other,
    }
}

/// Renders a coordinate for file output: integral values print as JSON
/// integers (pixel coordinates normally are), everything else as floats.
pub(crate) fn json_num(v: f64) -> serde_json::Value {
    if v.fract() == 0.0 && v.abs() < 9e15 {
        serde_json::Value::from(v as i64)
    } else {
        serde_json::Value::from(v)
    }
}

/// Serializes a document back to the pixel-coordinate JSON format.
/// Confidence is written only when it carries information (< 1.0).
pub fn ocr_document_to_json(doc: &OcrDocument) -> Vec<u8> {
    use serde_json::{json, Value};
    let tokens: Vec<Value> = doc
        .tokens
        .iter()
        .map(|t| {
            let mut obj = json!({
                "text": t.text,
                "bbox": [
                    json_num(t.bbox.x_min),
                    json_num(t.bbox.y_min),
                    json_num(t.bbox.x_max),
                    json_num(t.bbox.y_max),
                ],
            });
            if t.confidence < 1.0 {
                obj["confidence"] = Value::from(t.confidence);
            }
            obj
        })
        .collect();
    let file = json!({
        "source_id": doc.source_id,
        "page": { "width": json_num(doc.page_width), "height": json_num(doc.page_height) },
        "tokens": tokens,
    });
    let mut out = serde_json::to_vec_pretty(&file).expect("document serializes");
    out.push(b'\n');
    out
}

// ── Reading order ────────────────────────────────────────────────────────────

/// Sorts tokens into reading order: rows first (top to bottom, bucketed so
/// that boxes whose `y_min` differ by at most `vertical_tol` share a row),
/// then left to right within each row. Stable within ties.
pub fn sort_reading_order(tokens: &[Token], vertical_tol: f64) -> Vec<Token> {
    let mut by_top: Vec<&Token> = tokens.iter().collect();
    by_top.sort_by(|a, b| a.bbox.y_min.total_cmp(&b.bbox.y_min));

    let mut rows: Vec<Vec<&Token>> = Vec::new();
    let mut row_top = f64::NEG_INFINITY;
    for t in by_top {
        if rows.is_empty() || t.bbox.y_min - row_top > vertical_tol {
            // This token opens a new row; its top becomes the row reference.
            row_top = t.bbox.y_min;
            rows.push(vec![t]);
        } else {
            rows.last_mut().expect("non-empty").push(t);
        }
    }
    let mut out = Vec::with_capacity(tokens.len());
    for mut row in rows {
        row.sort_by(|a, b| a.bbox.x_min.total_cmp(&b.bbox.x_min));
        out.extend(row.into_iter().cloned());
    }
    out
}

// ── Consolidation ────────────────────────────────────────────────────────────

/// True when a candidate token may extend `entity` on the same text line.
fn same_line(entity: &Entity, cand: &Token, cfg: &ConsolidationConfig) -> bool {
    (entity.bbox.y_min - cand.bbox.y_min).abs() <= cfg.vertical_tol
        && (entity.bbox.y_max - cand.bbox.y_max).abs() <= cfg.vertical_tol
}

/// Merges OCR tokens into entities.
///
/// Walks the tokens in reading order, greedily growing the current entity:
/// a token joins when it sits on the same line (tops and bottoms within
/// `vertical_tol`) and starts no more than `intra_word_gap` past the
/// entity's trailing edge. Gluing versus spacing is decided by the
/// start-to-start distance from the most recently merged token: fragments
/// closer than `intra_word_gap` are two halves of one word.
///
/// Every input token lands in exactly one entity, each entity box contains
/// all of its members, and feeding the output back in (entities as tokens)
/// is a fixed point.
pub fn consolidate(doc: &OcrDocument, cfg: &ConsolidationConfig) -> Vec<Entity> {
    let ordered = sort_reading_order(&doc.tokens, cfg.vertical_tol);
    let mut entities: Vec<Entity> = Vec::new();
    // x_min of the most recently merged member of the open entity; the
    // start-to-start reference for the glue-or-space decision.
    let mut last_start = 0.0f64;

    for token in &ordered {
        let extend = entities.last().is_some_and(|open| {
            same_line(open, token, cfg)
                && token.bbox.x_min - open.bbox.x_max <= cfg.intra_word_gap
                && token.bbox.x_min >= open.bbox.x_min
        });
        if extend {
            let open = entities.last_mut().expect("just checked");
            if token.bbox.x_min - last_start < cfg.intra_word_gap {
                // Character continuation: halves of one word, no space.
                open.text.push_str(&token.text);
            } else {
                open.text.push(' ');
                open.text.push_str(&token.text);
            }
            open.bbox = open.bbox.merge(&token.bbox);
            open.anchor = open.bbox.top_left();
            open.member_count += 1;
            open.confidence = open.confidence.min(token.confidence);
            last_start = token.bbox.x_min;
        } else {
            entities.push(Entity::from_token(token));
            last_start = token.bbox.x_min;
        }
    }
    entities
}
