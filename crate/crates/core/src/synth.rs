//! Synthetic form generation: templates, filled-in instances, and the
//! noise model that distorts them.
//!
//! Real scanned-form corpora are hard to come by, so the test and
//! benchmark substrate is generated: deterministic template layouts (keys
//! in columns with value boxes to their right), filled forms derived from
//! a template plus a seeded [`NoiseModel`], and ground truth recorded at
//! generation time. Everything is reproducible bit-for-bit from a seed.
//!
//! The noise model covers what scanners actually do to paper: global
//! rotation and scale (the page sat crooked on the glass), per-value
//! jitter (handwriting does not start exactly at the box corner), token
//! splitting (OCR fragments words), missing values, stray text, and a
//! fold-crease warp band (mailed forms arrive tri-folded and the crease
//! bulges on the glass) that no single projective transform can undo —
//! the case piecewise correction exists for.

use crate::assign::{KieEntry, KieTemplate};
use crate::geometry::{BBox, Point};
use crate::ocr::{OcrDocument, Token};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("template spec has no keys")]
    EmptySpec,
    #[error("unsupported column count {columns}; layouts use 1 or 2 columns")]
    BadColumns { columns: usize },
    #[error("layout overflows the page: {what} reaches {got:.0}, limit {limit:.0}")]
    LayoutOverflow {
        what: &'static str,
        got: f64,
        limit: f64,
    },
    #[error("entries {a} and {b} overlap")]
    Overlap { a: usize, b: usize },
    #[error("invalid noise model: {0}")]
    BadNoise(String),
    #[error("ground truth does not parse: {0}")]
    BadTruth(String),
}

// ── Layout model ─────────────────────────────────────────────────────────────

/// Printed key text metrics: monospace-ish glyph boxes at 200 dpi.
const KEY_CHAR_W: f64 = 13.0;
const KEY_H: f64 = 28.0;
/// Horizontal gap between a key's right edge and its value box.
const VALUE_GAP: f64 = 80.0;
const VALUE_W: f64 = 330.0;
const VALUE_H: f64 = 34.0;
/// First row baseline and the pitch between rows inside a section.
const TOP_Y: f64 = 200.0;
const ROW_PITCH: f64 = 64.0;
/// Left edges of the one or two key columns.
const COL_X: [f64; 2] = [130.0, 890.0];

/// Box of a printed key whose top-left sits at `p`.
fn key_box(p: Point, text: &str) -> BBox {
    let w = KEY_CHAR_W * text.chars().count() as f64;
    BBox::new(p.x, p.y, p.x + w, p.y + KEY_H).expect("key box is well-formed")
}

/// Box a filled-in value token occupies, anchored at the value box corner.
fn value_token_box(top_left: Point, text: &str) -> BBox {
    let w = KEY_CHAR_W * text.chars().count() as f64;
    BBox::new(top_left.x, top_left.y, top_left.x + w, top_left.y + KEY_H)
        .expect("value box is well-formed")
}

/// Layout description of one synthetic template.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateSpec {
    pub label: String,
    pub keys: Vec<String>,
    /// 1 or 2 key columns.
    pub columns: usize,
    /// Rows per visual section; sections are separated by `section_gap`.
    pub rows_per_section: usize,
    pub section_gap: f64,
    pub page_width: f64,
    pub page_height: f64,
}

impl TemplateSpec {
    pub fn new(label: &str, keys: &[&str], columns: usize) -> Self {
        TemplateSpec {
            label: label.into(),
            keys: keys.iter().map(|k| k.to_string()).collect(),
            columns,
            rows_per_section: 2,
            section_gap: 380.0,
            page_width: 1700.0,
            page_height: 2200.0,
        }
    }

    fn with_section_gap(mut self, gap: f64) -> Self {
        self.section_gap = gap;
        self
    }
}

/// The six stock templates: overlapping key vocabularies but distinct key
/// sets and layouts, so both the text and the layout halves of the
/// classifier have something to distinguish.
pub fn default_specs() -> Vec<TemplateSpec> {
    vec![
        TemplateSpec::new(
            "accident_claim",
            &[
                "Claim Number",
                "Policy Number",
                "Last Name",
                "First Name",
                "Date of Loss",
                "Phone Number",
                "Vehicle Make",
                "Vehicle Model",
                "Accident Location",
                "Police Report",
            ],
            2,
        )
        .with_section_gap(500.0),
        TemplateSpec::new(
            "patient_intake",
            &[
                "Patient Name",
                "Date of Birth",
                "Member ID",
                "Insurance Provider",
                "Emergency Contact",
                "Phone Number",
                "Primary Physician",
                "Visit Reason",
            ],
            1,
        )
        .with_section_gap(360.0),
        TemplateSpec::new(
            "invoice_record",
            &[
                "Invoice Number",
                "Invoice Date",
                "Customer Name",
                "Order Total",
                "Tax Amount",
                "Due Date",
                "Account Manager",
            ],
            1,
        ),
        TemplateSpec::new(
            "job_application",
            &[
                "Applicant Name",
                "Email Address",
                "Phone Number",
                "Position Applied",
                "Available Date",
                "Salary Expected",
                "Referred By",
                "Previous Employer",
                "Years Experience",
                "Signature Date",
            ],
            2,
        )
        .with_section_gap(500.0),
        TemplateSpec::new(
            "consent_release",
            &[
                "Full Name",
                "Date of Birth",
                "Procedure Name",
                "Attending Physician",
                "Witness Name",
                "Consent Date",
                "Record Number",
            ],
            1,
        ),
        TemplateSpec::new(
            "shipping_manifest",
            &[
                "Tracking Number",
                "Ship Date",
                "Carrier Name",
                "Origin City",
                "Origin State",
                "Destination City",
                "Destination State",
                "Package Weight",
                "Declared Value",
            ],
            2,
        )
        .with_section_gap(500.0),
    ]
}

/// Builds a template from a spec: keys flow down the first column, then
/// the second; each key's value box sits to its right. Also emits the
/// blank form as an OCR document (just the printed keys), which is what
/// the classification bank is built from.
///
/// The seed staggers each row by a pixel or two, the way separately
/// typeset lines never sit on a perfect grid; layout and stagger are
/// fully determined by (spec, seed).
pub fn generate_template(
    spec: &TemplateSpec,
    seed: u64,
) -> Result<(KieTemplate, OcrDocument), SynthError> {
    if spec.keys.is_empty() {
        return Err(SynthError::EmptySpec);
    }
    if !(1..=2).contains(&spec.columns) {
        return Err(SynthError::BadColumns {
            columns: spec.columns,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = spec.keys.len();
    let rows_per_col = n.div_ceil(spec.columns);

    let mut entries = Vec::with_capacity(n);
    let mut tokens = Vec::with_capacity(n);
    for (i, key) in spec.keys.iter().enumerate() {
        let col = i / rows_per_col;
        let row = i % rows_per_col;
        let section = row / spec.rows_per_section;
        let stagger = rng.random_range(-2..=2) as f64;
        let y = TOP_Y + row as f64 * ROW_PITCH + section as f64 * spec.section_gap + stagger;
        // Single-column layouts indent sections in a repeating pattern,
        // the way nested subsections are typeset. It also spreads the key
        // anchors across several vertical lines, which matters downstream:
        // alignment needs anchors in general position, with enough
        // horizontal spread, to estimate a transform that holds where the
        // values sit.
        let indent = if spec.columns == 1 {
            [0.0, 320.0, 480.0][section % 3]
        } else {
            0.0
        };
        let key_point = Point::new(COL_X[col] + indent, y);
        let kb = key_box(key_point, key);
        let value_bbox = BBox::new(
            kb.x_max + VALUE_GAP,
            y - 3.0,
            kb.x_max + VALUE_GAP + VALUE_W,
            y - 3.0 + VALUE_H,
        )
        .expect("value box is well-formed");
        if value_bbox.x_max > spec.page_width - 40.0 {
            return Err(SynthError::LayoutOverflow {
                what: "value box right edge",
                got: value_bbox.x_max,
                limit: spec.page_width - 40.0,
            });
        }
        if value_bbox.y_max > spec.page_height - 100.0 {
            return Err(SynthError::LayoutOverflow {
                what: "value box bottom edge",
                got: value_bbox.y_max,
                limit: spec.page_height - 100.0,
            });
        }
        entries.push(KieEntry {
            key_text: key.clone(),
            key_point,
            value_bbox,
        });
        tokens.push(Token {
            text: key.clone(),
            bbox: kb,
            confidence: 1.0,
        });
    }

    // Keys and value boxes must all be disjoint, or the layout is
    // ambiguous by construction.
    let all_boxes: Vec<(usize, BBox)> = entries
        .iter()
        .enumerate()
        .flat_map(|(i, e)| [(i, key_box(e.key_point, &e.key_text)), (i, e.value_bbox)])
        .collect();
    for (a, &(ia, ba)) in all_boxes.iter().enumerate() {
        for &(ib, bb) in &all_boxes[a + 1..] {
            if ia != ib && ba.intersects(&bb) {
                return Err(SynthError::Overlap { a: ia, b: ib });
            }
        }
    }

    let doc = OcrDocument {
        source_id: format!("{}-template", spec.label),
        page_width: spec.page_width,
        page_height: spec.page_height,
        tokens,
    };
    Ok((
        KieTemplate {
            class_label: spec.label.clone(),
            entries,
        },
        doc,
    ))
}

// ── Noise model ──────────────────────────────────────────────────────────────

/// Everything that separates a generated scan from its template.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseModel {
    /// Page rotation range in degrees, sampled uniformly.
    pub rotation_deg: (f64, f64),
    /// Isotropic scale range about the page center.
    pub scale: (f64, f64),
    /// Std-dev of the per-value placement offset in pixels.
    pub jitter_px: f64,
    /// Probability that a token is fragmented into two pieces.
    pub token_split_prob: f64,
    /// Probability that a value slot is actually filled in.
    pub fill_prob: f64,
    /// Stray entities (stamps, scribbles, page furniture) per form.
    pub distractor_count: usize,
    /// Peak amplitude of the fold-crease warp band in pixels. A horizontal
    /// band around the fold line shifts sideways (and slightly down) while
    /// the rest of the page stays put; a projective transform cannot
    /// represent it, so it is what the piecewise correction stage earns
    /// its keep on.
    pub warp_px: f64,
    pub seed: u64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel {
            rotation_deg: (-8.0, 8.0),
            scale: (0.84, 1.16),
            jitter_px: 2.0,
            token_split_prob: 0.15,
            fill_prob: 0.9,
            distractor_count: 5,
            warp_px: 105.0,
            seed: 1,
        }
    }
}

impl NoiseModel {
    /// A model that distorts nothing: every slot filled, no geometry or
    /// token noise. Generated forms coincide with their template exactly.
    pub fn noiseless(seed: u64) -> Self {
        NoiseModel {
            rotation_deg: (0.0, 0.0),
            scale: (1.0, 1.0),
            jitter_px: 0.0,
            token_split_prob: 0.0,
            fill_prob: 1.0,
            distractor_count: 0,
            warp_px: 0.0,
            seed,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let prob = |name: &str, p: f64| {
            if (0.0..=1.0).contains(&p) {
                Ok(())
            } else {
                Err(SynthError::BadNoise(format!("{name} = {p} not in [0, 1]")))
            }
        };
        prob("token_split_prob", self.token_split_prob)?;
        prob("fill_prob", self.fill_prob)?;
        if self.rotation_deg.0 > self.rotation_deg.1 {
            return Err(SynthError::BadNoise(format!(
                "rotation range {:?} is reversed",
                self.rotation_deg
            )));
        }
        if self.scale.0 > self.scale.1 || self.scale.0 <= 0.0 {
            return Err(SynthError::BadNoise(format!(
                "scale range {:?} must be ordered and positive",
                self.scale
            )));
        }
        if self.jitter_px < 0.0 || self.warp_px < 0.0 {
            return Err(SynthError::BadNoise(
                "jitter_px and warp_px must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

// ── Ground truth ─────────────────────────────────────────────────────────────

/// What one generated form actually contains, recorded at generation time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub label: String,
    pub entries: Vec<TruthEntry>,
}

/// Truth for one template entry of one form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthEntry {
    pub filled: bool,
    pub value: Option<String>,
    /// Indices into the generated document's token list holding the value
    /// (two when the token was split). Empty for unfilled entries.
    pub token_indices: Vec<usize>,
}

pub fn ground_truth_to_json(t: &GroundTruth) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(t).expect("truth serializes");
    out.push(b'\n');
    out
}

pub fn parse_ground_truth_json(bytes: &[u8]) -> Result<GroundTruth, SynthError> {
    serde_json::from_slice(bytes).map_err(|e| SynthError::BadTruth(e.to_string()))
}

// ── Filled-form generation ───────────────────────────────────────────────────

/// Value-text pools. Values are single tokens on purpose: OCR value
/// fragments must reassemble to exactly the recorded truth, so the pools
/// avoid internal spaces.
const SURNAMES: &[&str] = &[
    "Alvarez", "Chen", "Okafor", "Lindqvist", "Marchetti", "Osei", "Tanaka", "Whitfield",
    "Iqbal", "Deshmukh", "Kowalski", "Reyes", "Haugen", "Petrov", "Nakamura", "Adeyemi",
    "Fontaine", "Gallagher", "Herrera", "Soto",
];
const WORDS: &[&str] = &[
    "Sedan", "Coupe", "Hatchback", "Denver", "Portland", "Tulsa", "Fresno", "Standard",
    "Premium", "Express", "Checkup", "Renewal", "Followup", "Overnight",
];
const STATES: &[&str] = &["CO", "WA", "TX", "NM", "OR", "AZ", "UT", "KS"];
const DISTRACTORS: &[&str] = &[
    "APPROVED", "VOID", "COPY", "RECEIVED", "CONFIDENTIAL", "DRAFT", "FILED", "Page-1",
    "Rev-7.2", "Batch-88", "Scan-0042", "Initials",
];

/// Synthesizes a plausible single-token value for a key.
fn synth_value(rng: &mut ChaCha8Rng, key: &str) -> String {
    let k = key.to_lowercase();
    let pick = |rng: &mut ChaCha8Rng, pool: &[&str]| pool[rng.random_range(0..pool.len())].to_string();
    if k.contains("date") || k.contains("birth") {
        format!(
            "{:02}/{:02}/{}",
            rng.random_range(1..=12),
            rng.random_range(1..=28),
            rng.random_range(1950..=2015)
        )
    } else if k.contains("phone") || k.contains("fax") {
        format!("555-{:04}", rng.random_range(0..=9999))
    } else if k.contains("email") {
        format!("{}@example.com", pick(rng, SURNAMES).to_lowercase())
    } else if k.contains("total") || k.contains("amount") || k.contains("salary") || k.contains("value") {
        format!("${}.{:02}", rng.random_range(40..=9500), rng.random_range(0..=99))
    } else if k.contains("weight") || k.contains("years") || k.contains("experience") {
        format!("{}.{}", rng.random_range(1..=80), rng.random_range(0..=9))
    } else if k.contains("state") {
        pick(rng, STATES)
    } else if k.contains("number")
        || k.contains("id")
        || k.contains("license")
        || k.contains("policy")
        || k.contains("report")
        || k.contains("record")
    {
        let letter = |rng: &mut ChaCha8Rng| (b'A' + rng.random_range(0..26u8)) as char;
        format!(
            "{}{}-{:05}",
            letter(rng),
            letter(rng),
            rng.random_range(0..=99999)
        )
    } else if k.contains("name")
        || k.contains("contact")
        || k.contains("physician")
        || k.contains("by")
        || k.contains("employer")
        || k.contains("manager")
        || k.contains("carrier")
    {
        pick(rng, SURNAMES)
    } else {
        pick(rng, WORDS)
    }
}

/// The page-warp field: a horizontal crease band, zero above and below.
fn warp_offset(p: Point, _w: f64, h: f64, amplitude: f64) -> (f64, f64) {
    // Fold crease: mailed forms arrive tri-folded, and the crease band
    // bulges when the page is scanned. Content in the band shifts almost
    // uniformly (mostly sideways, a little down), content outside it not
    // at all, with a cosine ramp between. The displacement depends only
    // on the vertical position, so a key and the value printed on its row
    // move together.
    const FOLD_V: f64 = 0.42;
    const PLATEAU: f64 = 0.07;
    const RAMP: f64 = 0.10;
    let v = (p.y / h).clamp(0.0, 1.0);
    let d = ((v - FOLD_V).abs() - PLATEAU).max(0.0);
    let bump = if d >= RAMP {
        0.0
    } else {
        0.5 * (1.0 + (PI * d / RAMP).cos())
    };
    (amplitude * bump, 0.375 * amplitude * bump)
}

/// What a placed token is, so truth can refer back to it after splitting.
#[derive(Clone)]
struct Placed {
    text: String,
    bbox: BBox,
    /// Template entry index when this token is a filled-in value.
    value_of: Option<usize>,
}

/// Generates one filled scan of a template under the given noise model.
///
/// Deterministic in (template, noise): the same inputs produce the same
/// document byte for byte. The noise model must have passed
/// [`NoiseModel::validate`].
pub fn generate_filled_form(t: &KieTemplate, noise: &NoiseModel) -> (OcrDocument, GroundTruth) {
    debug_assert!(noise.validate().is_ok(), "caller validates the noise model");
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    // Page geometry comes from the stock layout; templates generated by
    // this module always use it.
    let (page_w, page_h) = (1700.0, 2200.0);

    let rotation = rng
        .random_range(noise.rotation_deg.0..=noise.rotation_deg.1)
        .to_radians();
    let scale = rng.random_range(noise.scale.0..=noise.scale.1);
    let jitter = Normal::new(0.0, noise.jitter_px.max(f64::EPSILON)).expect("std dev is finite");

    // Phase 1: place printed keys and filled values in template frame.
    let mut placed: Vec<Placed> = Vec::new();
    let mut truth_entries: Vec<TruthEntry> = Vec::with_capacity(t.entries.len());
    for (i, entry) in t.entries.iter().enumerate() {
        placed.push(Placed {
            text: entry.key_text.clone(),
            bbox: key_box(entry.key_point, &entry.key_text),
            value_of: None,
        });
        if rng.random_bool(noise.fill_prob) {
            let value = synth_value(&mut rng, &entry.key_text);
            let (dx, dy) = if noise.jitter_px > 0.0 {
                (jitter.sample(&mut rng), jitter.sample(&mut rng))
            } else {
                (0.0, 0.0)
            };
            let top_left = Point::new(
                entry.value_bbox.x_min + dx,
                entry.value_bbox.y_min + dy,
            );
            placed.push(Placed {
                bbox: value_token_box(top_left, &value),
                text: value.clone(),
                value_of: Some(i),
            });
            truth_entries.push(TruthEntry {
                filled: true,
                value: Some(value),
                token_indices: Vec::new(), // filled in after splitting
            });
        } else {
            truth_entries.push(TruthEntry {
                filled: false,
                value: None,
                token_indices: Vec::new(),
            });
        }
    }
    for _ in 0..noise.distractor_count {
        let text = DISTRACTORS[rng.random_range(0..DISTRACTORS.len())].to_string();
        let w = KEY_CHAR_W * text.chars().count() as f64;
        let x = rng.random_range(60.0..page_w - 60.0 - w);
        let y = rng.random_range(60.0..page_h - 120.0);
        placed.push(Placed {
            text,
            bbox: BBox::new(x, y, x + w, y + KEY_H).expect("distractor box is well-formed"),
            value_of: None,
        });
    }

    // Phase 2: fragment tokens the way OCR sometimes does. The cut stays
    // inside the leading run of non-space characters and within its first
    // four, so the fragments start close enough to be re-joined without a
    // space later.
    let mut split: Vec<Placed> = Vec::new();
    let mut truth_tokens: Vec<(usize, Vec<usize>)> = Vec::new();
    for p in placed {
        let run = p.text.chars().take_while(|c| !c.is_whitespace()).count();
        let indices_start = split.len();
        if noise.token_split_prob > 0.0 && run >= 2 && rng.random_bool(noise.token_split_prob) {
            let chars: Vec<char> = p.text.chars().collect();
            // Short head fragments only: the two pieces must stay close
            // enough that consolidation re-glues them even on a page
            // scanned at the top of the scale range.
            let cut = rng.random_range(1..=(run - 1).min(3));
            let frac = cut as f64 / chars.len() as f64;
            let cut_x = p.bbox.x_min + p.bbox.width() * frac;
            let head: String = chars[..cut].iter().collect();
            let tail: String = chars[cut..].iter().collect();
            split.push(Placed {
                text: head,
                bbox: BBox::new(p.bbox.x_min, p.bbox.y_min, cut_x, p.bbox.y_max)
                    .expect("head fragment is well-formed"),
                value_of: p.value_of,
            });
            split.push(Placed {
                text: tail,
                bbox: BBox::new(cut_x + 2.0, p.bbox.y_min, p.bbox.x_max + 2.0, p.bbox.y_max)
                    .expect("tail fragment is well-formed"),
                value_of: p.value_of,
            });
        } else {
            split.push(p);
        }
        if let Some(entry) = split[indices_start].value_of {
            truth_tokens.push((entry, (indices_start..split.len()).collect()));
        }
    }

    // Phase 3: the scanner's view — rotate and scale about the page
    // center, add the warp field, and round to integer pixels.
    let (sin, cos) = rotation.sin_cos();
    let (cx, cy) = (page_w / 2.0, page_h / 2.0);
    let project = |p: Point| -> Point {
        let (dx, dy) = (p.x - cx, p.y - cy);
        let q = Point::new(
            cx + scale * (cos * dx - sin * dy),
            cy + scale * (sin * dx + cos * dy),
        );
        let (wx, wy) = warp_offset(q, page_w, page_h, noise.warp_px);
        Point::new((q.x + wx).round(), (q.y + wy).round())
    };
    let tokens: Vec<Token> = split
        .iter()
        .map(|p| {
            let corners = [
                Point::new(p.bbox.x_min, p.bbox.y_min),
                Point::new(p.bbox.x_max, p.bbox.y_min),
                Point::new(p.bbox.x_min, p.bbox.y_max),
                Point::new(p.bbox.x_max, p.bbox.y_max),
            ]
            .map(project);
            let xs = corners.map(|c| c.x);
            let ys = corners.map(|c| c.y);
            let min = |v: [f64; 4]| v.into_iter().fold(f64::INFINITY, f64::min);
            let max = |v: [f64; 4]| v.into_iter().fold(f64::NEG_INFINITY, f64::max);
            // The scanner only sees the glass: boxes pushed past the page
            // edge by rotation or scale are cropped to it, like any real
            // capture would be. (Document invariant: every token box
            // intersects the page.)
            let clamp_x = |v: f64| v.clamp(0.0, page_w);
            let clamp_y = |v: f64| v.clamp(0.0, page_h);
            Token {
                text: p.text.clone(),
                bbox: BBox::new(
                    clamp_x(min(xs)),
                    clamp_y(min(ys)),
                    clamp_x(max(xs)),
                    clamp_y(max(ys)),
                )
                .expect("projected box is well-formed"),
                confidence: 1.0,
            }
        })
        .collect();

    for (entry, indices) in truth_tokens {
        truth_entries[entry].token_indices = indices;
    }
    debug_assert!(truth_entries
        .iter()
        .all(|e| e.token_indices.iter().all(|&i| i < tokens.len())));

    (
        OcrDocument {
            source_id: format!("{}-{:08x}", t.class_label, noise.seed),
            page_width: page_w,
            page_height: page_h,
            tokens,
        },
        GroundTruth {
            label: t.class_label.clone(),
            entries: truth_entries,
        },
    )
}

// ── Batch generation ─────────────────────────────────────────────────────────

/// One generated form together with which template produced it.
#[derive(Debug, Clone)]
pub struct FormCase {
    pub template_index: usize,
    pub doc: OcrDocument,
    pub truth: GroundTruth,
}

/// A full synthetic dataset: the templates (with their blank scans, for
/// the classification bank) and the generated filled forms.
#[derive(Debug, Clone)]
pub struct Batch {
    pub templates: Vec<(KieTemplate, OcrDocument)>,
    pub forms: Vec<FormCase>,
}

/// Generates `per_template` forms for each spec. Per-form seeds are
/// derived from the model's base seed, so the whole batch is reproducible
/// and each form still gets an independent random stream.
pub fn generate_batch(
    specs: &[TemplateSpec],
    per_template: usize,
    noise: &NoiseModel,
) -> Result<Batch, SynthError> {
    noise.validate()?;
    let mut templates = Vec::with_capacity(specs.len());
    for (ti, spec) in specs.iter().enumerate() {
        templates.push(generate_template(spec, noise.seed.wrapping_add(ti as u64))?);
    }
    let mut forms = Vec::with_capacity(specs.len() * per_template);
    for (ti, (template, _)) in templates.iter().enumerate() {
        for k in 0..per_template {
            let idx = (ti * per_template + k) as u64;
            let form_noise = noise.with_seed(noise.seed.wrapping_add(1000).wrapping_add(idx));
            let (doc, truth) = generate_filled_form(template, &form_noise);
            forms.push(FormCase {
                template_index: ti,
                doc,
                truth,
            });
        }
    }
    Ok(Batch { templates, forms })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::euclidean;
    use crate::ocr::{consolidate, ConsolidationConfig};
    use std::collections::BTreeSet;

    #[test]
    fn stock_specs_build_valid_templates() {
        let specs = default_specs();
        assert_eq!(specs.len(), 6);
        for spec in &specs {
            let (t, doc) = generate_template(spec, 3).unwrap();
            assert_eq!(t.entries.len(), spec.keys.len());
            assert_eq!(doc.tokens.len(), spec.keys.len());
            assert_eq!(t.class_label, spec.label);
        }
    }

    #[test]
    fn template_generation_is_deterministic() {
        let spec = &default_specs()[0];
        let a = generate_template(spec, 42).unwrap();
        let b = generate_template(spec, 42).unwrap();
        assert_eq!(a, b);
        let c = generate_template(spec, 43).unwrap();
        assert_ne!(a.0, c.0, "different seeds should stagger differently");
    }

    #[test]
    fn empty_spec_is_rejected() {
        let spec = TemplateSpec::new("empty", &[], 1);
        assert_eq!(generate_template(&spec, 0).unwrap_err(), SynthError::EmptySpec);
    }

    #[test]
    fn too_many_rows_overflow_the_page() {
        let keys: Vec<String> = (0..40).map(|i| format!("Field {i}")).collect();
        let refs: Vec<&str> = keys.iter().map(String::as_str).collect();
        let spec = TemplateSpec::new("tall", &refs, 1);
        assert!(matches!(
            generate_template(&spec, 0).unwrap_err(),
            SynthError::LayoutOverflow { .. }
        ));
    }

    #[test]
    fn noiseless_form_sits_exactly_on_the_template() {
        let (t, _) = generate_template(&default_specs()[1], 5).unwrap();
        let (doc, truth) = generate_filled_form(&t, &NoiseModel::noiseless(9));
        assert_eq!(truth.entries.len(), t.entries.len());
        assert!(truth.entries.iter().all(|e| e.filled));
        for (entry, te) in t.entries.iter().zip(&truth.entries) {
            assert_eq!(te.token_indices.len(), 1);
            let tok = &doc.tokens[te.token_indices[0]];
            assert_eq!(Some(&tok.text), te.value.as_ref());
            // Value text starts exactly at the value box corner.
            assert_eq!(tok.bbox.x_min, entry.value_bbox.x_min);
            assert_eq!(tok.bbox.y_min, entry.value_bbox.y_min);
        }
        // Key tokens are also placed verbatim.
        for entry in &t.entries {
            assert!(doc
                .tokens
                .iter()
                .any(|tok| tok.text == entry.key_text
                    && tok.bbox.top_left() == entry.key_point));
        }
    }

    #[test]
    fn filled_form_generation_is_deterministic() {
        let (t, _) = generate_template(&default_specs()[0], 5).unwrap();
        let noise = NoiseModel::default().with_seed(77);
        let a = generate_filled_form(&t, &noise);
        let b = generate_filled_form(&t, &noise);
        assert_eq!(a, b);
        let c = generate_filled_form(&t, &noise.with_seed(78));
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn three_degree_rotation_displaces_far_corners_past_fifty_pixels() {
        let (t, _) = generate_template(&default_specs()[0], 5).unwrap();
        let mut noise = NoiseModel::noiseless(4);
        noise.rotation_deg = (3.0, 3.0);
        let (doc, _) = generate_filled_form(&t, &noise);
        // The top-left key sits ~1150 px from the page center; a 3° turn
        // moves it by 2·sin(1.5°)·1150 ≈ 60 px.
        let entry = &t.entries[0];
        let moved = doc
            .tokens
            .iter()
            .find(|tok| tok.text == entry.key_text)
            .unwrap();
        let displacement = euclidean(moved.bbox.top_left(), entry.key_point);
        assert!(
            displacement >= 50.0,
            "corner key moved only {displacement:.1} px"
        );
    }

    #[test]
    fn split_tokens_consolidate_back_to_the_original_texts() {
        let (t, _) = generate_template(&default_specs()[3], 5).unwrap();
        let mut noise = NoiseModel::noiseless(21);
        noise.token_split_prob = 1.0;
        let (doc, truth) = generate_filled_form(&t, &noise);
        assert!(
            doc.tokens.len() > t.entries.len() * 2,
            "probability 1 should split essentially every token"
        );
        let entities = consolidate(&doc, &ConsolidationConfig::default());
        let got: BTreeSet<&str> = entities.iter().map(|e| e.text.as_str()).collect();
        for entry in &t.entries {
            assert!(got.contains(entry.key_text.as_str()), "lost key {:?}", entry.key_text);
        }
        for te in &truth.entries {
            let v = te.value.as_deref().unwrap();
            assert!(got.contains(v), "lost value {v:?}");
        }
    }

    #[test]
    fn unfilled_forms_contain_only_keys() {
        let (t, _) = generate_template(&default_specs()[2], 5).unwrap();
        let mut noise = NoiseModel::noiseless(3);
        noise.fill_prob = 0.0;
        let (doc, truth) = generate_filled_form(&t, &noise);
        assert_eq!(doc.tokens.len(), t.entries.len());
        assert!(truth.entries.iter().all(|e| !e.filled && e.value.is_none()));
    }

    #[test]
    fn warp_shifts_the_crease_band_and_pins_the_rest() {
        let (t, _) = generate_template(&default_specs()[1], 5).unwrap();
        let mut noise = NoiseModel::noiseless(8);
        noise.warp_px = 140.0;
        let (doc, _) = generate_filled_form(&t, &noise);
        let reference = generate_filled_form(&t, &NoiseModel::noiseless(8)).0;
        let mut in_band_peak: f64 = 0.0;
        let mut outside_peak: f64 = 0.0;
        for (a, b) in doc.tokens.iter().zip(&reference.tokens) {
            let d = euclidean(a.bbox.top_left(), b.bbox.top_left());
            let v = b.bbox.top_left().y / reference.page_height;
            if (v - 0.42).abs() < 0.12 {
                in_band_peak = in_band_peak.max(d);
            } else if (v - 0.42).abs() > 0.23 {
                outside_peak = outside_peak.max(d);
            }
        }
        assert!(outside_peak < 5.0, "token far from the crease moved {outside_peak:.1} px");
        assert!(in_band_peak > 60.0, "crease band peak only {in_band_peak:.1} px");
        let cap = noise.warp_px * f64::hypot(1.0, 0.375) + 2.0;
        assert!(in_band_peak <= cap, "field exceeded its amplitude: {in_band_peak:.1}");
    }

    #[test]
    fn batches_are_deterministic_and_forms_differ() {
        let specs = &default_specs()[..2];
        let noise = NoiseModel::default().with_seed(5);
        let a = generate_batch(specs, 3, &noise).unwrap();
        let b = generate_batch(specs, 3, &noise).unwrap();
        assert_eq!(a.forms.len(), 6);
        for (x, y) in a.forms.iter().zip(&b.forms) {
            assert_eq!(x.doc, y.doc);
            assert_eq!(x.truth, y.truth);
        }
        assert_ne!(a.forms[0].doc, a.forms[1].doc, "forms share a template but not content");
        assert_eq!(a.forms[3].template_index, 1);
    }

    #[test]
    fn truth_json_round_trips() {
        let truth = GroundTruth {
            label: "invoice_record".into(),
            entries: vec![
                TruthEntry {
                    filled: true,
                    value: Some("KL-00412".into()),
                    token_indices: vec![3, 4],
                },
                TruthEntry {
                    filled: false,
                    value: None,
                    token_indices: vec![],
                },
            ],
        };
        let bytes = ground_truth_to_json(&truth);
        assert_eq!(parse_ground_truth_json(&bytes).unwrap(), truth);
    }

    #[test]
    fn invalid_noise_is_rejected() {
        let mut n = NoiseModel::default();
        n.fill_prob = 1.5;
        assert!(matches!(n.validate(), Err(SynthError::BadNoise(_))));
        let mut n = NoiseModel::default();
        n.scale = (1.1, 0.9);
        assert!(n.validate().is_err());
        let mut n = NoiseModel::default();
        n.rotation_deg = (3.0, -3.0);
        assert!(n.validate().is_err());
        assert!(NoiseModel::default().validate().is_ok());
        assert!(NoiseModel::noiseless(0).validate().is_ok());
    }
}
