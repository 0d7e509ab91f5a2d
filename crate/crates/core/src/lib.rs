//! Training-free classification and key-information extraction for scanned
//! forms, driven entirely by OCR bounding-box geometry.
//!
//! The pipeline consumes raw OCR output (tokens with boxes), consolidates it
//! into entities, classifies the page against a bank of known templates,
//! aligns and locally re-scales the page onto the matched template, and then
//! pairs template value slots with entities by solving a linear assignment
//! problem over pixel distances. No model training is involved anywhere: a
//! new form type is onboarded by supplying its template.
//!
//! Modules follow the stage order:
//!
//! 1. [`ocr`] — parsing and token-to-entity consolidation
//! 2. [`classify`] — TF-IDF + layout-histogram template matching
//! 3. [`align`] — fuzzy keyword anchors and robust page alignment
//! 4. [`scaling`] — per-segment additive offset correction
//! 5. [`assign`] — cost matrix, constraints, exact assignment solver
//! 6. [`synth`] — synthetic form generator for evaluation
//! 7. [`eval`] — precision/recall/F1 scoring and ablation harness
//! 8. [`pipeline`] — configuration plus end-to-end orchestration

pub mod align;
pub mod assign;
pub mod classify;
pub mod geometry;
pub mod eval;
pub mod ocr;
pub mod par;
pub mod pipeline;
pub mod scaling;
pub mod synth;

pub use geometry::{BBox, GeometryError, Homography, Point};
pub use ocr::{Entity, OcrDocument, Token};
