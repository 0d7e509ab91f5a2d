//! End-to-end orchestration: one config object, one call per document.
//!
//! Extraction runs consolidate → anchor match → align → re-match → segment
//! scale → constrain → solve → extract. Anchors are matched twice on
//! purpose: the first pass feeds alignment (raw frame), the second runs in
//! the aligned frame, where the remaining offsets are exactly what segment
//! scaling needs to measure. Both geometric stages can be toggled off
//! independently, which is how the ablation harness produces its variants.

use crate::align::{align_document, match_anchors, AlignMode, FuzzyConfig, RansacConfig};
use crate::assign::{
    build_constraints, extract_key_values, solve_assignment, AssignError, CostMatrix,
    ExtractedField, KieTemplate,
};
use crate::classify::{BankModel, Classification, ClassifyError, EmbedConfig};
use crate::ocr::{consolidate, ConsolidationConfig, Entity, OcrDocument};
use crate::scaling::{compute_corrections, scale_entities, CellCorrection, GridConfig, SegmentGrid};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration invalid: {0}")]
    Config(String),
    #[error(transparent)]
    Assign(#[from] AssignError),
    #[error(transparent)]
    Classify(#[from] ClassifyError),
}

// ── Configuration ────────────────────────────────────────────────────────────

/// Assignment-stage thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KieConfig {
    /// Cost of declaring a value slot unfilled (the dummy-column price).
    pub reject_cost: f64,
    /// Distance beyond which a pairing is forbidden outright.
    pub hard_radius: f64,
}

impl Default for KieConfig {
    fn default() -> Self {
        KieConfig {
            reject_cost: 150.0,
            hard_radius: 400.0,
        }
    }
}

/// Which geometric correction stages run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StageToggles {
    pub align: bool,
    pub scale: bool,
}

impl Default for StageToggles {
    fn default() -> Self {
        StageToggles {
            align: true,
            scale: true,
        }
    }
}

/// Every tunable of the pipeline in one place. All sections have full
/// defaults, so a config file only needs the values it changes.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub consolidation: ConsolidationConfig,
    pub fuzzy: FuzzyConfig,
    pub grid: GridConfig,
    pub kie: KieConfig,
    pub ransac: RansacConfig,
    pub classify: EmbedConfig,
    pub stages: StageToggles,
}

impl PipelineConfig {
    /// Checks every field against its documented range.
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |msg: String| Err(PipelineError::Config(msg));
        if self.consolidation.vertical_tol <= 0.0 || self.consolidation.intra_word_gap <= 0.0 {
            return bad(format!(
                "consolidation tolerances must be positive, got vertical_tol {} / intra_word_gap {}",
                self.consolidation.vertical_tol, self.consolidation.intra_word_gap
            ));
        }
        if !(0.0..=1.0).contains(&self.fuzzy.min_similarity) {
            return bad(format!(
                "fuzzy.min_similarity {} not in [0, 1]",
                self.fuzzy.min_similarity
            ));
        }
        if self.fuzzy.max_anchor_distance <= 0.0 {
            return bad(format!(
                "fuzzy.max_anchor_distance {} must be positive",
                self.fuzzy.max_anchor_distance
            ));
        }
        if self.grid.rows == 0 || self.grid.cols == 0 {
            return bad("grid needs at least one row and column".into());
        }
        if self.kie.reject_cost <= 0.0 || self.kie.hard_radius <= 0.0 {
            return bad(format!(
                "kie thresholds must be positive, got reject_cost {} / hard_radius {}",
                self.kie.reject_cost, self.kie.hard_radius
            ));
        }
        if self.ransac.inlier_tol <= 0.0 || self.ransac.iterations == 0 {
            return bad(format!(
                "ransac needs positive inlier_tol and at least one iteration, got {} / {}",
                self.ransac.inlier_tol, self.ransac.iterations
            ));
        }
        if !(0.0..=1.0).contains(&self.classify.alpha) || self.classify.grid == 0 {
            return bad(format!(
                "classify.alpha must be in [0, 1] and classify.grid positive, got {} / {}",
                self.classify.alpha, self.classify.grid
            ));
        }
        Ok(())
    }
}

// ── Reports ──────────────────────────────────────────────────────────────────

/// How alignment went for one document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentReport {
    pub mode: AlignMode,
    pub anchors_found: usize,
    pub inliers: usize,
    /// True when no transform was applied — the stage was disabled, too few
    /// anchors were found, or no consensus emerged.
    pub skipped: bool,
    /// Row-major 3x3 transform actually applied (identity when skipped).
    pub transform: [f64; 9],
}

/// How segment scaling went for one document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    /// False when the stage was disabled.
    pub applied: bool,
    /// Anchors the correction field was computed from.
    pub anchors_used: usize,
    /// Mean offset over all anchors.
    pub global: (f64, f64),
    /// Per-cell corrections, row-major; empty when the stage was disabled.
    pub cells: Vec<CellCorrection>,
}

/// Everything extraction produced for one document.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtractionOutcome {
    pub fields: Vec<ExtractedField>,
    /// Entities after consolidation (before geometric correction).
    pub entity_count: usize,
    pub alignment: AlignmentReport,
    pub scaling: ScalingReport,
}

// ── Extraction ───────────────────────────────────────────────────────────────

/// Runs the full extraction pipeline for one document against a template.
///
/// Never fails on degenerate *input* — an empty page simply yields all-null
/// fields. Errors indicate an invalid config or a broken internal
/// invariant, not a bad scan.
pub fn extract_document(
    template: &KieTemplate,
    doc: &OcrDocument,
    cfg: &PipelineConfig,
) -> Result<ExtractionOutcome, PipelineError> {
    cfg.validate()?;
    let keys = template.keys();
    let entities = consolidate(doc, &cfg.consolidation);
    let entity_count = entities.len();

    // Stage 1: global alignment from fuzzy keyword anchors, coarse to
    // fine. On a badly displaced page the first match only reaches the
    // keys that moved least, so the first fit is rough; re-matching in
    // the roughly corrected frame recovers the far-field anchors the
    // distance gate had cut off, and a second fit over the full spread
    // pins the transform down.
    let anchors = match_anchors(&keys, &entities, &cfg.fuzzy);
    let (entities, alignment) = if cfg.stages.align {
        let mut a = align_document(&entities, &anchors, &cfg.ransac);
        if !a.skipped {
            let refound = match_anchors(&keys, &a.entities, &cfg.fuzzy);
            if refound.len() > a.anchors_found {
                let refit = align_document(&a.entities, &refound, &cfg.ransac);
                if !refit.skipped {
                    a = crate::align::Alignment {
                        transform: refit.transform.compose(&a.transform),
                        ..refit
                    };
                }
            }
        }
        let report = AlignmentReport {
            mode: a.mode,
            anchors_found: a.anchors_found,
            inliers: a.inliers,
            skipped: a.skipped,
            transform: a.transform.to_flat(),
        };
        (a.entities, report)
    } else {
        let report = AlignmentReport {
            mode: AlignMode::Identity,
            anchors_found: anchors.len(),
            inliers: 0,
            skipped: true,
            transform: crate::geometry::Homography::identity().to_flat(),
        };
        (entities, report)
    };

    // Stage 2: piecewise correction of what alignment left behind. Anchors
    // are re-matched in the corrected frame so the measured offsets are the
    // *residual* ones.
    let anchors = match_anchors(&keys, &entities, &cfg.fuzzy);
    let (entities, scaling) = if cfg.stages.scale {
        let grid = SegmentGrid::new(cfg.grid, doc.page_width, doc.page_height);
        let field = compute_corrections(grid, &anchors);
        let report = ScalingReport {
            applied: true,
            anchors_used: anchors.len(),
            global: field.global,
            cells: field.cells.clone(),
        };
        (scale_entities(&entities, &field), report)
    } else {
        let report = ScalingReport {
            applied: false,
            anchors_used: anchors.len(),
            global: (0.0, 0.0),
            cells: Vec::new(),
        };
        (entities, report)
    };

    // Stage 3: global assignment. The anchor list from the last match still
    // indexes the same entities (scaling preserves order), so it doubles as
    // the exclusion list.
    let constraints = build_constraints(template, &entities, &anchors, cfg.kie.hard_radius);
    let matrix = CostMatrix::build(template, &entities, &constraints, cfg.kie.reject_cost)?;
    let solution = solve_assignment(&matrix)?;
    let fields = extract_key_values(template, &entities, &solution);

    Ok(ExtractionOutcome {
        fields,
        entity_count,
        alignment,
        scaling,
    })
}

// ── Classification ───────────────────────────────────────────────────────────

/// Consolidates a page and classifies it against a fitted bank.
pub fn classify_document(
    bank: &BankModel,
    doc: &OcrDocument,
    cfg: &PipelineConfig,
) -> Result<Classification, PipelineError> {
    cfg.validate()?;
    let entities = consolidate(doc, &cfg.consolidation);
    Ok(bank.classify(&entities, doc.page_width, doc.page_height)?)
}

/// Consolidated entities of a page under this config — the building block
/// for callers assembling banks from template documents.
pub fn consolidated_entities(doc: &OcrDocument, cfg: &PipelineConfig) -> Vec<Entity> {
    consolidate(doc, &cfg.consolidation)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{default_specs, generate_filled_form, generate_template, NoiseModel};

    fn noiseless_case() -> (KieTemplate, OcrDocument) {
        let (t, _) = generate_template(&default_specs()[0], 11).unwrap();
        let (doc, _) = generate_filled_form(&t, &NoiseModel::noiseless(23));
        (t, doc)
    }

    #[test]
    fn noiseless_document_extracts_every_field() {
        let (t, doc) = noiseless_case();
        let out = extract_document(&t, &doc, &PipelineConfig::default()).unwrap();
        assert_eq!(out.fields.len(), t.entries.len());
        assert!(out.fields.iter().all(|f| f.value.is_some()));
        assert!(!out.alignment.skipped, "exact anchors must align");
        assert!(out.scaling.applied);
        // Costs on a clean page are tiny: everything sits where expected.
        assert!(out.fields.iter().all(|f| f.cost.unwrap() < 10.0));
    }

    #[test]
    fn empty_document_yields_all_null_fields() {
        let (t, _) = noiseless_case();
        let empty = OcrDocument {
            source_id: "blank".into(),
            page_width: 1700.0,
            page_height: 2200.0,
            tokens: vec![],
        };
        let out = extract_document(&t, &empty, &PipelineConfig::default()).unwrap();
        assert_eq!(out.fields.len(), t.entries.len());
        assert!(out.fields.iter().all(|f| f.value.is_none() && f.bbox.is_none()));
        assert_eq!(out.entity_count, 0);
        assert!(out.alignment.skipped);
    }

    #[test]
    fn disabled_stages_show_up_in_reports() {
        let (t, doc) = noiseless_case();
        let mut cfg = PipelineConfig::default();
        cfg.stages.align = false;
        cfg.stages.scale = false;
        let out = extract_document(&t, &doc, &cfg).unwrap();
        assert!(out.alignment.skipped);
        assert_eq!(out.alignment.mode, AlignMode::Identity);
        assert!(!out.scaling.applied);
        assert!(out.scaling.cells.is_empty());
        // A noiseless page needs no correction, so extraction still works.
        assert!(out.fields.iter().all(|f| f.value.is_some()));
    }

    #[test]
    fn invalid_config_is_rejected_up_front() {
        let (t, doc) = noiseless_case();
        let mut cfg = PipelineConfig::default();
        cfg.classify.alpha = 1.5;
        assert!(matches!(
            extract_document(&t, &doc, &cfg),
            Err(PipelineError::Config(_))
        ));
        let mut cfg = PipelineConfig::default();
        cfg.kie.reject_cost = 0.0;
        assert!(extract_document(&t, &doc, &cfg).is_err());
    }

    #[test]
    fn config_toml_round_trips_with_partial_files() {
        // A config file only overrides what it mentions.
        let text = "[kie]\nreject_cost = 99.0\n\n[stages]\nalign = false\n";
        let cfg: PipelineConfig = toml::from_str(text).unwrap();
        assert_eq!(cfg.kie.reject_cost, 99.0);
        assert_eq!(cfg.kie.hard_radius, 400.0);
        assert!(!cfg.stages.align);
        assert!(cfg.stages.scale);
        assert_eq!(cfg.consolidation.vertical_tol, 15.0);

        let dumped = toml::to_string_pretty(&PipelineConfig::default()).unwrap();
        let back: PipelineConfig = toml::from_str(&dumped).unwrap();
        assert_eq!(back, PipelineConfig::default());
    }
}
