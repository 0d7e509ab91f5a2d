//! Scoring, dataset plumbing, and the ablation harness.
//!
//! A *wrong* extracted value counts as both a false positive and a false
//! negative: the slot's true value was missed (FN) and a value was asserted
//! that isn't there (FP). This is what lets precision and recall have
//! independent denominators on the same run. Counts pool across documents
//! before the ratios are taken (micro-averaging), so the mean row of a
//! report weights every field equally rather than every class.
//!
//! The ablation harness reruns the identical pipeline with one geometric
//! stage switched off at a time. Documents are scored in parallel; the
//! aggregation order is the input order, so reports are deterministic.

use crate::assign::{parse_kie_template_json, ExtractedField, KieTemplate};
use crate::ocr::{parse_ocr_json_lenient, OcrDocument};
use crate::par::par_map;
use crate::pipeline::{extract_document, PipelineConfig, PipelineError};
use crate::synth::{parse_ground_truth_json, GroundTruth};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("ground truth has {truth} entries but extraction produced {got}")]
    TemplateMismatch { truth: usize, got: usize },
    #[error("no template loaded for label '{0}'")]
    UnknownLabel(String),
    #[error("unknown variant '{0}'; expected full, no_align, or no_scale")]
    UnknownVariant(String),
    #[error("manifest line {line}: {msg}")]
    Manifest { line: usize, msg: String },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}: {msg}", path.display())]
    Parse { path: PathBuf, msg: String },
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

// ── Metrics ──────────────────────────────────────────────────────────────────

/// Field-level counts and the ratios derived from them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Metrics {
    /// Derives the ratios from raw counts. Empty denominators give 0, so a
    /// run with no positives at all reports (0, 0, 0) rather than NaN.
    pub fn from_counts(tp: u64, fp: u64, fn_: u64) -> Metrics {
        let ratio = |num: u64, den: u64| {
            if den == 0 {
                0.0
            } else {
                num as f64 / den as f64
            }
        };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Metrics {
            tp,
            fp,
            fn_,
            precision,
            recall,
            f1,
        }
    }

    /// Pools raw counts across runs and rederives the ratios.
    pub fn pooled<'a>(parts: impl IntoIterator<Item = &'a Metrics>) -> Metrics {
        let (mut tp, mut fp, mut fn_) = (0, 0, 0);
        for m in parts {
            tp += m.tp;
            fp += m.fp;
            fn_ += m.fn_;
        }
        Metrics::from_counts(tp, fp, fn_)
    }
}

/// Scores one document's extraction against its ground truth.
///
/// Entries pair up positionally — both sides follow template order.
pub fn score_extraction(
    truth: &GroundTruth,
    fields: &[ExtractedField],
) -> Result<Metrics, EvalError> {
    if truth.entries.len() != fields.len() {
        return Err(EvalError::TemplateMismatch {
            truth: truth.entries.len(),
            got: fields.len(),
        });
    }
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (t, f) in truth.entries.iter().zip(fields) {
        match (t.filled, &f.value) {
            (true, Some(got)) if Some(got) == t.value.as_ref() => tp += 1,
            (true, Some(_)) => {
                // Wrong value: asserted something false and missed the truth.
                fp += 1;
                fn_ += 1;
            }
            (true, None) => fn_ += 1,
            (false, Some(_)) => fp += 1,
            (false, None) => {}
        }
    }
    Ok(Metrics::from_counts(tp, fp, fn_))
}

// ── Variants ─────────────────────────────────────────────────────────────────

/// Pipeline variants the ablation harness can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Full,
    NoAlign,
    NoScale,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Full, Variant::NoAlign, Variant::NoScale];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoAlign => "no_align",
            Variant::NoScale => "no_scale",
        }
    }

    /// The base configuration with this variant's stage switched off.
    pub fn apply(self, base: &PipelineConfig) -> PipelineConfig {
        let mut cfg = *base;
        match self {
            Variant::Full => {}
            Variant::NoAlign => cfg.stages.align = false,
            Variant::NoScale => cfg.stages.scale = false,
        }
        cfg
    }
}

impl FromStr for Variant {
    type Err = EvalError;
    fn from_str(s: &str) -> Result<Variant, EvalError> {
        match s {
            "full" => Ok(Variant::Full),
            "no_align" => Ok(Variant::NoAlign),
            "no_scale" => Ok(Variant::NoScale),
            other => Err(EvalError::UnknownVariant(other.to_string())),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

// ── Dataset evaluation ───────────────────────────────────────────────────────

/// One document with its ground truth.
#[derive(Debug, Clone)]
pub struct EvalCase {
    pub doc: OcrDocument,
    pub truth: GroundTruth,
}

/// Metrics for every document of one class, pooled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassRow {
    pub label: String,
    pub metrics: Metrics,
}

/// One variant's full scoreboard: per-class rows plus the pooled mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantReport {
    pub variant: Variant,
    pub per_class: Vec<ClassRow>,
    pub mean: Metrics,
}

/// Extracts and scores every case under one configuration.
///
/// Rows come back sorted by label; the mean row pools all counts.
pub fn evaluate_cases(
    templates: &BTreeMap<String, KieTemplate>,
    cases: &[EvalCase],
    cfg: &PipelineConfig,
) -> Result<(Vec<ClassRow>, Metrics), EvalError> {
    let scored = par_map(cases, |case| -> Result<(String, Metrics), EvalError> {
        let template = templates
            .get(&case.truth.label)
            .ok_or_else(|| EvalError::UnknownLabel(case.truth.label.clone()))?;
        let outcome = extract_document(template, &case.doc, cfg)?;
        let metrics = score_extraction(&case.truth, &outcome.fields)?;
        Ok((case.truth.label.clone(), metrics))
    });

    let mut by_label: BTreeMap<String, Vec<Metrics>> = BTreeMap::new();
    let mut all = Vec::with_capacity(cases.len());
    for item in scored {
        let (label, metrics) = item?;
        by_label.entry(label).or_default().push(metrics);
        all.push(metrics);
    }
    let rows = by_label
        .into_iter()
        .map(|(label, parts)| ClassRow {
            label,
            metrics: Metrics::pooled(&parts),
        })
        .collect();
    Ok((rows, Metrics::pooled(&all)))
}

/// Runs the requested variants over the same dataset. An empty variant list
/// produces an empty report.
pub fn run_ablation(
    templates: &BTreeMap<String, KieTemplate>,
    cases: &[EvalCase],
    base: &PipelineConfig,
    variants: &[Variant],
) -> Result<Vec<VariantReport>, EvalError> {
    let mut reports = Vec::with_capacity(variants.len());
    for &variant in variants {
        let cfg = variant.apply(base);
        let (per_class, mean) = evaluate_cases(templates, cases, &cfg)?;
        reports.push(VariantReport {
            variant,
            per_class,
            mean,
        });
    }
    Ok(reports)
}

// ── Manifest & dataset loading ───────────────────────────────────────────────

/// One line of a dataset manifest. Paths are relative to the manifest file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub ocr: String,
    pub label: String,
    pub truth: String,
}

/// Parses JSON-lines manifest text. Blank lines are allowed.
pub fn parse_manifest(text: &str) -> Result<Vec<ManifestEntry>, EvalError> {
    let mut entries = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let entry = serde_json::from_str(line).map_err(|e| EvalError::Manifest {
            line: idx + 1,
            msg: e.to_string(),
        })?;
        entries.push(entry);
    }
    Ok(entries)
}

/// Renders manifest entries as JSON-lines text.
pub fn manifest_to_string(entries: &[ManifestEntry]) -> String {
    let mut out = String::new();
    for e in entries {
        out.push_str(&serde_json::to_string(e).expect("manifest entry serializes"));
        out.push('\n');
    }
    out
}

/// A fully loaded dataset: templates keyed by label, cases in manifest order.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub templates: BTreeMap<String, KieTemplate>,
    pub cases: Vec<EvalCase>,
}

fn read_file(path: &Path) -> Result<Vec<u8>, EvalError> {
    std::fs::read(path).map_err(|source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Loads everything a manifest references. Templates are found by
/// convention at `templates/<label>.kie.json` next to the manifest.
pub fn load_dataset(manifest_path: &Path) -> Result<Dataset, EvalError> {
    let text = String::from_utf8_lossy(&read_file(manifest_path)?).into_owned();
    let entries = parse_manifest(&text)?;
    let dir = manifest_path.parent().unwrap_or_else(|| Path::new("."));

    let mut templates = BTreeMap::new();
    let mut cases = Vec::with_capacity(entries.len());
    for entry in &entries {
        if !templates.contains_key(&entry.label) {
            let tpath = dir
                .join("templates")
                .join(format!("{}.kie.json", entry.label));
            let template =
                parse_kie_template_json(&read_file(&tpath)?).map_err(|e| EvalError::Parse {
                    path: tpath.clone(),
                    msg: e.to_string(),
                })?;
            templates.insert(entry.label.clone(), template);
        }
        let opath = dir.join(&entry.ocr);
        let doc = parse_ocr_json_lenient(&read_file(&opath)?).map_err(|e| EvalError::Parse {
            path: opath.clone(),
            msg: e.to_string(),
        })?;
        let tpath = dir.join(&entry.truth);
        let truth =
            parse_ground_truth_json(&read_file(&tpath)?).map_err(|e| EvalError::Parse {
                path: tpath.clone(),
                msg: e.to_string(),
            })?;
        cases.push(EvalCase { doc, truth });
    }
    Ok(Dataset { templates, cases })
}

// ── Rendering ────────────────────────────────────────────────────────────────

/// Renders one scoreboard as an aligned-column text table: one row per
/// class, a `mean` row last.
pub fn render_table(per_class: &[ClassRow], mean: &Metrics) -> String {
    let label_w = per_class
        .iter()
        .map(|r| r.label.len())
        .chain(std::iter::once("class".len()))
        .chain(std::iter::once("mean".len()))
        .max()
        .unwrap_or(5);
    let mut out = String::new();
    out.push_str(&format!(
        "{:<label_w$}  {:>6} {:>6} {:>6}  {:>9} {:>7} {:>7}\n",
        "class", "tp", "fp", "fn", "precision", "recall", "f1"
    ));
    let mut row = |name: &str, m: &Metrics| {
        out.push_str(&format!(
            "{:<label_w$}  {:>6} {:>6} {:>6}  {:>9.3} {:>7.3} {:>7.3}\n",
            name, m.tp, m.fp, m.fn_, m.precision, m.recall, m.f1
        ));
    };
    for r in per_class {
        row(&r.label, &r.metrics);
    }
    row("mean", mean);
    out
}

/// Renders every variant's table, separated by headed sections.
pub fn render_ablation(reports: &[VariantReport]) -> String {
    let mut out = String::new();
    for (i, r) in reports.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        out.push_str(&format!("variant: {}\n", r.variant));
        out.push_str(&render_table(&r.per_class, &r.mean));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{
        default_specs, generate_filled_form, generate_template, GroundTruth, NoiseModel,
        TruthEntry,
    };

    #[test]
    fn published_row_arithmetic_reproduces() {
        let m = Metrics::from_counts(2312, 92, 172);
        assert!((m.precision - 0.962).abs() < 1e-3);
        assert!((m.recall - 0.931).abs() < 1e-3);
        assert!((m.f1 - 0.946).abs() < 1e-3);
        // The ratios are exactly recomputable from the stored counts.
        assert_eq!(m.precision, 2312.0 / 2404.0);
        assert_eq!(m.recall, 2312.0 / 2484.0);
    }

    #[test]
    fn zero_denominators_mean_zero_not_nan() {
        let m = Metrics::from_counts(0, 0, 0);
        assert_eq!((m.precision, m.recall, m.f1), (0.0, 0.0, 0.0));
        let all_null = Metrics::from_counts(0, 0, 7);
        assert_eq!(all_null.precision, 0.0);
        assert_eq!(all_null.recall, 0.0);
        assert_eq!(all_null.f1, 0.0);
    }

    fn truth_of(entries: Vec<(bool, Option<&str>)>) -> GroundTruth {
        GroundTruth {
            label: "t".into(),
            entries: entries
                .into_iter()
                .map(|(filled, value)| TruthEntry {
                    filled,
                    value: value.map(String::from),
                    token_indices: vec![],
                })
                .collect(),
        }
    }

    fn field_of(value: Option<&str>) -> ExtractedField {
        ExtractedField {
            key: "k".into(),
            value: value.map(String::from),
            bbox: None,
            cost: None,
        }
    }

    #[test]
    fn every_outcome_counts_the_documented_way() {
        let truth = truth_of(vec![
            (true, Some("A")),  // extracted right → TP
            (true, Some("B")),  // extracted wrong → FP + FN
            (true, Some("C")),  // missed → FN
            (false, None),      // hallucinated → FP
            (false, None),      // correctly left null → nothing
        ]);
        let fields = vec![
            field_of(Some("A")),
            field_of(Some("X")),
            field_of(None),
            field_of(Some("Y")),
            field_of(None),
        ];
        let m = score_extraction(&truth, &fields).unwrap();
        assert_eq!((m.tp, m.fp, m.fn_), (1, 2, 2));
    }

    #[test]
    fn all_correct_scores_perfectly_and_all_null_scores_zero() {
        let truth = truth_of(vec![(true, Some("A")), (true, Some("B"))]);
        let m = score_extraction(&truth, &[field_of(Some("A")), field_of(Some("B"))]).unwrap();
        assert_eq!((m.precision, m.recall, m.f1), (1.0, 1.0, 1.0));
        let m = score_extraction(&truth, &[field_of(None), field_of(None)]).unwrap();
        assert_eq!((m.precision, m.recall), (0.0, 0.0));
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let truth = truth_of(vec![(true, Some("A"))]);
        assert!(matches!(
            score_extraction(&truth, &[]),
            Err(EvalError::TemplateMismatch { truth: 1, got: 0 })
        ));
    }

    #[test]
    fn variant_names_round_trip_and_unknown_is_refused() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert!(matches!(
            "fast".parse::<Variant>(),
            Err(EvalError::UnknownVariant(s)) if s == "fast"
        ));
        let base = PipelineConfig::default();
        assert!(!Variant::NoAlign.apply(&base).stages.align);
        assert!(!Variant::NoScale.apply(&base).stages.scale);
        assert_eq!(Variant::Full.apply(&base), base);
    }

    fn tiny_dataset() -> (BTreeMap<String, KieTemplate>, Vec<EvalCase>) {
        let specs = default_specs();
        let mut templates = BTreeMap::new();
        let mut cases = Vec::new();
        for (i, spec) in specs.iter().take(2).enumerate() {
            let (t, _) = generate_template(spec, 40 + i as u64).unwrap();
            for j in 0..3 {
                let noise = NoiseModel::noiseless(900 + (i * 3 + j) as u64);
                let (doc, truth) = generate_filled_form(&t, &noise);
                cases.push(EvalCase { doc, truth });
            }
            templates.insert(t.class_label.clone(), t);
        }
        (templates, cases)
    }

    #[test]
    fn noiseless_dataset_is_perfect_under_every_variant() {
        let (templates, cases) = tiny_dataset();
        let reports = run_ablation(
            &templates,
            &cases,
            &PipelineConfig::default(),
            &Variant::ALL,
        )
        .unwrap();
        assert_eq!(reports.len(), 3);
        for r in &reports {
            assert_eq!(r.mean.f1, 1.0, "variant {} not perfect", r.variant);
            assert_eq!(r.per_class.len(), 2);
            assert!(r.per_class.iter().all(|c| c.metrics.f1 == 1.0));
        }
        let empty = run_ablation(&templates, &cases, &PipelineConfig::default(), &[]).unwrap();
        assert!(empty.is_empty());
    }

    #[test]
    fn missing_template_label_is_reported() {
        let (_, cases) = tiny_dataset();
        let err = evaluate_cases(&BTreeMap::new(), &cases, &PipelineConfig::default());
        assert!(matches!(err, Err(EvalError::UnknownLabel(_))));
    }

    #[test]
    fn manifest_text_round_trips_and_bad_lines_are_located() {
        let entries = vec![
            ManifestEntry {
                ocr: "forms/a.ocr.json".into(),
                label: "invoice_record".into(),
                truth: "truth/a.truth.json".into(),
            },
            ManifestEntry {
                ocr: "forms/b.ocr.json".into(),
                label: "patient_intake".into(),
                truth: "truth/b.truth.json".into(),
            },
        ];
        let text = manifest_to_string(&entries);
        assert_eq!(text.lines().count(), 2);
        assert_eq!(parse_manifest(&text).unwrap(), entries);

        let bad = format!("{}{}", text, "not json\n");
        assert!(matches!(
            parse_manifest(&bad),
            Err(EvalError::Manifest { line: 3, .. })
        ));
    }

    #[test]
    fn table_lines_stay_aligned() {
        let rows = vec![
            ClassRow {
                label: "accident_claim".into(),
                metrics: Metrics::from_counts(95, 3, 7),
            },
            ClassRow {
                label: "invoice_record".into(),
                metrics: Metrics::from_counts(60, 0, 1),
            },
        ];
        let mean = Metrics::pooled(rows.iter().map(|r| &r.metrics));
        let table = render_table(&rows, &mean);
        let widths: Vec<usize> = table.lines().map(|l| l.len()).collect();
        assert!(widths.windows(2).all(|w| w[0] == w[1]), "{table}");
        assert!(table.lines().last().unwrap().starts_with("mean"));
        assert!(table.contains("precision"));

        let sections = render_ablation(&[
            VariantReport {
                variant: Variant::Full,
                per_class: rows.clone(),
                mean,
            },
            VariantReport {
                variant: Variant::NoAlign,
                per_class: rows,
                mean,
            },
        ]);
        assert!(sections.contains("variant: full"));
        assert!(sections.contains("variant: no_align"));
    }
}
