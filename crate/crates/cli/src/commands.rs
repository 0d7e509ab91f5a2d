//! The five subcommands. Batch commands read every input up front, process
//! documents concurrently, and emit newline-delimited JSON in input order —
//! one object per document, field order fixed by construction.

use crate::config::FileConfig;
use crate::error::CliError;
use formx_core::classify::{build_bank, entity_text, parse_bank_json, BankClass, BankFile, LoadedBank};
use formx_core::eval::{
    evaluate_cases, load_dataset, manifest_to_string, render_ablation, render_table, run_ablation,
    ManifestEntry, Variant,
};
use formx_core::geometry::BBox;
use formx_core::ocr::{consolidate, parse_ocr_json_lenient, ocr_document_to_json, OcrDocument};
use formx_core::par::par_map;
use formx_core::pipeline::{extract_document, ExtractionOutcome};
use formx_core::assign::{kie_template_to_json, parse_kie_template_json, KieTemplate};
use formx_core::synth::{
    default_specs, generate_batch, ground_truth_to_json, NoiseModel, TemplateSpec,
};
use serde_json::{json, Value};
use std::io::Write;
use std::path::{Path, PathBuf};

// ── Shared input plumbing ────────────────────────────────────────────────────

fn read_file(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))
}

fn read_ocr(path: &Path) -> Result<OcrDocument, CliError> {
    let bytes = read_file(path)?;
    parse_ocr_json_lenient(&bytes)
        .map_err(|e| CliError::usage(format!("bad OCR document {}: {e}", path.display())))
}

fn write_created(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::internal(format!("cannot create {}: {e}", dir.display())))?;
    }
    std::fs::write(path, bytes)
        .map_err(|e| CliError::internal(format!("cannot write {}: {e}", path.display())))
}

fn print_ndjson(objects: &[Value]) -> Result<(), CliError> {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for obj in objects {
        serde_json::to_writer(&mut out, obj)
            .map_err(|e| CliError::internal(format!("cannot write output: {e}")))?;
        writeln!(out).map_err(|e| CliError::internal(format!("cannot write output: {e}")))?;
    }
    Ok(())
}

// ── classify ─────────────────────────────────────────────────────────────────

/// Scores each document against every class in the bank and reports the
/// best label. The bank file carries class texts (or precomputed vectors);
/// OCR documents can only be scored against a text-backed bank.
pub fn classify(bank_path: &Path, docs: &[PathBuf], cfg: &FileConfig) -> Result<(), CliError> {
    let bank_file = parse_bank_json(&read_file(bank_path)?)
        .map_err(|e| CliError::usage(format!("bad bank {}: {e}", bank_path.display())))?;
    let bank: LoadedBank = build_bank(&bank_file)
        .map_err(|e| CliError::usage(format!("bad bank {}: {e}", bank_path.display())))?;
    let Some(tfidf) = bank.tfidf.as_ref() else {
        return Err(CliError::usage(format!(
            "bank {} holds only precomputed vectors; OCR documents need class texts to score against",
            bank_path.display()
        )));
    };
    let documents: Vec<OcrDocument> = docs.iter().map(|p| read_ocr(p)).collect::<Result<_, _>>()?;

    let reports: Vec<Result<Value, CliError>> = par_map(&documents, |doc| {
        let entities = consolidate(doc, &cfg.pipeline.consolidation);
        let vector = tfidf.transform(&entity_text(&entities));
        let c = bank
            .matrix
            .classify(&vector)
            .map_err(|e| CliError::internal(format!("classification failed: {e}")))?;
        let scores: Value = bank
            .matrix
            .labels()
            .iter()
            .zip(&c.scores)
            .map(|(l, s)| (l.clone(), json!(s)))
            .collect::<serde_json::Map<String, Value>>()
            .into();
        Ok(json!({
            "source_id": doc.source_id,
            "label": c.label,
            "scores": scores,
        }))
    });
    let reports: Vec<Value> = reports.into_iter().collect::<Result<_, _>>()?;
    print_ndjson(&reports)
}

// ── extract ──────────────────────────────────────────────────────────────────

fn bbox_json(b: &BBox) -> Value {
    json!([b.x_min, b.y_min, b.x_max, b.y_max])
}

fn outcome_json(doc: &OcrDocument, t: &KieTemplate, out: &ExtractionOutcome, diagnostics: bool) -> Value {
    let fields: Vec<Value> = out
        .fields
        .iter()
        .map(|f| {
            json!({
                "key": f.key,
                "value": f.value,
                "bbox": f.bbox.as_ref().map(|b| bbox_json(b)),
                "cost": f.cost,
            })
        })
        .collect();
    let mut report = json!({
        "source_id": doc.source_id,
        "class_label": t.class_label,
        "fields": fields,
    });
    if diagnostics {
        let obj = report.as_object_mut().expect("report is an object");
        obj.insert(
            "alignment".into(),
            json!({
                "mode": out.alignment.mode,
                "anchors_found": out.alignment.anchors_found,
                "inliers": out.alignment.inliers,
                "skipped": out.alignment.skipped,
                "transform": out.alignment.transform,
            }),
        );
        let cells: Vec<Value> = out
            .scaling
            .cells
            .iter()
            .map(|c| json!({"support": c.support, "dx": c.dx, "dy": c.dy}))
            .collect();
        obj.insert(
            "scaling".into(),
            json!({
                "applied": out.scaling.applied,
                "anchors_used": out.scaling.anchors_used,
                "global": [out.scaling.global.0, out.scaling.global.1],
                "cells": cells,
            }),
        );
        obj.insert("entity_count".into(), json!(out.entity_count));
    }
    report
}

/// Runs the full pipeline against one template for each document and emits
/// one extraction object per input.
pub fn extract(template_path: &Path, docs: &[PathBuf], cfg: &FileConfig) -> Result<(), CliError> {
    let template = parse_kie_template_json(&read_file(template_path)?)
        .map_err(|e| CliError::usage(format!("bad template {}: {e}", template_path.display())))?;
    let documents: Vec<OcrDocument> = docs.iter().map(|p| read_ocr(p)).collect::<Result<_, _>>()?;

    let outcomes: Vec<Result<Value, CliError>> = par_map(&documents, |doc| {
        let out = extract_document(&template, doc, &cfg.pipeline)
            .map_err(|e| CliError::internal(format!("extraction failed on {}: {e}", doc.source_id)))?;
        Ok(outcome_json(doc, &template, &out, cfg.run.diagnostics))
    });
    let outcomes: Vec<Value> = outcomes.into_iter().collect::<Result<_, _>>()?;
    print_ndjson(&outcomes)
}

// ── eval ─────────────────────────────────────────────────────────────────────

/// Scores a manifest of (document, truth) pairs and prints the per-class
/// metrics table; with variants, the ablation comparison.
pub fn eval(manifest: &Path, ablate: Option<&[String]>, cfg: &FileConfig) -> Result<(), CliError> {
    let variants: Option<Vec<Variant>> = ablate
        .map(|names| {
            names
                .iter()
                .map(|n| {
                    n.parse::<Variant>()
                        .map_err(|e| CliError::usage(format!("--ablate: {e}")))
                })
                .collect::<Result<Vec<_>, _>>()
        })
        .transpose()?;
    let dataset = load_dataset(manifest).map_err(|e| CliError::usage(format!("{e}")))?;
    match variants {
        None => {
            let (rows, mean) = evaluate_cases(&dataset.templates, &dataset.cases, &cfg.pipeline)
                .map_err(|e| CliError::internal(format!("evaluation failed: {e}")))?;
            print!("{}", render_table(&rows, &mean));
        }
        Some(variants) => {
            let reports = run_ablation(&dataset.templates, &dataset.cases, &cfg.pipeline, &variants)
                .map_err(|e| CliError::internal(format!("evaluation failed: {e}")))?;
            print!("{}", render_ablation(&reports));
        }
    }
    Ok(())
}

// ── gen ──────────────────────────────────────────────────────────────────────

/// Generates a synthetic dataset under `out`: template definitions and
/// their blank pages, noisy filled forms with ground truth, a text bank for
/// classification, and a manifest tying it together. Bit-identical for a
/// given seed.
pub fn gen(
    out_dir: &Path,
    spec_path: Option<&Path>,
    count: usize,
    cfg: &FileConfig,
) -> Result<(), CliError> {
    let specs: Vec<TemplateSpec> = match spec_path {
        None => default_specs(),
        Some(p) => serde_json::from_slice(&read_file(p)?)
            .map_err(|e| CliError::usage(format!("bad spec {}: {e}", p.display())))?,
    };
    let noise = NoiseModel::default().with_seed(cfg.run.seed);
    let batch = generate_batch(&specs, count, &noise)
        .map_err(|e| CliError::usage(format!("cannot generate: {e}")))?;

    let mut bank = BankFile { classes: Vec::new() };
    for (template, blank) in &batch.templates {
        let label = &template.class_label;
        write_created(
            &out_dir.join(format!("templates/{label}.kie.json")),
            &kie_template_to_json(template),
        )?;
        write_created(
            &out_dir.join(format!("templates/{label}.ocr.json")),
            &ocr_document_to_json(blank),
        )?;
        bank.classes.push(BankClass {
            label: label.clone(),
            text: entity_text(&consolidate(blank, &cfg.pipeline.consolidation)),
            vector: None,
        });
    }
    write_created(
        &out_dir.join("bank.json"),
        &serde_json::to_vec_pretty(&bank)
            .map_err(|e| CliError::internal(format!("cannot serialize bank: {e}")))?,
    )?;

    let mut entries = Vec::new();
    for (i, form) in batch.forms.iter().enumerate() {
        let label = &batch.templates[form.template_index].0.class_label;
        let ocr_rel = format!("forms/{label}_{i:04}.ocr.json");
        let truth_rel = format!("truth/{label}_{i:04}.truth.json");
        write_created(&out_dir.join(&ocr_rel), &ocr_document_to_json(&form.doc))?;
        write_created(&out_dir.join(&truth_rel), &ground_truth_to_json(&form.truth))?;
        entries.push(ManifestEntry {
            ocr: ocr_rel,
            label: label.clone(),
            truth: truth_rel,
        });
    }
    write_created(
        &out_dir.join("manifest.jsonl"),
        manifest_to_string(&entries).as_bytes(),
    )?;
    println!(
        "{}",
        json!({
            "out": out_dir.display().to_string(),
            "templates": batch.templates.len(),
            "forms": batch.forms.len(),
            "seed": cfg.run.seed,
            "manifest": out_dir.join("manifest.jsonl").display().to_string(),
        })
    );
    Ok(())
}

// ── config ───────────────────────────────────────────────────────────────────

/// Prints the effective configuration (defaults, file, flags merged) as
/// TOML; without `--dump`, just confirms it loaded and validated.
pub fn config(dump: bool, source: Option<&Path>, cfg: &FileConfig) -> Result<(), CliError> {
    if dump {
        print!("{}", crate::config::dump(cfg));
    } else {
        match source {
            Some(p) => println!("configuration ok ({})", p.display()),
            None => println!("configuration ok (built-in defaults)"),
        }
    }
    Ok(())
}
