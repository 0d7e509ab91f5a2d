//! Throughput benches: the data-parallel batch path against its sequential
//! twin, plus the two hot kernels (assignment solve, robust alignment).
//!
//!     cargo bench -p formx-core
//!     cargo bench -p formx-core --no-default-features   # sequential map only

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use formx_core::align::{align_document, match_anchors};
use formx_core::assign::{solve_assignment, ConstraintSet, CostMatrix};
use formx_core::ocr::consolidate;
use formx_core::pipeline::{extract_document, PipelineConfig};
use formx_core::par::{par_map, seq_map};
use formx_core::synth::{default_specs, generate_batch, Batch, NoiseModel};
use std::collections::HashSet;
use std::hint::black_box;

fn noisy_batch(per_template: usize) -> Batch {
    generate_batch(&default_specs(), per_template, &NoiseModel::default().with_seed(11))
        .expect("bench batch generates")
}

/// Full-pipeline extraction over a 60-form batch, parallel map vs the
/// sequential twin. With the `parallel` feature off both arms run the
/// sequential code, which makes the comparison a no-op by construction —
/// bench with default features to see the spread.
fn batch_extraction(c: &mut Criterion) {
    let batch = noisy_batch(10);
    let cfg = PipelineConfig::default();
    let work: Vec<_> = batch
        .forms
        .iter()
        .map(|f| (&batch.templates[f.template_index].0, &f.doc))
        .collect();

    let mut group = c.benchmark_group("batch_extraction_60_forms");
    group.sample_size(20);
    group.bench_function("parallel_map", |b| {
        b.iter(|| {
            let out = par_map(black_box(&work), |(t, doc)| {
                extract_document(t, doc, &cfg).expect("extraction succeeds")
            });
            black_box(out)
        })
    });
    group.bench_function("sequential_map", |b| {
        b.iter(|| {
            let out = seq_map(black_box(&work), |(t, doc)| {
                extract_document(t, doc, &cfg).expect("extraction succeeds")
            });
            black_box(out)
        })
    });
    group.finish();
}

/// The assignment kernel alone on a realistic slot/entity count.
fn assignment_solve(c: &mut Criterion) {
    let rows = 14;
    let cols = 40;
    // Deterministic pseudo-random costs; structure does not matter for the
    // solver's work, only the sizes do.
    let costs: Vec<f64> = (0..rows * cols)
        .map(|i| ((i * 2654435761usize) % 100_000) as f64 / 400.0)
        .collect();
    let constraints = ConstraintSet::new(HashSet::new(), Vec::new()).unwrap();
    let matrix = CostMatrix::from_costs(rows, cols, &costs, &constraints, 150.0).unwrap();

    let mut group = c.benchmark_group("assignment_solve_14x40");
    group.bench_function("shortest_path", |b| {
        b.iter_batched(
            || matrix.clone(),
            |m| black_box(solve_assignment(&m).unwrap()),
            BatchSize::SmallInput,
        )
    });
    group.finish();
}

/// Anchor matching plus robust model selection on one noisy document.
fn document_alignment(c: &mut Criterion) {
    let batch = noisy_batch(2);
    let form = &batch.forms[0];
    let (template, _) = &batch.templates[form.template_index];
    let cfg = PipelineConfig::default();
    let keys: Vec<_> = template
        .entries
        .iter()
        .map(|e| (e.key_text.clone(), e.key_point))
        .collect();
    let entities = consolidate(&form.doc, &cfg.consolidation);

    let mut group = c.benchmark_group("document_alignment");
    group.bench_function("match_and_fit", |b| {
        b.iter(|| {
            let anchors = match_anchors(black_box(&keys), black_box(&entities), &cfg.fuzzy);
            black_box(align_document(&entities, &anchors, &cfg.ransac))
        })
    });
    group.finish();
}

criterion_group!(benches, batch_extraction, assignment_solve, document_alignment);
criterion_main!(benches);
