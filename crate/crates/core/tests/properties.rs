//! Property tests: invariants that must hold for *every* cost matrix and
//! token set, not just the curated fixtures. Strategies generate small
//! instances so the exhaustive oracle stays affordable.

use formx_core::assign::{
    brute_force_assignment, solve_assignment, ConstraintSet, CostMatrix,
};
use formx_core::geometry::BBox;
use formx_core::ocr::{consolidate, ConsolidationConfig, OcrDocument, Token};
use proptest::collection::vec;
use proptest::prelude::*;
use std::collections::HashSet;

// ── Strategies ───────────────────────────────────────────────────────────────

#[derive(Debug, Clone)]
struct RawInstance {
    rows: usize,
    cols: usize,
    costs: Vec<f64>,
    forbidden: Vec<(usize, usize)>,
    forced: Option<(usize, usize)>,
    reject_cost: f64,
}

fn instances() -> impl Strategy<Value = RawInstance> {
    (1usize..=5, 0usize..=6)
        .prop_flat_map(|(rows, cols)| {
            let costs = vec(0.0f64..300.0, rows * cols);
            let forbidden = vec((0..rows, 0..cols.max(1)), 0..=3);
            let forced = proptest::option::of((0..rows, 0..cols.max(1)));
            let reject = 50.0f64..200.0;
            (Just(rows), Just(cols), costs, forbidden, forced, reject)
        })
        .prop_map(|(rows, cols, costs, forbidden, forced, reject_cost)| {
            // A forced pair must refer to a real column and not collide
            // with a forbidden one; drop it otherwise.
            let forbidden: Vec<(usize, usize)> = if cols == 0 {
                Vec::new()
            } else {
                forbidden
            };
            let forced = forced.filter(|p| cols > 0 && !forbidden.contains(p));
            RawInstance {
                rows,
                cols,
                costs,
                forbidden,
                forced,
                reject_cost,
            }
        })
}

fn build(instance: &RawInstance) -> (CostMatrix, ConstraintSet) {
    let forbidden: HashSet<(usize, usize)> = instance.forbidden.iter().copied().collect();
    let forced: Vec<(usize, usize)> = instance.forced.into_iter().collect();
    let constraints = ConstraintSet::new(forbidden, forced).expect("generated constraints are valid");
    let matrix = CostMatrix::from_costs(
        instance.rows,
        instance.cols,
        &instance.costs,
        &constraints,
        instance.reject_cost,
    )
    .expect("generated instances are structurally valid");
    (matrix, constraints)
}

fn line_documents() -> impl Strategy<Value = OcrDocument> {
    // Tokens laid out in horizontal lines with small vertical scatter: the
    // shape real OCR output has, and the one consolidation is defined over.
    vec(
        (
            0usize..6,             // line index
            0.0f64..1500.0,        // x origin
            10.0f64..200.0,        // width
            -6.0f64..6.0,          // vertical scatter
            18.0f64..30.0,         // height
        ),
        0..40,
    )
    .prop_map(|specs| {
        let tokens: Vec<Token> = specs
            .iter()
            .enumerate()
            .map(|(i, &(line, x, w, dy, h))| {
                let y = 80.0 + line as f64 * 90.0 + dy;
                Token {
                    text: format!("t{i}"),
                    bbox: BBox::new(x, y, x + w, y + h).unwrap(),
                    confidence: 1.0,
                }
            })
            .collect();
        OcrDocument {
            source_id: "prop".into(),
            page_width: 1700.0,
            page_height: 2200.0,
            tokens,
        }
    })
}

// ── Properties ───────────────────────────────────────────────────────────────

proptest! {
    /// The incremental solver and the exhaustive oracle agree on the
    /// optimal objective for every feasible instance, and the returned
    /// assignment verifies against the matrix it came from.
    #[test]
    fn solver_is_exact_and_feasible(instance in instances()) {
        let (c, constraints) = build(&instance);
        let fast = solve_assignment(&c).expect("solver must succeed");
        fast.verify(&c, &constraints).expect("solution must verify");
        let slow = brute_force_assignment(&c).expect("oracle must succeed");
        prop_assert!(
            (fast.objective - slow.objective).abs() < 1e-6,
            "solver {} vs oracle {}",
            fast.objective,
            slow.objective
        );
    }

    /// Raising the rejection price never lowers the optimal objective,
    /// and every extra unit of rejection price is paid at most once per
    /// rejected row: the objective is monotone and 1-Lipschitz per row in
    /// the rejection cost.
    #[test]
    fn rejection_price_moves_the_objective_monotonically(
        instance in instances(),
        bump in 1.0f64..100.0,
    ) {
        let (cheap, _) = build(&instance);
        let mut pricier = instance.clone();
        pricier.reject_cost += bump;
        let (pricey, _) = build(&pricier);
        let lo = solve_assignment(&cheap).unwrap();
        let hi = solve_assignment(&pricey).unwrap();
        prop_assert!(hi.objective >= lo.objective - 1e-9);
        let max_extra = bump * instance.rows as f64;
        prop_assert!(hi.objective <= lo.objective + max_extra + 1e-9);
    }

    /// Consolidation partitions the token set: every token is counted by
    /// exactly one entity, and every entity's box contains the boxes of
    /// the tokens that formed it.
    #[test]
    fn consolidation_partitions_and_contains(doc in line_documents()) {
        let cfg = ConsolidationConfig::default();
        let entities = consolidate(&doc, &cfg);
        let counted: usize = entities.iter().map(|e| e.member_count).sum();
        prop_assert_eq!(counted, doc.tokens.len());
        for t in &doc.tokens {
            let inside = entities.iter().any(|e| {
                e.bbox.x_min <= t.bbox.x_min + 1e-9
                    && e.bbox.y_min <= t.bbox.y_min + 1e-9
                    && e.bbox.x_max >= t.bbox.x_max - 1e-9
                    && e.bbox.y_max >= t.bbox.y_max - 1e-9
            });
            prop_assert!(inside, "token at {:?} not contained", t.bbox);
        }
    }
}
