//! Key-value pairing as a linear assignment problem.
//!
//! Every template value slot (row) must either claim one document entity
//! (column) or explicitly reject all of them; every entity can be claimed
//! at most once. Costs are pixel distances between where the template
//! expects a value and where an entity actually sits, so minimizing the
//! total cost picks the globally most plausible pairing rather than
//! letting rows grab greedily.
//!
//! Rejection is modelled inside the matrix: each row gets one dedicated
//! *dummy column* priced at the reject cost, so "leave this field empty"
//! competes on equal footing with every real entity. Forbidden pairs (too
//! far away, or the entity is a keyword anchor) and forced pairs are also
//! encoded in the matrix, as a large sentinel cost — both the exact solver
//! and the brute-force oracle therefore optimize the *same* objective.
//!
//! [`solve_assignment`] runs a shortest-augmenting-path solver (the
//! standard O(n^2 m) rectangular algorithm); [`brute_force_assignment`]
//! exhaustively enumerates injective row-to-column maps for small
//! instances and exists to cross-check the solver, so it deliberately
//! shares none of its machinery.

use crate::align::AnchorMatch;
use crate::geometry::{euclidean, BBox, Point};
use crate::ocr::{json_num, Entity};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AssignError {
    /// No feasible assignment below the forbidden sentinel exists. With a
    /// dummy column per row this cannot happen unless upstream invariants
    /// were violated, so treat it as a bug, not a runtime state.
    #[error("assignment is infeasible: some row can only take forbidden cells")]
    Infeasible,
    /// The brute-force oracle refuses instances with more than 8 rows.
    #[error("brute force limited to 8 rows, got {rows}")]
    SizeLimit { rows: usize },
    /// Structurally invalid costs or constraints.
    #[error("invalid assignment input: {0}")]
    InvalidInput(String),
}

// ── Templates ────────────────────────────────────────────────────────────────

/// One extractable field of a form template: the printed key, where the key
/// sits, and where the filled-in value is expected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KieEntry {
    pub key_text: String,
    pub key_point: Point,
    pub value_bbox: BBox,
}

/// A form template for extraction: its class label plus the value slots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KieTemplate {
    pub class_label: String,
    pub entries: Vec<KieEntry>,
}

impl KieTemplate {
    /// Key texts and positions, as consumed by anchor matching.
    pub fn keys(&self) -> Vec<(String, Point)> {
        self.entries
            .iter()
            .map(|e| (e.key_text.clone(), e.key_point))
            .collect()
    }
}

mod template_file {
    //! Serde mirror of the template file format: points and boxes come as
    //! plain arrays, and the key text field is simply `key`.
    use serde::{Deserialize, Serialize};

    #[derive(Serialize, Deserialize)]
    pub struct File {
        pub class_label: String,
        pub entries: Vec<Entry>,
    }

    #[derive(Serialize, Deserialize)]
    pub struct Entry {
        pub key: String,
        pub key_point: [f64; 2],
        pub value_bbox: [f64; 4],
    }
}

/// Parses a KIE template from JSON bytes, validating box invariants and
/// requiring at least one entry.
pub fn parse_kie_template_json(bytes: &[u8]) -> Result<KieTemplate, AssignError> {
    let raw: template_file::File =
        serde_json::from_slice(bytes).map_err(|e| AssignError::InvalidInput(e.to_string()))?;
    if raw.entries.is_empty() {
        return Err(AssignError::InvalidInput(
            "template has no entries".into(),
        ));
    }
    let mut entries = Vec::with_capacity(raw.entries.len());
    for (i, e) in raw.entries.iter().enumerate() {
        let [x0, y0, x1, y1] = e.value_bbox;
        let value_bbox = BBox::new(x0, y0, x1, y1)
            .map_err(|g| AssignError::InvalidInput(format!("entry {i}: {g}")))?;
        entries.push(KieEntry {
            key_text: e.key.clone(),
            key_point: Point::new(e.key_point[0], e.key_point[1]),
            value_bbox,
        });
    }
    Ok(KieTemplate {
        class_label: raw.class_label,
        entries,
    })
}

/// Serializes a KIE template to the JSON file format.
pub fn kie_template_to_json(t: &KieTemplate) -> Vec<u8> {
    use serde_json::{json, Value};
    let entries: Vec<Value> = t
        .entries
        .iter()
        .map(|e| {
            json!({
                "key": e.key_text,
                "key_point": [json_num(e.key_point.x), json_num(e.key_point.y)],
                "value_bbox": [
                    json_num(e.value_bbox.x_min),
                    json_num(e.value_bbox.y_min),
                    json_num(e.value_bbox.x_max),
                    json_num(e.value_bbox.y_max),
                ],
            })
        })
        .collect();
    let file = json!({ "class_label": t.class_label, "entries": entries });
    let mut out = serde_json::to_vec_pretty(&file).expect("template serializes");
    out.push(b'\n');
    out
}

// ── Constraints ──────────────────────────────────────────────────────────────

/// Hard pairing constraints: pairs that must not happen and pairs that must.
///
/// Forced pairs form a partial matching (no row or column twice) and never
/// overlap the forbidden set; construction validates both.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConstraintSet {
    pub forbidden: HashSet<(usize, usize)>,
    pub forced: Vec<(usize, usize)>,
}

impl ConstraintSet {
    pub fn new(
        forbidden: HashSet<(usize, usize)>,
        forced: Vec<(usize, usize)>,
    ) -> Result<Self, AssignError> {
        let mut rows = HashSet::new();
        let mut cols = HashSet::new();
        for &(i, j) in &forced {
            if !rows.insert(i) || !cols.insert(j) {
                return Err(AssignError::InvalidInput(format!(
                    "forced pairs are not a partial matching: ({i}, {j}) repeats a row or column"
                )));
            }
            if forbidden.contains(&(i, j)) {
                return Err(AssignError::InvalidInput(format!(
                    "pair ({i}, {j}) is both forced and forbidden"
                )));
            }
        }
        Ok(ConstraintSet { forbidden, forced })
    }
}

/// Derives the standard constraints for one document:
///
/// - entities consumed as keyword anchors are forbidden for every row (a
///   printed key is never a filled-in value);
/// - pairs whose distance exceeds `hard_radius` are forbidden outright.
pub fn build_constraints(
    template: &KieTemplate,
    entities: &[Entity],
    anchors: &[AnchorMatch],
    hard_radius: f64,
) -> ConstraintSet {
    let mut forbidden = HashSet::new();
    for a in anchors {
        for i in 0..template.entries.len() {
            forbidden.insert((i, a.entity_index));
        }
    }
    for (i, entry) in template.entries.iter().enumerate() {
        let expected = entry.value_bbox.top_left();
        for (j, e) in entities.iter().enumerate() {
            if euclidean(expected, e.anchor) > hard_radius {
                forbidden.insert((i, j));
            }
        }
    }
    ConstraintSet {
        forbidden,
        forced: Vec::new(),
    }
}

// ── Cost matrix ──────────────────────────────────────────────────────────────

/// The rectangular cost matrix of one assignment instance: `n` rows by
/// `m + n` columns, where columns past `m` are the per-row dummies.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    n_rows: usize,
    n_entities: usize,
    /// Flattened row-major, `costs[i * n_cols() + j]`.
    costs: Vec<f64>,
    reject_cost: f64,
}

impl CostMatrix {
    /// Sentinel pricing a cell out of any optimal solution. Far larger than
    /// `n * (page diagonal + reject cost)` for any real page, yet finite so
    /// the solver's arithmetic stays well-defined.
    pub const FORBIDDEN: f64 = 1e9;

    /// Builds a matrix from raw pairing costs (`n x m`, row-major),
    /// applying constraints and appending the dummy block.
    pub fn from_costs(
        n: usize,
        m: usize,
        real: &[f64],
        constraints: &ConstraintSet,
        reject_cost: f64,
    ) -> Result<Self, AssignError> {
        if real.len() != n * m {
            return Err(AssignError::InvalidInput(format!(
                "expected {} costs for {n} x {m}, got {}",
                n * m,
                real.len()
            )));
        }
        if !(reject_cost > 0.0 && reject_cost.is_finite()) {
            return Err(AssignError::InvalidInput(format!(
                "reject cost must be positive and finite, got {reject_cost}"
            )));
        }
        for (k, &c) in real.iter().enumerate() {
            if !c.is_finite() || c < 0.0 {
                return Err(AssignError::InvalidInput(format!(
                    "cost {k} is {c}; costs must be finite and non-negative"
                )));
            }
        }
        for &(i, j) in constraints.forbidden.iter().chain(&constraints.forced) {
            if i >= n || j >= m {
                return Err(AssignError::InvalidInput(format!(
                    "constraint ({i}, {j}) outside {n} x {m}"
                )));
            }
        }

        let n_cols = m + n;
        let mut costs = vec![Self::FORBIDDEN; n * n_cols];
        for i in 0..n {
            for j in 0..m {
                costs[i * n_cols + j] = if constraints.forbidden.contains(&(i, j)) {
                    Self::FORBIDDEN
                } else {
                    real[i * m + j]
                };
            }
            // One dedicated dummy per row: rejecting the row costs exactly
            // `reject_cost`; other rows cannot touch this dummy.
            costs[i * n_cols + m + i] = reject_cost;
        }
        for &(i, j) in &constraints.forced {
            // Price out every alternative in the row (its dummy included)
            // and every other row in the column.
            for jj in 0..n_cols {
                if jj != j {
                    costs[i * n_cols + jj] = Self::FORBIDDEN;
                }
            }
            for ii in 0..n {
                if ii != i {
                    costs[ii * n_cols + j] = Self::FORBIDDEN;
                }
            }
        }
        Ok(CostMatrix {
            n_rows: n,
            n_entities: m,
            costs,
            reject_cost,
        })
    }

    /// Builds the matrix for a template against a document's entities:
    /// the cost of pairing row `i` with entity `j` is the Euclidean
    /// distance from the expected value position (top-left of the entry's
    /// value box) to the entity's anchor.
    pub fn build(
        template: &KieTemplate,
        entities: &[Entity],
        constraints: &ConstraintSet,
        reject_cost: f64,
    ) -> Result<Self, AssignError> {
        let n = template.entries.len();
        let m = entities.len();
        let mut real = Vec::with_capacity(n * m);
        for entry in &template.entries {
            let expected = entry.value_bbox.top_left();
            for e in entities {
                real.push(euclidean(expected, e.anchor));
            }
        }
        Self::from_costs(n, m, &real, constraints, reject_cost)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_entities(&self) -> usize {
        self.n_entities
    }

    fn n_cols(&self) -> usize {
        self.n_entities + self.n_rows
    }

    pub fn cost(&self, row: usize, col: usize) -> f64 {
        self.costs[row * self.n_cols() + col]
    }

    pub fn reject_cost(&self) -> f64 {
        self.reject_cost
    }
}

// ── Solutions ────────────────────────────────────────────────────────────────

/// A complete assignment: every row appears exactly once, either paired
/// with an entity or rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentSolution {
    /// `(row, entity)` pairs, ordered by row.
    pub pairs: Vec<(usize, usize)>,
    /// Rows that took their dummy column, ascending.
    pub nulls: Vec<usize>,
    /// Total cost including one reject cost per null row.
    pub objective: f64,
}

impl AssignmentSolution {
    fn from_col4row(c: &CostMatrix, col4row: &[usize]) -> Result<Self, AssignError> {
        let m = c.n_entities;
        let mut pairs = Vec::new();
        let mut nulls = Vec::new();
        let mut objective = 0.0;
        for (i, &j) in col4row.iter().enumerate() {
            let cell = c.cost(i, j);
            if cell >= CostMatrix::FORBIDDEN {
                return Err(AssignError::Infeasible);
            }
            objective += cell;
            if j < m {
                pairs.push((i, j));
            } else {
                nulls.push(i);
            }
        }
        Ok(AssignmentSolution {
            pairs,
            nulls,
            objective,
        })
    }

    /// Structural verification against the instance it solves: each row
    /// covered exactly once, no entity claimed twice, no forbidden pair
    /// used, every forced pair present, and the objective consistent with
    /// the matrix. Returns a description of the first violation.
    pub fn verify(&self, c: &CostMatrix, constraints: &ConstraintSet) -> Result<(), String> {
        let mut row_seen = vec![0usize; c.n_rows];
        let mut col_seen = vec![0usize; c.n_entities];
        let mut objective = 0.0;
        for &(i, j) in &self.pairs {
            if i >= c.n_rows || j >= c.n_entities {
                return Err(format!("pair ({i}, {j}) out of range"));
            }
            row_seen[i] += 1;
            col_seen[j] += 1;
            if constraints.forbidden.contains(&(i, j)) {
                return Err(format!("forbidden pair ({i}, {j}) was used"));
            }
            objective += c.cost(i, j);
        }
        for &i in &self.nulls {
            if i >= c.n_rows {
                return Err(format!("null row {i} out of range"));
            }
            row_seen[i] += 1;
            objective += c.reject_cost;
        }
        if let Some(i) = row_seen.iter().position(|&k| k != 1) {
            return Err(format!("row {i} covered {} times, want exactly 1", row_seen[i]));
        }
        if let Some(j) = col_seen.iter().position(|&k| k > 1) {
            return Err(format!("entity {j} claimed {} times", col_seen[j]));
        }
        for &(i, j) in &constraints.forced {
            if !self.pairs.contains(&(i, j)) {
                return Err(format!("forced pair ({i}, {j}) missing"));
            }
        }
        if (objective - self.objective).abs() > 1e-6 {
            return Err(format!(
                "objective {} does not match recomputed {objective}",
                self.objective
            ));
        }
        Ok(())
    }
}

// ── Exact solver ─────────────────────────────────────────────────────────────

/// Solves the instance exactly by shortest augmenting paths.
///
/// One Dijkstra-style search per row over the reduced costs maintained by
/// dual variables; O(n^2 (m + n)) overall and entirely deterministic — no
/// randomization, fixed scan order, so equal-cost optima always resolve
/// the same way.
pub fn solve_assignment(c: &CostMatrix) -> Result<AssignmentSolution, AssignError> {
    let nr = c.n_rows;
    let nc = c.n_cols();
    if nr == 0 {
        return Ok(AssignmentSolution {
            pairs: Vec::new(),
            nulls: Vec::new(),
            objective: 0.0,
        });
    }
    debug_assert!(nc >= nr, "dummy block guarantees enough columns");

    let cost = &c.costs;
    let mut u = vec![0.0f64; nr];
    let mut v = vec![0.0f64; nc];
    let mut col4row = vec![usize::MAX; nr];
    let mut row4col = vec![usize::MAX; nc];

    for cur_row in 0..nr {
        // Grow a shortest alternating path from the unassigned row until it
        // reaches a free column.
        let mut shortest = vec![f64::INFINITY; nc];
        let mut path = vec![usize::MAX; nc];
        let mut scanned_rows = vec![false; nr];
        let mut scanned_cols = vec![false; nc];
        let mut remaining: Vec<usize> = (0..nc).rev().collect();
        let mut min_val = 0.0f64;
        let mut sink = usize::MAX;
        let mut i = cur_row;

        while sink == usize::MAX {
            scanned_rows[i] = true;
            let mut lowest = f64::INFINITY;
            let mut index = usize::MAX;
            for (it, &j) in remaining.iter().enumerate() {
                let r = min_val + cost[i * nc + j] - u[i] - v[j];
                if r < shortest[j] {
                    shortest[j] = r;
                    path[j] = i;
                }
                // Prefer free columns among equals so augmenting ends sooner.
                if shortest[j] < lowest
                    || (shortest[j] == lowest && row4col[j] == usize::MAX)
                {
                    lowest = shortest[j];
                    index = it;
                }
            }
            min_val = lowest;
            if !min_val.is_finite() {
                return Err(AssignError::Infeasible);
            }
            let j = remaining[index];
            if row4col[j] == usize::MAX {
                sink = j;
            } else {
                i = row4col[j];
            }
            scanned_cols[j] = true;
            remaining.swap_remove(index);
        }

        // Dual updates keep reduced costs non-negative for the next search.
        u[cur_row] += min_val;
        for ii in 0..nr {
            if scanned_rows[ii] && ii != cur_row {
                u[ii] += min_val - shortest[col4row[ii]];
            }
        }
        for j in 0..nc {
            if scanned_cols[j] {
                v[j] -= min_val - shortest[j];
            }
        }

        // Flip the alternating path to extend the matching by one.
        let mut j = sink;
        loop {
            let i = path[j];
            row4col[j] = i;
            std::mem::swap(&mut col4row[i], &mut j);
            if i == cur_row {
                break;
            }
        }
    }

    AssignmentSolution::from_col4row(c, &col4row)
}

// ── Brute-force oracle ───────────────────────────────────────────────────────

/// Exhaustively minimizes over all injective row-to-column maps.
///
/// Exists to cross-check [`solve_assignment`] on small instances and shares
/// no code with it. Rows try columns cheapest-first and branches whose
/// partial cost already meets the incumbent are cut — sound because costs
/// are non-negative, so the enumeration stays exhaustive in effect.
pub fn brute_force_assignment(c: &CostMatrix) -> Result<AssignmentSolution, AssignError> {
    const MAX_ROWS: usize = 8;
    let nr = c.n_rows;
    if nr > MAX_ROWS {
        return Err(AssignError::SizeLimit { rows: nr });
    }
    let nc = c.n_cols();
    if nr == 0 {
        return Ok(AssignmentSolution {
            pairs: Vec::new(),
            nulls: Vec::new(),
            objective: 0.0,
        });
    }

    // Cheapest-first column order per row tightens the incumbent early.
    let mut order: Vec<Vec<usize>> = Vec::with_capacity(nr);
    for i in 0..nr {
        let mut cols: Vec<usize> = (0..nc).collect();
        cols.sort_by(|&a, &b| c.cost(i, a).total_cmp(&c.cost(i, b)));
        order.push(cols);
    }

    struct Search<'a> {
        c: &'a CostMatrix,
        order: &'a [Vec<usize>],
        used: Vec<bool>,
        current: Vec<usize>,
        best_cost: f64,
        best: Vec<usize>,
    }

    impl Search<'_> {
        fn run(&mut self, row: usize, acc: f64) {
            if acc >= self.best_cost {
                return; // remaining costs are >= 0, cannot improve
            }
            if row == self.c.n_rows {
                self.best_cost = acc;
                self.best = self.current.clone();
                return;
            }
            for idx in 0..self.order[row].len() {
                let j = self.order[row][idx];
                if self.used[j] {
                    continue;
                }
                let step = self.c.cost(row, j);
                if acc + step >= self.best_cost {
                    break; // columns are sorted; nothing cheaper follows
                }
                self.used[j] = true;
                self.current.push(j);
                self.run(row + 1, acc + step);
                self.current.pop();
                self.used[j] = false;
            }
        }
    }

    let mut search = Search {
        c,
        order: &order,
        used: vec![false; nc],
        current: Vec::with_capacity(nr),
        best_cost: f64::INFINITY,
        best: Vec::new(),
    };
    search.run(0, 0.0);
    if search.best.is_empty() {
        return Err(AssignError::Infeasible);
    }
    AssignmentSolution::from_col4row(c, &search.best)
}

// ── Extraction ───────────────────────────────────────────────────────────────

/// One extracted field: the template key plus the entity it claimed, or
/// `None` everywhere when the row rejected all entities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractedField {
    pub key: String,
    pub value: Option<String>,
    pub bbox: Option<BBox>,
    /// The pairing cost actually paid (pixel distance), absent for nulls.
    pub cost: Option<f64>,
}

/// Materializes a solution into per-key records, in template entry order.
pub fn extract_key_values(
    template: &KieTemplate,
    entities: &[Entity],
    solution: &AssignmentSolution,
) -> Vec<ExtractedField> {
    let mut by_row: Vec<Option<usize>> = vec![None; template.entries.len()];
    for &(i, j) in &solution.pairs {
        by_row[i] = Some(j);
    }
    template
        .entries
        .iter()
        .zip(by_row)
        .enumerate()
        .map(|(i, (entry, claimed))| match claimed {
            Some(j) => {
                let e = &entities[j];
                ExtractedField {
                    key: entry.key_text.clone(),
                    value: Some(e.text.clone()),
                    bbox: Some(e.bbox),
                    cost: Some(euclidean(entry.value_bbox.top_left(), e.anchor)),
                }
            }
            None => {
                let _ = i;
                ExtractedField {
                    key: entry.key_text.clone(),
                    value: None,
                    bbox: None,
                    cost: None,
                }
            }
        })
        .collect()
}
