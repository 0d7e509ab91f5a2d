//! Per-segment offset correction: the local clean-up pass after global
//! alignment.
//!
//! Scanned pages rarely distort uniformly — the top of a page can be offset
//! differently from the bottom (feed skew, lens bow). A single global
//! transform cannot absorb that, so the page is divided into a small grid
//! of equal-area cells (5 rows x 4 columns by default, twenty segments on
//! a letter-size page) and each cell gets its own additive offset: the mean
//! residual `(dst - src)` of the anchor matches whose source falls inside
//! it. Cells without anchors inherit the global mean; with no anchors at
//! all the correction is the identity.

use crate::align::AnchorMatch;
use crate::geometry::{BBox, Point};
use crate::ocr::Entity;
use serde::{Deserialize, Serialize};

/// Grid resolution for segment corrections.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridConfig {
    pub rows: usize,
    pub cols: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { rows: 5, cols: 4 }
    }
}

/// An equal-area cell division of a page.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentGrid {
    pub rows: usize,
    pub cols: usize,
    pub page_width: f64,
    pub page_height: f64,
}

impl SegmentGrid {
    /// Builds the grid; rows, cols and page dimensions must be positive.
    pub fn new(cfg: GridConfig, page_width: f64, page_height: f64) -> Self {
        assert!(cfg.rows > 0 && cfg.cols > 0, "grid must have cells");
        assert!(
            page_width > 0.0 && page_height > 0.0,
            "page must have positive extent"
        );
        SegmentGrid {
            rows: cfg.rows,
            cols: cfg.cols,
            page_width,
            page_height,
        }
    }

    pub fn cell_count(&self) -> usize {
        self.rows * self.cols
    }

    /// The cell containing a point. Cells are half-open on their lower
    /// edges (`[start, end)`), and points on or past the far page edge are
    /// clamped into the last row/column, so every point maps to exactly one
    /// cell.
    pub fn cell_of(&self, p: Point) -> (usize, usize) {
        let col = ((p.x / self.page_width * self.cols as f64).floor() as i64)
            .clamp(0, self.cols as i64 - 1) as usize;
        let row = ((p.y / self.page_height * self.rows as f64).floor() as i64)
            .clamp(0, self.rows as i64 - 1) as usize;
        (row, col)
    }

    /// Flat row-major index of a point's cell.
    pub fn cell_index(&self, p: Point) -> usize {
        let (row, col) = self.cell_of(p);
        row * self.cols + col
    }

    /// The rectangle of cell `(row, col)`. All cells have equal area and
    /// tile the page exactly (edges shared).
    pub fn cell_bbox(&self, row: usize, col: usize) -> BBox {
        let w = self.page_width / self.cols as f64;
        let h = self.page_height / self.rows as f64;
        BBox {
            x_min: col as f64 * w,
            y_min: row as f64 * h,
            x_max: (col + 1) as f64 * w,
            y_max: (row + 1) as f64 * h,
        }
    }
}

/// The additive offset of one cell plus how many anchors support it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellCorrection {
    pub dx: f64,
    pub dy: f64,
    /// Number of anchors that fell into this cell (0 means the global mean
    /// was inherited).
    pub support: usize,
}

/// Per-cell additive offsets for one page, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectionField {
    pub grid: SegmentGrid,
    pub cells: Vec<CellCorrection>,
    /// Mean offset over all anchors; (0, 0) when there are none.
    pub global: (f64, f64),
}

impl CorrectionField {
    /// The offset applied to a point at `p`.
    pub fn offset_at(&self, p: Point) -> (f64, f64) {
        let c = &self.cells[self.grid.cell_index(p)];
        (c.dx, c.dy)
    }
}

/// Computes per-cell corrections from anchor matches.
///
/// Each anchor contributes `(dst - src)` to the cell its *source* point
/// lies in; a cell's correction is the mean over its anchors. Anchor-less
/// cells inherit the global mean, and with zero anchors every cell is the
/// identity offset `(0, 0)`.
pub fn compute_corrections(grid: SegmentGrid, anchors: &[AnchorMatch]) -> CorrectionField {
    let n_cells = grid.cell_count();
    let mut sum = vec![(0.0f64, 0.0f64); n_cells];
    let mut count = vec![0usize; n_cells];
    let mut total = (0.0f64, 0.0f64);
    for a in anchors {
        let i = grid.cell_index(a.src);
        let (dx, dy) = (a.dst.x - a.src.x, a.dst.y - a.src.y);
        sum[i].0 += dx;
        sum[i].1 += dy;
        count[i] += 1;
        total.0 += dx;
        total.1 += dy;
    }
    let global = if anchors.is_empty() {
        (0.0, 0.0)
    } else {
        (total.0 / anchors.len() as f64, total.1 / anchors.len() as f64)
    };
    let cells = (0..n_cells)
        .map(|i| {
            if count[i] > 0 {
                CellCorrection {
                    dx: sum[i].0 / count[i] as f64,
                    dy: sum[i].1 / count[i] as f64,
                    support: count[i],
                }
            } else {
                CellCorrection {
                    dx: global.0,
                    dy: global.1,
                    support: 0,
                }
            }
        })
        .collect();
    CorrectionField {
        grid,
        cells,
        global,
    }
}

/// Applies the correction field: every entity is translated rigidly by the
/// offset of the cell its anchor point lies in. Order and all non-geometry
/// fields are preserved.
pub fn scale_entities(entities: &[Entity], field: &CorrectionField) -> Vec<Entity> {
    entities
        .iter()
        .map(|e| {
            let (dx, dy) = field.offset_at(e.anchor);
            let bbox = e.bbox.translate(dx, dy);
            Entity {
                text: e.text.clone(),
                bbox,
                anchor: bbox.top_left(),
                member_count: e.member_count,
                confidence: e.confidence,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn letter_grid() -> SegmentGrid {
        SegmentGrid::new(GridConfig::default(), 1700.0, 2200.0)
    }

    fn anchor(sx: f64, sy: f64, dx: f64, dy: f64) -> AnchorMatch {
        AnchorMatch {
            key_index: 0,
            entity_index: 0,
            similarity: 1.0,
            src: Point::new(sx, sy),
            dst: Point::new(sx + dx, sy + dy),
        }
    }

    fn entity(text: &str, x: f64, y: f64) -> Entity {
        let bbox = BBox::new(x, y, x + 80.0, y + 24.0).unwrap();
        Entity {
            text: text.into(),
            anchor: bbox.top_left(),
            bbox,
            member_count: 1,
            confidence: 1.0,
        }
    }

    #[test]
    fn letter_page_cells_are_425_by_440() {
        let g = letter_grid();
        assert_eq!(g.cell_count(), 20);
        let c = g.cell_bbox(0, 0);
        assert_relative_eq!(c.width(), 425.0);
        assert_relative_eq!(c.height(), 440.0);
    }

    #[test]
    fn corner_points_land_in_corner_cells() {
        let g = letter_grid();
        assert_eq!(g.cell_of(Point::new(0.0, 0.0)), (0, 0));
        assert_eq!(g.cell_of(Point::new(1699.0, 2199.0)), (4, 3));
        // The far edge itself clamps into the last cell.
        assert_eq!(g.cell_of(Point::new(1700.0, 2200.0)), (4, 3));
    }

    #[test]
    fn cells_tile_the_page_exactly() {
        let g = letter_grid();
        let mut area = 0.0;
        for r in 0..g.rows {
            for c in 0..g.cols {
                let b = g.cell_bbox(r, c);
                area += b.width() * b.height();
                // Shared edges with the right and lower neighbors.
                if c + 1 < g.cols {
                    assert_relative_eq!(b.x_max, g.cell_bbox(r, c + 1).x_min);
                }
                if r + 1 < g.rows {
                    assert_relative_eq!(b.y_max, g.cell_bbox(r + 1, c).y_min);
                }
            }
        }
        assert_relative_eq!(area, 1700.0 * 2200.0);
    }

    #[test]
    fn cell_offset_is_the_mean_of_its_anchors() {
        let g = letter_grid();
        // Two anchors in cell (0, 0) with offsets (10, 4) and (6, 8).
        let field = compute_corrections(
            g,
            &[anchor(100.0, 100.0, 10.0, 4.0), anchor(300.0, 200.0, 6.0, 8.0)],
        );
        let c = &field.cells[0];
        assert_relative_eq!(c.dx, 8.0);
        assert_relative_eq!(c.dy, 6.0);
        assert_eq!(c.support, 2);
    }

    #[test]
    fn empty_cells_inherit_the_global_mean() {
        let g = letter_grid();
        let field = compute_corrections(g, &[anchor(100.0, 100.0, 12.0, -4.0)]);
        // A far-away cell had no anchors.
        let far = &field.cells[g.cell_index(Point::new(1600.0, 2100.0))];
        assert_eq!(far.support, 0);
        assert_relative_eq!(far.dx, 12.0);
        assert_relative_eq!(far.dy, -4.0);
    }

    #[test]
    fn no_anchors_means_identity_correction() {
        let field = compute_corrections(letter_grid(), &[]);
        assert!(field
            .cells
            .iter()
            .all(|c| c.dx == 0.0 && c.dy == 0.0 && c.support == 0));
        let ents = vec![entity("x", 500.0, 700.0)];
        assert_eq!(scale_entities(&ents, &field), ents);
    }

    #[test]
    fn entities_translate_rigidly_by_their_cell_offset() {
        let g = letter_grid();
        let field = compute_corrections(g, &[anchor(100.0, 100.0, 10.0, 4.0)]);
        let ents = vec![entity("v", 200.0, 150.0)];
        let moved = scale_entities(&ents, &field);
        assert_relative_eq!(moved[0].bbox.x_min, 210.0);
        assert_relative_eq!(moved[0].bbox.y_min, 154.0);
        assert_relative_eq!(moved[0].bbox.width(), ents[0].bbox.width());
        assert_relative_eq!(moved[0].bbox.height(), ents[0].bbox.height());
        assert_eq!(moved[0].anchor, moved[0].bbox.top_left());
        assert_eq!(moved[0].text, "v");
    }

    #[test]
    fn second_pass_corrections_shrink() {
        // Apply corrections once, recompute on the corrected positions:
        // the residual offsets must not grow.
        let g = letter_grid();
        let anchors = vec![
            anchor(100.0, 100.0, 30.0, 10.0),
            anchor(200.0, 180.0, 26.0, 14.0),
            anchor(900.0, 1000.0, -12.0, 6.0),
            anchor(1500.0, 2000.0, 8.0, -20.0),
        ];
        let field = compute_corrections(g, &anchors);
        let moved: Vec<AnchorMatch> = anchors
            .iter()
            .map(|a| {
                let (dx, dy) = field.offset_at(a.src);
                AnchorMatch {
                    src: Point::new(a.src.x + dx, a.src.y + dy),
                    ..*a
                }
            })
            .collect();
        let second = compute_corrections(g, &moved);
        let norm = |f: &CorrectionField| {
            f.cells
                .iter()
                .map(|c| c.dx.hypot(c.dy))
                .fold(0.0f64, f64::max)
        };
        assert!(norm(&second) <= norm(&field) + 1e-9);
    }
}
