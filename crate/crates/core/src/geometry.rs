//! Planar geometry primitives shared by every stage of the pipeline.
//!
//! Everything works in page pixel coordinates: x grows rightwards, y grows
//! downwards, so the "top-left" corner of a box is `(x_min, y_min)`.
//!
//! - [`Point`] / [`BBox`]: axis-aligned boxes with min/max invariants.
//! - [`manhattan`] / [`euclidean`]: the two distances used for anchor
//!   gating and assignment costs.
//! - [`Homography`]: a 3x3 projective transform applied to points and
//!   (conservatively, via the corner hull) to axis-aligned boxes.
//! - [`estimate_homography`]: direct linear transform on normalized
//!   coordinates, least squares for more than four pairs.
//! - [`ransac_homography`]: seeded, reproducible robust estimation.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Denominators smaller than this count as a projection to infinity.
const W_EPSILON: f64 = 1e-9;
/// Determinant magnitudes below this mark a homography as singular.
const DET_EPSILON: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    /// A box whose minimum exceeds its maximum on some axis.
    #[error("inverted bounding box: ({x_min}, {y_min}, {x_max}, {y_max})")]
    InvertedBox {
        x_min: f64,
        y_min: f64,
        x_max: f64,
        y_max: f64,
    },
    /// Applying a homography produced a point at infinity (w ~ 0).
    #[error("projection is degenerate: homogeneous w = {w:.3e}")]
    DegenerateProjection { w: f64 },
    /// Fewer correspondences than the minimal sample of four.
    #[error("homography needs at least 4 point pairs, got {got}")]
    InsufficientPairs { got: usize },
    /// Source or destination points are collinear/coincident, or the fitted
    /// matrix came out singular.
    #[error("degenerate point configuration (collinear or coincident points)")]
    DegenerateConfiguration,
    /// RANSAC never found a consensus set large enough to refit.
    #[error("no RANSAC consensus: best inlier count {best} of {needed} required")]
    NoConsensus { needed: usize, best: usize },
}

// ── Points and boxes ─────────────────────────────────────────────────────────

/// A 2-D point in page pixel coordinates (y grows downwards).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }
}

/// Manhattan (L1) distance between two points.
pub fn manhattan(a: Point, b: Point) -> f64 {
    (a.x - b.x).abs() + (a.y - b.y).abs()
}

/// Euclidean (L2) distance between two points.
pub fn euclidean(a: Point, b: Point) -> f64 {
    (a.x - b.x).hypot(a.y - b.y)
}

/// An axis-aligned box with `x_min <= x_max` and `y_min <= y_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BBox {
    /// Builds a box, rejecting inverted extents.
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self, GeometryError> {
        if x_min > x_max || y_min > y_max {
            return Err(GeometryError::InvertedBox {
                x_min,
                y_min,
                x_max,
                y_max,
            });
        }
        Ok(BBox {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    /// Smallest box covering two arbitrary corner points (never fails).
    pub fn from_corners(a: Point, b: Point) -> Self {
        BBox {
            x_min: a.x.min(b.x),
            y_min: a.y.min(b.y),
            x_max: a.x.max(b.x),
            y_max: a.y.max(b.y),
        }
    }

    /// The reading-order reference corner: `(x_min, y_min)`.
    pub fn top_left(&self) -> Point {
        Point::new(self.x_min, self.y_min)
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn center(&self) -> Point {
        Point::new(
            (self.x_min + self.x_max) / 2.0,
            (self.y_min + self.y_max) / 2.0,
        )
    }

    /// Smallest box containing both operands (commutative, associative,
    /// idempotent).
    pub fn merge(&self, other: &BBox) -> BBox {
        BBox {
            x_min: self.x_min.min(other.x_min),
            y_min: self.y_min.min(other.y_min),
            x_max: self.x_max.max(other.x_max),
            y_max: self.y_max.max(other.y_max),
        }
    }

    /// True when the two boxes share any area or edge.
    pub fn intersects(&self, other: &BBox) -> bool {
        self.x_min <= other.x_max
            && other.x_min <= self.x_max
            && self.y_min <= other.y_max
            && other.y_min <= self.y_max
    }

    /// True when `other` lies entirely inside `self` (edges included).
    pub fn contains(&self, other: &BBox) -> bool {
        self.x_min <= other.x_min
            && self.y_min <= other.y_min
            && self.x_max >= other.x_max
            && self.y_max >= other.y_max
    }

    pub fn contains_point(&self, p: Point) -> bool {
        self.x_min <= p.x && p.x <= self.x_max && self.y_min <= p.y && p.y <= self.y_max
    }

    /// The box shifted rigidly by `(dx, dy)`.
    pub fn translate(&self, dx: f64, dy: f64) -> BBox {
        BBox {
            x_min: self.x_min + dx,
            y_min: self.y_min + dy,
            x_max: self.x_max + dx,
            y_max: self.y_max + dy,
        }
    }

    fn corners(&self) -> [Point; 4] {
        [
            Point::new(self.x_min, self.y_min),
            Point::new(self.x_max, self.y_min),
            Point::new(self.x_max, self.y_max),
            Point::new(self.x_min, self.y_max),
        ]
    }
}

// ── Homography ───────────────────────────────────────────────────────────────

/// A 3x3 projective transform in row-major order, normalized so that
/// `m[2][2] == 1` whenever it was produced by estimation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Homography {
    pub m: [[f64; 3]; 3],
}

impl Homography {
    pub fn identity() -> Self {
        Homography {
            m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        }
    }

    /// Applies the transform to a point; fails when the point maps to the
    /// plane at infinity.
    pub fn apply(&self, p: Point) -> Result<Point, GeometryError> {
        let m = &self.m;
        let w = m[2][0] * p.x + m[2][1] * p.y + m[2][2];
        if w.abs() <= W_EPSILON {
            return Err(GeometryError::DegenerateProjection { w });
        }
        Ok(Point::new(
            (m[0][0] * p.x + m[0][1] * p.y + m[0][2]) / w,
            (m[1][0] * p.x + m[1][1] * p.y + m[1][2]) / w,
        ))
    }

    /// Maps a box by transforming its four corners and taking the
    /// axis-aligned hull, so min/max invariants hold afterwards.
    pub fn map_bbox(&self, b: &BBox) -> Result<BBox, GeometryError> {
        let mut x_min = f64::INFINITY;
        let mut y_min = f64::INFINITY;
        let mut x_max = f64::NEG_INFINITY;
        let mut y_max = f64::NEG_INFINITY;
        for corner in b.corners() {
            let q = self.apply(corner)?;
            x_min = x_min.min(q.x);
            y_min = y_min.min(q.y);
            x_max = x_max.max(q.x);
            y_max = y_max.max(q.y);
        }
        Ok(BBox {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    pub fn det(&self) -> f64 {
        let m = &self.m;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    /// Row-major flattening, used by diagnostic reports.
    pub fn to_flat(&self) -> [f64; 9] {
        let m = &self.m;
        [
            m[0][0], m[0][1], m[0][2], m[1][0], m[1][1], m[1][2], m[2][0], m[2][1], m[2][2],
        ]
    }

    /// The composition `self ∘ inner`: applies `inner` first, then `self`.
    /// Normalized so `m[2][2] == 1` when the product allows it.
    pub fn compose(&self, inner: &Homography) -> Homography {
        let (a, b) = (&self.m, &inner.m);
        let mut m = [[0.0f64; 3]; 3];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = (0..3).map(|k| a[i][k] * b[k][j]).sum();
            }
        }
        let w = m[2][2];
        if w.abs() > W_EPSILON {
            for row in &mut m {
                for cell in row.iter_mut() {
                    *cell /= w;
                }
            }
        }
        Homography { m }
    }
}

/// Similarity normalization: translate the centroid to the origin and scale
/// so the mean distance from it is sqrt(2). Returns the transform and the
/// normalized points, or `None` when all points coincide.
fn normalize_points(pts: &[Point]) -> Option<(nalgebra::Matrix3<f64>, Vec<Point>)> {
    let n = pts.len() as f64;
    let cx = pts.iter().map(|p| p.x).sum::<f64>() / n;
    let cy = pts.iter().map(|p| p.y).sum::<f64>() / n;
    let mean_dist = pts
        .iter()
        .map(|p| (p.x - cx).hypot(p.y - cy))
        .sum::<f64>()
        / n;
    if mean_dist < 1e-12 {
        return None;
    }
    let s = std::f64::consts::SQRT_2 / mean_dist;
    let t = nalgebra::Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0);
    let normalized = pts
        .iter()
        .map(|p| Point::new(s * (p.x - cx), s * (p.y - cy)))
        .collect();
    Some((t, normalized))
}

/// Estimates the homography mapping `src` points onto `dst` points with the
/// direct linear transform. Four pairs give an (up to numerics) exact
/// interpolant; more pairs give the algebraic least-squares fit.
pub fn estimate_homography(pairs: &[(Point, Point)]) -> Result<Homography, GeometryError> {
    if pairs.len() < 4 {
        return Err(GeometryError::InsufficientPairs { got: pairs.len() });
    }
    let src: Vec<Point> = pairs.iter().map(|&(s, _)| s).collect();
    let dst: Vec<Point> = pairs.iter().map(|&(_, d)| d).collect();
    let (t_src, src_n) =
        normalize_points(&src).ok_or(GeometryError::DegenerateConfiguration)?;
    let (t_dst, dst_n) =
        normalize_points(&dst).ok_or(GeometryError::DegenerateConfiguration)?;

    // Each correspondence contributes two rows to the 2n x 9 design matrix.
    let mut a = nalgebra::DMatrix::<f64>::zeros(2 * pairs.len(), 9);
    for (i, (s, d)) in src_n.iter().zip(dst_n.iter()).enumerate() {
        let (x, y, u, v) = (s.x, s.y, d.x, d.y);
        let r = 2 * i;
        a[(r, 0)] = -x;
        a[(r, 1)] = -y;
        a[(r, 2)] = -1.0;
        a[(r, 6)] = u * x;
        a[(r, 7)] = u * y;
        a[(r, 8)] = u;
        a[(r + 1, 3)] = -x;
        a[(r + 1, 4)] = -y;
        a[(r + 1, 5)] = -1.0;
        a[(r + 1, 6)] = v * x;
        a[(r + 1, 7)] = v * y;
        a[(r + 1, 8)] = v;
    }

    // The solution is the null direction of A, i.e. the eigenvector of A^T A
    // with the smallest eigenvalue. A^T A is only 9x9, so this is cheap.
    let ata = a.transpose() * &a;
    let eigen = nalgebra::SymmetricEigen::new(ata);
    let mut order: Vec<usize> = (0..9).collect();
    order.sort_by(|&i, &j| eigen.eigenvalues[i].total_cmp(&eigen.eigenvalues[j]));

    // A unique solution needs a one-dimensional null space. Collinear or
    // coincident configurations drop the rank further, which shows up as a
    // (near-)zero *second* eigenvalue.
    let lambda_max = eigen.eigenvalues[order[8]].max(1e-12);
    if eigen.eigenvalues[order[1]] <= 1e-9 * lambda_max {
        return Err(GeometryError::DegenerateConfiguration);
    }
    let h = eigen.eigenvectors.column(order[0]);
    let h_norm = nalgebra::Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);

    // Undo the similarity normalizations: H = T_dst^-1 * H_n * T_src.
    let t_dst_inv = t_dst
        .try_inverse()
        .ok_or(GeometryError::DegenerateConfiguration)?;
    let h_full = t_dst_inv * h_norm * t_src;

    let scale = h_full[(2, 2)];
    if scale.abs() < DET_EPSILON {
        return Err(GeometryError::DegenerateConfiguration);
    }
    let mut m = [[0.0; 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            m[r][c] = h_full[(r, c)] / scale;
        }
    }
    let h = Homography { m };
    if h.det().abs() <= DET_EPSILON {
        return Err(GeometryError::DegenerateConfiguration);
    }
    Ok(h)
}

/// Reprojection error of one correspondence, or infinity when the point
/// cannot be projected.
fn reprojection_error(h: &Homography, pair: &(Point, Point)) -> f64 {
    match h.apply(pair.0) {
        Ok(p) => euclidean(p, pair.1),
        Err(_) => f64::INFINITY,
    }
}

/// Robustly estimates a homography from correspondences that may contain
/// outliers. Returns the refit model together with the inlier mask
/// (`mask[i]` is true when pair `i` agreed with the model within
/// `inlier_tol` pixels).
///
/// The estimate is bitwise reproducible: identical inputs and seed produce
/// identical output. Iteration stops early once the standard 99.9%
/// confidence bound says more sampling cannot improve the consensus.
pub fn ransac_homography(
    pairs: &[(Point, Point)],
    inlier_tol: f64,
    iterations: u32,
    seed: u64,
) -> Result<(Homography, Vec<bool>), GeometryError> {
    const MIN_SAMPLE: usize = 4;
    let n = pairs.len();
    if n < MIN_SAMPLE {
        return Err(GeometryError::InsufficientPairs { got: n });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best_count = 0usize;
    let mut best_mask = vec![false; n];
    let mut best_model: Option<Homography> = None;
    let mut required = iterations as f64;

    let mut iter = 0u32;
    while (iter as f64) < required && iter < iterations {
        iter += 1;
        let idx = sample(&mut rng, n, MIN_SAMPLE);
        let minimal: Vec<(Point, Point)> = idx.iter().map(|i| pairs[i]).collect();
        let model = match estimate_homography(&minimal) {
            Ok(h) => h,
            Err(_) => continue, // degenerate sample, draw again
        };
        let mask: Vec<bool> = pairs
            .iter()
            .map(|p| reprojection_error(&model, p) <= inlier_tol)
            .collect();
        let count = mask.iter().filter(|&&b| b).count();
        if count > best_count {
            best_count = count;
            best_mask = mask;
            best_model = Some(model);
            // Update the adaptive stopping bound from the inlier ratio.
            let w = count as f64 / n as f64;
            let p_good = 1.0 - (1.0 - w.powi(4)).max(1e-12);
            required = if p_good >= 1.0 {
                0.0
            } else {
                ((1.0f64 - 0.999).ln() / (1.0 - p_good).ln()).min(iterations as f64)
            };
            if count == n {
                break;
            }
        }
    }

    if best_count < MIN_SAMPLE {
        return Err(GeometryError::NoConsensus {
            needed: MIN_SAMPLE,
            best: best_count,
        });
    }

    // Refit on the full consensus set; keep the refit only if it explains
    // at least as many pairs as the minimal-sample model did.
    let consensus: Vec<(Point, Point)> = pairs
        .iter()
        .zip(&best_mask)
        .filter(|(_, &keep)| keep)
        .map(|(&p, _)| p)
        .collect();
    if let Ok(refit) = estimate_homography(&consensus) {
        let mask: Vec<bool> = pairs
            .iter()
            .map(|p| reprojection_error(&refit, p) <= inlier_tol)
            .collect();
        let count = mask.iter().filter(|&&b| b).count();
        if count >= best_count {
            return Ok((refit, mask));
        }
    }
    Ok((best_model.expect("consensus implies a model"), best_mask))
}
