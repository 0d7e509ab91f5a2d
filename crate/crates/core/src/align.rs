//! Page alignment: snapping a scanned form onto its template's coordinate
//! frame using the printed keywords as anchors.
//!
//! Template keys ("Last Name", "Date of Birth", ...) appear on every
//! instance of a form, so entities whose text fuzzily matches a key act as
//! correspondences between the scan and the template. From those anchors a
//! transform is estimated by model selection over a ladder:
//!
//! - RANSAC similarity (scale, rotation, translation) whenever 2+ anchors
//!   exist — the model that matches what a flatbed scan actually does;
//! - RANSAC homography when 4+ anchors exist *and* its consensus clearly
//!   beats the similarity consensus — perspective has to prove itself,
//!   because an 8-dof fit through a handful of anchors will happily
//!   hallucinate perspective that sends the rest of the page far afield;
//! - identity, flagged as skipped, when neither can be estimated.
//!
//! Anchors also matter downstream: segment scaling derives its per-cell
//! offsets from them, and the assignment stage refuses to treat anchor
//! entities as field values.

use crate::geometry::{euclidean, manhattan, ransac_homography, Homography, Point};
use crate::ocr::Entity;
use rand::seq::index::sample as sample_indices;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

// ── Fuzzy string similarity ──────────────────────────────────────────────────

/// Levenshtein edit distance over characters, case-sensitive, O(min) space.
fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let (short, long) = if a.len() <= b.len() { (&a, &b) } else { (&b, &a) };
    let mut prev: Vec<usize> = (0..=short.len()).collect();
    let mut cur = vec![0usize; short.len() + 1];
    for (j, &cb) in long.iter().enumerate() {
        cur[0] = j + 1;
        for (i, &ca) in short.iter().enumerate() {
            let sub = prev[i] + usize::from(ca != cb);
            cur[i + 1] = sub.min(prev[i + 1] + 1).min(cur[i] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[short.len()]
}

/// Normalized, case-insensitive string similarity in [0, 1]:
/// `1 - lev(lower(a), lower(b)) / max(len)`. Two empty strings are
/// identical (1.0).
pub fn fuzzy_similarity(a: &str, b: &str) -> f64 {
    let a = a.to_lowercase();
    let b = b.to_lowercase();
    let max_len = a.chars().count().max(b.chars().count());
    if max_len == 0 {
        return 1.0;
    }
    1.0 - levenshtein(&a, &b) as f64 / max_len as f64
}

// ── Anchor matching ──────────────────────────────────────────────────────────

/// Gates for accepting an entity as the realization of a template key.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FuzzyConfig {
    /// Minimum normalized string similarity.
    pub min_similarity: f64,
    /// Maximum Manhattan distance (px) between the key's template position
    /// and the entity anchor.
    pub max_anchor_distance: f64,
}

impl Default for FuzzyConfig {
    fn default() -> Self {
        FuzzyConfig {
            min_similarity: 0.9,
            max_anchor_distance: 200.0,
        }
    }
}

/// One accepted key-entity correspondence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnchorMatch {
    /// Index into the template's key list.
    pub key_index: usize,
    /// Index into the entity list that was matched against.
    pub entity_index: usize,
    pub similarity: f64,
    /// Entity anchor in the document frame (correspondence source).
    pub src: Point,
    /// Key position in the template frame (correspondence destination).
    pub dst: Point,
}

/// Pairs template keys with document entities.
///
/// A pair is a candidate when the texts agree to at least `min_similarity`
/// and the positions sit within `max_anchor_distance` (Manhattan). From the
/// candidates a one-to-one matching is chosen greedily, best similarity
/// first, closer distance breaking ties, so each key and each entity is
/// used at most once. Returns matches ordered by key index.
pub fn match_anchors(
    keys: &[(String, Point)],
    entities: &[Entity],
    cfg: &FuzzyConfig,
) -> Vec<AnchorMatch> {
    struct Candidate {
        key: usize,
        entity: usize,
        similarity: f64,
        distance: f64,
    }
    let mut candidates = Vec::new();
    for (ki, (key_text, key_pos)) in keys.iter().enumerate() {
        for (ei, entity) in entities.iter().enumerate() {
            let similarity = fuzzy_similarity(key_text, &entity.text);
            if similarity < cfg.min_similarity {
                continue;
            }
            let distance = manhattan(*key_pos, entity.anchor);
            if distance > cfg.max_anchor_distance {
                continue;
            }
            candidates.push(Candidate {
                key: ki,
                entity: ei,
                similarity,
                distance,
            });
        }
    }
    // Best matches claim their key and entity first; index order makes the
    // remaining ties deterministic.
    candidates.sort_by(|a, b| {
        b.similarity
            .total_cmp(&a.similarity)
            .then(a.distance.total_cmp(&b.distance))
            .then(a.key.cmp(&b.key))
            .then(a.entity.cmp(&b.entity))
    });
    let mut key_used = vec![false; keys.len()];
    let mut entity_used = vec![false; entities.len()];
    let mut matches = Vec::new();
    for c in candidates {
        if key_used[c.key] || entity_used[c.entity] {
            continue;
        }
        key_used[c.key] = true;
        entity_used[c.entity] = true;
        matches.push(AnchorMatch {
            key_index: c.key,
            entity_index: c.entity,
            similarity: c.similarity,
            src: entities[c.entity].anchor,
            dst: keys[c.key].1,
        });
    }
    matches.sort_by_key(|m| m.key_index);
    matches
}

// ── Similarity transform ─────────────────────────────────────────────────────

/// Least-squares similarity transform (uniform scale + rotation +
/// translation) mapping `src` points onto `dst` points; needs 2+ points.
/// Returned as a homography with an affine upper block.
fn estimate_similarity(pairs: &[(Point, Point)]) -> Option<Homography> {
    let n = pairs.len() as f64;
    if pairs.len() < 2 {
        return None;
    }
    let (mut sx, mut sy, mut dx, mut dy) = (0.0, 0.0, 0.0, 0.0);
    for (s, d) in pairs {
        sx += s.x;
        sy += s.y;
        dx += d.x;
        dy += d.y;
    }
    let (sx, sy, dx, dy) = (sx / n, sy / n, dx / n, dy / n);
    // Accumulate cross-covariance terms of the centered clouds; the optimal
    // rotation+scale follows in closed form.
    let (mut a, mut b, mut denom) = (0.0, 0.0, 0.0);
    for (s, d) in pairs {
        let (ux, uy) = (s.x - sx, s.y - sy);
        let (vx, vy) = (d.x - dx, d.y - dy);
        a += ux * vx + uy * vy;
        b += ux * vy - uy * vx;
        denom += ux * ux + uy * uy;
    }
    if denom < 1e-12 {
        return None; // coincident source points
    }
    let (ca, cb) = (a / denom, b / denom); // s*cos(theta), s*sin(theta)
    let tx = dx - (ca * sx - cb * sy);
    let ty = dy - (cb * sx + ca * sy);
    Some(Homography {
        m: [[ca, -cb, tx], [cb, ca, ty], [0.0, 0.0, 1.0]],
    })
}

/// Robust similarity estimate: two-point hypotheses (every pair when the
/// pair count fits inside the iteration budget, seeded sampling otherwise),
/// consensus counted at `tol` reprojection error, winner refined by least
/// squares over its inliers. Returns the refined transform and the inlier
/// mask, or `None` when no hypothesis gathers two inliers.
fn ransac_similarity(
    pairs: &[(Point, Point)],
    tol: f64,
    iterations: u32,
    seed: u64,
) -> Option<(Homography, Vec<bool>)> {
    if pairs.len() < 2 {
        return None;
    }
    let inlier_mask = |h: &Homography| -> Vec<bool> {
        pairs
            .iter()
            .map(|(s, d)| matches!(h.apply(*s), Ok(p) if euclidean(p, *d) <= tol))
            .collect()
    };
    let n = pairs.len();
    let mut hypotheses: Vec<(usize, usize)> = Vec::new();
    if n * (n - 1) / 2 <= iterations as usize {
        for i in 0..n {
            for j in (i + 1)..n {
                hypotheses.push((i, j));
            }
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..iterations {
            let idx = sample_indices(&mut rng, n, 2);
            hypotheses.push((idx.index(0), idx.index(1)));
        }
    }
    let mut best: Option<(usize, Vec<bool>, Homography)> = None;
    for (i, j) in hypotheses {
        // A short baseline makes the two-point scale estimate explode on
        // jitter; such hypotheses are noise, not evidence.
        if euclidean(pairs[i].0, pairs[j].0) < 40.0 {
            continue;
        }
        let Some(h) = estimate_similarity(&[pairs[i], pairs[j]]) else {
            continue;
        };
        let mask = inlier_mask(&h);
        let count = mask.iter().filter(|&&b| b).count();
        if count >= 2 && best.as_ref().is_none_or(|(c, _, _)| count > *c) {
            best = Some((count, mask, h));
        }
    }
    let (count, mask, two_point) = best?;
    let consensus: Vec<(Point, Point)> = pairs
        .iter()
        .zip(&mask)
        .filter_map(|(p, &keep)| keep.then_some(*p))
        .collect();
    // Refine over the consensus, but keep the refinement only when it
    // loses no support.
    if let Some(refined) = estimate_similarity(&consensus) {
        let refined_mask = inlier_mask(&refined);
        if refined_mask.iter().filter(|&&b| b).count() >= count {
            return Some((refined, refined_mask));
        }
    }
    Some((two_point, mask))
}

// ── Document alignment ───────────────────────────────────────────────────────

/// RANSAC parameters for the 4+ anchor case.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RansacConfig {
    /// Reprojection error (px) below which an anchor counts as an inlier.
    pub inlier_tol: f64,
    /// Maximum sampling iterations.
    pub iterations: u32,
    pub seed: u64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        RansacConfig {
            // Tight enough that locally-warped anchors (a fold crease
            // shifts a whole band of the page coherently) count as
            // outliers instead of dragging the fit into a compromise
            // shear; the per-segment correction pass handles them later.
            inlier_tol: 10.0,
            iterations: 2000,
            seed: 7,
        }
    }
}

/// Which rung of the fallback ladder produced the transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlignMode {
    Homography,
    Similarity,
    Identity,
}

/// An aligned document: entities mapped into the template frame plus
/// diagnostics about how the transform was obtained.
#[derive(Debug, Clone)]
pub struct Alignment {
    pub entities: Vec<Entity>,
    pub transform: Homography,
    pub mode: AlignMode,
    /// Anchors available going in.
    pub anchors_found: usize,
    /// Anchors consistent with the final transform (equals `anchors_found`
    /// for the similarity fallback; 0 when skipped).
    pub inliers: usize,
    /// True when no transform could be estimated and identity was used.
    pub skipped: bool,
}

/// Maps every entity through the transform: boxes go corner-wise and are
/// re-normalized to axis-aligned hulls; anchors are recomputed as the new
/// top-left corners. Entities whose box cannot be projected are kept
/// unmapped (cannot happen for the transforms estimated here, which are
/// well-conditioned on the page).
fn map_entities(entities: &[Entity], h: &Homography) -> Vec<Entity> {
    entities
        .iter()
        .map(|e| {
            let bbox = h.map_bbox(&e.bbox).unwrap_or(e.bbox);
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

/// Minimum homography consensus before perspective is even considered:
/// eight degrees of freedom estimated from fewer points than this track
/// noise, not geometry.
const MIN_HOMOGRAPHY_SUPPORT: usize = 10;

/// How many extra inliers the homography must explain, over the similarity
/// consensus, to be chosen. A homography nests every similarity, so equal
/// support means the perspective terms bought nothing.
const HOMOGRAPHY_MARGIN: usize = 3;

/// Aligns a document onto the template frame from its anchor matches.
///
/// Both robust estimates run — a similarity whenever two anchors exist, a
/// homography whenever four do — and the homography is kept only when its
/// consensus beats the similarity's by [`HOMOGRAPHY_MARGIN`] with at least
/// [`MIN_HOMOGRAPHY_SUPPORT`] inliers. Real perspective shows up as a
/// consensus the similarity cannot reach; absent that evidence the
/// lower-dof model wins, because a homography squeezed through a handful
/// of anchors fits them perfectly and sends everything between them far
/// afield. With no usable estimate the document passes through unchanged
/// and is flagged as skipped.
pub fn align_document(entities: &[Entity], anchors: &[AnchorMatch], cfg: &RansacConfig) -> Alignment {
    let pairs: Vec<(Point, Point)> = anchors.iter().map(|a| (a.src, a.dst)).collect();

    let similarity = ransac_similarity(&pairs, cfg.inlier_tol, cfg.iterations, cfg.seed);
    let sim_inliers = similarity
        .as_ref()
        .map_or(0, |(_, m)| m.iter().filter(|&&b| b).count());

    if pairs.len() >= 4 {
        if let Ok((h, mask)) = ransac_homography(&pairs, cfg.inlier_tol, cfg.iterations, cfg.seed)
        {
            let inliers = mask.iter().filter(|&&b| b).count();
            if inliers >= MIN_HOMOGRAPHY_SUPPORT && inliers >= sim_inliers + HOMOGRAPHY_MARGIN {
                return Alignment {
                    entities: map_entities(entities, &h),
                    transform: h,
                    mode: AlignMode::Homography,
                    anchors_found: anchors.len(),
                    inliers,
                    skipped: false,
                };
            }
        }
    }
    if let Some((h, _)) = similarity {
        return Alignment {
            entities: map_entities(entities, &h),
            transform: h,
            mode: AlignMode::Similarity,
            anchors_found: anchors.len(),
            inliers: sim_inliers,
            skipped: false,
        };
    }
    Alignment {
        entities: entities.to_vec(),
        transform: Homography::identity(),
        mode: AlignMode::Identity,
        anchors_found: anchors.len(),
        inliers: 0,
        skipped: true,
    }
}
