//! Efficient subwindow search: exact global maximization of the box score
//! over all subwindows of a score map.
//!
//! Candidate boxes are grouped into [`BoxSet`]s, Cartesian products of four
//! closed integer intervals (one per box coordinate). A best-first search
//! keeps a priority queue of sets ordered by an admissible upper bound on the
//! best box score inside the set; sets are split on their widest interval
//! until a singleton proves optimal.
//!
//! The bound is the classic two-part construction: positive scores summed
//! over the largest box of the set plus negative scores summed over the
//! smallest, using the map's positive/negative integral images.

use std::collections::BinaryHeap;

use crate::bbox::BoundingBox;
use crate::error::{Error, Result};
use crate::scoremap::ScoreMap;

/// Default activation thresholds: bounding-box mean probability must exceed
/// 0.5 and the box must cover at least 5% of the image.
pub const DEFAULT_CONFIDENCE_THRESHOLD: f64 = 0.5;
pub const DEFAULT_AREA_THRESHOLD: f64 = 0.05;

/// Closed integer interval [lo, hi].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Interval {
    pub lo: u32,
    pub hi: u32,
}

impl Interval {
    fn new(lo: u32, hi: u32) -> Interval {
        debug_assert!(lo <= hi);
        Interval { lo, hi }
    }

    fn width(&self) -> u32 {
        self.hi - self.lo
    }

    fn is_point(&self) -> bool {
        self.lo == self.hi
    }

    fn halves(&self) -> (Interval, Interval) {
        debug_assert!(!self.is_point());
        let mid = self.lo + (self.hi - self.lo) / 2;
        (Interval::new(self.lo, mid), Interval::new(mid + 1, self.hi))
    }
}

/// A set of candidate boxes: one interval per box coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoxSet {
    pub x1: Interval,
    pub y1: Interval,
    pub x2: Interval,
    pub y2: Interval,
}

impl BoxSet {
    /// All boxes of a `width` x `height` map.
    pub fn full(width: u32, height: u32) -> BoxSet {
        debug_assert!(width >= 1 && height >= 1);
        BoxSet {
            x1: Interval::new(0, width - 1),
            y1: Interval::new(0, height - 1),
            x2: Interval::new(0, width - 1),
            y2: Interval::new(0, height - 1),
        }
    }

    /// The set is feasible when it contains at least one valid box.
    pub fn is_feasible(&self) -> bool {
        self.x1.lo <= self.x2.hi && self.y1.lo <= self.y2.hi
    }

    pub fn is_singleton(&self) -> bool {
        self.x1.is_point() && self.y1.is_point() && self.x2.is_point() && self.y2.is_point()
    }

    /// The concrete box of a singleton set.
    pub fn as_box(&self) -> Option<BoundingBox> {
        if !self.is_singleton() || !self.is_feasible() {
            return None;
        }
        Some(BoundingBox {
            x1: self.x1.lo,
            y1: self.y1.lo,
            x2: self.x2.lo,
            y2: self.y2.lo,
        })
    }

    /// Largest box: earliest top-left corner, latest bottom-right corner.
    fn largest(&self) -> (u32, u32, u32, u32) {
        (self.x1.lo, self.y1.lo, self.x2.hi, self.y2.hi)
    }

    /// Smallest box (the region shared by every box in the set), if any.
    fn smallest(&self) -> Option<(u32, u32, u32, u32)> {
        if self.x1.hi <= self.x2.lo && self.y1.hi <= self.y2.lo {
            Some((self.x1.hi, self.y1.hi, self.x2.lo, self.y2.lo))
        } else {
            None
        }
    }

    /// Splits the widest interval at its midpoint. Width ties resolve in the
    /// fixed order x1, y1, x2, y2. Children may be infeasible.
    pub fn split(&self) -> (BoxSet, BoxSet) {
        debug_assert!(!self.is_singleton());
        let widths = [
            self.x1.width(),
            self.y1.width(),
            self.x2.width(),
            self.y2.width(),
        ];
        let mut pick = 0;
        for (i, w) in widths.iter().enumerate() {
            if *w > widths[pick] {
                pick = i;
            }
        }
        let mut left = *self;
        let mut right = *self;
        match pick {
            0 => {
                let (a, b) = self.x1.halves();
                left.x1 = a;
                right.x1 = b;
            }
            1 => {
                let (a, b) = self.y1.halves();
                left.y1 = a;
                right.y1 = b;
            }
            2 => {
                let (a, b) = self.x2.halves();
                left.x2 = a;
                right.x2 = b;
            }
            _ => {
                let (a, b) = self.y2.halves();
                left.y2 = a;
                right.y2 = b;
            }
        }
        (left, right)
    }

    /// Enumerates every valid box in the set. Test/oracle use only.
    pub fn enumerate(&self) -> Vec<BoundingBox> {
        let mut out = Vec::new();
        for y1 in self.y1.lo..=self.y1.hi {
            for x1 in self.x1.lo..=self.x1.hi {
                for y2 in self.y2.lo.max(y1)..=self.y2.hi {
                    for x2 in self.x2.lo.max(x1)..=self.x2.hi {
                        out.push(BoundingBox { x1, y1, x2, y2 });
                    }
                }
            }
        }
        out
    }
}

/// Upper bound on `box_sum` over every box in the set: positive part of the
/// largest box plus negative part of the smallest. Tight on singletons.
pub fn upper_bound(set: &BoxSet, map: &ScoreMap) -> Result<f64> {
    if !set.is_feasible() {
        return Err(Error::InvalidInput(format!(
            "infeasible box set {set:?}"
        )));
    }
    Ok(upper_bound_unchecked(set, map))
}

fn upper_bound_unchecked(set: &BoxSet, map: &ScoreMap) -> f64 {
    let (lx1, ly1, lx2, ly2) = set.largest();
    let pos = map.rect_sum_pos_raw(lx1, ly1, lx2, ly2);
    let neg = match set.smallest() {
        Some((sx1, sy1, sx2, sy2)) => map.rect_sum_neg_raw(sx1, sy1, sx2, sy2),
        None => 0.0,
    };
    pos + neg
}

/// Counters describing one search run.
#[derive(Debug, Clone, Copy, Default)]
pub struct SearchStats {
    /// Number of upper-bound evaluations performed.
    pub bound_evaluations: u64,
    /// Number of sets popped from the queue.
    pub nodes_popped: u64,
}

struct Node {
    bound: f64,
    seq: u64,
    set: BoxSet,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.bound == other.bound && self.seq == other.seq
    }
}
impl Eq for Node {}

impl Ord for Node {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // max-heap on bound; FIFO (lowest sequence number first) on ties
        self.bound
            .total_cmp(&other.bound)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

fn lex_less(a: &BoundingBox, b: &BoundingBox) -> bool {
    a.lex_key() < b.lex_key()
}

/// Returns the box maximizing `box_sum` over all subwindows, with its value.
/// Among equal-value optima the lexicographically smallest box under
/// (y1, x1, y2, x2) is returned.
pub fn ess_search(map: &ScoreMap) -> (BoundingBox, f64) {
    let (result, _) = ess_search_with_stats(map);
    result
}

/// Like [`ess_search`], also reporting search effort counters.
pub fn ess_search_with_stats(map: &ScoreMap) -> ((BoundingBox, f64), SearchStats) {
    let mut stats = SearchStats::default();

    // A map without positive scores is maximized by its best single pixel
    // (row-major argmax, which is also the lexicographic tie-break winner).
    if map.max_score() <= 0.0 {
        let mut best = (BoundingBox::new(0, 0, 0, 0).unwrap(), f64::NEG_INFINITY);
        for y in 0..map.height() {
            for x in 0..map.width() {
                // read through the integral image for bit-identical values
                let s = map.rect_sum_raw(x, y, x, y);
                if s > best.1 {
                    best = (BoundingBox { x1: x, y1: y, x2: x, y2: y }, s);
                }
            }
        }
        return (best, stats);
    }

    let mut heap = BinaryHeap::new();
    let mut seq = 0u64;
    let root = BoxSet::full(map.width(), map.height());
    stats.bound_evaluations += 1;
    heap.push(Node {
        bound: upper_bound_unchecked(&root, map),
        seq,
        set: root,
    });

    // Seed the incumbent with the best single pixel so subtrees below that
    // value are pruned from the start. Ties with the true optimum are safe:
    // the loop keeps popping while the bound equals the incumbent value and
    // applies the lexicographic rule on every equal-value singleton.
    let mut best: Option<(BoundingBox, f64)> = None;
    for y in 0..map.height() {
        for x in 0..map.width() {
            // read through the integral image so values are bit-identical
            // with every other candidate evaluation
            let s = map.rect_sum_raw(x, y, x, y);
            if best.map_or(true, |(_, v)| s > v) {
                best = Some((BoundingBox { x1: x, y1: y, x2: x, y2: y }, s));
            }
        }
    }
    while let Some(node) = heap.pop() {
        if let Some((_, best_value)) = best {
            // Everything left in the queue is bounded by node.bound, so once
            // it drops below the incumbent value no better (or equal, hence
            // tie-relevant) box remains.
            if node.bound < best_value {
                break;
            }
        }
        stats.nodes_popped += 1;
        if let Some(bbox) = node.set.as_box() {
            // evaluate exactly; the pos/neg split in the bound can differ
            // from the plain sum in the last ulp
            let value = map.rect_sum_raw(bbox.x1, bbox.y1, bbox.x2, bbox.y2);
            let replace = match &best {
                None => true,
                Some((best_box, best_value)) => {
                    value > *best_value || (value == *best_value && lex_less(&bbox, best_box))
                }
            };
            if replace {
                best = Some((bbox, value));
            }
            continue;
        }
        let (left, right) = node.set.split();
        for child in [left, right] {
            if !child.is_feasible() {
                continue;
            }
            stats.bound_evaluations += 1;
            let bound = upper_bound_unchecked(&child, map);
            if let Some((_, best_value)) = best {
                if bound < best_value {
                    continue;
                }
            }
            seq += 1;
            heap.push(Node {
                bound,
                seq,
                set: child,
            });
        }
    }
    (best.expect("non-empty map always yields a box"), stats)
}

/// Guard for the brute-force oracle: refuse maps with more pixels than this.
pub const BRUTE_FORCE_PIXEL_GUARD: u64 = 4096;

/// Enumerates every box and returns the maximum, with the same tie-break rule
/// as [`ess_search`]. Refuses maps larger than [`BRUTE_FORCE_PIXEL_GUARD`].
pub fn brute_force_search(map: &ScoreMap) -> Result<(BoundingBox, f64)> {
    if map.num_pixels() > BRUTE_FORCE_PIXEL_GUARD {
        return Err(Error::GuardExceeded(format!(
            "brute force limited to {BRUTE_FORCE_PIXEL_GUARD} pixels, map has {}",
            map.num_pixels()
        )));
    }
    let mut best: Option<(BoundingBox, f64)> = None;
    for y1 in 0..map.height() {
        for x1 in 0..map.width() {
            for y2 in y1..map.height() {
                for x2 in x1..map.width() {
                    let value = map.rect_sum_raw(x1, y1, x2, y2);
                    // ascending (y1, x1, y2, x2) scan order + strict `>` keeps
                    // the lexicographically smallest optimum
                    if best.map_or(true, |(_, v)| value > v) {
                        best = Some((BoundingBox { x1, y1, x2, y2 }, value));
                    }
                }
            }
        }
    }
    Ok(best.expect("non-empty map"))
}

/// Detection result for one concept on one image.
#[derive(Debug, Clone)]
pub struct ConceptActivation {
    pub concept_id: String,
    pub bbox: BoundingBox,
    /// Mean probability of the probability view inside the box.
    pub confidence: f64,
    /// Box area divided by image area.
    pub area_fraction: f64,
    pub active: bool,
}

/// Runs the subwindow search and applies the activation rule: a concept is
/// active when its best box has mean probability above `confidence_threshold`
/// and covers at least `area_threshold` of the image.
pub fn detect_activation(
    map: &ScoreMap,
    confidence_threshold: f64,
    area_threshold: f64,
) -> ConceptActivation {
    let (bbox, _) = ess_search(map);
    let confidence = map
        .box_mean_prob(&bbox)
        .expect("search box is always in bounds");
    let area_fraction = bbox.area() as f64 / map.num_pixels() as f64;
    ConceptActivation {
        concept_id: map.concept_id().to_string(),
        bbox,
        confidence,
        area_fraction,
        active: confidence > confidence_threshold && area_fraction >= area_threshold,
    }
}
