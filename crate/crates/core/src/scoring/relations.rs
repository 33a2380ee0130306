//! Spatial-relation reweighting of score columns.

use alloc::vec::Vec;

use super::caption::{ParsedCaption, Relation};
use super::ScoreMatrix;
use crate::error::{Error, Result};
use crate::geometry::Bbox;

/// How anchor evidence is pooled over the other proposals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RelationAggregation {
    /// Best single anchor.
    #[default]
    Max,
    /// Sum over all anchors.
    Sum,
}

impl RelationAggregation {
    pub fn name(self) -> &'static str {
        match self {
            RelationAggregation::Max => "max",
            RelationAggregation::Sum => "sum",
        }
    }
}

/// Whether `a` stands in `relation` to the anchor box `b`.
pub fn relation_holds(relation: Relation, a: &Bbox, b: &Bbox) -> bool {
    let (ax, ay) = a.center();
    let (bx, by) = b.center();
    match relation {
        Relation::Left => ax < bx,
        Relation::Right => ax > bx,
        Relation::Above => ay < by,
        Relation::Below => ay > by,
        Relation::Bigger => a.area() > b.area(),
        Relation::Smaller => a.area() < b.area(),
        Relation::Inside => b.padded(0.05 * b.diagonal()).contains(a),
        Relation::None => false,
    }
}

/// Whether `a` satisfies an anchorless `relation` within a
/// `height x width` frame. Size relations compare against `median_area`.
pub fn absolute_relation_holds(relation: Relation, a: &Bbox, height: f64, width: f64, median_area: f64) -> bool {
    let (cx, cy) = a.center();
    match relation {
        Relation::Left => cx < width / 2.0,
        Relation::Right => cx > width / 2.0,
        Relation::Above => cy < height / 2.0,
        Relation::Below => cy > height / 2.0,
        Relation::Bigger => a.area() > median_area,
        Relation::Smaller => a.area() < median_area,
        Relation::Inside | Relation::None => false,
    }
}

pub fn median_area(boxes: &[Bbox]) -> f64 {
    let mut areas: Vec<f64> = boxes.iter().map(Bbox::area).collect();
    if areas.is_empty() {
        return 0.0;
    }
    areas.sort_by(f64::total_cmp);
    let n = areas.len();
    if n % 2 == 1 {
        areas[n / 2]
    } else {
        (areas[n / 2 - 1] + areas[n / 2]) / 2.0
    }
}

/// Reweights each text column by the spatial relation parsed from it.
///
/// * no relation: the column of `s` is kept.
/// * absolute: `head[n] * r(n)`.
/// * anchored: `head[n] * agg over n' != n of anchor[n'] * r(n, n')`.
///
/// When no proposal satisfies the relation, or an anchored relation has
/// fewer than two proposals or no anchor scores, the column falls back to
/// `head`.
pub fn apply_relations(
    s: &ScoreMatrix,
    boxes: &[Bbox],
    parsed: &[ParsedCaption],
    head_scores: &[Vec<f64>],
    anchor_scores: &[Option<Vec<f64>>],
    frame: (usize, usize),
    aggregation: RelationAggregation,
) -> Result<ScoreMatrix> {
    let (n, m) = s.shape();
    if boxes.len() != n {
        return Err(Error::ShapeMismatch {
            expected: (n, m),
            found: (boxes.len(), m),
        });
    }
    if parsed.len() != m || head_scores.len() != m || anchor_scores.len() != m {
        return Err(Error::InvalidParameter("one parsed caption and score vector per text"));
    }
    if head_scores.iter().any(|h| h.len() != n) || anchor_scores.iter().flatten().any(|a| a.len() != n) {
        return Err(Error::InvalidParameter("relation score vectors must have one entry per proposal"));
    }
    let (height, width) = (frame.0 as f64, frame.1 as f64);
    let median = median_area(boxes);
    let mut out = s.clone();
    for col in 0..m {
        let p = &parsed[col];
        if p.relation == Relation::None {
            continue;
        }
        let head = &head_scores[col];
        let new_col: Vec<f64> = if p.absolute {
            let r: Vec<bool> = boxes
                .iter()
                .map(|b| absolute_relation_holds(p.relation, b, height, width, median))
                .collect();
            if r.iter().any(|&x| x) {
                head.iter().zip(&r).map(|(h, &ok)| if ok { *h } else { 0.0 }).collect()
            } else {
                head.clone()
            }
        } else {
            match &anchor_scores[col] {
                Some(anchor) if n >= 2 => {
                    let holds = |i: usize, j: usize| i != j && relation_holds(p.relation, &boxes[i], &boxes[j]);
                    let any = (0..n).any(|i| (0..n).any(|j| holds(i, j)));
                    if !any {
                        head.clone()
                    } else {
                        (0..n)
                            .map(|i| {
                                let terms = (0..n)
                                    .filter(|&j| j != i)
                                    .map(|j| if holds(i, j) { anchor[j] } else { 0.0 });
                                let pooled = match aggregation {
                                    RelationAggregation::Max => terms.fold(f64::NEG_INFINITY, f64::max),
                                    RelationAggregation::Sum => terms.sum(),
                                };
                                head[i] * pooled
                            })
                            .collect()
                    }
                }
                _ => head.clone(),
            }
        };
        for (row, v) in new_col.into_iter().enumerate() {
            out.set(row, col, v);
        }
    }
    Ok(out)
}
