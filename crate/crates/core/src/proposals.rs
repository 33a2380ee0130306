//! Region proposals from a class-agnostic segmenter: box-prompted masks and
//! grid-keypoint masks deduplicated by mask NMS.

use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

use crate::error::Error;
use crate::geometry::Bbox;
use crate::image::ImageBuffer;
use crate::mask::{rasterize_box, BinaryMask};

/// Default points per side of the keypoint grid.
pub const DEFAULT_GRID: usize = 16;
/// Default mask-IoU suppression threshold.
pub const DEFAULT_NMS_THRESHOLD: f64 = 0.7;

/// One mask returned by a segmenter for one query.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentedMask {
    pub mask: BinaryMask,
    pub quality: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Capabilities {
    pub segment_boxes: bool,
    pub segment_points: bool,
}

/// A promptable segmenter. Each call returns exactly one mask per query, in
/// query order, sized like `image`.
pub trait SegmenterBackend {
    type Error;

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            segment_boxes: true,
            segment_points: true,
        }
    }

    fn segment_boxes(&self, image: &ImageBuffer, boxes: &[Bbox]) -> Result<Vec<SegmentedMask>, Self::Error>;

    fn segment_points(
        &self,
        image: &ImageBuffer,
        points: &[(f64, f64)],
    ) -> Result<Vec<SegmentedMask>, Self::Error>;
}

impl<S: SegmenterBackend + ?Sized> SegmenterBackend for &S {
    type Error = S::Error;

    fn capabilities(&self) -> Capabilities {
        (**self).capabilities()
    }

    fn segment_boxes(&self, image: &ImageBuffer, boxes: &[Bbox]) -> Result<Vec<SegmentedMask>, Self::Error> {
        (**self).segment_boxes(image, boxes)
    }

    fn segment_points(
        &self,
        image: &ImageBuffer,
        points: &[(f64, f64)],
    ) -> Result<Vec<SegmentedMask>, Self::Error> {
        (**self).segment_points(image, points)
    }
}

#[derive(Debug)]
pub enum ProposalError<E> {
    Unsupported(&'static str),
    /// The backend failed on the batch starting at `index`.
    Backend { index: usize, source: E },
    /// The backend answered query `index` with something unusable.
    Protocol { index: usize, reason: Error },
}

impl<E: fmt::Display> fmt::Display for ProposalError<E> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProposalError::Unsupported(what) => write!(f, "segmenter does not support {what}"),
            ProposalError::Backend { index, source } => {
                write!(f, "segmenter failed at query {index}: {source}")
            }
            ProposalError::Protocol { index, reason } => {
                write!(f, "bad segmenter response for query {index}: {reason}")
            }
        }
    }
}

impl<E: fmt::Debug + fmt::Display> core::error::Error for ProposalError<E> {}

/// A candidate region: mask, its tight box, and the query box it came from
/// when box-prompted.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskProposal {
    pub mask: BinaryMask,
    pub bbox: Bbox,
    pub query_box: Option<Bbox>,
    pub quality: f64,
}

impl MaskProposal {
    pub fn new(mask: BinaryMask, quality: f64) -> Result<Self, Error> {
        let bbox = mask.tight_box()?;
        Ok(Self {
            mask,
            bbox,
            query_box: None,
            quality,
        })
    }
}

/// Small-island removal and hole filling, with thresholds relative to the
/// largest foreground component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskFilter {
    pub min_island: f64,
    pub max_hole: f64,
}

impl Default for MaskFilter {
    fn default() -> Self {
        Self {
            min_island: 0.1,
            max_hole: 0.1,
        }
    }
}

impl MaskFilter {
    pub fn apply(&self, mask: &BinaryMask) -> BinaryMask {
        filter_mask(mask, self.min_island, self.max_hole)
    }
}

/// Cell-center keypoints of a `g x g` grid over a `height x width` image, in
/// row-major order, as `(x, y)`.
pub fn grid_points(height: usize, width: usize, g: usize) -> Vec<(f64, f64)> {
    let g = g.max(1);
    let (cw, ch) = (width as f64 / g as f64, height as f64 / g as f64);
    let mut pts = Vec::with_capacity(g * g);
    for i in 0..g {
        for j in 0..g {
            pts.push(((j as f64 + 0.5) * cw, (i as f64 + 0.5) * ch));
        }
    }
    pts
}

/// Intersection over union of two masks; `0` when both are empty.
pub fn mask_iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64, Error> {
    let inter = a.intersection_area(b)?;
    let union = a.area() + b.area() - inter;
    Ok(if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    })
}

pub fn box_from_mask(mask: &BinaryMask) -> Result<Bbox, Error> {
    mask.tight_box()
}

/// Greedy NMS over `(mask, quality)` pairs, returning kept input indices in
/// keep order.
///
/// Candidates are visited by quality (descending), then area (descending),
/// then input index. A candidate is kept iff its IoU with every kept mask is
/// below `threshold`. Masks must share dimensions.
pub fn mask_nms_indices(masks: &[&BinaryMask], qualities: &[f64], threshold: f64) -> Vec<usize> {
    assert_eq!(masks.len(), qualities.len());
    let areas: Vec<usize> = masks.iter().map(|m| m.area()).collect();
    let mut order: Vec<usize> = (0..masks.len()).collect();
    order.sort_by(|&a, &b| {
        qualities[b]
            .total_cmp(&qualities[a])
            .then(areas[b].cmp(&areas[a]))
            .then(a.cmp(&b))
    });
    let mut kept: Vec<usize> = Vec::new();
    for i in order {
        let suppressed = kept.iter().any(|&k| {
            let inter = masks[i].intersection_area(masks[k]).unwrap_or(0);
            let union = areas[i] + areas[k] - inter;
            let iou = if union == 0 {
                0.0
            } else {
                inter as f64 / union as f64
            };
            iou >= threshold
        });
        if !suppressed {
            kept.push(i);
        }
    }
    kept
}

pub fn mask_nms(props: &[MaskProposal], threshold: f64) -> Vec<MaskProposal> {
    let masks: Vec<&BinaryMask> = props.iter().map(|p| &p.mask).collect();
    let qualities: Vec<f64> = props.iter().map(|p| p.quality).collect();
    mask_nms_indices(&masks, &qualities, threshold)
        .into_iter()
        .map(|i| props[i].clone())
        .collect()
}

/// Removes foreground specks smaller than `min_island` times the largest
/// component and fills enclosed holes smaller than `max_hole` times it,
/// repeating until nothing changes. 4-connectivity throughout.
pub fn filter_mask(mask: &BinaryMask, min_island: f64, max_hole: f64) -> BinaryMask {
    let mut current = mask.clone();
    // Each pass only removes islands or fills holes; a handful of passes
    // reaches the fixed point in practice.
    for _ in 0..32 {
        let next = filter_pass(&current, min_island, max_hole);
        if next == current {
            break;
        }
        current = next;
    }
    current
}

fn filter_pass(mask: &BinaryMask, min_island: f64, max_hole: f64) -> BinaryMask {
    let (h, w) = mask.dims();
    let fg = mask.components(true);
    let Some(&largest) = fg.sizes.iter().max() else {
        return mask.clone();
    };
    let island_cut = min_island * largest as f64;
    let hole_cut = max_hole * largest as f64;
    let mut out = mask.clone();
    for y in 0..h {
        for x in 0..w {
            if let Some(l) = fg.label_at(x, y) {
                if (fg.sizes[l] as f64) < island_cut {
                    out.set(x, y, false);
                }
            }
        }
    }
    let bg = out.components(false);
    for y in 0..h {
        for x in 0..w {
            if let Some(l) = bg.label_at(x, y) {
                if !bg.touches_border[l] && (bg.sizes[l] as f64) < hole_cut {
                    out.set(x, y, true);
                }
            }
        }
    }
    out
}

fn validate_batch<E>(
    image: &ImageBuffer,
    start: usize,
    expected: usize,
    got: &[SegmentedMask],
) -> Result<(), ProposalError<E>> {
    if got.len() != expected {
        return Err(ProposalError::Protocol {
            index: start + got.len().min(expected),
            reason: Error::InvalidParameter("segmenter returned the wrong number of masks"),
        });
    }
    for (k, m) in got.iter().enumerate() {
        if m.mask.dims() != image.dims() {
            return Err(ProposalError::Protocol {
                index: start + k,
                reason: Error::DimensionMismatch {
                    expected: image.dims(),
                    found: m.mask.dims(),
                },
            });
        }
    }
    Ok(())
}

/// One proposal per query box, in order. Masks go through `filter` when
/// given; each proposal's box is the tight box of its mask and the query box
/// is kept alongside. An empty mask falls back to the rasterized query box.
pub fn propose_from_boxes<S: SegmenterBackend>(
    backend: &S,
    image: &ImageBuffer,
    boxes: &[Bbox],
    filter: Option<MaskFilter>,
    batch_size: usize,
) -> Result<Vec<MaskProposal>, ProposalError<S::Error>> {
    if !backend.capabilities().segment_boxes {
        return Err(ProposalError::Unsupported("box prompts"));
    }
    let (h, w) = image.dims();
    let mut out = Vec::with_capacity(boxes.len());
    for (chunk_idx, chunk) in boxes.chunks(batch_size.max(1)).enumerate() {
        let start = chunk_idx * batch_size.max(1);
        let masks = backend
            .segment_boxes(image, chunk)
            .map_err(|source| ProposalError::Backend { index: start, source })?;
        validate_batch(image, start, chunk.len(), &masks)?;
        for (k, (seg, query)) in masks.into_iter().zip(chunk).enumerate() {
            let mut mask = match filter {
                Some(f) => f.apply(&seg.mask),
                None => seg.mask,
            };
            if mask.is_empty() {
                mask = rasterize_box(query, h, w);
            }
            let bbox = mask.tight_box().map_err(|reason| ProposalError::Protocol {
                index: start + k,
                reason,
            })?;
            out.push(MaskProposal {
                mask,
                bbox,
                query_box: Some(*query),
                quality: seg.quality,
            });
        }
    }
    Ok(out)
}

/// Grid-keypoint proposals: segment every grid point, drop empty masks,
/// filter, then mask NMS at `nms_threshold`.
pub fn propose_grid<S: SegmenterBackend>(
    backend: &S,
    image: &ImageBuffer,
    grid: usize,
    nms_threshold: f64,
    filter: Option<MaskFilter>,
    batch_size: usize,
) -> Result<Vec<MaskProposal>, ProposalError<S::Error>> {
    if !backend.capabilities().segment_points {
        return Err(ProposalError::Unsupported("point prompts"));
    }
    let points = grid_points(image.height(), image.width(), grid);
    let mut candidates = Vec::with_capacity(points.len());
    for (chunk_idx, chunk) in points.chunks(batch_size.max(1)).enumerate() {
        let start = chunk_idx * batch_size.max(1);
        let masks = backend
            .segment_points(image, chunk)
            .map_err(|source| ProposalError::Backend { index: start, source })?;
        validate_batch(image, start, chunk.len(), &masks)?;
        for seg in masks {
            if seg.mask.is_empty() {
                continue;
            }
            let mask = match filter {
                Some(f) => f.apply(&seg.mask),
                None => seg.mask,
            };
            let bbox = mask.tight_box().expect("filtering keeps the largest component");
            candidates.push(MaskProposal {
                mask,
                bbox,
                query_box: None,
                quality: seg.quality,
            });
        }
    }
    Ok(mask_nms(&candidates, nms_threshold))
}

/// Orders proposals by descending quality; handy for stable reporting.
pub fn by_quality(a: &MaskProposal, b: &MaskProposal) -> Ordering {
    b.quality.total_cmp(&a.quality)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::rasterize_box;
    use alloc::vec;

    fn rect(h: usize, w: usize, x: f64, y: f64, bw: f64, bh: f64) -> BinaryMask {
        rasterize_box(&Bbox::new(x, y, bw, bh).unwrap(), h, w)
    }

    #[test]
    fn grid_layout() {
        assert_eq!(grid_points(40, 60, 1), vec![(30.0, 20.0)]);
        assert_eq!(
            grid_points(100, 100, 2),
            vec![(25.0, 25.0), (75.0, 25.0), (25.0, 75.0), (75.0, 75.0)]
        );
        for g in 1..20 {
            for (x, y) in grid_points(37, 23, g) {
                assert!(x > 0.0 && x < 23.0 && y > 0.0 && y < 37.0);
            }
        }
    }

    #[test]
    fn iou_cases() {
        let a = rect(20, 20, 0.0, 0.0, 10.0, 10.0);
        assert_eq!(mask_iou(&a, &a).unwrap(), 1.0);
        let far = rect(20, 20, 12.0, 12.0, 5.0, 5.0);
        assert_eq!(mask_iou(&a, &far).unwrap(), 0.0);
        let shifted = rect(20, 20, 5.0, 0.0, 10.0, 10.0);
        assert!((mask_iou(&a, &shifted).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        let empty = BinaryMask::new(20, 20);
        assert_eq!(mask_iou(&empty, &empty).unwrap(), 0.0);
        assert!(mask_iou(&a, &BinaryMask::new(3, 3)).is_err());
    }

    #[test]
    fn nms_basics() {
        let a = rect(16, 16, 0.0, 0.0, 8.0, 8.0);
        let b = rect(16, 16, 8.0, 8.0, 8.0, 8.0);
        let p = |m: &BinaryMask, q| MaskProposal::new(m.clone(), q).unwrap();
        let kept = mask_nms(&[p(&a, 0.2), p(&a, 0.9)], 0.7);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].quality, 0.9);
        assert_eq!(mask_nms(&[p(&a, 0.5), p(&b, 0.4)], 0.01).len(), 2);
    }

    #[test]
    fn nms_tie_breaks() {
        let small = rect(16, 16, 0.0, 0.0, 4.0, 4.0);
        let big = rect(16, 16, 0.0, 0.0, 5.0, 4.0);
        let kept = mask_nms_indices(&[&small, &big, &big], &[0.5, 0.5, 0.5], 0.5);
        assert_eq!(kept, vec![1]);
        let kept = mask_nms_indices(&[&small, &small], &[0.5, 0.5], 0.5);
        assert_eq!(kept, vec![0]);
    }

    #[test]
    fn nms_is_not_monotone_in_threshold() {
        // A chain where a looser threshold lets a middle mask survive and
        // suppress two others.
        let a = rect(10, 40, 0.0, 0.0, 10.0, 10.0);
        let b = rect(10, 40, 4.0, 0.0, 10.0, 10.0);
        let c = rect(10, 40, 5.0, 0.0, 10.0, 10.0);
        let masks = [&a, &b, &c];
        let q = [0.9, 0.8, 0.7];
        assert_eq!(mask_nms_indices(&masks, &q, 0.4), vec![0, 2]);
        assert_eq!(mask_nms_indices(&masks, &q, 0.5), vec![0, 1]);
    }

    #[test]
    fn filter_single_component_unchanged() {
        let m = rect(20, 20, 3.0, 4.0, 10.0, 7.0);
        assert_eq!(filter_mask(&m, 0.1, 0.1), m);
        assert!(filter_mask(&BinaryMask::new(4, 4), 0.1, 0.1).is_empty());
    }

    #[test]
    fn filter_removes_speck() {
        let mut m = rect(60, 60, 5.0, 5.0, 40.0, 25.0);
        assert_eq!(m.area(), 1000);
        for x in 50..55 {
            m.set(x, 55, true);
        }
        let out = filter_mask(&m, 0.1, 0.1);
        assert_eq!(out.area(), 1000);
        assert!(!out.get(52, 55));
    }

    #[test]
    fn filter_fills_small_hole() {
        let mut m = rect(30, 30, 5.0, 5.0, 20.0, 20.0);
        for (x, y) in [(14, 14), (15, 14), (14, 15), (15, 15)] {
            m.set(x, y, false);
        }
        assert_eq!(m.area(), 396);
        let out = filter_mask(&m, 0.1, 0.1);
        assert_eq!(out.area(), 400);
    }

    #[test]
    fn filter_keeps_border_background() {
        // A U shape: the notch touches the border and must stay open.
        let m = BinaryMask::from_fn(12, 12, |x, y| (2..10).contains(&x) && y >= 2 && !((5..7).contains(&x) && y >= 6));
        assert_eq!(filter_mask(&m, 0.1, 0.5), m);
    }

    struct BoxInterior;

    impl SegmenterBackend for BoxInterior {
        type Error = &'static str;

        fn segment_boxes(&self, image: &ImageBuffer, boxes: &[Bbox]) -> Result<Vec<SegmentedMask>, Self::Error> {
            Ok(boxes
                .iter()
                .map(|b| SegmentedMask {
                    mask: rasterize_box(b, image.height(), image.width()),
                    quality: 1.0,
                })
                .collect())
        }

        fn segment_points(&self, _: &ImageBuffer, _: &[(f64, f64)]) -> Result<Vec<SegmentedMask>, Self::Error> {
            Err("points unsupported")
        }

        fn capabilities(&self) -> Capabilities {
            Capabilities {
                segment_boxes: true,
                segment_points: false,
            }
        }
    }

    #[test]
    fn box_proposals_follow_queries() {
        let img = ImageBuffer::new(20, 20, crate::Color::BLACK).unwrap();
        let boxes = [
            Bbox::new(0.0, 0.0, 5.0, 5.0).unwrap(),
            Bbox::new(3.0, 4.0, 6.0, 2.0).unwrap(),
            Bbox::new(10.5, 2.0, 4.0, 9.0).unwrap(),
        ];
        let props = propose_from_boxes(&BoxInterior, &img, &boxes, None, 2).unwrap();
        assert_eq!(props.len(), 3);
        for (p, b) in props.iter().zip(&boxes) {
            assert_eq!(p.mask, rasterize_box(b, 20, 20));
            assert_eq!(p.query_box, Some(*b));
            assert_eq!(p.bbox, p.mask.tight_box().unwrap());
        }
        assert!(propose_from_boxes(&BoxInterior, &img, &[], None, 4).unwrap().is_empty());
        assert!(matches!(
            propose_grid(&BoxInterior, &img, 2, 0.7, None, 4),
            Err(ProposalError::Unsupported(_))
        ));
    }
}
