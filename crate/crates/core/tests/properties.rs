use fgvp_core::blur::gaussian_blur;
use fgvp_core::draw::{box_outline_band, disc_support, ellipse_outline_band};
use fgvp_core::mask::{mask_contour, rasterize_box, rasterize_ellipse};
use fgvp_core::ops::{composite, to_grayscale};
use fgvp_core::prompt::{expand_region, region_support};
use fgvp_core::proposals::{filter_mask, mask_iou, mask_nms, MaskProposal};
use fgvp_core::rle;
use fgvp_core::scoring::{
    apply_relations, ensemble_scores, hungarian_assign, assignment_value, parse_caption, select_labels,
    select_region, subtract_negatives, EnsembleMode, NegativeSet, RelationAggregation,
};
use fgvp_core::{render_prompt, Bbox, BinaryMask, ImageBuffer, PromptKind, PromptStyle, Region, ScoreMatrix};
use proptest::prelude::*;

fn image(max: usize) -> impl Strategy<Value = ImageBuffer> {
    (1..=max, 1..=max).prop_flat_map(|(h, w)| {
        proptest::collection::vec(any::<[u8; 3]>(), h * w)
            .prop_map(move |px| ImageBuffer::from_pixels(h, w, px).unwrap())
    })
}

fn mask(h: usize, w: usize) -> impl Strategy<Value = BinaryMask> {
    proptest::collection::vec(any::<bool>(), h * w).prop_map(move |bits| {
        BinaryMask::from_bytes(h, w, &bits.iter().map(|&b| b as u8).collect::<Vec<_>>()).unwrap()
    })
}

fn image_and_mask(max: usize) -> impl Strategy<Value = (ImageBuffer, BinaryMask)> {
    image(max).prop_flat_map(|img| {
        let (h, w) = img.dims();
        (Just(img), mask(h, w))
    })
}

fn bbox(limit: f64) -> impl Strategy<Value = Bbox> {
    (-4.0..limit, -4.0..limit, 0.5..limit, 0.5..limit).prop_map(|(x, y, w, h)| Bbox::new(x, y, w, h).unwrap())
}

fn score_matrix(max_n: usize, max_m: usize) -> impl Strategy<Value = ScoreMatrix> {
    (1..=max_n, 1..=max_m).prop_flat_map(|(n, m)| {
        proptest::collection::vec(-1.0f64..1.0, n * m).prop_map(move |v| ScoreMatrix::new(n, m, v).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn composite_keeps_foreground_inside_support((img, m) in image_and_mask(12)) {
        for bg in [to_grayscale(&img), gaussian_blur(&img, 2.0)] {
            let out = composite(&img, &bg, &m).unwrap();
            for (x, y) in m.iter_ones() {
                prop_assert_eq!(out.get(x, y), img.get(x, y));
            }
        }
    }

    #[test]
    fn ellipse_inside_box(b in bbox(20.0), h in 1usize..24, w in 1usize..24) {
        let e = rasterize_ellipse(&b.inscribed_ellipse(), h, w);
        prop_assert!(e.is_subset_of(&rasterize_box(&b, h, w)));
    }

    #[test]
    fn grayscale_idempotent(img in image(10)) {
        let g = to_grayscale(&img);
        prop_assert_eq!(to_grayscale(&g), g);
    }

    #[test]
    fn rle_roundtrip(m in (1usize..12, 1usize..12).prop_flat_map(|(h, w)| mask(h, w))) {
        let r = rle::encode(&m);
        prop_assert_eq!(r.counts.iter().map(|&c| c as usize).sum::<usize>(), m.height() * m.width());
        prop_assert_eq!(rle::decode(&r).unwrap(), m);
    }

    #[test]
    fn filter_is_idempotent_and_shrinks_box(m in mask(14, 14), island in 0.0f64..0.6, hole in 0.0f64..0.6) {
        let once = filter_mask(&m, island, hole);
        prop_assert_eq!(filter_mask(&once, island, hole), once.clone());
        if !m.is_empty() {
            let before = m.tight_box().unwrap();
            let after = once.tight_box().unwrap();
            prop_assert!(before.contains(&after));
        }
    }

    #[test]
    fn nms_survivors_are_separated(
        rects in proptest::collection::vec((0usize..14, 0usize..14, 1usize..8, 1usize..8, 0u8..4), 1..12),
        thr in 0.05f64..1.0,
    ) {
        let props: Vec<MaskProposal> = rects
            .iter()
            .map(|&(x, y, w, h, q)| {
                let m = rasterize_box(&Bbox::new(x as f64, y as f64, w as f64, h as f64).unwrap(), 16, 16);
                MaskProposal::new(m, q as f64).unwrap()
            })
            .collect();
        let kept = mask_nms(&props, thr);
        prop_assert!(!kept.is_empty());
        for k in &kept {
            prop_assert!(props.contains(k));
        }
        for i in 0..kept.len() {
            for j in i + 1..kept.len() {
                prop_assert!(mask_iou(&kept[i].mask, &kept[j].mask).unwrap() < thr);
            }
        }
        // Survivors never outnumber the distinct masks kept at threshold 1.
        prop_assert!(kept.len() <= mask_nms(&props, 1.0).len());
    }

    #[test]
    fn select_region_ignores_monotone_transforms(s in score_matrix(6, 4)) {
        let t = s.map(|v| (3.0 * v).exp() + 2.0);
        prop_assert_eq!(select_region(&t).unwrap(), select_region(&s).unwrap());
    }

    #[test]
    fn subtraction_then_labels_is_shift_invariant(
        s in score_matrix(5, 4),
        q in 1usize..6,
        c in -2.0f64..2.0,
        seed in any::<u64>(),
    ) {
        let n = s.rows();
        let vals: Vec<f64> = (0..n * q).map(|i| ((seed.wrapping_mul(i as u64 + 1) % 1000) as f64) / 1000.0).collect();
        let neg = NegativeSet { texts: vec![String::new(); q], scores: ScoreMatrix::new(n, q, vals).unwrap() };
        let shifted_neg = NegativeSet { texts: neg.texts.clone(), scores: neg.scores.map(|v| v + c) };
        let a = select_labels(&subtract_negatives(&s, &neg).unwrap()).unwrap();
        let b = select_labels(&subtract_negatives(&s.map(|v| v + c), &shifted_neg).unwrap()).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn hungarian_at_least_greedy(s in score_matrix(7, 7)) {
        let pairs = hungarian_assign(&s);
        prop_assert_eq!(pairs.len(), s.rows().min(s.cols()));
        let mut rows: Vec<_> = pairs.iter().map(|p| p.0).collect();
        let mut cols: Vec<_> = pairs.iter().map(|p| p.1).collect();
        rows.dedup();
        cols.sort_unstable();
        cols.dedup();
        prop_assert_eq!(rows.len(), pairs.len());
        prop_assert_eq!(cols.len(), pairs.len());
        // Greedy: each row takes its best still-free column.
        let mut free: Vec<bool> = vec![true; s.cols()];
        let mut greedy = 0.0;
        for r in 0..s.rows() {
            if let Some(c) = (0..s.cols()).filter(|&c| free[c]).max_by(|&a, &b| s.get(r, a).total_cmp(&s.get(r, b))) {
                free[c] = false;
                greedy += s.get(r, c);
            }
        }
        prop_assert!(assignment_value(&s, &pairs) >= greedy - 1e-12);
    }

    #[test]
    fn mean_of_copies_is_identity(s in score_matrix(5, 5), k in 1usize..5) {
        let copies = vec![s.clone(); k];
        let e = ensemble_scores(&copies, EnsembleMode::Mean).unwrap();
        for (a, b) in e.values().iter().zip(s.values()) {
            prop_assert!((a - b).abs() <= 1e-15);
        }
    }

    #[test]
    fn relations_leave_plain_columns(s in score_matrix(5, 3)) {
        let n = s.rows();
        let boxes: Vec<Bbox> = (0..n).map(|i| Bbox::new(i as f64 * 10.0, 0.0, 5.0, 5.0 + i as f64).unwrap()).collect();
        let captions = ["dog", "cat on the left", "cup left of the bowl"];
        let parsed: Vec<_> = (0..s.cols()).map(|m| parse_caption(captions[m])).collect();
        let head: Vec<Vec<f64>> = (0..s.cols()).map(|m| s.column(m).iter().map(|v| v * 0.5).collect()).collect();
        let anchor: Vec<Option<Vec<f64>>> = (0..s.cols()).map(|_| Some(vec![0.3; n])).collect();
        let out = apply_relations(&s, &boxes, &parsed, &head, &anchor, (20, 10 * n), RelationAggregation::Max).unwrap();
        prop_assert_eq!(out.column(0), s.column(0));
    }

    #[test]
    fn reverse_prompts_preserve_support((img, m) in image_and_mask(12), bx in bbox(12.0)) {
        let (h, w) = img.dims();
        let style = PromptStyle { blur_sigma: 1.5, ..PromptStyle::default() };
        let region = Region { bbox: bx, mask: Some(m) };
        for kind in [PromptKind::B3, PromptKind::B4, PromptKind::C3, PromptKind::C4, PromptKind::D3, PromptKind::D4] {
            let support = region_support(kind, &region, h, w, style.keypoint_radius).unwrap();
            let out = render_prompt(&img, &region, kind, &style).unwrap();
            for (x, y) in support.iter_ones() {
                prop_assert_eq!(out.get(x, y), img.get(x, y));
            }
        }
    }

    #[test]
    fn positive_prompts_touch_only_their_band((img, m) in image_and_mask(14), bx in bbox(14.0)) {
        let (h, w) = img.dims();
        let style = PromptStyle::default();
        let region = Region { bbox: bx, mask: Some(m.clone()) };
        let t = style.line_thickness as f64;
        let bands = [
            (PromptKind::B1, box_outline_band(&bx, t, h, w)),
            (PromptKind::C1, ellipse_outline_band(&bx.inscribed_ellipse(), t, h, w)),
            (PromptKind::D1, mask_contour(&m, style.line_thickness as usize)),
            (PromptKind::A1, disc_support(bx.center(), style.keypoint_radius, h, w)),
        ];
        for (kind, band) in bands {
            let out = render_prompt(&img, &region, kind, &style).unwrap();
            for y in 0..h {
                for x in 0..w {
                    if !band.get(x, y) {
                        prop_assert_eq!(out.get(x, y), img.get(x, y));
                    } else {
                        prop_assert_eq!(out.get(x, y), style.line_color.to_array());
                    }
                }
            }
        }
    }

    #[test]
    fn double_blur_reverse_keeps_mask((img, m) in image_and_mask(12)) {
        let style = PromptStyle { blur_sigma: 2.0, ..PromptStyle::default() };
        let region = Region { bbox: Bbox::new(0.0, 0.0, 1.0, 1.0).unwrap(), mask: Some(m.clone()) };
        let once = render_prompt(&img, &region, PromptKind::D4, &style).unwrap();
        let twice = render_prompt(&once, &region, PromptKind::D4, &style).unwrap();
        for (x, y) in m.iter_ones() {
            prop_assert_eq!(twice.get(x, y), img.get(x, y));
        }
    }

    #[test]
    fn expand_scale_support_is_monotone(cx in 10.0f64..30.0, cy in 10.0f64..30.0, r in 3.0f64..9.0, kind_ix in 0usize..3) {
        let kind = [PromptKind::B4, PromptKind::C4, PromptKind::D4][kind_ix];
        let m = disc_support((cx, cy), r, 40, 40);
        let region = Region::from_mask(m).unwrap();
        let mut last = 0usize;
        for s in [0.5, 0.75, 1.0, 1.5, 2.0] {
            let expanded = expand_region(&region, s).unwrap();
            let area = region_support(kind, &expanded, 40, 40, 6.0).unwrap().area();
            prop_assert!(area >= last, "{kind:?} s={s}: {area} < {last}");
            last = area;
        }
    }
}
