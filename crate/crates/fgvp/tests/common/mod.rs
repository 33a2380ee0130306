//! Shared helpers: bundled data paths and fixture scorers rigged to pick
//! chosen proposals.

#![allow(dead_code)]

use std::path::{Path, PathBuf};

use fgvp::backends::{FixtureScorer, FixtureSegmenter, FixtureSpec};
use fgvp::eval::{prepare_part, prepare_rec, HIT_IOU};
use fgvp::{imageio, PartRecord, RecRecord, RunConfig};
use fgvp_core::box_iou;

pub const DIM: usize = 16;

pub fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data")
}

pub fn basis(i: usize) -> Vec<f32> {
    let mut v = vec![0.0; DIM];
    v[i] = 1.0;
    v
}

/// Index of the vector no text is programmed to.
const ELSEWHERE: usize = DIM - 1;

/// A scorer under which every caption prefers one proposal: a hitting one
/// when `hit` is set, a missing one otherwise. Every other proposal scores 0.
pub fn rig_rec(records: &[RecRecord], root: &Path, config: &RunConfig, hit: bool) -> FixtureScorer {
    let kinds = config.validate().expect("valid config");
    let mut scorer = FixtureScorer::new(FixtureSpec::new(config.seed, DIM));
    for r in records {
        scorer
            .program_text(&format!("{}{}", config.caption_template, r.caption), basis(0))
            .unwrap();
    }
    for r in records {
        let image = imageio::load(&root.join(&r.image)).unwrap();
        let prepared = prepare_rec(Some(&FixtureSegmenter), &image, r, config, &kinds).unwrap();
        let chosen = prepared
            .hit_boxes
            .iter()
            .position(|b| (box_iou(b, &r.gt_box) > HIT_IOU) == hit)
            .unwrap_or_else(|| panic!("{}: no proposal with hit = {hit}", r.image.display()));
        for inputs in &prepared.inputs {
            for (n, img) in inputs.iter().enumerate() {
                let v = if n == chosen { basis(0) } else { basis(ELSEWHERE) };
                scorer.program_image(img, v).unwrap();
            }
        }
    }
    scorer
}

/// Part-detection analogue of [`rig_rec`]: each ground-truth label gets its
/// own basis vector and exactly one proposal sharing it.
pub fn rig_part(records: &[PartRecord], root: &Path, config: &RunConfig, hit: bool) -> FixtureScorer {
    let kinds = config.validate().expect("valid config");
    let mut scorer = FixtureScorer::new(FixtureSpec::new(config.seed, DIM));
    let mut label_ids: Vec<String> = Vec::new();
    let mut id = |label: &str| match label_ids.iter().position(|l| l == label) {
        Some(i) => i,
        None => {
            label_ids.push(label.to_string());
            label_ids.len() - 1
        }
    };
    let mut plans = Vec::new();
    for r in records {
        let image = imageio::load(&root.join(&r.image)).unwrap();
        let (prepared, (dx, dy)) = prepare_part(&FixtureSegmenter, &image, r, config, &kinds).unwrap();
        let mut owner = vec![None; prepared.hit_boxes.len()];
        for g in &r.gt {
            let n = (0..prepared.hit_boxes.len())
                .find(|&n| owner[n].is_none() && (box_iou(&prepared.hit_boxes[n].translate(dx, dy), &g.bbox) > HIT_IOU) == hit)
                .unwrap_or_else(|| panic!("{}: no free proposal for {} with hit = {hit}", r.image.display(), g.label));
            owner[n] = Some(id(&g.label));
        }
        plans.push((prepared, owner));
    }
    assert!(label_ids.len() < ELSEWHERE, "too many labels for the basis");
    for r in records {
        for label in &r.labels {
            let v = match label_ids.iter().position(|l| l == label) {
                Some(i) => basis(i),
                None => basis(ELSEWHERE - 1),
            };
            scorer.program_text(&format!("{}{label}", config.label_template), v).unwrap();
        }
    }
    for (prepared, owner) in &plans {
        for inputs in &prepared.inputs {
            for (n, img) in inputs.iter().enumerate() {
                let v = owner[n].map_or_else(|| basis(ELSEWHERE), basis);
                scorer.program_image(img, v).unwrap();
            }
        }
    }
    scorer
}
