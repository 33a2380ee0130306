//! Benchmark orchestration for referring-expression comprehension (REC) and
//! part detection.
//!
//! Records are independent: each one is loaded, proposed, rendered, scored
//! and judged on its own, in parallel, and any failure is recorded against
//! that record instead of aborting the run.

use std::collections::BTreeSet;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::time::Instant;

use fgvp_core::ops::{crop, crop_origin};
use fgvp_core::prompt::{prepare_input, PromptCanvas};
use fgvp_core::proposals::{propose_from_boxes, propose_grid, MaskProposal};
use fgvp_core::scoring::{
    apply_relations, ensemble_scores, hungarian_assign, parse_caption, select_labels, select_region,
    similarity_matrix, subtract_negatives, CaptionSet, NegativeSet, Relation,
};
use fgvp_core::{box_iou, Bbox, ImageBuffer, PromptKind, PromptStyle, Region, ScoreMatrix, ScorerBackend, SegmenterBackend};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::config::{ConfigError, Matching, RunConfig, SegmenterChoice};
use crate::dataset::{PartRecord, RecRecord};
use crate::imageio;
use crate::report::{BoxSource, EvalReport, RecordOutcome, Task, TargetOutcome};

/// IoU a predicted box must exceed to count as a hit.
pub const HIT_IOU: f64 = 0.5;

/// Proposals of one image, ready for scoring.
#[derive(Debug, Clone)]
pub struct Prepared {
    /// Boxes used by spatial relations (query boxes, or tight boxes).
    pub boxes: Vec<Bbox>,
    /// Boxes judged against the ground truth.
    pub hit_boxes: Vec<Bbox>,
    pub box_source: BoxSource,
    /// `inputs[k][n]`: proposal `n` rendered with the `k`-th prompt kind,
    /// squared and resized for the scorer.
    pub inputs: Vec<Vec<ImageBuffer>>,
    /// Frame the boxes live in, `(height, width)`.
    pub frame: (usize, usize),
}

/// Renders every region with every kind and prepares it for the scorer.
pub fn render_inputs(
    image: &ImageBuffer,
    regions: &[Region],
    kinds: &[PromptKind],
    style: &PromptStyle,
    side: usize,
) -> fgvp_core::Result<Vec<Vec<ImageBuffer>>> {
    let canvas = PromptCanvas::new(image, style.blur_sigma);
    kinds
        .iter()
        .map(|&kind| {
            let mode = style.square_mode.resolve(kind);
            regions
                .iter()
                .map(|r| prepare_input(&canvas.render(r, kind, style)?, mode, side, style.pad_color))
                .collect()
        })
        .collect()
}

fn regions_from_proposals(props: &[MaskProposal]) -> Vec<Region> {
    props
        .iter()
        .map(|p| {
            let with_query = p.query_box.and_then(|q| Region::with_mask(q, p.mask.clone()).ok());
            with_query.unwrap_or_else(|| Region {
                bbox: p.bbox,
                mask: Some(p.mask.clone()),
            })
        })
        .collect()
}

fn stage<E: Display>(what: &'static str) -> impl Fn(E) -> String {
    move |e| format!("{what}: {e}")
}

/// Builds the proposals of one REC record: query boxes (segmented when a
/// mask prompt is configured) or, with no boxes, grid proposals.
pub fn prepare_rec<G: SegmenterBackend>(
    segmenter: Option<&G>,
    image: &ImageBuffer,
    record: &RecRecord,
    config: &RunConfig,
    kinds: &[PromptKind],
) -> Result<Prepared, String>
where
    G::Error: Display,
{
    let style = config.style();
    let needs_masks = kinds.iter().any(|k| k.requires_mask());
    let (regions, boxes, hit_boxes, box_source) = if record.proposals.is_empty() {
        let seg = segmenter.ok_or("grid proposals need a segmenter")?;
        let props = propose_grid(seg, image, config.grid, config.nms, config.mask_filter(), config.batch_size)
            .map_err(stage("grid proposals"))?;
        let boxes: Vec<Bbox> = props.iter().map(|p| p.bbox).collect();
        (regions_from_proposals(&props), boxes.clone(), boxes, BoxSource::Tight)
    } else if needs_masks {
        let seg = segmenter.ok_or("mask prompts need a segmenter")?;
        let props = propose_from_boxes(seg, image, &record.proposals, config.mask_filter(), config.batch_size)
            .map_err(stage("box proposals"))?;
        let regions = regions_from_proposals(&props);
        (regions, record.proposals.clone(), record.proposals.clone(), BoxSource::Query)
    } else {
        let regions = record.proposals.iter().map(|&b| Region::from_box(b)).collect();
        (regions, record.proposals.clone(), record.proposals.clone(), BoxSource::Query)
    };
    let inputs = render_inputs(image, &regions, kinds, &style, config.input_side).map_err(stage("render"))?;
    Ok(Prepared {
        boxes,
        hit_boxes,
        box_source,
        inputs,
        frame: image.dims(),
    })
}

/// Crops to the object box and builds grid proposals inside the crop. Boxes
/// stay in crop coordinates; the returned origin maps them back.
pub fn prepare_part<G: SegmenterBackend>(
    segmenter: &G,
    image: &ImageBuffer,
    record: &PartRecord,
    config: &RunConfig,
    kinds: &[PromptKind],
) -> Result<(Prepared, (f64, f64)), String>
where
    G::Error: Display,
{
    let cropped = crop(image, &record.object_box).map_err(stage("object crop"))?;
    let (x0, y0) = crop_origin(image, &record.object_box).map_err(stage("object crop"))?;
    let props = propose_grid(segmenter, &cropped, config.grid, config.nms, config.mask_filter(), config.batch_size)
        .map_err(stage("grid proposals"))?;
    let boxes: Vec<Bbox> = props.iter().map(|p| p.bbox).collect();
    let regions = regions_from_proposals(&props);
    let inputs = render_inputs(&cropped, &regions, kinds, &config.style(), config.input_side).map_err(stage("render"))?;
    Ok((
        Prepared {
            hit_boxes: boxes.clone(),
            boxes,
            box_source: BoxSource::Tight,
            inputs,
            frame: cropped.dims(),
        },
        (x0 as f64, y0 as f64),
    ))
}

/// Ensembled, post-processed `N x M` scores of `targets` against prepared
/// proposals. Relation phrases and negatives are scored in the same pass.
pub fn score_targets<S: ScorerBackend>(
    scorer: &S,
    prepared: &Prepared,
    targets: &[String],
    negatives: &[String],
    template: &str,
    config: &RunConfig,
) -> Result<ScoreMatrix, String>
where
    S::Error: Display,
{
    let m = targets.len();
    let mut texts: Vec<String> = targets.to_vec();
    let parsed: Vec<_> = targets.iter().map(|t| parse_caption(t)).collect();
    // Column of the head phrase and, when anchored, the anchor phrase.
    let mut relation_cols: Vec<(usize, Option<usize>)> = Vec::with_capacity(m);
    if config.post.relations() {
        for (col, p) in parsed.iter().enumerate() {
            if p.relation == Relation::None {
                relation_cols.push((col, None));
                continue;
            }
            texts.push(p.head.clone());
            let head = texts.len() - 1;
            let anchor = p.anchor.as_ref().filter(|a| !a.trim().is_empty()).map(|a| {
                texts.push(a.clone());
                texts.len() - 1
            });
            relation_cols.push((head, anchor));
        }
    }
    let neg_start = texts.len();
    if config.post.subtract() {
        texts.extend(negatives.iter().cloned());
    }
    let captions = CaptionSet::new(texts.iter().map(String::as_str), template).map_err(stage("captions"))?;
    let per_kind = prepared
        .inputs
        .iter()
        .map(|imgs| similarity_matrix(scorer, imgs, &captions))
        .collect::<Result<Vec<_>, _>>()
        .map_err(stage("scoring"))?;
    let all = ensemble_scores(&per_kind, config.ensemble).map_err(stage("ensemble"))?;
    let mut s = all.columns(0..m);
    if config.post.relations() {
        let heads: Vec<Vec<f64>> = relation_cols.iter().map(|&(h, _)| all.column(h)).collect();
        let anchors: Vec<Option<Vec<f64>>> = relation_cols.iter().map(|&(_, a)| a.map(|a| all.column(a))).collect();
        s = apply_relations(&s, &prepared.boxes, &parsed, &heads, &anchors, prepared.frame, config.relation_aggregation)
            .map_err(stage("relations"))?;
    }
    if config.post.subtract() && texts.len() > neg_start {
        let neg = NegativeSet {
            texts: texts[neg_start..].to_vec(),
            scores: all.columns(neg_start..texts.len()),
        };
        s = subtract_negatives(&s, &neg).map_err(stage("subtraction"))?;
    }
    Ok(s)
}

/// Texts from other images, usable as negatives.
#[derive(Debug, Clone, Default)]
pub struct NegativePool {
    entries: BTreeSet<(PathBuf, String)>,
}

impl NegativePool {
    pub fn new<'a>(entries: impl IntoIterator<Item = (&'a Path, &'a str)>) -> Self {
        Self {
            entries: entries.into_iter().map(|(p, t)| (p.to_path_buf(), t.to_string())).collect(),
        }
    }

    /// Up to `q` texts from images other than `image` and not in `exclude`,
    /// drawn by a generator seeded from `seed` and `record_key` (not the
    /// record position, so results do not depend on record order).
    pub fn sample(&self, image: &Path, exclude: &[String], q: usize, seed: u64, record_key: &[u8]) -> Vec<String> {
        let candidates: Vec<&str> = self
            .entries
            .iter()
            .filter(|(p, t)| p.as_path() != image && !exclude.contains(t))
            .map(|(_, t)| t.as_str())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let mut h = Sha256::new();
        h.update(seed.to_le_bytes());
        h.update(record_key);
        let mut rng = ChaCha8Rng::from_seed(h.finalize().into());
        let mut picked: Vec<String> = candidates.choose_multiple(&mut rng, q).map(|t| t.to_string()).collect();
        picked.sort();
        picked
    }
}

fn judge(predicted: Option<(usize, Bbox)>, gt: &Bbox, text: &str, source: BoxSource) -> TargetOutcome {
    let iou = predicted.map_or(0.0, |(_, b)| box_iou(&b, gt));
    TargetOutcome {
        text: text.to_string(),
        hit: iou > HIT_IOU,
        iou,
        proposal: predicted.map(|(i, _)| i),
        predicted: predicted.map(|(_, b)| b.to_array()),
        gt: gt.to_array(),
        box_source: if predicted.is_some() { source } else { BoxSource::None },
    }
}

fn miss(text: &str, gt: &Bbox) -> TargetOutcome {
    judge(None, gt, text, BoxSource::None)
}

fn check_segmenter<G>(config: &RunConfig, segmenter: Option<&G>, kinds: &[PromptKind]) -> Result<(), ConfigError> {
    if segmenter.is_none() || config.segmenter == SegmenterChoice::None {
        if let Some(&k) = kinds.iter().find(|k| k.requires_mask()) {
            return Err(ConfigError::NeedsSegmenter(k));
        }
    }
    Ok(())
}

fn ips(count: usize, start: Instant) -> Option<f64> {
    let secs = start.elapsed().as_secs_f64();
    (secs > 0.0).then(|| count as f64 / secs)
}

fn record_key(image: &Path, texts: &[&str]) -> Vec<u8> {
    let mut key = image.to_string_lossy().into_owned().into_bytes();
    for t in texts {
        key.push(0);
        key.extend_from_slice(t.as_bytes());
    }
    key
}

/// Referring-expression comprehension over `records`. Image paths are
/// resolved against `image_root`.
pub fn evaluate_rec<S, G>(
    scorer: &S,
    segmenter: Option<&G>,
    records: &[RecRecord],
    image_root: &Path,
    config: &RunConfig,
) -> Result<EvalReport, ConfigError>
where
    S: ScorerBackend + Sync,
    S::Error: Display,
    G: SegmenterBackend + Sync,
    G::Error: Display,
{
    let kinds = config.validate()?;
    check_segmenter(config, segmenter, &kinds)?;
    let segmenter = segmenter.filter(|_| config.segmenter == SegmenterChoice::Backend);
    if segmenter.is_none() && records.iter().any(|r| r.proposals.is_empty()) {
        return Err(ConfigError::GridNeedsSegmenter);
    }
    let pool = NegativePool::new(records.iter().map(|r| (r.image.as_path(), r.caption.as_str())));
    let start = Instant::now();
    let outcomes: Vec<RecordOutcome> = records
        .par_iter()
        .enumerate()
        .map(|(index, record)| {
            let mut outcome = RecordOutcome {
                index,
                image: record.image.to_string_lossy().into_owned(),
                proposals: record.proposals.len(),
                targets: vec![miss(&record.caption, &record.gt_box)],
                scores: Vec::new(),
                error: None,
            };
            let mut run = || -> Result<(), String> {
                let image = imageio::load(&image_root.join(&record.image)).map_err(stage("image"))?;
                let prepared = prepare_rec(segmenter, &image, record, config, &kinds)?;
                outcome.proposals = prepared.hit_boxes.len();
                if prepared.hit_boxes.is_empty() {
                    return Ok(());
                }
                let key = record_key(&record.image, &[&record.caption]);
                let negatives = if config.post.subtract() {
                    pool.sample(&record.image, std::slice::from_ref(&record.caption), config.neg_q, config.seed, &key)
                } else {
                    Vec::new()
                };
                let targets = [record.caption.clone()];
                let s = score_targets(scorer, &prepared, &targets, &negatives, &config.caption_template, config)?;
                let chosen = select_region(&s).map_err(stage("selection"))?[0];
                outcome.targets = vec![judge(
                    Some((chosen, prepared.hit_boxes[chosen])),
                    &record.gt_box,
                    &record.caption,
                    prepared.box_source,
                )];
                outcome.scores = s.to_rows();
                Ok(())
            };
            if let Err(e) = run() {
                log::warn!("record {index} ({}): {e}", record.image.display());
                outcome.error = Some(e);
            }
            outcome
        })
        .collect();
    Ok(EvalReport::from_outcomes(Task::Rec, config.clone(), outcomes, ips(records.len(), start)))
}

/// For each label, the proposal it is assigned to.
pub fn assign_labels(s: &ScoreMatrix, matching: Matching) -> Result<Vec<Option<usize>>, String> {
    let mut by_label = vec![None; s.cols()];
    match matching {
        Matching::Hungarian => {
            for (n, m) in hungarian_assign(s) {
                by_label[m] = Some(n);
            }
        }
        Matching::Argmax => {
            let labels = select_labels(s).map_err(stage("selection"))?;
            for (n, &m) in labels.iter().enumerate() {
                match by_label[m] {
                    Some(best) if s.get(best, m) >= s.get(n, m) => {}
                    _ => by_label[m] = Some(n),
                }
            }
        }
    }
    Ok(by_label)
}

/// Zero-shot part detection: grid proposals inside each object crop, scored
/// against the record's part labels and matched one-to-one.
pub fn evaluate_partdet<S, G>(
    scorer: &S,
    segmenter: Option<&G>,
    records: &[PartRecord],
    image_root: &Path,
    config: &RunConfig,
) -> Result<EvalReport, ConfigError>
where
    S: ScorerBackend + Sync,
    S::Error: Display,
    G: SegmenterBackend + Sync,
    G::Error: Display,
{
    let kinds = config.validate()?;
    check_segmenter(config, segmenter, &kinds)?;
    let Some(segmenter) = segmenter.filter(|_| config.segmenter == SegmenterChoice::Backend) else {
        return Err(ConfigError::GridNeedsSegmenter);
    };
    let pool = NegativePool::new(
        records
            .iter()
            .flat_map(|r| r.labels.iter().map(move |l| (r.image.as_path(), l.as_str()))),
    );
    let start = Instant::now();
    let outcomes: Vec<RecordOutcome> = records
        .par_iter()
        .enumerate()
        .map(|(index, record)| {
            let mut outcome = RecordOutcome {
                index,
                image: record.image.to_string_lossy().into_owned(),
                proposals: 0,
                targets: record.gt.iter().map(|g| miss(&g.label, &g.bbox)).collect(),
                scores: Vec::new(),
                error: None,
            };
            let mut run = || -> Result<(), String> {
                let image = imageio::load(&image_root.join(&record.image)).map_err(stage("image"))?;
                let (prepared, (dx, dy)) = prepare_part(segmenter, &image, record, config, &kinds)?;
                outcome.proposals = prepared.hit_boxes.len();
                if prepared.hit_boxes.is_empty() {
                    return Ok(());
                }
                let labels: Vec<&str> = record.labels.iter().map(String::as_str).collect();
                let key = record_key(&record.image, &labels);
                let negatives = if config.post.subtract() {
                    pool.sample(&record.image, &record.labels, config.neg_q, config.seed, &key)
                } else {
                    Vec::new()
                };
                let s = score_targets(scorer, &prepared, &record.labels, &negatives, &config.label_template, config)?;
                let by_label = assign_labels(&s, config.matching)?;
                outcome.targets = record
                    .gt
                    .iter()
                    .map(|g| {
                        let m = record.labels.iter().position(|l| *l == g.label).expect("validated label");
                        let predicted = by_label[m].map(|n| (n, prepared.hit_boxes[n].translate(dx, dy)));
                        judge(predicted, &g.bbox, &g.label, prepared.box_source)
                    })
                    .collect();
                outcome.scores = s.to_rows();
                Ok(())
            };
            if let Err(e) = run() {
                log::warn!("record {index} ({}): {e}", record.image.display());
                outcome.error = Some(e);
            }
            outcome
        })
        .collect();
    Ok(EvalReport::from_outcomes(Task::Partdet, config.clone(), outcomes, ips(records.len(), start)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn negative_sampling_skips_own_image_and_is_seeded() {
        let a = Path::new("a.png");
        let b = Path::new("b.png");
        let pool = NegativePool::new([(a, "red cup"), (b, "blue cup"), (b, "green cup"), (b, "red cup")]);
        let s = pool.sample(a, &["red cup".into()], 10, 7, b"k");
        assert_eq!(s, vec!["blue cup".to_string(), "green cup".to_string()]);
        let one = pool.sample(a, &[], 1, 7, b"k");
        assert_eq!(one, pool.sample(a, &[], 1, 7, b"k"));
        assert_eq!(one.len(), 1);
        assert!(pool.sample(b, &[], 3, 7, b"k").iter().all(|t| t == "red cup"));
    }

    #[test]
    fn argmax_assignment_prefers_the_strongest_proposal() {
        let s = ScoreMatrix::from_rows(&[vec![0.9, 0.1], vec![0.95, 0.2], vec![0.1, 0.0]]).unwrap();
        assert_eq!(assign_labels(&s, Matching::Argmax).unwrap(), vec![Some(1), None]);
        assert_eq!(assign_labels(&s, Matching::Hungarian).unwrap(), vec![Some(0), Some(1)]);
    }
}
