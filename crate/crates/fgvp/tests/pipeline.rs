mod common;

use std::convert::Infallible;
use std::path::{Path, PathBuf};

use fgvp::backends::{FixtureScorer, FixtureSegmenter, FixtureSpec};
use fgvp::config::ConfigError;
use fgvp::dataset::{write_jsonl, DatasetError, GtPart};
use fgvp::eval::prepare_part;
use fgvp::report::BoxSource;
use fgvp::{
    evaluate_partdet, evaluate_rec, imageio, load_part_jsonl, load_rec_jsonl, synthetic, Matching, PartRecord,
    PostChain, RecRecord, RunConfig,
};
use fgvp_core::mask::rasterize_box;
use fgvp_core::proposals::SegmentedMask;
use fgvp_core::scoring::{select_region, similarity_matrix, CaptionSet};
use fgvp_core::{Bbox, Color, ImageBuffer, PromptKind, SegmenterBackend};

fn bbox(x: f64, y: f64, w: f64, h: f64) -> Bbox {
    Bbox::new(x, y, w, h).unwrap()
}

// ---------------------------------------------------------------------------
// Datasets

#[test]
fn jsonl_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let rec = vec![
        RecRecord {
            image: PathBuf::from("a.png"),
            proposals: vec![bbox(1.0, 2.0, 3.0, 4.0)],
            caption: "the cat".into(),
            gt_box: bbox(1.0, 2.0, 3.0, 4.0),
        },
        RecRecord {
            image: PathBuf::from("b.png"),
            proposals: vec![],
            caption: "dog".into(),
            gt_box: bbox(0.5, 0.0, 2.0, 2.0),
        },
    ];
    let path = dir.path().join("rec.jsonl");
    write_jsonl(&path, &rec).unwrap();
    assert_eq!(load_rec_jsonl(&path).unwrap(), rec);

    let parts = vec![PartRecord {
        image: PathBuf::from("c.png"),
        object_box: bbox(0.0, 0.0, 10.0, 10.0),
        labels: vec!["head".into(), "tail".into()],
        gt: vec![GtPart {
            label: "head".into(),
            bbox: bbox(1.0, 1.0, 2.0, 2.0),
        }],
    }];
    let path = dir.path().join("parts.jsonl");
    write_jsonl(&path, &parts).unwrap();
    assert_eq!(load_part_jsonl(&path).unwrap(), parts);
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn dataset_errors_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(
        dir.path(),
        "r.jsonl",
        "{\"image\":\"a.png\",\"caption\":\"x\",\"gt_box\":[0,0,1,1]}\n\n{\"image\":\"b.png\",\"caption\":\"y\"}\n",
    );
    let err = load_rec_jsonl(&p).unwrap_err();
    assert!(matches!(err, DatasetError::Line { line: 3, .. }), "{err}");
    assert!(err.to_string().contains("r.jsonl:3:") && err.to_string().contains("gt_box"), "{err}");

    let p = write(dir.path(), "blank.jsonl", "{\"image\":\"a.png\",\"caption\":\"  \",\"gt_box\":[0,0,1,1]}\n");
    assert!(load_rec_jsonl(&p).unwrap_err().to_string().contains("caption is empty"));
    let p = write(dir.path(), "neg.jsonl", "{\"image\":\"a.png\",\"caption\":\"c\",\"gt_box\":[0,0,-1,1]}\n");
    assert!(matches!(load_rec_jsonl(&p).unwrap_err(), DatasetError::Line { line: 1, .. }));
    let p = write(dir.path(), "empty.jsonl", "\n\n");
    assert!(matches!(load_rec_jsonl(&p).unwrap_err(), DatasetError::NoRecords { .. }));
    assert!(matches!(load_rec_jsonl(&dir.path().join("missing.jsonl")).unwrap_err(), DatasetError::Io { .. }));

    let p = write(
        dir.path(),
        "p.jsonl",
        "{\"image\":\"a.png\",\"object_box\":[0,0,4,4],\"labels\":[\"head\"],\"gt\":[{\"label\":\"tail\",\"box\":[0,0,1,1]}]}\n",
    );
    let err = load_part_jsonl(&p).unwrap_err();
    assert!(err.to_string().contains("p.jsonl:1:") && err.to_string().contains("\"tail\""), "{err}");
}

#[test]
fn unknown_fields_are_tolerated_and_text_is_trimmed() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(
        dir.path(),
        "r.jsonl",
        "{\"image\":\"a.png\",\"caption\":\"  the Big dog \",\"gt_box\":[0,0,1,1],\"split\":\"val\"}\n",
    );
    let r = load_rec_jsonl(&p).unwrap();
    assert_eq!(r[0].caption, "the Big dog");
    assert!(r[0].proposals.is_empty());
}

#[test]
fn bundled_data_matches_the_generator() {
    let dir = tempfile::tempdir().unwrap();
    synthetic::write_datasets(dir.path(), synthetic::DEFAULT_SEED).unwrap();
    let bundled = common::data_dir();
    let mut names: Vec<String> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names.len(), synthetic::REC_RECORDS + synthetic::PART_RECORDS + 2);
    for name in names {
        let fresh = std::fs::read(dir.path().join(&name)).unwrap();
        let shipped = std::fs::read(bundled.join(&name)).unwrap_or_else(|_| panic!("{name} missing from data/"));
        assert!(fresh == shipped, "{name} differs from the generator output");
    }
}

// ---------------------------------------------------------------------------
// REC

fn bundled_rec() -> (Vec<RecRecord>, PathBuf) {
    let data = common::data_dir();
    (load_rec_jsonl(&data.join(synthetic::REC_FILE)).unwrap(), data)
}

#[test]
fn rigged_rec_scores_reach_both_extremes() {
    let (records, data) = bundled_rec();
    let config = RunConfig::default();
    for (hit, want) in [(true, 1.0), (false, 0.0)] {
        let scorer = common::rig_rec(&records, &data, &config, hit);
        let report = evaluate_rec(&scorer, Some(&FixtureSegmenter), &records, &data, &config).unwrap();
        assert_eq!(report.accuracy, want);
        assert_eq!(report.hits, if hit { records.len() } else { 0 });
        assert_eq!(report.failed_records, 0);
    }
}

#[test]
fn selection_is_argmax_of_similarity() {
    let (records, data) = bundled_rec();
    let config = RunConfig {
        prompts: "b4".into(),
        ..RunConfig::default()
    };
    let scorer = FixtureScorer::new(FixtureSpec::new(11, 32));
    let report = evaluate_rec(&scorer, Some(&FixtureSegmenter), &records, &data, &config).unwrap();
    let kinds = [PromptKind::B4];
    for (r, outcome) in records.iter().zip(&report.records) {
        let image = imageio::load(&data.join(&r.image)).unwrap();
        let prepared = fgvp::eval::prepare_rec(Some(&FixtureSegmenter), &image, r, &config, &kinds).unwrap();
        let captions = CaptionSet::new([r.caption.as_str()], "").unwrap();
        let s = similarity_matrix(&scorer, &prepared.inputs[0], &captions).unwrap();
        assert_eq!(outcome.scores, s.to_rows());
        assert_eq!(outcome.targets[0].proposal, Some(select_region(&s).unwrap()[0]));
        let want_source = if r.proposals.is_empty() { BoxSource::Tight } else { BoxSource::Query };
        assert_eq!(outcome.targets[0].box_source, want_source);
    }
}

#[test]
fn record_order_does_not_matter() {
    let (records, data) = bundled_rec();
    let config = RunConfig {
        post: PostChain::RelationsSubtract,
        neg_q: 4,
        seed: 7,
        prompts: "b1|d4".into(),
        ..RunConfig::default()
    };
    let scorer = FixtureScorer::new(FixtureSpec::new(7, 64));
    let forward = evaluate_rec(&scorer, Some(&FixtureSegmenter), &records, &data, &config).unwrap();
    let reversed: Vec<RecRecord> = records.iter().rev().cloned().collect();
    let backward = evaluate_rec(&scorer, Some(&FixtureSegmenter), &reversed, &data, &config).unwrap();
    assert_eq!(forward.accuracy, backward.accuracy);
    for (i, rec) in forward.records.iter().enumerate() {
        let other = &backward.records[records.len() - 1 - i];
        assert_eq!((&rec.image, &rec.targets, &rec.scores), (&other.image, &other.targets, &other.scores));
    }
}

#[test]
fn missing_image_fails_only_its_record() {
    let (mut records, data) = bundled_rec();
    records.truncate(3);
    records[1].image = PathBuf::from("does-not-exist.png");
    let scorer = FixtureScorer::new(FixtureSpec::new(1, 16));
    let report = evaluate_rec(&scorer, Some(&FixtureSegmenter), &records, &data, &RunConfig::default()).unwrap();
    assert_eq!(report.failed_records, 1);
    assert_eq!(report.total, 3);
    let failed = &report.records[1];
    assert!(failed.error.as_deref().unwrap().starts_with("image:"), "{:?}", failed.error);
    assert!(!failed.targets[0].hit);
    assert_eq!(failed.targets[0].box_source, BoxSource::None);
    assert!(report.records[0].error.is_none() && report.records[2].error.is_none());
}

#[test]
fn mask_prompts_need_a_segmenter() {
    let (records, data) = bundled_rec();
    let scorer = FixtureScorer::new(FixtureSpec::new(1, 16));
    let err = evaluate_rec::<_, FixtureSegmenter>(&scorer, None, &records, &data, &RunConfig::default()).unwrap_err();
    assert!(matches!(err, ConfigError::NeedsSegmenter(PromptKind::D4)), "{err}");

    // Box prompts work without one, as long as every record brings boxes.
    let config = RunConfig {
        prompts: "b1|c1".into(),
        ..RunConfig::default()
    };
    let boxed: Vec<RecRecord> = records.iter().filter(|r| !r.proposals.is_empty()).cloned().collect();
    let report = evaluate_rec::<_, FixtureSegmenter>(&scorer, None, &boxed, &data, &config).unwrap();
    assert_eq!(report.failed_records, 0);
    let err = evaluate_rec::<_, FixtureSegmenter>(&scorer, None, &records, &data, &config).unwrap_err();
    assert!(matches!(err, ConfigError::GridNeedsSegmenter));
}

// ---------------------------------------------------------------------------
// Part detection with hand-built proposals

/// Answers every point query with a fixed mask chosen by the point.
struct TableSegmenter(Box<dyn Fn(f64, f64) -> Bbox + Send + Sync>);

impl SegmenterBackend for TableSegmenter {
    type Error = Infallible;

    fn segment_boxes(&self, image: &ImageBuffer, boxes: &[Bbox]) -> Result<Vec<SegmentedMask>, Infallible> {
        FixtureSegmenter.segment_boxes(image, boxes)
    }

    fn segment_points(&self, image: &ImageBuffer, points: &[(f64, f64)]) -> Result<Vec<SegmentedMask>, Infallible> {
        let (h, w) = image.dims();
        Ok(points
            .iter()
            .map(|&(x, y)| SegmentedMask {
                mask: rasterize_box(&(self.0)(x, y), h, w),
                quality: 1.0,
            })
            .collect())
    }
}

fn part_fixture(dir: &Path, gt: Vec<GtPart>, labels: &[&str]) -> Vec<PartRecord> {
    let img = ImageBuffer::from_fn(40, 40, |x, y| [(x * 6) as u8, (y * 6) as u8, 90]).unwrap();
    imageio::save_png(&dir.join("obj.png"), &img).unwrap();
    vec![PartRecord {
        image: PathBuf::from("obj.png"),
        object_box: bbox(0.0, 0.0, 40.0, 40.0),
        labels: labels.iter().map(|s| s.to_string()).collect(),
        gt,
    }]
}

fn gt(label: &str, b: Bbox) -> GtPart {
    GtPart {
        label: label.into(),
        bbox: b,
    }
}

#[test]
fn single_exact_proposal_scores_one_and_disjoint_scores_zero() {
    let dir = tempfile::tempdir().unwrap();
    let part = bbox(4.0, 6.0, 12.0, 10.0);
    let records = part_fixture(dir.path(), vec![gt("head", part)], &["head"]);
    let scorer = FixtureScorer::new(FixtureSpec::new(2, 16));
    let config = RunConfig::default();

    let exact = TableSegmenter(Box::new(move |_, _| part));
    let report = evaluate_partdet(&scorer, Some(&exact), &records, dir.path(), &config).unwrap();
    assert_eq!(report.records[0].proposals, 1);
    assert_eq!(report.accuracy, 1.0);
    assert_eq!(report.records[0].targets[0].iou, 1.0);

    let disjoint = TableSegmenter(Box::new(|_, _| bbox(24.0, 24.0, 10.0, 10.0)));
    let report = evaluate_partdet(&scorer, Some(&disjoint), &records, dir.path(), &config).unwrap();
    assert_eq!(report.accuracy, 0.0);
    assert_eq!(report.records[0].targets[0].iou, 0.0);
}

fn quadrant(x: f64, y: f64) -> Bbox {
    let qx = if x < 20.0 { 0.0 } else { 20.0 };
    let qy = if y < 20.0 { 0.0 } else { 20.0 };
    bbox(qx, qy, 20.0, 20.0)
}

fn permutations(items: &[usize], k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for (i, &x) in items.iter().enumerate() {
        let mut rest = items.to_vec();
        rest.remove(i);
        for mut tail in permutations(&rest, k - 1) {
            tail.insert(0, x);
            out.push(tail);
        }
    }
    out
}

#[test]
fn quadrant_parts_match_enumeration_and_hand_count() {
    let dir = tempfile::tempdir().unwrap();
    let (tl, tr, bl, br) = (quadrant(0.0, 0.0), quadrant(30.0, 0.0), quadrant(0.0, 30.0), quadrant(30.0, 30.0));
    let records = part_fixture(dir.path(), vec![gt("a", tr), gt("b", tl), gt("c", bl)], &["a", "b", "c"]);
    let seg = TableSegmenter(Box::new(quadrant));
    let config = RunConfig {
        label_template: String::new(),
        ..RunConfig::default()
    };
    let kinds = config.validate().unwrap();
    let image = imageio::load(&dir.path().join("obj.png")).unwrap();
    let (prepared, _) = prepare_part(&seg, &image, &records[0], &config, &kinds).unwrap();
    assert_eq!(prepared.hit_boxes.len(), 4);

    // Desired scores per quadrant for labels (a, b, c). Greedy per-proposal
    // argmax and one-to-one matching disagree here.
    let want = |b: &Bbox| -> [f32; 3] {
        match *b {
            b if b == tl => [0.75, 0.5, 0.0],
            b if b == tr => [0.5, 0.125, 0.0],
            b if b == bl => [0.0, 0.0, 0.5],
            _ => [0.125, 0.25, 0.625],
        }
    };
    let mut scorer = FixtureScorer::new(FixtureSpec::new(0, 4));
    for (i, label) in ["a", "b", "c"].iter().enumerate() {
        let mut v = vec![0.0; 4];
        v[i] = 1.0;
        scorer.program_text(label, v).unwrap();
    }
    for (n, b) in prepared.hit_boxes.iter().enumerate() {
        let s = want(b);
        let rest = 1.0 - s.iter().map(|x| (*x as f64).powi(2)).sum::<f64>();
        scorer
            .program_image(&prepared.inputs[0][n], vec![s[0], s[1], s[2], rest.sqrt() as f32])
            .unwrap();
    }

    let report = evaluate_partdet(&scorer, Some(&seg), &records, dir.path(), &config).unwrap();
    let rec = &report.records[0];
    let scores = &rec.scores;
    // Best total over injective label -> proposal maps.
    let best = permutations(&[0, 1, 2, 3], 3)
        .into_iter()
        .map(|p| p.iter().enumerate().map(|(m, &n)| scores[n][m]).sum::<f64>())
        .fold(f64::NEG_INFINITY, f64::max);
    let chosen: Vec<usize> = rec.targets.iter().map(|t| t.proposal.unwrap()).collect();
    let total: f64 = chosen.iter().enumerate().map(|(m, &n)| scores[n][m]).sum();
    assert!((total - best).abs() < 1e-12);
    let picked: Vec<Bbox> = chosen.iter().map(|&n| prepared.hit_boxes[n]).collect();
    // By hand: a -> TR, b -> TL, c -> BR; the first two are right.
    assert_eq!(picked, vec![tr, tl, br]);
    assert_eq!(rec.hits(), 2);
    assert!((report.accuracy - 2.0 / 3.0).abs() < 1e-15);

    // Per-proposal argmax sends both top quadrants to "a" and only one survives.
    let argmax = RunConfig {
        matching: Matching::Argmax,
        ..config
    };
    let report = evaluate_partdet(&scorer, Some(&seg), &records, dir.path(), &argmax).unwrap();
    let t = &report.records[0].targets;
    assert_eq!(t[0].predicted, Some(tl.to_array()));
    assert_eq!(t[1].proposal, None);
    assert_eq!(t[2].predicted, Some(br.to_array()));
    assert_eq!(report.hits, 0);
}

#[test]
fn rigged_parts_reach_both_extremes() {
    let data = common::data_dir();
    let parts = load_part_jsonl(&data.join(synthetic::PART_FILE)).unwrap();
    let config = RunConfig::default();
    for (hit, want) in [(true, 1.0), (false, 0.0)] {
        let scorer = common::rig_part(&parts, &data, &config, hit);
        let report = evaluate_partdet(&scorer, Some(&FixtureSegmenter), &parts, &data, &config).unwrap();
        assert_eq!(report.accuracy, want);
        assert_eq!(report.failed_records, 0);
    }
}

#[test]
fn part_boxes_are_reported_in_image_coordinates() {
    let dir = tempfile::tempdir().unwrap();
    let mut img = ImageBuffer::new(30, 50, Color::BLACK).unwrap();
    for y in 12..20 {
        for x in 25..33 {
            img.set(x, y, [250, 250, 0]);
        }
    }
    imageio::save_png(&dir.path().join("shift.png"), &img).unwrap();
    let records = vec![PartRecord {
        image: PathBuf::from("shift.png"),
        object_box: bbox(20.0, 10.0, 20.0, 15.0),
        labels: vec!["spot".into()],
        gt: vec![gt("spot", bbox(25.0, 12.0, 8.0, 8.0))],
    }];
    // Flood fill finds the yellow square inside the crop; every other grid
    // point lands on black background.
    let scorer = common::rig_part(&records, dir.path(), &RunConfig::default(), true);
    let report = evaluate_partdet(&scorer, Some(&FixtureSegmenter), &records, dir.path(), &RunConfig::default()).unwrap();
    assert_eq!(report.records[0].targets[0].predicted, Some([25.0, 12.0, 8.0, 8.0]));
    assert_eq!(report.accuracy, 1.0);
}
