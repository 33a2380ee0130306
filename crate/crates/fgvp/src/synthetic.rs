//! Seeded synthetic datasets of flat-coloured shapes.
//!
//! Every object is a single colour on a contrasting background, so the
//! fixture segmenter's flood fill recovers it exactly and the whole pipeline
//! can run end to end without a model.

use std::path::Path;

use fgvp_core::draw::fill_mask;
use fgvp_core::mask::{rasterize_box, rasterize_ellipse};
use fgvp_core::{Bbox, BinaryMask, Color, ImageBuffer};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::{write_jsonl, GtPart, PartRecord, RecRecord};
use crate::imageio;

pub const DEFAULT_SEED: u64 = 7;
pub const REC_RECORDS: usize = 20;
pub const PART_RECORDS: usize = 10;
pub const REC_FILE: &str = "rec.jsonl";
pub const PART_FILE: &str = "parts.jsonl";

const COLORS: [(&str, Color); 7] = [
    ("red", Color::RED),
    ("green", Color::GREEN),
    ("blue", Color::BLUE),
    ("yellow", Color::YELLOW),
    ("purple", Color::PURPLE),
    ("cyan", Color::CYAN),
    ("white", Color::WHITE),
];

const PART_LABELS: [&str; 4] = ["head", "leg", "tail", "wing"];

/// One generated image together with its record.
#[derive(Debug, Clone)]
pub struct Sample<R> {
    pub file: String,
    pub image: ImageBuffer,
    pub record: R,
}

struct Shape {
    name: &'static str,
    color: (&'static str, Color),
    mask: BinaryMask,
    bbox: Bbox,
}

fn background(rng: &mut ChaCha8Rng) -> Color {
    let v = rng.gen_range(40..=90);
    Color::new(v, v, v)
}

fn paint(img: &ImageBuffer, mask: &BinaryMask, color: Color) -> ImageBuffer {
    fill_mask(img, mask, color)
}

/// Referring-expression records: 3-4 non-overlapping shapes per image, the
/// target described by colour and shape, sometimes with a spatial relation.
/// Every fifth record has no proposals and exercises grid proposals.
pub fn rec_samples(seed: u64, count: usize) -> Vec<Sample<RecRecord>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (h, w) = (48usize, 64usize);
    (0..count)
        .map(|i| {
            let k = rng.gen_range(3..=4usize);
            let slot = w / k;
            let mut palette: Vec<usize> = (0..COLORS.len()).collect();
            let mut img = ImageBuffer::new(h, w, background(&mut rng)).expect("positive size");
            let mut shapes = Vec::with_capacity(k);
            for s in 0..k {
                let ci = palette.remove(rng.gen_range(0..palette.len()));
                let bw = rng.gen_range(6..=slot - 3);
                let bh = rng.gen_range(8..=40);
                let x = (s * slot + rng.gen_range(1..=slot - bw - 1)) as f64;
                let y = rng.gen_range(1..=h - bh - 1) as f64;
                let b = Bbox::new(x, y, bw as f64, bh as f64).expect("positive extents");
                let (name, mask) = if rng.gen_bool(0.5) {
                    ("block", rasterize_box(&b, h, w))
                } else {
                    ("disc", rasterize_ellipse(&b.inscribed_ellipse(), h, w))
                };
                img = paint(&img, &mask, COLORS[ci].1);
                let bbox = mask.tight_box().expect("shape is visible");
                shapes.push(Shape {
                    name,
                    color: COLORS[ci],
                    mask,
                    bbox,
                });
            }
            let target = rng.gen_range(0..k);
            let t = &shapes[target];
            let base = format!("{} {}", t.color.0, t.name);
            let caption = match rng.gen_range(0..3) {
                0 if target == 0 => format!("{base} on the left"),
                0 if target == k - 1 => format!("{base} on the right"),
                1 if target + 1 < k => {
                    let o = &shapes[target + 1];
                    format!("{base} left of the {} {}", o.color.0, o.name)
                }
                _ => base,
            };
            let grid_mode = i % 5 == 4;
            let file = format!("rec_{i:02}.png");
            debug_assert!(shapes.iter().all(|s| !s.mask.is_empty()));
            Sample {
                record: RecRecord {
                    image: file.clone().into(),
                    proposals: if grid_mode { Vec::new() } else { shapes.iter().map(|s| s.bbox).collect() },
                    caption,
                    gt_box: t.bbox,
                },
                file,
                image: img,
            }
        })
        .collect()
}

/// Part records: a body rectangle carrying 2-3 differently coloured parts,
/// plus one label with no ground-truth part as a distractor.
pub fn part_samples(seed: u64, count: usize) -> Vec<Sample<PartRecord>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5041_5254);
    let (h, w) = (64usize, 72usize);
    (0..count)
        .map(|i| {
            let mut img = ImageBuffer::new(h, w, background(&mut rng)).expect("positive size");
            let bw = rng.gen_range(44..=56usize);
            let bh = rng.gen_range(40..=50usize);
            let bx = rng.gen_range(2..=w - bw - 2);
            let by = rng.gen_range(2..=h - bh - 2);
            let body = Bbox::new(bx as f64, by as f64, bw as f64, bh as f64).expect("positive extents");
            let mut palette: Vec<usize> = (0..COLORS.len()).collect();
            let body_color = COLORS[palette.remove(rng.gen_range(0..palette.len()))].1;
            img = paint(&img, &rasterize_box(&body, h, w), body_color);
            let n_parts = rng.gen_range(2..=3usize);
            // Corners of the body the parts are anchored to: top-left,
            // top-right, bottom-left.
            let mut gt = Vec::with_capacity(n_parts);
            for (p, label) in PART_LABELS.iter().take(n_parts).enumerate() {
                let color = COLORS[palette.remove(rng.gen_range(0..palette.len()))].1;
                let pw = rng.gen_range(10..=16usize);
                let ph = rng.gen_range(10..=14usize);
                let (px, py) = match p {
                    0 => (bx + 2, by + 2),
                    1 => (bx + bw - pw - 2, by + 2),
                    _ => (bx + 2, by + bh - ph - 2),
                };
                let b = Bbox::new(px as f64, py as f64, pw as f64, ph as f64).expect("positive extents");
                let mask = rasterize_box(&b, h, w);
                img = paint(&img, &mask, color);
                gt.push(GtPart {
                    label: label.to_string(),
                    bbox: mask.tight_box().expect("part is visible"),
                });
            }
            let mut labels: Vec<String> = PART_LABELS.iter().take(n_parts).map(|l| l.to_string()).collect();
            labels.push(PART_LABELS[3].to_string());
            let file = format!("part_{i:02}.png");
            Sample {
                record: PartRecord {
                    image: file.clone().into(),
                    object_box: body,
                    labels,
                    gt,
                },
                file,
                image: img,
            }
        })
        .collect()
}

/// Writes images plus `rec.jsonl` and `parts.jsonl` into `dir`.
pub fn write_datasets(dir: &Path, seed: u64) -> anyhow::Result<(Vec<RecRecord>, Vec<PartRecord>)> {
    std::fs::create_dir_all(dir)?;
    let rec = rec_samples(seed, REC_RECORDS);
    let parts = part_samples(seed, PART_RECORDS);
    for s in &rec {
        imageio::save_png(&dir.join(&s.file), &s.image)?;
    }
    for s in &parts {
        imageio::save_png(&dir.join(&s.file), &s.image)?;
    }
    let rec: Vec<RecRecord> = rec.into_iter().map(|s| s.record).collect();
    let parts: Vec<PartRecord> = parts.into_iter().map(|s| s.record).collect();
    write_jsonl(&dir.join(REC_FILE), &rec)?;
    write_jsonl(&dir.join(PART_FILE), &parts)?;
    Ok((rec, parts))
}
