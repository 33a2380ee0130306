//! Deterministic stand-ins for the scorer and segmenter.
//!
//! The scorer maps the SHA-256 of an input's canonical bytes to a unit
//! vector: a programmed one when the hash is registered, otherwise a normal
//! sample from a ChaCha stream seeded by (seed, hash). The segmenter returns
//! box interiors for box queries and same-colour flood fills for points.

use std::collections::BTreeMap;
use std::convert::Infallible;

use fgvp_core::mask::rasterize_box;
use fgvp_core::proposals::SegmentedMask;
use fgvp_core::{Bbox, BinaryMask, ImageBuffer, ScorerBackend, SegmenterBackend};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const DEFAULT_DIM: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureSpec {
    pub seed: u64,
    pub dim: usize,
    /// Hex SHA-256 of canonical input bytes -> unit vector.
    #[serde(default)]
    pub programmed: BTreeMap<String, Vec<f32>>,
}

impl FixtureSpec {
    pub fn new(seed: u64, dim: usize) -> Self {
        Self {
            seed,
            dim,
            programmed: BTreeMap::new(),
        }
    }
}

impl Default for FixtureSpec {
    fn default() -> Self {
        Self::new(0, DEFAULT_DIM)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FixtureError {
    #[error("programmed vector has {found} components, fixture dimension is {expected}")]
    Dimension { expected: usize, found: usize },
    #[error("programmed vector has norm {0}, expected 1")]
    NotUnit(f64),
}

/// Hex SHA-256 used to look up programmed pairs.
pub fn content_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Embedding of arbitrary bytes under `spec`.
pub fn fixture_embed(bytes: &[u8], spec: &FixtureSpec) -> Vec<f32> {
    let digest = Sha256::digest(bytes);
    if let Some(v) = spec.programmed.get(&hex::encode(digest)) {
        return v.clone();
    }
    let mut h = Sha256::new();
    h.update(spec.seed.to_le_bytes());
    h.update(digest);
    let mut rng = ChaCha8Rng::from_seed(h.finalize().into());
    let raw: Vec<f64> = (0..spec.dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        let mut e = vec![0.0; spec.dim];
        e[0] = 1.0;
        return e;
    }
    raw.iter().map(|v| (v / norm) as f32).collect()
}

/// Canonical bytes of an image: tag, dimensions, then raw RGB.
pub fn image_bytes(img: &ImageBuffer) -> Vec<u8> {
    let mut out = Vec::with_capacity(20 + img.height() * img.width() * 3);
    out.extend_from_slice(b"img\0");
    out.extend_from_slice(&(img.height() as u64).to_le_bytes());
    out.extend_from_slice(&(img.width() as u64).to_le_bytes());
    out.extend_from_slice(&img.to_rgb_bytes());
    out
}

pub fn text_bytes(text: &str) -> Vec<u8> {
    let mut out = b"txt\0".to_vec();
    out.extend_from_slice(text.as_bytes());
    out
}

#[derive(Debug, Clone, Default)]
pub struct FixtureScorer {
    spec: FixtureSpec,
}

impl FixtureScorer {
    pub fn new(spec: FixtureSpec) -> Self {
        Self { spec }
    }

    pub fn spec(&self) -> &FixtureSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.spec.dim
    }

    pub fn image_key(img: &ImageBuffer) -> String {
        content_hash(&image_bytes(img))
    }

    pub fn text_key(text: &str) -> String {
        content_hash(&text_bytes(text))
    }

    fn program(&mut self, key: String, v: Vec<f32>) -> Result<(), FixtureError> {
        if v.len() != self.spec.dim {
            return Err(FixtureError::Dimension {
                expected: self.spec.dim,
                found: v.len(),
            });
        }
        let norm = v.iter().map(|&x| x as f64 * x as f64).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-6 {
            return Err(FixtureError::NotUnit(norm));
        }
        self.spec.programmed.insert(key, v);
        Ok(())
    }

    pub fn program_image(&mut self, img: &ImageBuffer, v: Vec<f32>) -> Result<(), FixtureError> {
        self.program(Self::image_key(img), v)
    }

    /// Programs the exact string handed to the scorer, template included.
    pub fn program_text(&mut self, text: &str, v: Vec<f32>) -> Result<(), FixtureError> {
        self.program(Self::text_key(text), v)
    }
}

impl ScorerBackend for FixtureScorer {
    type Error = Infallible;

    fn embed_image(&self, image: &ImageBuffer) -> Result<Vec<f32>, Infallible> {
        Ok(fixture_embed(&image_bytes(image), &self.spec))
    }

    fn embed_text(&self, text: &str) -> Result<Vec<f32>, Infallible> {
        Ok(fixture_embed(&text_bytes(text), &self.spec))
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct FixtureSegmenter;

impl SegmenterBackend for FixtureSegmenter {
    type Error = Infallible;

    fn segment_boxes(&self, image: &ImageBuffer, boxes: &[Bbox]) -> Result<Vec<SegmentedMask>, Infallible> {
        let (h, w) = image.dims();
        Ok(boxes
            .iter()
            .map(|b| SegmentedMask {
                mask: rasterize_box(b, h, w),
                quality: 1.0,
            })
            .collect())
    }

    fn segment_points(&self, image: &ImageBuffer, points: &[(f64, f64)]) -> Result<Vec<SegmentedMask>, Infallible> {
        Ok(points
            .iter()
            .map(|&p| SegmentedMask {
                mask: flood_fill(image, p),
                quality: 1.0,
            })
            .collect())
    }
}

/// 4-connected region of pixels exactly equal in colour to the seed pixel.
pub fn flood_fill(image: &ImageBuffer, point: (f64, f64)) -> BinaryMask {
    let (h, w) = image.dims();
    let mut mask = BinaryMask::new(h, w);
    let sx = (point.0.max(0.0) as usize).min(w - 1);
    let sy = (point.1.max(0.0) as usize).min(h - 1);
    let color = image.get(sx, sy);
    let mut stack = vec![(sx, sy)];
    mask.set(sx, sy, true);
    while let Some((x, y)) = stack.pop() {
        let mut visit = |nx: usize, ny: usize| {
            if !mask.get(nx, ny) && image.get(nx, ny) == color {
                mask.set(nx, ny, true);
                stack.push((nx, ny));
            }
        };
        if x > 0 {
            visit(x - 1, y);
        }
        if x + 1 < w {
            visit(x + 1, y);
        }
        if y > 0 {
            visit(x, y - 1);
        }
        if y + 1 < h {
            visit(x, y + 1);
        }
    }
    mask
}
