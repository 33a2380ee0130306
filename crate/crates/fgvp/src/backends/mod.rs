//! Concrete scorer and segmenter backends.

pub mod fixture;
pub mod remote;

use fgvp_core::proposals::{Capabilities, SegmentedMask};
use fgvp_core::{Bbox, ImageBuffer, ScorerBackend, SegmenterBackend};

pub use fixture::{fixture_embed, FixtureScorer, FixtureSegmenter, FixtureSpec};
pub use remote::{RemoteClient, RemoteConfig, RemoteError};

/// Runtime choice between the deterministic fixture and a model server.
// One per run; the size difference between variants does not matter.
#[allow(clippy::large_enum_variant)]
pub enum Backend {
    Fixture {
        scorer: FixtureScorer,
        segmenter: FixtureSegmenter,
    },
    Remote(RemoteClient),
}

impl Backend {
    pub fn fixture(seed: u64, dim: usize) -> Self {
        Backend::Fixture {
            scorer: FixtureScorer::new(FixtureSpec::new(seed, dim)),
            segmenter: FixtureSegmenter,
        }
    }

    pub fn is_fixture(&self) -> bool {
        matches!(self, Backend::Fixture { .. })
    }
}

impl ScorerBackend for Backend {
    type Error = RemoteError;

    fn embed_image(&self, image: &ImageBuffer) -> Result<Vec<f32>, RemoteError> {
        match self {
            Backend::Fixture { scorer, .. } => Ok(scorer.embed_image(image).unwrap_or_else(|e| match e {})),
            Backend::Remote(c) => c.embed_image(image),
        }
    }

    fn embed_text(&self, text: &str) -> Result<Vec<f32>, RemoteError> {
        match self {
            Backend::Fixture { scorer, .. } => Ok(scorer.embed_text(text).unwrap_or_else(|e| match e {})),
            Backend::Remote(c) => c.embed_text(text),
        }
    }
}

impl SegmenterBackend for Backend {
    type Error = RemoteError;

    fn capabilities(&self) -> Capabilities {
        match self {
            Backend::Fixture { segmenter, .. } => SegmenterBackend::capabilities(segmenter),
            Backend::Remote(c) => SegmenterBackend::capabilities(c),
        }
    }

    fn segment_boxes(&self, image: &ImageBuffer, boxes: &[Bbox]) -> Result<Vec<SegmentedMask>, RemoteError> {
        match self {
            Backend::Fixture { segmenter, .. } => Ok(segmenter.segment_boxes(image, boxes).unwrap_or_else(|e| match e {})),
            Backend::Remote(c) => c.segment_boxes(image, boxes),
        }
    }

    fn segment_points(&self, image: &ImageBuffer, points: &[(f64, f64)]) -> Result<Vec<SegmentedMask>, RemoteError> {
        match self {
            Backend::Fixture { segmenter, .. } => Ok(segmenter.segment_points(image, points).unwrap_or_else(|e| match e {})),
            Backend::Remote(c) => c.segment_points(image, points),
        }
    }
}
