//! Allocation-only core of the fine-grained visual prompting engine.
//!
//! Everything here is a pure function over in-memory rasters, masks and score
//! matrices: the raster primitives prompts are drawn with, the prompt
//! taxonomy renderer, mask proposal post-processing, and the score algebra
//! that turns image/text similarities into region and label selections.
//! Model inference is reached only through the [`ScorerBackend`] and
//! [`SegmenterBackend`] traits; IO lives in the companion `fgvp` crate.

#![no_std]
// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod blur;
pub mod draw;
pub mod error;
pub mod geometry;
pub mod image;
pub mod mask;
pub mod ops;
pub mod prompt;
pub mod proposals;
pub mod rle;
pub mod scoring;

mod math;

pub use error::{Error, Result};
pub use geometry::{box_iou, Bbox, Ellipse};
pub use image::{Color, ImageBuffer};
pub use mask::BinaryMask;
pub use prompt::{
    parse_ensemble, render_prompt, PromptCanvas, PromptKind, PromptStyle, Region, SquareMode,
};
pub use proposals::{MaskFilter, MaskProposal, SegmentedMask, SegmenterBackend};
pub use scoring::{ScoreMatrix, ScorerBackend};
