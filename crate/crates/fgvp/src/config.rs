//! Resolved run configuration. Every field has a default, and the whole
//! struct is echoed into reports.

use std::fmt;
use std::str::FromStr;

use fgvp_core::prompt::{parse_ensemble, SquareMode};
use fgvp_core::proposals::{MaskFilter, DEFAULT_GRID, DEFAULT_NMS_THRESHOLD};
use fgvp_core::scoring::{EnsembleMode, RelationAggregation};
use fgvp_core::{Color, PromptKind, PromptStyle};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Score post-processing applied after ensembling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PostChain {
    #[default]
    None,
    Relations,
    Subtract,
    RelationsSubtract,
}

impl PostChain {
    pub fn name(self) -> &'static str {
        match self {
            PostChain::None => "none",
            PostChain::Relations => "relations",
            PostChain::Subtract => "subtract",
            PostChain::RelationsSubtract => "relations+subtract",
        }
    }

    pub fn relations(self) -> bool {
        matches!(self, PostChain::Relations | PostChain::RelationsSubtract)
    }

    pub fn subtract(self) -> bool {
        matches!(self, PostChain::Subtract | PostChain::RelationsSubtract)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Matching {
    #[default]
    Hungarian,
    Argmax,
}

impl Matching {
    pub fn name(self) -> &'static str {
        match self {
            Matching::Hungarian => "hungarian",
            Matching::Argmax => "argmax",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BackendKind {
    #[default]
    Fixture,
    Remote,
}

impl BackendKind {
    pub fn name(self) -> &'static str {
        match self {
            BackendKind::Fixture => "fixture",
            BackendKind::Remote => "remote",
        }
    }
}

/// Whether mask proposals may be requested from the backend at all.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SegmenterChoice {
    #[default]
    Backend,
    None,
}

impl SegmenterChoice {
    pub fn name(self) -> &'static str {
        match self {
            SegmenterChoice::Backend => "backend",
            SegmenterChoice::None => "none",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown {what} {value:?}; expected one of: {expected}")]
pub struct ParseNameError {
    pub what: &'static str,
    pub value: String,
    pub expected: String,
}

macro_rules! named_enum {
    ($ty:ty, $what:literal, [$($variant:expr),+ $(,)?]) => {
        impl FromStr for $ty {
            type Err = ParseNameError;

            fn from_str(s: &str) -> Result<Self, ParseNameError> {
                let all = [$($variant),+];
                let lower = s.trim().to_ascii_lowercase();
                all.into_iter().find(|v| v.name() == lower).ok_or_else(|| ParseNameError {
                    what: $what,
                    value: s.to_string(),
                    expected: all.map(|v| v.name()).join(", "),
                })
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }

        impl Serialize for $ty {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(self.name())
            }
        }

        impl<'de> Deserialize<'de> for $ty {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                s.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

named_enum!(PostChain, "post-processing chain", [PostChain::None, PostChain::Relations, PostChain::Subtract, PostChain::RelationsSubtract]);
named_enum!(Matching, "matching mode", [Matching::Hungarian, Matching::Argmax]);
named_enum!(BackendKind, "backend", [BackendKind::Fixture, BackendKind::Remote]);
named_enum!(SegmenterChoice, "segmenter", [SegmenterChoice::Backend, SegmenterChoice::None]);

fn default_prompts() -> String {
    "d4".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Prompt ensemble, kinds joined by `|`.
    pub prompts: String,
    #[serde(with = "ensemble_mode")]
    pub ensemble: EnsembleMode,
    pub post: PostChain,
    #[serde(with = "aggregation")]
    pub relation_aggregation: RelationAggregation,
    pub neg_q: usize,
    pub seed: u64,
    pub sigma: f64,
    pub thickness: u32,
    #[serde(with = "color")]
    pub line_color: Color,
    #[serde(with = "color")]
    pub fill_color: Color,
    pub alpha: f64,
    pub keypoint_radius: f64,
    pub expand: f64,
    #[serde(with = "square")]
    pub square: SquareMode,
    #[serde(with = "color")]
    pub pad_color: Color,
    /// Side of the square image handed to the scorer.
    pub input_side: usize,
    pub grid: usize,
    pub nms: f64,
    pub mask_filter: bool,
    pub min_island: f64,
    pub max_hole: f64,
    pub matching: Matching,
    pub caption_template: String,
    pub label_template: String,
    pub backend: BackendKind,
    pub segmenter: SegmenterChoice,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub url: Option<String>,
    pub fixture_dim: usize,
    pub batch_size: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let style = PromptStyle::default();
        let filter = MaskFilter::default();
        Self {
            prompts: default_prompts(),
            ensemble: EnsembleMode::Mean,
            post: PostChain::None,
            relation_aggregation: RelationAggregation::Max,
            neg_q: 10,
            seed: 0,
            sigma: style.blur_sigma,
            thickness: style.line_thickness,
            line_color: style.line_color,
            fill_color: style.fill_color,
            alpha: style.alpha,
            keypoint_radius: style.keypoint_radius,
            expand: style.expand_scale,
            square: style.square_mode,
            pad_color: style.pad_color,
            input_side: 336,
            grid: DEFAULT_GRID,
            nms: DEFAULT_NMS_THRESHOLD,
            mask_filter: true,
            min_island: filter.min_island,
            max_hole: filter.max_hole,
            matching: Matching::Hungarian,
            caption_template: String::new(),
            label_template: "a photo of ".into(),
            backend: BackendKind::Fixture,
            segmenter: SegmenterChoice::Backend,
            url: None,
            fixture_dim: crate::backends::fixture::DEFAULT_DIM,
            batch_size: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("invalid prompt ensemble {0:?}: {1}")]
    Prompts(String, String),
    #[error("{0}")]
    Invalid(String),
    #[error("prompt {0} needs mask proposals but the segmenter is disabled")]
    NeedsSegmenter(PromptKind),
    #[error("records without box proposals need a segmenter for grid proposals")]
    GridNeedsSegmenter,
}

impl RunConfig {
    pub fn kinds(&self) -> Result<Vec<PromptKind>, ConfigError> {
        parse_ensemble(&self.prompts).map_err(|e| ConfigError::Prompts(self.prompts.clone(), e.to_string()))
    }

    pub fn style(&self) -> PromptStyle {
        PromptStyle {
            line_color: self.line_color,
            line_thickness: self.thickness,
            fill_color: self.fill_color,
            alpha: self.alpha,
            blur_sigma: self.sigma,
            keypoint_radius: self.keypoint_radius,
            expand_scale: self.expand,
            square_mode: self.square,
            pad_color: self.pad_color,
        }
    }

    pub fn mask_filter(&self) -> Option<MaskFilter> {
        self.mask_filter.then_some(MaskFilter {
            min_island: self.min_island,
            max_hole: self.max_hole,
        })
    }

    /// Checks everything that can be checked before touching data.
    pub fn validate(&self) -> Result<Vec<PromptKind>, ConfigError> {
        let kinds = self.kinds()?;
        let invalid = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        self.style().validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return invalid("sigma must be a finite non-negative number");
        }
        if self.input_side == 0 {
            return invalid("input side must be at least 1");
        }
        if self.grid == 0 {
            return invalid("grid size must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.nms) {
            return invalid("NMS threshold must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.min_island) || !(0.0..=1.0).contains(&self.max_hole) {
            return invalid("mask-filter fractions must lie in [0, 1]");
        }
        if self.batch_size == 0 {
            return invalid("batch size must be at least 1");
        }
        if self.fixture_dim == 0 {
            return invalid("fixture dimension must be at least 1");
        }
        if self.backend == BackendKind::Remote && self.url.is_none() {
            return invalid("the remote backend needs --url");
        }
        if self.segmenter == SegmenterChoice::None {
            if let Some(&k) = kinds.iter().find(|k| k.requires_mask()) {
                return Err(ConfigError::NeedsSegmenter(k));
            }
        }
        Ok(kinds)
    }
}

mod ensemble_mode {
    use super::*;

    pub fn serialize<S: Serializer>(m: &EnsembleMode, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(m.name())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<EnsembleMode, D::Error> {
        let s = String::deserialize(d)?;
        super::parse_ensemble_mode(&s).map_err(serde::de::Error::custom)
    }
}

mod aggregation {
    use super::*;

    pub fn serialize<S: Serializer>(m: &RelationAggregation, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(m.name())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<RelationAggregation, D::Error> {
        let s = String::deserialize(d)?;
        super::parse_aggregation(&s).map_err(serde::de::Error::custom)
    }
}

mod square {
    use super::*;

    pub fn serialize<S: Serializer>(m: &SquareMode, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(m.name())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<SquareMode, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

mod color {
    use super::*;

    pub fn serialize<S: Serializer>(c: &Color, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&super::color_name(*c))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Color, D::Error> {
        let s = String::deserialize(d)?;
        super::parse_color(&s).map_err(serde::de::Error::custom)
    }
}

pub fn parse_ensemble_mode(s: &str) -> Result<EnsembleMode, ParseNameError> {
    [EnsembleMode::Mean, EnsembleMode::SoftmaxMean]
        .into_iter()
        .find(|m| m.name() == s.trim().to_ascii_lowercase())
        .ok_or_else(|| ParseNameError {
            what: "ensemble mode",
            value: s.to_string(),
            expected: "mean, softmax_mean".into(),
        })
}

pub fn parse_aggregation(s: &str) -> Result<RelationAggregation, ParseNameError> {
    [RelationAggregation::Max, RelationAggregation::Sum]
        .into_iter()
        .find(|m| m.name() == s.trim().to_ascii_lowercase())
        .ok_or_else(|| ParseNameError {
            what: "relation aggregation",
            value: s.to_string(),
            expected: "max, sum".into(),
        })
}

pub fn parse_color(s: &str) -> Result<Color, String> {
    Color::parse(s).ok_or_else(|| format!("unknown colour {s:?}; use a name, #rrggbb or r,g,b"))
}

/// Palette name when there is one, `#rrggbb` otherwise.
pub fn color_name(c: Color) -> String {
    match c.name() {
        Some(n) => n.to_string(),
        None => format!("#{:02x}{:02x}{:02x}", c.r, c.g, c.b),
    }
}
