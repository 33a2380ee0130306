//! The visual prompt taxonomy: crops, keypoints, and line / color /
//! grayscale / blur markers over boxes, inscribed ellipses and masks.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::cell::OnceCell;
use core::fmt;
use core::str::FromStr;

use crate::blur::gaussian_blur;
use crate::draw::{disc_support, draw_box_outline, draw_disc, draw_ellipse_outline, fill_mask};
use crate::error::{Error, Result};
use crate::geometry::Bbox;
use crate::image::{Color, ImageBuffer};
use crate::mask::{mask_contour, rasterize_box, rasterize_ellipse, BinaryMask};
use crate::math;
use crate::ops::{alpha_blend, center_square, composite, crop, pad_to_square, resize, to_grayscale, PadFill};

/// Prompt kinds. The letter picks the geometry (`B` box, `C` inscribed
/// ellipse, `D` mask) and the digit the marker (1 line, 2 color fill,
/// 3 grayscale background, 4 blurred background). `P` is a plain crop, `A1`
/// a keypoint disc and `A2` a color-tinted crop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PromptKind {
    P,
    A1,
    A2,
    B1,
    B2,
    B3,
    B4,
    C1,
    C2,
    C3,
    C4,
    D1,
    D2,
    D3,
    D4,
}

impl PromptKind {
    pub const ALL: [PromptKind; 15] = [
        PromptKind::P,
        PromptKind::A1,
        PromptKind::A2,
        PromptKind::B1,
        PromptKind::B2,
        PromptKind::B3,
        PromptKind::B4,
        PromptKind::C1,
        PromptKind::C2,
        PromptKind::C3,
        PromptKind::C4,
        PromptKind::D1,
        PromptKind::D2,
        PromptKind::D3,
        PromptKind::D4,
    ];

    /// Lowercase command-line code (`p`, `a1`, ..., `d4`).
    pub fn code(self) -> &'static str {
        use PromptKind::*;
        match self {
            P => "p",
            A1 => "a1",
            A2 => "a2",
            B1 => "b1",
            B2 => "b2",
            B3 => "b3",
            B4 => "b4",
            C1 => "c1",
            C2 => "c2",
            C3 => "c3",
            C4 => "c4",
            D1 => "d1",
            D2 => "d2",
            D3 => "d3",
            D4 => "d4",
        }
    }

    pub fn requires_mask(self) -> bool {
        matches!(self, PromptKind::D1 | PromptKind::D2 | PromptKind::D3 | PromptKind::D4)
    }

    /// Grayscale or blur applied outside the region, original kept inside.
    pub fn is_reverse(self) -> bool {
        use PromptKind::*;
        matches!(self, B3 | B4 | C3 | C4 | D3 | D4)
    }

    /// Output is a cutout rather than the full frame.
    pub fn is_crop(self) -> bool {
        matches!(self, PromptKind::P | PromptKind::A2)
    }
}

impl fmt::Display for PromptKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for PromptKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let code = s.trim();
        PromptKind::ALL
            .iter()
            .copied()
            .find(|k| k.code().eq_ignore_ascii_case(code))
            .ok_or_else(|| Error::UnknownPromptKind(code.to_string()))
    }
}

/// Parses a `|`-separated ensemble such as `p|d1|d3|d4`.
pub fn parse_ensemble(s: &str) -> Result<Vec<PromptKind>> {
    if s.trim().is_empty() {
        return Err(Error::EmptyInput("prompt ensemble"));
    }
    s.split('|').map(str::parse).collect()
}

pub fn ensemble_code(kinds: &[PromptKind]) -> String {
    let mut out = String::new();
    for (i, k) in kinds.iter().enumerate() {
        if i > 0 {
            out.push('|');
        }
        out.push_str(k.code());
    }
    out
}

/// How a prompted image is made square for the scorer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum SquareMode {
    /// `Stretch` for crop-style kinds, `Pad` for everything else.
    #[default]
    Auto,
    Stretch,
    Pad,
    CenterCrop,
}

impl SquareMode {
    pub fn resolve(self, kind: PromptKind) -> SquareMode {
        match self {
            SquareMode::Auto if kind.is_crop() => SquareMode::Stretch,
            SquareMode::Auto => SquareMode::Pad,
            other => other,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SquareMode::Auto => "auto",
            SquareMode::Stretch => "stretch",
            SquareMode::Pad => "pad",
            SquareMode::CenterCrop => "center_crop",
        }
    }
}

impl FromStr for SquareMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "auto" => Ok(SquareMode::Auto),
            "stretch" | "resize" => Ok(SquareMode::Stretch),
            "pad" => Ok(SquareMode::Pad),
            "center_crop" | "crop" => Ok(SquareMode::CenterCrop),
            _ => Err(Error::InvalidParameter("square mode must be auto|stretch|pad|center_crop")),
        }
    }
}

/// Rendering hyperparameters shared by all kinds.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptStyle {
    pub line_color: Color,
    pub line_thickness: u32,
    pub fill_color: Color,
    pub alpha: f64,
    pub blur_sigma: f64,
    pub keypoint_radius: f64,
    pub expand_scale: f64,
    pub square_mode: SquareMode,
    pub pad_color: Color,
}

impl Default for PromptStyle {
    fn default() -> Self {
        Self {
            line_color: Color::RED,
            line_thickness: 2,
            fill_color: Color::GREEN,
            alpha: 0.5,
            blur_sigma: 100.0,
            keypoint_radius: 6.0,
            expand_scale: 1.0,
            square_mode: SquareMode::Auto,
            pad_color: Color::BLACK,
        }
    }
}

impl PromptStyle {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidParameter("alpha must lie in [0, 1]"));
        }
        if !(self.expand_scale > 0.0) {
            return Err(Error::InvalidParameter("expand scale must be positive"));
        }
        if self.line_thickness < 1 {
            return Err(Error::InvalidParameter("line thickness must be at least 1"));
        }
        if !(self.blur_sigma >= 0.0) {
            return Err(Error::InvalidParameter("blur sigma must be non-negative"));
        }
        if !(self.keypoint_radius >= 1.0) {
            return Err(Error::InvalidParameter("keypoint radius must be at least 1"));
        }
        Ok(())
    }
}

/// A proposal's geometry: a box and, for mask prompts, a segmentation.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub bbox: Bbox,
    pub mask: Option<BinaryMask>,
}

impl Region {
    pub fn from_box(bbox: Bbox) -> Self {
        Self { bbox, mask: None }
    }

    /// Region whose box is the mask's tight box.
    pub fn from_mask(mask: BinaryMask) -> Result<Self> {
        let bbox = mask.tight_box()?;
        Ok(Self {
            bbox,
            mask: Some(mask),
        })
    }

    /// Pairs a box with a mask whose tight box lies within the box grown by
    /// two pixels.
    pub fn with_mask(bbox: Bbox, mask: BinaryMask) -> Result<Self> {
        if !mask.is_empty() && !bbox.padded(2.0).contains(&mask.tight_box()?) {
            return Err(Error::InvalidParameter("mask extends beyond its region box"));
        }
        Ok(Self {
            bbox,
            mask: Some(mask),
        })
    }
}

/// The pixels a prompt marks (positive kinds) or preserves (reverse kinds).
pub fn region_support(
    kind: PromptKind,
    region: &Region,
    height: usize,
    width: usize,
    keypoint_radius: f64,
) -> Result<BinaryMask> {
    use PromptKind::*;
    match kind {
        P | A2 | B1 | B2 | B3 | B4 => Ok(rasterize_box(&region.bbox, height, width)),
        C1 | C2 | C3 | C4 => Ok(rasterize_ellipse(&region.bbox.inscribed_ellipse(), height, width)),
        D1 | D2 | D3 | D4 => {
            let mask = region.mask.as_ref().ok_or(Error::MissingMask(kind))?;
            if mask.dims() != (height, width) {
                return Err(Error::DimensionMismatch {
                    expected: (height, width),
                    found: mask.dims(),
                });
            }
            Ok(mask.clone())
        }
        A1 => Ok(disc_support(region.bbox.center(), keypoint_radius, height, width)),
    }
}

/// Grows (`s > 1`) or shrinks (`s < 1`) a region about its center.
///
/// Boxes scale their extents; masks are dilated or eroded by a disc of
/// radius `|s - 1| * sqrt(area / pi)`.
pub fn expand_region(region: &Region, s: f64) -> Result<Region> {
    if !(s > 0.0) {
        return Err(Error::InvalidParameter("expand scale must be positive"));
    }
    if s == 1.0 {
        return Ok(region.clone());
    }
    let bbox = region.bbox.scale_about_center(s);
    let mask = match &region.mask {
        None => None,
        Some(m) => {
            let r_eq = math::sqrt(m.area() as f64 / core::f64::consts::PI);
            let radius = (s - 1.0).abs() * r_eq;
            let out = if s > 1.0 {
                m.dilate_disc(radius)
            } else {
                m.erode_disc(radius)
            };
            if out.is_empty() {
                return Err(Error::DegenerateRegion);
            }
            Some(out)
        }
    };
    Ok(Region { bbox, mask })
}

/// One source image with its whole-frame grayscale and blur computed at most
/// once, so rendering many proposals of the same image shares them.
pub struct PromptCanvas<'a> {
    image: &'a ImageBuffer,
    sigma: f64,
    gray: OnceCell<ImageBuffer>,
    blurred: OnceCell<ImageBuffer>,
}

impl<'a> PromptCanvas<'a> {
    pub fn new(image: &'a ImageBuffer, blur_sigma: f64) -> Self {
        Self {
            image,
            sigma: blur_sigma,
            gray: OnceCell::new(),
            blurred: OnceCell::new(),
        }
    }

    pub fn image(&self) -> &ImageBuffer {
        self.image
    }

    pub fn grayscale(&self) -> &ImageBuffer {
        self.gray.get_or_init(|| to_grayscale(self.image))
    }

    pub fn blurred(&self) -> &ImageBuffer {
        self.blurred.get_or_init(|| gaussian_blur(self.image, self.sigma))
    }

    /// Renders `kind` for `region` after applying the style's expand scale.
    pub fn render(&self, region: &Region, kind: PromptKind, style: &PromptStyle) -> Result<ImageBuffer> {
        use PromptKind::*;
        style.validate()?;
        let img = self.image;
        let (h, w) = img.dims();
        let region = expand_region(region, style.expand_scale)?;
        let thickness = style.line_thickness as f64;
        match kind {
            P => crop(img, &region.bbox),
            A2 => {
                let cut = crop(img, &region.bbox)?;
                let (ch, cw) = cut.dims();
                alpha_blend(&cut, style.fill_color, style.alpha, &BinaryMask::full(ch, cw))
            }
            A1 => Ok(draw_disc(img, region.bbox.center(), style.keypoint_radius, style.line_color)),
            B1 => Ok(draw_box_outline(img, &region.bbox, style.line_color, thickness)),
            C1 => Ok(draw_ellipse_outline(
                img,
                &region.bbox.inscribed_ellipse(),
                style.line_color,
                thickness,
            )),
            D1 => {
                let mask = region_support(kind, &region, h, w, style.keypoint_radius)?;
                let band = mask_contour(&mask, style.line_thickness as usize);
                Ok(fill_mask(img, &band, style.line_color))
            }
            B2 | C2 | D2 => {
                let support = region_support(kind, &region, h, w, style.keypoint_radius)?;
                alpha_blend(img, style.fill_color, style.alpha, &support)
            }
            B3 | C3 | D3 => {
                let support = region_support(kind, &region, h, w, style.keypoint_radius)?;
                composite(img, self.grayscale(), &support)
            }
            B4 | C4 | D4 => {
                let support = region_support(kind, &region, h, w, style.keypoint_radius)?;
                if (style.blur_sigma - self.sigma).abs() > 0.0 {
                    return composite(img, &gaussian_blur(img, style.blur_sigma), &support);
                }
                composite(img, self.blurred(), &support)
            }
        }
    }
}

/// Renders a single prompt. Use [`PromptCanvas`] when rendering many regions
/// of one image.
pub fn render_prompt(
    img: &ImageBuffer,
    region: &Region,
    kind: PromptKind,
    style: &PromptStyle,
) -> Result<ImageBuffer> {
    PromptCanvas::new(img, style.blur_sigma).render(region, kind, style)
}

/// Squares a prompted image and resizes it to `side x side`.
/// [`SquareMode::Auto`] behaves as `Pad`; resolve it per kind first.
pub fn prepare_input(img: &ImageBuffer, mode: SquareMode, side: usize, pad_color: Color) -> Result<ImageBuffer> {
    if side == 0 {
        return Err(Error::InvalidParameter("input side must be at least 1"));
    }
    match mode {
        SquareMode::Stretch => resize(img, side, side),
        SquareMode::Pad | SquareMode::Auto => {
            resize(&pad_to_square(img, PadFill::Color(pad_color)), side, side)
        }
        SquareMode::CenterCrop => {
            let window = center_square(img.height(), img.width());
            resize(&crop(img, &window)?, side, side)
        }
    }
}
