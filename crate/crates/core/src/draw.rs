//! Opaque stroke and fill drawing. Coverage is a pixel-center test with no
//! anti-aliasing.

use crate::geometry::{Bbox, Ellipse};
use crate::image::{Color, ImageBuffer};
use crate::mask::{rasterize_box, rasterize_ellipse, BinaryMask};

/// Stroke band of a box outline: the box grown by `thickness / 2` minus the
/// box shrunk by the same amount.
pub fn box_outline_band(b: &Bbox, thickness: f64, height: usize, width: usize) -> BinaryMask {
    let half = thickness / 2.0;
    let outer = rasterize_box(&b.padded(half), height, width);
    let inner_box = b.padded(-half);
    if inner_box.w <= 0.0 || inner_box.h <= 0.0 {
        return outer;
    }
    let inner = rasterize_box(&inner_box, height, width);
    outer.difference(&inner).expect("same dims")
}

pub fn ellipse_outline_band(e: &Ellipse, thickness: f64, height: usize, width: usize) -> BinaryMask {
    let half = thickness / 2.0;
    let grow = |d: f64| Ellipse {
        rx: e.rx + d,
        ry: e.ry + d,
        ..*e
    };
    let outer = rasterize_ellipse(&grow(half), height, width);
    let inner = grow(-half);
    if inner.rx <= 0.0 || inner.ry <= 0.0 {
        return outer;
    }
    outer
        .difference(&rasterize_ellipse(&inner, height, width))
        .expect("same dims")
}

/// Paints `color` over every set pixel of `support`.
pub fn fill_mask(img: &ImageBuffer, support: &BinaryMask, color: Color) -> ImageBuffer {
    let mut out = img.clone();
    let w = img.width();
    let c = color.to_array();
    let px = out.pixels_mut();
    for (x, y) in support.iter_ones() {
        if y * w + x < px.len() {
            px[y * w + x] = c;
        }
    }
    out
}

pub fn draw_box_outline(img: &ImageBuffer, b: &Bbox, color: Color, thickness: f64) -> ImageBuffer {
    let band = box_outline_band(b, thickness.max(1.0), img.height(), img.width());
    fill_mask(img, &band, color)
}

pub fn draw_ellipse_outline(
    img: &ImageBuffer,
    e: &Ellipse,
    color: Color,
    thickness: f64,
) -> ImageBuffer {
    let band = ellipse_outline_band(e, thickness.max(1.0), img.height(), img.width());
    fill_mask(img, &band, color)
}

pub fn disc_support(center: (f64, f64), radius: f64, height: usize, width: usize) -> BinaryMask {
    let e = Ellipse {
        cx: center.0,
        cy: center.1,
        rx: radius,
        ry: radius,
    };
    rasterize_ellipse(&e, height, width)
}

/// Filled circle.
pub fn draw_disc(img: &ImageBuffer, center: (f64, f64), radius: f64, color: Color) -> ImageBuffer {
    let support = disc_support(center, radius.max(1.0), img.height(), img.width());
    fill_mask(img, &support, color)
}
