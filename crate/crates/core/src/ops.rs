//! Per-pixel transforms and resampling.

use alloc::vec::Vec;

use crate::blur::gaussian_blur;
use crate::error::{Error, Result};
use crate::geometry::Bbox;
use crate::image::{Color, ImageBuffer};
use crate::mask::BinaryMask;
use crate::math;

/// Rec.601 luma, replicated into all three channels.
pub fn to_grayscale(img: &ImageBuffer) -> ImageBuffer {
    let mut out = img.clone();
    for p in out.pixels_mut() {
        let y = math::to_u8(0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64);
        *p = [y, y, y];
    }
    out
}

/// Blends `color` over the pixels of `support` with opacity `alpha`.
pub fn alpha_blend(
    img: &ImageBuffer,
    color: Color,
    alpha: f64,
    support: &BinaryMask,
) -> Result<ImageBuffer> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidParameter("alpha must lie in [0, 1]"));
    }
    img.check_dims(support.dims())?;
    let mut out = img.clone();
    if alpha == 0.0 {
        return Ok(out);
    }
    let c = color.to_array();
    let w = img.width();
    let px = out.pixels_mut();
    for (x, y) in support.iter_ones() {
        let p = &mut px[y * w + x];
        for ch in 0..3 {
            p[ch] = math::to_u8((1.0 - alpha) * p[ch] as f64 + alpha * c[ch] as f64);
        }
    }
    Ok(out)
}

/// `fg` where `support` is set, `bg` elsewhere.
pub fn composite(fg: &ImageBuffer, bg: &ImageBuffer, support: &BinaryMask) -> Result<ImageBuffer> {
    fg.check_dims(bg.dims())?;
    fg.check_dims(support.dims())?;
    let mut out = bg.clone();
    let w = fg.width();
    let src = fg.pixels();
    let dst = out.pixels_mut();
    for (x, y) in support.iter_ones() {
        dst[y * w + x] = src[y * w + x];
    }
    Ok(out)
}

/// Copies the pixels whose centers fall in `b`, clamped to the image.
pub fn crop(img: &ImageBuffer, b: &Bbox) -> Result<ImageBuffer> {
    let (x0, x1, y0, y1) = b
        .pixel_span(img.height(), img.width())
        .ok_or(Error::CropOutOfBounds)?;
    crop_span(img, x0, y0, x1 - x0 + 1, y1 - y0 + 1)
}

/// Top-left pixel a [`crop`] of `b` starts at.
pub fn crop_origin(img: &ImageBuffer, b: &Bbox) -> Result<(usize, usize)> {
    let (x0, _, y0, _) = b
        .pixel_span(img.height(), img.width())
        .ok_or(Error::CropOutOfBounds)?;
    Ok((x0, y0))
}

fn crop_span(img: &ImageBuffer, x0: usize, y0: usize, w: usize, h: usize) -> Result<ImageBuffer> {
    let mut pixels = Vec::with_capacity(w * h);
    for y in y0..y0 + h {
        let row = &img.pixels()[y * img.width() + x0..y * img.width() + x0 + w];
        pixels.extend_from_slice(row);
    }
    ImageBuffer::from_pixels(h, w, pixels)
}

/// Bilinear resampling with half-pixel centers and clamped borders.
pub fn resize(img: &ImageBuffer, out_h: usize, out_w: usize) -> Result<ImageBuffer> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::InvalidDimensions {
            height: out_h,
            width: out_w,
        });
    }
    let (h, w) = img.dims();
    if (h, w) == (out_h, out_w) {
        return Ok(img.clone());
    }
    let xs: Vec<(usize, usize, f64)> = (0..out_w).map(|i| sample_axis(i, w, out_w)).collect();
    let ys: Vec<(usize, usize, f64)> = (0..out_h).map(|i| sample_axis(i, h, out_h)).collect();
    ImageBuffer::from_fn(out_h, out_w, |x, y| {
        let (x0, x1, fx) = xs[x];
        let (y0, y1, fy) = ys[y];
        let (a, b, c, d) = (img.get(x0, y0), img.get(x1, y0), img.get(x0, y1), img.get(x1, y1));
        let mut p = [0u8; 3];
        for ch in 0..3 {
            let top = a[ch] as f64 * (1.0 - fx) + b[ch] as f64 * fx;
            let bot = c[ch] as f64 * (1.0 - fx) + d[ch] as f64 * fx;
            p[ch] = math::to_u8(top * (1.0 - fy) + bot * fy);
        }
        p
    })
}

fn sample_axis(i: usize, src: usize, dst: usize) -> (usize, usize, f64) {
    let pos = ((i as f64 + 0.5) * src as f64 / dst as f64 - 0.5).clamp(0.0, (src - 1) as f64);
    let lo = math::floor(pos) as usize;
    let hi = (lo + 1).min(src - 1);
    (lo, hi, pos - lo as f64)
}

/// Fill rule for the margins of [`pad_to_square`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PadFill {
    Color(Color),
    /// Replicate the edge pixels outward, then Gaussian-blur the margin.
    BlurExtend { sigma: f64 },
}

impl Default for PadFill {
    fn default() -> Self {
        PadFill::Color(Color::BLACK)
    }
}

/// Centers the image on a square canvas of side `max(H, W)`. The leading
/// margin gets the floor of half the slack.
pub fn pad_to_square(img: &ImageBuffer, fill: PadFill) -> ImageBuffer {
    let (h, w) = img.dims();
    let side = h.max(w);
    if h == w {
        return img.clone();
    }
    let (oy, ox) = ((side - h) / 2, (side - w) / 2);
    let inside = |x: usize, y: usize| x >= ox && x < ox + w && y >= oy && y < oy + h;
    let clamped = |x: usize, y: usize| {
        let sx = x.clamp(ox, ox + w - 1) - ox;
        let sy = y.clamp(oy, oy + h - 1) - oy;
        img.get(sx, sy)
    };
    match fill {
        PadFill::Color(c) => ImageBuffer::from_fn(side, side, |x, y| {
            if inside(x, y) {
                clamped(x, y)
            } else {
                c.to_array()
            }
        })
        .expect("side >= 1"),
        PadFill::BlurExtend { sigma } => {
            let extended = ImageBuffer::from_fn(side, side, clamped).expect("side >= 1");
            let blurred = gaussian_blur(&extended, sigma);
            let support = BinaryMask::from_fn(side, side, inside);
            composite(&extended, &blurred, &support).expect("same dims")
        }
    }
}

/// Largest centered square window, as a box.
pub fn center_square(h: usize, w: usize) -> Bbox {
    let side = h.min(w);
    Bbox {
        x: ((w - side) / 2) as f64,
        y: ((h - side) / 2) as f64,
        w: side as f64,
        h: side as f64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gradient(h: usize, w: usize) -> ImageBuffer {
        ImageBuffer::from_fn(h, w, |x, y| [(x * 13 % 256) as u8, (y * 29 % 256) as u8, ((x + y) * 7 % 256) as u8])
            .unwrap()
    }

    #[test]
    fn grayscale_values() {
        let img = ImageBuffer::from_pixels(1, 3, alloc::vec![[255, 0, 0], [0, 0, 0], [77, 77, 77]]).unwrap();
        let g = to_grayscale(&img);
        assert_eq!(g.pixels(), &[[76, 76, 76], [0, 0, 0], [77, 77, 77]]);
    }

    #[test]
    fn grayscale_fixes_all_grays() {
        let img = ImageBuffer::from_fn(1, 256, |x, _| [x as u8; 3]).unwrap();
        assert_eq!(to_grayscale(&img), img);
    }

    #[test]
    fn blend_half_green() {
        let img = ImageBuffer::new(2, 2, Color::new(100, 100, 100)).unwrap();
        let out = alpha_blend(&img, Color::GREEN, 0.5, &BinaryMask::full(2, 2)).unwrap();
        assert!(out.pixels().iter().all(|p| *p == [50, 178, 50]));
    }

    #[test]
    fn blend_edges() {
        let img = gradient(4, 5);
        let full = BinaryMask::full(4, 5);
        assert_eq!(alpha_blend(&img, Color::RED, 0.0, &full).unwrap(), img);
        let solid = alpha_blend(&img, Color::RED, 1.0, &full).unwrap();
        assert!(solid.pixels().iter().all(|p| *p == [255, 0, 0]));
        assert!(alpha_blend(&img, Color::RED, 1.5, &full).is_err());
        assert!(alpha_blend(&img, Color::RED, 0.5, &BinaryMask::full(5, 4)).is_err());
    }

    #[test]
    fn composite_checkerboard() {
        let fg = ImageBuffer::new(6, 5, Color::RED).unwrap();
        let bg = ImageBuffer::new(6, 5, Color::BLUE).unwrap();
        let cb = BinaryMask::from_fn(6, 5, |x, y| (x + y) % 2 == 0);
        let out = composite(&fg, &bg, &cb).unwrap();
        for y in 0..6 {
            for x in 0..5 {
                let want = if (x + y) % 2 == 0 { [255, 0, 0] } else { [0, 0, 255] };
                assert_eq!(out.get(x, y), want);
            }
        }
        assert_eq!(composite(&fg, &bg, &BinaryMask::full(6, 5)).unwrap(), fg);
        assert_eq!(composite(&fg, &bg, &BinaryMask::new(6, 5)).unwrap(), bg);
        assert!(composite(&fg, &gradient(5, 5), &cb).is_err());
    }

    #[test]
    fn crop_cases() {
        let img = gradient(6, 8);
        assert_eq!(crop(&img, &Bbox::new(0.0, 0.0, 8.0, 6.0).unwrap()).unwrap(), img);
        let c = crop(&img, &Bbox::new(2.0, 1.0, 3.0, 2.0).unwrap()).unwrap();
        assert_eq!(c.dims(), (2, 3));
        assert_eq!(c.get(0, 0), img.get(2, 1));
        assert_eq!(c.get(2, 1), img.get(4, 2));
        let clamped = crop(&img, &Bbox::new(-5.0, -5.0, 7.0, 7.0).unwrap()).unwrap();
        assert_eq!(clamped.dims(), (2, 2));
        assert_eq!(
            crop(&img, &Bbox::new(20.0, 0.0, 3.0, 3.0).unwrap()),
            Err(Error::CropOutOfBounds)
        );
    }

    #[test]
    fn resize_identity_and_constant() {
        let img = gradient(7, 9);
        assert_eq!(resize(&img, 7, 9).unwrap(), img);
        let flat = ImageBuffer::new(3, 5, Color::new(10, 20, 30)).unwrap();
        let up = resize(&flat, 11, 4).unwrap();
        assert!(up.pixels().iter().all(|p| *p == [10, 20, 30]));
        assert!(resize(&img, 0, 3).is_err());
    }

    #[test]
    fn resize_halves_by_averaging() {
        let img = ImageBuffer::from_fn(1, 4, |x, _| [(x * 10) as u8; 3]).unwrap();
        let half = resize(&img, 1, 2).unwrap();
        assert_eq!(half.pixels(), &[[5, 5, 5], [25, 25, 25]]);
    }

    #[test]
    fn pad_wide_image() {
        let img = gradient(4, 8);
        let sq = pad_to_square(&img, PadFill::Color(Color::WHITE));
        assert_eq!(sq.dims(), (8, 8));
        for y in 0..8 {
            for x in 0..8 {
                if (2..6).contains(&y) {
                    assert_eq!(sq.get(x, y), img.get(x, y - 2));
                } else {
                    assert_eq!(sq.get(x, y), [255, 255, 255]);
                }
            }
        }
        let blurred = pad_to_square(&img, PadFill::BlurExtend { sigma: 2.0 });
        for y in 2..6 {
            for x in 0..8 {
                assert_eq!(blurred.get(x, y), img.get(x, y - 2));
            }
        }
    }

    #[test]
    fn center_square_window() {
        assert_eq!(center_square(4, 8), Bbox::new(2.0, 0.0, 4.0, 4.0).unwrap());
        assert_eq!(center_square(9, 4), Bbox::new(0.0, 2.0, 4.0, 4.0).unwrap());
    }
}
