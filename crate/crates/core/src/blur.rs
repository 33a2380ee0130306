//! Separable Gaussian blur.

use alloc::vec;
use alloc::vec::Vec;

use crate::image::ImageBuffer;
use crate::math;

/// Below this sigma the blur is the identity.
pub const MIN_SIGMA: f64 = 0.1;

/// Kernel radius for `sigma` on an image whose longer side is `max_side`:
/// `ceil(3 sigma)`, capped at `max_side - 1`.
pub fn kernel_radius(sigma: f64, max_side: usize) -> usize {
    let r = math::ceil(3.0 * sigma) as usize;
    r.min(max_side.saturating_sub(1))
}

/// Normalized 1-D Gaussian taps for offsets `-radius..=radius`.
pub fn gaussian_kernel(sigma: f64, radius: usize) -> Vec<f64> {
    let denom = 2.0 * sigma * sigma;
    let mut taps: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let d = i as f64 - radius as f64;
            math::exp(-(d * d) / denom)
        })
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= sum);
    taps
}

/// Gaussian blur with clamp-to-edge borders.
///
/// Both passes run in `f64`; the only rounding is the final half-up
/// quantization back to 8 bits.
pub fn gaussian_blur(img: &ImageBuffer, sigma: f64) -> ImageBuffer {
    if !(sigma >= MIN_SIGMA) {
        return img.clone();
    }
    let (h, w) = img.dims();
    let radius = kernel_radius(sigma, h.max(w));
    if radius == 0 {
        return img.clone();
    }
    let taps = gaussian_kernel(sigma, radius);

    let src: Vec<[f64; 3]> = img
        .pixels()
        .iter()
        .map(|p| [p[0] as f64, p[1] as f64, p[2] as f64])
        .collect();

    let mut horiz = vec![[0.0f64; 3]; h * w];
    let mut line = vec![[0.0f64; 3]; w.max(h) + 2 * radius];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        fill_clamped(&mut line, row, radius);
        convolve_line(&line[..w + 2 * radius], &taps, &mut horiz[y * w..(y + 1) * w]);
    }

    let mut column = vec![[0.0f64; 3]; h];
    let mut out_col = vec![[0.0f64; 3]; h];
    let mut out = vec![[0u8; 3]; h * w];
    for x in 0..w {
        for y in 0..h {
            column[y] = horiz[y * w + x];
        }
        fill_clamped(&mut line, &column, radius);
        convolve_line(&line[..h + 2 * radius], &taps, &mut out_col);
        for y in 0..h {
            let v = out_col[y];
            out[y * w + x] = [math::to_u8(v[0]), math::to_u8(v[1]), math::to_u8(v[2])];
        }
    }
    ImageBuffer::from_pixels(h, w, out).expect("dimensions preserved")
}

/// Copies `src` into `dst[radius..]` and replicates its end samples into the
/// `radius`-wide margins.
fn fill_clamped(dst: &mut [[f64; 3]], src: &[[f64; 3]], radius: usize) {
    let n = src.len();
    for (i, slot) in dst.iter_mut().take(n + 2 * radius).enumerate() {
        let j = (i as isize - radius as isize).clamp(0, n as isize - 1) as usize;
        *slot = src[j];
    }
}

fn convolve_line(padded: &[[f64; 3]], taps: &[f64], out: &mut [[f64; 3]]) {
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = [0.0f64; 3];
        for (t, p) in taps.iter().zip(&padded[i..i + taps.len()]) {
            acc[0] += t * p[0];
            acc[1] += t * p[1];
            acc[2] += t * p[2];
        }
        *o = acc;
    }
}
