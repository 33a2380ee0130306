//! Bit-packed binary masks plus the rasterization and morphology used by the
//! prompt renderers.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::geometry::{Bbox, Ellipse};

const WORD: usize = 64;

/// One bit per pixel, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    words: Vec<u64>,
}

impl BinaryMask {
    pub fn new(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            words: vec![0; (height * width).div_ceil(WORD)],
        }
    }

    pub fn full(height: usize, width: usize) -> Self {
        let mut m = Self::new(height, width);
        m.words.iter_mut().for_each(|w| *w = u64::MAX);
        m.clear_tail();
        m
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut m = Self::new(height, width);
        for y in 0..height {
            for x in 0..width {
                if f(x, y) {
                    m.set(x, y, true);
                }
            }
        }
        m
    }

    /// Row-major `0`/nonzero bytes.
    pub fn from_bytes(height: usize, width: usize, bytes: &[u8]) -> Result<Self> {
        if bytes.len() != height * width {
            return Err(Error::InvalidDimensions { height, width });
        }
        let mut m = Self::new(height, width);
        for (i, &b) in bytes.iter().enumerate() {
            if b != 0 {
                m.set_index(i);
            }
        }
        Ok(m)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        (0..self.height * self.width)
            .map(|i| self.get_index(i) as u8)
            .collect()
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    /// `(height, width)`.
    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        debug_assert!(x < self.width && y < self.height);
        self.get_index(y * self.width + x)
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        debug_assert!(x < self.width && y < self.height);
        let i = y * self.width + x;
        if value {
            self.set_index(i);
        } else {
            self.words[i / WORD] &= !(1u64 << (i % WORD));
        }
    }

    #[inline]
    fn get_index(&self, i: usize) -> bool {
        self.words[i / WORD] >> (i % WORD) & 1 == 1
    }

    #[inline]
    fn set_index(&mut self, i: usize) {
        self.words[i / WORD] |= 1u64 << (i % WORD);
    }

    fn clear_tail(&mut self) {
        let n = self.height * self.width;
        if !n.is_multiple_of(WORD) {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << (n % WORD)) - 1;
            }
        }
    }

    /// Number of set pixels.
    pub fn area(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    /// Set pixels as `(x, y)` in row-major order.
    pub fn iter_ones(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let width = self.width;
        self.words.iter().enumerate().flat_map(move |(wi, &word)| {
            let mut bits = word;
            core::iter::from_fn(move || {
                if bits == 0 {
                    return None;
                }
                let b = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                let i = wi * WORD + b;
                Some((i % width, i / width))
            })
        })
    }

    pub fn check_same_dims(&self, other: &BinaryMask) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                found: other.dims(),
            });
        }
        Ok(())
    }

    fn zip_words(&self, other: &BinaryMask, f: impl Fn(u64, u64) -> u64) -> Result<BinaryMask> {
        self.check_same_dims(other)?;
        let mut out = self.clone();
        for (a, b) in out.words.iter_mut().zip(&other.words) {
            *a = f(*a, *b);
        }
        out.clear_tail();
        Ok(out)
    }

    pub fn union(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.zip_words(other, |a, b| a | b)
    }

    pub fn intersection(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.zip_words(other, |a, b| a & b)
    }

    /// Pixels set in `self` but not in `other`.
    pub fn difference(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.zip_words(other, |a, b| a & !b)
    }

    pub fn complement(&self) -> BinaryMask {
        let mut out = self.clone();
        out.words.iter_mut().for_each(|w| *w = !*w);
        out.clear_tail();
        out
    }

    pub fn intersection_area(&self, other: &BinaryMask) -> Result<usize> {
        self.check_same_dims(other)?;
        Ok(self
            .words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & b).count_ones() as usize)
            .sum())
    }

    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.dims() == other.dims()
            && self.words.iter().zip(&other.words).all(|(a, b)| a & !b == 0)
    }

    /// Smallest box covering all set pixels, with inclusive integer extents.
    pub fn tight_box(&self) -> Result<Bbox> {
        let mut it = self.iter_ones();
        let (fx, fy) = it.next().ok_or(Error::EmptyMask)?;
        let (mut x0, mut x1, mut y0, mut y1) = (fx, fx, fy, fy);
        for (x, y) in it {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        Ok(Bbox {
            x: x0 as f64,
            y: y0 as f64,
            w: (x1 - x0 + 1) as f64,
            h: (y1 - y0 + 1) as f64,
        })
    }

    fn to_grid(&self) -> Vec<bool> {
        (0..self.height * self.width).map(|i| self.get_index(i)).collect()
    }

    fn from_grid(height: usize, width: usize, grid: &[bool]) -> Self {
        let mut m = Self::new(height, width);
        for (i, &v) in grid.iter().enumerate() {
            if v {
                m.set_index(i);
            }
        }
        m
    }

    /// Dilation by a `(2r+1) x (2r+1)` square.
    pub fn dilate_square(&self, r: usize) -> BinaryMask {
        if r == 0 {
            return self.clone();
        }
        let (h, w) = self.dims();
        let grid = self.to_grid();
        let horiz = window_any(&grid, h, w, r, Axis::Row);
        let out = window_any(&horiz, h, w, r, Axis::Col);
        Self::from_grid(h, w, &out)
    }

    /// Erosion by a `(2r+1) x (2r+1)` square; pixels outside the image count
    /// as background.
    pub fn erode_square(&self, r: usize) -> BinaryMask {
        if r == 0 {
            return self.clone();
        }
        let (h, w) = self.dims();
        let inv: Vec<bool> = self.to_grid().iter().map(|v| !v).collect();
        // Out-of-image background reaches any pixel within r of the border.
        let horiz = window_any(&inv, h, w, r, Axis::Row);
        let out = window_any(&horiz, h, w, r, Axis::Col);
        let grid: Vec<bool> = (0..h * w)
            .map(|i| {
                let (x, y) = (i % w, i / w);
                let near_border = x < r || y < r || x + r >= w || y + r >= h;
                !out[i] && !near_border
            })
            .collect();
        Self::from_grid(h, w, &grid)
    }

    /// Dilation by a Euclidean disc of radius `r`: a pixel is set when some
    /// set pixel lies within distance `r` of it.
    pub fn dilate_disc(&self, r: f64) -> BinaryMask {
        if r <= 0.0 || self.is_empty() {
            return self.clone();
        }
        let (h, w) = self.dims();
        let d2 = squared_distance_to(h, w, |i| self.get_index(i), false);
        let r2 = r * r;
        let grid: Vec<bool> = d2.iter().map(|&d| d <= r2).collect();
        Self::from_grid(h, w, &grid)
    }

    /// Erosion by a Euclidean disc of radius `r`: a pixel survives when every
    /// pixel within distance `r` is set. Outside the image counts as unset.
    pub fn erode_disc(&self, r: f64) -> BinaryMask {
        if r <= 0.0 || self.is_empty() {
            return self.clone();
        }
        let (h, w) = self.dims();
        let d2 = squared_distance_to(h, w, |i| !self.get_index(i), true);
        let r2 = r * r;
        let grid: Vec<bool> = d2.iter().map(|&d| d > r2).collect();
        Self::from_grid(h, w, &grid)
    }

    /// 4-connected components of pixels equal to `value`.
    pub fn components(&self, value: bool) -> Components {
        let (h, w) = self.dims();
        let mut labels = vec![NO_LABEL; h * w];
        let mut sizes = Vec::new();
        let mut touches_border = Vec::new();
        let mut queue = VecDeque::new();
        for start in 0..h * w {
            if labels[start] != NO_LABEL || self.get_index(start) != value {
                continue;
            }
            let label = sizes.len() as u32;
            labels[start] = label;
            queue.push_back(start);
            let (mut size, mut border) = (0usize, false);
            while let Some(i) = queue.pop_front() {
                size += 1;
                let (x, y) = (i % w, i / w);
                if x == 0 || y == 0 || x + 1 == w || y + 1 == h {
                    border = true;
                }
                let mut visit = |j: usize| {
                    if labels[j] == NO_LABEL && self.get_index(j) == value {
                        labels[j] = label;
                        queue.push_back(j);
                    }
                };
                if x > 0 {
                    visit(i - 1);
                }
                if x + 1 < w {
                    visit(i + 1);
                }
                if y > 0 {
                    visit(i - w);
                }
                if y + 1 < h {
                    visit(i + w);
                }
            }
            sizes.push(size);
            touches_border.push(border);
        }
        Components {
            width: w,
            labels,
            sizes,
            touches_border,
        }
    }
}

const NO_LABEL: u32 = u32::MAX;

/// Connected-component labeling result.
#[derive(Debug, Clone)]
pub struct Components {
    width: usize,
    labels: Vec<u32>,
    pub sizes: Vec<usize>,
    pub touches_border: Vec<bool>,
}

impl Components {
    pub fn len(&self) -> usize {
        self.sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sizes.is_empty()
    }

    pub fn label_at(&self, x: usize, y: usize) -> Option<usize> {
        match self.labels[y * self.width + x] {
            NO_LABEL => None,
            l => Some(l as usize),
        }
    }
}

#[derive(Clone, Copy)]
enum Axis {
    Row,
    Col,
}

/// For every cell, whether any `true` cell lies within `r` along `axis`.
fn window_any(grid: &[bool], h: usize, w: usize, r: usize, axis: Axis) -> Vec<bool> {
    let mut out = vec![false; h * w];
    let (lines, len) = match axis {
        Axis::Row => (h, w),
        Axis::Col => (w, h),
    };
    let index = |line: usize, k: usize| match axis {
        Axis::Row => line * w + k,
        Axis::Col => k * w + line,
    };
    let mut prefix = vec![0usize; len + 1];
    for line in 0..lines {
        for k in 0..len {
            prefix[k + 1] = prefix[k] + grid[index(line, k)] as usize;
        }
        for k in 0..len {
            let lo = k.saturating_sub(r);
            let hi = (k + r + 1).min(len);
            out[index(line, k)] = prefix[hi] > prefix[lo];
        }
    }
    out
}

const FAR: f64 = 1e20;

/// Squared Euclidean distance from every pixel to the nearest site. With
/// `border_sites`, the ring just outside the image also counts as sites.
fn squared_distance_to(
    h: usize,
    w: usize,
    is_site: impl Fn(usize) -> bool,
    border_sites: bool,
) -> Vec<f64> {
    let pad = border_sites as usize;
    let (ph, pw) = (h + 2 * pad, w + 2 * pad);
    let mut grid = vec![FAR; ph * pw];
    for py in 0..ph {
        for px in 0..pw {
            let inside = px >= pad && py >= pad && px < w + pad && py < h + pad;
            let site = if inside {
                is_site((py - pad) * w + (px - pad))
            } else {
                true
            };
            if site {
                grid[py * pw + px] = 0.0;
            }
        }
    }
    let n = ph.max(pw);
    let mut f = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut v = vec![0usize; n];
    let mut z = vec![0.0; n + 1];
    for x in 0..pw {
        for y in 0..ph {
            f[y] = grid[y * pw + x];
        }
        edt_1d(&f[..ph], &mut d[..ph], &mut v, &mut z);
        for y in 0..ph {
            grid[y * pw + x] = d[y];
        }
    }
    for y in 0..ph {
        f[..pw].copy_from_slice(&grid[y * pw..(y + 1) * pw]);
        edt_1d(&f[..pw], &mut d[..pw], &mut v, &mut z);
        grid[y * pw..(y + 1) * pw].copy_from_slice(&d[..pw]);
    }
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            out.push(grid[(y + pad) * pw + x + pad]);
        }
    }
    out
}

/// Lower envelope of parabolas (Felzenszwalb and Huttenlocher).
fn edt_1d(f: &[f64], d: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let sites: Vec<usize> = (0..n).filter(|&q| f[q] < FAR).collect();
    if sites.is_empty() {
        d.iter_mut().for_each(|x| *x = FAR);
        return;
    }
    let mut k = 0usize;
    v[0] = sites[0];
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for &q in &sites[1..] {
        let qf = q as f64;
        let mut s;
        loop {
            let p = v[k] as f64;
            s = ((f[q] + qf * qf) - (f[v[k]] + p * p)) / (2.0 * qf - 2.0 * p);
            // z[0] is -inf, so this stops at k == 0.
            if s > z[k] {
                break;
            }
            k -= 1;
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for (q, out) in d.iter_mut().enumerate().take(n) {
        let qf = q as f64;
        while z[k + 1] < qf {
            k += 1;
        }
        let p = v[k] as f64;
        *out = (qf - p) * (qf - p) + f[v[k]];
    }
}

/// Pixels whose centers fall inside the closed box, clamped to the image.
pub fn rasterize_box(b: &Bbox, height: usize, width: usize) -> BinaryMask {
    let mut m = BinaryMask::new(height, width);
    if let Some((x0, x1, y0, y1)) = b.pixel_span(height, width) {
        for y in y0..=y1 {
            for x in x0..=x1 {
                m.set(x, y, true);
            }
        }
    }
    m
}

/// Pixels whose centers satisfy the ellipse inequality, clamped to the image.
pub fn rasterize_ellipse(e: &Ellipse, height: usize, width: usize) -> BinaryMask {
    let mut m = BinaryMask::new(height, width);
    if !(e.rx > 0.0 && e.ry > 0.0) {
        return m;
    }
    if let Some((x0, x1, y0, y1)) = e.bounding_box().pixel_span(height, width) {
        for y in y0..=y1 {
            for x in x0..=x1 {
                if e.contains_pixel(x, y) {
                    m.set(x, y, true);
                }
            }
        }
    }
    m
}

/// Stroke band of `mask`: `dilate(ceil(t/2)) \ erode(floor(t/2))` with a
/// square structuring element.
pub fn mask_contour(mask: &BinaryMask, thickness: usize) -> BinaryMask {
    let t = thickness.max(1);
    let outer = mask.dilate_square(t.div_ceil(2));
    let inner = mask.erode_square(t / 2);
    outer
        .difference(&inner)
        .expect("morphology preserves dimensions")
}
