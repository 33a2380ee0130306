use crate::error::{Error, Result};
use crate::math;

/// Axis-aligned box in pixel units: top-left corner plus extent.
///
/// Boxes are never clamped on construction; rasterization clamps to the
/// image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bbox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl Bbox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        if !(w > 0.0 && h > 0.0) || !x.is_finite() || !y.is_finite() || !w.is_finite() || !h.is_finite()
        {
            return Err(Error::InvalidParameter("box extents must be positive and finite"));
        }
        Ok(Self { x, y, w, h })
    }

    pub fn from_array(a: [f64; 4]) -> Result<Self> {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.x, self.y, self.w, self.h]
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn diagonal(&self) -> f64 {
        math::sqrt(self.w * self.w + self.h * self.h)
    }

    /// Scales both extents by `s` about the box center.
    pub fn scale_about_center(&self, s: f64) -> Bbox {
        let (cx, cy) = self.center();
        let (w, h) = (self.w * s, self.h * s);
        Bbox {
            x: cx - w / 2.0,
            y: cy - h / 2.0,
            w,
            h,
        }
    }

    /// Grows every side by `pad` (shrinks for negative `pad`). The result may
    /// have non-positive extent; callers rasterizing it get an empty mask.
    pub fn padded(&self, pad: f64) -> Bbox {
        Bbox {
            x: self.x - pad,
            y: self.y - pad,
            w: self.w + 2.0 * pad,
            h: self.h + 2.0 * pad,
        }
    }

    pub fn contains(&self, other: &Bbox) -> bool {
        other.x >= self.x
            && other.y >= self.y
            && other.right() <= self.right()
            && other.bottom() <= self.bottom()
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Bbox {
        Bbox {
            x: self.x + dx,
            y: self.y + dy,
            ..*self
        }
    }

    pub fn inscribed_ellipse(&self) -> Ellipse {
        let (cx, cy) = self.center();
        Ellipse {
            cx,
            cy,
            rx: self.w / 2.0,
            ry: self.h / 2.0,
        }
    }

    /// Inclusive pixel index ranges `(x0, x1, y0, y1)` whose centers fall in
    /// the closed box, clamped to a `height x width` image. `None` when no
    /// pixel qualifies.
    pub(crate) fn pixel_span(
        &self,
        height: usize,
        width: usize,
    ) -> Option<(usize, usize, usize, usize)> {
        let (x0, x1) = center_span(self.x, self.right(), width)?;
        let (y0, y1) = center_span(self.y, self.bottom(), height)?;
        Some((x0, x1, y0, y1))
    }
}

/// Pixel indices `i` in `[0, limit)` with `lo <= i + 0.5 <= hi`.
pub(crate) fn center_span(lo: f64, hi: f64, limit: usize) -> Option<(usize, usize)> {
    if !(hi >= lo) || limit == 0 {
        return None;
    }
    let first = math::ceil(lo - 0.5).max(0.0);
    let last = math::floor(hi - 0.5).min(limit as f64 - 1.0);
    if first > last {
        return None;
    }
    Some((first as usize, last as usize))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipse {
    pub cx: f64,
    pub cy: f64,
    pub rx: f64,
    pub ry: f64,
}

impl Ellipse {
    pub fn new(cx: f64, cy: f64, rx: f64, ry: f64) -> Result<Self> {
        if !(rx > 0.0 && ry > 0.0) {
            return Err(Error::InvalidParameter("ellipse semi-axes must be positive"));
        }
        Ok(Self { cx, cy, rx, ry })
    }

    pub fn circle(cx: f64, cy: f64, r: f64) -> Result<Self> {
        Self::new(cx, cy, r, r)
    }

    /// Pixel-center membership test. Multiplied out rather than divided so
    /// that centers exactly on the boundary of half-pixel ellipses are
    /// judged without rounding.
    #[inline]
    pub fn contains_pixel(&self, px: usize, py: usize) -> bool {
        if !(self.rx > 0.0 && self.ry > 0.0) {
            return false;
        }
        let dx = px as f64 + 0.5 - self.cx;
        let dy = py as f64 + 0.5 - self.cy;
        let (rx2, ry2) = (self.rx * self.rx, self.ry * self.ry);
        dx * dx * ry2 + dy * dy * rx2 <= rx2 * ry2
    }

    pub fn scale_about_center(&self, s: f64) -> Ellipse {
        Ellipse {
            rx: self.rx * s,
            ry: self.ry * s,
            ..*self
        }
    }

    pub fn bounding_box(&self) -> Bbox {
        Bbox {
            x: self.cx - self.rx,
            y: self.cy - self.ry,
            w: 2.0 * self.rx,
            h: 2.0 * self.ry,
        }
    }
}

/// Intersection over union of two boxes, in continuous coordinates.
pub fn box_iou(a: &Bbox, b: &Bbox) -> f64 {
    let iw = (a.right().min(b.right()) - a.x.max(b.x)).max(0.0);
    let ih = (a.bottom().min(b.bottom()) - a.y.max(b.y)).max(0.0);
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(x: f64, y: f64, w: f64, h: f64) -> Bbox {
        Bbox::new(x, y, w, h).unwrap()
    }

    #[test]
    fn box_iou_cases() {
        assert_eq!(box_iou(&b(1.0, 2.0, 3.0, 4.0), &b(1.0, 2.0, 3.0, 4.0)), 1.0);
        assert_eq!(box_iou(&b(0.0, 0.0, 1.0, 1.0), &b(5.0, 5.0, 1.0, 1.0)), 0.0);
        let v = box_iou(&b(0.0, 0.0, 10.0, 10.0), &b(5.0, 0.0, 10.0, 10.0));
        assert!((v - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_degenerate_boxes() {
        assert!(Bbox::new(0.0, 0.0, 0.0, 1.0).is_err());
        assert!(Bbox::new(0.0, 0.0, 1.0, -1.0).is_err());
        assert!(Bbox::new(f64::NAN, 0.0, 1.0, 1.0).is_err());
        assert!(Ellipse::new(0.0, 0.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn center_scaling() {
        let s = b(10.0, 10.0, 20.0, 20.0).scale_about_center(1.5);
        assert_eq!(s, b(5.0, 5.0, 30.0, 30.0));
    }

    #[test]
    fn inscribed_ellipse_matches_box() {
        let e = b(2.0, 4.0, 10.0, 6.0).inscribed_ellipse();
        assert_eq!((e.cx, e.cy, e.rx, e.ry), (7.0, 7.0, 5.0, 3.0));
    }

    #[test]
    fn center_span_clamps() {
        assert_eq!(center_span(2.0, 5.0, 8), Some((2, 4)));
        assert_eq!(center_span(-3.0, 100.0, 8), Some((0, 7)));
        assert_eq!(center_span(20.0, 30.0, 8), None);
        assert_eq!(center_span(2.6, 3.4, 8), None);
    }
}
