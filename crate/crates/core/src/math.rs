//! Float helpers that `core` does not provide without `std`.

#[inline]
pub(crate) fn round_half_up(v: f64) -> f64 {
    libm::floor(v + 0.5)
}

/// Half-up rounding into the 8-bit range.
#[inline]
pub(crate) fn to_u8(v: f64) -> u8 {
    let r = round_half_up(v);
    if r <= 0.0 {
        0
    } else if r >= 255.0 {
        255
    } else {
        r as u8
    }
}

#[inline]
pub(crate) fn floor(v: f64) -> f64 {
    libm::floor(v)
}

#[inline]
pub(crate) fn ceil(v: f64) -> f64 {
    libm::ceil(v)
}

#[inline]
pub(crate) fn sqrt(v: f64) -> f64 {
    libm::sqrt(v)
}

#[inline]
pub(crate) fn exp(v: f64) -> f64 {
    libm::exp(v)
}
