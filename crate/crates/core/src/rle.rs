//! COCO-style uncompressed run-length encoding.
//!
//! Runs are taken in column-major order and alternate starting with the
//! count of zeros, so a mask whose first pixel is set begins with a `0` run.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::mask::BinaryMask;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rle {
    pub height: usize,
    pub width: usize,
    pub counts: Vec<u32>,
}

pub fn encode(mask: &BinaryMask) -> Rle {
    let (h, w) = mask.dims();
    let mut counts = Vec::new();
    let mut current = false;
    let mut run = 0u32;
    for x in 0..w {
        for y in 0..h {
            let v = mask.get(x, y);
            if v != current {
                counts.push(run);
                run = 0;
                current = v;
            }
            run += 1;
        }
    }
    counts.push(run);
    Rle {
        height: h,
        width: w,
        counts,
    }
}

pub fn decode(rle: &Rle) -> Result<BinaryMask> {
    let (h, w) = (rle.height, rle.width);
    let total: u64 = rle.counts.iter().map(|&c| c as u64).sum();
    if total != (h * w) as u64 {
        return Err(Error::InvalidRle("run lengths do not sum to height*width"));
    }
    let mut mask = BinaryMask::new(h, w);
    let mut pos = 0usize;
    let mut value = false;
    for &c in &rle.counts {
        if value {
            for i in pos..pos + c as usize {
                mask.set(i / h, i % h, true);
            }
        }
        pos += c as usize;
        value = !value;
    }
    Ok(mask)
}
