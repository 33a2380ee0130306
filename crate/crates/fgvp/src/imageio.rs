//! PNG/JPEG decoding and lossless PNG encoding.

use std::io::Cursor;
use std::path::{Path, PathBuf};

use fgvp_core::ImageBuffer;
use image::{ImageFormat, RgbImage};

use crate::fsutil::write_atomic;

#[derive(Debug, thiserror::Error)]
pub enum ImageIoError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: cannot decode image: {source}", path.display())]
    Decode { path: PathBuf, source: image::ImageError },
    #[error("cannot decode image bytes: {0}")]
    DecodeBytes(image::ImageError),
    #[error("cannot encode PNG: {0}")]
    Encode(image::ImageError),
    #[error("image has zero extent")]
    Empty,
}

/// Decodes any supported format (PNG, JPEG) to 8-bit RGB.
pub fn decode(bytes: &[u8]) -> Result<ImageBuffer, ImageIoError> {
    let img = image::load_from_memory(bytes).map_err(ImageIoError::DecodeBytes)?;
    from_dynamic(img)
}

pub fn load(path: &Path) -> Result<ImageBuffer, ImageIoError> {
    let bytes = std::fs::read(path).map_err(|source| ImageIoError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let img = image::load_from_memory(&bytes).map_err(|source| ImageIoError::Decode {
        path: path.to_path_buf(),
        source,
    })?;
    from_dynamic(img)
}

fn from_dynamic(img: image::DynamicImage) -> Result<ImageBuffer, ImageIoError> {
    let rgb = img.to_rgb8();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    ImageBuffer::from_rgb_bytes(h, w, rgb.as_raw()).map_err(|_| ImageIoError::Empty)
}

pub fn encode_png(img: &ImageBuffer) -> Result<Vec<u8>, ImageIoError> {
    let rgb = RgbImage::from_raw(img.width() as u32, img.height() as u32, img.to_rgb_bytes())
        .expect("buffer length matches dimensions");
    let mut out = Cursor::new(Vec::new());
    rgb.write_to(&mut out, ImageFormat::Png).map_err(ImageIoError::Encode)?;
    Ok(out.into_inner())
}

pub fn save_png(path: &Path, img: &ImageBuffer) -> Result<(), ImageIoError> {
    let bytes = encode_png(img)?;
    write_atomic(path, &bytes).map_err(|source| ImageIoError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_roundtrip_is_lossless() {
        let img = ImageBuffer::from_fn(5, 7, |x, y| [x as u8 * 30, y as u8 * 40, (x * y) as u8]).unwrap();
        let bytes = encode_png(&img).unwrap();
        assert_eq!(&bytes[1..4], b"PNG");
        assert_eq!(decode(&bytes).unwrap(), img);
    }

    #[test]
    fn garbage_does_not_decode() {
        assert!(decode(b"not an image").is_err());
    }
}
