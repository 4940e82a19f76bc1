//! Grayscale image file I/O (8- and 16-bit PNG).

use std::path::Path;

use image::{DynamicImage, ImageBuffer, Luma};

use crate::error::{Result, SdrError};

/// Save values in `[0,1]` as 16-bit grayscale (scaled to `[0,65535]`).
pub fn save_gray16(path: &Path, values: &[f32], h: usize, w: usize) -> Result<()> {
    debug_assert_eq!(values.len(), h * w);
    let buf: Vec<u16> = values
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 65535.0).round() as u16)
        .collect();
    let img: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(w as u32, h as u32, buf).expect("buffer size mismatch");
    img.save(path).map_err(|e| SdrError::Image {
        path: path.display().to_string(),
        detail: e.to_string(),
    })
}

/// Save a binary mask as 8-bit grayscale (0 or 255).
pub fn save_mask(path: &Path, mask: &[bool], h: usize, w: usize) -> Result<()> {
    debug_assert_eq!(mask.len(), h * w);
    let buf: Vec<u8> = mask.iter().map(|&m| if m { 255 } else { 0 }).collect();
    let img: ImageBuffer<Luma<u8>, Vec<u8>> =
        ImageBuffer::from_raw(w as u32, h as u32, buf).expect("buffer size mismatch");
    img.save(path).map_err(|e| SdrError::Image {
        path: path.display().to_string(),
        detail: e.to_string(),
    })
}

/// Load a grayscale image normalized to `[0,1]` (8-bit by 255, 16-bit by
/// 65535). Returns `(values, height, width)`.
pub fn load_gray(path: &Path) -> Result<(Vec<f32>, usize, usize)> {
    let img = image::open(path).map_err(|e| SdrError::Image {
        path: path.display().to_string(),
        detail: e.to_string(),
    })?;
    match img {
        DynamicImage::ImageLuma16(buf) => {
            let (w, h) = (buf.width() as usize, buf.height() as usize);
            let v = buf.into_raw().iter().map(|&p| p as f32 / 65535.0).collect();
            Ok((v, h, w))
        }
        other => {
            let buf = other.into_luma8();
            let (w, h) = (buf.width() as usize, buf.height() as usize);
            let v = buf.into_raw().iter().map(|&p| p as f32 / 255.0).collect();
            Ok((v, h, w))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gray16_roundtrip_is_exact_on_the_u16_grid() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.png");
        let vals: Vec<f32> = (0..16).map(|i| (i * 4369) as f32 / 65535.0).collect();
        save_gray16(&path, &vals, 4, 4).unwrap();
        let (back, h, w) = load_gray(&path).unwrap();
        assert_eq!((h, w), (4, 4));
        for (a, b) in vals.iter().zip(&back) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn mask_of_all_255_loads_as_ones() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mask.png");
        save_mask(&path, &[true; 9], 3, 3).unwrap();
        let (v, _, _) = load_gray(&path).unwrap();
        assert!(v.iter().all(|&x| x == 1.0));
    }
}
