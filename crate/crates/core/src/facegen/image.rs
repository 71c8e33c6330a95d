//! Grayscale raster, binary mask, and pixel-rectangle primitives shared by
//! the renderer, datasets, and the adaptation stages.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Axis-aligned pixel rectangle; `x1`/`y1` are exclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelRect {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl PixelRect {
    pub fn width(&self) -> usize {
        self.x1 - self.x0
    }

    pub fn height(&self) -> usize {
        self.y1 - self.y0
    }

    pub fn padded(&self, margin: usize, frame_w: usize, frame_h: usize) -> PixelRect {
        PixelRect {
            x0: self.x0.saturating_sub(margin),
            y0: self.y0.saturating_sub(margin),
            x1: (self.x1 + margin).min(frame_w),
            y1: (self.y1 + margin).min(frame_h),
        }
    }

    pub fn contained_in(&self, width: usize, height: usize) -> bool {
        self.x0 <= self.x1 && self.y0 <= self.y1 && self.x1 <= width && self.y1 <= height
    }
}

/// Grayscale image with intensities in [0, 1], row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, fill: f64) -> Image {
        Image {
            width,
            height,
            data: vec![fill; width * height],
        }
    }

    pub fn from_data(width: usize, height: usize, data: Vec<f64>) -> Image {
        assert_eq!(data.len(), width * height, "pixel buffer size mismatch");
        Image {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn clip01(&mut self) {
        for v in &mut self.data {
            *v = v.clamp(0.0, 1.0);
        }
    }

    /// Quantize to 8-bit gray, the storage format of every dataset file.
    pub fn to_gray8(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect()
    }

    pub fn from_gray8(width: usize, height: usize, bytes: &[u8]) -> Image {
        assert_eq!(bytes.len(), width * height);
        Image {
            width,
            height,
            data: bytes.iter().map(|b| f64::from(*b) / 255.0).collect(),
        }
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let buf = image::GrayImage::from_raw(self.width as u32, self.height as u32, self.to_gray8())
            .expect("buffer matches dimensions");
        buf.save_with_format(path, image::ImageFormat::Png)?;
        Ok(())
    }

    pub fn load_png(path: &Path) -> Result<Image> {
        let img = image::open(path)?.into_luma8();
        Ok(Image::from_gray8(
            img.width() as usize,
            img.height() as usize,
            img.as_raw(),
        ))
    }

    /// Bilinear resample of `rect` to a `size`x`size` output. Sample
    /// coordinates are clamped to the rectangle, and a rect already at the
    /// requested size passes pixels through untouched.
    pub fn resample_rect(&self, rect: PixelRect, size: usize) -> Image {
        assert!(rect.contained_in(self.width, self.height), "rect out of bounds");
        assert!(rect.width() > 0 && rect.height() > 0, "empty rect");
        let sx = rect.width() as f64 / size as f64;
        let sy = rect.height() as f64 / size as f64;
        let mut out = Image::new(size, size, 0.0);
        for oy in 0..size {
            let fy = (rect.y0 as f64 + (oy as f64 + 0.5) * sy - 0.5)
                .clamp(rect.y0 as f64, (rect.y1 - 1) as f64);
            let y0 = fy.floor() as usize;
            let y1 = (y0 + 1).min(rect.y1 - 1);
            let wy = fy - y0 as f64;
            for ox in 0..size {
                let fx = (rect.x0 as f64 + (ox as f64 + 0.5) * sx - 0.5)
                    .clamp(rect.x0 as f64, (rect.x1 - 1) as f64);
                let x0 = fx.floor() as usize;
                let x1 = (x0 + 1).min(rect.x1 - 1);
                let wx = fx - x0 as f64;
                let top = self.get(x0, y0) * (1.0 - wx) + self.get(x1, y0) * wx;
                let bot = self.get(x0, y1) * (1.0 - wx) + self.get(x1, y1) * wx;
                out.set(ox, oy, top * (1.0 - wy) + bot * wy);
            }
        }
        out
    }
}

/// Per-region binary raster; true marks pixels the region's primitives touch.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize) -> Mask {
        Mask {
            width,
            height,
            data: vec![false; width * height],
        }
    }

    pub fn from_data(width: usize, height: usize, data: Vec<bool>) -> Mask {
        assert_eq!(data.len(), width * height);
        Mask {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.data[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|v| **v).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|v| *v)
    }

    pub fn intersects(&self, other: &Mask) -> bool {
        self.data
            .iter()
            .zip(other.data.iter())
            .any(|(a, b)| *a && *b)
    }

    /// Tight bounding box of the set pixels, or None for an empty mask.
    pub fn bbox(&self) -> Option<PixelRect> {
        let mut x0 = usize::MAX;
        let mut y0 = usize::MAX;
        let mut x1 = 0usize;
        let mut y1 = 0usize;
        let mut any = false;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    any = true;
                    x0 = x0.min(x);
                    y0 = y0.min(y);
                    x1 = x1.max(x + 1);
                    y1 = y1.max(y + 1);
                }
            }
        }
        if any {
            Some(PixelRect { x0, y0, x1, y1 })
        } else {
            None
        }
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let bytes: Vec<u8> = self.data.iter().map(|v| if *v { 255 } else { 0 }).collect();
        let buf = image::GrayImage::from_raw(self.width as u32, self.height as u32, bytes)
            .expect("buffer matches dimensions");
        buf.save_with_format(path, image::ImageFormat::Png)?;
        Ok(())
    }

    pub fn load_png(path: &Path) -> Result<Mask> {
        let img = image::open(path)?.into_luma8();
        Ok(Mask {
            width: img.width() as usize,
            height: img.height() as usize,
            data: img.as_raw().iter().map(|b| *b >= 128).collect(),
        })
    }

    pub fn centroid(&self) -> Option<(f64, f64)> {
        let mut sx = 0.0;
        let mut sy = 0.0;
        let mut n = 0usize;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    sx += x as f64;
                    sy += y as f64;
                    n += 1;
                }
            }
        }
        if n == 0 {
            None
        } else {
            Some((sx / n as f64, sy / n as f64))
        }
    }
}

impl std::fmt::Display for PixelRect {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{},{})x[{},{})", self.x0, self.x1, self.y0, self.y1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resample_identity_when_sizes_match() {
        let mut img = Image::new(16, 16, 0.0);
        for y in 0..16 {
            for x in 0..16 {
                img.set(x, y, ((x * 31 + y * 7) % 97) as f64 / 96.0);
            }
        }
        let rect = PixelRect { x0: 4, y0: 2, x1: 12, y1: 10 };
        let out = img.resample_rect(rect, 8);
        for y in 0..8 {
            for x in 0..8 {
                assert_eq!(out.get(x, y), img.get(x + 4, y + 2));
            }
        }
    }

    #[test]
    fn gray8_roundtrip_is_exact_on_quantized_values() {
        let img = Image::from_gray8(4, 1, &[0, 77, 200, 255]);
        let bytes = img.to_gray8();
        assert_eq!(bytes, vec![0, 77, 200, 255]);
    }

    #[test]
    fn mask_bbox_and_disjointness() {
        let mut a = Mask::new(8, 8);
        a.set(2, 3, true);
        a.set(5, 6, true);
        let bbox = a.bbox().unwrap();
        assert_eq!(bbox, PixelRect { x0: 2, y0: 3, x1: 6, y1: 7 });
        let mut b = Mask::new(8, 8);
        b.set(1, 1, true);
        assert!(!a.intersects(&b));
        b.set(5, 6, true);
        assert!(a.intersects(&b));
        assert!(Mask::new(8, 8).bbox().is_none());
    }
}
