//! Raster frames, boxes and colors, plus PNG (de)serialization.

use std::fmt;
use std::io::Cursor;
use std::path::Path;

use image::{ImageFormat, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Color {
    pub r: u8,
    pub g: u8,
    pub b: u8,
}

impl Color {
    pub const BLACK: Color = Color::new(0, 0, 0);
    pub const WHITE: Color = Color::new(255, 255, 255);
    pub const RED: Color = Color::new(255, 0, 0);

    pub const fn new(r: u8, g: u8, b: u8) -> Self {
        Self { r, g, b }
    }

    /// ITU-R 601 luma.
    pub fn luminance(self) -> f64 {
        0.299 * self.r as f64 + 0.587 * self.g as f64 + 0.114 * self.b as f64
    }

    pub fn to_array(self) -> [u8; 3] {
        [self.r, self.g, self.b]
    }
}

impl From<[u8; 3]> for Color {
    fn from([r, g, b]: [u8; 3]) -> Self {
        Self { r, g, b }
    }
}

/// Axis-aligned pixel rectangle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BBox {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl BBox {
    pub const fn new(x: u32, y: u32, w: u32, h: u32) -> Self {
        Self { x, y, w, h }
    }

    pub fn right(&self) -> u32 {
        self.x + self.w
    }

    pub fn bottom(&self) -> u32 {
        self.y + self.h
    }

    pub fn area(&self) -> u64 {
        self.w as u64 * self.h as u64
    }

    pub fn is_empty(&self) -> bool {
        self.w == 0 || self.h == 0
    }

    pub fn contains_point(&self, x: u32, y: u32) -> bool {
        x >= self.x && y >= self.y && x < self.right() && y < self.bottom()
    }

    pub fn fits_in(&self, width: u32, height: u32) -> bool {
        !self.is_empty()
            && (self.x as u64 + self.w as u64) <= width as u64
            && (self.y as u64 + self.h as u64) <= height as u64
    }

    pub fn intersection(&self, other: &BBox) -> Option<BBox> {
        let x0 = self.x.max(other.x);
        let y0 = self.y.max(other.y);
        let x1 = self.right().min(other.right());
        let y1 = self.bottom().min(other.bottom());
        (x1 > x0 && y1 > y0).then(|| BBox::new(x0, y0, x1 - x0, y1 - y0))
    }

    pub fn union(&self, other: &BBox) -> BBox {
        let x0 = self.x.min(other.x);
        let y0 = self.y.min(other.y);
        let x1 = self.right().max(other.right());
        let y1 = self.bottom().max(other.bottom());
        BBox::new(x0, y0, x1 - x0, y1 - y0)
    }

    pub fn iou(&self, other: &BBox) -> f64 {
        let inter = self.intersection(other).map_or(0, |b| b.area());
        let union = self.area() + other.area() - inter;
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }

    pub fn translate(&self, dx: i64, dy: i64) -> Option<BBox> {
        let x = u32::try_from(self.x as i64 + dx).ok()?;
        let y = u32::try_from(self.y as i64 + dy).ok()?;
        Some(BBox::new(x, y, self.w, self.h))
    }
}

impl fmt::Display for BBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{}x{})", self.x, self.y, self.w, self.h)
    }
}

/// A timestamped RGB8 raster, row-major, no alpha.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Frame {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
    /// Milliseconds since the epoch.
    pub timestamp: u64,
}

impl fmt::Debug for Frame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Frame")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("timestamp", &self.timestamp)
            .finish_non_exhaustive()
    }
}

impl Frame {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidFrame(format!("zero dimension {width}x{height}")));
        }
        let expected = width as usize * height as usize * 3;
        if pixels.len() != expected {
            return Err(Error::InvalidFrame(format!(
                "pixel buffer has {} bytes, expected {expected}",
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
            timestamp: 0,
        })
    }

    /// Panics on zero dimensions.
    pub fn filled(width: u32, height: u32, color: Color) -> Self {
        assert!(width > 0 && height > 0, "frame dimensions must be positive");
        let pixels = color
            .to_array()
            .iter()
            .copied()
            .cycle()
            .take(width as usize * height as usize * 3)
            .collect();
        Self {
            width,
            height,
            pixels,
            timestamp: 0,
        }
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> Color) -> Self {
        let mut frame = Self::filled(width, height, Color::BLACK);
        for y in 0..height {
            for x in 0..width {
                frame.set(x, y, f(x, y));
            }
        }
        frame
    }

    pub fn with_timestamp(mut self, timestamp: u64) -> Self {
        self.timestamp = timestamp;
        self
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dimensions(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn bounds(&self) -> BBox {
        BBox::new(0, 0, self.width, self.height)
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    /// Row `y` as interleaved RGB bytes.
    pub fn row(&self, y: u32) -> &[u8] {
        let stride = self.width as usize * 3;
        let start = y as usize * stride;
        &self.pixels[start..start + stride]
    }

    fn offset(&self, x: u32, y: u32) -> usize {
        (y as usize * self.width as usize + x as usize) * 3
    }

    pub fn get(&self, x: u32, y: u32) -> Color {
        let i = self.offset(x, y);
        Color::new(self.pixels[i], self.pixels[i + 1], self.pixels[i + 2])
    }

    pub fn set(&mut self, x: u32, y: u32, c: Color) {
        let i = self.offset(x, y);
        self.pixels[i..i + 3].copy_from_slice(&c.to_array());
    }

    pub fn check_region(&self, region: &BBox) -> Result<()> {
        if region.fits_in(self.width, self.height) {
            Ok(())
        } else {
            Err(Error::Bounds {
                region: region.to_string(),
                width: self.width,
                height: self.height,
            })
        }
    }

    pub fn fill_rect(&mut self, region: &BBox, c: Color) {
        let Some(clip) = region.intersection(&self.bounds()) else {
            return;
        };
        let rgb = c.to_array();
        for y in clip.y..clip.bottom() {
            let start = self.offset(clip.x, y);
            for px in self.pixels[start..start + clip.w as usize * 3].chunks_exact_mut(3) {
                px.copy_from_slice(&rgb);
            }
        }
    }

    pub fn crop(&self, region: &BBox) -> Result<Frame> {
        self.check_region(region)?;
        let mut pixels = Vec::with_capacity(region.area() as usize * 3);
        for y in region.y..region.bottom() {
            let start = self.offset(region.x, y);
            pixels.extend_from_slice(&self.pixels[start..start + region.w as usize * 3]);
        }
        Ok(Frame {
            width: region.w,
            height: region.h,
            pixels,
            timestamp: self.timestamp,
        })
    }

    /// Copies `src` with its top-left corner at `(x, y)`, clipped to this frame.
    pub fn paste(&mut self, src: &Frame, x: i64, y: i64) {
        for sy in 0..src.height {
            let ty = y + sy as i64;
            if ty < 0 || ty >= self.height as i64 {
                continue;
            }
            for sx in 0..src.width {
                let tx = x + sx as i64;
                if tx < 0 || tx >= self.width as i64 {
                    continue;
                }
                self.set(tx as u32, ty as u32, src.get(sx, sy));
            }
        }
    }

    /// Nearest-neighbor resize to exactly `width` x `height`.
    pub fn resize_nearest(&self, width: u32, height: u32) -> Frame {
        let mut out = Frame::filled(width.max(1), height.max(1), Color::BLACK);
        for y in 0..out.height {
            let sy = ((y as u64 * self.height as u64) / out.height as u64) as u32;
            for x in 0..out.width {
                let sx = ((x as u64 * self.width as u64) / out.width as u64) as u32;
                out.set(x, y, self.get(sx, sy));
            }
        }
        out.timestamp = self.timestamp;
        out
    }

    /// Resize by `scale` with `ceil` rounding of the target size.
    pub fn scale_nearest(&self, scale: f64) -> Frame {
        let (w, h) = scaled_size(self.width, self.height, scale);
        self.resize_nearest(w, h)
    }

    pub fn luminance_at(&self, x: u32, y: u32) -> f64 {
        self.get(x, y).luminance()
    }

    pub fn encode_png(&self) -> Result<Vec<u8>> {
        let img = RgbImage::from_raw(self.width, self.height, self.pixels.clone())
            .ok_or_else(|| Error::InvalidFrame("buffer size mismatch".into()))?;
        let mut out = Cursor::new(Vec::new());
        img.write_to(&mut out, ImageFormat::Png)
            .map_err(|e| Error::Png(e.to_string()))?;
        Ok(out.into_inner())
    }

    pub fn decode_png(bytes: &[u8]) -> Result<Frame> {
        let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)
            .map_err(|e| Error::Png(e.to_string()))?
            .into_rgb8();
        let (w, h) = img.dimensions();
        Frame::new(w, h, img.into_raw())
    }

    pub fn load_png(path: impl AsRef<Path>) -> Result<Frame> {
        Frame::decode_png(&std::fs::read(path)?)
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.encode_png()?)?;
        Ok(())
    }
}

/// Target size for a scale ratio, `(ceil(w*s), ceil(h*s))`.
pub fn scaled_size(width: u32, height: u32, scale: f64) -> (u32, u32) {
    // Guard against 1.0000000001-style float noise pushing ceil up a pixel.
    let dim = |d: u32| {
        let v = d as f64 * scale;
        let r = v.round();
        let v = if (v - r).abs() < 1e-9 { r } else { v.ceil() };
        (v as u32).max(1)
    };
    (dim(width), dim(height))
}
