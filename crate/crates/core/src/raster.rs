//! 8-bit raster images and the resampling primitives shared by tile
//! construction, query rendering and the baseline extractors.

use std::path::Path;

use crate::error::{Error, Result};

/// Width and height of an image in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ImageSize {
    pub width: u32,
    pub height: u32,
}

impl ImageSize {
    pub fn new(width: u32, height: u32) -> Self {
        Self { width, height }
    }

    pub fn square(side: u32) -> Self {
        Self::new(side, side)
    }
}

/// Row-major 8-bit image with one (gray) or three (RGB) interleaved channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    width: u32,
    height: u32,
    channels: u8,
    data: Vec<u8>,
}

impl Image {
    pub fn from_raw(width: u32, height: u32, channels: u8, data: Vec<u8>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidImage(format!(
                "unsupported channel count {channels}"
            )));
        }
        let expected = width as usize * height as usize * channels as usize;
        if data.len() != expected {
            return Err(Error::InvalidImage(format!(
                "data length {} does not match {}x{}x{}",
                data.len(),
                width,
                height,
                channels
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn gray(width: u32, height: u32, data: Vec<u8>) -> Result<Self> {
        Self::from_raw(width, height, 1, data)
    }

    pub fn filled(width: u32, height: u32, value: u8) -> Self {
        Self {
            width,
            height,
            channels: 1,
            data: vec![value; width as usize * height as usize],
        }
    }

    /// Builds a grayscale image by evaluating `f(x, y)` at every pixel.
    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> u8) -> Self {
        let mut data = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            channels: 1,
            data,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn size(&self) -> ImageSize {
        ImageSize::new(self.width, self.height)
    }

    pub fn channels(&self) -> u8 {
        self.channels
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn is_empty(&self) -> bool {
        self.width == 0 || self.height == 0
    }

    #[inline]
    pub fn pixel(&self, x: u32, y: u32, channel: u8) -> u8 {
        let c = self.channels as usize;
        self.data[(y as usize * self.width as usize + x as usize) * c + channel as usize]
    }

    /// Luma in `[0, 255]` using the 0.299/0.587/0.114 weights; gray images
    /// pass through unchanged.
    #[inline]
    pub fn luma(&self, x: u32, y: u32) -> f64 {
        if self.channels == 1 {
            self.pixel(x, y, 0) as f64
        } else {
            self.luma_milli(x, y) as f64 / 1000.0
        }
    }

    /// Luma scaled by 1000 in exact integer arithmetic.
    #[inline]
    pub fn luma_milli(&self, x: u32, y: u32) -> i64 {
        if self.channels == 1 {
            self.pixel(x, y, 0) as i64 * 1000
        } else {
            299 * self.pixel(x, y, 0) as i64
                + 587 * self.pixel(x, y, 1) as i64
                + 114 * self.pixel(x, y, 2) as i64
        }
    }

    /// Row-major luma plane as `f64`.
    pub fn luma_plane(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.width as usize * self.height as usize);
        for y in 0..self.height {
            for x in 0..self.width {
                out.push(self.luma(x, y));
            }
        }
        out
    }

    /// Bilinear sample at continuous coordinates where pixel `(i, j)` covers
    /// `[i, i+1) x [j, j+1)`. Coordinates outside the image clamp to the edge.
    pub fn sample_bilinear(&self, x: f64, y: f64, channel: u8) -> f64 {
        let fx = (x - 0.5).clamp(0.0, (self.width - 1) as f64);
        let fy = (y - 0.5).clamp(0.0, (self.height - 1) as f64);
        let x0 = fx.floor() as u32;
        let y0 = fy.floor() as u32;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let tx = fx - x0 as f64;
        let ty = fy - y0 as f64;
        let p00 = self.pixel(x0, y0, channel) as f64;
        let p10 = self.pixel(x1, y0, channel) as f64;
        let p01 = self.pixel(x0, y1, channel) as f64;
        let p11 = self.pixel(x1, y1, channel) as f64;
        let top = p00 + (p10 - p00) * tx;
        let bottom = p01 + (p11 - p01) * tx;
        top + (bottom - top) * ty
    }

    /// Copies a pixel-aligned sub-rectangle.
    pub fn crop(&self, x: u32, y: u32, width: u32, height: u32) -> Result<Image> {
        if x + width > self.width || y + height > self.height {
            return Err(Error::InvalidImage(format!(
                "crop {width}x{height}+{x}+{y} exceeds {}x{}",
                self.width, self.height
            )));
        }
        let c = self.channels as usize;
        let mut data = Vec::with_capacity(width as usize * height as usize * c);
        for row in y..y + height {
            let start = (row as usize * self.width as usize + x as usize) * c;
            data.extend_from_slice(&self.data[start..start + width as usize * c]);
        }
        Image::from_raw(width, height, self.channels, data)
    }

    /// Copies `src` into this image with its top-left corner at `(x, y)`.
    pub fn paste(&mut self, src: &Image, x: u32, y: u32) -> Result<()> {
        if src.channels != self.channels
            || x + src.width > self.width
            || y + src.height > self.height
        {
            return Err(Error::InvalidImage(format!(
                "cannot paste {}x{}x{} at ({x}, {y}) into {}x{}x{}",
                src.width, src.height, src.channels, self.width, self.height, self.channels
            )));
        }
        let c = self.channels as usize;
        let row_len = src.width as usize * c;
        for row in 0..src.height {
            let dst = ((y + row) as usize * self.width as usize + x as usize) * c;
            let s = row as usize * row_len;
            self.data[dst..dst + row_len].copy_from_slice(&src.data[s..s + row_len]);
        }
        Ok(())
    }

    pub fn blank(width: u32, height: u32, channels: u8) -> Result<Image> {
        Image::from_raw(
            width,
            height,
            channels,
            vec![0; width as usize * height as usize * channels as usize],
        )
    }

    pub fn load(path: &Path) -> Result<Image> {
        let dynamic = image::open(path).map_err(|e| Error::io_image(path, e))?;
        let img = match dynamic {
            image::DynamicImage::ImageLuma8(buf) => {
                let (w, h) = buf.dimensions();
                Image::from_raw(w, h, 1, buf.into_raw())?
            }
            image::DynamicImage::ImageLumaA8(_) | image::DynamicImage::ImageLuma16(_) => {
                let buf = dynamic.to_luma8();
                let (w, h) = buf.dimensions();
                Image::from_raw(w, h, 1, buf.into_raw())?
            }
            other => {
                let buf = other.to_rgb8();
                let (w, h) = buf.dimensions();
                Image::from_raw(w, h, 3, buf.into_raw())?
            }
        };
        Ok(img)
    }

    /// Writes a PNG (lossless).
    pub fn save(&self, path: &Path) -> Result<()> {
        let color = if self.channels == 1 {
            image::ExtendedColorType::L8
        } else {
            image::ExtendedColorType::Rgb8
        };
        image::save_buffer_with_format(
            path,
            &self.data,
            self.width,
            self.height,
            color,
            image::ImageFormat::Png,
        )
        .map_err(|e| Error::io_image(path, e))
    }
}

/// Reads only the header of an image file.
pub fn image_dimensions(path: &Path) -> Result<ImageSize> {
    let (w, h) = image::image_dimensions(path).map_err(|e| Error::io_image(path, e))?;
    Ok(ImageSize::new(w, h))
}

#[inline]
pub(crate) fn to_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}
