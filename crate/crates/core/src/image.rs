//! 8-bit RGB images and PNG interchange.

use std::io::Cursor;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Row-major 8-bit RGB image.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Image {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl Image {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::BadImage("zero-sized image".into()));
        }
        let expected = width as usize * height as usize * 3;
        if pixels.len() != expected {
            return Err(Error::BadImage(format!(
                "expected {expected} bytes for {width}x{height} RGB, got {}",
                pixels.len()
            )));
        }
        Ok(Self { width, height, pixels })
    }

    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Self {
        let pixels = rgb.iter().copied().cycle().take(width as usize * height as usize * 3).collect();
        Self { width, height, pixels }
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> [u8; 3]) -> Self {
        let mut pixels = Vec::with_capacity(width as usize * height as usize * 3);
        for y in 0..height {
            for x in 0..width {
                pixels.extend_from_slice(&f(x, y));
            }
        }
        Self { width, height, pixels }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    pub fn get(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn set(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }

    /// Bilinear resize; returns a clone when the size already matches.
    pub fn resized(&self, width: u32, height: u32) -> Image {
        if width == self.width && height == self.height {
            return self.clone();
        }
        let buf = image::RgbImage::from_raw(self.width, self.height, self.pixels.clone())
            .expect("pixel buffer size is checked at construction");
        let out = image::imageops::resize(&buf, width, height, image::imageops::FilterType::Triangle);
        Image { width, height, pixels: out.into_raw() }
    }

    /// Hex SHA-256 over the dimensions and pixel bytes.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.width.to_le_bytes());
        h.update(self.height.to_le_bytes());
        h.update(&self.pixels);
        hex::encode(h.finalize())
    }

    pub fn to_png(&self) -> Result<Vec<u8>> {
        let buf = image::RgbImage::from_raw(self.width, self.height, self.pixels.clone())
            .expect("pixel buffer size is checked at construction");
        let mut out = Cursor::new(Vec::new());
        buf.write_to(&mut out, image::ImageFormat::Png).map_err(|e| Error::BadImage(e.to_string()))?;
        Ok(out.into_inner())
    }

    pub fn from_png(bytes: &[u8]) -> Result<Image> {
        let decoded = image::load_from_memory(bytes).map_err(|e| Error::BadImage(e.to_string()))?;
        let rgb = decoded.to_rgb8();
        let (w, h) = rgb.dimensions();
        Image::new(w, h, rgb.into_raw())
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_png()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Image> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::BadImage(format!("{}: {e}", path.display())))?;
        Image::from_png(&bytes).map_err(|e| Error::BadImage(format!("{}: {e}", path.display())))
    }
}
