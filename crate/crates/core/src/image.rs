//! RGB float images and their PFM / PPM encodings.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::math::Spectrum;

/// Row-major RGB image, row 0 at the top.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    pixels: Vec<Spectrum>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ImageFormat {
    Pfm,
    Ppm,
}

impl ImageFormat {
    /// Guesses from the file extension; anything but `.ppm` is PFM.
    pub fn from_path(path: &Path) -> ImageFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("ppm") => ImageFormat::Ppm,
            _ => ImageFormat::Pfm,
        }
    }
}

impl Image {
    pub fn new(width: usize, height: usize) -> Image {
        Image { width, height, pixels: vec![Spectrum::BLACK; width * height] }
    }

    pub fn from_pixels(width: usize, height: usize, pixels: Vec<Spectrum>) -> Result<Image> {
        if pixels.len() != width * height {
            return Err(Error::InvalidConfig(format!("{} pixels for a {width}x{height} image", pixels.len())));
        }
        Ok(Image { width, height, pixels })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[Spectrum] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> Spectrum {
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: Spectrum) {
        self.pixels[y * self.width + x] = value;
    }

    pub fn mean(&self) -> Spectrum {
        if self.pixels.is_empty() {
            return Spectrum::BLACK;
        }
        let sum = self.pixels.iter().fold(Spectrum::BLACK, |a, &p| a + p);
        sum / self.pixels.len() as f64
    }

    pub fn encode_pfm(&self) -> Vec<u8> {
        let mut out = format!("PF\n{} {}\n-1.0\n", self.width, self.height).into_bytes();
        out.reserve(self.pixels.len() * 12);
        for y in (0..self.height).rev() {
            for p in &self.pixels[y * self.width..(y + 1) * self.width] {
                for c in p.channels() {
                    out.extend_from_slice(&(c as f32).to_le_bytes());
                }
            }
        }
        out
    }

    pub fn decode_pfm(bytes: &[u8]) -> Result<Image> {
        let bad = |m: &str| Error::MalformedImage(m.to_string());
        let mut fields = Vec::with_capacity(4);
        let mut pos = 0;
        while fields.len() < 4 {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(bad("truncated header"));
            }
            fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("header is not text"))?);
        }
        // exactly one whitespace byte separates the header from the data
        pos += 1;
        if fields[0] != "PF" {
            return Err(bad("only colour PFM (`PF`) is supported"));
        }
        let width: usize = fields[1].parse().map_err(|_| bad("bad width"))?;
        let height: usize = fields[2].parse().map_err(|_| bad("bad height"))?;
        let scale: f64 = fields[3].parse().map_err(|_| bad("bad scale"))?;
        let little = scale < 0.0;
        let data = bytes.get(pos..).ok_or_else(|| bad("missing data"))?;
        if data.len() != width * height * 12 {
            return Err(bad("data size does not match dimensions"));
        }
        let mut img = Image::new(width, height);
        for (i, chunk) in data.chunks_exact(12).enumerate() {
            let f = |j: usize| {
                let b = [chunk[j], chunk[j + 1], chunk[j + 2], chunk[j + 3]];
                (if little { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) }) as f64
            };
            let row_from_bottom = i / width;
            img.set(i % width, height - 1 - row_from_bottom, Spectrum::new(f(0), f(4), f(8)));
        }
        Ok(img)
    }

    /// 8-bit binary PPM: clamp to [0,1], gamma 1/2.2.
    pub fn encode_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        for p in &self.pixels {
            for c in p.channels() {
                let v = if c.is_nan() { 0.0 } else { c.clamp(0.0, 1.0) };
                out.push((v.powf(1.0 / 2.2) * 255.0).round() as u8);
            }
        }
        out
    }

    pub fn write(&self, path: &Path, format: ImageFormat) -> Result<()> {
        let bytes = match format {
            ImageFormat::Pfm => self.encode_pfm(),
            ImageFormat::Ppm => self.encode_ppm(),
        };
        fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn read_pfm(path: &Path) -> Result<Image> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Image::decode_pfm(&bytes)
    }
}
