use base64::Engine;

use crate::color::Rgb;
use crate::error::{Error, Result};

const DATA_URI_PREFIX: &str = "data:image/png;base64,";

/// Decoded raster image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterImage {
    width: u32,
    height: u32,
    pixels: Vec<Rgb>,
    alpha: Option<Vec<u8>>,
}

impl RasterImage {
    pub fn new(width: u32, height: u32, pixels: Vec<Rgb>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Image(format!("invalid size {width}x{height}")));
        }
        if pixels.len() != width as usize * height as usize {
            return Err(Error::Image(format!(
                "{} pixels for a {width}x{height} image",
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
            alpha: None,
        })
    }

    pub fn with_alpha(mut self, alpha: Vec<u8>) -> Result<Self> {
        if alpha.len() != self.pixels.len() {
            return Err(Error::Image("alpha length differs from pixel count".into()));
        }
        self.alpha = if alpha.iter().all(|&a| a == 255) { None } else { Some(alpha) };
        Ok(self)
    }

    pub fn solid(width: u32, height: u32, color: Rgb) -> Result<Self> {
        Self::new(width, height, vec![color; width as usize * height as usize])
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[Rgb] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [Rgb] {
        &mut self.pixels
    }

    pub fn alpha(&self) -> Option<&[u8]> {
        self.alpha.as_deref()
    }

    pub fn get(&self, x: u32, y: u32) -> Rgb {
        self.pixels[y as usize * self.width as usize + x as usize]
    }

    pub fn alpha_at(&self, idx: usize) -> u8 {
        self.alpha.as_ref().map_or(255, |a| a[idx])
    }

    /// Nearest-neighbor source index for pixel `(x, y)` of a `w x h` resampling.
    pub fn sample_index(&self, x: u32, y: u32, w: u32, h: u32) -> usize {
        let sx = ((x as u64 * self.width as u64) / w.max(1) as u64).min(self.width as u64 - 1);
        let sy = ((y as u64 * self.height as u64) / h.max(1) as u64).min(self.height as u64 - 1);
        sy as usize * self.width as usize + sx as usize
    }

    pub fn decode_png(bytes: &[u8]) -> Result<Self> {
        let mut decoder = png::Decoder::new(std::io::Cursor::new(bytes));
        decoder.set_transformations(png::Transformations::normalize_to_color8());
        let mut reader = decoder.read_info().map_err(|e| Error::Image(e.to_string()))?;
        let mut buf = vec![0; reader.output_buffer_size().ok_or_else(|| Error::Image("image too large".into()))?];
        let info = reader.next_frame(&mut buf).map_err(|e| Error::Image(e.to_string()))?;
        let (w, h) = (info.width, info.height);
        let data = &buf[..info.buffer_size()];
        let n = w as usize * h as usize;
        let mut pixels = Vec::with_capacity(n);
        let mut alpha = Vec::with_capacity(n);
        match info.color_type {
            png::ColorType::Rgb => {
                for p in data.chunks_exact(3) {
                    pixels.push(Rgb::new(p[0], p[1], p[2]));
                }
            }
            png::ColorType::Rgba => {
                for p in data.chunks_exact(4) {
                    pixels.push(Rgb::new(p[0], p[1], p[2]));
                    alpha.push(p[3]);
                }
            }
            png::ColorType::Grayscale => {
                for &v in data {
                    pixels.push(Rgb::new(v, v, v));
                }
            }
            png::ColorType::GrayscaleAlpha => {
                for p in data.chunks_exact(2) {
                    pixels.push(Rgb::new(p[0], p[0], p[0]));
                    alpha.push(p[1]);
                }
            }
            png::ColorType::Indexed => return Err(Error::Image("unexpanded palette image".into())),
        }
        let img = Self::new(w, h, pixels)?;
        if alpha.is_empty() {
            Ok(img)
        } else {
            img.with_alpha(alpha)
        }
    }

    pub fn encode_png(&self) -> Vec<u8> {
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, self.width, self.height);
            enc.set_depth(png::BitDepth::Eight);
            let data: Vec<u8> = match &self.alpha {
                None => {
                    enc.set_color(png::ColorType::Rgb);
                    self.pixels.iter().flat_map(|p| [p.r, p.g, p.b]).collect()
                }
                Some(alpha) => {
                    enc.set_color(png::ColorType::Rgba);
                    self.pixels.iter().zip(alpha).flat_map(|(p, a)| [p.r, p.g, p.b, *a]).collect()
                }
            };
            let mut writer = enc.write_header().expect("in-memory PNG header");
            writer.write_image_data(&data).expect("in-memory PNG data");
        }
        out
    }

    pub fn to_data_uri(&self) -> String {
        let mut s = String::from(DATA_URI_PREFIX);
        base64::engine::general_purpose::STANDARD.encode_string(self.encode_png(), &mut s);
        s
    }

    /// Decodes `data:image/png;base64,...`, returning `None` if `s` is not a data URI.
    pub fn from_data_uri(s: &str) -> Option<Result<Self>> {
        let payload = s.strip_prefix(DATA_URI_PREFIX)?;
        Some(
            base64::engine::general_purpose::STANDARD
                .decode(payload.trim())
                .map_err(|e| Error::Image(format!("base64: {e}")))
                .and_then(|bytes| Self::decode_png(&bytes)),
        )
    }
}
