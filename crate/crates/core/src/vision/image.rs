//! Grayscale images and PGM (`P5`/`P2`) input and output.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// A row-major grayscale image with real-valued intensities on the 0–255
/// scale. Intermediate stages (blurred frames, gradients) reuse the type and
/// may leave that range.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if width < 3 || height < 3 {
            return Err(Error::Parameter(format!(
                "image must be at least 3x3, got {width}x{height}"
            )));
        }
        if pixels.len() != width * height {
            return Err(Error::dim("image", &[width, height], &[pixels.len()]));
        }
        Ok(GrayImage { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        GrayImage::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [f64] {
        &mut self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.pixels[y * self.width + x] = v;
    }

    /// Pixel lookup with coordinates clamped into the image.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> f64 {
        let cx = x.clamp(0, self.width as isize - 1) as usize;
        let cy = y.clamp(0, self.height as isize - 1) as usize;
        self.get(cx, cy)
    }

    /// Encodes as binary `P5` with maxval 255; values are rounded and clamped.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.pixels.iter().map(|v| v.round().clamp(0.0, 255.0) as u8));
        out
    }

    /// Decodes binary `P5` or ASCII `P2`; intensities are rescaled to 0–255
    /// when maxval differs.
    pub fn from_pgm(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0;
        let magic = next_token(bytes, &mut pos)?;
        let binary = match magic.as_str() {
            "P5" => true,
            "P2" => false,
            other => return Err(Error::parse(1, format!("unsupported magic {other:?}"))),
        };
        let width = header_number(bytes, &mut pos, "width")?;
        let height = header_number(bytes, &mut pos, "height")?;
        let maxval = header_number(bytes, &mut pos, "maxval")?;
        if maxval == 0 || maxval > 65535 {
            return Err(Error::parse(line_of(bytes, pos), format!("maxval {maxval} out of range")));
        }
        let n = width * height;
        let scale = 255.0 / maxval as f64;
        let mut pixels = Vec::with_capacity(n);
        if binary {
            // exactly one whitespace byte separates the header from the raster
            pos += 1;
            let wide = maxval > 255;
            let need = if wide { 2 * n } else { n };
            let raster = bytes.get(pos..pos + need).ok_or_else(|| {
                Error::parse(line_of(bytes, bytes.len()), format!("raster truncated: need {need} bytes"))
            })?;
            if wide {
                for c in raster.chunks_exact(2) {
                    pixels.push(u16::from_be_bytes([c[0], c[1]]) as f64 * scale);
                }
            } else {
                pixels.extend(raster.iter().map(|&b| b as f64 * scale));
            }
        } else {
            for _ in 0..n {
                let v = header_number(bytes, &mut pos, "pixel")?;
                if v > maxval {
                    return Err(Error::parse(line_of(bytes, pos), format!("pixel {v} exceeds maxval")));
                }
                pixels.push(v as f64 * scale);
            }
        }
        GrayImage::new(width, height, pixels)
    }

    pub fn write_pgm(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_pgm())?;
        Ok(())
    }

    pub fn read_pgm(path: impl AsRef<Path>) -> Result<Self> {
        GrayImage::from_pgm(&std::fs::read(path)?)
    }
}

fn line_of(bytes: &[u8], pos: usize) -> usize {
    1 + bytes[..pos.min(bytes.len())].iter().filter(|&&b| b == b'\n').count()
}

fn next_token(bytes: &[u8], pos: &mut usize) -> Result<String> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::parse(line_of(bytes, start), "unexpected end of file"));
    }
    Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
}

fn header_number(bytes: &[u8], pos: &mut usize, what: &str) -> Result<usize> {
    let tok = next_token(bytes, pos)?;
    tok.parse()
        .map_err(|_| Error::parse(line_of(bytes, *pos), format!("bad {what} {tok:?}")))
}
