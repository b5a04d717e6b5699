//! Linear RGB float images and the PFM (portable float map) codec.
//!
//! PFM layout: `PF\n<w> <h>\n<scale>\n` followed by `w*h*3` 32-bit floats,
//! bottom scanline first. A negative scale means little-endian. Images in
//! memory keep row 0 at the top.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    /// Row-major, top row first, 3 interleaved channels.
    pub data: Vec<f32>,
}

impl Image {
    pub fn new(width: usize, height: usize) -> Self {
        Image {
            width,
            height,
            data: vec![0.0; width * height * 3],
        }
    }

    pub fn from_data(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height * 3 {
            return Err(Error::input(format!(
                "image data length {} does not match {width}x{height}x3",
                data.len()
            )));
        }
        Ok(Image {
            width,
            height,
            data,
        })
    }

    pub fn get(&self, x: usize, y: usize) -> [f32; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set(&mut self, x: usize, y: usize, rgb: [f32; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn get_f64(&self, x: usize, y: usize) -> [f64; 3] {
        let p = self.get(x, y);
        [p[0] as f64, p[1] as f64, p[2] as f64]
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Image {
        Image {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Area-weighted box downsampling to `new_w x new_h`.
    pub fn box_resize(&self, new_w: usize, new_h: usize) -> Image {
        if new_w == self.width && new_h == self.height {
            return self.clone();
        }
        let sx = self.width as f64 / new_w as f64;
        let sy = self.height as f64 / new_h as f64;
        let mut out = Image::new(new_w, new_h);
        for oy in 0..new_h {
            let y0 = oy as f64 * sy;
            let y1 = y0 + sy;
            for ox in 0..new_w {
                let x0 = ox as f64 * sx;
                let x1 = x0 + sx;
                let mut acc = [0.0f64; 3];
                let mut wsum = 0.0;
                let mut iy = y0.floor() as usize;
                while (iy as f64) < y1 && iy < self.height {
                    let wy = (y1.min(iy as f64 + 1.0) - y0.max(iy as f64)).max(0.0);
                    let mut ix = x0.floor() as usize;
                    while (ix as f64) < x1 && ix < self.width {
                        let wx = (x1.min(ix as f64 + 1.0) - x0.max(ix as f64)).max(0.0);
                        let w = wx * wy;
                        if w > 0.0 {
                            let p = self.get_f64(ix, iy);
                            for c in 0..3 {
                                acc[c] += w * p[c];
                            }
                            wsum += w;
                        }
                        ix += 1;
                    }
                    iy += 1;
                }
                let inv = if wsum > 0.0 { 1.0 / wsum } else { 0.0 };
                out.set(
                    ox,
                    oy,
                    [
                        (acc[0] * inv) as f32,
                        (acc[1] * inv) as f32,
                        (acc[2] * inv) as f32,
                    ],
                );
            }
        }
        out
    }

    pub fn write_pfm(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut buf = Vec::with_capacity(32 + self.data.len() * 4);
        write!(buf, "PF\n{} {}\n-1.0\n", self.width, self.height)?;
        for y in (0..self.height).rev() {
            let row = &self.data[y * self.width * 3..(y + 1) * self.width * 3];
            for v in row {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        write_atomic(path.as_ref(), &buf)
    }

    pub fn read_pfm(path: impl AsRef<Path>) -> Result<Image> {
        let bytes = fs::read(path.as_ref())?;
        Image::decode_pfm(&bytes)
    }

    pub fn decode_pfm(bytes: &[u8]) -> Result<Image> {
        let mut pos = 0usize;
        let mut tokens = Vec::with_capacity(4);
        while tokens.len() < 4 {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(Error::format("truncated PFM header"));
            }
            tokens.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
        }
        // exactly one whitespace byte separates the header from the raster
        pos += 1;
        match tokens[0].as_str() {
            "PF" => {}
            "Pf" => return Err(Error::format("single-channel PFM, expected 3 channels")),
            other => return Err(Error::format(format!("bad PFM magic `{other}`"))),
        }
        let parse_dim = |s: &str| -> Result<usize> {
            s.parse::<usize>()
                .map_err(|_| Error::format(format!("bad PFM dimension `{s}`")))
        };
        let width = parse_dim(&tokens[1])?;
        let height = parse_dim(&tokens[2])?;
        let scale: f64 = tokens[3]
            .parse()
            .map_err(|_| Error::format(format!("bad PFM scale `{}`", tokens[3])))?;
        let little = scale < 0.0;
        let n = width * height * 3;
        if bytes.len() < pos + n * 4 {
            return Err(Error::format(format!(
                "PFM raster truncated: need {} bytes, have {}",
                n * 4,
                bytes.len().saturating_sub(pos)
            )));
        }
        let mut data = vec![0.0f32; n];
        for (k, chunk) in bytes[pos..pos + n * 4].chunks_exact(4).enumerate() {
            let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
            let v = if little {
                f32::from_le_bytes(raw)
            } else {
                f32::from_be_bytes(raw)
            };
            // file stores bottom row first
            let file_row = k / (width * 3);
            let rest = k % (width * 3);
            let y = height - 1 - file_row;
            data[y * width * 3 + rest] = v;
        }
        Ok(Image {
            width,
            height,
            data,
        })
    }

    /// 8-bit gamma-2.2 preview in binary PPM.
    pub fn write_ppm_preview(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut buf = Vec::with_capacity(32 + self.data.len());
        write!(buf, "P6\n{} {}\n255\n", self.width, self.height)?;
        for &v in &self.data {
            let g = (v.max(0.0).min(1.0) as f64).powf(1.0 / 2.2);
            buf.push((g * 255.0 + 0.5) as u8);
        }
        write_atomic(path.as_ref(), &buf)
    }
}

/// Write to a temporary sibling and rename over the destination.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = match path.file_name() {
        Some(name) => path.with_file_name(format!(".{}.tmp", name.to_string_lossy())),
        None => return Err(Error::input(format!("not a file path: {}", path.display()))),
    };
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}
