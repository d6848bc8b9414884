//! Binary PGM (P5, 8-bit) reading and writing; grayscale PNG on load.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::Image;

const PNG_SIGNATURE: &[u8] = b"\x89PNG\r\n\x1a\n";

/// Encodes as P5 with maxval 255; samples map to `clamp(v) * 255` rounded
/// half to even.
pub fn encode_pgm(image: &Image) -> Vec<u8> {
    let header = format!("P5\n{} {}\n255\n", image.width(), image.height());
    let mut out = Vec::with_capacity(header.len() + image.len());
    out.extend_from_slice(header.as_bytes());
    out.extend(
        image
            .data()
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round_ties_even() as u8),
    );
    out
}

struct HeaderReader<'a> {
    bytes: &'a [u8],
    pos: usize,
    line: usize,
}

impl HeaderReader<'_> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                b'\n' => {
                    self.line += 1;
                    self.pos += 1;
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn token(&mut self, what: &str) -> Result<&str> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::parse(self.line, format!("missing {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .map_err(|_| Error::parse(self.line, format!("invalid {what}")))
    }

    fn number(&mut self, what: &str) -> Result<u32> {
        let line = self.line;
        let tok = self.token(what)?;
        tok.parse()
            .map_err(|_| Error::parse(line, format!("invalid {what} `{tok}`")))
    }
}

/// Decodes a P5 file with maxval 255 into `[0, 1]` samples (`v / 255`).
pub fn decode_pgm(bytes: &[u8]) -> Result<Image> {
    let mut r = HeaderReader {
        bytes,
        pos: 0,
        line: 1,
    };
    let magic = r.token("magic number")?;
    if magic != "P5" {
        return Err(Error::parse(
            1,
            format!("expected P5 magic, found `{magic}`"),
        ));
    }
    let width = r.number("width")? as usize;
    let height = r.number("height")? as usize;
    let maxval = r.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::parse(r.line, "dimensions must be positive"));
    }
    if maxval != 255 {
        return Err(Error::UnsupportedDepth(maxval));
    }
    // exactly one whitespace byte separates the header from the raster
    if r.pos >= bytes.len() || !bytes[r.pos].is_ascii_whitespace() {
        return Err(Error::parse(r.line, "missing raster"));
    }
    let raster = &bytes[r.pos + 1..];
    let n = width * height;
    if raster.len() < n {
        return Err(Error::parse(
            r.line,
            format!("raster holds {} of {n} bytes", raster.len()),
        ));
    }
    let data = raster[..n].iter().map(|&b| b as f64 / 255.0).collect();
    Image::new(width, height, data)
}

fn decode_png(bytes: &[u8]) -> Result<Image> {
    let decoded = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
        .map_err(|e| Error::Decode(e.to_string()))?;
    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    let data: Vec<f64> = match decoded {
        image::DynamicImage::ImageLuma8(buf) => buf
            .into_raw()
            .into_iter()
            .map(|v| v as f64 / 255.0)
            .collect(),
        image::DynamicImage::ImageLuma16(buf) => buf
            .into_raw()
            .into_iter()
            .map(|v| v as f64 / 65535.0)
            .collect(),
        other => {
            return Err(Error::Decode(format!(
                "only grayscale PNG is supported, found {:?}",
                other.color()
            )))
        }
    };
    Image::new(w, h, data)
}

/// Loads a P5 PGM (or a grayscale PNG, detected by signature).
pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    let bytes = fs::read(path)?;
    if bytes.starts_with(PNG_SIGNATURE) {
        decode_png(&bytes)
    } else {
        decode_pgm(&bytes)
    }
}

/// Always writes P5 PGM.
pub fn save_image(image: &Image, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_pgm(image))?;
    Ok(())
}
