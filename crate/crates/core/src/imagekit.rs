//! Grayscale rasters: loading, resizing, reshaping and synthetic occlusion.
//!
//! Pixels are stored row-major. Flattening into feature vectors is
//! column-major, and [`to_matrix`] is its exact inverse.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A real-valued grayscale raster, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageMatrix {
    height: usize,
    width: usize,
    pixels: Vec<f64>,
}

impl ImageMatrix {
    pub fn new(height: usize, width: usize, pixels: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::arg(format!(
                "image dimensions must be positive, got {height}x{width}"
            )));
        }
        if pixels.len() != height * width {
            return Err(Error::arg(format!(
                "{} pixels do not fill a {height}x{width} raster",
                pixels.len()
            )));
        }
        Ok(Self {
            height,
            width,
            pixels,
        })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Result<Self> {
        Self::new(height, width, vec![value; height * width])
    }

    /// Builds a raster by evaluating `f(row, col)` at every pixel.
    pub fn from_fn(
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        let mut pixels = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                pixels.push(f(r, c));
            }
        }
        Self::new(height, width, pixels)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    /// Row-major pixel buffer.
    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.pixels[row * self.width + col] = value;
    }

    /// Value at (row, col) with coordinates clamped into the raster.
    #[inline]
    pub fn get_clamped(&self, row: isize, col: isize) -> f64 {
        let r = row.clamp(0, self.height as isize - 1) as usize;
        let c = col.clamp(0, self.width as isize - 1) as usize;
        self.get(r, c)
    }

    /// True when every pixel lies in [0, 1].
    pub fn is_normalized(&self) -> bool {
        self.pixels.iter().all(|p| (0.0..=1.0).contains(p))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            height: self.height,
            width: self.width,
            pixels: self.pixels.iter().map(|&p| f(p)).collect(),
        }
    }
}

/// Where an occluder is pasted.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Anchor {
    /// Top-left corner (row, col).
    Fixed(usize, usize),
    /// Uniformly drawn from all positions that keep the occluder inside the face.
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OcclusionSpec {
    pub occluder: ImageMatrix,
    pub occlusion_rate: f64,
    pub anchor: Anchor,
    pub seed: u64,
}

/// Loads a PGM (P5) or PNG file as a grayscale raster in [0, 1], resized
/// bilinearly to `target_height` x `target_width`.
pub fn load_grayscale(
    path: &Path,
    target_height: usize,
    target_width: usize,
) -> Result<ImageMatrix> {
    if target_height == 0 || target_width == 0 {
        return Err(Error::arg(format!(
            "target dimensions must be positive, got {target_height}x{target_width}"
        )));
    }
    resize_bilinear(&load_native(path)?, target_height, target_width)
}

/// Loads a PGM (P5) or PNG file at its stored size.
pub fn load_native(path: &Path) -> Result<ImageMatrix> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let decoded = if bytes.starts_with(b"P5") {
        decode_pgm(&bytes)
    } else {
        decode_png(&bytes)
    };
    decoded.map_err(|message| Error::Decode {
        path: path.to_path_buf(),
        message,
    })
}

fn decode_png(bytes: &[u8]) -> std::result::Result<ImageMatrix, String> {
    let dynimg = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
        .map_err(|e| e.to_string())?;
    let (w, h) = (dynimg.width() as usize, dynimg.height() as usize);
    let pixels: Vec<f64> = match dynimg.color().bytes_per_pixel() / dynimg.color().channel_count() {
        1 => dynimg
            .to_luma8()
            .into_raw()
            .into_iter()
            .map(|p| f64::from(p) / 255.0)
            .collect(),
        _ => dynimg
            .to_luma16()
            .into_raw()
            .into_iter()
            .map(|p| f64::from(p) / 65535.0)
            .collect(),
    };
    ImageMatrix::new(h, w, pixels).map_err(|e| e.to_string())
}

/// Parses a binary PGM (P5), maxval up to 65535.
pub fn decode_pgm(bytes: &[u8]) -> std::result::Result<ImageMatrix, String> {
    let mut pos = 0usize;
    let mut fields = [0usize; 4];
    let magic = next_token(bytes, &mut pos).ok_or("missing magic number")?;
    if magic != b"P5" {
        return Err("not a binary PGM (P5)".into());
    }
    for field in fields.iter_mut().skip(1) {
        let tok = next_token(bytes, &mut pos).ok_or("truncated PGM header")?;
        *field = std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or("malformed PGM header field")?;
    }
    let [_, width, height, maxval] = fields;
    if width == 0 || height == 0 {
        return Err("PGM has zero dimension".into());
    }
    if maxval == 0 || maxval > 65535 {
        return Err(format!("unsupported PGM maxval {maxval}"));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let bpp = if maxval < 256 { 1 } else { 2 };
    let need = width * height * bpp;
    let data = bytes.get(pos..pos + need).ok_or("truncated PGM raster")?;
    let scale = maxval as f64;
    let pixels = if bpp == 1 {
        data.iter()
            .map(|&b| (f64::from(b) / scale).min(1.0))
            .collect()
    } else {
        data.chunks_exact(2)
            .map(|c| (f64::from(u16::from_be_bytes([c[0], c[1]])) / scale).min(1.0))
            .collect()
    };
    ImageMatrix::new(height, width, pixels).map_err(|e| e.to_string())
}

fn next_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Option<&'a [u8]> {
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
    (start < *pos).then(|| &bytes[start..*pos])
}

/// Encodes an 8-bit binary PGM. Values are clamped to [0, 1] and rounded.
pub fn encode_pgm(img: &ImageMatrix) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend(
        img.pixels
            .iter()
            .map(|&p| (p.clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    out
}

pub fn write_pgm(img: &ImageMatrix, path: &Path) -> Result<()> {
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&encode_pgm(img))
        .map_err(|e| Error::io(path, e))
}

/// Bilinear resize with pixel-center alignment; an identity-sized resize
/// returns the input unchanged.
pub fn resize_bilinear(img: &ImageMatrix, height: usize, width: usize) -> Result<ImageMatrix> {
    if height == 0 || width == 0 {
        return Err(Error::arg(format!(
            "target dimensions must be positive, got {height}x{width}"
        )));
    }
    if img.shape() == (height, width) {
        return Ok(img.clone());
    }
    let sy = img.height as f64 / height as f64;
    let sx = img.width as f64 / width as f64;
    let src = |dst: usize, scale: f64, len: usize| -> (usize, usize, f64) {
        let s = ((dst as f64 + 0.5) * scale - 0.5).clamp(0.0, (len - 1) as f64);
        let lo = s.floor() as usize;
        let hi = (lo + 1).min(len - 1);
        (lo, hi, s - lo as f64)
    };
    let cols: Vec<_> = (0..width).map(|c| src(c, sx, img.width)).collect();
    ImageMatrix::from_fn(height, width, |r, c| {
        let (r0, r1, fy) = src(r, sy, img.height);
        let (c0, c1, fx) = cols[c];
        let top = img.get(r0, c0) * (1.0 - fx) + img.get(r0, c1) * fx;
        let bottom = img.get(r1, c0) * (1.0 - fx) + img.get(r1, c1) * fx;
        top * (1.0 - fy) + bottom * fy
    })
}

/// Column-major flattening.
pub fn to_vector(img: &ImageMatrix) -> Vec<f64> {
    let mut v = Vec::with_capacity(img.len());
    for c in 0..img.width {
        for r in 0..img.height {
            v.push(img.get(r, c));
        }
    }
    v
}

/// Inverse of [`to_vector`].
pub fn to_matrix(v: &[f64], height: usize, width: usize) -> Result<ImageMatrix> {
    if v.len() != height * width {
        return Err(Error::arg(format!(
            "vector of length {} cannot be reshaped to {height}x{width}",
            v.len()
        )));
    }
    ImageMatrix::from_fn(height, width, |r, c| v[c * height + r])
}

/// Size of the pasted block for an occluder of shape `occ` covering `rate`
/// of a `face`-shaped raster.
fn occluder_extent(face: (usize, usize), occ: (usize, usize), rate: f64) -> (usize, usize) {
    let (fh, fw) = face;
    let (oh, ow) = (occ.0 as f64, occ.1 as f64);
    let area = rate * (fh * fw) as f64;
    let scale = (area / (oh * ow)).sqrt();
    let tw = ((ow * scale).round() as usize).clamp(1, fw);
    let th = ((area / tw as f64).round() as usize).max(1);
    if th > fh {
        let th = fh;
        let tw = ((area / th as f64).round() as usize).clamp(1, fw);
        (th, tw)
    } else {
        (th, tw)
    }
}

/// Pastes a rescaled occluder onto `face`.
///
/// The occluder is scaled uniformly to cover a block of area
/// `occlusion_rate * face area`, center-cropped to that block, and pasted
/// opaquely. Pixels outside the block are untouched.
pub fn apply_occlusion(face: &ImageMatrix, spec: &OcclusionSpec) -> Result<ImageMatrix> {
    let rate = spec.occlusion_rate;
    if !(rate > 0.0 && rate < 1.0) {
        return Err(Error::arg(format!(
            "occlusion rate must lie in (0, 1), got {rate}"
        )));
    }
    let (th, tw) = occluder_extent(face.shape(), spec.occluder.shape(), rate);
    if th * tw == 0 {
        return Err(Error::arg("occluder rescales to an empty block"));
    }
    let (row0, col0) = match spec.anchor {
        Anchor::Fixed(r, c) => {
            if r + th > face.height || c + tw > face.width {
                return Err(Error::arg(format!(
                    "{th}x{tw} occluder at ({r}, {c}) exceeds the {}x{} face",
                    face.height, face.width
                )));
            }
            (r, c)
        }
        Anchor::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            (
                rng.gen_range(0..=face.height - th),
                rng.gen_range(0..=face.width - tw),
            )
        }
    };

    let patch = cover_and_crop(&spec.occluder, th, tw)?;
    let mut out = face.clone();
    for r in 0..th {
        for c in 0..tw {
            out.set(row0 + r, col0 + c, patch.get(r, c));
        }
    }
    Ok(out)
}

/// Scales `img` uniformly until it covers `height` x `width`, then crops
/// the center.
fn cover_and_crop(img: &ImageMatrix, height: usize, width: usize) -> Result<ImageMatrix> {
    let scale = (height as f64 / img.height as f64).max(width as f64 / img.width as f64);
    let sh = ((img.height as f64 * scale).ceil() as usize).max(height);
    let sw = ((img.width as f64 * scale).ceil() as usize).max(width);
    let scaled = resize_bilinear(img, sh, sw)?;
    let (r0, c0) = ((sh - height) / 2, (sw - width) / 2);
    ImageMatrix::from_fn(height, width, |r, c| scaled.get(r0 + r, c0 + c))
}
