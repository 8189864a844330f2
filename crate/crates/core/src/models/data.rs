//! Built-in datasets and MNIST IDX ingestion.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::rng::{self, Rng};

/// Flattened grayscale images with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageSet {
    pub width: usize,
    pub height: usize,
    pub images: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
}

impl ImageSet {
    pub fn dim(&self) -> usize {
        self.width * self.height
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// First `n` images as one set, the rest as another.
    pub fn split_at(&self, n: usize) -> (ImageSet, ImageSet) {
        let n = n.min(self.len());
        let part = |r: std::ops::Range<usize>| ImageSet {
            width: self.width,
            height: self.height,
            images: self.images[r.clone()].to_vec(),
            labels: if self.labels.is_empty() { Vec::new() } else { self.labels[r].to_vec() },
        };
        (part(0..n), part(n..self.len()))
    }
}

// Seven-segment strokes on an 8×8 canvas, (x0, y0, x1, y1) with y pointing down.
const SEGMENTS: [(f64, f64, f64, f64); 7] = [
    (2.0, 1.0, 5.5, 1.0),   // a: top
    (5.5, 1.0, 5.5, 3.75),  // b: upper right
    (5.5, 3.75, 5.5, 6.5),  // c: lower right
    (2.0, 6.5, 5.5, 6.5),   // d: bottom
    (2.0, 3.75, 2.0, 6.5),  // e: lower left
    (2.0, 1.0, 2.0, 3.75),  // f: upper left
    (2.0, 3.75, 5.5, 3.75), // g: middle
];

const DIGIT_SEGMENTS: [&[usize]; 10] = [
    &[0, 1, 2, 3, 4, 5],
    &[1, 2],
    &[0, 1, 6, 4, 3],
    &[0, 1, 6, 2, 3],
    &[5, 6, 1, 2],
    &[0, 5, 6, 2, 3],
    &[0, 5, 6, 4, 2, 3],
    &[0, 1, 2],
    &[0, 1, 2, 3, 4, 5, 6],
    &[0, 1, 2, 3, 5, 6],
];

fn segment_distance(px: f64, py: f64, (x0, y0, x1, y1): (f64, f64, f64, f64)) -> f64 {
    let (dx, dy) = (x1 - x0, y1 - y0);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 { 0.0 } else { (((px - x0) * dx + (py - y0) * dy) / len2).clamp(0.0, 1.0) };
    let (cx, cy) = (x0 + t * dx, y0 + t * dy);
    ((px - cx).powi(2) + (py - cy).powi(2)).sqrt()
}

/// Renders one 8×8 seven-segment digit with random shift, scale, slant and stroke width.
pub fn render_digit(digit: u8, r: &mut Rng) -> Vec<f64> {
    let shift_x: f64 = rng::uniform(r, -0.6, 0.6);
    let shift_y: f64 = rng::uniform(r, -0.5, 0.5);
    let scale: f64 = rng::uniform(r, 0.85, 1.1);
    let slant: f64 = rng::uniform(r, -0.25, 0.25);
    let width: f64 = rng::uniform(r, 0.55, 0.95);
    let ink: f64 = rng::uniform(r, 0.8, 1.0);
    let (cx, cy) = (3.75, 3.75);
    let tf = |x: f64, y: f64| {
        let (x, y) = (cx + (x - cx) * scale, cy + (y - cy) * scale);
        (x + slant * (cy - y) + shift_x, y + shift_y)
    };
    let segs: Vec<_> = DIGIT_SEGMENTS[digit as usize % 10]
        .iter()
        .map(|&s| {
            let (x0, y0, x1, y1) = SEGMENTS[s];
            let (a, b) = tf(x0, y0);
            let (c, d) = tf(x1, y1);
            (a, b, c, d)
        })
        .collect();
    let mut img = vec![0.0; 64];
    for i in 0..8 {
        for j in 0..8 {
            let (px, py) = (j as f64 + 0.5, i as f64 + 0.5);
            let d = segs.iter().map(|&s| segment_distance(px, py, s)).fold(f64::INFINITY, f64::min);
            img[i * 8 + j] = (ink * (1.0 - (d - width) / 0.5).clamp(0.0, 1.0)).min(ink);
        }
    }
    img
}

/// `n` digit-like 8×8 images, labels cycling through 0–9.
pub fn synthetic_digits(n: usize, seed: u64) -> ImageSet {
    let mut r = rng::seeded(seed);
    let labels: Vec<u8> = (0..n).map(|i| (i % 10) as u8).collect();
    let images = labels.iter().map(|&d| render_digit(d, &mut r)).collect();
    ImageSet {
        width: 8,
        height: 8,
        images,
        labels,
    }
}

/// Images with i.i.d. `U[0, 1]` pixels.
pub fn uniform_noise_images(n: usize, width: usize, height: usize, seed: u64) -> ImageSet {
    let mut r = rng::seeded(seed);
    ImageSet {
        width,
        height,
        images: (0..n).map(|_| (0..width * height).map(|_| rng::uniform(&mut r, 0.0, 1.0)).collect()).collect(),
        labels: Vec::new(),
    }
}

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    gunzip_if_compressed(std::fs::read(path)?)
}

/// Decompresses `raw` if it starts with the gzip magic, else returns it unchanged.
pub fn gunzip_if_compressed(raw: Vec<u8>) -> Result<Vec<u8>> {
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        flate2::read::GzDecoder::new(&raw[..]).read_to_end(&mut out)?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(b: &[u8], at: usize) -> Result<u32> {
    b.get(at..at + 4)
        .map(|s| u32::from_be_bytes(s.try_into().expect("4 bytes")))
        .ok_or_else(|| Error::Format("truncated IDX header".into()))
}

/// Parses an IDX image file (optionally gzip-compressed); pixels scaled to `[0, 1]`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<ImageSet> {
    let magic = be_u32(bytes, 0)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::Format(format!("IDX image magic {magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x}")));
    }
    let n = be_u32(bytes, 4)? as usize;
    let h = be_u32(bytes, 8)? as usize;
    let w = be_u32(bytes, 12)? as usize;
    let body = &bytes[16..];
    if body.len() != n * h * w {
        return Err(Error::Format(format!("IDX body has {} bytes, expected {}", body.len(), n * h * w)));
    }
    Ok(ImageSet {
        width: w,
        height: h,
        images: body.chunks_exact(h * w).map(|c| c.iter().map(|&p| p as f64 / 255.0).collect()).collect(),
        labels: Vec::new(),
    })
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let magic = be_u32(bytes, 0)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::Format(format!("IDX label magic {magic:#010x}, expected {IDX_LABELS_MAGIC:#010x}")));
    }
    let n = be_u32(bytes, 4)? as usize;
    let body = &bytes[8..];
    if body.len() != n {
        return Err(Error::Format("IDX label count mismatch".into()));
    }
    Ok(body.to_vec())
}

/// Loads an IDX image file and, if given, its label file.
pub fn load_idx(images: &Path, labels: Option<&Path>) -> Result<ImageSet> {
    let mut set = parse_idx_images(&read_maybe_gz(images)?)?;
    if let Some(l) = labels {
        set.labels = parse_idx_labels(&read_maybe_gz(l)?)?;
        if set.labels.len() != set.images.len() {
            return Err(Error::Format("image and label counts differ".into()));
        }
    }
    Ok(set)
}

/// Two-dimensional toy distributions for the diffusion experiments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Toy2d {
    /// Two isotropic Gaussian blobs at `(±separation/2, 0)`.
    TwoClusters { separation: f64, std: f64 },
    /// Two interleaved half circles with radial jitter.
    TwoMoons { noise: f64 },
    /// Circle of the given radius with radial jitter.
    Ring { radius: f64, noise: f64 },
}

impl Toy2d {
    pub fn sample(&self, n: usize, seed: u64) -> Vec<[f64; 2]> {
        let mut r = rng::seeded(seed);
        (0..n)
            .map(|i| match *self {
                Toy2d::TwoClusters { separation, std } => {
                    let cx = if i % 2 == 0 { -separation / 2.0 } else { separation / 2.0 };
                    [cx + std * rng::normal::<f64>(&mut r), std * rng::normal::<f64>(&mut r)]
                }
                Toy2d::TwoMoons { noise } => {
                    let a: f64 = rng::uniform(&mut r, 0.0, std::f64::consts::PI);
                    let (x, y) = if i % 2 == 0 {
                        (a.cos() - 0.5, a.sin() - 0.25)
                    } else {
                        (0.5 - a.cos(), 0.25 - a.sin())
                    };
                    [x + noise * rng::normal::<f64>(&mut r), y + noise * rng::normal::<f64>(&mut r)]
                }
                Toy2d::Ring { radius, noise } => {
                    let a: f64 = rng::uniform(&mut r, 0.0, 2.0 * std::f64::consts::PI);
                    let rr = radius + noise * rng::normal::<f64>(&mut r);
                    [rr * a.cos(), rr * a.sin()]
                }
            })
            .collect()
    }

    /// Centers of the mixture components, where the distribution has them.
    pub fn centers(&self) -> Vec<[f64; 2]> {
        match *self {
            Toy2d::TwoClusters { separation, .. } => vec![[-separation / 2.0, 0.0], [separation / 2.0, 0.0]],
            _ => Vec::new(),
        }
    }
}

/// Appends `multiplicity` copies of `point`, emulating a memorized sample.
pub fn with_duplicate(mut data: Vec<[f64; 2]>, point: [f64; 2], multiplicity: usize) -> Vec<[f64; 2]> {
    data.extend(std::iter::repeat_n(point, multiplicity));
    data
}

/// Distance from `p` to the nearest point of `data`.
pub fn distance_to_set(p: [f64; 2], data: &[[f64; 2]]) -> f64 {
    data.iter()
        .map(|q| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt())
        .fold(f64::INFINITY, f64::min)
}
