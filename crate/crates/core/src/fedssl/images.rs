//! Image pools, the two augmentation pipelines, the procedural toy dataset
//! and the CIFAR-10 binary reader.

use std::f64::consts::PI;
use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayViewMut1};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ImageFormat {
    pub side: usize,
    pub channels: usize,
}

impl ImageFormat {
    pub const TOY: ImageFormat = ImageFormat { side: 16, channels: 1 };
    pub const CIFAR: ImageFormat = ImageFormat { side: 32, channels: 3 };

    pub fn pixels(&self) -> usize {
        self.side * self.side * self.channels
    }

    fn plane(&self) -> usize {
        self.side * self.side
    }
}

/// Images stored one per row, channel planes in order, each plane row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBatch {
    pub format: ImageFormat,
    pub images: Array2<f64>,
    pub labels: Vec<usize>,
}

impl ImageBatch {
    pub fn empty(format: ImageFormat) -> Self {
        ImageBatch {
            format,
            images: Array2::zeros((0, format.pixels())),
            labels: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn select(&self, idx: &[usize]) -> ImageBatch {
        ImageBatch {
            format: self.format,
            images: self.images.select(ndarray::Axis(0), idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Draws `n` distinct images (all of them when the pool is smaller).
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> ImageBatch {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        let (chosen, _) = idx.partial_shuffle(rng, n.min(self.len()));
        let chosen = chosen.to_vec();
        self.select(&chosen)
    }

    /// Splits into a prefix of `n_first` images and the rest.
    pub fn split(&self, n_first: usize) -> (ImageBatch, ImageBatch) {
        let n_first = n_first.min(self.len());
        let a: Vec<usize> = (0..n_first).collect();
        let b: Vec<usize> = (n_first..self.len()).collect();
        (self.select(&a), self.select(&b))
    }
}

pub fn flip_horizontal(format: ImageFormat, mut img: ArrayViewMut1<'_, f64>) {
    let s = format.side;
    for row in 0..format.channels * s {
        for x in 0..s / 2 {
            img.swap(row * s + x, row * s + s - 1 - x);
        }
    }
}

/// Replaces every channel by the luma of the pixel. A no-op on one channel.
pub fn grayscale(format: ImageFormat, mut img: ArrayViewMut1<'_, f64>) {
    if format.channels != 3 {
        return;
    }
    let p = format.plane();
    for i in 0..p {
        let y = 0.299 * img[i] + 0.587 * img[p + i] + 0.114 * img[2 * p + i];
        img[i] = y;
        img[p + i] = y;
        img[2 * p + i] = y;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jitter {
    pub brightness: f64,
    pub contrast: f64,
    pub saturation: f64,
    /// Hue rotation in radians.
    pub hue: f64,
}

impl Jitter {
    pub fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Jitter {
            brightness: rng.random_range(-0.2..=0.2),
            contrast: rng.random_range(0.8..=1.2),
            saturation: rng.random_range(0.8..=1.2),
            hue: rng.random_range(-0.1 * PI..=0.1 * PI),
        }
    }
}

/// Brightness shift and contrast scaling about the image mean; on colour
/// images also saturation scaling and a hue rotation in YIQ space.
pub fn color_jitter(format: ImageFormat, mut img: ArrayViewMut1<'_, f64>, j: Jitter) {
    img.mapv_inplace(|v| v + j.brightness);
    let mean = img.mean().unwrap_or(0.0);
    img.mapv_inplace(|v| (v - mean) * j.contrast + mean);
    if format.channels != 3 {
        return;
    }
    let p = format.plane();
    let (c, s) = (j.hue.cos(), j.hue.sin());
    for i in 0..p {
        let (r, g, b) = (img[i], img[p + i], img[2 * p + i]);
        let y = 0.299 * r + 0.587 * g + 0.114 * b;
        let ci = 0.596 * r - 0.274 * g - 0.322 * b;
        let cq = 0.211 * r - 0.523 * g + 0.312 * b;
        let ci2 = j.saturation * (c * ci - s * cq);
        let cq2 = j.saturation * (s * ci + c * cq);
        img[i] = y + 0.956 * ci2 + 0.621 * cq2;
        img[p + i] = y - 0.272 * ci2 - 0.647 * cq2;
        img[2 * p + i] = y - 1.106 * ci2 + 1.703 * cq2;
    }
}

fn clip(mut img: ArrayViewMut1<'_, f64>) {
    img.mapv_inplace(|v| v.clamp(0.0, 1.0));
}

/// Probability gates of the two views.
pub const FLIP_P: f64 = 0.5;
pub const GRAY_P_FIRST: f64 = 0.2;
pub const JITTER_P: f64 = 0.8;
pub const GRAY_P_SECOND: f64 = 0.4;

fn coin<R: Rng + ?Sized>(p: f64, rng: &mut R) -> bool {
    rng.random::<f64>() < p
}

/// First view: flip, then grayscale.
pub fn augment_first<R: Rng + ?Sized>(format: ImageFormat, mut img: ArrayViewMut1<'_, f64>, rng: &mut R) {
    if coin(FLIP_P, rng) {
        flip_horizontal(format, img.view_mut());
    }
    if coin(GRAY_P_FIRST, rng) {
        grayscale(format, img.view_mut());
    }
    clip(img);
}

/// Second view: colour jitter, then grayscale.
pub fn augment_second<R: Rng + ?Sized>(format: ImageFormat, mut img: ArrayViewMut1<'_, f64>, rng: &mut R) {
    if coin(JITTER_P, rng) {
        color_jitter(format, img.view_mut(), Jitter::sample(rng));
    }
    if coin(GRAY_P_SECOND, rng) {
        grayscale(format, img.view_mut());
    }
    clip(img);
}

pub fn augment_pair<R: Rng + ?Sized>(
    format: ImageFormat,
    image: ArrayView1<'_, f64>,
    rng: &mut R,
) -> (ndarray::Array1<f64>, ndarray::Array1<f64>) {
    let mut a = image.to_owned();
    let mut b = image.to_owned();
    augment_first(format, a.view_mut(), rng);
    augment_second(format, b.view_mut(), rng);
    (a, b)
}

/// Both views for every image of a batch.
pub fn augment_batch<R: Rng + ?Sized>(batch: &ImageBatch, rng: &mut R) -> (Array2<f64>, Array2<f64>) {
    let mut first = batch.images.clone();
    let mut second = batch.images.clone();
    for (a, b) in first.rows_mut().into_iter().zip(second.rows_mut()) {
        augment_first(batch.format, a, rng);
        augment_second(batch.format, b, rng);
    }
    (first, second)
}

pub const TOY_CLASSES: usize = 10;

/// Ten procedural 16x16 patterns: vertical and horizontal cosine gratings at
/// three frequencies, a checkerboard, a central blob, a ring and a top blob.
/// Each sample gets its own phase, position and contrast jitter plus pixel
/// noise.
pub fn make_synthetic_dataset<R: Rng + ?Sized>(n_classes: usize, per_class: usize, rng: &mut R) -> ImageBatch {
    assert!(n_classes <= TOY_CLASSES, "at most {TOY_CLASSES} toy classes");
    let format = ImageFormat::TOY;
    let n = n_classes * per_class;
    let mut images = Array2::zeros((n, format.pixels()));
    let mut labels = Vec::with_capacity(n);
    let noise = Normal::new(0.0, 0.15).expect("valid std");
    let s = format.side as f64;
    let centre = (s - 1.0) / 2.0;
    let mut row = 0;
    for class in 0..n_classes {
        for _ in 0..per_class {
            let phase = rng.random_range(0.0..2.0 * PI);
            let amp = rng.random_range(0.2..=0.45);
            let dx = rng.random_range(-3.0..=3.0);
            let dy = rng.random_range(-3.0..=3.0);
            let mut img = images.row_mut(row);
            for y in 0..format.side {
                for x in 0..format.side {
                    let (xf, yf) = (x as f64 - centre, y as f64 - centre);
                    let v = match class {
                        0..=5 => {
                            let freq = (class % 3 + 1) as f64;
                            let coord = if class < 3 { xf } else { yf };
                            0.5 + amp * (2.0 * PI * freq * coord / s + phase).cos()
                        }
                        6 => {
                            let cell = ((x as f64 + dx + 16.0) / 4.0).floor() as i64
                                + ((y as f64 + dy + 16.0) / 4.0).floor() as i64;
                            if cell % 2 == 0 { 0.5 + amp } else { 0.5 - amp }
                        }
                        7 => {
                            let r2 = (xf - dx).powi(2) + (yf - dy).powi(2);
                            0.1 + 2.0 * amp * (-r2 / (2.0 * 3.0 * 3.0)).exp()
                        }
                        8 => {
                            let r = ((xf - dx).powi(2) + (yf - dy).powi(2)).sqrt();
                            0.1 + 2.0 * amp * (-(r - 5.0).powi(2) / 2.0).exp()
                        }
                        _ => {
                            let r2 = (xf - dx).powi(2) + (yf + 4.5 - dy).powi(2);
                            0.1 + 2.0 * amp * (-r2 / (2.0 * 2.5 * 2.5)).exp()
                        }
                    };
                    img[y * format.side + x] = (v + noise.sample(rng)).clamp(0.0, 1.0);
                }
            }
            labels.push(class);
            row += 1;
        }
    }
    ImageBatch { format, images, labels }
}

pub const CIFAR_RECORD_BYTES: usize = 3073;

/// Parses CIFAR-10 binary records: one label byte then 3072 pixel bytes.
pub fn parse_cifar(bytes: &[u8]) -> Result<ImageBatch> {
    if bytes.len() % CIFAR_RECORD_BYTES != 0 {
        return Err(Error::Dataset(format!(
            "{} bytes is not a whole number of {CIFAR_RECORD_BYTES}-byte records",
            bytes.len()
        )));
    }
    let n = bytes.len() / CIFAR_RECORD_BYTES;
    let format = ImageFormat::CIFAR;
    let mut images = Array2::zeros((n, format.pixels()));
    let mut labels = Vec::with_capacity(n);
    for (i, rec) in bytes.chunks_exact(CIFAR_RECORD_BYTES).enumerate() {
        let label = rec[0] as usize;
        if label >= 10 {
            return Err(Error::Dataset(format!("record {i} has label {label}")));
        }
        labels.push(label);
        for (dst, src) in images.row_mut(i).iter_mut().zip(&rec[1..]) {
            *dst = f64::from(*src) / 255.0;
        }
    }
    Ok(ImageBatch { format, images, labels })
}

/// Reads every `data_batch_*.bin` file in `dir`, in name order.
pub fn load_cifar_dir(dir: &Path) -> Result<ImageBatch> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("data_batch") && n.ends_with(".bin"))
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Dataset(format!("no data_batch_*.bin files in {}", dir.display())));
    }
    let mut bytes = Vec::new();
    for f in &files {
        bytes.extend(std::fs::read(f).map_err(|e| Error::io(f, e))?);
    }
    parse_cifar(&bytes)
}
