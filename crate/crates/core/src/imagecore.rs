//! Grayscale images, kernels, response maps and the reflect-padded
//! convolution engine every response computation is built on.
//!
//! All arithmetic is `f64`. Coordinates are `(x, y)` with `x` the column
//! and `y` the row, both growing from the top-left corner.

use std::io::Write;
use std::path::Path;

use image::{DynamicImage, ImageReader};

use crate::error::{CorfError, Result};

/// Luma weights applied to RGB input.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

/// A grayscale intensity image with values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(CorfError::Dimension(format!(
                "image must be at least 1x1, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(CorfError::Dimension(format!(
                "expected {} samples for {width}x{height}, got {}",
                width * height,
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0) {
            return Err(CorfError::InvalidParameter(format!(
                "intensity {v} outside [0, 1]"
            )));
        }
        Ok(Image {
            width,
            height,
            data,
        })
    }

    /// Builds an image by evaluating `f(x, y)` at every pixel; values are clamped to `[0, 1]`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let v = f(x, y);
                data.push(if v.is_nan() { v } else { v.clamp(0.0, 1.0) });
            }
        }
        Image::new(width, height, data)
    }

    pub fn constant(width: usize, height: usize, level: f64) -> Result<Self> {
        Image::new(width, height, vec![level; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// The photometric negative `1 - I`.
    pub fn inverted(&self) -> Image {
        Image {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|v| 1.0 - v).collect(),
        }
    }

    pub fn as_map(&self) -> ResponseMap {
        ResponseMap {
            width: self.width,
            height: self.height,
            data: self.data.clone(),
        }
    }
}

/// A square, odd-sided filter kernel. Taps are row-major and centred.
#[derive(Clone, Debug, PartialEq)]
pub struct Kernel {
    side: usize,
    taps: Vec<f64>,
}

impl Kernel {
    pub fn new(side: usize, taps: Vec<f64>) -> Result<Self> {
        if side.is_multiple_of(2) {
            return Err(CorfError::Dimension(format!("kernel side {side} is not odd")));
        }
        if taps.len() != side * side {
            return Err(CorfError::Dimension(format!(
                "kernel side {side} needs {} taps, got {}",
                side * side,
                taps.len()
            )));
        }
        if taps.iter().any(|t| !t.is_finite()) {
            return Err(CorfError::InvalidParameter("non-finite kernel tap".into()));
        }
        Ok(Kernel { side, taps })
    }

    pub fn identity() -> Self {
        Kernel {
            side: 1,
            taps: vec![1.0],
        }
    }

    /// Unit-sum isotropic Gaussian truncated at `ceil(3 * sigma)`.
    pub fn gaussian(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(CorfError::InvalidParameter(format!(
                "gaussian sigma must be positive, got {sigma}"
            )));
        }
        let radius = (3.0 * sigma).ceil() as i64;
        let side = (2 * radius + 1) as usize;
        let mut taps = Vec::with_capacity(side * side);
        let two_var = 2.0 * sigma * sigma;
        for dy in -radius..=radius {
            for dx in -radius..=radius {
                taps.push((-((dx * dx + dy * dy) as f64) / two_var).exp());
            }
        }
        let sum: f64 = taps.iter().sum();
        taps.iter_mut().for_each(|t| *t /= sum);
        Kernel::new(side, taps)
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn radius(&self) -> usize {
        self.side / 2
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    /// Tap at offset `(dx, dy)` from the centre.
    pub fn tap(&self, dx: i64, dy: i64) -> f64 {
        let r = self.radius() as i64;
        self.taps[((dy + r) as usize) * self.side + (dx + r) as usize]
    }

    pub fn sum(&self) -> f64 {
        self.taps.iter().sum()
    }

    pub fn negated(&self) -> Kernel {
        Kernel {
            side: self.side,
            taps: self.taps.iter().map(|t| -t).collect(),
        }
    }
}

/// A real-valued map with the dimensions of its source image.
#[derive(Clone, Debug, PartialEq)]
pub struct ResponseMap {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl ResponseMap {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height {
            return Err(CorfError::Dimension(format!(
                "response map {width}x{height} with {} samples",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(CorfError::InvalidParameter("non-finite response value".into()));
        }
        Ok(ResponseMap {
            width,
            height,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        ResponseMap {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub(crate) fn from_raw(width: usize, height: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), width * height);
        ResponseMap {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn same_shape(&self, other: &ResponseMap) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Position `(x, y)` of the first maximal value in row-major order.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (i, v) in self.data.iter().enumerate() {
            if *v > self.data[best] {
                best = i;
            }
        }
        (best % self.width, best / self.width)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ResponseMap {
        ResponseMap {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|v| f(*v)).collect(),
        }
    }

    /// Half-wave rectification `max(0, v)`.
    pub fn rectified(&self) -> ResponseMap {
        self.map(|v| v.max(0.0))
    }

    pub fn convolve(&self, kernel: &Kernel) -> Result<ResponseMap> {
        let data = convolve_plane(self.width, self.height, &self.data, kernel, false)?;
        Ok(ResponseMap::from_raw(self.width, self.height, data))
    }

    /// Value at the (possibly out-of-range) integer position, using reflect extension.
    pub fn get_reflect(&self, x: i64, y: i64) -> f64 {
        let xi = reflect_index(x, self.width);
        let yi = reflect_index(y, self.height);
        self.data[yi * self.width + xi]
    }

    /// Bilinear sample at a real position over the reflect-extended map.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> f64 {
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = x - x0;
        let fy = y - y0;
        let (x0, y0) = (x0 as i64, y0 as i64);
        let v00 = self.get_reflect(x0, y0);
        let v10 = self.get_reflect(x0 + 1, y0);
        let v01 = self.get_reflect(x0, y0 + 1);
        let v11 = self.get_reflect(x0 + 1, y0 + 1);
        (1.0 - fy) * ((1.0 - fx) * v00 + fx * v10) + fy * ((1.0 - fx) * v01 + fx * v11)
    }
}

/// Maps any integer coordinate into `[0, n)` by mirroring about the first
/// and last samples without repeating them (`-1 -> 1`, `n -> n - 2`).
pub fn reflect_index(i: i64, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as i64 - 1);
    let m = i.rem_euclid(period);
    if m < n as i64 {
        m as usize
    } else {
        (period - m) as usize
    }
}

/// Convolves `image` with `kernel` under reflect border padding:
/// `out(x, y) = sum K(dx, dy) * I(x - dx, y - dy)`.
pub fn convolve(image: &Image, kernel: &Kernel) -> Result<ResponseMap> {
    let data = convolve_plane(image.width, image.height, &image.data, kernel, false)?;
    Ok(ResponseMap::from_raw(image.width, image.height, data))
}

/// Convolution of the differences `I(x - d) - I(x)`. Equals [`convolve`] for a
/// kernel whose taps sum to zero, and is exactly zero on flat regions instead
/// of leaving rounding residue.
pub fn convolve_differences(image: &Image, kernel: &Kernel) -> Result<ResponseMap> {
    let data = convolve_plane(image.width, image.height, &image.data, kernel, true)?;
    Ok(ResponseMap::from_raw(image.width, image.height, data))
}

fn convolve_plane(width: usize, height: usize, data: &[f64], kernel: &Kernel, centred: bool) -> Result<Vec<f64>> {
    let limit = 2 * width.min(height) + 1;
    if kernel.side() > limit {
        return Err(CorfError::Dimension(format!(
            "kernel side {} exceeds {limit} for a {width}x{height} image",
            kernel.side()
        )));
    }
    let r = kernel.radius();
    let pw = width + 2 * r;
    let ph = height + 2 * r;
    let mut padded = vec![0.0; pw * ph];
    for py in 0..ph {
        let sy = reflect_index(py as i64 - r as i64, height);
        for px in 0..pw {
            let sx = reflect_index(px as i64 - r as i64, width);
            padded[py * pw + px] = data[sy * width + sx];
        }
    }

    let side = kernel.side();
    let taps = kernel.taps();
    let mut out = vec![0.0; width * height];
    let zeros = vec![0.0; width];
    for y in 0..height {
        let row = &mut out[y * width..(y + 1) * width];
        let centre = if centred { &data[y * width..(y + 1) * width] } else { &zeros[..] };
        for ky in 0..side {
            // dy = ky - r, source row = y - dy (+ r padding)
            let src_row = y + 2 * r - ky;
            let src = &padded[src_row * pw..(src_row + 1) * pw];
            for kx in 0..side {
                let t = taps[ky * side + kx];
                if t == 0.0 {
                    continue;
                }
                let off = 2 * r - kx;
                for ((o, s), c) in row.iter_mut().zip(&src[off..off + width]).zip(centre) {
                    *o += t * (s - c);
                }
            }
        }
    }
    Ok(out)
}

/// Reads an 8-bit grayscale, gray+alpha, RGB or RGBA PNG or binary PGM.
pub fn load_grayscale(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let reader = ImageReader::open(path)
        .map_err(|e| CorfError::io(path, e))?
        .with_guessed_format()
        .map_err(|e| CorfError::io(path, e))?;
    let decoded = reader.decode().map_err(|e| match e {
        image::ImageError::IoError(io) => CorfError::io(path, io),
        other => CorfError::Format(format!("{}: {other}", path.display())),
    })?;
    image_from_dynamic(&decoded)
        .map_err(|e| CorfError::Format(format!("{}: {e}", path.display())))
}

fn image_from_dynamic(img: &DynamicImage) -> std::result::Result<Image, String> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let luma = |r: u8, g: u8, b: u8| {
        (LUMA_WEIGHTS[0] * r as f64 + LUMA_WEIGHTS[1] * g as f64 + LUMA_WEIGHTS[2] * b as f64) / 255.0
    };
    let data: Vec<f64> = match img {
        DynamicImage::ImageLuma8(buf) => buf.as_raw().iter().map(|v| *v as f64 / 255.0).collect(),
        DynamicImage::ImageLumaA8(buf) => buf.pixels().map(|p| p.0[0] as f64 / 255.0).collect(),
        DynamicImage::ImageRgb8(buf) => buf.pixels().map(|p| luma(p.0[0], p.0[1], p.0[2])).collect(),
        DynamicImage::ImageRgba8(buf) => buf.pixels().map(|p| luma(p.0[0], p.0[1], p.0[2])).collect(),
        other => return Err(format!("unsupported color type {:?}; only 8-bit input is accepted", other.color())),
    };
    // luma weights sum to one, but rounding can overshoot 1 by an ulp
    let data = data.into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
    Image::new(w, h, data).map_err(|e| e.to_string())
}

/// Quantizes `[0, 1]` values to bytes: clamp, scale by 255, round half up.
pub fn quantize(values: &[f64]) -> Vec<u8> {
    values
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8)
        .collect()
}

/// Writes an 8-bit PNG or binary PGM (chosen by extension) of `values`,
/// which are clamped to `[0, 1]`.
pub fn save_gray(path: impl AsRef<Path>, width: usize, height: usize, values: &[f64]) -> Result<()> {
    let path = path.as_ref();
    if values.len() != width * height {
        return Err(CorfError::Dimension("sample count does not match dimensions".into()));
    }
    let bytes = quantize(values);
    let is_pgm = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.eq_ignore_ascii_case("pgm"))
        .unwrap_or(false);
    let mut encoded = Vec::new();
    if is_pgm {
        write!(encoded, "P5\n{width} {height}\n255\n").expect("write to vec");
        encoded.extend_from_slice(&bytes);
    } else {
        let buf = image::GrayImage::from_raw(width as u32, height as u32, bytes)
            .ok_or_else(|| CorfError::Dimension("bad buffer".into()))?;
        DynamicImage::ImageLuma8(buf)
            .write_to(&mut std::io::Cursor::new(&mut encoded), image::ImageFormat::Png)
            .map_err(|e| CorfError::Format(e.to_string()))?;
    }
    crate::fsutil::write_atomic(path, &encoded)
}

pub fn save_image(path: impl AsRef<Path>, image: &Image) -> Result<()> {
    save_gray(path, image.width, image.height, &image.data)
}

/// Saves a response map linearly rescaled so its maximum maps to 255.
/// Returns the scale factor applied (`1 / max`, or 1 for an all-zero map).
pub fn save_map_rescaled(path: impl AsRef<Path>, map: &ResponseMap) -> Result<f64> {
    let max = map.data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let scale = if max > 0.0 { 1.0 / max } else { 1.0 };
    let values: Vec<f64> = map.data.iter().map(|v| v * scale).collect();
    save_gray(path, map.width, map.height, &values)?;
    Ok(scale)
}
