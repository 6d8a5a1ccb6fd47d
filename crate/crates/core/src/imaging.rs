//! Image loading, grayscale conversion, bilinear resizing and Multiscale
//! Retinex enhancement.
//!
//! Pixels are stored as row-major interleaved `f64` samples. Freshly loaded
//! images hold values in `[0, 1]`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

/// ITU-R BT.601 luma weights for R, G, B.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

#[derive(Debug, thiserror::Error)]
pub enum ImagingError {
    #[error("file not found: {0}")]
    NotFound(PathBuf),
    #[error("unsupported image format for {path}: {reason}")]
    Unsupported { path: PathBuf, reason: String },
    #[error("cannot decode {path}: {reason}")]
    Decode { path: PathBuf, reason: String },
    #[error("image has a zero dimension ({width}x{height})")]
    ZeroDimension { width: usize, height: usize },
    #[error("image must have 1 or 3 channels, got {0}")]
    Channels(usize),
    #[error("pixel buffer holds {got} values, expected {expected}")]
    DataLength { got: usize, expected: usize },
    #[error("pixel values must be finite")]
    NonFinite,
    #[error("gaussian sigma must be positive, got {0}")]
    InvalidSigma(f64),
    #[error("invalid MSR configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self, ImagingError> {
        if width == 0 || height == 0 {
            return Err(ImagingError::ZeroDimension { width, height });
        }
        if channels != 1 && channels != 3 {
            return Err(ImagingError::Channels(channels));
        }
        let expected = width * height * channels;
        if data.len() != expected {
            return Err(ImagingError::DataLength {
                got: data.len(),
                expected,
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(ImagingError::NonFinite);
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Result<Self, ImagingError> {
        Self::new(width, height, channels, vec![value; width * height * channels])
    }

    /// Single-channel image from a per-pixel function of `(x, y)`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self, ImagingError> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, 1, data)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    /// One channel as a dense row-major plane.
    pub fn plane(&self, c: usize) -> Vec<f64> {
        self.data.iter().skip(c).step_by(self.channels).copied().collect()
    }

    fn from_planes(width: usize, height: usize, planes: &[Vec<f64>]) -> Self {
        let channels = planes.len();
        let mut data = vec![0.0; width * height * channels];
        for (c, plane) in planes.iter().enumerate() {
            for (i, &v) in plane.iter().enumerate() {
                data[i * channels + c] = v;
            }
        }
        Self {
            width,
            height,
            channels,
            data,
        }
    }

    /// Multiplies every sample by `k`.
    pub fn scaled(&self, k: f64) -> Self {
        Self {
            data: self.data.iter().map(|v| v * k).collect(),
            ..self.clone()
        }
    }

    /// Clamps samples to `[0, 1]` and quantizes them to 8 bits.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect()
    }
}

/// Decodes a PNG, JPEG or PNM (binary or plain-text) raster into `[0, 1]`
/// samples. Alpha is discarded; grey inputs stay single-channel.
pub fn load_image(path: impl AsRef<Path>) -> Result<Image, ImagingError> {
    use image::ColorType;

    let path = path.as_ref();
    if !path.exists() {
        return Err(ImagingError::NotFound(path.to_path_buf()));
    }
    let reader = image::ImageReader::open(path)
        .and_then(|r| r.with_guessed_format())
        .map_err(|e| ImagingError::Decode {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
    if reader.format().is_none() {
        return Err(ImagingError::Unsupported {
            path: path.to_path_buf(),
            reason: "unrecognized file signature".into(),
        });
    }
    let decoded = reader.decode().map_err(|e| match e {
        image::ImageError::Unsupported(u) => ImagingError::Unsupported {
            path: path.to_path_buf(),
            reason: u.to_string(),
        },
        other => ImagingError::Decode {
            path: path.to_path_buf(),
            reason: other.to_string(),
        },
    })?;

    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    if w == 0 || h == 0 {
        return Err(ImagingError::ZeroDimension { width: w, height: h });
    }
    let grey = matches!(
        decoded.color(),
        ColorType::L8 | ColorType::La8 | ColorType::L16 | ColorType::La16
    );
    let sixteen = matches!(
        decoded.color(),
        ColorType::L16 | ColorType::La16 | ColorType::Rgb16 | ColorType::Rgba16
    );
    let data: Vec<f64> = match (grey, sixteen) {
        (true, false) => decoded
            .to_luma8()
            .into_raw()
            .into_iter()
            .map(|b| f64::from(b) / 255.0)
            .collect(),
        (true, true) => decoded
            .to_luma16()
            .into_raw()
            .into_iter()
            .map(|b| f64::from(b) / 65535.0)
            .collect(),
        (false, false) => decoded
            .to_rgb8()
            .into_raw()
            .into_iter()
            .map(|b| f64::from(b) / 255.0)
            .collect(),
        (false, true) => decoded
            .to_rgb16()
            .into_raw()
            .into_iter()
            .map(|b| f64::from(b) / 65535.0)
            .collect(),
    };
    Image::new(w, h, if grey { 1 } else { 3 }, data)
}

/// Luma conversion with [`LUMA_WEIGHTS`]; grey images pass through.
pub fn to_grayscale(img: &Image) -> Image {
    if img.channels == 1 {
        return img.clone();
    }
    let data = img
        .data
        .chunks_exact(3)
        .map(|px| LUMA_WEIGHTS[0] * px[0] + LUMA_WEIGHTS[1] * px[1] + LUMA_WEIGHTS[2] * px[2])
        .collect();
    Image {
        width: img.width,
        height: img.height,
        channels: 1,
        data,
    }
}

/// Bilinear resampling with pixel-centre alignment: output pixel `x` samples
/// the source at `(x + 0.5) · w_in / w_out − 0.5`, clamped to the source
/// grid.
pub fn resize(img: &Image, width: usize, height: usize) -> Result<Image, ImagingError> {
    if width == 0 || height == 0 {
        return Err(ImagingError::ZeroDimension { width, height });
    }
    if width == img.width && height == img.height {
        return Ok(img.clone());
    }
    let taps = |n_out: usize, n_in: usize| -> Vec<(usize, usize, f64)> {
        let scale = n_in as f64 / n_out as f64;
        (0..n_out)
            .map(|o| {
                let src = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (n_in - 1) as f64);
                let lo = src.floor() as usize;
                let hi = (lo + 1).min(n_in - 1);
                (lo, hi, src - lo as f64)
            })
            .collect()
    };
    let xs = taps(width, img.width);
    let ys = taps(height, img.height);
    let ch = img.channels;
    let mut data = Vec::with_capacity(width * height * ch);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            for c in 0..ch {
                let top = img.get(x0, y0, c) * (1.0 - fx) + img.get(x1, y0, c) * fx;
                let bottom = img.get(x0, y1, c) * (1.0 - fx) + img.get(x1, y1, c) * fx;
                data.push(top * (1.0 - fy) + bottom * fy);
            }
        }
    }
    Image::new(width, height, ch, data)
}

/// Normalized 1-D Gaussian taps over `[-r, r]` with `r = ceil(3σ)`.
pub fn gaussian_kernel_1d(sigma: f64) -> Result<Vec<f64>, ImagingError> {
    if !sigma.is_finite() || sigma <= 0.0 {
        return Err(ImagingError::InvalidSigma(sigma));
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let denom = 2.0 * sigma * sigma;
    let mut k: Vec<f64> = (-radius..=radius).map(|i| (-((i * i) as f64) / denom).exp()).collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    Ok(k)
}

/// Convolves one line with a centred kernel, replicating the end samples.
/// Taps that fall past either end collapse onto the end sample, so the cost
/// is bounded by the line length even for kernels much wider than it.
fn convolve_line(src: &[f64], kernel: &[f64], prefix: &[f64], dst: &mut [f64]) {
    let n = src.len() as isize;
    let len = kernel.len() as isize;
    let r = len / 2;
    let total = prefix[kernel.len()];
    if n == 1 {
        dst[0] = src[0] * total;
        return;
    }
    for x in 0..n {
        // Tap t reads source x + t - r; t <= lo hits sample 0, t >= hi hits n - 1.
        let lo = r - x;
        let hi = n - 1 - x + r;
        let mut acc = 0.0;
        if lo >= 0 {
            acc += src[0] * prefix[(lo + 1).min(len) as usize];
        }
        if hi < len {
            acc += src[(n - 1) as usize] * (total - prefix[hi.max(0) as usize]);
        }
        let t0 = (lo + 1).max(0);
        let t1 = hi.min(len);
        for t in t0..t1 {
            acc += kernel[t as usize] * src[(x + t - r) as usize];
        }
        dst[x as usize] = acc;
    }
}

/// Separable convolution of one row-major plane with `kernel` along both
/// axes, replicating edge pixels.
pub(crate) fn convolve_separable(plane: &[f64], width: usize, height: usize, kernel: &[f64]) -> Vec<f64> {
    let mut prefix = Vec::with_capacity(kernel.len() + 1);
    prefix.push(0.0);
    for &k in kernel {
        prefix.push(prefix.last().unwrap() + k);
    }
    let mut tmp = vec![0.0; plane.len()];
    for y in 0..height {
        let span = y * width..(y + 1) * width;
        convolve_line(&plane[span.clone()], kernel, &prefix, &mut tmp[span]);
    }
    let mut out = vec![0.0; plane.len()];
    let mut col = vec![0.0; height];
    let mut res = vec![0.0; height];
    for x in 0..width {
        for y in 0..height {
            col[y] = tmp[y * width + x];
        }
        convolve_line(&col, kernel, &prefix, &mut res);
        for y in 0..height {
            out[y * width + x] = res[y];
        }
    }
    out
}

/// Gaussian surround `G_σ * I`, applied to every channel independently.
pub fn gaussian_surround(img: &Image, sigma: f64) -> Result<Image, ImagingError> {
    let kernel = gaussian_kernel_1d(sigma)?;
    let planes: Vec<Vec<f64>> = (0..img.channels)
        .map(|c| convolve_separable(&img.plane(c), img.width, img.height, &kernel))
        .collect();
    Ok(Image::from_planes(img.width, img.height, &planes))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MsrConfig {
    /// Surround standard deviations in pixels, strictly increasing.
    pub scales: Vec<f64>,
    /// Per-scale mixing weights; non-negative, summing to 1.
    pub weights: Vec<f64>,
    /// Log-domain guard added before taking logarithms.
    pub epsilon: f64,
}

impl Default for MsrConfig {
    fn default() -> Self {
        Self::equal_weights(vec![15.0, 80.0, 250.0], 1e-6)
    }
}

impl MsrConfig {
    pub fn equal_weights(scales: Vec<f64>, epsilon: f64) -> Self {
        let n = scales.len().max(1);
        Self {
            weights: vec![1.0 / n as f64; scales.len()],
            scales,
            epsilon,
        }
    }

    pub fn validate(&self) -> Result<(), ImagingError> {
        let bad = |m: &str| Err(ImagingError::InvalidConfig(m.to_string()));
        if self.scales.is_empty() {
            return bad("at least one scale is required");
        }
        if self.scales.len() != self.weights.len() {
            return bad("scales and weights differ in length");
        }
        if self.scales.iter().any(|&s| !s.is_finite() || s <= 0.0) {
            return bad("scales must be positive");
        }
        if self.scales.windows(2).any(|w| w[1] <= w[0]) {
            return bad("scales must be strictly increasing");
        }
        if self.weights.iter().any(|&w| !w.is_finite() || w < 0.0) {
            return bad("weights must be non-negative");
        }
        if (self.weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return bad("weights must sum to 1");
        }
        if !self.epsilon.is_finite() || self.epsilon <= 0.0 {
            return bad("epsilon must be positive");
        }
        Ok(())
    }
}

/// Channel ranges at or below this are treated as constant.
const DEGENERATE_RANGE: f64 = 1e-10;

/// Multiscale Retinex reflectance before renormalization:
/// `Σᵢ wᵢ · [ln(I + ε) − ln(G_σᵢ * I + ε)]` per channel.
pub fn msr_reflectance(img: &Image, cfg: &MsrConfig) -> Result<Image, ImagingError> {
    cfg.validate()?;
    let kernels = cfg
        .scales
        .iter()
        .map(|&s| gaussian_kernel_1d(s))
        .collect::<Result<Vec<_>, _>>()?;
    let eps = cfg.epsilon;
    let planes: Vec<Vec<f64>> = (0..img.channels)
        .map(|c| {
            let plane = img.plane(c);
            let log_in: Vec<f64> = plane.iter().map(|v| (v + eps).ln()).collect();
            let mut out = vec![0.0; plane.len()];
            for (kernel, &w) in kernels.iter().zip(&cfg.weights) {
                let surround = convolve_separable(&plane, img.width, img.height, kernel);
                for ((o, li), s) in out.iter_mut().zip(&log_in).zip(&surround) {
                    *o += w * (li - (s + eps).ln());
                }
            }
            out
        })
        .collect();
    Ok(Image::from_planes(img.width, img.height, &planes))
}

/// Multiscale Retinex enhancement, min-max renormalized to `[0, 1]` per
/// channel. A channel whose reflectance is constant maps to 0.5.
pub fn msr_enhance(img: &Image, cfg: &MsrConfig) -> Result<Image, ImagingError> {
    let r = msr_reflectance(img, cfg)?;
    let planes: Vec<Vec<f64>> = (0..r.channels)
        .map(|c| {
            let plane = r.plane(c);
            let (lo, hi) = plane.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
            let range = hi - lo;
            if range.is_nan() || range <= DEGENERATE_RANGE {
                vec![0.5; plane.len()]
            } else {
                plane.iter().map(|v| ((v - lo) / range).clamp(0.0, 1.0)).collect()
            }
        })
        .collect();
    Ok(Image::from_planes(r.width, r.height, &planes))
}
