//! Multi-scale Binarized Statistical Image Features.
//!
//! Each pixel gets an 8-bit code from the signs of eight zero-mean linear
//! filter responses; codes are summarized by a 4×4 grid of 256-bin block
//! histograms (4096 values per window size). Six window sizes stack into a
//! 6×4096 shallow-feature matrix.

use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::imaging::Image;
use crate::tensor::Matrix;

pub const N_FILTERS: usize = 8;
pub const N_BINS: usize = 1 << N_FILTERS;
pub const GRID: usize = 4;
pub const HISTOGRAM_LEN: usize = GRID * GRID * N_BINS;
pub const WINDOWS: [usize; 6] = [3, 5, 7, 9, 11, 13];

const MEAN_TOLERANCE: f64 = 1e-6;

#[derive(Debug, thiserror::Error)]
pub enum BsifError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed filter bank: {0}")]
    Malformed(String),
    #[error("filter count must be {N_FILTERS}, got {0}")]
    FilterCount(usize),
    #[error("window must be one of 3, 5, 7, 9, 11, 13, got {0}")]
    Window(usize),
    #[error("filter {index} has mean {mean:e}, expected zero")]
    NonZeroMean { index: usize, mean: f64 },
    #[error("BSIF needs a single-channel image, got {0} channels")]
    Channels(usize),
    #[error("image {width}x{height} is smaller than the {window}x{window} window")]
    TooSmall { width: usize, height: usize, window: usize },
    #[error("code map {width}x{height} is smaller than the {GRID}x{GRID} grid")]
    MapTooSmall { width: usize, height: usize },
    #[error("filter banks must cover windows 3, 5, 7, 9, 11, 13 in order, got {0:?}")]
    BankSet(Vec<usize>),
}

/// Eight zero-mean `W×W` kernels, each stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterBank {
    window: usize,
    filters: Vec<Vec<f64>>,
}

impl FilterBank {
    pub fn new(window: usize, filters: Vec<Vec<f64>>) -> Result<Self, BsifError> {
        if !WINDOWS.contains(&window) {
            return Err(BsifError::Window(window));
        }
        if filters.len() != N_FILTERS {
            return Err(BsifError::FilterCount(filters.len()));
        }
        for (index, f) in filters.iter().enumerate() {
            if f.len() != window * window {
                return Err(BsifError::Malformed(format!(
                    "filter {index} has {} taps, expected {}",
                    f.len(),
                    window * window
                )));
            }
            if f.iter().any(|v| !v.is_finite()) {
                return Err(BsifError::Malformed(format!("filter {index} has non-finite taps")));
            }
            let mean = f.iter().sum::<f64>() / f.len() as f64;
            if mean.abs() > MEAN_TOLERANCE {
                return Err(BsifError::NonZeroMean { index, mean });
            }
        }
        Ok(Self { window, filters })
    }

    #[inline]
    pub fn window(&self) -> usize {
        self.window
    }

    pub fn n_filters(&self) -> usize {
        self.filters.len()
    }

    pub fn filters(&self) -> &[Vec<f64>] {
        &self.filters
    }

    /// Text form: a `BSIF <W> <n>` header line, then `n` blocks of `W`
    /// lines with `W` space-separated decimals each.
    pub fn to_text(&self) -> String {
        let w = self.window;
        let mut s = format!("BSIF {w} {}\n", self.filters.len());
        for f in &self.filters {
            for row in f.chunks(w) {
                let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
                let _ = writeln!(s, "{}", line.join(" "));
            }
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self, BsifError> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let header = lines.next().ok_or_else(|| BsifError::Malformed("empty file".into()))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        let [tag, w, n] = fields.as_slice() else {
            return Err(BsifError::Malformed(format!("bad header {header:?}")));
        };
        if *tag != "BSIF" {
            return Err(BsifError::Malformed(format!("bad header tag {tag:?}")));
        }
        let window: usize = w
            .parse()
            .map_err(|_| BsifError::Malformed(format!("bad window {w:?}")))?;
        let count: usize = n
            .parse()
            .map_err(|_| BsifError::Malformed(format!("bad filter count {n:?}")))?;
        if count != N_FILTERS {
            return Err(BsifError::FilterCount(count));
        }
        if window.is_multiple_of(2) || !WINDOWS.contains(&window) {
            return Err(BsifError::Window(window));
        }
        let mut filters = Vec::with_capacity(count);
        for fi in 0..count {
            let mut taps = Vec::with_capacity(window * window);
            for r in 0..window {
                let line = lines
                    .next()
                    .ok_or_else(|| BsifError::Malformed(format!("filter {fi} is missing row {r}")))?;
                let row = line
                    .split_whitespace()
                    .map(|t| t.parse::<f64>())
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| BsifError::Malformed(format!("filter {fi} row {r}: {e}")))?;
                if row.len() != window {
                    return Err(BsifError::Malformed(format!(
                        "filter {fi} row {r} has {} values, expected {window}",
                        row.len()
                    )));
                }
                taps.extend(row);
            }
            filters.push(taps);
        }
        if lines.next().is_some() {
            return Err(BsifError::Malformed("trailing data after last filter".into()));
        }
        Self::new(window, filters)
    }
}

pub fn load_filterbank(path: impl AsRef<Path>) -> Result<FilterBank, BsifError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| BsifError::Io {
        path: path.display().to_string(),
        source,
    })?;
    FilterBank::parse(&text)
}

pub fn write_filterbank(path: impl AsRef<Path>, bank: &FilterBank) -> Result<(), BsifError> {
    let path = path.as_ref();
    std::fs::write(path, bank.to_text()).map_err(|source| BsifError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Seeded stand-in for learned filters: standard-normal draws, mean
/// removed, then orthonormalized as flattened vectors.
pub fn generate_fallback_bank(window: usize, seed: u64) -> Result<FilterBank, BsifError> {
    if window.is_multiple_of(2) || !WINDOWS.contains(&window) {
        return Err(BsifError::Window(window));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (window as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let taps = window * window;
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(N_FILTERS);
    while basis.len() < N_FILTERS {
        let mut v: Vec<f64> = (0..taps).map(|_| StandardNormal.sample(&mut rng)).collect();
        let mean = v.iter().sum::<f64>() / taps as f64;
        v.iter_mut().for_each(|x| *x -= mean);
        // Two Gram-Schmidt passes keep pairwise products at rounding level.
        for _ in 0..2 {
            for b in &basis {
                let p: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-6 {
            continue;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        basis.push(v);
    }
    FilterBank::new(window, basis)
}

/// Per-pixel 8-bit codes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CodeMap {
    width: usize,
    height: usize,
    codes: Vec<u8>,
}

impl CodeMap {
    pub fn new(width: usize, height: usize, codes: Vec<u8>) -> Option<Self> {
        (codes.len() == width * height).then_some(Self { width, height, codes })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn codes(&self) -> &[u8] {
        &self.codes
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.codes[y * self.width + x]
    }
}

/// Responses of every filter at every pixel, `[filter][y * w + x]`.
///
/// `s(y, x) = Σ_{u,v} f[u][v] · I(y + r − u, x + r − v)` (true convolution,
/// kernel centred, edges replicated).
pub fn filter_responses(img: &Image, bank: &FilterBank) -> Result<Vec<Vec<f64>>, BsifError> {
    if img.channels() != 1 {
        return Err(BsifError::Channels(img.channels()));
    }
    let (w, h, win) = (img.width(), img.height(), bank.window);
    if w < win || h < win {
        return Err(BsifError::TooSmall {
            width: w,
            height: h,
            window: win,
        });
    }
    let r = (win / 2) as isize;
    let px = img.data();
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;

    // Gather the flipped neighbourhood once per pixel, then dot with each filter.
    let mut patch = vec![0.0; win * win];
    let mut out = vec![vec![0.0; w * h]; bank.filters.len()];
    for y in 0..h {
        for x in 0..w {
            for u in 0..win {
                let sy = clamp(y as isize + r - u as isize, h);
                for v in 0..win {
                    let sx = clamp(x as isize + r - v as isize, w);
                    patch[u * win + v] = px[sy * w + sx];
                }
            }
            for (fi, f) in bank.filters.iter().enumerate() {
                out[fi][y * w + x] = f.iter().zip(&patch).map(|(a, b)| a * b).sum();
            }
        }
    }
    Ok(out)
}

/// Bit `i` of a pixel's code is set iff filter `i` responds strictly above 0.
pub fn bsif_code(img: &Image, bank: &FilterBank) -> Result<CodeMap, BsifError> {
    let responses = filter_responses(img, bank)?;
    let n = img.width() * img.height();
    let mut codes = vec![0u8; n];
    for (bit, resp) in responses.iter().enumerate() {
        for (c, &s) in codes.iter_mut().zip(resp) {
            if s > 0.0 {
                *c |= 1 << bit;
            }
        }
    }
    Ok(CodeMap {
        width: img.width(),
        height: img.height(),
        codes,
    })
}

/// Start offsets and lengths of `GRID` near-equal segments; the last
/// segment absorbs the remainder.
fn grid_segments(n: usize) -> [(usize, usize); GRID] {
    let base = n / GRID;
    let mut seg = [(0, base); GRID];
    for (i, s) in seg.iter_mut().enumerate() {
        s.0 = i * base;
    }
    seg[GRID - 1].1 = n - (GRID - 1) * base;
    seg
}

/// Concatenated 256-bin histograms of the 4×4 block grid, blocks in
/// row-major order.
pub fn block_histogram(map: &CodeMap) -> Result<Vec<f64>, BsifError> {
    if map.width < GRID || map.height < GRID {
        return Err(BsifError::MapTooSmall {
            width: map.width,
            height: map.height,
        });
    }
    let xs = grid_segments(map.width);
    let ys = grid_segments(map.height);
    let mut hist = vec![0.0; HISTOGRAM_LEN];
    for (by, &(y0, yl)) in ys.iter().enumerate() {
        for (bx, &(x0, xl)) in xs.iter().enumerate() {
            let base = (by * GRID + bx) * N_BINS;
            for y in y0..y0 + yl {
                for x in x0..x0 + xl {
                    hist[base + map.get(x, y) as usize] += 1.0;
                }
            }
        }
    }
    Ok(hist)
}

fn check_bank_set(banks: &[FilterBank]) -> Result<(), BsifError> {
    let windows: Vec<usize> = banks.iter().map(|b| b.window).collect();
    if windows != WINDOWS {
        return Err(BsifError::BankSet(windows));
    }
    Ok(())
}

/// One histogram row per bank, in bank order.
pub fn bsif_rows(img: &Image, banks: &[FilterBank]) -> Result<Matrix, BsifError> {
    let mut data = Vec::with_capacity(banks.len() * HISTOGRAM_LEN);
    for bank in banks {
        data.extend(block_histogram(&bsif_code(img, bank)?)?);
    }
    Ok(Matrix::from_vec(banks.len(), HISTOGRAM_LEN, data).expect("rows are HISTOGRAM_LEN long"))
}

/// The 6×4096 shallow-feature matrix; `banks` must cover windows
/// 3, 5, …, 13 in ascending order.
pub fn multiscale_bsif(img: &Image, banks: &[FilterBank]) -> Result<Matrix, BsifError> {
    check_bank_set(banks)?;
    bsif_rows(img, banks)
}

/// The six fallback banks for one seed.
pub fn fallback_banks(seed: u64) -> Vec<FilterBank> {
    WINDOWS
        .iter()
        .map(|&w| generate_fallback_bank(w, seed).expect("windows are valid"))
        .collect()
}

/// Loads `bank_3.txt` … `bank_13.txt` from a directory.
pub fn load_bank_dir(dir: impl AsRef<Path>) -> Result<Vec<FilterBank>, BsifError> {
    let dir = dir.as_ref();
    let banks = WINDOWS
        .iter()
        .map(|w| load_filterbank(dir.join(format!("bank_{w}.txt"))))
        .collect::<Result<Vec<_>, _>>()?;
    check_bank_set(&banks)?;
    Ok(banks)
}
