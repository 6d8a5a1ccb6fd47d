#![allow(dead_code)]

use kinverify::imaging::Image;
use kinverify::tensor::{Matrix, Tensor3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_vec(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

pub fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize, lo: f64, hi: f64) -> Image {
    Image::new(w, h, 1, uniform_vec(rng, w * h, lo, hi)).unwrap()
}

pub fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
    Matrix::from_vec(r, c, uniform_vec(rng, r * c, -1.0, 1.0)).unwrap()
}

pub fn random_tensor(rng: &mut ChaCha8Rng, dims: [usize; 3]) -> Tensor3 {
    Tensor3::from_vec(dims, uniform_vec(rng, dims.iter().product(), -1.0, 1.0)).unwrap()
}

/// `A Aᵀ + n·I` for a random square `A`.
pub fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
    let a = random_matrix(rng, n, n);
    let mut m = a.matmul(&a.transpose()).unwrap();
    for i in 0..n {
        m[(i, i)] += n as f64 * 0.1 + 0.1;
    }
    m.symmetrize();
    m
}

/// Symmetric matrix with entries in [-1, 1].
pub fn random_symmetric(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
    let mut m = random_matrix(rng, n, n);
    m.symmetrize();
    m
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Replicate-padded pixel lookup.
pub fn pixel(img: &Image, x: isize, y: isize) -> f64 {
    let xc = x.clamp(0, img.width() as isize - 1) as usize;
    let yc = y.clamp(0, img.height() as isize - 1) as usize;
    img.get(xc, yc, 0)
}

/// AUC as P(s⁺ > s⁻) + ½ P(s⁺ = s⁻) by explicit double loop.
pub fn pairwise_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, &si) in scores.iter().enumerate() {
        if !labels[i] {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if labels[j] {
                continue;
            }
            den += 1.0;
            if si > sj {
                num += 1.0;
            } else if si == sj {
                num += 0.5;
            }
        }
    }
    num / den
}

/// Dense BSIF reference: pad the image explicitly, convolve with each
/// flipped kernel, threshold at zero and pack the bits.
pub fn bsif_codes_oracle(img: &Image, filters: &[Vec<f64>], win: usize) -> Vec<u8> {
    let (w, h) = (img.width(), img.height());
    let r = win / 2;
    let pw = w + 2 * r;
    let ph = h + 2 * r;
    let mut padded = vec![0.0; pw * ph];
    for py in 0..ph {
        for px in 0..pw {
            padded[py * pw + px] = pixel(img, px as isize - r as isize, py as isize - r as isize);
        }
    }
    let mut codes = vec![0u8; w * h];
    for (bit, f) in filters.iter().enumerate() {
        // Flip the kernel, then correlate.
        let mut flipped = vec![0.0; win * win];
        for u in 0..win {
            for v in 0..win {
                flipped[(win - 1 - u) * win + (win - 1 - v)] = f[u * win + v];
            }
        }
        for y in 0..h {
            for x in 0..w {
                let mut s = 0.0;
                for a in 0..win {
                    for b in 0..win {
                        s += flipped[a * win + b] * padded[(y + a) * pw + (x + b)];
                    }
                }
                if s > 0.0 {
                    codes[y * w + x] |= 1 << bit;
                }
            }
        }
    }
    codes
}

/// `Σ_i u[r][i] · t[.., i, ..]` along `mode` by explicit loops.
pub fn mode_product_oracle(t: &Tensor3, u: &Matrix, mode: usize) -> Tensor3 {
    let [i1, i2, i3] = t.dims();
    let mut dims = [i1, i2, i3];
    dims[mode - 1] = u.rows();
    let mut out = Tensor3::zeros(dims);
    for a in 0..dims[0] {
        for b in 0..dims[1] {
            for c in 0..dims[2] {
                let mut s = 0.0;
                for k in 0..t.dims()[mode - 1] {
                    let v = match mode {
                        1 => u[(a, k)] * t.get(k, b, c),
                        2 => u[(b, k)] * t.get(a, k, c),
                        _ => u[(c, k)] * t.get(a, b, k),
                    };
                    s += v;
                }
                out.set(a, b, c, s);
            }
        }
    }
    out
}
