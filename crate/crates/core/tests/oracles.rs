//! Library routines checked against slow, direct reimplementations.

mod common;

use common::*;
use kinverify::bsif::{block_histogram, bsif_code, generate_fallback_bank, CodeMap, GRID, N_BINS, WINDOWS};
use kinverify::imaging::{gaussian_surround, msr_reflectance, resize, Image, MsrConfig};
use kinverify::scoring::{
    auc_pairwise, cosine_similarity, log_loss, lr_fit, roc_curve, LrModel, ScoreRecord, ScoreSet,
};
use kinverify::subspace::{txqda_project, wccn_apply, wccn_fit, TxqdaModel, WccnTransform};
use kinverify::tensor::{sym_generalized_eig, Matrix};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

fn bilinear_oracle(img: &Image, w: usize, h: usize) -> Vec<f64> {
    let mut out = Vec::new();
    for oy in 0..h {
        for ox in 0..w {
            let sx = ((ox as f64 + 0.5) * img.width() as f64 / w as f64 - 0.5)
                .max(0.0)
                .min((img.width() - 1) as f64);
            let sy = ((oy as f64 + 0.5) * img.height() as f64 / h as f64 - 0.5)
                .max(0.0)
                .min((img.height() - 1) as f64);
            let (x0, y0) = (sx.floor(), sy.floor());
            let (fx, fy) = (sx - x0, sy - y0);
            let at = |x: f64, y: f64| pixel(img, x as isize, y as isize);
            let v = at(x0, y0) * (1.0 - fx) * (1.0 - fy)
                + at(x0 + 1.0, y0) * fx * (1.0 - fy)
                + at(x0, y0 + 1.0) * (1.0 - fx) * fy
                + at(x0 + 1.0, y0 + 1.0) * fx * fy;
            out.push(v);
        }
    }
    out
}

#[test]
fn resize_ramp_matches_bilinear_oracle() {
    let ramp = Image::new(4, 4, 1, (0..16).map(|i| i as f64 / 15.0).collect()).unwrap();
    let got = resize(&ramp, 2, 2).unwrap();
    assert!(max_abs_diff(got.data(), &bilinear_oracle(&ramp, 2, 2)) < 1e-12);
    let mut r = rng(3);
    for _ in 0..10 {
        let (iw, ih) = (r.random_range(2..12), r.random_range(2..12));
        let img = random_image(&mut r, iw, ih, 0.0, 1.0);
        let (w, h) = (r.random_range(1..20), r.random_range(1..20));
        let got = resize(&img, w, h).unwrap();
        assert!(max_abs_diff(got.data(), &bilinear_oracle(&img, w, h)) < 1e-12);
    }
}

fn surround_oracle(img: &Image, sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil() as isize;
    let mut kernel = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            kernel.push((dy, dx, (-((dx * dx + dy * dy) as f64) / (2.0 * sigma * sigma)).exp()));
        }
    }
    let total: f64 = kernel.iter().map(|k| k.2).sum();
    let mut out = Vec::new();
    for y in 0..img.height() as isize {
        for x in 0..img.width() as isize {
            let s: f64 = kernel.iter().map(|&(dy, dx, k)| k * pixel(img, x + dx, y + dy)).sum();
            out.push(s / total);
        }
    }
    out
}

#[test]
fn surround_matches_dense_convolution() {
    let mut r = rng(5);
    let small = random_image(&mut r, 4, 4, 0.0, 1.0);
    let got = gaussian_surround(&small, 1.0).unwrap();
    assert!(max_abs_diff(got.data(), &surround_oracle(&small, 1.0)) < 1e-12);
    for sigma in [0.5, 1.3, 2.0, 4.0] {
        let img = random_image(&mut r, 9, 6, 0.0, 1.0);
        let got = gaussian_surround(&img, sigma).unwrap();
        assert!(
            max_abs_diff(got.data(), &surround_oracle(&img, sigma)) < 1e-12,
            "sigma {sigma}"
        );
    }
}

#[test]
fn msr_matches_composition_oracle() {
    let pattern = Image::new(
        8,
        8,
        1,
        (0..64).map(|i| 0.1 + 0.8 * (((i * 37) % 64) as f64 / 63.0)).collect(),
    )
    .unwrap();
    let eps = 1e-6;
    let cfg = MsrConfig::equal_weights(vec![2.0], eps);
    let got = msr_reflectance(&pattern, &cfg).unwrap();
    let blur = surround_oracle(&pattern, 2.0);
    let expect: Vec<f64> = pattern
        .data()
        .iter()
        .zip(&blur)
        .map(|(i, g)| (i + eps).ln() - (g + eps).ln())
        .collect();
    assert!(max_abs_diff(got.data(), &expect) < 1e-12);

    let cfg = MsrConfig {
        scales: vec![1.0, 2.5, 6.0],
        weights: vec![0.5, 0.3, 0.2],
        epsilon: eps,
    };
    let got = msr_reflectance(&pattern, &cfg).unwrap();
    let mut expect = vec![0.0; 64];
    for (&s, &w) in cfg.scales.iter().zip(&cfg.weights) {
        let blur = surround_oracle(&pattern, s);
        for (e, (i, g)) in expect.iter_mut().zip(pattern.data().iter().zip(&blur)) {
            *e += w * ((i + eps).ln() - (g + eps).ln());
        }
    }
    assert!(max_abs_diff(got.data(), &expect) < 1e-12);
}

#[test]
fn bsif_codes_match_dense_oracle() {
    let mut r = rng(1);
    let img = random_image(&mut r, 8, 8, 0.0, 1.0);
    let bank = generate_fallback_bank(3, 1).unwrap();
    let got = bsif_code(&img, &bank).unwrap();
    assert_eq!(got.codes(), bsif_codes_oracle(&img, bank.filters(), 3).as_slice());

    for &w in &WINDOWS {
        let bank = generate_fallback_bank(w, 9).unwrap();
        let img = random_image(&mut r, 16, 14, 0.0, 1.0);
        let got = bsif_code(&img, &bank).unwrap();
        assert_eq!(
            got.codes(),
            bsif_codes_oracle(&img, bank.filters(), w).as_slice(),
            "window {w}"
        );
    }
}

#[test]
fn histogram_matches_counting_oracle() {
    let mut r = rng(8);
    for (w, h) in [(8, 8), (13, 9), (224, 224), (5, 17)] {
        let codes: Vec<u8> = (0..w * h).map(|_| r.random()).collect();
        let map = CodeMap::new(w, h, codes.clone()).unwrap();
        let hist = block_histogram(&map).unwrap();
        let mut expect = vec![0.0; GRID * GRID * N_BINS];
        for y in 0..h {
            for x in 0..w {
                let bx = (x / (w / GRID)).min(GRID - 1);
                let by = (y / (h / GRID)).min(GRID - 1);
                expect[(by * GRID + bx) * N_BINS + codes[y * w + x] as usize] += 1.0;
            }
        }
        assert_eq!(hist, expect, "{w}x{h}");
    }
}

#[test]
fn mode_products_match_loop_oracle() {
    let mut r = rng(11);
    let t = random_tensor(&mut r, [3, 4, 2]);
    let u = random_matrix(&mut r, 5, 3);
    let got = t.mode_n_product(&u, 1).unwrap();
    let expect = mode_product_oracle(&t, &u, 1);
    assert_eq!(got.dims(), [5, 4, 2]);
    assert!(max_abs_diff(got.data(), expect.data()) <= 1e-12);
    for mode in 1..=3 {
        let dims = [r.random_range(1..5), r.random_range(1..5), r.random_range(1..5)];
        let t = random_tensor(&mut r, dims);
        let rows = r.random_range(1..6);
        let u = random_matrix(&mut r, rows, dims[mode - 1]);
        let got = t.mode_n_product(&u, mode).unwrap();
        assert!(max_abs_diff(got.data(), mode_product_oracle(&t, &u, mode).data()) <= 1e-12);
    }
}

#[test]
fn generalized_eig_residuals() {
    let mut r = rng(13);
    for _ in 0..10 {
        let a = random_symmetric(&mut r, 6);
        let b = random_spd(&mut r, 6);
        let e = sym_generalized_eig(&a, &b).unwrap();
        for i in 0..6 {
            let v = e.vector(i);
            let av = a.matvec(&v).unwrap();
            let bv = b.matvec(&v).unwrap();
            let res: Vec<f64> = av.iter().zip(&bv).map(|(x, y)| x - e.values[i] * y).collect();
            assert!(res.iter().all(|x| x.abs() < 1e-8));
            for j in 0..6 {
                let vbv: f64 = e.vector(j).iter().zip(&bv).map(|(x, y)| x * y).sum();
                let target = if i == j { 1.0 } else { 0.0 };
                assert!((vbv - target).abs() < 1e-8);
            }
        }
        assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
    }
}

#[test]
fn projection_matches_matrix_sandwich() {
    let mut r = rng(17);
    for _ in 0..5 {
        let u1 = random_matrix(&mut r, 2, 4);
        let u2 = random_matrix(&mut r, 3, 7);
        let b = {
            let mut m = random_matrix(&mut r, 6, 6);
            for i in 0..6 {
                for j in i + 1..6 {
                    m[(i, j)] = 0.0;
                }
                m[(i, i)] = m[(i, i)].abs() + 1.0;
            }
            m
        };
        let model = TxqdaModel::from_parts(
            u1.clone(),
            u2.clone(),
            Some(WccnTransform::from_factor(b.clone()).unwrap()),
        )
        .unwrap();
        let sample = random_matrix(&mut r, 4, 7);
        let mut y = Vec::new();
        for a in 0..2 {
            for c in 0..3 {
                let mut s = 0.0;
                for i in 0..4 {
                    for j in 0..7 {
                        s += u1[(a, i)] * sample[(i, j)] * u2[(c, j)];
                    }
                }
                y.push(s);
            }
        }
        // Bᵀ y.
        let expect: Vec<f64> = (0..6).map(|i| (0..6).map(|k| b[(k, i)] * y[k]).sum()).collect();
        let got = txqda_project(&sample, &model).unwrap();
        assert!(max_abs_diff(&got, &expect) < 1e-12);
    }
}

#[test]
fn wccn_whitens_three_classes() {
    let mut r = rng(19);
    let dim = 8;
    let mix = random_matrix(&mut r, dim, dim);
    let mut vectors = Vec::new();
    let mut labels = Vec::new();
    for class in 0..3 {
        let centre = uniform_vec(&mut r, dim, -5.0, 5.0);
        for _ in 0..200 {
            let z: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut r)).collect();
            let x = mix.matvec(&z).unwrap();
            vectors.push(x.iter().zip(&centre).map(|(a, b)| a + b).collect::<Vec<f64>>());
            labels.push(class);
        }
    }
    let t = wccn_fit(&vectors, &labels, 1e-6).unwrap();
    let whitened: Vec<Vec<f64>> = vectors.iter().map(|v| wccn_apply(v, &t).unwrap()).collect();
    let cov = kinverify::subspace::pooled_within_class_covariance(&whitened, &labels).unwrap();
    let mut dev = 0.0f64;
    for i in 0..dim {
        let row: f64 = (0..dim)
            .map(|j| (cov[(i, j)] - if i == j { 1.0 } else { 0.0 }).abs())
            .sum();
        dev = dev.max(row);
    }
    assert!(dev < 0.1, "‖C − I‖∞ = {dev}");
}

#[test]
fn cosine_direct_evaluation() {
    let c = cosine_similarity(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
    let expect = 32.0 / (14f64.sqrt() * 77f64.sqrt());
    assert!((c - expect).abs() < 1e-15);
    assert!((c - 0.974631846).abs() < 1e-9);
}

#[test]
fn auc_sweep_matches_pairwise_oracle() {
    let s = [0.9, 0.4, 0.8, 0.3];
    let l = [true, false, false, true];
    assert_eq!(pairwise_auc(&s, &l), 0.5);
    assert!((roc_curve(&s, &l).unwrap().auc - 0.5).abs() < 1e-12);
    let mut r = rng(23);
    for _ in 0..30 {
        let n = r.random_range(2..200);
        let mut labels: Vec<bool> = (0..n).map(|_| r.random()).collect();
        labels[0] = true;
        labels[1] = false;
        // Coarse scores force ties.
        let scores: Vec<f64> = (0..n).map(|_| (r.random_range(0..12) as f64) / 4.0).collect();
        let oracle = pairwise_auc(&scores, &labels);
        assert!((roc_curve(&scores, &labels).unwrap().auc - oracle).abs() <= 1e-12);
        assert!((auc_pairwise(&scores, &labels).unwrap() - oracle).abs() <= 1e-12);
    }
}

#[test]
fn auc_null_check() {
    let mut r = rng(29);
    let scores: Vec<f64> = (0..10_000).map(|_| r.random()).collect();
    let labels: Vec<bool> = (0..10_000).map(|_| r.random()).collect();
    let auc = roc_curve(&scores, &labels).unwrap().auc;
    assert!((0.47..=0.53).contains(&auc), "{auc}");
}

fn one_matcher_set(pairs: &[(f64, bool)]) -> ScoreSet {
    let records = pairs
        .iter()
        .enumerate()
        .map(|(i, &(s, l))| ScoreRecord {
            pair_id: format!("p{i}"),
            label: l,
            scores: vec![s],
        })
        .collect();
    ScoreSet::new(vec!["m".into()], records).unwrap()
}

fn penalized(set: &ScoreSet, a: f64, b: f64, l2: f64) -> f64 {
    let m = LrModel {
        a: vec![a],
        b,
        final_loss: 0.0,
        iterations: 0,
        converged: true,
        loss_history: vec![],
    };
    log_loss(&m, set).unwrap() + 0.5 * l2 * a * a
}

#[test]
fn lr_separable_case_beats_grid_search() {
    let set = one_matcher_set(&[(1.0, true), (1.0, true), (-1.0, false), (-1.0, false)]);
    let model = lr_fit(&set).unwrap();
    let p = |s: f64| 1.0 / (1.0 + (model.a[0] * s + model.b).exp());
    assert!(p(1.0) > 0.99 && p(-1.0) < 0.01);
    let mut grid_best = f64::INFINITY;
    for i in 0..=200 {
        let a = -30.0 + 0.15 * i as f64;
        for j in 0..=40 {
            let b = -2.0 + 0.1 * j as f64;
            grid_best = grid_best.min(penalized(&set, a, b, 1e-6));
        }
    }
    assert!(
        model.final_loss <= grid_best + 1e-12,
        "{} vs {grid_best}",
        model.final_loss
    );
}

#[test]
fn lr_overlapping_case_matches_grid_minimum() {
    let mut r = rng(31);
    let pairs: Vec<(f64, bool)> = (0..400)
        .map(|i| {
            let kin = i % 2 == 0;
            let z: f64 = StandardNormal.sample(&mut r);
            (z + if kin { 1.0 } else { 0.0 }, kin)
        })
        .collect();
    let set = one_matcher_set(&pairs);
    let model = lr_fit(&set).unwrap();
    assert!(model.converged);
    let (mut best, mut arg) = (f64::INFINITY, (0.0, 0.0));
    for i in 0..=400 {
        let a = -3.0 + 0.01 * i as f64;
        for j in 0..=400 {
            let b = -2.0 + 0.01 * j as f64;
            let v = penalized(&set, a, b, 1e-6);
            if v < best {
                best = v;
                arg = (a, b);
            }
        }
    }
    assert!(model.final_loss <= best + 1e-12);
    assert!((model.a[0] - arg.0).abs() <= 0.01 && (model.b - arg.1).abs() <= 0.01);
}

#[test]
fn lr_noise_matcher_gets_small_weight() {
    let mut r = rng(37);
    let records: Vec<ScoreRecord> = (0..1000)
        .map(|i| {
            let kin = i % 2 == 0;
            let z: f64 = StandardNormal.sample(&mut r);
            let noise: f64 = StandardNormal.sample(&mut r);
            ScoreRecord {
                pair_id: format!("p{i}"),
                label: kin,
                scores: vec![z + if kin { 1.5 } else { 0.0 }, noise],
            }
        })
        .collect();
    let set = ScoreSet::new(vec!["signal".into(), "noise".into()], records).unwrap();
    let model = lr_fit(&set).unwrap();
    assert!(model.a[1].abs() < model.a[0].abs() / 10.0, "{:?}", model.a);
}

#[test]
fn diagonal_pair_eigenvalues() {
    let a = Matrix::diag(&[2.0, 2.0]);
    let b = Matrix::diag(&[1.0, 2.0]);
    let e = sym_generalized_eig(&a, &b).unwrap();
    assert!(max_abs_diff(&e.values, &[2.0, 1.0]) < 1e-12);
}
