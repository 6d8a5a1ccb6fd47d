//! Invariants checked over generated inputs.

mod common;

use common::*;
use kinverify::bsif::{block_histogram, bsif_code, filter_responses, generate_fallback_bank, FilterBank, WINDOWS};
use kinverify::deepfeat::{decode, encode, l2_normalize_rows};
use kinverify::imaging::{gaussian_surround, msr_enhance, msr_reflectance, resize, Image, MsrConfig};
use kinverify::pipeline::{
    generate_negatives, kfold_split, load_manifest, write_manifest, PairManifest, PairRecord, RELATIONS,
};
use kinverify::scoring::{
    auc_pairwise, cosine_similarity, lr_fit, lr_fuse, lr_linear, read_score_csv, roc_curve, write_score_csv,
    ScoreRecord, ScoreSet,
};
use kinverify::subspace::{decode_model, encode_model, txqda_project, wccn_fit, TxqdaModel};
use kinverify::tensor::{Matrix, Tensor3};
use proptest::prelude::*;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, BTreeSet};

fn labelled(r: &mut ChaCha8Rng, n: usize, levels: u32) -> (Vec<f64>, Vec<bool>) {
    let mut labels: Vec<bool> = (0..n).map(|_| r.random_bool(0.5)).collect();
    labels[0] = true;
    labels[1] = false;
    let scores = labels
        .iter()
        .map(|&l| r.random_range(0..levels) as f64 * 0.25 + if l { 0.5 } else { 0.0 })
        .collect();
    (scores, labels)
}

fn bits_equal(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn cosine_ignores_positive_scale(seed in any::<u64>(), n in 2usize..64, k1 in 1e-3f64..1e3, k2 in 1e-3f64..1e3) {
        let mut r = rng(seed);
        let a = uniform_vec(&mut r, n, -1.0, 1.0);
        let b = uniform_vec(&mut r, n, -1.0, 1.0);
        let c = cosine_similarity(&a, &b).unwrap();
        let sa: Vec<f64> = a.iter().map(|x| x * k1).collect();
        let sb: Vec<f64> = b.iter().map(|x| x * k2).collect();
        prop_assert!((cosine_similarity(&sa, &sb).unwrap() - c).abs() < 1e-12);
        prop_assert!((cosine_similarity(&b, &a).unwrap() - c).abs() < 1e-15);
        prop_assert!((-1.0..=1.0).contains(&c));
    }

    #[test]
    fn auc_sweep_matches_pairwise_with_ties(seed in any::<u64>(), n in 2usize..80, levels in 1u32..6) {
        let mut r = rng(seed);
        let (s, l) = labelled(&mut r, n, levels);
        let roc = roc_curve(&s, &l).unwrap();
        prop_assert!((roc.auc - pairwise_auc(&s, &l)).abs() < 1e-12);
        prop_assert!((auc_pairwise(&s, &l).unwrap() - roc.auc).abs() < 1e-12);
        let neg: Vec<f64> = s.iter().map(|x| -x).collect();
        prop_assert!((roc_curve(&neg, &l).unwrap().auc - (1.0 - roc.auc)).abs() < 1e-12);
        prop_assert!(roc.points.windows(2).all(|w| w[0].fpr <= w[1].fpr && w[0].tpr <= w[1].tpr));
        prop_assert!((0.0..=1.0).contains(&roc.eer));
    }

    #[test]
    fn lr_loss_never_increases(seed in any::<u64>(), n in 8usize..60, m in 1usize..4) {
        let mut r = rng(seed);
        let records: Vec<ScoreRecord> = (0..n)
            .map(|i| {
                let label = i % 2 == 0 || r.random_bool(0.3);
                let shift = if label { 0.4 } else { 0.0 };
                ScoreRecord {
                    pair_id: format!("p{i}"),
                    label,
                    scores: (0..m).map(|_| r.random_range(-1.0..1.0) + shift).collect(),
                }
            })
            .collect();
        let set = ScoreSet::new((0..m).map(|k| format!("m{k}")).collect(), records).unwrap();
        let model = lr_fit(&set).unwrap();
        prop_assert!(model.loss_history.windows(2).all(|w| w[1] <= w[0]));
        prop_assert_eq!(*model.loss_history.last().unwrap(), model.final_loss);

        // p is a decreasing function of the linear score.
        let rows: Vec<&[f64]> = set.records().iter().map(|r| r.scores.as_slice()).collect();
        let p: Vec<f64> = rows.iter().map(|s| lr_fuse(&model, s).unwrap()).collect();
        let z: Vec<f64> = rows.iter().map(|s| lr_linear(&model, s).unwrap()).collect();
        let labels = set.labels();
        if z.iter().all(|v| v.abs() < 30.0) {
            let sum = roc_curve(&p, &labels).unwrap().auc + roc_curve(&z, &labels).unwrap().auc;
            prop_assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn feature_files_round_trip(seed in any::<u64>(), rows in 1usize..6, cols in 1usize..3000, id in "[A-Za-z0-9_.-]{0,40}") {
        let mut r = rng(seed);
        let data: Vec<f64> = (0..rows * cols).map(|_| r.random_range(-1e6f32..1e6) as f64).collect();
        let m = Matrix::from_vec(rows, cols, data).unwrap();
        let (h, back) = decode(&encode(&m, &id).unwrap()).unwrap();
        prop_assert_eq!((h.rows, h.cols), (rows, cols));
        prop_assert_eq!(h.sample_id, id);
        prop_assert!(bits_equal(back.data(), m.data()));
    }

    #[test]
    fn filter_bank_text_round_trips(seed in any::<u64>(), wi in 0usize..6) {
        let w = WINDOWS[wi];
        let mut r = rng(seed);
        let filters: Vec<Vec<f64>> = (0..8)
            .map(|_| {
                let f = uniform_vec(&mut r, w * w, -10.0, 10.0);
                let mean = f.iter().sum::<f64>() / f.len() as f64;
                f.iter().map(|v| v - mean).collect()
            })
            .collect();
        let bank = FilterBank::new(w, filters).unwrap();
        let back = FilterBank::parse(&bank.to_text()).unwrap();
        prop_assert_eq!(back.window(), w);
        for (a, b) in bank.filters().iter().zip(back.filters()) {
            prop_assert!(bits_equal(a, b));
        }
    }

    #[test]
    fn manifests_round_trip(seed in any::<u64>(), families in 1usize..20) {
        let mut r = rng(seed);
        let mut records = Vec::new();
        for f in 0..families {
            for k in 0..r.random_range(1..4) {
                records.push(PairRecord {
                    pair_id: format!("pair{f}_{k}"),
                    relation: RELATIONS[r.random_range(0..RELATIONS.len())].to_string(),
                    parent: format!("img/f{f}p{k}.png"),
                    child: format!("img/f{f}c{k}.png"),
                    family_id: format!("F{f}"),
                    fold: None,
                });
            }
        }
        let dir = tempfile::tempdir().unwrap();
        let m = PairManifest::new(records, dir.path()).unwrap();
        let path = dir.path().join("manifest.csv");
        write_manifest(&path, &m).unwrap();
        let back = load_manifest(&path, false).unwrap();
        prop_assert_eq!(back.records(), m.records());
    }

    #[test]
    fn model_archives_round_trip(seed in any::<u64>(), i1 in 2usize..5, i2 in 2usize..12, whiten in any::<bool>()) {
        let mut r = rng(seed);
        let d1 = r.random_range(1..=i1);
        let d2 = r.random_range(1..i2);
        // Trained models hold file-precision values.
        let u1 = random_matrix(&mut r, d1, i1).to_f32_precision();
        let u2 = random_matrix(&mut r, d2, i2).to_f32_precision();
        let wccn = whiten.then(|| {
            let samples: Vec<Vec<f64>> = (0..4 * d1 * d2 + 8).map(|_| uniform_vec(&mut r, d1 * d2, -1.0, 1.0)).collect();
            let labels: Vec<usize> = (0..samples.len()).map(|i| i % 3).collect();
            wccn_fit(&samples, &labels, 1e-3).unwrap()
        });
        let model = TxqdaModel::from_parts(u1, u2, wccn).unwrap();
        let bytes = encode_model(&model).unwrap();
        let back = decode_model(&bytes).unwrap();
        prop_assert_eq!(encode_model(&back).unwrap(), bytes);
        prop_assert!(bits_equal(back.u1.data(), model.u1.data()));
        prop_assert!(bits_equal(back.u2.data(), model.u2.data()));
        if let (Some(a), Some(b)) = (&back.wccn, &model.wccn) {
            prop_assert!(bits_equal(a.factor().data(), b.factor().data()));
        }
    }

    #[test]
    fn score_csvs_round_trip(seed in any::<u64>(), n in 1usize..40, m in 1usize..4) {
        let mut r = rng(seed);
        let records: Vec<ScoreRecord> = (0..n)
            .map(|i| ScoreRecord {
                pair_id: format!("p{i}"),
                label: r.random_bool(0.5),
                scores: (0..m).map(|_| r.random_range(-1e3..1e3) * 10f64.powi(r.random_range(-20..20))).collect(),
            })
            .collect();
        let set = ScoreSet::new((0..m).map(|k| format!("m{k}")).collect(), records).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        write_score_csv(&path, &set).unwrap();
        let back = read_score_csv(&path).unwrap();
        prop_assert_eq!(back.matchers(), set.matchers());
        for (a, b) in back.records().iter().zip(set.records()) {
            prop_assert_eq!(&a.pair_id, &b.pair_id);
            prop_assert_eq!(a.label, b.label);
            prop_assert!(bits_equal(&a.scores, &b.scores));
        }
    }

    #[test]
    fn l2_normalization_is_idempotent(seed in any::<u64>(), rows in 1usize..5, cols in 1usize..200) {
        let mut r = rng(seed);
        let m = random_matrix(&mut r, rows, cols);
        let once = l2_normalize_rows(&m);
        let twice = l2_normalize_rows(&once);
        prop_assert!(max_abs_diff(once.data(), twice.data()) < 1e-12);
        for k in 0..rows {
            let n: f64 = once.row(k).iter().map(|x| x * x).sum::<f64>().sqrt();
            prop_assert!((n - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn unfold_then_fold_is_exact(seed in any::<u64>(), a in 1usize..6, b in 1usize..6, c in 1usize..6) {
        let mut r = rng(seed);
        let t = random_tensor(&mut r, [a, b, c]);
        for mode in 1..=3 {
            let back = Tensor3::fold(&t.unfold(mode).unwrap(), mode, [a, b, c]).unwrap();
            prop_assert!(bits_equal(back.data(), t.data()));
        }
    }

    #[test]
    fn mode_products_commute(seed in any::<u64>(), a in 1usize..6, b in 1usize..6, c in 1usize..6, p in 1usize..5, q in 1usize..5) {
        let mut r = rng(seed);
        let t = random_tensor(&mut r, [a, b, c]);
        let u1 = random_matrix(&mut r, p, a);
        let u2 = random_matrix(&mut r, q, b);
        let x = t.mode_n_product(&u1, 1).unwrap().mode_n_product(&u2, 2).unwrap();
        let y = t.mode_n_product(&u2, 2).unwrap().mode_n_product(&u1, 1).unwrap();
        prop_assert!(max_abs_diff(x.data(), y.data()) < 1e-10);
        for mode in 1..=3 {
            let n = [a, b, c][mode - 1];
            let id = t.mode_n_product(&Matrix::identity(n), mode).unwrap();
            prop_assert!(bits_equal(id.data(), t.data()));
        }
    }

    #[test]
    fn identity_projection_is_flattening(seed in any::<u64>(), i1 in 1usize..5, i2 in 2usize..10) {
        let mut r = rng(seed);
        let m = random_matrix(&mut r, i1, i2);
        let model = TxqdaModel::identity(i1, i2, i1, i2).unwrap();
        prop_assert!(bits_equal(&txqda_project(&m, &model).unwrap(), m.data()));
    }

    #[test]
    fn msr_ignores_global_gain(seed in any::<u64>(), w in 8usize..24, h in 8usize..24, k in 0.5f64..2.0) {
        let mut r = rng(seed);
        let img = random_image(&mut r, w, h, 0.1, 1.0);
        let cfg = MsrConfig::equal_weights(vec![1.0, 3.0, 6.0], 1e-9);
        let a = msr_reflectance(&img, &cfg).unwrap();
        let b = msr_reflectance(&img.scaled(k), &cfg).unwrap();
        prop_assert!(max_abs_diff(a.data(), b.data()) < 1e-5);
    }

    #[test]
    fn msr_output_is_normalized(seed in any::<u64>(), w in 2usize..20, h in 2usize..20) {
        let mut r = rng(seed);
        let img = random_image(&mut r, w, h, 0.0, 1.0);
        let out = msr_enhance(&img, &MsrConfig::equal_weights(vec![2.0, 5.0], 1e-6)).unwrap();
        prop_assert!(out.data().iter().all(|v| v.is_finite() && (0.0..=1.0).contains(v)));
    }

    #[test]
    fn resize_keeps_constants_and_identity(seed in any::<u64>(), w in 1usize..20, h in 1usize..20, tw in 1usize..30, th in 1usize..30, c in 0.0f64..1.0) {
        let flat = Image::filled(w, h, 1, c).unwrap();
        let out = resize(&flat, tw, th).unwrap();
        prop_assert!(out.data().iter().all(|v| (v - c).abs() < 1e-12));
        let mut r = rng(seed);
        let img = random_image(&mut r, w, h, 0.0, 1.0);
        prop_assert!(bits_equal(resize(&img, w, h).unwrap().data(), img.data()));
    }

    #[test]
    fn surround_keeps_constants(w in 1usize..20, h in 1usize..20, sigma in 0.3f64..8.0, c in 0.0f64..1.0) {
        let out = gaussian_surround(&Image::filled(w, h, 1, c).unwrap(), sigma).unwrap();
        prop_assert!(out.data().iter().all(|v| (v - c).abs() < 1e-12));
    }

    #[test]
    fn histograms_count_every_pixel(seed in any::<u64>(), w in 13usize..40, h in 13usize..40, wi in 0usize..6) {
        let mut r = rng(seed);
        let img = random_image(&mut r, w, h, 0.0, 1.0);
        let bank = generate_fallback_bank(WINDOWS[wi], seed % 7).unwrap();
        let hist = block_histogram(&bsif_code(&img, &bank).unwrap()).unwrap();
        prop_assert_eq!(hist.iter().sum::<f64>(), (w * h) as f64);
    }

    #[test]
    fn filter_responses_ignore_constant_offset(seed in any::<u64>(), w in 13usize..24, h in 13usize..24, wi in 0usize..6, c in -0.5f64..0.5) {
        let mut r = rng(seed);
        let img = random_image(&mut r, w, h, 0.2, 0.8);
        let shifted = Image::new(w, h, 1, img.data().iter().map(|v| v + c).collect()).unwrap();
        let bank = generate_fallback_bank(WINDOWS[wi], 3).unwrap();
        let a = filter_responses(&img, &bank).unwrap();
        let b = filter_responses(&shifted, &bank).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!(max_abs_diff(x, y) < 1e-9);
        }
    }

    #[test]
    fn folds_are_disjoint_and_balanced(seed in any::<u64>(), sizes in prop::collection::vec(1usize..4, 6..40), k in 2usize..6) {
        prop_assume!(sizes.len() >= k);
        let mut records = Vec::new();
        for (f, &n) in sizes.iter().enumerate() {
            for j in 0..n {
                records.push(PairRecord {
                    pair_id: format!("p{f}_{j}"),
                    relation: "FS".into(),
                    parent: format!("f{f}p{j}.png"),
                    child: format!("f{f}c{j}.png"),
                    family_id: format!("F{f}"),
                    fold: None,
                });
            }
        }
        let m = PairManifest::new(records, ".").unwrap();
        let a = kfold_split(&m, k, seed).unwrap();
        let mut by_family: BTreeMap<&str, BTreeSet<usize>> = BTreeMap::new();
        for (rec, &f) in m.records().iter().zip(&a.fold_of) {
            by_family.entry(&rec.family_id).or_default().insert(f);
        }
        prop_assert!(by_family.values().all(|s| s.len() == 1));
        let fs = a.fold_sizes();
        prop_assert!(fs.iter().max().unwrap() - fs.iter().min().unwrap() <= 3);
        prop_assert_eq!(fs.iter().sum::<usize>(), m.len());

        if let Ok(pairs) = generate_negatives(&m, &a, seed) {
            for fold in 0..k {
                let pos = pairs.iter().filter(|p| p.fold == fold && p.label).count();
                let neg = pairs.iter().filter(|p| p.fold == fold && !p.label).count();
                prop_assert_eq!(pos, neg);
            }
        }
    }
}
