//! Seeded synthetic data with planted family structure.
//!
//! Feature samples follow `X = S_f + O_v + N_s + E`: a family signal shared
//! by parent and child, a fixed per-view offset, a per-sample nuisance term
//! confined to a low-dimensional histogram-mode subspace, and independent
//! noise. Each channel draws its own signals and noise, so channels agree on
//! who is related but not on anything else.
//!
//! Face-like images combine a family texture with individual detail under a
//! strong random multiplicative illumination gradient.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use std::path::Path;

use crate::bsif::{multiscale_bsif, FilterBank};
use crate::deepfeat::write_feature_file;
use crate::imaging::{msr_enhance, Image, MsrConfig};
use crate::pipeline::{write_manifest, Channel, MemoryFeatures, PairManifest, PairRecord, PipelineError};
use crate::tensor::Matrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub rows: usize,
    pub cols: usize,
    pub signal: f64,
    pub view_offset: f64,
    pub nuisance: f64,
    pub nuisance_rank: usize,
    pub noise: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantedConfig {
    pub families: usize,
    pub seed: u64,
    pub relation: String,
    pub bsif: ChannelSpec,
    pub deep: ChannelSpec,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        Self {
            families: 64,
            seed: 7,
            relation: "PC".into(),
            bsif: ChannelSpec {
                rows: 6,
                cols: 64,
                signal: 1.0,
                view_offset: 1.0,
                nuisance: 1.0,
                nuisance_rank: 6,
                noise: 1.3,
            },
            deep: ChannelSpec {
                rows: 2,
                cols: 64,
                signal: 1.0,
                view_offset: 1.0,
                nuisance: 1.0,
                nuisance_rank: 6,
                noise: 0.85,
            },
        }
    }
}

/// A manifest of one kin pair per family plus in-memory features for both
/// channels. Sample ids are `f<NN>_p` and `f<NN>_c`.
#[derive(Clone, Debug)]
pub struct PlantedDataset {
    pub manifest: PairManifest,
    pub features: MemoryFeatures,
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n)
        .map(|_| scale * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
        .collect()
}

fn unit(mut v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= n);
    v
}

fn channel_samples(spec: &ChannelSpec, families: usize, rng: &mut ChaCha8Rng) -> Vec<[Matrix; 2]> {
    let (r, c) = (spec.rows, spec.cols);
    let basis: Vec<Vec<f64>> = (0..spec.nuisance_rank).map(|_| unit(gaussian(rng, c, 1.0))).collect();
    let offsets = [
        gaussian(rng, r * c, spec.view_offset),
        gaussian(rng, r * c, spec.view_offset),
    ];
    (0..families)
        .map(|_| {
            let signal = gaussian(rng, r * c, spec.signal);
            [0, 1].map(|view| {
                let mut x: Vec<f64> = signal
                    .iter()
                    .zip(&offsets[view])
                    .zip(gaussian(rng, r * c, spec.noise))
                    .map(|((s, o), e)| s + o + e)
                    .collect();
                // Nuisance: each row mixes the basis with its own weights.
                let scale = spec.nuisance * (c as f64).sqrt();
                for row in 0..r {
                    let w = gaussian(rng, spec.nuisance_rank, scale);
                    for (k, b) in basis.iter().enumerate() {
                        for col in 0..c {
                            x[row * c + col] += w[k] * b[col];
                        }
                    }
                }
                Matrix::from_vec(r, c, x).expect("r*c values")
            })
        })
        .collect()
}

fn family_ids(f: usize) -> (String, String, String) {
    let fam = format!("f{f:02}");
    (format!("{fam}_p"), format!("{fam}_c"), fam)
}

/// One kin pair per family; `field` maps a sample id to its manifest entry.
fn family_manifest(families: usize, relation: &str, field: impl Fn(&str) -> String) -> PairManifest {
    let records = (0..families)
        .map(|f| {
            let (p, c, fam) = family_ids(f);
            PairRecord {
                pair_id: format!("pair{f:02}"),
                relation: relation.to_string(),
                parent: field(&p),
                child: field(&c),
                family_id: fam,
                fold: None,
            }
        })
        .collect();
    PairManifest::new(records, ".").expect("generated manifest is valid")
}

pub fn planted_dataset(cfg: &PlantedConfig) -> PlantedDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let bsif = channel_samples(&cfg.bsif, cfg.families, &mut rng);
    let deep = channel_samples(&cfg.deep, cfg.families, &mut rng);
    let mut features = MemoryFeatures::new();
    for f in 0..cfg.families {
        let (p, c, _) = family_ids(f);
        for (channel, samples) in [(Channel::Bsif, &bsif), (Channel::Deep, &deep)] {
            features.insert(channel, p.clone(), samples[f][0].clone());
            features.insert(channel, c.clone(), samples[f][1].clone());
        }
    }
    PlantedDataset {
        manifest: family_manifest(cfg.families, &cfg.relation, str::to_string),
        features,
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Writes `manifest.csv` plus `<channel>/<id>.feat` for every feature.
pub fn write_dataset(data: &PlantedDataset, dir: &Path) -> Result<(), PipelineError> {
    for (channel, id, m) in data.features.entries() {
        let sub = dir.join(channel.name());
        std::fs::create_dir_all(&sub).map_err(io_err(&sub))?;
        write_feature_file(sub.join(format!("{id}.feat")), m, id).map_err(|e| PipelineError::Feature {
            sample: id.to_string(),
            reason: e.to_string(),
        })?;
    }
    write_manifest(dir.join("manifest.csv"), &data.manifest)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaceConfig {
    pub families: usize,
    pub size: usize,
    pub seed: u64,
    /// Amplitude of the texture shared within a family.
    pub family_contrast: f64,
    /// Amplitude of the per-image texture.
    pub individual_contrast: f64,
    /// Natural-log intensity range of the illumination ramp across the
    /// image; 0 disables the corruption.
    pub illumination: f64,
}

impl Default for FaceConfig {
    fn default() -> Self {
        Self {
            families: 64,
            size: 32,
            seed: 11,
            family_contrast: 0.25,
            individual_contrast: 0.35,
            illumination: 4.0,
        }
    }
}

struct Wave {
    kx: f64,
    ky: f64,
    phase: f64,
    amp: f64,
}

fn waves(rng: &mut ChaCha8Rng, n: usize, amp: f64) -> Vec<Wave> {
    (0..n)
        .map(|_| {
            let period = rng.random_range(3.0..10.0);
            let theta = rng.random_range(0.0..std::f64::consts::TAU);
            let k = std::f64::consts::TAU / period;
            Wave {
                kx: k * theta.cos(),
                ky: k * theta.sin(),
                phase: rng.random_range(0.0..std::f64::consts::TAU),
                amp: amp * rng.random_range(0.5..1.0),
            }
        })
        .collect()
}

fn texture(ws: &[Wave], x: f64, y: f64) -> f64 {
    ws.iter()
        .map(|w| w.amp * (w.kx * x + w.ky * y + w.phase).cos())
        .sum::<f64>()
        / (ws.len() as f64).sqrt()
}

/// One `(parent, child)` grey image pair per family, in family order.
pub fn illuminated_faces(cfg: &FaceConfig) -> Vec<(Image, Image)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.size;
    (0..cfg.families)
        .map(|_| {
            let family = waves(&mut rng, 6, cfg.family_contrast);
            let mut face = || {
                let own = waves(&mut rng, 6, cfg.individual_contrast);
                let theta = rng.random_range(0.0..std::f64::consts::TAU);
                let (dx, dy) = (theta.cos(), theta.sin());
                let g = cfg.illumination;
                let raw: Vec<f64> = (0..n * n)
                    .map(|i| {
                        let (x, y) = ((i % n) as f64, (i / n) as f64);
                        let reflect = (0.5 + texture(&family, x, y) + texture(&own, x, y)).clamp(0.05, 1.0);
                        let u = ((x / (n - 1) as f64) - 0.5) * dx + ((y / (n - 1) as f64) - 0.5) * dy;
                        reflect * (g * u).exp()
                    })
                    .collect();
                let peak = raw.iter().cloned().fold(0.0, f64::max);
                Image::new(n, n, 1, raw.into_iter().map(|v| v / peak).collect()).expect("valid image")
            };
            let parent = face();
            let child = face();
            (parent, child)
        })
        .collect()
}

/// BSIF features of [`illuminated_faces`], optionally after MSR, with the
/// same manifest layout as [`planted_dataset`].
pub fn face_dataset(
    cfg: &FaceConfig,
    msr: Option<&MsrConfig>,
    banks: &[FilterBank],
) -> Result<PlantedDataset, PipelineError> {
    let mut features = MemoryFeatures::new();
    for (f, (parent, child)) in illuminated_faces(cfg).iter().enumerate() {
        let (p, c, _) = family_ids(f);
        for (id, img) in [(p, parent), (c, child)] {
            let err = |e: &dyn std::fmt::Display| PipelineError::Feature {
                sample: id.clone(),
                reason: e.to_string(),
            };
            let img = match msr {
                Some(m) => msr_enhance(img, m).map_err(|e| err(&e))?,
                None => img.clone(),
            };
            let m = multiscale_bsif(&img, banks).map_err(|e| err(&e))?;
            features.insert(Channel::Bsif, id, m);
        }
    }
    Ok(PlantedDataset {
        manifest: family_manifest(cfg.families, "PC", str::to_string),
        features,
    })
}

/// Writes the face images as `images/<id>.png` and a manifest pointing at
/// them to `dir`.
pub fn write_faces(cfg: &FaceConfig, dir: &Path) -> Result<PairManifest, PipelineError> {
    let images = dir.join("images");
    std::fs::create_dir_all(&images).map_err(io_err(&images))?;
    for (f, (parent, child)) in illuminated_faces(cfg).iter().enumerate() {
        let (p, c, _) = family_ids(f);
        for (id, img) in [(p, parent), (c, child)] {
            let path = images.join(format!("{id}.png"));
            let buf = image::GrayImage::from_raw(img.width() as u32, img.height() as u32, img.to_bytes())
                .expect("one byte per pixel");
            buf.save(&path).map_err(|e| PipelineError::Io {
                path: path.display().to_string(),
                source: std::io::Error::other(e),
            })?;
        }
    }
    let manifest = family_manifest(cfg.families, "PC", |id| format!("images/{id}.png"));
    let manifest = PairManifest::new(manifest.records().to_vec(), dir).expect("valid");
    write_manifest(dir.join("manifest.csv"), &manifest)?;
    Ok(manifest)
}
