use std::collections::{BTreeSet, HashMap};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::manifest::{sample_id, PairManifest};
use super::PipelineError;
use crate::bsif::{multiscale_bsif, FilterBank};
use crate::deepfeat::{read_matrix_file, write_feature_file, FeatureFileError};
use crate::imaging::{load_image, msr_enhance, resize, to_grayscale, Image, MsrConfig};
use crate::tensor::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Bsif,
    Deep,
}

impl Channel {
    pub fn name(self) -> &'static str {
        match self {
            Channel::Bsif => "bsif",
            Channel::Deep => "deep",
        }
    }
}

impl std::str::FromStr for Channel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bsif" => Ok(Channel::Bsif),
            "deep" => Ok(Channel::Deep),
            _ => Err(format!("unknown channel {s:?} (expected bsif or deep)")),
        }
    }
}

/// Source of per-sample feature matrices. `field` is the manifest's parent
/// or child entry.
pub trait FeatureProvider {
    fn feature(&self, channel: Channel, field: &str) -> Result<Matrix, PipelineError>;
}

/// Parses `RxC` (e.g. `2x4096`) or `any`.
pub fn parse_shape(text: &str) -> Result<Option<(usize, usize)>, String> {
    if text == "any" {
        return Ok(None);
    }
    let (r, c) = text
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("shape {text:?} is not of the form RxC or any"))?;
    let r: usize = r.parse().map_err(|_| format!("bad row count in {text:?}"))?;
    let c: usize = c.parse().map_err(|_| format!("bad column count in {text:?}"))?;
    if r == 0 || c == 0 {
        return Err(format!("shape {text:?} has a zero dimension"));
    }
    Ok(Some((r, c)))
}

/// Features held in memory, keyed by sample id.
#[derive(Clone, Debug, Default)]
pub struct MemoryFeatures {
    map: HashMap<(Channel, String), Matrix>,
}

impl MemoryFeatures {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, channel: Channel, id: impl Into<String>, m: Matrix) {
        self.map.insert((channel, id.into()), m);
    }

    pub fn get(&self, channel: Channel, id: &str) -> Option<&Matrix> {
        self.map.get(&(channel, id.to_string()))
    }

    /// Entries sorted by channel, then sample id.
    pub fn entries(&self) -> Vec<(Channel, &str, &Matrix)> {
        let mut v: Vec<_> = self.map.iter().map(|((c, id), m)| (*c, id.as_str(), m)).collect();
        v.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        v
    }
}

impl FeatureProvider for MemoryFeatures {
    fn feature(&self, channel: Channel, field: &str) -> Result<Matrix, PipelineError> {
        let id = sample_id(field);
        self.map
            .get(&(channel, id.clone()))
            .cloned()
            .ok_or_else(|| PipelineError::Feature {
                sample: id,
                reason: format!("no {} feature in memory", channel.name()),
            })
    }
}

/// Image preprocessing applied before BSIF extraction: optional resize and
/// optional per-channel MSR (resize first unless `msr_before_resize`), then
/// luma conversion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtractSettings {
    pub msr: Option<MsrConfig>,
    pub resize: Option<(usize, usize)>,
    #[serde(default)]
    pub msr_before_resize: bool,
    /// Description of the filter banks (directory or fallback seed).
    pub banks: String,
}

#[derive(Clone, Debug)]
pub struct ImageExtractor {
    banks: Vec<FilterBank>,
    settings: ExtractSettings,
    cache: Option<PathBuf>,
}

fn feature_err(sample: &str, reason: impl ToString) -> PipelineError {
    PipelineError::Feature {
        sample: sample.to_string(),
        reason: reason.to_string(),
    }
}

/// FNV-1a, used only to name cache directories.
fn fingerprint(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
    })
}

impl ImageExtractor {
    /// `cache`, when given, is a root directory; extracted matrices go to a
    /// subdirectory named after the settings and bank contents.
    pub fn new(banks: Vec<FilterBank>, settings: ExtractSettings, cache: Option<PathBuf>) -> Self {
        let cache = cache.map(|root| {
            let mut key = serde_json::to_vec(&settings).expect("settings serialize");
            for b in &banks {
                key.extend_from_slice(b.to_text().as_bytes());
            }
            root.join(format!("bsif-{:016x}", fingerprint(&key)))
        });
        Self { banks, settings, cache }
    }

    pub fn settings(&self) -> &ExtractSettings {
        &self.settings
    }

    pub fn cache_dir(&self) -> Option<&Path> {
        self.cache.as_deref()
    }

    /// Runs the preprocessing chain and multi-scale BSIF on one image file.
    pub fn extract(&self, path: &Path) -> Result<Matrix, PipelineError> {
        let id = sample_id(&path.to_string_lossy());
        if let Some(dir) = &self.cache {
            let cached = dir.join(format!("{id}.feat"));
            if cached.is_file() {
                return read_matrix_file(&cached)
                    .map(|(_, m)| m)
                    .map_err(|e| feature_err(&id, e));
            }
        }
        let mut img = load_image(path).map_err(|e| feature_err(&id, e))?;
        let s = &self.settings;
        let enhance = |img: Image| match &s.msr {
            Some(msr) => msr_enhance(&img, msr).map_err(|e| feature_err(&id, e)),
            None => Ok(img),
        };
        let scale = |img: Image| match s.resize {
            Some((w, h)) => resize(&img, w, h).map_err(|e| feature_err(&id, e)),
            None => Ok(img),
        };
        img = if s.msr_before_resize {
            scale(enhance(img)?)?
        } else {
            enhance(scale(img)?)?
        };
        let grey = to_grayscale(&img);
        let m = multiscale_bsif(&grey, &self.banks).map_err(|e| feature_err(&id, e))?;
        if let Some(dir) = &self.cache {
            std::fs::create_dir_all(dir).map_err(|source| PipelineError::Io {
                path: dir.display().to_string(),
                source,
            })?;
            write_feature_file(dir.join(format!("{id}.feat")), &m, &id).map_err(|e| feature_err(&id, e))?;
        }
        Ok(m)
    }
}

#[derive(Clone, Debug)]
pub enum BsifSource {
    /// Precomputed `<id>.feat` files.
    Dir(PathBuf),
    /// Extraction from the manifest's image paths.
    Extract(ImageExtractor),
}

/// Features on disk: BSIF matrices from a directory or extracted from
/// images, deep features from `<deep_dir>/<id>.feat`.
#[derive(Clone, Debug)]
pub struct DiskFeatures {
    pub bsif: Option<BsifSource>,
    pub deep_dir: Option<PathBuf>,
    pub bsif_shape: Option<(usize, usize)>,
    pub deep_shape: Option<(usize, usize)>,
    /// Directory that relative image paths resolve against.
    pub base_dir: PathBuf,
}

fn read_checked(path: &Path, id: &str, shape: Option<(usize, usize)>, what: &str) -> Result<Matrix, PipelineError> {
    let (_, m) = read_matrix_file(path).map_err(|e| match e {
        FeatureFileError::Io { .. } => {
            feature_err(id, format!("cannot read {what} feature file {}: {e}", path.display()))
        }
        other => feature_err(id, other),
    })?;
    check_shape(&m, id, shape, what)?;
    Ok(m)
}

fn check_shape(m: &Matrix, id: &str, shape: Option<(usize, usize)>, what: &str) -> Result<(), PipelineError> {
    match shape {
        Some((r, c)) if m.shape() != (r, c) => Err(feature_err(
            id,
            format!("expected {r}×{c} {what} feature, got {}×{}", m.rows(), m.cols()),
        )),
        _ => Ok(()),
    }
}

impl FeatureProvider for DiskFeatures {
    fn feature(&self, channel: Channel, field: &str) -> Result<Matrix, PipelineError> {
        let id = sample_id(field);
        match channel {
            Channel::Deep => {
                let dir = self.deep_dir.as_ref().ok_or_else(|| {
                    PipelineError::Config("deep features requested but no deep directory given".into())
                })?;
                read_checked(&dir.join(format!("{id}.feat")), &id, self.deep_shape, "deep")
            }
            Channel::Bsif => match &self.bsif {
                None => Err(PipelineError::Config(
                    "BSIF features requested but no BSIF source given".into(),
                )),
                Some(BsifSource::Dir(dir)) => {
                    read_checked(&dir.join(format!("{id}.feat")), &id, self.bsif_shape, "bsif")
                }
                Some(BsifSource::Extract(x)) => {
                    let p = Path::new(field);
                    let path = if p.is_absolute() {
                        p.to_path_buf()
                    } else {
                        self.base_dir.join(p)
                    };
                    let m = x.extract(&path)?;
                    check_shape(&m, &id, self.bsif_shape, "bsif")?;
                    Ok(m)
                }
            },
        }
    }
}

/// Extracts BSIF features for every distinct manifest sample into
/// `<out>/<id>.feat`; returns the number of files written.
pub fn extract_to_dir(manifest: &PairManifest, extractor: &ImageExtractor, out: &Path) -> Result<usize, PipelineError> {
    std::fs::create_dir_all(out).map_err(|source| PipelineError::Io {
        path: out.display().to_string(),
        source,
    })?;
    let fields: BTreeSet<&str> = manifest
        .records()
        .iter()
        .flat_map(|r| [r.parent.as_str(), r.child.as_str()])
        .collect();
    for field in &fields {
        let id = sample_id(field);
        let m = extractor.extract(&manifest.resolve(field))?;
        write_feature_file(out.join(format!("{id}.feat")), &m, &id).map_err(|e| feature_err(&id, e))?;
    }
    Ok(fields.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bsif::fallback_banks;
    use crate::imaging::Image;

    #[test]
    fn shapes_parse() {
        assert_eq!(parse_shape("2x4096"), Ok(Some((2, 4096))));
        assert_eq!(parse_shape("any"), Ok(None));
        assert!(parse_shape("2x").is_err());
        assert!(parse_shape("0x3").is_err());
    }

    #[test]
    fn memory_provider_uses_sample_ids() {
        let mut mem = MemoryFeatures::new();
        mem.insert(Channel::Deep, "a", Matrix::identity(2));
        assert_eq!(mem.feature(Channel::Deep, "imgs/a.png").unwrap(), Matrix::identity(2));
        let err = mem.feature(Channel::Bsif, "a").unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn disk_provider_checks_shapes() {
        let dir = tempfile::tempdir().unwrap();
        write_feature_file(dir.path().join("s1.feat"), &Matrix::zeros(2, 8), "s1").unwrap();
        let mut disk = DiskFeatures {
            bsif: None,
            deep_dir: Some(dir.path().to_path_buf()),
            bsif_shape: None,
            deep_shape: Some((2, 4096)),
            base_dir: PathBuf::new(),
        };
        let err = disk.feature(Channel::Deep, "s1").unwrap_err();
        assert!(err.to_string().contains("expected 2×4096 deep feature"), "{err}");
        disk.deep_shape = None;
        assert_eq!(disk.feature(Channel::Deep, "s1").unwrap().shape(), (2, 8));
        assert!(disk.feature(Channel::Deep, "missing").is_err());
        assert_eq!(disk.feature(Channel::Bsif, "s1").unwrap_err().exit_code(), 2);
    }

    #[test]
    fn extraction_caches_results() {
        let dir = tempfile::tempdir().unwrap();
        let img = Image::from_fn(24, 24, |x, y| ((x * 7 + y * 3) % 11) as f64 / 10.0).unwrap();
        let png = dir.path().join("face.png");
        image::GrayImage::from_raw(24, 24, img.to_bytes())
            .unwrap()
            .save(&png)
            .unwrap();
        let settings = ExtractSettings {
            msr: Some(MsrConfig::equal_weights(vec![2.0, 4.0, 8.0], 1e-6)),
            resize: None,
            msr_before_resize: false,
            banks: "fallback:1".into(),
        };
        let x = ImageExtractor::new(fallback_banks(1), settings, Some(dir.path().join("cache")));
        let m = x.extract(&png).unwrap();
        assert_eq!(m.shape(), (6, 4096));
        assert!(x.cache_dir().unwrap().join("face.feat").is_file());
        let again = x.extract(&png).unwrap();
        assert_eq!(again, m);
    }

    #[test]
    fn msr_resize_order_is_configurable() {
        let dir = tempfile::tempdir().unwrap();
        let img = Image::from_fn(40, 40, |x, y| 0.1 + ((x * 5 + y * 9) % 13) as f64 / 15.0).unwrap();
        let png = dir.path().join("face.png");
        image::GrayImage::from_raw(40, 40, img.to_bytes())
            .unwrap()
            .save(&png)
            .unwrap();
        let loaded = load_image(&png).unwrap();
        let msr = MsrConfig::equal_weights(vec![2.0, 4.0, 8.0], 1e-6);
        let run = |msr_before_resize| {
            let settings = ExtractSettings {
                msr: Some(msr.clone()),
                resize: Some((24, 24)),
                msr_before_resize,
                banks: "fallback:1".into(),
            };
            ImageExtractor::new(fallback_banks(1), settings, None)
                .extract(&png)
                .unwrap()
        };
        let after = multiscale_bsif(
            &msr_enhance(&resize(&loaded, 24, 24).unwrap(), &msr).unwrap(),
            &fallback_banks(1),
        )
        .unwrap();
        let before = multiscale_bsif(
            &resize(&msr_enhance(&loaded, &msr).unwrap(), 24, 24).unwrap(),
            &fallback_banks(1),
        )
        .unwrap();
        assert_eq!(run(false), after);
        assert_eq!(run(true), before);
        assert_ne!(after, before);
    }
}
