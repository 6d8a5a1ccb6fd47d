use std::collections::{BTreeMap, HashSet};
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;

/// Relation tags accepted in manifests.
pub const RELATIONS: [&str; 7] = ["FS", "FD", "MS", "MD", "set1", "set2", "PC"];

const HEADER: [&str; 5] = ["pair_id", "relation", "parent", "child", "family_id"];

/// One kin (positive) pair. `parent` and `child` are image paths or feature
/// ids; see [`sample_id`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairRecord {
    pub pair_id: String,
    pub relation: String,
    pub parent: String,
    pub child: String,
    pub family_id: String,
    pub fold: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PairManifest {
    records: Vec<PairRecord>,
    base_dir: PathBuf,
}

/// Feature lookup key of a manifest field: the file stem for paths, the
/// field itself otherwise.
pub fn sample_id(field: &str) -> String {
    Path::new(field)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| field.to_string())
}

impl PairManifest {
    /// Validates ids, tags and sample-id uniqueness. Relative paths resolve
    /// against `base_dir`.
    pub fn new(records: Vec<PairRecord>, base_dir: impl Into<PathBuf>) -> Result<Self, PipelineError> {
        let mut seen = HashSet::new();
        for r in &records {
            if r.pair_id.is_empty() {
                return Err(PipelineError::Data("empty pair_id".into()));
            }
            if !seen.insert(r.pair_id.as_str()) {
                return Err(PipelineError::Data(format!("duplicate pair_id {:?}", r.pair_id)));
            }
            if !RELATIONS.contains(&r.relation.as_str()) {
                return Err(PipelineError::Data(format!(
                    "pair {:?}: unknown relation tag {:?}; allowed tags are {}",
                    r.pair_id,
                    r.relation,
                    RELATIONS.join(", ")
                )));
            }
            if r.parent.is_empty() || r.child.is_empty() || r.family_id.is_empty() {
                return Err(PipelineError::Data(format!(
                    "pair {:?}: parent, child and family_id must be non-empty",
                    r.pair_id
                )));
            }
        }
        // A sample id must name one source and one family.
        let mut owners: BTreeMap<String, (&str, &str)> = BTreeMap::new();
        for r in &records {
            for field in [&r.parent, &r.child] {
                let id = sample_id(field);
                match owners.get(&id) {
                    Some(&(src, fam)) if src != field.as_str() || fam != r.family_id.as_str() => {
                        return Err(PipelineError::Data(format!(
                            "sample id {id:?} is used by {src:?} (family {fam:?}) and {field:?} (family {:?})",
                            r.family_id
                        )));
                    }
                    Some(_) => {}
                    None => {
                        owners.insert(id, (field.as_str(), r.family_id.as_str()));
                    }
                }
            }
        }
        if records.iter().any(|r| r.fold.is_some()) && records.iter().any(|r| r.fold.is_none()) {
            return Err(PipelineError::Data(
                "fold column must be filled for every row or for none".into(),
            ));
        }
        Ok(Self {
            records,
            base_dir: base_dir.into(),
        })
    }

    pub fn records(&self) -> &[PairRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn base_dir(&self) -> &Path {
        &self.base_dir
    }

    pub fn resolve(&self, field: &str) -> PathBuf {
        let p = Path::new(field);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Relation tags present, in vocabulary order.
    pub fn relations(&self) -> Vec<String> {
        RELATIONS
            .iter()
            .filter(|t| self.records.iter().any(|r| r.relation == **t))
            .map(|t| t.to_string())
            .collect()
    }

    /// Every `(parent sample id, child sample id)` listed as kin.
    pub fn kin_set(&self) -> HashSet<(String, String)> {
        self.records
            .iter()
            .map(|r| (sample_id(&r.parent), sample_id(&r.child)))
            .collect()
    }

    /// Errors on the first parent or child path that does not exist.
    pub fn check_files(&self) -> Result<(), PipelineError> {
        for r in &self.records {
            for field in [&r.parent, &r.child] {
                let p = self.resolve(field);
                if !p.is_file() {
                    return Err(PipelineError::Data(format!(
                        "pair {:?}: missing file {}",
                        r.pair_id,
                        p.display()
                    )));
                }
            }
        }
        Ok(())
    }
}

pub fn parse_manifest(reader: impl Read, base_dir: impl Into<PathBuf>) -> Result<PairManifest, PipelineError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| PipelineError::Data(format!("manifest: {e}")))?
        .clone();
    let names: Vec<&str> = header.iter().collect();
    let has_fold = match names.as_slice() {
        [a, b, c, d, e] if [*a, *b, *c, *d, *e] == HEADER => false,
        [a, b, c, d, e, "fold"] if [*a, *b, *c, *d, *e] == HEADER => true,
        _ => {
            return Err(PipelineError::Data(format!(
                "manifest header must be {}[,fold], got {}",
                HEADER.join(","),
                names.join(",")
            )))
        }
    };
    let mut records = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| PipelineError::Data(format!("manifest line {line}: {e}")))?;
        let fold = if has_fold {
            let v = &row[5];
            Some(
                v.parse::<usize>()
                    .map_err(|_| PipelineError::Data(format!("manifest line {line}: bad fold index {v:?}")))?,
            )
        } else {
            None
        };
        records.push(PairRecord {
            pair_id: row[0].to_string(),
            relation: row[1].to_string(),
            parent: row[2].to_string(),
            child: row[3].to_string(),
            family_id: row[4].to_string(),
            fold,
        });
    }
    PairManifest::new(records, base_dir)
}

/// Reads and validates a manifest CSV; with `check_files`, every referenced
/// image must exist.
pub fn load_manifest(path: impl AsRef<Path>, check_files: bool) -> Result<PairManifest, PipelineError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let manifest = parse_manifest(file, base)?;
    if check_files {
        manifest.check_files()?;
    }
    Ok(manifest)
}

pub fn write_manifest(path: impl AsRef<Path>, manifest: &PairManifest) -> Result<(), PipelineError> {
    let path = path.as_ref();
    let io = |e: csv::Error| PipelineError::Data(format!("writing {}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    let has_fold = manifest.records.iter().any(|r| r.fold.is_some());
    let mut header = HEADER.to_vec();
    if has_fold {
        header.push("fold");
    }
    w.write_record(&header).map_err(io)?;
    for r in &manifest.records {
        let mut row = vec![
            r.pair_id.clone(),
            r.relation.clone(),
            r.parent.clone(),
            r.child.clone(),
            r.family_id.clone(),
        ];
        if let Some(f) = r.fold {
            row.push(f.to_string());
        }
        w.write_record(&row).map_err(io)?;
    }
    w.flush().map_err(|source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    })
}
