//! Single-file model archives.
//!
//! Layout: magic `KINARCH1`, a `u32` LE entry count, then per entry a `u16`
//! LE name length, the UTF-8 name, a `u64` LE payload length and the
//! payload. A model archive holds `manifest.json` followed by `KINFEAT1`
//! blobs named `U1`, `U2` and, when whitening is present, `B`. Matrices are
//! stored at `f32` precision; trained models are rounded to it when fitted,
//! so they round-trip exactly.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{SubspaceError, SweepDiagnostic, TxqdaConfig, TxqdaModel, WccnTransform};
use crate::deepfeat;
use crate::tensor::Matrix;

pub const ARCHIVE_MAGIC: &[u8; 8] = b"KINARCH1";
const MANIFEST: &str = "manifest.json";

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    config: TxqdaConfig,
    iterations: usize,
    input_dims: [usize; 2],
    output_dims: [usize; 2],
    matrices: Vec<String>,
    diagnostics: Vec<SweepDiagnostic>,
}

fn bad(msg: impl Into<String>) -> SubspaceError {
    SubspaceError::Archive(msg.into())
}

pub fn encode_archive(entries: &[(String, Vec<u8>)]) -> Result<Vec<u8>, SubspaceError> {
    let mut out = Vec::new();
    out.extend_from_slice(ARCHIVE_MAGIC);
    let count = u32::try_from(entries.len()).map_err(|_| bad("too many entries"))?;
    out.extend_from_slice(&count.to_le_bytes());
    for (name, payload) in entries {
        let len = u16::try_from(name.len()).map_err(|_| bad("entry name too long"))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
        out.extend_from_slice(payload);
    }
    Ok(out)
}

pub fn decode_archive(bytes: &[u8]) -> Result<Vec<(String, Vec<u8>)>, SubspaceError> {
    let mut cur = bytes;
    let mut take = |n: usize| -> Result<&[u8], SubspaceError> {
        if cur.len() < n {
            return Err(bad("truncated archive"));
        }
        let (head, tail) = cur.split_at(n);
        cur = tail;
        Ok(head)
    };
    if take(ARCHIVE_MAGIC.len())? != ARCHIVE_MAGIC {
        return Err(bad("bad magic"));
    }
    let count = u32::from_le_bytes(take(4)?.try_into().unwrap());
    let mut entries = Vec::with_capacity(count.min(64) as usize);
    for _ in 0..count {
        let name_len = u16::from_le_bytes(take(2)?.try_into().unwrap()) as usize;
        let name = std::str::from_utf8(take(name_len)?)
            .map_err(|_| bad("entry name is not UTF-8"))?
            .to_string();
        let len = u64::from_le_bytes(take(8)?.try_into().unwrap());
        let len = usize::try_from(len).map_err(|_| bad("entry too large"))?;
        entries.push((name, take(len)?.to_vec()));
    }
    let consumed: usize =
        ARCHIVE_MAGIC.len() + 4 + entries.iter().map(|(n, p)| 2 + n.len() + 8 + p.len()).sum::<usize>();
    if consumed != bytes.len() {
        return Err(bad("trailing bytes after last entry"));
    }
    Ok(entries)
}

pub fn encode_model(model: &TxqdaModel) -> Result<Vec<u8>, SubspaceError> {
    let mut matrices: Vec<(&str, &Matrix)> = vec![("U1", &model.u1), ("U2", &model.u2)];
    if let Some(w) = &model.wccn {
        matrices.push(("B", w.factor()));
    }
    let manifest = Manifest {
        format_version: 1,
        config: model.config.clone(),
        iterations: model.iterations,
        input_dims: [model.u1.cols(), model.u2.cols()],
        output_dims: [model.u1.rows(), model.u2.rows()],
        matrices: matrices.iter().map(|(n, _)| n.to_string()).collect(),
        diagnostics: model.diagnostics.clone(),
    };
    let json = serde_json::to_vec_pretty(&manifest).map_err(|e| bad(e.to_string()))?;
    let mut entries = vec![(MANIFEST.to_string(), json)];
    for (name, m) in matrices {
        let blob = deepfeat::encode(m, name).map_err(|e| bad(format!("{name}: {e}")))?;
        entries.push((name.to_string(), blob));
    }
    encode_archive(&entries)
}

pub fn decode_model(bytes: &[u8]) -> Result<TxqdaModel, SubspaceError> {
    let entries = decode_archive(bytes)?;
    let find = |name: &str| {
        entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, p)| p.as_slice())
            .ok_or_else(|| bad(format!("missing entry {name}")))
    };
    let manifest: Manifest = serde_json::from_slice(find(MANIFEST)?).map_err(|e| bad(format!("manifest: {e}")))?;
    if manifest.format_version != 1 {
        return Err(bad(format!("unsupported format version {}", manifest.format_version)));
    }
    let matrix = |name: &str| -> Result<Matrix, SubspaceError> {
        let (_, m) = deepfeat::decode(find(name)?).map_err(|e| bad(format!("{name}: {e}")))?;
        Ok(m)
    };
    let u1 = matrix("U1")?;
    let u2 = matrix("U2")?;
    if [u1.cols(), u2.cols()] != manifest.input_dims || [u1.rows(), u2.rows()] != manifest.output_dims {
        return Err(bad("matrix shapes disagree with the manifest"));
    }
    let wccn = if manifest.matrices.iter().any(|n| n == "B") {
        Some(WccnTransform::from_factor(matrix("B")?)?)
    } else {
        None
    };
    let mut model = TxqdaModel::from_parts(u1, u2, wccn)?;
    model.iterations = manifest.iterations;
    model.config = manifest.config;
    model.diagnostics = manifest.diagnostics;
    Ok(model)
}

pub fn write_model_archive(path: impl AsRef<Path>, model: &TxqdaModel) -> Result<(), SubspaceError> {
    let path = path.as_ref();
    std::fs::write(path, encode_model(model)?).map_err(|source| SubspaceError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_model_archive(path: impl AsRef<Path>) -> Result<TxqdaModel, SubspaceError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| SubspaceError::Io {
        path: path.display().to_string(),
        source,
    })?;
    decode_model(&bytes)
}
