//! Raw little-endian complex blobs shared by the MPO and verifier formats.

use std::fs;
use std::path::{Path, PathBuf};

use crate::tensor::{Tensor, C64};

/// `base` with `suffix` appended to its file name (`out/qft` → `out/qft.mpo.json`).
pub fn with_suffix(base: &Path, suffix: &str) -> PathBuf {
    let mut s = base.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Concatenates the tensors' data as interleaved `(re, im)` f64 pairs.
pub fn write_blob(path: &Path, tensors: &[&Tensor]) -> std::io::Result<()> {
    let total: usize = tensors.iter().map(|t| t.len()).sum();
    let mut bytes = Vec::with_capacity(total * 16);
    for t in tensors {
        for z in t.data() {
            bytes.extend_from_slice(&z.re.to_le_bytes());
            bytes.extend_from_slice(&z.im.to_le_bytes());
        }
    }
    fs::write(path, bytes)
}

/// Splits a blob back into tensors of the given shapes.
pub fn read_blob(path: &Path, shapes: &[Vec<usize>]) -> Result<Vec<Tensor>, String> {
    let bytes = fs::read(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let expected: usize = shapes.iter().map(|s| s.iter().product::<usize>()).sum::<usize>() * 16;
    if bytes.len() != expected {
        return Err(format!(
            "{}: expected {expected} bytes, found {}",
            path.display(),
            bytes.len()
        ));
    }
    let mut values = bytes.chunks_exact(16).map(|c| {
        let re = f64::from_le_bytes(c[..8].try_into().expect("8 bytes"));
        let im = f64::from_le_bytes(c[8..].try_into().expect("8 bytes"));
        C64::new(re, im)
    });
    shapes
        .iter()
        .map(|s| {
            let len = s.iter().product();
            let data: Vec<C64> = values.by_ref().take(len).collect();
            Tensor::new(s.clone(), data).map_err(|e| e.to_string())
        })
        .collect()
}
