use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::{DataError, Result};
use crate::kernels::{format_cloud, parse_cloud, PointCloud};

fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".sha256");
    PathBuf::from(s)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes the cloud in text form plus a `.sha256` sidecar.
pub fn write_cached(path: &Path, cloud: &PointCloud) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| DataError::io(dir, e))?;
    }
    let text = format_cloud(cloud);
    std::fs::write(path, &text).map_err(|e| DataError::io(path, e))?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let side = sidecar(path);
    std::fs::write(&side, format!("{}  {name}\n", sha256_hex(text.as_bytes()))).map_err(|e| DataError::io(&side, e))
}

/// Reads a cached cloud, verifying the sidecar when present.
pub fn read_cached(path: &Path) -> Result<PointCloud> {
    let bytes = std::fs::read(path).map_err(|e| DataError::io(path, e))?;
    let side = sidecar(path);
    if side.exists() {
        let recorded = std::fs::read_to_string(&side).map_err(|e| DataError::io(&side, e))?;
        let expected = recorded.split_whitespace().next().unwrap_or("");
        if expected != sha256_hex(&bytes) {
            return Err(DataError::Checksum(path.to_path_buf()));
        }
    }
    let text = String::from_utf8(bytes).map_err(|_| DataError::Invalid(format!("{} is not UTF-8", path.display())))?;
    Ok(parse_cloud(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checksum_detects_tampering() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.txt");
        let c = PointCloud::new(2, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        write_cached(&p, &c).unwrap();
        assert_eq!(read_cached(&p).unwrap(), c);
        std::fs::write(&p, "2 1\n0.5 0.5\n").unwrap();
        assert!(matches!(read_cached(&p), Err(DataError::Checksum(_))));
    }
}
