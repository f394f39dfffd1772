use std::fmt::Write as _;
use std::path::Path;

use super::{KernelError, Mask, PointCloud, Result};

/// Text form: `"d n"` then one line of `d` coordinates per point. Values use
/// the shortest representation that round-trips exactly.
pub fn format_cloud(cloud: &PointCloud) -> String {
    let mut s = String::with_capacity(cloud.len() * cloud.dim() * 20);
    let _ = writeln!(s, "{} {}", cloud.dim(), cloud.len());
    for p in cloud.points() {
        let line: Vec<String> = p.iter().map(|v| format!("{v:?}")).collect();
        s.push_str(&line.join(" "));
        s.push('\n');
    }
    s
}

pub fn parse_cloud(text: &str) -> Result<PointCloud> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| KernelError::Malformed("missing header".into()))?;
    let mut h = header.split_whitespace().map(str::parse::<usize>);
    let (Some(Ok(dim)), Some(Ok(n)), None) = (h.next(), h.next(), h.next()) else {
        return Err(KernelError::Malformed(format!("bad header `{header}`")));
    };
    let mut coords = Vec::with_capacity(dim * n);
    for (i, line) in lines.enumerate() {
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(str::parse::<f64>)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| KernelError::Malformed(format!("line {}: {e}", i + 2)))?;
        if vals.len() != dim {
            return Err(KernelError::Malformed(format!("line {} has {} values, expected {dim}", i + 2, vals.len())));
        }
        coords.extend(vals);
    }
    if coords.len() != dim * n {
        return Err(KernelError::Malformed(format!("expected {n} points, found {}", coords.len() / dim.max(1))));
    }
    PointCloud::new(dim, coords)
}

pub fn write_cloud(path: &Path, cloud: &PointCloud) -> Result<()> {
    std::fs::write(path, format_cloud(cloud))?;
    Ok(())
}

pub fn read_cloud(path: &Path) -> Result<PointCloud> {
    parse_cloud(&std::fs::read_to_string(path)?)
}

/// Reads a binary (P5) PGM as a thresholded mask.
pub fn read_pgm(path: &Path) -> Result<Mask> {
    let bytes = std::fs::read(path)?;
    decode_pgm(&bytes)
}

pub fn decode_pgm(bytes: &[u8]) -> Result<Mask> {
    if !bytes.starts_with(b"P5") {
        return Err(KernelError::Malformed("not a binary PGM (P5)".into()));
    }
    let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Pnm)
        .map_err(|e| KernelError::Malformed(e.to_string()))?
        .to_luma8();
    let (w, h) = img.dimensions();
    Mask::from_gray(w as usize, h as usize, img.as_raw())
}

/// Writes a mask as an 8-bit P5 PGM (interior = 255).
pub fn write_pgm(path: &Path, mask: &Mask) -> Result<()> {
    let mut out = format!("P5\n{} {}\n255\n", mask.width, mask.height).into_bytes();
    out.extend(mask.pixels.iter().map(|&b| if b { 255u8 } else { 0 }));
    std::fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parse_errors() {
        assert!(parse_cloud("").is_err());
        assert!(parse_cloud("2 2\n1 2\n").is_err());
        assert!(parse_cloud("2 1\n1 2 3\n").is_err());
        assert!(parse_cloud("2 1\n1 x\n").is_err());
        assert_eq!(parse_cloud("2 1\n1 2\n").unwrap().coords(), &[1.0, 2.0]);
    }

    #[test]
    fn pgm_round_trip_and_rejects_ascii() {
        let dir = tempfile::tempdir().unwrap();
        let m = Mask::new(3, 2, vec![true, false, true, false, false, true]).unwrap();
        let p = dir.path().join("m.pgm");
        write_pgm(&p, &m).unwrap();
        assert_eq!(read_pgm(&p).unwrap(), m);
        assert!(decode_pgm(b"P2\n1 1\n255\n0\n").is_err());
        assert!(decode_pgm(b"P5\n4 4\n255\n\x01").is_err());
    }

    proptest! {
        #[test]
        fn cloud_text_round_trips(vals in proptest::collection::vec(-1e6f64..1e6, 1..30)) {
            let c = PointCloud::new(3, vals.iter().cycle().take(vals.len() * 3).copied().collect()).unwrap();
            prop_assert_eq!(parse_cloud(&format_cloud(&c)).unwrap(), c);
        }
    }
}
