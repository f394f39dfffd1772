use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{DataError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Domain {
    X,
    Y,
}

impl Domain {
    pub fn as_str(self) -> &'static str {
        match self {
            Domain::X => "x",
            Domain::Y => "y",
        }
    }

    pub fn parse(s: &str) -> Option<Domain> {
        match s {
            "x" | "X" => Some(Domain::X),
            "y" | "Y" => Some(Domain::Y),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Split> {
        match s {
            "train" => Some(Split::Train),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

/// How cached clouds were placed in the unit-diagonal frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Placement {
    /// Each cloud normalized on its own bounding box.
    Cloud,
    /// One fixed square frame for the whole dataset, so position and size
    /// survive as shape attributes.
    Frame,
}

impl Placement {
    pub fn as_str(self) -> &'static str {
        match self {
            Placement::Cloud => "cloud",
            Placement::Frame => "frame",
        }
    }

    pub fn parse(s: &str) -> Option<Placement> {
        match s {
            "cloud" => Some(Placement::Cloud),
            "frame" => Some(Placement::Frame),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Sampling {
    pub n: usize,
    pub seed: u64,
    pub placement: Placement,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Entry {
    pub domain: Domain,
    pub id: String,
    pub split: Split,
    /// Relative to the manifest's directory.
    pub path: PathBuf,
}

/// Line-oriented dataset index. Comment lines carry the sampling parameters
/// and per-entry warnings; data lines are `domain\tid\tsplit\tpath`.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub sampling: Sampling,
    pub entries: Vec<Entry>,
    /// `(id, message)` pairs.
    pub warnings: Vec<(String, String)>,
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<()> {
        let mut ids = BTreeSet::new();
        let mut paths = BTreeSet::new();
        for e in &self.entries {
            if e.id.is_empty() || e.id.contains(['\t', '\n']) {
                return Err(DataError::Invalid(format!("bad id {:?}", e.id)));
            }
            if !ids.insert(e.id.as_str()) {
                return Err(DataError::Invalid(format!("duplicate id {}", e.id)));
            }
            if !paths.insert(e.path.as_path()) {
                return Err(DataError::Invalid(format!("{} listed twice", e.path.display())));
            }
        }
        Ok(())
    }

    pub fn domain(&self, d: Domain) -> impl Iterator<Item = &Entry> {
        self.entries.iter().filter(move |e| e.domain == d)
    }

    pub fn select(&self, d: Domain, split: Split) -> Vec<&Entry> {
        self.domain(d).filter(|e| e.split == split).collect()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# lsx manifest");
        let _ = writeln!(
            s,
            "# n={} seed={} placement={}",
            self.sampling.n,
            self.sampling.seed,
            self.sampling.placement.as_str()
        );
        for (id, msg) in &self.warnings {
            let _ = writeln!(s, "# warning\t{id}\t{msg}");
        }
        let _ = writeln!(s, "# domain\tid\tsplit\tpath");
        for e in &self.entries {
            let _ = writeln!(s, "{}\t{}\t{}\t{}", e.domain.as_str(), e.id, e.split.as_str(), e.path.display());
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let bad = |line: usize, msg: String| DataError::Manifest { line, msg };
        let mut sampling = None;
        let mut entries = Vec::new();
        let mut warnings = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let ln = i + 1;
            if let Some(rest) = line.strip_prefix("# warning\t") {
                let (id, msg) = rest.split_once('\t').ok_or_else(|| bad(ln, "warning without message".into()))?;
                warnings.push((id.to_string(), msg.to_string()));
            } else if let Some(rest) = line.strip_prefix("# n=") {
                sampling = Some(parse_sampling(rest).ok_or_else(|| bad(ln, format!("bad sampling line `{line}`")))?);
            } else if line.starts_with('#') || line.trim().is_empty() {
                continue;
            } else {
                let f: Vec<&str> = line.split('\t').collect();
                let [d, id, sp, path] = f[..] else {
                    return Err(bad(ln, format!("expected 4 fields, got {}", f.len())));
                };
                entries.push(Entry {
                    domain: Domain::parse(d).ok_or_else(|| bad(ln, format!("unknown domain `{d}`")))?,
                    id: id.to_string(),
                    split: Split::parse(sp).ok_or_else(|| bad(ln, format!("unknown split `{sp}`")))?,
                    path: PathBuf::from(path),
                });
            }
        }
        let sampling = sampling.ok_or_else(|| bad(0, "missing sampling line".into()))?;
        let m = DatasetManifest { sampling, entries, warnings };
        m.validate()?;
        Ok(m)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        self.validate()?;
        std::fs::write(path, self.to_text()).map_err(|e| DataError::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
        DatasetManifest::parse(&text)
    }
}

fn parse_sampling(rest: &str) -> Option<Sampling> {
    let mut it = rest.split(' ');
    let n = it.next()?.parse().ok()?;
    let seed = it.next()?.strip_prefix("seed=")?.parse().ok()?;
    let placement = Placement::parse(it.next()?.strip_prefix("placement=")?)?;
    Some(Sampling { n, seed, placement })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> DatasetManifest {
        DatasetManifest {
            sampling: Sampling { n: 128, seed: 7, placement: Placement::Frame },
            entries: vec![
                Entry { domain: Domain::X, id: "x-0".into(), split: Split::Train, path: "clouds/x-0.txt".into() },
                Entry { domain: Domain::Y, id: "y-0".into(), split: Split::Test, path: "clouds/y-0.txt".into() },
            ],
            warnings: vec![("y-0".into(), "bbox 240 px".into())],
        }
    }

    #[test]
    fn round_trip() {
        let m = sample();
        assert_eq!(DatasetManifest::parse(&m.to_text()).unwrap(), m);
    }

    #[test]
    fn rejects_duplicates_and_shared_files() {
        let mut m = sample();
        m.entries[1].id = "x-0".into();
        assert!(matches!(DatasetManifest::parse(&m.to_text()), Err(DataError::Invalid(_))));
        let mut m = sample();
        m.entries[1].path = m.entries[0].path.clone();
        assert!(m.validate().is_err());
    }

    #[test]
    fn malformed_lines_report_position() {
        let text = "# n=4 seed=1 placement=cloud\nx\tid\ttrain\n";
        assert!(matches!(DatasetManifest::parse(text), Err(DataError::Manifest { line: 2, .. })));
    }
}
