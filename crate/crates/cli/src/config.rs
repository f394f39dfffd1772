//! Run configuration: a profile's defaults overlaid with a TOML file and
//! `key=value` flag overrides, in that order.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use lsx::networks::NetConfig;
use lsx::training::TrainConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Desk,
    Full,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Paths {
    pub manifest: PathBuf,
    pub checkpoints: PathBuf,
    pub reports: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            manifest: "data/manifest.tsv".into(),
            checkpoints: "checkpoints".into(),
            reports: "reports".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Config {
    pub profile: Profile,
    pub seed: u64,
    pub paths: Paths,
    pub net: NetConfig,
    pub train: TrainConfig,
}

impl Config {
    pub fn defaults(profile: Profile, dim: usize) -> Self {
        let (net, train) = match profile {
            Profile::Desk => (NetConfig::desk(dim), TrainConfig::desk()),
            Profile::Full => (NetConfig::full(dim), TrainConfig::full()),
        };
        Config { profile, seed: 0, paths: Paths::default(), net, train }
    }

    /// Resolves a configuration. The profile comes from `profile` if given,
    /// else the file, else desk; the point dimension likewise from
    /// `net.dim`. Every other key of the file and of `sets` replaces the
    /// profile default.
    pub fn resolve(file: Option<&Path>, profile: Option<Profile>, sets: &[String]) -> anyhow::Result<Self> {
        let mut user = match file {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                text.parse::<Table>().with_context(|| format!("parsing config {}", p.display()))?
            }
            None => Table::new(),
        };
        for s in sets {
            let (key, raw) = s.split_once('=').with_context(|| format!("override {s:?} is not key=value"))?;
            set_path(&mut user, key.trim(), parse_scalar(raw.trim()))?;
        }
        let profile = match (profile, user.get("profile")) {
            (Some(p), _) => p,
            (None, Some(v)) => Profile::deserialize(v.clone()).context("profile must be desk or full")?,
            (None, None) => Profile::Desk,
        };
        user.insert("profile".into(), Value::try_from(profile)?);
        let dim = match user.get("net").and_then(|n| n.get("dim")) {
            Some(v) => v.as_integer().filter(|d| (2..=3).contains(d)).context("net.dim must be 2 or 3")? as usize,
            None => 2,
        };
        let mut merged = Value::try_from(Config::defaults(profile, dim))?;
        merge(&mut merged, Value::Table(user), "")?;
        let cfg: Config = merged.try_into().context("invalid configuration")?;
        cfg.net.validate()?;
        cfg.train.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    #[cfg(test)]
    pub fn parse(text: &str) -> anyhow::Result<Self> {
        Ok(toml::from_str(text)?)
    }
}

fn parse_scalar(raw: &str) -> Value {
    // Reuses the TOML value grammar; bare words become strings.
    match format!("v = {raw}").parse::<Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| Value::String(raw.into())),
        Err(_) => Value::String(raw.into()),
    }
}

fn set_path(table: &mut Table, key: &str, value: Value) -> anyhow::Result<()> {
    let mut parts = key.split('.').peekable();
    let mut cur = table;
    while let Some(part) = parts.next() {
        if part.is_empty() {
            bail!("empty segment in override key {key:?}");
        }
        if parts.peek().is_none() {
            cur.insert(part.into(), value);
            return Ok(());
        }
        let next = cur.entry(part).or_insert_with(|| Value::Table(Table::new()));
        cur = next.as_table_mut().with_context(|| format!("override key {key:?} crosses a non-table value"))?;
    }
    Ok(())
}

/// Overlays `user` onto `base` key by key. Unknown keys are errors so typos
/// do not silently fall back to defaults.
fn merge(base: &mut Value, user: Value, at: &str) -> anyhow::Result<()> {
    match (base, user) {
        (Value::Table(b), Value::Table(u)) => {
            for (k, v) in u {
                let path = if at.is_empty() { k.clone() } else { format!("{at}.{k}") };
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v, &path)?,
                    None => bail!("unknown config key {path}"),
                }
            }
            Ok(())
        }
        (Value::Float(b), Value::Integer(i)) => {
            *b = i as f64;
            Ok(())
        }
        (b, u) => {
            *b = u;
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_then_flags() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, "seed = 4\n[train]\nalpha = 0\nae_epochs = 3\n[train.tr_lr]\nevery = 7\n").unwrap();
        let c = Config::resolve(Some(&p), None, &["train.ae_epochs=5".into(), "paths.reports=out/r".into()]).unwrap();
        assert_eq!(c.seed, 4);
        assert_eq!(c.train.alpha, 0.0);
        assert_eq!(c.train.ae_epochs, 5);
        assert_eq!(c.train.tr_lr.every, 7);
        assert_eq!(c.train.tr_lr.initial, TrainConfig::desk().tr_lr.initial);
        assert_eq!(c.paths.reports, PathBuf::from("out/r"));
        assert_eq!(c.net, NetConfig::desk(2));
    }

    #[test]
    fn profile_flag_wins() {
        let c = Config::resolve(None, Some(Profile::Full), &["profile=desk".into()]).unwrap();
        assert_eq!(c.train, TrainConfig::full());
        let c = Config::resolve(None, None, &["profile=full".into(), "net.dim=3".into()]).unwrap();
        assert_eq!(c.net, NetConfig::full(3));
    }

    #[test]
    fn round_trip() {
        let c = Config::resolve(None, None, &["train.beta=0".into(), "seed=9".into()]).unwrap();
        let text = c.to_toml();
        assert_eq!(Config::parse(&text).unwrap(), c);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.toml");
        std::fs::write(&p, &text).unwrap();
        assert_eq!(Config::resolve(Some(&p), None, &[]).unwrap(), c);
    }

    #[test]
    fn rejects_typos_and_bad_values() {
        assert!(Config::resolve(None, None, &["train.alpah=1".into()]).is_err());
        assert!(Config::resolve(None, None, &["train.alpha=-1".into()]).is_err());
        assert!(Config::resolve(None, None, &["seed".into()]).is_err());
        assert!(Config::resolve(None, None, &["net.dim=4".into()]).is_err());
    }
}
