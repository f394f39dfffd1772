use std::fs::{self, OpenOptions};
use std::io::ErrorKind;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context};
use clap::Args;
use log::{info, warn};
use toml::Table;

use lsx::autodiff::Tensor;
use lsx::data::{self, sha256_hex, DatasetManifest, Domain, Entry, Family, GenOptions, IngestOptions, Placement, Split};
use lsx::data::SyntheticSpec;
use lsx::eval::{
    code_change_profile, embedding_distances, mse_iou, rasterize_cloud, shape_metrics, FamilyClassifier, GeometryCheck,
    MetricsTable, RASTER_SIZE,
};
use lsx::kernels::{read_cloud, write_cloud, Normalization, PointCloud};
use lsx::pipeline::{self, Model, PipelineError};
use lsx::rng::{derive, phase};
use lsx::training::{Direction, TrainError, TrainReport};

use crate::config::Config;
use crate::{Common, Phase};

/// Centroid tolerance of a translation, in unit-diagonal frame units.
pub const CENTROID_TOL: f64 = 0.05;
/// Relative bounding-box diagonal tolerance of a translation.
pub const DIAG_TOL: f64 = 0.10;
const CLASSIFIER_ITERS: usize = 500;

#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct Usage(String);

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

/// 1 usage, 3 numeric abort, 2 anything else.
pub fn exit_code(e: &anyhow::Error) -> u8 {
    let numeric = |t: &TrainError| t.is_numeric();
    for c in e.chain() {
        if c.is::<Usage>() {
            return 1;
        }
        if c.downcast_ref::<TrainError>().is_some_and(numeric) {
            return 3;
        }
        if let Some(PipelineError::Train(t)) = c.downcast_ref::<PipelineError>() {
            if numeric(t) {
                return 3;
            }
        }
    }
    2
}

fn load_config(common: &Common) -> anyhow::Result<Config> {
    let mut sets = common.sets.clone();
    if let Some(s) = common.seed {
        sets.push(format!("seed={s}"));
    }
    Config::resolve(common.config.as_deref(), common.profile, &sets).map_err(|e| usage(format!("{e:#}")))
}

/// Records the resolved configuration next to the reports.
fn write_config(cfg: &Config) -> anyhow::Result<()> {
    fs::create_dir_all(&cfg.paths.reports)?;
    let p = cfg.paths.reports.join("config.toml");
    fs::write(&p, cfg.to_toml()).with_context(|| format!("writing {}", p.display()))
}

fn root_of(manifest: &Path) -> PathBuf {
    match manifest.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

fn parse_family(s: &str) -> Result<Family, String> {
    Family::parse(s).ok_or_else(|| format!("unknown family {s:?} (crosses, squares, rings, bars)"))
}

fn parse_placement(s: &str) -> Result<Placement, String> {
    Placement::parse(s).ok_or_else(|| format!("unknown placement {s:?} (frame, cloud)"))
}

fn parse_direction(s: &str) -> Result<Direction, String> {
    Direction::parse(s).ok_or_else(|| format!("unknown direction {s:?} (x2y, y2x)"))
}

fn dir_name(d: Direction) -> &'static str {
    match d {
        Direction::XtoY => "x2y",
        Direction::YtoX => "y2x",
    }
}

fn endpoints(d: Direction) -> (Domain, Domain) {
    match d {
        Direction::XtoY => (Domain::X, Domain::Y),
        Direction::YtoX => (Domain::Y, Domain::X),
    }
}

/// Writes a dataset manifest at `manifest` when the generator left it at
/// the default name next to it.
fn place_manifest(m: &DatasetManifest, manifest: &Path) -> anyhow::Result<()> {
    let default = root_of(manifest).join("manifest.tsv");
    if default != manifest {
        m.write(manifest)?;
        fs::remove_file(&default)?;
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct GenDataArgs {
    #[arg(long, default_value = "crosses", value_parser = parse_family)]
    family_x: Family,
    #[arg(long, default_value = "squares", value_parser = parse_family)]
    family_y: Family,
    /// Shapes per domain.
    #[arg(long, default_value_t = 2000)]
    count: usize,
    /// Points per cloud; defaults to the network input size.
    #[arg(long)]
    n: Option<usize>,
    /// Also cache dense ground truth with this many points.
    #[arg(long)]
    dense: Option<usize>,
    /// Also cache each shape redrawn in the other family.
    #[arg(long)]
    paired: bool,
    /// Dataset directory; the manifest goes to <out>/manifest.tsv.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn manifest_path(cfg: &Config, out: &Option<PathBuf>) -> PathBuf {
    match out {
        Some(d) => d.join("manifest.tsv"),
        None => cfg.paths.manifest.clone(),
    }
}

pub fn gen_data(common: &Common, a: &GenDataArgs) -> anyhow::Result<()> {
    let cfg = load_config(common)?;
    let manifest = manifest_path(&cfg, &a.out);
    let mut sx = SyntheticSpec::new(a.family_x, a.count, derive(cfg.seed, phase::DATA_X, 0));
    let mut sy = SyntheticSpec::new(a.family_y, a.count, derive(cfg.seed, phase::DATA_Y, 0));
    sx.dim = cfg.net.dim;
    sy.dim = cfg.net.dim;
    let opts = GenOptions { n: a.n.unwrap_or(cfg.net.points), dense: a.dense, paired: a.paired };
    let m = data::gen_synthetic(&sx, &sy, &root_of(&manifest), &opts)?;
    place_manifest(&m, &manifest)?;
    write_config(&cfg)?;
    info!("{} {} and {} {} shapes in {}", a.count, a.family_x.as_str(), a.count, a.family_y.as_str(), manifest.display());
    Ok(())
}

#[derive(Args, Debug)]
pub struct IngestArgs {
    /// Directory with x/ and y/ subdirectories of PGM masks.
    #[arg(long)]
    masks: PathBuf,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value = "frame", value_parser = parse_placement)]
    placement: Placement,
    #[arg(long)]
    dense: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn ingest(common: &Common, a: &IngestArgs) -> anyhow::Result<()> {
    let cfg = load_config(common)?;
    let manifest = manifest_path(&cfg, &a.out);
    let opts = IngestOptions {
        n: a.n.unwrap_or(cfg.net.points),
        seed: cfg.seed,
        placement: a.placement,
        dense: a.dense,
    };
    let m = data::ingest_masks(&a.masks, &root_of(&manifest), &opts)?;
    place_manifest(&m, &manifest)?;
    write_config(&cfg)?;
    for (id, msg) in &m.warnings {
        warn!("{id}: {msg}");
    }
    info!("ingested {} masks into {}", m.entries.len(), manifest.display());
    Ok(())
}

#[derive(Args, Debug)]
pub struct SplitArgs {
    /// Fraction of each domain tagged test.
    #[arg(long, default_value_t = 0.2)]
    fraction: f64,
    #[arg(long = "in")]
    input: Option<PathBuf>,
}

pub fn split(common: &Common, a: &SplitArgs) -> anyhow::Result<()> {
    let cfg = load_config(common)?;
    let path = a.input.clone().unwrap_or_else(|| cfg.paths.manifest.clone());
    let m = DatasetManifest::read(&path)?;
    let s = data::split(&m, a.fraction, cfg.seed)?;
    s.write(&path)?;
    write_config(&cfg)?;
    for d in [Domain::X, Domain::Y] {
        info!("{}: {} train, {} test", d.as_str(), s.select(d, Split::Train).len(), s.select(d, Split::Test).len());
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum UpDomain {
    X,
    Y,
    Both,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(value_enum)]
    phase: Phase,
    /// Skip the phase when its checkpoint matches the configuration and data.
    #[arg(long)]
    resume: bool,
    #[arg(long = "in")]
    input: Option<PathBuf>,
    /// Domains whose dense ground truth trains the upsampler.
    #[arg(long, value_enum, default_value = "both")]
    domain: UpDomain,
}

struct Checkpoints<'a>(&'a Path);

impl Checkpoints<'_> {
    fn name(p: Phase) -> &'static str {
        match p {
            Phase::Ae => "ae",
            Phase::Translator => "translators",
            Phase::Upsampler => "upsampler",
        }
    }

    fn params(&self, p: Phase) -> PathBuf {
        self.0.join(format!("{}.lsxc", Self::name(p)))
    }

    fn stamp(&self, p: Phase) -> PathBuf {
        self.0.join(format!("{}.stamp", Self::name(p)))
    }

    fn net(&self) -> PathBuf {
        self.0.join("net.toml")
    }

    fn require(&self, p: Phase) -> anyhow::Result<PathBuf> {
        let path = self.params(p);
        if !path.exists() {
            bail!("missing prerequisite checkpoint {}; run `lsx train {}` first", path.display(), phase_arg(p));
        }
        Ok(path)
    }

    /// The network the checkpoints were trained with must be the configured one.
    fn check_net(&self, cfg: &Config) -> anyhow::Result<()> {
        let p = self.net();
        let stored = fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
        if toml::from_str::<lsx::networks::NetConfig>(&stored)? != cfg.net {
            bail!("{} differs from the configured network; retrain from `lsx train ae`", p.display());
        }
        Ok(())
    }
}

fn phase_arg(p: Phase) -> &'static str {
    match p {
        Phase::Ae => "ae",
        Phase::Translator => "translator",
        Phase::Upsampler => "upsampler",
    }
}

/// Exclusive writer lock on a checkpoint directory, released on drop.
struct Lock(PathBuf);

impl Lock {
    fn acquire(dir: &Path) -> anyhow::Result<Lock> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let p = dir.join(".lock");
        match OpenOptions::new().write(true).create_new(true).open(&p) {
            Ok(_) => Ok(Lock(p)),
            Err(e) if e.kind() == ErrorKind::AlreadyExists => {
                bail!("{} is in use by another run (remove {} if stale)", dir.display(), p.display())
            }
            Err(e) => Err(e).with_context(|| format!("creating {}", p.display())),
        }
    }
}

impl Drop for Lock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

/// Hash of everything a phase's result depends on.
fn fingerprint(cfg: &Config, p: Phase, manifest: &str, upstream: &str, extra: &str) -> anyhow::Result<String> {
    let keys: &[&str] = match p {
        Phase::Ae => &["lambda1", "ae_epochs", "ae_batch", "ae_lr", "auction"],
        Phase::Translator => &["alpha", "lambda2", "beta", "tr_epochs", "tr_batch", "d_iters", "tr_lr"],
        Phase::Upsampler => &["up_epochs", "up_batch", "up_lr", "up_subset", "auction"],
    };
    let all = Table::try_from(&cfg.train)?;
    let picked: Table = all.into_iter().filter(|(k, _)| keys.contains(&k.as_str())).collect();
    let text = format!(
        "{}\nseed={}\n{}\n{}\n{manifest}\n{upstream}\n{extra}",
        phase_arg(p),
        cfg.seed,
        toml::to_string(&cfg.net)?,
        toml::to_string(&picked)?
    );
    Ok(sha256_hex(text.as_bytes()))
}

fn clouds_of(m: &DatasetManifest, root: &Path, d: Domain, s: Split) -> anyhow::Result<Vec<PointCloud>> {
    Ok(data::load_clouds(m, root, d, s)?.into_iter().map(|(_, c)| c).collect())
}

pub fn train(common: &Common, a: &TrainArgs) -> anyhow::Result<()> {
    let cfg = load_config(common)?;
    let manifest_path = a.input.clone().unwrap_or_else(|| cfg.paths.manifest.clone());
    let manifest_text = fs::read_to_string(&manifest_path).with_context(|| format!("reading {}", manifest_path.display()))?;
    let m = DatasetManifest::parse(&manifest_text)?;
    let root = root_of(&manifest_path);
    let ck = Checkpoints(&cfg.paths.checkpoints);
    let _lock = Lock::acquire(ck.0)?;
    write_config(&cfg)?;

    let ae_fp = fingerprint(&cfg, Phase::Ae, &manifest_text, "", "")?;
    let fp = match a.phase {
        Phase::Ae => ae_fp.clone(),
        p => {
            ck.require(Phase::Ae)?;
            ck.check_net(&cfg)?;
            let stamp = fs::read_to_string(ck.stamp(Phase::Ae)).unwrap_or_default();
            if stamp.trim() != ae_fp {
                bail!("{} was trained on other data or settings; rerun `lsx train ae`", ck.params(Phase::Ae).display());
            }
            let extra = if p == Phase::Upsampler { format!("{:?}", a.domain) } else { String::new() };
            fingerprint(&cfg, p, &manifest_text, &ae_fp, &extra)?
        }
    };
    if a.resume && ck.params(a.phase).exists() {
        let stamp = fs::read_to_string(ck.stamp(a.phase)).unwrap_or_default();
        if stamp.trim() == fp {
            info!("{} is up to date; skipping", ck.params(a.phase).display());
            return Ok(());
        }
        info!("{} is stale; retraining", ck.params(a.phase).display());
    }

    let start = Instant::now();
    let mut report = TrainReport::default();
    let (net, tc, seed) = (&cfg.net, &cfg.train, cfg.seed);
    let stream = match a.phase {
        Phase::Ae => {
            let mut pool = clouds_of(&m, &root, Domain::X, Split::Train)?;
            pool.extend(clouds_of(&m, &root, Domain::Y, Split::Train)?);
            info!("training autoencoder on {} clouds", pool.len());
            let ae = pipeline::run_autoencoder(net, tc, pool, seed, &mut report)?;
            pipeline::save_params(&ck.params(Phase::Ae), &ae)?;
            fs::write(ck.net(), toml::to_string(net)?)?;
            phase::AE
        }
        Phase::Translator => {
            let ae = pipeline::load_params(&ck.params(Phase::Ae))?;
            let xs = clouds_of(&m, &root, Domain::X, Split::Train)?;
            let ys = clouds_of(&m, &root, Domain::Y, Split::Train)?;
            info!("training translators on {} x and {} y clouds", xs.len(), ys.len());
            let set = pipeline::run_translators(net, tc, &ae, &xs, &ys, seed, &mut report)?;
            pipeline::save_translators(&ck.params(Phase::Translator), &set)?;
            phase::TRANSLATOR
        }
        Phase::Upsampler => {
            let ae = pipeline::load_params(&ck.params(Phase::Ae))?;
            let (clouds, dense) = upsampler_data(&m, &root, a.domain)?;
            info!("training upsampler on {} clouds", clouds.len());
            let up = pipeline::run_upsampler(net, tc, &ae, clouds, &dense, seed, &mut report)?;
            pipeline::save_params(&ck.params(Phase::Upsampler), &up)?;
            phase::UPSAMPLER
        }
    };
    fs::write(ck.stamp(a.phase), format!("{fp}\n"))?;
    let name = phase_arg(a.phase);
    fs::write(cfg.paths.reports.join(format!("{name}_report.csv")), report.to_csv())?;
    fs::write(
        cfg.paths.reports.join(format!("{name}_run.toml")),
        format!("seed = {seed}\nstream = {stream}\nwall_clock_seconds = {:.3}\n", start.elapsed().as_secs_f64()),
    )?;
    info!("{name} done in {:.1}s", start.elapsed().as_secs_f64());
    Ok(())
}

fn upsampler_data(m: &DatasetManifest, root: &Path, which: UpDomain) -> anyhow::Result<(Vec<PointCloud>, Vec<PointCloud>)> {
    let domains: &[Domain] = match which {
        UpDomain::X => &[Domain::X],
        UpDomain::Y => &[Domain::Y],
        UpDomain::Both => &[Domain::X, Domain::Y],
    };
    let (mut clouds, mut dense) = (Vec::new(), Vec::new());
    for &d in domains {
        let mut found = 0;
        for (e, c) in data::load_clouds(m, root, d, Split::Train)? {
            let p = data::dense_path(root, &e);
            if !p.exists() {
                if which != UpDomain::Both {
                    bail!("missing dense ground truth {}", p.display());
                }
                continue;
            }
            dense.push(data::read_cached(&p)?);
            clouds.push(c);
            found += 1;
        }
        if found == 0 && which != UpDomain::Both {
            bail!("domain {} has no training clouds", d.as_str());
        }
    }
    if clouds.is_empty() {
        bail!("no dense ground truth under {}; generate the dataset with --dense", root.join("dense").display());
    }
    Ok((clouds, dense))
}

fn load_model(cfg: &Config, upsample: bool) -> anyhow::Result<Model> {
    let ck = Checkpoints(&cfg.paths.checkpoints);
    let ae_path = ck.require(Phase::Ae)?;
    ck.check_net(cfg)?;
    let tr_path = ck.require(Phase::Translator)?;
    let upsampler = if upsample { Some(pipeline::load_params(&ck.require(Phase::Upsampler)?)?) } else { None };
    Ok(Model {
        net: cfg.net.clone(),
        ae: pipeline::load_params(&ae_path)?,
        translators: Some(pipeline::load_translators(&tr_path)?),
        upsampler,
    })
}

fn test_inputs(m: &DatasetManifest, root: &Path, d: Domain) -> anyhow::Result<Vec<(Entry, PointCloud)>> {
    let v = data::load_clouds(m, root, d, Split::Test)?;
    if v.is_empty() {
        bail!("domain {} has no test inputs; run `lsx split` first", d.as_str());
    }
    Ok(v)
}

#[derive(Args, Debug)]
pub struct TranslateArgs {
    #[arg(long, value_parser = parse_direction)]
    dir: Direction,
    #[arg(long = "in")]
    input: Option<PathBuf>,
    /// Output directory; defaults to <reports>/translated_<dir>.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Apply the upsampling layer.
    #[arg(long)]
    upsample: bool,
}

fn translated_dir(cfg: &Config, out: &Option<PathBuf>, d: Direction) -> PathBuf {
    out.clone().unwrap_or_else(|| cfg.paths.reports.join(format!("translated_{}", dir_name(d))))
}

pub fn translate(common: &Common, a: &TranslateArgs) -> anyhow::Result<()> {
    let cfg = load_config(common)?;
    let manifest_path = a.input.clone().unwrap_or_else(|| cfg.paths.manifest.clone());
    let m = DatasetManifest::read(&manifest_path)?;
    let (source, _) = endpoints(a.dir);
    let inputs = test_inputs(&m, &root_of(&manifest_path), source)?;
    let model = load_model(&cfg, a.upsample)?;
    let clouds: Vec<PointCloud> = inputs.iter().map(|(_, c)| c.clone()).collect();
    let outputs = model.translate(a.dir, &clouds, a.upsample)?;
    let out = translated_dir(&cfg, &a.out, a.dir);
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    for ((e, _), c) in inputs.iter().zip(&outputs) {
        write_cloud(&out.join(format!("{}.txt", e.id)), c)?;
    }
    write_config(&cfg)?;
    info!("{} translations in {}", outputs.len(), out.display());
    Ok(())
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long, value_parser = parse_direction)]
    dir: Direction,
    #[arg(long = "in")]
    input: Option<PathBuf>,
    /// Directory of translated clouds; defaults to the translate output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Rasterization radius in pixels.
    #[arg(long, default_value_t = lsx::eval::DEFAULT_RADIUS)]
    r: f64,
    /// Directory of ground-truth translations named <id>.txt; defaults to
    /// the dataset's paired ground truth.
    #[arg(long)]
    gt: Option<PathBuf>,
}

fn rows(t: &Tensor) -> Vec<Vec<f64>> {
    t.data().chunks(t.cols()).map(<[f64]>::to_vec).collect()
}

/// Pixel coordinates of a cloud on the evaluation raster.
fn to_pixels(cloud: &PointCloud, t: &Normalization) -> PointCloud {
    cloud.map_points(|p| t.invert(p))
}

pub fn evaluate(common: &Common, a: &EvaluateArgs) -> anyhow::Result<()> {
    let cfg = load_config(common)?;
    let manifest_path = a.input.clone().unwrap_or_else(|| cfg.paths.manifest.clone());
    let m = DatasetManifest::read(&manifest_path)?;
    let root = root_of(&manifest_path);
    let (source, target) = endpoints(a.dir);
    let inputs = test_inputs(&m, &root, source)?;
    let out = translated_dir(&cfg, &a.out, a.dir);
    let outputs: Vec<PointCloud> = inputs
        .iter()
        .map(|(e, _)| {
            let p = out.join(format!("{}.txt", e.id));
            read_cloud(&p).with_context(|| format!("reading {}; run `lsx translate` first", p.display()))
        })
        .collect::<anyhow::Result<_>>()?;
    let two_d = cfg.net.dim == 2;
    let clf = if two_d {
        let xs = clouds_of(&m, &root, Domain::X, Split::Train)?;
        let ys = clouds_of(&m, &root, Domain::Y, Split::Train)?;
        Some(FamilyClassifier::train(&xs, &ys, CLASSIFIER_ITERS)?)
    } else {
        warn!("family classifier needs 2D clouds; skipping target probabilities");
        None
    };

    let mut table = MetricsTable::default();
    let (mut labelled, mut placed, mut both, mut missing_gt) = (0usize, 0usize, 0usize, 0usize);
    for ((e, src), o) in inputs.iter().zip(&outputs) {
        let mut label_ok = true;
        if let Some(clf) = &clf {
            let p = clf.predict(o);
            let p = if target == Domain::Y { p } else { 1.0 - p };
            table.push(&e.id, "target_probability", p);
            label_ok = p >= 0.5;
        }
        let g = GeometryCheck::new(src, o)?;
        table.push(&e.id, "centroid_shift", g.centroid_shift);
        table.push(&e.id, "diagonal_ratio", g.diagonal_ratio);
        let geo_ok = g.passes(CENTROID_TOL, DIAG_TOL);
        labelled += label_ok as usize;
        placed += geo_ok as usize;
        both += (label_ok && geo_ok) as usize;

        let gt_path = match &a.gt {
            Some(d) => d.join(format!("{}.txt", e.id)),
            None => data::paired_path(&root, e),
        };
        if !gt_path.exists() {
            missing_gt += 1;
            continue;
        }
        let gt = read_cloud(&gt_path)?;
        let s = shape_metrics(o, &gt, &cfg.train.auction)?;
        table.push(&e.id, "chamfer", s.chamfer);
        table.push(&e.id, "emd_per_n", s.emd_per_n);
        if two_d {
            let t = data::read_normalization(&root.join(&e.path))
                .unwrap_or_else(|_| data::frame_transform(RASTER_SIZE, RASTER_SIZE));
            let rp = rasterize_cloud(&to_pixels(o, &t), a.r, RASTER_SIZE, RASTER_SIZE)?;
            let rg = rasterize_cloud(&to_pixels(&gt, &t), a.r, RASTER_SIZE, RASTER_SIZE)?;
            let (mse, iou) = mse_iou(&rp, &rg)?;
            table.push(&e.id, "mse", mse);
            table.push(&e.id, "iou", iou);
        }
    }
    if missing_gt > 0 {
        warn!("{missing_gt} of {} inputs have no ground truth; skipped ground-truth metrics", inputs.len());
    }

    let model = load_model(&cfg, false)?;
    let set = model.translators.as_ref().expect("loaded with translators");
    let clouds: Vec<PointCloud> = inputs.iter().map(|(_, c)| c.clone()).collect();
    let z = pipeline::codes(&model.ae, &cfg.net, &pipeline::plans(&cfg.net, &clouds)?)?;
    let tz = set.translate(&cfg.net, a.dir, &z)?;
    let (before, after) = (rows(&z), rows(&tz));
    let profile = code_change_profile(&before, &after, cfg.net.code_dim() / 4)?;
    let emb = embedding_distances(&before, &after)?;

    let n = inputs.len() as f64;
    let mut summary = String::from("metric,value\n");
    let mut metrics: Vec<&str> = table.rows.iter().map(|r| r.1.as_str()).collect();
    metrics.sort_unstable();
    metrics.dedup();
    for k in metrics {
        summary += &format!("mean_{k},{:?}\n", table.mean(k).unwrap_or(f64::NAN));
    }
    if clf.is_some() {
        summary += &format!("label_rate,{:?}\n", labelled as f64 / n);
        summary += &format!("pass_rate,{:?}\n", both as f64 / n);
    }
    summary += &format!("geometry_rate,{:?}\n", placed as f64 / n);

    let name = dir_name(a.dir);
    let rep = &cfg.paths.reports;
    fs::create_dir_all(rep)?;
    fs::write(rep.join(format!("eval_{name}.csv")), table.to_csv())?;
    fs::write(rep.join(format!("eval_{name}_summary.csv")), &summary)?;
    fs::write(rep.join(format!("code_profile_{name}.csv")), profile.to_csv())?;
    fs::write(rep.join(format!("embedding_{name}_codes.txt")), emb.codes_text())?;
    fs::write(rep.join(format!("embedding_{name}_distances.txt")), emb.distances_text())?;
    write_config(&cfg)?;
    print!("{summary}");
    Ok(())
}
