use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"seed = 3

[net]
points = 32
sub_dim = 4
decoder_hidden = [32, 32]
translator_hidden = [16, 16, 16, 16]
critic_hidden = [16, 8, 4]
upsample_m = 2
stages = [
    { centers = 16, radius = 0.1, group = 8, mlp = [16, 16] },
    { centers = 8, radius = 0.2, group = 8, mlp = [16, 16] },
    { centers = 4, radius = 0.4, group = 8, mlp = [16, 16] },
    { centers = 2, radius = 0.8, group = 8, mlp = [16, 16] },
]

[train]
ae_epochs = 2
ae_batch = 4
tr_epochs = 2
tr_batch = 4
up_epochs = 1
up_batch = 4
up_subset = 16
"#;

fn lsx(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lsx"))
        .args(args)
        .current_dir(dir)
        .env("LSX_THREADS", "1")
        .env("RUST_LOG", "info")
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = lsx(dir, args);
    assert!(out.status.success(), "lsx {args:?} failed:\n{}", String::from_utf8_lossy(&out.stderr));
    out
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn workspace() -> tempfile::TempDir {
    let d = tempfile::tempdir().unwrap();
    fs::write(d.path().join("c.toml"), TINY).unwrap();
    d
}

fn prepare(dir: &Path) {
    ok(dir, &["gen-data", "--config", "c.toml", "--count", "8", "--dense", "64", "--paired"]);
    ok(dir, &["split", "--config", "c.toml", "--fraction", "0.25"]);
}

fn run_all(dir: &Path) {
    prepare(dir);
    for phase in ["ae", "translator", "upsampler"] {
        ok(dir, &["train", phase, "--config", "c.toml"]);
    }
    ok(dir, &["translate", "--config", "c.toml", "--dir", "x2y"]);
    ok(dir, &["translate", "--config", "c.toml", "--dir", "y2x", "--upsample", "--out", "up"]);
    ok(dir, &["evaluate", "--config", "c.toml", "--dir", "x2y"]);
}

fn read(dir: &Path, rel: &str) -> Vec<u8> {
    fs::read(dir.join(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"))
}

#[test]
fn pipeline_outputs_repeat_byte_for_byte() {
    let (a, b) = (workspace(), workspace());
    run_all(a.path());
    run_all(b.path());
    let files = [
        "data/manifest.tsv",
        "checkpoints/ae.lsxc",
        "checkpoints/translators.lsxc",
        "checkpoints/upsampler.lsxc",
        "reports/ae_report.csv",
        "reports/translator_report.csv",
        "reports/eval_x2y.csv",
        "reports/eval_x2y_summary.csv",
        "reports/code_profile_x2y.csv",
        "reports/embedding_x2y_distances.txt",
        "reports/config.toml",
    ];
    for f in files {
        assert_eq!(read(a.path(), f), read(b.path(), f), "{f} differs between runs");
    }
    let outs: Vec<_> = fs::read_dir(a.path().join("reports/translated_x2y")).unwrap().collect();
    assert_eq!(outs.len(), 2);
    let ups: Vec<_> = fs::read_dir(a.path().join("up")).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(ups.len(), 2);
    for p in ups {
        assert_eq!(lsx::kernels::read_cloud(&p).unwrap().len(), 64);
    }
    let eval = String::from_utf8(read(a.path(), "reports/eval_x2y.csv")).unwrap();
    for metric in ["target_probability", "centroid_shift", "chamfer", "emd_per_n", "mse", "iou"] {
        assert!(eval.contains(&format!(",{metric},")), "missing {metric}");
    }
}

#[test]
fn phases_run_in_order() {
    let d = workspace();
    prepare(d.path());
    let o = lsx(d.path(), &["train", "translator", "--config", "c.toml"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("lsx train ae"), "{}", stderr(&o));
    let o = lsx(d.path(), &["translate", "--config", "c.toml", "--dir", "x2y"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn resume_skips_up_to_date_phase() {
    let d = workspace();
    prepare(d.path());
    ok(d.path(), &["train", "ae", "--config", "c.toml"]);
    let o = ok(d.path(), &["train", "ae", "--config", "c.toml", "--resume"]);
    assert!(stderr(&o).contains("up to date"), "{}", stderr(&o));
    let o = ok(d.path(), &["train", "ae", "--config", "c.toml", "--resume", "--set", "train.ae_epochs=1"]);
    assert!(stderr(&o).contains("stale"), "{}", stderr(&o));
    // The translator now depends on a one-epoch AE the config no longer describes.
    let o = lsx(d.path(), &["train", "translator", "--config", "c.toml"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn lock_blocks_concurrent_writer() {
    let d = workspace();
    prepare(d.path());
    fs::create_dir_all(d.path().join("checkpoints")).unwrap();
    fs::write(d.path().join("checkpoints/.lock"), "").unwrap();
    let o = lsx(d.path(), &["train", "ae", "--config", "c.toml"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("in use"));
}

#[test]
fn diverging_training_exits_numeric() {
    let d = workspace();
    prepare(d.path());
    let o = lsx(d.path(), &["train", "ae", "--config", "c.toml", "--set", "train.ae_lr.initial=1e300"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn usage_and_data_errors() {
    let d = workspace();
    assert_eq!(lsx(d.path(), &["--help"]).status.code(), Some(0));
    assert_eq!(lsx(d.path(), &["frobnicate"]).status.code(), Some(1));
    assert_eq!(lsx(d.path(), &["translate", "--config", "c.toml"]).status.code(), Some(1));
    assert_eq!(lsx(d.path(), &["gen-data", "--family-x", "blobs"]).status.code(), Some(1));
    assert_eq!(lsx(d.path(), &["split", "--set", "train.alpah=2"]).status.code(), Some(1));
    let o = lsx(d.path(), &["ingest", "--masks", "nowhere"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("nowhere"), "{}", stderr(&o));
}

#[test]
fn recorded_config_reproduces_itself() {
    let d = workspace();
    ok(d.path(), &["gen-data", "--config", "c.toml", "--count", "4", "--seed", "11", "--profile", "desk"]);
    let first = read(d.path(), "reports/config.toml");
    fs::copy(d.path().join("reports/config.toml"), d.path().join("again.toml")).unwrap();
    ok(d.path(), &["split", "--config", "again.toml"]);
    assert_eq!(read(d.path(), "reports/config.toml"), first);
    assert!(String::from_utf8(first).unwrap().contains("seed = 11"));
}
