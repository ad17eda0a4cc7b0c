use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/synthetic")
}

fn copy_fixture() -> tempfile::TempDir {
    let tmp = tempfile::tempdir().unwrap();
    for entry in std::fs::read_dir(fixture()).unwrap() {
        let entry = entry.unwrap();
        if entry.file_type().unwrap().is_file() {
            std::fs::copy(entry.path(), tmp.path().join(entry.file_name())).unwrap();
        }
    }
    tmp
}

fn lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_exposure-lab"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn text(o: &Output) -> String {
    format!("{}{}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr))
}

#[test]
fn invalid_threshold_exits_with_validation_code() {
    let dir = copy_fixture();
    let cfg = dir.path().join("config.toml");
    let body = std::fs::read_to_string(&cfg).unwrap();
    std::fs::write(&cfg, format!("{body}\n[newwork]\nthreshold = 1.5\n")).unwrap();
    let out = lab(&["newwork", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "{}", text(&out));
    assert!(text(&out).contains("newwork.threshold"), "{}", text(&out));
}

#[test]
fn missing_input_file_is_named() {
    let dir = copy_fixture();
    std::fs::remove_file(dir.path().join("covariates.csv")).unwrap();
    let out = lab(&["all", "--config", dir.path().join("config.toml").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "{}", text(&out));
    assert!(text(&out).contains("covariates"), "{}", text(&out));
}

#[test]
fn run_all_then_cached_rerun() {
    let dir = copy_fixture();
    let cfg = dir.path().join("config.toml");
    let first = lab(&["all", "--config", cfg.to_str().unwrap(), "--threads", "2"]);
    assert!(first.status.success(), "{}", text(&first));
    let out = dir.path().join("out/default");
    for f in ["estimate/results.csv", "estimate/tables.txt", "panel/panel.csv", "estimate/manifest.json"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let results = std::fs::read(out.join("estimate/results.csv")).unwrap();

    let second = lab(&["all", "--config", cfg.to_str().unwrap()]);
    assert!(second.status.success(), "{}", text(&second));
    let stdout = String::from_utf8_lossy(&second.stdout);
    assert_eq!(stdout.lines().filter(|l| l.ends_with("cached")).count(), 7, "{stdout}");
    assert_eq!(std::fs::read(out.join("estimate/results.csv")).unwrap(), results);

    let posts = dir.path().join("posts.jsonl");
    let mut body = std::fs::read_to_string(&posts).unwrap();
    body.push_str("{\"id\":\"extra-1\",\"year\":2021,\"votes\":40,\"tags\":[\"machine-learning\"],\"country\":\"US\"}\n");
    std::fs::write(&posts, body).unwrap();
    let third = lab(&["exposure", "--config", cfg.to_str().unwrap()]);
    assert!(third.status.success(), "{}", text(&third));
    let stdout = String::from_utf8_lossy(&third.stdout);
    assert!(stdout.contains("ingest   ran") && stdout.contains("matrices cached"), "{stdout}");
}

#[test]
fn synth_and_texts_commands() {
    let dir = tempfile::tempdir().unwrap();
    let fx = dir.path().join("fx");
    let out = lab(&["synth", "--out", fx.to_str().unwrap(), "--seed", "7", "--posts", "40"]);
    assert!(out.status.success(), "{}", text(&out));
    assert!(fx.join("config.toml").exists());
    let texts = dir.path().join("texts.csv");
    let out = lab(&["texts", "--config", fx.join("config.toml").to_str().unwrap(), "--out", texts.to_str().unwrap()]);
    assert!(out.status.success(), "{}", text(&out));
    let body = std::fs::read_to_string(&texts).unwrap();
    assert!(body.starts_with("id,text\n"));
    assert!(body.contains("\ntitle/"));
}
