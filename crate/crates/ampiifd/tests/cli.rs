//! End-to-end checks of the `register` subcommand: exit codes and artifact
//! layout, driven through the compiled binary.

use std::path::Path;
use std::process::Command;

use ampiifd::image::{save_image, Image};
use ampiifd::synth::natural_image;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ampiifd"))
}

fn write_pair(dir: &Path) -> (std::path::PathBuf, std::path::PathBuf) {
    let img = natural_image(160, 160, 3);
    let r = dir.join("ref.png");
    let s = dir.join("sen.png");
    save_image(&img, &r).unwrap();
    save_image(&img, &s).unwrap();
    (r, s)
}

#[test]
fn successful_registration_exits_zero_and_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let (r, s) = write_pair(dir.path());
    let out = dir.path().join("out");
    let status = bin()
        .args(["register"])
        .arg(&r)
        .arg(&s)
        .args(["--model", "similarity", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    for artifact in [
        "report.json",
        "transform.txt",
        "matches.txt",
        "warped.png",
        "mosaic_gray.png",
        "mosaic_rgb.png",
        "matches_vis.png",
    ] {
        let p = out.join(artifact);
        assert!(p.is_file(), "missing artifact {artifact}");
        assert!(p.metadata().unwrap().len() > 0, "empty artifact {artifact}");
    }
}

#[test]
fn featureless_inputs_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let flat = Image::from_fn(64, 64, |_, _| 0.5);
    let r = dir.path().join("ref.png");
    let s = dir.path().join("sen.png");
    save_image(&flat, &r).unwrap();
    save_image(&flat, &s).unwrap();
    let status = bin()
        .args(["register"])
        .arg(&r)
        .arg(&s)
        .args(["--out"])
        .arg(dir.path().join("out"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2), "no-model case must exit 2");
}

#[test]
fn missing_input_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let status = bin()
        .args(["register"])
        .arg(dir.path().join("absent_ref.png"))
        .arg(dir.path().join("absent_sen.png"))
        .args(["--out"])
        .arg(dir.path().join("out"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(3), "unreadable input must exit 3");
}

#[test]
fn invalid_config_exits_four() {
    let dir = tempfile::tempdir().unwrap();
    let (r, s) = write_pair(dir.path());

    // Unknown key in a config file.
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "no_such_key = 1\n").unwrap();
    let status = bin()
        .args(["register"])
        .arg(&r)
        .arg(&s)
        .args(["--config"])
        .arg(&cfg)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(4), "unknown config key must exit 4");

    // Invalid parameter value on the command line.
    let status = bin()
        .args(["register"])
        .arg(&r)
        .arg(&s)
        .args(["--param", "num_octaves=0"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(4), "invalid parameter must exit 4");
}
