mod common;

use std::path::Path;
use std::process::{Command, Output};

use sketchedit::imageio::{load_rgb, save_mask, save_png};
use sketchedit_core::synth::toy_portrait;
use sketchedit_core::BinaryMask;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sketchedit")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn gradcheck_passes() {
    let out = run(&["gradcheck", "--seed", "1"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(!String::from_utf8_lossy(&out.stdout).contains("FAIL"));
}

#[test]
fn forge_train_edit_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = d.join("config.toml");
    std::fs::write(&cfg, common::SMALL).unwrap();
    let (a, b) = (d.join("a.fsds"), d.join("b.fsds"));
    let out = run(&["forge", "--synthetic", "6", "--config", s(&cfg), "--out", s(&a), s(&b)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(sketchedit::shard::read_shard(&a).unwrap().len(), 3);

    let run_dir = d.join("run");
    let out = run(&["train", "--shards", s(&a), s(&b), "--config", s(&cfg), "--steps", "2", "--out", s(&run_dir)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let ckpt = run_dir.join("latest.fsck");
    assert!(ckpt.exists());

    let image = d.join("in.png");
    let mask = d.join("mask.png");
    let sketch = d.join("sketch.png");
    save_png(&image, &toy_portrait(32, 9).unwrap()).unwrap();
    let m = BinaryMask::from_fn(32, 32, |x, y| (8..20).contains(&x) && (12..24).contains(&y));
    save_mask(&mask, &m).unwrap();
    save_mask(&sketch, &BinaryMask::from_fn(32, 32, |x, y| x == y)).unwrap();
    let result = d.join("out.png");
    let args = ["edit", "--image", s(&image), "--mask", s(&mask), "--sketch", s(&sketch), "--ckpt", s(&ckpt), "--out", s(&result), "--seed", "5"];
    let out = run(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let first = std::fs::read(&result).unwrap();
    assert!(run(&args).status.success());
    assert_eq!(std::fs::read(&result).unwrap(), first);

    let (orig, edited) = (load_rgb(&image).unwrap(), load_rgb(&result).unwrap());
    for y in 0..32 {
        for x in 0..32 {
            if !m.get(x, y) {
                assert_eq!(orig.pixel(x, y), edited.pixel(x, y));
            }
        }
    }

    let pasted = d.join("paste.png");
    let out = run(&["copy-paste", "--source", s(&image), "--source-mask", s(&mask), "--target", s(&image), "--offset", "-2,3", "--ckpt", s(&ckpt), "--out", s(&pasted)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(pasted.exists());
}

#[test]
fn errors_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let missing = d.join("missing.fsck");
    let out = run(&["edit", "--image", "x.png", "--mask", "m.png", "--ckpt", s(&missing), "--out", s(&d.join("o.png"))]);
    assert_eq!(out.status.code(), Some(3));

    let bad = d.join("bad.fsds");
    std::fs::write(&bad, b"JUNKJUNKJUNKJUNK").unwrap();
    let out = run(&["train", "--shards", s(&bad), "--steps", "1", "--out", s(&d.join("r"))]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("at byte 0"));

    let cfg = d.join("c.toml");
    std::fs::write(&cfg, "size = \"big\"").unwrap();
    let out = run(&["forge", "--synthetic", "1", "--config", s(&cfg), "--out", s(&d.join("x.fsds"))]);
    assert_eq!(out.status.code(), Some(7));
}
