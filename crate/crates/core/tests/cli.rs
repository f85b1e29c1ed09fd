use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use mlmc::io::{read_image, write_image, RunManifest};
use mlmc::scene::synthetic_scene;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const TINY: [&str; 14] = [
    "--set", "restorer_depth=2",
    "--set", "restorer_channels=4",
    "--set", "restorer_skip_channels=2",
    "--set", "restorer_input_channels=3",
    "--set", "kernel_input_dim=8",
    "--set", "kernel_hidden=16",
    "--iters", "2",
];

fn mlmc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mlmc"))
        .args(args)
        .env_remove("MLMC_SEED")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = mlmc(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_scene(path: &Path, side: usize) {
    let img = synthetic_scene(&mut ChaCha8Rng::seed_from_u64(9), side, side + 4, 3).unwrap();
    write_image(path, &img).unwrap();
}

#[test]
fn synth_solve_eval_through_manifests() {
    let dir = tempfile::tempdir().unwrap();
    let hr = dir.path().join("scene.png");
    write_scene(&hr, 40);
    let synth = dir.path().join("synth");
    ok(&[&["synth", "--hr", s(&hr), "--out", s(&synth), "--seed", "4"], &TINY[..12]].concat());

    let m = RunManifest::read(&synth.join("manifest.json")).unwrap();
    assert_eq!(m.command, "synth");
    assert!(m.missing_outputs().is_empty());
    assert!(m.metrics.contains_key("sigma1"));
    let lr = read_image(&synth.join("lr.png")).unwrap();
    assert_eq!(lr.dims(), (20, 20, 3));

    let solved = dir.path().join("solved");
    let manifest = synth.join("manifest.json");
    ok(&[&["solve", "--from", s(&manifest), "--out", s(&solved), "--seed", "4"], &TINY[..]].concat());
    let m = RunManifest::read(&solved.join("manifest.json")).unwrap();
    assert!(m.missing_outputs().is_empty());
    for key in ["image_psnr", "kernel_psnr", "reconstruction_error"] {
        assert!(m.metrics[key].is_finite(), "{key}");
    }
    let trace = fs::read_to_string(solved.join("trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 1 + 2 * 2);

    let solve_manifest = solved.join("manifest.json");
    let printed = ok(&["eval", "--from", s(&solve_manifest)]);
    let header = printed.lines().next().unwrap();
    assert!(header.contains("psnr"), "{printed}");
    // eval scores the saved 8-bit image, solve the unquantized one
    let csv = fs::read_to_string(solved.join("eval.csv")).unwrap();
    let psnr: f64 = csv.lines().nth(1).unwrap().split(',').next().unwrap().parse().unwrap();
    assert!((psnr - m.metrics["image_psnr"]).abs() < 0.01, "{psnr} vs {}", m.metrics["image_psnr"]);
}

#[test]
fn repeated_solves_write_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let hr = dir.path().join("scene.png");
    write_scene(&hr, 32);
    let synth = dir.path().join("synth");
    ok(&[&["synth", "--hr", s(&hr), "--out", s(&synth)], &TINY[..12]].concat());
    let lr = synth.join("lr.png");
    let run = |name: &str| {
        let out = dir.path().join(name);
        ok(&[&["solve", "--lr", s(&lr), "--out", s(&out), "--seed", "7", "--no-timing"], &TINY[..]].concat());
        out
    };
    let (a, b) = (run("a"), run("b"));
    for file in ["sr.png", "kernel.txt", "kernel.png", "trace.csv"] {
        assert_eq!(fs::read(a.join(file)).unwrap(), fs::read(b.join(file)).unwrap(), "{file}");
    }
}

#[test]
fn delta_kernel_at_unit_scale_copies_the_image() {
    let dir = tempfile::tempdir().unwrap();
    let hr = dir.path().join("scene.png");
    write_scene(&hr, 36);
    let synth = dir.path().join("synth");
    ok(&[&["synth", "--hr", s(&hr), "--out", s(&synth), "--kernel", "delta", "--scale", "1"], &TINY[..12]].concat());
    assert_eq!(
        fs::read(synth.join("hr.png")).unwrap(),
        fs::read(synth.join("lr.png")).unwrap()
    );
}

#[test]
fn exit_codes() {
    assert_eq!(mlmc(&[]).status.code(), Some(1));
    assert_eq!(mlmc(&["solve", "--out", "/tmp/x"]).status.code(), Some(1));
    assert_eq!(mlmc(&["synth", "--hr", "/no/such.png", "--out", "/tmp/x"]).status.code(), Some(1));
    assert_eq!(mlmc(&["gradcheck", "--trials", "2"]).status.code(), Some(0));
    assert_eq!(
        mlmc(&["gradcheck", "--trials", "2", "--inject-fault", "sigmoid"]).status.code(),
        Some(2)
    );
}

#[test]
fn seed_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let hr = dir.path().join("scene.png");
    write_scene(&hr, 32);
    let synth = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_mlmc"))
            .args([&["synth", "--hr", s(&hr), "--out", s(&out)], &TINY[..12]].concat())
            .env("MLMC_SEED", seed)
            .status()
            .unwrap();
        assert!(status.success());
        RunManifest::read(&out.join("manifest.json")).unwrap()
    };
    assert_eq!(synth("a", "21").seed, 21);
    assert_eq!(synth("b", "22").seed, 22);
}
