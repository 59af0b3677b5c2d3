use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use raf_core::generator::generate_poisson2d;
use raf_core::sparse::write_matrix_market;

fn raf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_raf"))
        .arg("-q")
        .args(args)
        .env("RAF_THREADS", "1")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = raf(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Three Poisson matrices and one malformed file.
fn matrix_dir(root: &Path) -> PathBuf {
    let dir = root.join("matrices");
    fs::create_dir_all(&dir).unwrap();
    for (i, (nx, ny)) in [(32, 32), (33, 32), (34, 31)].into_iter().enumerate() {
        let a = generate_poisson2d(nx, ny).unwrap();
        fs::write(dir.join(format!("p{i}.mtx")), write_matrix_market(&a)).unwrap();
    }
    fs::write(dir.join("zz_bad.mtx"), "%%MatrixMarket matrix coordinate real general\n3 3 1\nnot numbers\n").unwrap();
    dir
}

fn label(root: &Path) -> PathBuf {
    let dir = matrix_dir(root);
    let manifest = root.join("labels.jsonl");
    ok(&["label", "--dir", s(&dir), "--manifest", s(&manifest), "--rank-by", "iterations"]);
    manifest
}

#[test]
fn label_skips_malformed_files_unless_strict() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = label(tmp.path());
    let lines = fs::read_to_string(&manifest).unwrap();
    assert_eq!(lines.lines().count(), 3);
    assert!(!lines.contains("zz_bad"));

    let strict = raf(&[
        "label",
        "--dir",
        s(&tmp.path().join("matrices")),
        "--manifest",
        s(&tmp.path().join("strict.jsonl")),
        "--rank-by",
        "iterations",
        "--strict",
    ]);
    assert_eq!(strict.status.code(), Some(2));
}

#[test]
fn extract_strict_fails_on_corrupt_matrix() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = label(tmp.path());
    fs::write(tmp.path().join("matrices/p1.mtx"), "corrupt").unwrap();

    let out = tmp.path().join("features");
    ok(&["extract", "--manifest", s(&manifest), "--out", s(&out), "--m", "8"]);
    let mut written: Vec<_> = fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.ends_with(".rafb"))
        .collect();
    written.sort();
    assert_eq!(written, ["p0.rafb", "p2.rafb"]);

    let strict = raf(&["extract", "--manifest", s(&manifest), "--out", s(&tmp.path().join("f2")), "--m", "8", "--strict"]);
    assert!(!strict.status.success());
}

#[test]
fn predict_prints_requested_ranking() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = label(tmp.path());
    let features = tmp.path().join("features");
    let model = tmp.path().join("model.rafm");
    ok(&["extract", "--manifest", s(&manifest), "--out", s(&features), "--m", "8"]);
    ok(&[
        "train",
        "--manifest",
        s(&manifest),
        "--features",
        s(&features),
        "--model",
        s(&model),
        "--epochs",
        "2",
    ]);
    let stdout = ok(&["predict", "--model", s(&model), "--features", s(&features.join("p0.rafb")), "--top", "3"]);
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines.len(), 3, "{stdout}");
    assert!(lines[0].starts_with('1'));

    let stdout = ok(&["predict", "--model", s(&model), "--matrix", s(&tmp.path().join("matrices/p2.mtx"))]);
    assert_eq!(stdout.lines().count(), 3);
}

fn decode(path: &Path) -> (u32, Vec<u8>) {
    let decoder = png::Decoder::new(std::io::BufReader::new(fs::File::open(path).unwrap()));
    let mut reader = decoder.read_info().unwrap();
    let mut buf = vec![0; reader.output_buffer_size()];
    let info = reader.next_frame(&mut buf).unwrap();
    assert_eq!(info.color_type, png::ColorType::Rgb);
    buf.truncate(info.buffer_size());
    (info.width, buf)
}

#[test]
fn render_writes_rgb_images() {
    let tmp = tempfile::tempdir().unwrap();
    let matrix = tmp.path().join("a.mtx");
    fs::write(&matrix, write_matrix_market(&generate_poisson2d(20, 20).unwrap())).unwrap();

    let raf_out = tmp.path().join("raf");
    ok(&["render", "--matrix", s(&matrix), "--out", s(&raf_out), "--m", "16"]);
    let png = fs::read_dir(&raf_out).unwrap().next().unwrap().unwrap().path();
    let (width, pixels) = decode(&png);
    assert_eq!(width, 16);
    assert!(pixels.chunks(3).all(|p| p[2] == 0));
    assert!(pixels.chunks(3).any(|p| p[1] > 0));

    let manifest = label(tmp.path());
    let base_out = tmp.path().join("baseline");
    ok(&["render", "--manifest", s(&manifest), "--out", s(&base_out), "--m", "16", "--mode", "baseline"]);
    let pngs: Vec<_> = fs::read_dir(&base_out).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(pngs.len(), 3);
    assert!(pngs.iter().any(|p| decode(p).1.chunks(3).any(|px| px[2] > 0)));
}
