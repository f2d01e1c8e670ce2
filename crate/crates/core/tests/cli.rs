use std::path::Path;
use std::process::{Command, Output};

use blindsr::degrade::{gaussian_kernel, KernelShape};
use blindsr::harness::charts::{chart, ChartKind};
use blindsr::imgcore::{load_image, read_kernel, save_image};
use blindsr::Image;

fn blindsr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_blindsr"))
        .args(args)
        .env_remove("KX_THREADS")
        .output()
        .expect("spawn blindsr")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_chart(dir: &Path, name: &str, kind: ChartKind, h: usize, w: usize) -> std::path::PathBuf {
    let path = dir.join(name);
    save_image(&chart(kind, h, w, 5).unwrap(), &path).unwrap();
    path
}

fn read(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap()
}

#[test]
fn identity_pipeline_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let hr = write_chart(dir.path(), "hr.png", ChartKind::Waves, 24, 30);
    let deg = dir.path().join("deg");
    let out = blindsr(&["degrade", "--input", s(&hr), "--out-dir", s(&deg), "--scale", "1", "--kernel-size", "1", "--noise", "0"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(load_image(deg.join("lr.png")).unwrap(), load_image(&hr).unwrap());

    let sol = dir.path().join("sol");
    let out = blindsr(&[
        "solve", "--input", s(&deg.join("lr.png")), "--out-dir", s(&sol), "--scale", "1", "--kernel-size", "1",
        "--stages", "3",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = blindsr(&["eval", "--sr", s(&sol.join("sr.png")), "--gt", s(&deg.join("hr.png"))]);
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["psnr_db"], "inf");
    assert_eq!(report["ssim"], 1.0);
}

#[test]
fn degrade_is_deterministic_and_crops() {
    let dir = tempfile::tempdir().unwrap();
    let hr = write_chart(dir.path(), "hr.png", ChartKind::Blocks, 33, 38);
    let run = |name: &str| {
        let out_dir = dir.path().join(name);
        let out = blindsr(&[
            "degrade", "--input", s(&hr), "--out-dir", s(&out_dir), "--scale", "3", "--kernel-size", "7", "--sigma",
            "1.3", "--noise", "10", "--seed", "42",
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        out_dir
    };
    let (a, b) = (run("a"), run("b"));
    for f in ["lr.png", "hr.png", "kernel.txt", "degradation.json"] {
        assert_eq!(read(&a.join(f)), read(&b.join(f)), "{f}");
    }
    let cropped = load_image(a.join("hr.png")).unwrap();
    assert_eq!((cropped.height(), cropped.width()), (33, 36));
    let lr = load_image(a.join("lr.png")).unwrap();
    assert_eq!((lr.height(), lr.width()), (11, 12));
    let sidecar: serde_json::Value = serde_json::from_slice(&read(&a.join("degradation.json"))).unwrap();
    assert_eq!(sidecar["seed"], 42);
    assert_eq!(sidecar["noise"], 10.0);
}

#[test]
#[allow(clippy::approx_constant)]
fn degrade_setting2_sidecar_and_kernel() {
    let dir = tempfile::tempdir().unwrap();
    let hr = write_chart(dir.path(), "hr.png", ChartKind::Disks, 32, 32);
    let out_dir = dir.path().join("o");
    let out = blindsr(&[
        "degrade", "--input", s(&hr), "--out-dir", s(&out_dir), "--setting2", "--l1", "2.0", "--l2", "4.0", "--theta",
        "0.7854",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let sidecar: serde_json::Value = serde_json::from_slice(&read(&out_dir.join("degradation.json"))).unwrap();
    assert_eq!(sidecar["kernel"]["theta"], 0.7854);
    assert_eq!(sidecar["kernel"]["type"], "aniso");
    assert_eq!(sidecar["kernel_size"], 11);
    let k = read_kernel(out_dir.join("kernel.txt")).unwrap();
    let expected = gaussian_kernel(11, KernelShape::Aniso { lambda1: 2.0, lambda2: 4.0, theta: 0.7854 }).unwrap();
    assert_eq!(k, expected);
}

#[test]
fn bad_arguments_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let hr = write_chart(dir.path(), "hr.png", ChartKind::Disks, 16, 16);
    let o = dir.path().join("o");
    let out = blindsr(&["degrade", "--input", s(&hr), "--out-dir", s(&o), "--kernel-size", "4"]);
    assert_eq!(out.status.code(), Some(2));
    let out = blindsr(&["degrade", "--input", s(&hr), "--out-dir", s(&o), "--l1", "2.0"]);
    assert_eq!(out.status.code(), Some(2));
    let out = blindsr(&["solve", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
    let out = blindsr(&["degrade", "--input", s(&dir.path().join("missing.png")), "--out-dir", s(&o)]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn solve_trace_columns_and_rows() {
    let dir = tempfile::tempdir().unwrap();
    let hr = write_chart(dir.path(), "hr.png", ChartKind::Rings, 32, 32);
    let deg = dir.path().join("deg");
    let out = blindsr(&["degrade", "--input", s(&hr), "--out-dir", s(&deg), "--kernel-size", "7", "--sigma", "1.0"]);
    assert!(out.status.success());
    let lr = deg.join("lr.png");

    let plain = dir.path().join("plain");
    let out = blindsr(&["solve", "--input", s(&lr), "--out-dir", s(&plain), "--kernel-size", "7", "--stages", "4"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let trace = std::fs::read_to_string(plain.join("trace.csv")).unwrap();
    let lines: Vec<&str> = trace.lines().collect();
    assert_eq!(lines[0], "stage,fidelity,kernel_change");
    assert_eq!(lines.len(), 1 + 5);
    assert!(lines[1].starts_with("0,"));
    let k = read_kernel(plain.join("kernel.txt")).unwrap();
    assert_eq!(k.size(), 7);
    assert_eq!(load_image(plain.join("sr.png")).unwrap().height(), 32);

    let gt = dir.path().join("gt");
    let out = blindsr(&[
        "solve", "--input", s(&lr), "--out-dir", s(&gt), "--kernel-size", "7", "--stages", "2", "--prox", "tikhonov",
        "--tau", "0.001", "--gt-image", s(&deg.join("hr.png")), "--gt-kernel", s(&deg.join("kernel.txt")),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let trace = std::fs::read_to_string(gt.join("trace.csv")).unwrap();
    let lines: Vec<&str> = trace.lines().collect();
    assert_eq!(lines[0], "stage,fidelity,kernel_change,psnr,kernel_l1");
    assert_eq!(lines.len(), 1 + 3);
    let cfg: serde_json::Value = serde_json::from_slice(&read(&gt.join("config.json"))).unwrap();
    assert_eq!(cfg["image_prox"]["type"], "tikhonov");
}

#[test]
fn solve_config_file_and_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let hr = write_chart(dir.path(), "hr.png", ChartKind::Rings, 16, 16);
    let deg = dir.path().join("deg");
    assert!(blindsr(&["degrade", "--input", s(&hr), "--out-dir", s(&deg), "--kernel-size", "5"]).status.success());
    let cfg_path = dir.path().join("cfg.json");
    std::fs::write(&cfg_path, r#"{"stages": 6, "kernel_size": 5, "image_prox": {"type": "tv", "tau": 0.01, "inner_iters": 5}}"#).unwrap();
    let o = dir.path().join("o");
    let out = blindsr(&[
        "solve", "--input", s(&deg.join("lr.png")), "--out-dir", s(&o), "--config", s(&cfg_path), "--stages", "2",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let used: serde_json::Value = serde_json::from_slice(&read(&o.join("config.json"))).unwrap();
    assert_eq!(used["stages"], 2);
    assert_eq!(used["image_prox"]["type"], "tv");
    assert_eq!(std::fs::read_to_string(o.join("trace.csv")).unwrap().lines().count(), 1 + 3);

    std::fs::write(&cfg_path, r#"{"stagez": 6}"#).unwrap();
    let out = blindsr(&["solve", "--input", s(&deg.join("lr.png")), "--out-dir", s(&o), "--config", s(&cfg_path)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn divergence_exits_3_with_stage() {
    let dir = tempfile::tempdir().unwrap();
    let hr = write_chart(dir.path(), "hr.png", ChartKind::Blocks, 16, 16);
    let deg = dir.path().join("deg");
    assert!(blindsr(&["degrade", "--input", s(&hr), "--out-dir", s(&deg), "--kernel-size", "5"]).status.success());
    let out = blindsr(&[
        "solve", "--input", s(&deg.join("lr.png")), "--out-dir", s(&dir.path().join("o")), "--kernel-size", "5",
        "--image-step", "1e300", "--fixed-kernel", "--stages", "10",
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("stage"));
}

#[test]
fn eval_reports_and_borders() {
    let dir = tempfile::tempdir().unwrap();
    let base = Image::filled(20, 20, 1, 0.5).unwrap();
    // Corrupt only the outermost two rings of pixels.
    let edged = Image::from_fn(20, 20, 1, |i, j, _| {
        if i < 2 || j < 2 || i >= 18 || j >= 18 { 0.9 } else { 0.5 }
    })
    .unwrap();
    let (a, b) = (dir.path().join("a.png"), dir.path().join("b.png"));
    save_image(&base, &a).unwrap();
    save_image(&edged, &b).unwrap();

    let o0 = dir.path().join("r0");
    let out = blindsr(&["eval", "--sr", s(&b), "--gt", s(&a), "--border", "0", "--out-dir", s(&o0)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r0: serde_json::Value = serde_json::from_slice(&read(&o0.join("report.json"))).unwrap();
    let p0 = r0["psnr_db"].as_f64().unwrap();
    assert!(p0.is_finite());
    let csv = std::fs::read_to_string(o0.join("report.csv")).unwrap();
    assert!(csv.starts_with("psnr_db,ssim,kernel_l1,stage_loss,border\n"));

    let out = blindsr(&["eval", "--sr", s(&b), "--gt", s(&a), "--border", "2"]);
    assert!(out.status.success());
    let r2: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r2["psnr_db"], "inf");
    assert_eq!(r2["border"], 2);

    let small = dir.path().join("small.png");
    save_image(&Image::filled(20, 19, 1, 0.5).unwrap(), &small).unwrap();
    let out = blindsr(&["eval", "--sr", s(&small), "--gt", s(&a)]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn eval_with_kernels() {
    let dir = tempfile::tempdir().unwrap();
    let img = write_chart(dir.path(), "x.png", ChartKind::Waves, 16, 16);
    let g8 = dir.path().join("g8");
    assert!(blindsr(&["gaussian8", "--scale", "2", "--out-dir", s(&g8)]).status.success());
    let k0 = g8.join("g8_x2_0.txt");
    let k7 = g8.join("g8_x2_7.txt");
    let out = blindsr(&["eval", "--sr", s(&img), "--gt", s(&img), "--kernel", s(&k0), "--gt-kernel", s(&k7)]);
    assert!(out.status.success());
    let r: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let expected = read_kernel(&k0).unwrap().l1_distance(&read_kernel(&k7).unwrap()).unwrap();
    assert_eq!(r["kernel_l1"].as_f64().unwrap(), expected);
}

#[test]
fn gaussian8_writes_eight_kernels() {
    let dir = tempfile::tempdir().unwrap();
    let out = blindsr(&["gaussian8", "--scale", "3", "--out-dir", s(dir.path())]);
    assert!(out.status.success());
    assert_eq!(String::from_utf8_lossy(&out.stdout).lines().count(), 8);
    for n in 0..8 {
        assert_eq!(read_kernel(dir.path().join(format!("g8_x3_{n}.txt"))).unwrap().size(), 21);
    }
    assert_eq!(blindsr(&["gaussian8", "--scale", "5", "--out-dir", s(dir.path())]).status.code(), Some(2));
}

fn bench(dir: &Path, images: &Path, out: &str, extra: &[&str]) -> (Output, std::path::PathBuf) {
    let out_dir = dir.join(out);
    let mut args = vec!["bench", "--images", s(images), "--output", s(&out_dir), "--stages", "1", "--seed", "9"];
    args.extend_from_slice(extra);
    (blindsr(&args), out_dir)
}

#[test]
fn bench_case_counts_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let images = dir.path().join("imgs");
    std::fs::create_dir(&images).unwrap();
    write_chart(&images, "one.png", ChartKind::Disks, 32, 32);

    let (out, g8) = bench(dir.path(), &images, "g8", &["--noise", "0,5"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let cases = std::fs::read_to_string(g8.join("cases.csv")).unwrap();
    assert_eq!(cases.lines().count(), 1 + 16);
    let summary = std::fs::read_to_string(g8.join("summary.csv")).unwrap();
    assert!(summary.starts_with("method,setting,scale,noise,cases,failed,psnr_db,ssim\n"));
    assert_eq!(summary.lines().count(), 1 + 4);

    let (out, s2) = bench(dir.path(), &images, "s2", &["--setting", "setting2", "--threads", "2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(std::fs::read_to_string(s2.join("cases.csv")).unwrap().lines().count(), 1 + 8);

    let (_, again) = bench(dir.path(), &images, "s2b", &["--setting", "setting2", "--threads", "1"]);
    assert_eq!(read(&s2.join("summary.csv")), read(&again.join("summary.csv")));
    assert_eq!(read(&s2.join("cases.csv")), read(&again.join("cases.csv")));
}

#[test]
fn bench_failed_cases_are_rows_and_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let images = dir.path().join("imgs");
    std::fs::create_dir(&images).unwrap();
    write_chart(&images, "one.png", ChartKind::Blocks, 24, 24);
    let (out, o) = bench(dir.path(), &images, "o", &["--image-step", "1e300", "--fixed-kernel"]);
    assert_eq!(out.status.code(), Some(3));
    let cases = std::fs::read_to_string(o.join("cases.csv")).unwrap();
    assert_eq!(cases.lines().count(), 1 + 8);
    assert!(cases.lines().skip(1).all(|l| l.contains(",failed,")));
    assert!(o.join("summary.csv").exists());
}
