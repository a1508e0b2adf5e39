use std::path::Path;
use std::process::{Command, Output};

use hullsplat::synth::ViewSet;
use hullsplat::Mask;

fn hullsplat(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hullsplat")).args(args).output().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn assert_ok(out: &Output) {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

fn assert_exit(out: &Output, code: i32, stderr_has: &str) {
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert_eq!(out.status.code(), Some(code), "stderr: {stderr}");
    assert!(stderr.starts_with("error: "), "stderr: {stderr}");
    assert!(stderr.contains(stderr_has), "stderr: {stderr}");
}

fn small_dataset(dir: &Path) {
    assert_ok(&hullsplat(&["synth", "--out", path(dir), "--views", "8", "--resolution", "48"]));
}

#[test]
fn staged_commands_chain() {
    let tmp = tempfile::tempdir().unwrap();
    let (data, carve, recon, mesh) = (
        tmp.path().join("data"),
        tmp.path().join("carve"),
        tmp.path().join("recon"),
        tmp.path().join("mesh"),
    );
    small_dataset(&data);
    assert!(data.join("cameras.json").is_file());
    assert!(ViewSet::mask_path(&data, 7).is_file());

    assert_ok(&hullsplat(&[
        "carve", "--data", path(&data), "--out", path(&carve), "--resolution", "32", "--n-init", "400",
    ]));
    let points = carve.join("points.ply");
    assert!(points.is_file());

    assert_ok(&hullsplat(&[
        "reconstruct", "--data", path(&data), "--init", path(&points), "--out", path(&recon), "--iterations", "10",
    ]));
    for f in ["gaussians.ply", "loss.csv", "renders/view_000.png"] {
        assert!(recon.join(f).is_file(), "{f} missing");
    }
    let csv = std::fs::read_to_string(recon.join("loss.csv")).unwrap();
    assert_eq!(csv.lines().count(), 11);

    assert_ok(&hullsplat(&[
        "mesh", "--grid", path(&carve), "--data", path(&data), "--out", path(&mesh), "--steps", "3",
    ]));
    assert!(mesh.join("mesh.obj").is_file());

    let metrics = tmp.path().join("m.json");
    assert_ok(&hullsplat(&[
        "eval",
        "--rendered",
        path(&recon.join("renders")),
        "--reference",
        path(&data),
        "--points",
        path(&recon.join("gaussians.ply")),
        "--reference-points",
        path(&points),
        "--out",
        path(&metrics),
    ]));
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(metrics).unwrap()).unwrap();
    assert!(m["psnr"].as_f64().unwrap() > 5.0);
    assert!(m["chamfer"].as_f64().unwrap() >= 0.0);
}

#[test]
fn eval_against_itself_is_perfect() {
    let tmp = tempfile::tempdir().unwrap();
    small_dataset(tmp.path());
    let out = hullsplat(&["eval", "--rendered", path(&tmp.path().join("images")), "--reference", path(tmp.path())]);
    assert_ok(&out);
    let m: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(m["psnr"].as_f64(), Some(100.0));
    assert_eq!(m["ssim"].as_f64(), Some(1.0));
    assert!(m["chamfer"].is_null());
}

#[test]
fn staged_outputs_are_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    small_dataset(&data);
    let run = |name: &str| {
        let out = tmp.path().join(name);
        assert_ok(&hullsplat(&[
            "carve", "--data", path(&data), "--out", path(&out), "--resolution", "24", "--n-init", "300", "--seed", "5",
        ]));
        std::fs::read(out.join("points.ply")).unwrap()
    };
    assert_eq!(run("a"), run("b"));
}

#[test]
fn config_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    small_dataset(&data);
    let cfg = tmp.path().join("carve.json");

    std::fs::write(&cfg, r#"{"n_init": 0}"#).unwrap();
    let out = hullsplat(&["carve", "--data", path(&data), "--out", path(&tmp.path().join("c")), "--config", path(&cfg)]);
    assert_exit(&out, 2, "n_init");

    std::fs::write(&cfg, r#"{"resolutoin": 64}"#).unwrap();
    let out = hullsplat(&["carve", "--data", path(&data), "--out", path(&tmp.path().join("c")), "--config", path(&cfg)]);
    assert_exit(&out, 2, "resolutoin");

    let out = hullsplat(&["carve", "--data", path(&tmp.path().join("missing")), "--out", path(&tmp.path().join("c"))]);
    assert_exit(&out, 2, "missing");

    let out = hullsplat(&["eval"]);
    assert_exit(&out, 2, "eval needs");
}

#[test]
fn blank_mask_reports_empty_hull() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    small_dataset(&data);
    let mask = ViewSet::mask_path(&data, 3);
    let (w, h) = Mask::load_png(&mask).unwrap().dims();
    Mask::new(w, h).save_png(&mask).unwrap();
    let out = hullsplat(&["carve", "--data", path(&data), "--out", path(&tmp.path().join("c")), "--resolution", "16"]);
    assert_exit(&out, 2, "view 3 has an all-background mask");
}

#[test]
fn diverging_optimizer_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let (data, carve) = (tmp.path().join("data"), tmp.path().join("carve"));
    small_dataset(&data);
    assert_ok(&hullsplat(&["carve", "--data", path(&data), "--out", path(&carve), "--resolution", "16", "--n-init", "100"]));
    let cfg = tmp.path().join("recon.json");
    std::fs::write(&cfg, r#"{"iterations": 20, "learning_rates": {"log_scale": 1e6}}"#).unwrap();
    let out = hullsplat(&[
        "reconstruct",
        "--data",
        path(&data),
        "--init",
        path(&carve.join("points.ply")),
        "--out",
        path(&tmp.path().join("r")),
        "--config",
        path(&cfg),
    ]);
    assert_exit(&out, 3, "diverged");
}
