use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nalgebra::Vector3;
use tempfile::TempDir;
use tofdepth::dataset::{encode_depth_png, encode_gray_png, write_sequence};
use tofdepth::geometry::Pose;
use tofdepth::synth::{constant_motion, default_intrinsics, desk_scene, render_sequence};

const FRAMES: usize = 8;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tofdepth"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn tofdepth")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new() -> Self {
        let dir = TempDir::new().unwrap();
        let k = default_intrinsics();
        let step = Pose::new(
            Vector3::new(0.1, 1.0, 0.0),
            0.2f64.to_radians(),
            Vector3::new(0.004, -0.001, 0.002),
        )
        .unwrap();
        let frames = render_sequence(&desk_scene(2), &k, &constant_motion(&step, FRAMES), 30.0);
        write_sequence(&dir.path().join("seq"), &frames, k.depth_scale).unwrap();
        fs::write(
            dir.path().join("camera.cfg"),
            "fx = 525\nfy = 525\ncx = 319.5\ncy = 239.5\ndepth_scale = 5000\n",
        )
        .unwrap();
        Self { dir }
    }

    fn path(&self, p: &str) -> PathBuf {
        self.dir.path().join(p)
    }

    fn s(&self, p: &str) -> String {
        self.path(p).to_string_lossy().into_owned()
    }

    fn run_into(&self, out: &str, extra: &[&str]) -> Output {
        let mut args = vec![
            "run".to_string(),
            "--dataset".into(),
            self.s("seq"),
            "--config".into(),
            self.s("camera.cfg"),
            "--out".into(),
            self.s(out),
        ];
        args.extend(extra.iter().map(|s| s.to_string()));
        bin().args(&args).output().unwrap()
    }
}

fn lines(p: &Path) -> Vec<String> {
    fs::read_to_string(p)
        .unwrap()
        .lines()
        .map(str::to_owned)
        .collect()
}

#[test]
fn missing_dataset_is_reported() {
    let fx = Fixture::new();
    let missing = fx.s("no_such_dir");
    let o = run(&[
        "run",
        "--dataset",
        &missing,
        "--config",
        &fx.s("camera.cfg"),
        "--out",
        &fx.s("out"),
    ]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains(&missing), "{}", stderr(&o));
}

#[test]
fn run_writes_one_row_per_frame() {
    let fx = Fixture::new();
    let o = fx.run_into("out", &["--emit-depth", "--emit-trajectory"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = lines(&fx.path("out/metrics.csv"));
    assert_eq!(rows.len(), FRAMES + 1);
    assert!(rows[1].starts_with("0,1,"));
    assert_eq!(fs::read_dir(fx.path("out/depth")).unwrap().count(), FRAMES);
    let traj = lines(&fx.path("out/trajectory.txt"));
    assert_eq!(traj.len(), FRAMES + 1);
    assert_eq!(traj[1].split_whitespace().count(), 8);
    assert!(stdout(&o).contains("DC"));
}

#[test]
fn runs_are_byte_identical() {
    let fx = Fixture::new();
    assert!(fx.run_into("a", &["--seed", "7"]).status.success());
    assert!(fx
        .run_into("b", &["--seed", "7", "--threads", "2"])
        .status
        .success());
    assert_eq!(
        fs::read(fx.path("a/metrics.csv")).unwrap(),
        fs::read(fx.path("b/metrics.csv")).unwrap()
    );
}

#[test]
fn median_fill_flag() {
    let fx = Fixture::new();
    assert!(fx.run_into("m", &["--median-fill", "5"]).status.success());
    let o = fx.run_into("bad", &["--median-fill", "4"]);
    assert!(!o.status.success());
}

#[test]
fn sweep_writes_one_row_per_threshold() {
    let fx = Fixture::new();
    let base = [
        "sweep",
        "--dataset",
        &fx.s("seq"),
        "--config",
        &fx.s("camera.cfg"),
        "--out",
        &fx.s("sweep"),
    ];
    let mut args = base.to_vec();
    args.extend(["--thresholds", "1,2,4,8,16"]);
    let o = run(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = lines(&fx.path("sweep/tradeoff.csv"));
    assert_eq!(rows[0], "threshold,dc,mre");
    assert_eq!(rows.len(), 6);

    let mut args = base.to_vec();
    args.extend(["--thresholds", ""]);
    let o = run(&args);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn power_table() {
    let o = run(&["power", "--dc", "15"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("1,15,0.7650,23.50"), "{text}");
    assert!(text.contains("5,15,1.3650,72.70"), "{text}");
    assert!(!run(&["power", "--dc", "120"]).status.success());
}

#[test]
fn table2_prints_three_regimes() {
    let o = run(&["table2", "--trials", "40"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows.len(), 4);
    for (row, name) in rows[1..].iter().zip(["depth", "flow", "both"]) {
        assert!(row.starts_with(name));
    }
    assert!(!run(&["table2", "--trials", "5"]).status.success());
}

#[test]
fn infill_identity_pair_fills_nothing() {
    let fx = Fixture::new();
    let k = default_intrinsics();
    let (img, depth) = desk_scene(3).render(&k, &Pose::identity());
    fs::write(fx.path("img.png"), encode_gray_png(&img)).unwrap();
    fs::write(
        fx.path("depth.png"),
        encode_depth_png(&depth, k.depth_scale),
    )
    .unwrap();
    let o = run(&[
        "infill",
        "--config",
        &fx.s("camera.cfg"),
        "--ref-image",
        &fx.s("img.png"),
        "--ref-depth",
        &fx.s("depth.png"),
        "--cur-image",
        &fx.s("img.png"),
        "--cur-depth",
        &fx.s("depth.png"),
        "--out",
        &fx.s("filled.png"),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("filled 0 pixels"), "{}", stdout(&o));
    assert!(fx.path("filled.png").exists());
}
