use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn gradsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gradsim")).args(args).output().expect("binary runs")
}

fn gradsim_env(args: &[&str], key: &str, value: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gradsim")).args(args).env(key, value).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn cube() -> String {
    configs().join("cube.json").display().to_string()
}

fn write_config(dir: &Path, edit: impl FnOnce(&mut serde_json::Value)) -> String {
    write_config_from(dir, "cube.json", edit)
}

fn write_config_from(dir: &Path, name: &str, edit: impl FnOnce(&mut serde_json::Value)) -> String {
    let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(configs().join(name)).unwrap()).unwrap();
    edit(&mut v);
    let path = dir.join("scene.json");
    fs::write(&path, serde_json::to_string(&v).unwrap()).unwrap();
    path.display().to_string()
}

fn last_row(csv: &Path) -> Vec<f64> {
    let text = fs::read_to_string(csv).unwrap();
    text.lines().last().unwrap().split(',').map(|c| c.parse().unwrap()).collect()
}

#[test]
fn simulate_writes_frames_and_states() {
    let out = tempfile::tempdir().unwrap();
    let o = gradsim(&["simulate", &cube(), "--out", out.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let ppm = fs::read_dir(out.path()).unwrap().filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "ppm")).count();
    assert_eq!(ppm, 60);
    let states = fs::read_to_string(out.path().join("states.csv")).unwrap();
    assert_eq!(states.lines().count(), 62);
    assert!(states.starts_with("step,b0_x,b0_y,b0_z,b0_qw"));
}

#[test]
fn reruns_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        let o = gradsim(&["simulate", &cube(), "--seed", "7", "--out", d.path().to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for name in ["states.csv", "frame_0000.ppm", "frame_0059.ppm", "silhouette_0031.pgm"] {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name}");
    }
}

#[test]
fn zero_horizon_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), |v| v["episode"]["horizon"] = 0.into());
    let o = gradsim(&["simulate", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("horizon must be ≥ 1"), "{}", stderr(&o));
}

#[test]
fn schema_errors_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), |v| v["entities"][0]["masss"] = 2.0.into());
    let o = gradsim(&["simulate", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("entities[0]") && err.contains("masss"), "{err}");
}

#[test]
fn divergence_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config_from(dir.path(), "beam.json", |v| {
        v["entities"][0]["mu"] = 1e9.into();
        v["episode"]["dt"] = 0.01.into();
    });
    let o = gradsim(&["simulate", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("non-finite"), "{}", stderr(&o));
}

#[test]
fn render_replays_states() {
    let sim = tempfile::tempdir().unwrap();
    let ren = tempfile::tempdir().unwrap();
    assert!(gradsim(&["simulate", &cube(), "--out", sim.path().to_str().unwrap()]).status.success());
    let states = sim.path().join("states.csv");
    let o = gradsim(&["render", &cube(), "--states", states.to_str().unwrap(), "--out", ren.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    // Row 0 is the initial state, so rendered frame k+1 is simulated frame k.
    assert_eq!(fs::read(ren.path().join("frame_0005.ppm")).unwrap(), fs::read(sim.path().join("frame_0004.ppm")).unwrap());
}

#[test]
fn estimate_recovers_cube_mass() {
    let out = tempfile::tempdir().unwrap();
    let hidden = configs().join("hidden/cube_mass.json");
    let o = gradsim(&[
        "estimate",
        &cube(),
        "--param",
        "mass:0",
        "--self-target",
        hidden.to_str().unwrap(),
        "--init",
        "2.5",
        "--iterations",
        "200",
        "--out",
        out.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let row = last_row(&out.path().join("estimate.csv"));
    assert!((row[2] - 1.0).abs() < 0.01, "final mass {}", row[2]);
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["truth"]["mass_0"], 1.0);
}

#[test]
fn unmodeled_friction_hurts_mass_estimate() {
    let hidden = configs().join("hidden/cube_mass.json");
    let mut err = Vec::new();
    for flag in [None, Some("--no-friction")] {
        let out = tempfile::tempdir().unwrap();
        let mut args = vec!["estimate", "--param", "mass:0", "--init", "2.5", "--iterations", "200"];
        let cfg = cube();
        args.extend([cfg.as_str(), "--self-target", hidden.to_str().unwrap(), "--out", out.path().to_str().unwrap()]);
        args.extend(flag);
        let o = gradsim(&args);
        assert!(o.status.success(), "{}", stderr(&o));
        let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.path().join("summary.json")).unwrap()).unwrap();
        err.push((summary["estimate"][0].as_f64().unwrap() - 1.0).abs());
    }
    assert!(err[1] > err[0], "{err:?}");
}

#[test]
fn missing_target_dir_is_a_usage_error() {
    let out = tempfile::tempdir().unwrap();
    let o = gradsim(&["estimate", &cube(), "--param", "mass:0", "--target", "/nonexistent/frames", "--out", out.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("does not exist"), "{}", stderr(&o));
}

#[test]
fn estimate_from_target_frames_on_disk() {
    let frames = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    assert!(gradsim(&["simulate", &cube(), "--out", frames.path().to_str().unwrap()]).status.success());
    let o = gradsim(&[
        "estimate",
        &cube(),
        "--param",
        "mass:0",
        "--target",
        frames.path().to_str().unwrap(),
        "--channel",
        "silhouette",
        "--init",
        "1.3",
        "--iterations",
        "60",
        "--out",
        out.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(out.path().join("estimate.csv")).unwrap();
    assert!(text.starts_with("iter,loss,param_0,wall_ms"));
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.path().join("summary.json")).unwrap()).unwrap();
    let m = summary["estimate"][0].as_f64().unwrap();
    assert!((m - 1.0).abs() < 0.05, "mass {m}");
}

#[test]
fn sweep_writes_landscape_and_rejects_short_grid() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        let o = gradsim(&["sweep", &cube(), "--param", "mass:0", "--grid", "0.5:1.5:3", "--out", d.path().to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let text = fs::read_to_string(a.path().join("landscape.csv")).unwrap();
    assert_eq!(text, fs::read_to_string(b.path().join("landscape.csv")).unwrap());
    let rows: Vec<Vec<f64>> = text.lines().skip(1).map(|l| l.split(',').map(|c| c.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[1][1], 0.0);
    assert!(rows[0][1] > 0.0 && rows[2][1] > 0.0);

    let o = gradsim(&["sweep", &cube(), "--param", "mass:0", "--grid", "0.5:1.5:1", "--out", a.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn control_policy_and_velocity_modes() {
    let frames = tempfile::tempdir().unwrap();
    let walker = configs().join("walker.json");
    assert!(gradsim(&["simulate", walker.to_str().unwrap(), "--out", frames.path().to_str().unwrap()]).status.success());
    let target = frames.path().join("frame_0009.ppm");
    for mode in ["policy", "velocity"] {
        let out = tempfile::tempdir().unwrap();
        let o = gradsim(&[
            "control",
            walker.to_str().unwrap(),
            "--target",
            target.to_str().unwrap(),
            "--mode",
            mode,
            "--iterations",
            "2",
            "--out",
            out.path().to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{mode}: {}", stderr(&o));
        let trace = fs::read_to_string(out.path().join("trace.csv")).unwrap();
        assert_eq!(trace.lines().count(), 3, "{mode}");
        let artifact = if mode == "policy" { "controller.json" } else { "velocity.json" };
        assert!(out.path().join(artifact).exists());
    }
}

#[test]
fn bench_prints_four_columns() {
    let o = gradsim(&["bench", "--tets", "100", "--steps", "5"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    let row: Vec<&str> = text.lines().nth(1).unwrap().split_whitespace().collect();
    assert_eq!(row.len(), 4);
    let o = gradsim(&["bench", "--tets", "20"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn thread_cap_is_validated() {
    let o = gradsim_env(&["bench", "--tets", "100", "--steps", "2"], "GRADSIM_THREADS", "0");
    assert_eq!(o.status.code(), Some(2));
    let o = gradsim_env(&["bench", "--tets", "100", "--steps", "2"], "GRADSIM_THREADS", "1");
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn unknown_flags_are_usage_errors() {
    assert_eq!(gradsim(&["simulate", &cube(), "--bogus"]).status.code(), Some(2));
    assert_eq!(gradsim(&["estimate", &cube()]).status.code(), Some(2));
}
