//! End-to-end runs of the binary: every subcommand on a small wave
//! experiment, rerun determinism, and the error-category exit codes.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use latfield::io;
use latfield::theory;

const CONFIG: &str = "\
theory = \"wave\"
trajectories = 2
seed = 1

[grid]
n_t = 6
n_x = 8
dt = 0.025
dx = 0.05

[model]
hidden = [6]

[train]
epochs = 3
batch_size = 40

[rom]
reduced_dim = 2
hidden = [4]
epochs = 5
batch_size = 8
";

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_latfield"))
}

fn run_ok(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("binary runs");
    assert!(
        out.status.success(),
        "latfield {args:?} failed with {:?}:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn run_err(args: &[&str], code: i32, category: &str) {
    let out = bin().args(args).output().expect("binary runs");
    assert_eq!(out.status.code(), Some(code), "latfield {args:?}");
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains(&format!("error[{category}]")), "stderr was: {stderr}");
}

fn workdir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("latfield-cli-{name}"));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("experiment.toml");
    std::fs::write(&path, text).unwrap();
    path
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn s(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

/// Loss CSVs match except for the wall-clock column.
fn assert_losses_match(a: &str, b: &str) {
    let (a, b) = (read(Path::new(a)), read(Path::new(b)));
    assert_eq!(a.lines().count(), b.lines().count());
    for (la, lb) in a.lines().zip(b.lines()) {
        let ca: Vec<&str> = la.split(',').collect();
        let cb: Vec<&str> = lb.split(',').collect();
        assert_eq!(ca.len(), cb.len());
        assert_eq!(&ca[..ca.len().saturating_sub(1)], &cb[..cb.len().saturating_sub(1)]);
    }
}

#[test]
fn gen_data_writes_a_deterministic_dataset() {
    let dir = workdir("gen");
    let cfg = write_config(&dir, CONFIG);
    let (a, b) = (dir.join("a"), dir.join("b"));

    let out = run_ok(&["gen-data", "--config", &s(&cfg), "--out", &s(&a)]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("80 stencil tuples"));
    run_ok(&["gen-data", "--config", &s(&cfg), "--out", &s(&b)]);

    for name in ["manifest.txt", "traj_000.csv", "traj_001.csv", "config.toml", "run.txt"] {
        assert_eq!(read(&a.join(name)), read(&b.join(name)), "{name} differs between reruns");
    }
    assert_eq!(read(&a.join("config.toml")), CONFIG, "config echo is not verbatim");
    let manifest = read(&a.join("manifest.txt"));
    assert!(manifest.contains("tuples 80"), "{manifest}");
    assert!(manifest.contains("stencil pts3-seven"), "{manifest}");

    // a coarser stride keeps the fields but extracts fewer tuples
    let c = dir.join("c");
    run_ok(&["gen-data", "--config", &s(&cfg), "--out", &s(&c), "--stride", "2"]);
    let coarse = read(&c.join("manifest.txt"));
    assert!(coarse.contains("tuples 48"), "{coarse}");
    assert_eq!(read(&a.join("traj_000.csv")), read(&c.join("traj_000.csv")));
}

#[test]
fn zero_amplitude_data_is_the_zero_field() {
    let dir = workdir("zero");
    let cfg = write_config(&dir, &CONFIG.replace("trajectories = 2", "trajectories = 1\namplitude = 0.0"));
    let out = dir.join("data");
    run_ok(&["gen-data", "--config", &s(&cfg), "--out", &s(&out)]);
    let field = io::read_field(&read(&out.join("traj_000.csv"))).unwrap();
    assert!(field.data().iter().all(|&v| v == 0.0));
}

#[test]
fn training_runs_are_reproducible() {
    let dir = workdir("train");
    let cfg = write_config(&dir, CONFIG);
    let data = dir.join("data");
    run_ok(&["gen-data", "--config", &s(&cfg), "--out", &s(&data)]);

    let (t1, t2) = (dir.join("t1"), dir.join("t2"));
    let out =
        run_ok(&["train", "--config", &s(&cfg), "--data", &s(&data), "--out", &s(&t1)]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("data loss"));
    run_ok(&["train", "--config", &s(&cfg), "--data", &s(&data), "--out", &s(&t2)]);

    assert_eq!(read(&t1.join("checkpoint.txt")), read(&t2.join("checkpoint.txt")));
    assert_losses_match(&s(&t1.join("losses.csv")), &s(&t2.join("losses.csv")));
    // header + column names + one row per epoch
    assert_eq!(read(&t1.join("losses.csv")).lines().count(), 5);
    // the checkpoint reloads as a working density
    let model = io::read_density(&read(&t1.join("checkpoint.txt"))).unwrap();
    assert_eq!(model.arity(), 3);

    // a different seed moves the parameters
    let t3 = dir.join("t3");
    run_ok(&[
        "train", "--config", &s(&cfg), "--data", &s(&data), "--out", &s(&t3), "--seed", "9",
    ]);
    assert_ne!(read(&t1.join("checkpoint.txt")), read(&t3.join("checkpoint.txt")));
}

#[test]
fn simulate_replays_generated_trajectories_bit_for_bit() {
    let dir = workdir("sim");
    let cfg = write_config(&dir, CONFIG);
    let data = dir.join("data");
    run_ok(&["gen-data", "--config", &s(&cfg), "--out", &s(&data)]);

    let ckpt = dir.join("wave.txt");
    let density = theory::wave_density(0.025, 0.05).unwrap();
    std::fs::write(&ckpt, io::write_density(&density).unwrap()).unwrap();

    let sim = dir.join("sim");
    let traj = data.join("traj_000.csv");
    run_ok(&[
        "simulate", "--checkpoint", &s(&ckpt), "--init", &s(&traj), "--steps", "5", "--out",
        &s(&sim),
    ]);
    assert_eq!(
        read(&sim.join("simulated.csv")),
        read(&traj),
        "replay from the analytic density is not bit-identical"
    );
    let convergence = read(&sim.join("convergence.csv"));
    assert_eq!(convergence.lines().count(), 7, "{convergence}");
    assert!(convergence.lines().skip(2).all(|l| l.contains(",true,")), "{convergence}");

    // the stencil-sweep integrator reproduces the same trajectory within
    // Newton tolerance
    let sweep = dir.join("sweep");
    run_ok(&[
        "simulate", "--checkpoint", &s(&ckpt), "--init", &s(&traj), "--steps", "5", "--mode",
        "stencil", "--out", &s(&sweep),
    ]);
    let out = run_ok(&[
        "eval", "--predicted", &s(&sweep.join("simulated.csv")), "--reference", &s(&traj),
    ]);
    let report: serde_json::Value =
        serde_json::from_slice(&out.stdout).expect("eval prints JSON");
    assert!(report["linf"].as_f64().unwrap() < 1e-9, "{report}");

    // evaluating a field against itself is exactly zero
    let out = run_ok(&[
        "eval", "--predicted", &s(&sim.join("simulated.csv")), "--reference", &s(&traj),
    ]);
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["linf"].as_f64().unwrap(), 0.0);
}

#[test]
fn zero_step_simulate_echoes_the_initial_rows() {
    let dir = workdir("echo");
    let cfg = write_config(&dir, CONFIG);
    let data = dir.join("data");
    run_ok(&["gen-data", "--config", &s(&cfg), "--out", &s(&data)]);
    let ckpt = dir.join("wave.txt");
    std::fs::write(&ckpt, io::write_density(&theory::wave_density(0.025, 0.05).unwrap()).unwrap())
        .unwrap();

    let echo = dir.join("out");
    let traj = data.join("traj_000.csv");
    run_ok(&[
        "simulate", "--checkpoint", &s(&ckpt), "--init", &s(&traj), "--steps", "0", "--out",
        &s(&echo),
    ]);
    let full = io::read_field(&read(&traj)).unwrap();
    let echoed = io::read_field(&read(&echo.join("simulated.csv"))).unwrap();
    assert_eq!(echoed.grid.rows(), 2);
    assert_eq!(echoed.row(0), full.row(0));
    assert_eq!(echoed.row(1), full.row(1));

    // a second-order density cannot start from positions alone
    run_err(
        &[
            "simulate", "--checkpoint", &s(&ckpt), "--init", &s(&traj), "--steps", "1",
            "--init-rows", "1", "--out", &s(&dir.join("bad")),
        ],
        13,
        "input",
    );
}

#[test]
fn eval_reports_single_node_differences() {
    let dir = workdir("eval");
    let cfg = write_config(&dir, CONFIG);
    let data = dir.join("data");
    run_ok(&["gen-data", "--config", &s(&cfg), "--out", &s(&data)]);
    let traj = data.join("traj_000.csv");

    let mut bumped = io::read_field(&read(&traj)).unwrap();
    bumped.node_mut(2, 3)[0] += 1.0;
    let modified = dir.join("modified.csv");
    std::fs::write(&modified, io::write_field(&bumped)).unwrap();

    let metrics = dir.join("metrics");
    let out = run_ok(&[
        "eval", "--predicted", &s(&modified), "--reference", &s(&traj), "--out", &s(&metrics),
    ]);
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["linf"].as_f64().unwrap(), 1.0);
    assert!(report["linf_complex"].is_null());
    assert_eq!(read(&metrics.join("metrics.json")), String::from_utf8_lossy(&out.stdout).trim_end());
    let rows = read(&metrics.join("error_rows.csv"));
    assert!(rows.lines().nth(4).unwrap().starts_with("2,1."), "{rows}");

    // mismatched lattices are a shape error
    let other = dir.join("other.csv");
    let small = latfield::lattice::Field::zeros(
        latfield::lattice::Grid2D::new(2, 8, 0.025, 0.05, latfield::lattice::SpatialBc::Periodic)
            .unwrap(),
        1,
    );
    std::fs::write(&other, io::write_field(&small)).unwrap();
    run_err(&["eval", "--predicted", &s(&other), "--reference", &s(&traj)], 10, "shape");
}

#[test]
fn find_tw_locates_the_dispersion_wave() {
    let dir = workdir("tw");
    let cfg = write_config(
        &dir,
        "\
theory = \"wave\"
seed = 4

[grid]
n_t = 20
n_x = 20
dt = 0.025
dx = 0.05

[tw]
steps = 400
settle = 0.15
scan_halfwidth = 0.0
",
    );
    let ckpt = dir.join("wave.txt");
    std::fs::write(&ckpt, io::write_density(&theory::wave_density(0.025, 0.05).unwrap()).unwrap())
        .unwrap();

    let (w1, w2) = (dir.join("w1"), dir.join("w2"));
    run_ok(&[
        "find-tw", "--config", &s(&cfg), "--checkpoint", &s(&ckpt), "--noise", "0.05", "--out",
        &s(&w1),
    ]);
    run_ok(&[
        "find-tw", "--config", &s(&cfg), "--checkpoint", &s(&ckpt), "--noise", "0.05", "--out",
        &s(&w2),
    ]);
    assert_eq!(read(&w1.join("profile.txt")), read(&w2.join("profile.txt")));
    assert_eq!(read(&w1.join("tw_report.json")), read(&w2.join("tw_report.json")));

    let report: serde_json::Value =
        serde_json::from_str(&read(&w1.join("tw_report.json"))).unwrap();
    let speed = report["speed"].as_f64().unwrap();
    let reference = theory::wave_dispersion_speed(0.025, 0.05, 1.0, 1, 1.0).unwrap();
    assert!((speed.abs() - reference).abs() < 0.02, "speed {speed} vs {reference}");
    assert!(report["residual_loss"].as_f64().unwrap() < 1e-4, "{report}");
    let profile = io::read_profile(&read(&w1.join("profile.txt"))).unwrap();
    assert_eq!(profile.speed, speed);
    assert!(read(&w1.join("descent.csv")).lines().count() > 100);
}

#[test]
fn rom_fits_a_reduced_model() {
    let dir = workdir("rom");
    let cfg = write_config(&dir, CONFIG);
    let data = dir.join("data");
    run_ok(&["gen-data", "--config", &s(&cfg), "--out", &s(&data)]);

    let (r1, r2) = (dir.join("r1"), dir.join("r2"));
    let out = run_ok(&["rom", "--config", &s(&cfg), "--data", &s(&data), "--out", &s(&r1)]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("reduced basis of 2 directions"));
    run_ok(&["rom", "--config", &s(&cfg), "--data", &s(&data), "--out", &s(&r2)]);

    assert_eq!(read(&r1.join("basis.txt")), read(&r2.join("basis.txt")));
    assert_eq!(read(&r1.join("latent_checkpoint.txt")), read(&r2.join("latent_checkpoint.txt")));
    assert_eq!(read(&r1.join("rom_report.json")), read(&r2.join("rom_report.json")));
    assert_losses_match(&s(&r1.join("latent_losses.csv")), &s(&r2.join("latent_losses.csv")));

    let map = io::read_basis(&read(&r1.join("basis.txt"))).unwrap();
    assert_eq!(map.full_dim(), 8);
    assert_eq!(map.reduced_dim(), 2);
    assert_eq!(map.padded, 0);
    let latent = io::read_density(&read(&r1.join("latent_checkpoint.txt"))).unwrap();
    assert_eq!(latent.arity(), 2);
    assert_eq!(latent.dim(), 2);
    let report: serde_json::Value = serde_json::from_str(&read(&r1.join("rom_report.json"))).unwrap();
    assert_eq!(report["snapshots"].as_u64().unwrap(), 14);
    let recon = report["reconstruction_error"].as_f64().unwrap();
    assert!(recon > 0.0 && recon < 1.0, "{recon}");
}

#[test]
fn failures_use_stable_exit_codes_and_touch_nothing() {
    let dir = workdir("fail");
    let cfg = write_config(&dir, CONFIG);
    let out = dir.join("never");

    run_err(
        &["gen-data", "--config", &s(&dir.join("missing.toml")), "--out", &s(&out)],
        13,
        "input",
    );
    assert!(!out.exists(), "failed runs must not leave output behind");

    let garbage = dir.join("garbage.txt");
    std::fs::write(&garbage, "not a checkpoint").unwrap();
    let data = dir.join("data");
    run_ok(&["gen-data", "--config", &s(&cfg), "--out", &s(&data)]);
    run_err(
        &[
            "simulate", "--checkpoint", &s(&garbage), "--init", &s(&data.join("traj_000.csv")),
            "--steps", "1", "--out", &s(&out),
        ],
        18,
        "parse",
    );
    assert!(!out.exists());
}
