//! Implementations of the six subcommands. Every command checks its input
//! files up front, echoes the configuration verbatim into the output
//! directory, and writes only versioned, deterministic artifacts.

use std::path::{Path, PathBuf};

use latfield::density::{DensityModel, MlpDensity};
use latfield::error::{Error, Result};
use latfield::io;
use latfield::lattice::{extract_stencils, Field};
use latfield::rom;
use latfield::seed;
use latfield::solver::{max_del_residual, propagate, InitialData, NewtonConfig};
use latfield::theory;
use latfield::train::{dataset_data_loss, train, Dataset};
use latfield::tw::{locate_travelling_wave, WaveProfile};
use serde_json::json;

use crate::artifacts::{
    write_convergence, write_descent, write_manifest, write_run_stamp, Manifest,
};
use crate::config::{ExperimentConfig, Theory};
use crate::{EvalArgs, FindTwArgs, GenDataArgs, RomArgs, SimulateArgs, TrainArgs};

/// Input files must exist before any work starts, so half-finished output
/// directories never appear behind a late failure.
fn require_exists(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::Input(format!("referenced file {} does not exist", path.display())))
    }
}

fn load_config(path: &Path) -> Result<(ExperimentConfig, String)> {
    require_exists(path)?;
    let raw = io::load(path)?;
    let cfg = ExperimentConfig::parse(&raw)?;
    Ok((cfg, raw))
}

fn load_fields(dir: &Path, manifest: &Manifest) -> Result<Vec<Field>> {
    for name in &manifest.files {
        require_exists(&dir.join(name))?;
    }
    manifest.files.iter().map(|name| io::read_field(&io::load(dir.join(name))?)).collect()
}

pub fn gen_data(args: &GenDataArgs) -> Result<()> {
    let (cfg, raw) = load_config(&args.config)?;
    let master = args.seed.unwrap_or(cfg.seed);
    let stride = args.stride.unwrap_or(cfg.stride);
    let out = args.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.out));
    if cfg.trajectories == 0 {
        return Err(Error::Sizing("gen-data needs at least one trajectory".into()));
    }

    let grid = cfg.grid()?;
    let model = cfg.analytic_density()?;
    let fields = theory::generate_trajectories_scaled(
        &model,
        &grid,
        cfg.trajectories,
        seed::split(master, "data"),
        cfg.amplitude,
    )?;

    let mut tuples = 0;
    let mut files = Vec::with_capacity(fields.len());
    for (k, f) in fields.iter().enumerate() {
        tuples += extract_stencils(f, cfg.stencil_kind(), stride)?.len();
        let name = format!("traj_{k:03}.csv");
        io::save(out.join(&name), &io::write_field(f))?;
        files.push(name);
    }
    let manifest = Manifest { stencil: cfg.stencil_kind(), stride, tuples, files };
    io::save(out.join("manifest.txt"), &write_manifest(&manifest))?;
    io::save(out.join("config.toml"), &raw)?;
    io::save(
        out.join("run.txt"),
        &write_run_stamp(
            "gen-data",
            &[("seed", master.to_string()), ("stride", stride.to_string())],
        ),
    )?;
    println!(
        "wrote {} trajectories ({} stencil tuples at stride {stride}) to {}",
        manifest.files.len(),
        tuples,
        out.display()
    );
    Ok(())
}

pub fn train_cmd(args: &TrainArgs) -> Result<()> {
    let (cfg, raw) = load_config(&args.config)?;
    let master = args.seed.unwrap_or(cfg.seed);
    let out = args.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.out));

    let manifest_path = args.data.join("manifest.txt");
    require_exists(&manifest_path)?;
    let manifest = crate::artifacts::read_manifest(&io::load(&manifest_path)?)?;
    if manifest.stencil != cfg.stencil_kind() {
        return Err(Error::Input(format!(
            "dataset was extracted as {}, the configured theory needs {}",
            crate::artifacts::stencil_label(manifest.stencil),
            crate::artifacts::stencil_label(cfg.stencil_kind())
        )));
    }
    let stride = args.stride.unwrap_or(manifest.stride);
    let fields = load_fields(&args.data, &manifest)?;
    let data = Dataset::from_fields(fields, manifest.stencil, stride)?;

    let mut density = MlpDensity::new(
        cfg.arity(),
        cfg.dim(),
        cfg.mlp_spec()?,
        seed::split(master, "init"),
    )?;
    density.velocity_linear = cfg.velocity_linear();
    let mut model = DensityModel::Mlp(density);

    let initial_loss = dataset_data_loss(&model, &data)?;
    let stats = train(&mut model, &data, &cfg.train_config(seed::split(master, "shuffle")))?;

    io::save(out.join("checkpoint.txt"), &io::write_density(&model)?)?;
    io::save(out.join("losses.csv"), &io::write_losses(&stats))?;
    io::save(out.join("config.toml"), &raw)?;
    io::save(
        out.join("run.txt"),
        &write_run_stamp(
            "train",
            &[("seed", master.to_string()), ("stride", stride.to_string())],
        ),
    )?;
    let final_loss = stats.last().map_or(initial_loss, |s| s.data_loss);
    println!(
        "trained on {} tuples for {} epochs: data loss {initial_loss:.3e} -> {final_loss:.3e}",
        data.len(),
        stats.len()
    );
    Ok(())
}

pub fn simulate(args: &SimulateArgs) -> Result<()> {
    require_exists(&args.checkpoint)?;
    require_exists(&args.init)?;
    let model = io::read_density(&io::load(&args.checkpoint)?)?;
    let given = io::read_field(&io::load(&args.init)?)?;

    if !(1..=2).contains(&args.init_rows) {
        return Err(Error::Input(format!(
            "--init-rows must be 1 or 2, got {}",
            args.init_rows
        )));
    }
    let rows = args.init_rows.min(given.grid.rows());
    let init = if rows == 1 {
        InitialData::PositionOnly { positions: given.row(0) }
    } else {
        InitialData::TwoSlices { first: given.row(0), second: given.row(1) }
    };
    let run =
        propagate(&model, init, args.steps, &given.grid, &NewtonConfig::default(), args.mode.into())?;

    io::save(args.out.join("simulated.csv"), &io::write_field(&run.field))?;
    io::save(args.out.join("convergence.csv"), &write_convergence(&run.reports, rows))?;
    io::save(
        args.out.join("run.txt"),
        &write_run_stamp(
            "simulate",
            &[
                ("steps", args.steps.to_string()),
                ("init-rows", rows.to_string()),
                ("mode", args.mode.label().to_string()),
            ],
        ),
    )?;
    print!(
        "propagated {} steps from {} given slice(s); {} rows written",
        args.steps,
        rows,
        run.field.grid.rows()
    );
    // interior residual diagnostic, when the result is long enough to have one
    if run.field.grid.n_t >= 2 {
        println!("; max interior residual {:.3e}", max_del_residual(&model, &run.field)?);
    } else {
        println!();
    }
    Ok(())
}

pub fn eval(args: &EvalArgs) -> Result<()> {
    require_exists(&args.predicted)?;
    require_exists(&args.reference)?;
    let predicted = io::read_field(&io::load(&args.predicted)?)?;
    let reference = io::read_field(&io::load(&args.reference)?)?;
    if predicted.grid != reference.grid || predicted.d != reference.d {
        return Err(Error::Shape(
            "predicted and reference fields live on different lattices".into(),
        ));
    }

    let d = predicted.d;
    let rows = predicted.grid.rows();
    let cols = predicted.grid.cols();
    let mut linf: f64 = 0.0;
    let mut linf_complex: f64 = 0.0;
    let mut row_linf = vec![0.0_f64; rows];
    let mut row_complex = vec![0.0_f64; rows];
    for i in 0..rows {
        for j in 0..cols {
            let a = predicted.node(i, j);
            let b = reference.node(i, j);
            for p in 0..d {
                row_linf[i] = row_linf[i].max((a[p] - b[p]).abs());
            }
            if d == 2 {
                let m = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
                row_complex[i] = row_complex[i].max(m);
            }
        }
        linf = linf.max(row_linf[i]);
        linf_complex = linf_complex.max(row_complex[i]);
    }

    let report = json!({
        "linf": linf,
        "linf_complex": if d == 2 { Some(linf_complex) } else { None },
        "rows": rows,
        "cols": cols,
        "components": d,
    });
    let rendered = serde_json::to_string_pretty(&report).expect("report serializes");
    println!("{rendered}");

    if let Some(out) = &args.out {
        io::save(out.join("metrics.json"), &rendered)?;
        let mut csv = String::from("# latfield errors v1\n");
        if d == 2 {
            csv.push_str("row,linf,linf_complex\n");
            for (i, (a, c)) in row_linf.iter().zip(&row_complex).enumerate() {
                csv.push_str(&format!("{i},{a:.16e},{c:.16e}\n"));
            }
        } else {
            csv.push_str("row,linf\n");
            for (i, a) in row_linf.iter().enumerate() {
                csv.push_str(&format!("{i},{a:.16e}\n"));
            }
        }
        io::save(out.join("error_rows.csv"), &csv)?;
    }
    Ok(())
}

pub fn find_tw(args: &FindTwArgs) -> Result<()> {
    let (cfg, raw) = load_config(&args.config)?;
    require_exists(&args.checkpoint)?;
    let model = io::read_density(&io::load(&args.checkpoint)?)?;
    let master = args.seed.unwrap_or(cfg.seed);
    let out = args.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.out));
    let grid = cfg.grid()?;
    let b = grid.period();

    let initial = match &args.profile {
        Some(path) => {
            require_exists(path)?;
            io::read_profile(&io::load(path)?)?
        }
        // dispersion-relation guess of the configured theory
        None => match cfg.theory {
            Theory::Wave => {
                let beta = cfg.potential().d2(0.0);
                let speed = theory::wave_dispersion_speed(grid.dt, grid.dx, b, cfg.tw.mode, beta)?;
                WaveProfile::cosine_mode(b, speed, cfg.tw.mode, cfg.tw.amplitude, cfg.tw.n_modes)?
                    .normalized(grid.dx)?
            }
            Theory::Schrodinger => {
                let beta = cfg.potential().d1(0.0);
                let speed = theory::schrodinger_dispersion_speed(
                    grid.dt,
                    grid.dx,
                    b,
                    cfg.physics.hbar,
                    beta,
                    cfg.tw.mode,
                    cfg.tw.branch,
                )?;
                WaveProfile::plane_wave(b, speed, cfg.tw.mode, cfg.tw.amplitude, cfg.tw.n_modes)?
                    .normalized(grid.dx)?
            }
        },
    };
    let sigma = args.noise.unwrap_or(cfg.tw.noise);
    let start = if sigma != 0.0 {
        initial.perturbed(sigma, seed::split(master, "noise"))
    } else {
        initial.clone()
    };

    let run = locate_travelling_wave(&model, &start, &grid, &cfg.tw.build())?;

    io::save(out.join("profile.txt"), &io::write_profile(&run.profile))?;
    io::save(out.join("descent.csv"), &write_descent(&run.history))?;
    let report = json!({
        "speed": run.profile.speed,
        "initial_speed": start.speed,
        "residual_loss": run.residual_loss,
        "unit_loss": run.unit_loss,
        "max_residual": run.max_residual,
        "steps_run": run.steps_run,
    });
    let rendered = serde_json::to_string_pretty(&report).expect("report serializes");
    io::save(out.join("tw_report.json"), &rendered)?;
    io::save(out.join("config.toml"), &raw)?;
    io::save(
        out.join("run.txt"),
        &write_run_stamp(
            "find-tw",
            &[("seed", master.to_string()), ("noise", format!("{sigma}"))],
        ),
    )?;
    println!(
        "travelling wave at speed {:.6} (residual loss {:.3e}, max residual {:.3e}) after {} steps",
        run.profile.speed, run.residual_loss, run.max_residual, run.steps_run
    );
    Ok(())
}

pub fn rom_cmd(args: &RomArgs) -> Result<()> {
    let (cfg, raw) = load_config(&args.config)?;
    let master = args.seed.unwrap_or(cfg.seed);
    let out = args.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.out));

    let manifest_path = args.data.join("manifest.txt");
    require_exists(&manifest_path)?;
    let manifest = crate::artifacts::read_manifest(&io::load(&manifest_path)?)?;
    let fields = load_fields(&args.data, &manifest)?;

    let snapshots = rom::snapshot_matrix(&fields)?;
    let map = rom::fit_pca(&snapshots, cfg.rom.reduced_dim)?;
    let recon = rom::reconstruction_error(&map, &snapshots)?;
    let triples = rom::latent_triples(&map, &fields)?;

    let mut latent = DensityModel::Mlp(MlpDensity::new(
        2,
        cfg.rom.reduced_dim,
        cfg.latent_spec()?,
        seed::split(master, "init"),
    )?);
    let initial_loss = rom::latent_data_loss(&latent, &triples)?;
    let stats =
        rom::train_latent(&mut latent, &triples, &cfg.latent_train_config(seed::split(master, "shuffle")))?;
    let final_loss = stats.last().map_or(initial_loss, |s| s.data_loss);
    let reg_value = rom::latent_reg_value(&latent, &triples, cfg.rom.reg_iterations)?;

    io::save(out.join("basis.txt"), &io::write_basis(&map))?;
    io::save(out.join("latent_checkpoint.txt"), &io::write_density(&latent)?)?;
    io::save(out.join("latent_losses.csv"), &io::write_losses(&stats))?;
    let report = json!({
        "reduced_dim": map.reduced_dim(),
        "padded": map.padded,
        "snapshots": snapshots.ncols(),
        "reconstruction_error": recon.mean,
        "skipped_snapshots": recon.skipped,
        "latent_triples": triples.len(),
        "data_loss_initial": initial_loss,
        "data_loss_final": final_loss,
        "reg_value_final": reg_value,
    });
    let rendered = serde_json::to_string_pretty(&report).expect("report serializes");
    io::save(out.join("rom_report.json"), &rendered)?;
    io::save(out.join("config.toml"), &raw)?;
    io::save(out.join("run.txt"), &write_run_stamp("rom", &[("seed", master.to_string())]))?;

    println!(
        "reduced basis of {} directions (reconstruction error {:.3e}); latent data loss {:.3e} -> {:.3e}",
        map.reduced_dim(),
        recon.mean,
        initial_loss,
        final_loss
    );
    if map.padded > 0 {
        println!(
            "warning: snapshots only span {} directions, {} basis columns are null-space padding",
            map.reduced_dim() - map.padded,
            map.padded
        );
    }
    Ok(())
}
