//! Command-line front end for the assimilation pipeline.
//!
//! Five subcommands cover the workflow: `generate` synthesizes the
//! trajectories and observation data, `train` fits the forecaster from the
//! observation CSV, `assimilate` runs the online estimation loop and
//! writes the error report, `report` renders the error history as SVG,
//! and `all` chains the four. Exit codes: 0 ok, 2 configuration, 3
//! solver, 4 training, 5 bound violation.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use svda_core::config::{preset, ExperimentConfig, Mode};
use svda_core::error::Error;
use svda_core::io;
use svda_core::ml::{
    build_training_set, load_checkpoint, save_checkpoint, train, Model, ModelConfig,
};
use svda_core::pipeline::{median_report, ErrorReport, OnlineOutput, Pipeline, PredictionSource};
use svda_core::plot::{error_history_svg, Curve};

#[derive(Parser)]
#[command(
    name = "svda",
    about = "State estimation with learned surrogate observations on a synthetic heat-plate testbed",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize trajectories, observations, and the reduced basis.
    Generate(RunArgs),
    /// Train the forecaster from the generated observation data.
    Train(RunArgs),
    /// Run the online estimation loop and write the error report.
    Assimilate(RunArgs),
    /// Render the error report as an SVG plot.
    Report(RunArgs),
    /// generate + train + assimilate + report.
    All(RunArgs),
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Path to an experiment configuration (JSON).
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in preset: paper-a, paper-b, or desk.
    #[arg(long)]
    preset: Option<String>,
    /// Override the training seed from the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Replace forecaster predictions by the true observations.
    #[arg(long)]
    oracle_stub: bool,
    /// Run this many consecutive seeds and emit a median error report
    /// (honored by `all`).
    #[arg(long, default_value_t = 1)]
    repeat: usize,
    /// Override the output directory from the configuration.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Generate(args) => with_config(args, cmd_generate),
        Command::Train(args) => with_config(args, cmd_train),
        Command::Assimilate(args) => with_config(args, cmd_assimilate),
        Command::Report(args) => with_config(args, |cfg, _| cmd_report(Path::new(&cfg.output_dir))),
        Command::All(args) => with_config(args, cmd_all),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Format(_)
        | Error::Io(_)
        | Error::LookbackTooLarge { .. }
        | Error::PatchOutsideDomain { .. }
        | Error::DimensionMismatch { .. } => 2,
        Error::DivergedLoss { .. } => 4,
        Error::BoundViolated { .. } => 5,
        _ => 3,
    }
}

fn with_config(
    args: &RunArgs,
    f: impl FnOnce(ExperimentConfig, &RunArgs) -> Result<(), Error>,
) -> Result<(), Error> {
    let mut config = load_config(args)?;
    if let Some(seed) = args.seed {
        config.ml.seed = seed;
    }
    if let Some(out) = &args.out {
        config.output_dir = out.display().to_string();
    }
    if args.repeat == 0 {
        return Err(Error::Format("--repeat must be at least 1".into()));
    }
    config.validate()?;
    f(config, args)
}

fn load_config(args: &RunArgs) -> Result<ExperimentConfig, Error> {
    match (&args.config, &args.preset) {
        (Some(path), None) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
            ExperimentConfig::from_json(&text)
        }
        (None, Some(name)) => preset(name).ok_or_else(|| {
            Error::Format(format!("unknown preset {name:?} (paper-a, paper-b, desk)"))
        }),
        (None, None) => Err(Error::Format("pass --config PATH or --preset NAME".into())),
        (Some(_), Some(_)) => unreachable!("clap rejects the combination"),
    }
}

fn write(path: &Path, text: &str) -> Result<(), Error> {
    std::fs::write(path, text)?;
    Ok(())
}

/// Timestamps live only in this sidecar so every other output is
/// byte-reproducible.
fn write_meta(dir: &Path, command: &str, wall: std::time::Duration) -> Result<(), Error> {
    let unix = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let text = format!(
        "{{\n  \"command\": \"{command}\",\n  \"completed_unix\": {unix},\n  \"wall_ms\": {}\n}}\n",
        wall.as_millis()
    );
    write(&dir.join("meta.json"), &text)
}

fn cmd_generate(config: ExperimentConfig, _args: &RunArgs) -> Result<(), Error> {
    let t0 = Instant::now();
    let dir = PathBuf::from(&config.output_dir);
    std::fs::create_dir_all(&dir)?;
    let pipeline = Pipeline::prepare(config)?;
    write_generated(&dir, &pipeline)?;
    write_meta(&dir, "generate", t0.elapsed())
}

fn write_generated(dir: &Path, pipeline: &Pipeline) -> Result<(), Error> {
    write(&dir.join("config.json"), &pipeline.config.to_json())?;
    io::write_trajectory(
        &dir.join("true_trajectory.bin"),
        &pipeline.world.true_trajectory,
    )?;
    io::write_trajectory(
        &dir.join("bk_trajectory.bin"),
        &pipeline.world.bk_trajectory,
    )?;
    write(
        &dir.join("observations.csv"),
        &io::observation_series_csv(&pipeline.world.true_series),
    )?;
    if matches!(pipeline.config.mode, Mode::Parametric { .. }) {
        write(
            &dir.join("observations_train.csv"),
            &io::observation_series_csv(&pipeline.training_series),
        )?;
    }
    let modes = pipeline.background.mode_slices();
    io::write_field_records(
        &dir.join("pod_modes.bin"),
        pipeline.disc.mesh.node_count(),
        modes.iter().copied(),
    )?;
    write(
        &dir.join("pod_eigenvalues.csv"),
        &io::eigenvalues_csv(&pipeline.background.eigenvalues),
    )?;
    write(&dir.join("mesh.csv"), &io::mesh_csv(&pipeline.disc.mesh))?;
    Ok(())
}

/// The observation rows the forecaster may train on, read back from the
/// interchange CSV written by `generate`.
fn load_training_series(
    dir: &Path,
    config: &ExperimentConfig,
) -> Result<svda_core::observation::ObservationSeries, Error> {
    let file = match config.mode {
        Mode::Future => dir.join("observations.csv"),
        Mode::Parametric { .. } => dir.join("observations_train.csv"),
    };
    let text = std::fs::read_to_string(&file)
        .map_err(|e| Error::Format(format!("{}: {e} (run `generate` first)", file.display())))?;
    let series = io::parse_observation_series(&text)?;
    let rows = match config.mode {
        Mode::Future => config.time.k_off,
        Mode::Parametric { .. } => series.len(),
    };
    if rows > series.len() {
        return Err(Error::Format(format!(
            "observation file has {} rows, need {rows}",
            series.len()
        )));
    }
    Ok(svda_core::observation::ObservationSeries {
        times: series.times[..rows].to_vec(),
        rows: series.rows[..rows].to_vec(),
    })
}

fn model_config(config: &ExperimentConfig) -> ModelConfig {
    ModelConfig {
        lookback: config.ml.lookback,
        hidden: config.ml.hidden,
        dense_widths: config.ml.dense_widths.clone(),
        learning_rate: config.ml.learning_rate,
        epochs: config.ml.epochs,
        seed: config.ml.seed,
    }
}

fn training_log_csv(model: &Model) -> String {
    let mut s = String::from("epoch,loss\n");
    for (i, loss) in model.loss_history.iter().enumerate() {
        s.push_str(&format!("{},{loss}\n", i + 1));
    }
    s
}

fn cmd_train(config: ExperimentConfig, _args: &RunArgs) -> Result<(), Error> {
    let t0 = Instant::now();
    let dir = PathBuf::from(&config.output_dir);
    let series = load_training_series(&dir, &config)?;
    let tset = build_training_set(&series, series.len(), config.ml.lookback)?;
    let model = train(&tset, &model_config(&config))?;
    save_checkpoint(&model, &dir.join("model.ckpt"))?;
    write(&dir.join("training_log.csv"), &training_log_csv(&model))?;
    write_meta(&dir, "train", t0.elapsed())
}

fn run_online(
    pipeline: &Pipeline,
    model: Option<&Model>,
    oracle_stub: bool,
) -> Result<OnlineOutput, Error> {
    let source = if oracle_stub {
        PredictionSource::TrueObservations
    } else {
        PredictionSource::Model(model.expect("model required without --oracle-stub"))
    };
    pipeline.online(source)
}

fn write_assimilated(dir: &Path, pipeline: &Pipeline, out: &OnlineOutput) -> Result<(), Error> {
    let n = pipeline.disc.mesh.node_count();
    io::write_field_records(
        &dir.join("estimates_svda.bin"),
        n,
        out.svda.iter().map(|e| e.field.as_slice()),
    )?;
    io::write_field_records(
        &dir.join("estimates_star.bin"),
        n,
        out.star.iter().map(|e| e.field.as_slice()),
    )?;
    let predictions = svda_core::observation::ObservationSeries {
        times: (out.first_step..=pipeline.grid.steps)
            .map(|k| pipeline.grid.time(k))
            .collect(),
        rows: out.predictions.clone(),
    };
    write(
        &dir.join("predictions.csv"),
        &io::observation_series_csv(&predictions),
    )?;
    write(&dir.join("error_report.csv"), &out.report.to_csv())?;
    Ok(())
}

fn cmd_assimilate(config: ExperimentConfig, args: &RunArgs) -> Result<(), Error> {
    let t0 = Instant::now();
    let dir = PathBuf::from(&config.output_dir);
    std::fs::create_dir_all(&dir)?;
    let pipeline = Pipeline::prepare(config.clone())?;
    let model = if args.oracle_stub {
        None
    } else {
        let path = dir.join("model.ckpt");
        if !path.exists() {
            return Err(Error::Format(format!(
                "{}: missing model checkpoint (run `train` first)",
                path.display()
            )));
        }
        Some(load_checkpoint(&path)?)
    };
    let out = run_online(&pipeline, model.as_ref(), args.oracle_stub)?;
    write_assimilated(&dir, &pipeline, &out)?;
    write_meta(&dir, "assimilate", t0.elapsed())
}

fn cmd_report(dir: &Path) -> Result<(), Error> {
    let path = dir.join("error_report.csv");
    let text = std::fs::read_to_string(&path)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let svg = render_report(&text)?;
    write(&dir.join("report.svg"), &svg)
}

fn render_report(csv_text: &str) -> Result<String, Error> {
    let cols = io::read_csv_columns(csv_text, &["t", "err_bk_L2", "err_star_L2", "err_svda_L2"])?;
    error_history_svg(
        &cols[0],
        &[
            Curve {
                label: "best-knowledge only",
                color: "#2ca02c",
                values: &cols[1],
            },
            Curve {
                label: "true observations",
                color: "#ff7f0e",
                values: &cols[2],
            },
            Curve {
                label: "predicted observations",
                color: "#1f77b4",
                values: &cols[3],
            },
        ],
        "relative L2 error vs time",
    )
}

fn cmd_all(config: ExperimentConfig, args: &RunArgs) -> Result<(), Error> {
    let t0 = Instant::now();
    let dir = PathBuf::from(&config.output_dir);
    std::fs::create_dir_all(&dir)?;
    let pipeline = Pipeline::prepare(config.clone())?;
    write_generated(&dir, &pipeline)?;

    if args.oracle_stub {
        let out = run_online(&pipeline, None, true)?;
        write_assimilated(&dir, &pipeline, &out)?;
    } else if args.repeat == 1 {
        let model = pipeline.train_model(config.ml.seed)?;
        save_checkpoint(&model, &dir.join("model.ckpt"))?;
        write(&dir.join("training_log.csv"), &training_log_csv(&model))?;
        let out = run_online(&pipeline, Some(&model), false)?;
        write_assimilated(&dir, &pipeline, &out)?;
    } else {
        // independent seeds, medianed into the primary error report
        let seeds: Vec<u64> = (0..args.repeat as u64)
            .map(|s| config.ml.seed + s)
            .collect();
        let runs = svda_core::exec::map_indexed(seeds.len(), |i| -> Result<_, Error> {
            let model = pipeline.train_model(seeds[i])?;
            let out = run_online(&pipeline, Some(&model), false)?;
            Ok((model, out))
        });
        let runs: Vec<(Model, OnlineOutput)> = runs.into_iter().collect::<Result<_, _>>()?;
        for (i, (_, out)) in runs.iter().enumerate() {
            write(
                &dir.join(format!("error_report_seed_{}.csv", seeds[i])),
                &out.report.to_csv(),
            )?;
        }
        let (base_model, base_out) = &runs[0];
        save_checkpoint(base_model, &dir.join("model.ckpt"))?;
        write(&dir.join("training_log.csv"), &training_log_csv(base_model))?;
        write_assimilated(&dir, &pipeline, base_out)?;
        let reports: Vec<ErrorReport> = runs.iter().map(|(_, o)| o.report.clone()).collect();
        write(
            &dir.join("error_report.csv"),
            &median_report(&reports).to_csv(),
        )?;
    }
    cmd_report(&dir)?;
    write_meta(&dir, "all", t0.elapsed())
}
