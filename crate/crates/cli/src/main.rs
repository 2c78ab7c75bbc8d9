use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use kwet_cli::commands;
use kwet_cli::config::{hex, Preset, RunConfig};
use kwet_cli::CliError;

#[derive(Parser)]
#[command(name = "kwet", version, about = "Droplet wetting simulator and kinetic PINN surrogate")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    Rough,
    Pillars,
    SquareRough,
    Desk,
}

impl From<PresetArg> for Preset {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::Rough => Preset::Rough,
            PresetArg::Pillars => Preset::Pillars,
            PresetArg::SquareRough => Preset::SquareRough,
            PresetArg::Desk => Preset::Desk,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the lattice-Boltzmann simulation and store its snapshots.
    Simulate {
        #[arg(long, required_unless_present = "preset")]
        config: Option<PathBuf>,
        /// Start from a preset (a given config file wins).
        #[arg(long, value_enum)]
        preset: Option<PresetArg>,
        /// Snapshot directory (default: paths.snapshots of the config).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Draw a training dataset from a snapshot directory.
    Sample {
        #[arg(long)]
        snapshots: PathBuf,
        #[arg(long, value_parser = parse_n)]
        n: usize,
        /// Draw the lowest quarter of the domain twice as densely.
        #[arg(long)]
        boundary_densify: bool,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the network on a dataset.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// Output directory (default: paths.training of the config).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Continue from a saved training state.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Train even if the dataset came from a different configuration.
        #[arg(long)]
        force: bool,
        #[arg(long, default_value_t = 500)]
        progress_every: usize,
    },
    /// Evaluate a trained model on a grid or at listed points.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, requires = "grid", conflicts_with = "points")]
        at: Option<f64>,
        /// Grid size as LxH.
        #[arg(long, value_parser = parse_grid)]
        grid: Option<(usize, usize)>,
        /// CSV with an x,y,t header.
        #[arg(long)]
        points: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare predicted snapshots with simulated ones.
    Evaluate {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Compare even when the configuration hashes differ.
        #[arg(long)]
        force: bool,
    },
    /// Repeat the simulation over a range of one parameter.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "G_ads")]
        param: String,
        /// start:end:step, both ends included.
        #[arg(long, default_value = "-1.25:-2.75:0.25", allow_hyphen_values = true)]
        values: String,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads (KWET_THREADS overrides; default: available cores).
        #[arg(long)]
        workers: Option<usize>,
    },
}

fn parse_n(s: &str) -> Result<usize, String> {
    let n: usize = s.parse().map_err(|e| format!("{e}"))?;
    if kwet_pinn::kpinn_loss::SAMPLE_PRESETS.contains(&n) {
        Ok(n)
    } else {
        Err(format!("n must be one of {:?}", kwet_pinn::kpinn_loss::SAMPLE_PRESETS))
    }
}

fn parse_grid(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once(['x', 'X']).ok_or("grid must look like LxH")?;
    let l = a.trim().parse().map_err(|e| format!("{e}"))?;
    let h = b.trim().parse().map_err(|e| format!("{e}"))?;
    Ok((l, h))
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { config, preset, out } => {
            let cfg = match (config, preset) {
                (Some(path), _) => RunConfig::load(&path)?,
                (None, Some(p)) => RunConfig::preset(p.into()),
                (None, None) => unreachable!("clap requires one of them"),
            };
            let out = out.unwrap_or_else(|| cfg.paths.snapshots.clone());
            let s = commands::simulate(&cfg, &out)?;
            println!(
                "{} snapshots up to t = {} in {} (mass drift {:.3e}, config {})",
                s.snapshots,
                s.final_time,
                out.display(),
                s.mass_drift,
                &hex(&s.config_hash)[..12]
            );
        }
        Command::Sample { snapshots, n, boundary_densify, seed, out } => {
            let d = commands::sample(&snapshots, n, boundary_densify, seed, &out)?;
            let held = d.data.validation.iter().filter(|v| **v).count();
            println!(
                "{} observations ({} train, {} validation) to {}",
                d.data.observations.len(),
                d.data.observations.len() - held,
                held,
                out.display()
            );
        }
        Command::Train { config, dataset, out, resume, force, progress_every } => {
            let cfg = RunConfig::load(&config)?;
            let out = out.unwrap_or_else(|| cfg.paths.training.clone());
            let s = commands::train(&cfg, &dataset, &out, resume.as_deref(), force, progress_every)?;
            let r = &s.report;
            println!("initial loss {:.4e}", r.initial_loss);
            println!("adam exit loss {:.4e}", r.adam_exit_loss);
            println!("final loss {:.4e}", r.final_loss);
            if let Some((e, v)) = r.best_validation {
                println!("best validation {:.4e} at epoch {e}", v);
            }
            if let Some(e) = r.stopped_early {
                println!("stopped early at epoch {e}");
            }
            println!("{:.1} s; model in {}", s.seconds, out.display());
        }
        Command::Predict { checkpoint, at, grid, points, out } => {
            let model = commands::read_model(&checkpoint)?;
            let t = match (at, grid, points) {
                (Some(t), Some((l, h)), None) => {
                    let (file, t) = commands::predict_grid(&model, t, l, h)?;
                    std::fs::write(&out, file.encode()).map_err(|e| CliError::io(&out, e))?;
                    t
                }
                (None, None, Some(p)) => {
                    let text = std::fs::read_to_string(&p).map_err(|e| CliError::io(&p, e))?;
                    let pts = commands::read_points_csv(&text)?;
                    let (csv, t) = commands::predict_csv(&model, &pts)?;
                    std::fs::write(&out, csv).map_err(|e| CliError::io(&out, e))?;
                    t
                }
                _ => return Err(CliError::Config("give either --at with --grid, or --points".into())),
            };
            if t.extrapolated {
                eprintln!("warning: extrapolating beyond the trained horizon t = {}", model.horizon);
            }
            println!("{} evaluations in {:.4} s ({:.0} evaluations/second)", t.evaluations, t.seconds, t.per_second());
        }
        Command::Evaluate { pred, truth, out, force } => {
            let s = commands::evaluate(&pred, &truth, &out, force)?;
            let m = &s.density.overall;
            println!(
                "density over {} times: L2 {:.4e}, RMSE {:.4e}, MAE {:.4e}, R2 {}",
                s.times.len(),
                m.l2,
                m.rmse,
                m.mae,
                m.r2.map_or("undefined".into(), |v| format!("{v:.6}"))
            );
            let fmt = |v: Option<f64>| v.map_or("n/a".into(), |v| format!("{v:.3e}"));
            println!("mass drift: predicted {}, truth {}", fmt(s.mass_drift_pred), fmt(s.mass_drift_truth));
            println!("reports in {}", out.display());
        }
        Command::Sweep { config, param, values, out, workers } => {
            if !param.eq_ignore_ascii_case("g_ads") {
                return Err(CliError::Config(format!("unsupported sweep parameter '{param}' (only G_ads)")));
            }
            let cfg = RunConfig::load(&config)?;
            let values = commands::parse_range(&values)?;
            let rows = commands::sweep(&cfg, &values, &out, commands::worker_count(workers))?;
            let failed = rows.iter().filter(|r| r.result.is_err()).count();
            println!("{} runs, {} failed; table in {}", rows.len(), failed, out.join(commands::SWEEP_CSV).display());
            if failed == rows.len() {
                return Err(CliError::Numerical("every sweep run failed".into()));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { kwet_cli::EXIT_CONFIG } else { kwet_cli::EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("kwet: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
