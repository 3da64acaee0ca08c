//! Command-line front end for Lagrangian inference.
//!
//! Exit codes: 0 on success, 2 for configuration / IO / parse problems, 3
//! for numerical failures (degeneracy, non-convergence, inconsistency).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use lagfield::cli::{
    cmd_convergence, cmd_filldistance, cmd_observe, cmd_train, cmd_trajectory, cmd_uq_grid,
    load_model, ExperimentConfig, GridObservable, SliceSpec,
};
use lagfield::Error;

#[derive(Parser)]
#[command(name = "lagfield", version, about = "Gaussian-field inference of Lagrangians")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Configuration file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a single key, e.g. `--set m=300`; repeatable, applied in
    /// order after the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Print the effective configuration and exit.
    #[arg(long)]
    dump_config: bool,
}

impl ConfigArgs {
    fn load(&self) -> Result<Option<ExperimentConfig>, Error> {
        let cfg = ExperimentConfig::load(self.config.as_deref(), &self.set)?;
        if self.dump_config {
            print!("{}", cfg.dump());
            return Ok(None);
        }
        Ok(Some(cfg))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train a model from the configured experiment and save it as JSON.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        /// Output path of the serialised model.
        #[arg(long, default_value = "model.json")]
        out: PathBuf,
    },
    /// Write the configured observation set as CSV without training.
    Observe {
        #[command(flatten)]
        config: ConfigArgs,
        /// Output CSV path.
        #[arg(long, default_value = "observations.csv")]
        out: PathBuf,
    },
    /// Evaluate an observable with uncertainty on a phase-space slice.
    UqGrid {
        /// Trained model file.
        #[arg(long)]
        model: PathBuf,
        /// Observable: el, ham, or eval.
        #[arg(long, default_value = "el")]
        observable: String,
        /// Slice: xx for (u, v, 0, 0) or xv for (u, 0, v, 0).
        #[arg(long, default_value = "xx")]
        slice: String,
        /// Grid points per axis.
        #[arg(long, default_value_t = 21)]
        grid: usize,
        /// Lower slice bound.
        #[arg(long, default_value_t = -1.0)]
        lo: f64,
        /// Upper slice bound.
        #[arg(long, default_value_t = 1.0)]
        hi: f64,
        /// Output CSV path.
        #[arg(long, default_value = "uq_grid.csv")]
        out: PathBuf,
    },
    /// Integrate a trajectory of a trained model.
    Trajectory {
        /// Trained model file.
        #[arg(long)]
        model: PathBuf,
        /// Start state, comma separated. Continuous models: a phase point
        /// (x‖ẋ). Discrete models: the seed pair (x₀‖x₁).
        #[arg(long, value_delimiter = ',')]
        start: Vec<f64>,
        /// Continuous integration horizon.
        #[arg(long, default_value_t = 100.0)]
        horizon: f64,
        /// Continuous RK4 step.
        #[arg(long, default_value_t = 0.01)]
        dt: f64,
        /// Discrete step count.
        #[arg(long, default_value_t = 1000)]
        steps: usize,
        /// Output CSV path.
        #[arg(long, default_value = "trajectory.csv")]
        out: PathBuf,
    },
    /// Run the one-dimensional oscillator convergence study.
    Convergence {
        #[command(flatten)]
        config: ConfigArgs,
        /// Output CSV path.
        #[arg(long, default_value = "convergence.csv")]
        out: PathBuf,
    },
    /// Compare uniform-mesh and Halton fill distances on the unit cube.
    FillDistance {
        /// Output CSV path.
        #[arg(long, default_value = "fill_distance.csv")]
        out: PathBuf,
    },
}

fn run() -> Result<(), Error> {
    match Cli::parse().command {
        Command::Train { config, out } => {
            let Some(cfg) = config.load()? else { return Ok(()) };
            let report = cmd_train(&cfg, &out)?;
            println!("{report}");
            println!("model written to {}", out.display());
        }
        Command::Observe { config, out } => {
            let Some(cfg) = config.load()? else { return Ok(()) };
            cmd_observe(&cfg, &out)?;
            println!("observations written to {}", out.display());
        }
        Command::UqGrid {
            model,
            observable,
            slice,
            grid,
            lo,
            hi,
            out,
        } => {
            let observable = match observable.as_str() {
                "el" => GridObservable::El,
                "ham" => GridObservable::Ham,
                "eval" => GridObservable::Eval,
                other => {
                    return Err(Error::InvalidConfig(format!(
                        "unknown observable '{other}' (expected el, ham, or eval)"
                    )));
                }
            };
            let slice = match slice.as_str() {
                "xx" => SliceSpec::PositionPosition,
                "xv" => SliceSpec::PositionVelocity,
                other => {
                    return Err(Error::InvalidConfig(format!(
                        "unknown slice '{other}' (expected xx or xv)"
                    )));
                }
            };
            if grid < 2 {
                return Err(Error::InvalidConfig("grid must be at least 2".into()));
            }
            let model = load_model(&model)?;
            cmd_uq_grid(&model, observable, slice, grid, lo, hi, &out)?;
            println!("grid written to {}", out.display());
        }
        Command::Trajectory {
            model,
            start,
            horizon,
            dt,
            steps,
            out,
        } => {
            let model = load_model(&model)?;
            cmd_trajectory(&model, &start, horizon, dt, steps, &out)?;
            println!("trajectory written to {}", out.display());
        }
        Command::Convergence { config, out } => {
            let Some(cfg) = config.load()? else { return Ok(()) };
            cmd_convergence(&cfg, &out)?;
            println!("convergence study written to {}", out.display());
        }
        Command::FillDistance { out } => {
            cmd_filldistance(&out)?;
            println!("fill-distance study written to {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::InvalidConfig(_) | Error::Io(_) | Error::Serde(_) => ExitCode::from(2),
                _ => ExitCode::from(3),
            }
        }
    }
}
