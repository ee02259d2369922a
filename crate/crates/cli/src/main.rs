//! `diffcd`: fit neural implicit surfaces, extract and evaluate them, and run
//! the numerical checks.
//!
//! Exit codes: 0 success, 1 a `verify` assertion failed, 2 usage or input
//! error, 3 empty level set, 4 numerical abort.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use diffcd::config::{self, RunConfig};
use diffcd::Error;

#[derive(Parser, Debug)]
#[command(name = "diffcd", version, about = "Neural implicit surface fitting with a symmetric Chamfer loss")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct GlobalArgs {
    /// Config file with [train], [field], [sampling], [loss] and [io] sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one key, e.g. `--set loss.lambda=0.5`. Repeatable.
    #[arg(long = "set", global = true, value_name = "SECTION.KEY=VALUE")]
    set: Vec<String>,
    /// Base configuration the file and overrides apply to: default, desk-3d or desk-2d.
    #[arg(long, global = true)]
    preset: Option<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit a field to a point cloud (.xyz, .txt, .ply or .obj).
    Fit {
        /// Overrides io.input.
        input: Option<PathBuf>,
        /// Continue from a saved trainer state.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Extract the zero level set of a checkpoint in input coordinates:
    /// an OBJ mesh in 3D, a segment CSV in 2D.
    Extract {
        checkpoint: PathBuf,
        /// Grid cells per axis; defaults to io.extract_resolution.
        #[arg(long)]
        resolution: Option<usize>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Chamfer distance, squared Chamfer distance and Chamfer angle between
    /// two meshes or clouds. Meshes are sampled uniformly; clouds are used as is.
    Metrics {
        a: PathBuf,
        b: PathBuf,
        /// Samples per mesh; defaults to io.metrics_samples.
        #[arg(long)]
        samples: Option<usize>,
        /// CSV destination; stdout when absent.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Numerical checks; exits 0 only if every assertion holds.
    Verify {
        #[command(subcommand)]
        check: Check,
    },
    /// Fit one of the synthetic 2D clouds and evaluate the contour.
    Demo2d {
        /// cross, sparse-box or noisy-circle.
        shape: String,
        /// Overrides loss.variant.
        #[arg(long)]
        variant: Option<String>,
    },
    /// Print the effective configuration.
    Config,
}

#[derive(Subcommand, Debug)]
enum Check {
    /// Monte-Carlo SSA estimates against the level-set integral of 1/‖∇f‖.
    Ssa {
        /// `sphere`, `scaled-sphere` or a trainer checkpoint path.
        #[arg(long, default_value = "sphere")]
        field: String,
        #[arg(long, value_delimiter = ',', default_value = "10,100,1000")]
        alphas: Vec<f64>,
        #[arg(long, default_value_t = 5000)]
        samples: usize,
        #[arg(long, default_value_t = 100)]
        repeats: usize,
        /// Marching cubes resolution of the oracle mesh.
        #[arg(long, default_value_t = 128)]
        resolution: usize,
    },
    /// Closed-form toy-circle minimizer against 1-D descent.
    ToyCircle {
        #[arg(long, default_value_t = 1e4)]
        alpha: f64,
        #[arg(long, default_value_t = 200_000)]
        steps: usize,
    },
    /// Fit once per eikonal weight and compare the level sets.
    LambdaSweep {
        /// Cloud to fit; the noisy circle when absent.
        input: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.5,1.0")]
        lambdas: Vec<f64>,
        #[arg(long, default_value_t = 256)]
        resolution: usize,
        #[arg(long, default_value_t = 5000)]
        samples: usize,
    },
}

pub enum Failure {
    Core(Error),
    /// A `verify` assertion did not hold.
    Check(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::EmptyLevelSet => 3,
        Error::NonFinite { .. } | Error::Diverged { .. } => 4,
        _ => 2,
    }
}

fn resolve_config(global: &GlobalArgs, command: &Command) -> Result<RunConfig, Error> {
    let base = match (&global.preset, command) {
        (Some(p), _) => p.as_str(),
        (None, Command::Demo2d { .. }) => "desk-2d",
        (
            None,
            Command::Verify {
                check: Check::LambdaSweep { input: None, .. },
            },
        ) => "desk-2d",
        _ => "default",
    };
    let mut cfg = config::preset(base)?;
    if let Some(path) = &global.config {
        cfg.merge_file(path)?;
    }
    for s in &global.set {
        cfg.set(s)?;
    }
    if let Some(seed) = global.seed {
        cfg.train.seed = seed;
    }
    if let Some(dir) = &global.out_dir {
        cfg.io.out_dir = dir.clone();
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(n) = cli.global.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidConfig(format!("--threads: {e}")))?;
    }
    let mut cfg = resolve_config(&cli.global, &cli.command)?;
    match cli.command {
        Command::Fit { input, resume } => {
            if let Some(p) = input {
                cfg.io.input = Some(p);
            }
            commands::fit(&cfg, resume.as_deref())
        }
        Command::Extract {
            checkpoint,
            resolution,
            output,
        } => {
            if let Some(r) = resolution {
                cfg.io.extract_resolution = r;
            }
            commands::extract(&cfg, &checkpoint, output)
        }
        Command::Metrics { a, b, samples, output } => {
            if let Some(n) = samples {
                cfg.io.metrics_samples = n;
            }
            commands::metrics(&cfg, &a, &b, output)
        }
        Command::Verify { check } => match check {
            Check::Ssa {
                field,
                alphas,
                samples,
                repeats,
                resolution,
            } => commands::verify_ssa(&cfg, &field, alphas, samples, repeats, resolution),
            Check::ToyCircle { alpha, steps } => commands::verify_toy_circle(&cfg, alpha, steps),
            Check::LambdaSweep {
                input,
                lambdas,
                resolution,
                samples,
            } => {
                if let Some(p) = input {
                    cfg.io.input = Some(p);
                }
                commands::verify_lambda_sweep(&cfg, lambdas, resolution, samples)
            }
        },
        Command::Demo2d { shape, variant } => {
            if let Some(v) = variant {
                cfg.set(&format!("loss.variant={v}"))?;
            }
            commands::demo2d(&cfg, &shape)
        }
        Command::Config => {
            cfg.validate()?;
            print!("{cfg}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check(msg)) => {
            eprintln!("verification failed: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Core(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
