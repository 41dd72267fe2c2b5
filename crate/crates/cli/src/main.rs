use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use odefit_cli::commands::{self, FitMethod};
use odefit_cli::{load_config, CliResult, Overrides};
use odefit_core::DerivativeMethod;

#[derive(Parser)]
#[command(name = "odefit", version, about = "Fit ODE parameters by derivative matching")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a dataset: data.csv, clean.csv, meta.json.
    Generate {
        #[command(flatten)]
        source: Source,
    },
    /// Fit parameters from every configured initial guess.
    Fit {
        #[command(flatten)]
        source: Source,
        /// nr, snr, gd, sgd or nls; defaults to the config's solver.method.
        #[arg(long)]
        method: Option<String>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        subset_r: Option<usize>,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        max_iters: Option<usize>,
        #[arg(long, value_enum)]
        derivative: Option<DerivativeArg>,
    },
    /// Error metrics for saved fits.
    Report {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        data: PathBuf,
        /// Noise-free data for the derivative rows.
        #[arg(long)]
        clean: Option<PathBuf>,
        #[arg(long = "fit", required = true, num_args = 1..)]
        fits: Vec<PathBuf>,
    },
    /// Regenerate a full experiment bundle from a preset or config file.
    Repro {
        /// population, lorenz or activator-inhibitor
        experiment: Option<String>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Compare analytic parameter Jacobians with finite differences.
    CheckJacobian {
        #[arg(long = "model")]
        models: Vec<String>,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct Source {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in experiment preset, used instead of --config.
    #[arg(long)]
    experiment: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum DerivativeArg {
    ForwardDifference,
    ThreePointNonuniform,
}

impl From<DerivativeArg> for DerivativeMethod {
    fn from(d: DerivativeArg) -> Self {
        match d {
            DerivativeArg::ForwardDifference => DerivativeMethod::ForwardDifference,
            DerivativeArg::ThreePointNonuniform => DerivativeMethod::ThreePointNonuniform,
        }
    }
}

impl Source {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            output_dir: self.output_dir.clone(),
            ..Overrides::default()
        }
    }
}

fn run(cli: Cli) -> CliResult<i32> {
    match cli.command {
        Command::Generate { source } => {
            let cfg = load_config(source.config.as_deref(), source.experiment.as_deref(), &source.overrides())?;
            commands::generate(&cfg)?;
            println!("wrote data.csv, clean.csv, meta.json to {}", cfg.output_dir.display());
        }
        Command::Fit {
            source,
            method,
            data,
            subset_r,
            epsilon,
            max_iters,
            derivative,
        } => {
            let method: Option<FitMethod> = method.as_deref().map(str::parse).transpose()?;
            let mut ov = source.overrides();
            ov.subset_r = subset_r;
            ov.epsilon = epsilon;
            ov.max_iters = max_iters;
            ov.derivative = derivative.map(Into::into);
            if let Some(FitMethod::Solver(m)) = method {
                ov.method = Some(m);
            }
            let cfg = load_config(source.config.as_deref(), source.experiment.as_deref(), &ov)?;
            let method = method.unwrap_or(FitMethod::Solver(cfg.solver.method));
            let records = commands::fit(&cfg, method, &data)?;
            for rec in &records {
                match (&rec.result, &rec.error) {
                    (Some(r), _) => println!(
                        "{}: {} iterations, {:?}, params {:?}",
                        rec.id(),
                        r.iterations,
                        r.termination,
                        r.params.as_slice()
                    ),
                    (None, Some(e)) => println!("{}: failed: {e}", rec.id()),
                    (None, None) => println!("{}: no result", rec.id()),
                }
            }
        }
        Command::Report {
            source,
            data,
            clean,
            fits,
        } => {
            let cfg = load_config(source.config.as_deref(), source.experiment.as_deref(), &source.overrides())?;
            let entries = commands::report(&cfg, &data, clean.as_deref(), &fits)?;
            for e in &entries {
                match (&e.report, &e.error) {
                    (Some(r), _) => {
                        for w in &r.warnings {
                            eprintln!("warning: {}: {w}", e.fit_id);
                        }
                        println!("{}: {} rows", e.fit_id, r.rows.len());
                    }
                    (None, err) => println!("{}: no report: {}", e.fit_id, err.clone().unwrap_or_default()),
                }
            }
        }
        Command::Repro {
            experiment,
            config,
            seed,
            output_dir,
        } => {
            let ov = Overrides {
                seed,
                output_dir,
                ..Overrides::default()
            };
            let cfg = load_config(config.as_deref(), experiment.as_deref(), &ov)?;
            let outcome = commands::repro(&cfg)?;
            for c in &outcome.checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            println!("bundle written to {}", outcome.dir.display());
            if !outcome.passed() {
                eprintln!("error: one or more reproduction checks failed");
                return Ok(4);
            }
        }
        Command::CheckJacobian { models, trials, seed } => {
            let checks = commands::check_jacobian(&models, trials, seed)?;
            for c in &checks {
                println!("{}: max discrepancy {:.3e}", c.model, c.discrepancy);
            }
            commands::jacobian_verdict(&checks)?;
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
