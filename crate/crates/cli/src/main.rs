use berryline::harness::{
    compare_report, emit_plotdata, run_estimate, run_hadamard, sweep, EstimateConfig, HadamardRunConfig, Overrides,
    PlotKind, SweepConfig, SweepResult,
};
use berryline::Error;
use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "berryline", version, about = "Berry-phase estimation from forward and reverse adiabatic loops")]
struct Cli {
    /// Master seed, overriding the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Propagator tolerance, overriding `propagation.tol`.
    #[arg(long = "tol-prop", global = true)]
    tol_prop: Option<f64>,
    /// Spectral grid intervals, overriding `spectral.grid`.
    #[arg(long, global = true)]
    grid: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an estimator stack over a runtime grid and fit the error scaling.
    Sweep {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Run the phase-estimation pipeline.
    Estimate {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Run the randomized Hadamard-test pipeline.
    HadamardRun {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Compare persisted sweeps of one model.
    Compare {
        /// Sweep output directories or `sweep.json` files.
        sweeps: Vec<PathBuf>,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Write plot-ready CSV from a persisted sweep.
    Plotdata {
        sweep: PathBuf,
        /// error-vs-t, bias-vs-t or residual-spectrum
        #[arg(short, long, default_value = "error-vs-t")]
        kind: String,
        #[arg(short, long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> berryline::Result<()> {
    let ov = Overrides { seed: cli.seed, tol_prop: cli.tol_prop, grid: cli.grid };
    match cli.command {
        Command::Sweep { config, out } => {
            let mut cfg = SweepConfig::load(&config, &ov)?;
            cfg.output = Some(out.clone());
            let r = sweep(&cfg)?;
            for (name, fit) in [("raw", &r.fit), ("period-averaged", &r.averaged_fit)] {
                if let Some(f) = fit {
                    println!(
                        "{} {name}: exponent {:.4}, coefficient {:.5e}, rms {:.3}{}",
                        r.label,
                        f.exponent,
                        f.coefficient,
                        f.residual_rms,
                        if f.reliable { "" } else { " (unreliable)" }
                    );
                }
            }
            println!("wrote {}", out.display());
        }
        Command::Estimate { config, out } => {
            let cfg = EstimateConfig::load(&config, &ov)?;
            let report = run_estimate(&cfg)?;
            if let Some(dir) = out {
                report.save(&dir, "estimate")?;
            }
            for t in &report.trials {
                println!("{}", serde_json::to_string(&t.result)?);
            }
            for s in &report.summary {
                println!("epsilon {:.3e}: {}/{} within target", s.epsilon, s.successes, s.trials);
            }
        }
        Command::HadamardRun { config, out } => {
            let cfg = HadamardRunConfig::load(&config, &ov)?;
            let report = run_hadamard(&cfg)?;
            if let Some(dir) = out {
                report.save(&dir, "hadamard")?;
            }
            for t in &report.trials {
                println!("{}", serde_json::to_string(&t.result)?);
            }
            for s in &report.summary {
                println!("epsilon {:.3e}: {}/{} within target", s.epsilon, s.successes, s.trials);
            }
        }
        Command::Compare { sweeps, out } => {
            let loaded = sweeps.iter().map(|p| SweepResult::load(p)).collect::<berryline::Result<Vec<_>>>()?;
            let doc = compare_report(&loaded)?;
            print!("{}", doc.to_text());
            if let Some(dir) = out {
                doc.write(&dir)?;
            }
        }
        Command::Plotdata { sweep, kind, out } => {
            let r = SweepResult::load(&sweep)?;
            emit_plotdata(&r, kind.parse::<PlotKind>()?, &out)?;
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("berryline: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    if e.is_config() {
        2
    } else {
        3
    }
}
