use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use freqilc_core::analysis::describe_region;
use freqilc_core::config::ExperimentConfig;
use freqilc_core::repro::reproduce_all;
use freqilc_core::runner::{cmd_design, cmd_simulate, cmd_sweep, cmd_tune, LawReport};
use freqilc_core::IlcError;

#[derive(Parser)]
#[command(name = "freqilc", version, about = "Frequency-response based iterative learning control")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; defaults to the config's output_dir or out/<name>.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for sweeps and reproduce-all.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Seed for the tuner's tie-breaking jitter; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build the learning laws and report the iteration-matrix singular values.
    Design,
    /// Tune the configured gain blocks toward the target sigma_max.
    Tune,
    /// Run the learning loop on the nominal plant.
    Simulate,
    /// Robustness and steady-state deviation sweeps.
    Sweep,
    /// Run every pinned experiment and write a manifest of reference checks.
    ReproduceAll,
}

enum Failure {
    Config(String),
    Mismatch(String),
}

fn load(common: &Common) -> Result<ExperimentConfig, Failure> {
    let path = common
        .config
        .as_deref()
        .ok_or_else(|| Failure::Config("--config PATH is required for this command".into()))?;
    let mut cfg = ExperimentConfig::from_file(path).map_err(|e| Failure::Config(e.to_string()))?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn out_dir(common: &Common, cfg: &ExperimentConfig) -> PathBuf {
    common
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| Path::new("out").join(if cfg.name.is_empty() { "run" } else { &cfg.name }))
}

fn runtime(e: IlcError) -> Failure {
    match e {
        IlcError::InvalidParameter(_) | IlcError::Parse(_) => Failure::Config(e.to_string()),
        other => Failure::Mismatch(other.to_string()),
    }
}

fn print_reports(reports: &[LawReport]) {
    for r in reports {
        println!("{}", r.table());
        if let Some(t) = &r.trace {
            println!(
                "tuning: {} steps, sigma_max {:.6} -> {:.6}, stop: {:?}\n",
                t.iterations(),
                t.initial_sigma,
                t.final_sigma(),
                t.stop
            );
        }
    }
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let common = &cli.common;
    if let Some(k) = common.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(k.max(1))
            .build_global()
            .map_err(|e| Failure::Config(format!("--jobs: {e}")))?;
    }
    match cli.command {
        Cmd::Design => {
            let cfg = load(common)?;
            print_reports(&cmd_design(&cfg, &out_dir(common, &cfg)).map_err(runtime)?);
        }
        Cmd::Tune => {
            let cfg = load(common)?;
            print_reports(&cmd_tune(&cfg, &out_dir(common, &cfg)).map_err(runtime)?);
        }
        Cmd::Simulate => {
            let cfg = load(common)?;
            for (v, rec) in cmd_simulate(&cfg, &out_dir(common, &cfg)).map_err(runtime)? {
                println!("{v}");
                for (j, rms) in rec.rms().iter().enumerate() {
                    println!("  iter {j:>3}  rms {rms:.6e}");
                }
            }
        }
        Cmd::Sweep => {
            let cfg = load(common)?;
            let out = cmd_sweep(&cfg, &out_dir(common, &cfg)).map_err(runtime)?;
            for (v, curves) in &out.robustness {
                for c in curves {
                    println!(
                        "{v:<12} {:<7} sigma_max < 1: {:<24} rho < 1: {}",
                        c.param.as_str(),
                        describe_region(&c.sigma_crossings, c.sigma_max[0] < 1.0),
                        describe_region(&c.rho_crossings, c.rho[0] < 1.0)
                    );
                }
            }
            for (label, phase, pts) in &out.deviation {
                let worst = pts.iter().map(|p| p.rms).fold(0.0, f64::max);
                println!("{label:<4} {phase:?}: largest rms deviation {worst:.4e} over {} frequencies", pts.len());
            }
        }
        Cmd::ReproduceAll => {
            let out = common.out.clone().unwrap_or_else(|| PathBuf::from("out"));
            let manifest = reproduce_all(&out, common.seed).map_err(runtime)?;
            print!("{}", manifest.summary());
            println!("manifest written to {}", out.join("manifest.csv").display());
            if !manifest.all_pass() {
                return Err(Failure::Mismatch("one or more reference checks failed".into()));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Mismatch(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
