use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use qcomp::harness::{
    self, run_experiment, solve_single, summarize_cdf, summarize_power_sweep, to_json_pretty, write_outputs, Algorithm,
    ExperimentConfig,
};
use qcomp::Bits;

#[derive(Parser)]
#[command(name = "qcomp", version, about = "Multicell beamforming and power control with low-resolution converters")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one channel draw with one algorithm and print the solver report.
    Solve(Overrides),
    /// Total power against the target SINR.
    Sweep(Overrides),
    /// Empirical CDF of the achieved SINRs.
    Cdf(Overrides),
    /// Run the built-in self-checks.
    Validate {
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Args, Debug, Default)]
struct Overrides {
    /// Experiment configuration file (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed of the first trial.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Comma-separated algorithms: icomp, dcomp, percell, ofdm_icomp.
    #[arg(long, value_delimiter = ',')]
    algo: Option<Vec<String>>,
    /// Comma-separated bit depths; `inf` for unquantized.
    #[arg(long, value_delimiter = ',')]
    bits: Option<Vec<String>>,
    /// Comma-separated target SINRs in dB.
    #[arg(long = "gamma-db", value_delimiter = ',', allow_hyphen_values = true)]
    gamma_db: Option<Vec<f64>>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
}

impl Overrides {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.trial_seed_base = seed;
        }
        if let Some(n) = self.trials {
            cfg.n_trials = n;
        }
        if let Some(list) = &self.algo {
            cfg.algorithms = list.iter().map(|a| a.parse()).collect::<qcomp::Result<Vec<Algorithm>>>()?;
        }
        if let Some(list) = &self.bits {
            cfg.bits = Some(
                list.iter()
                    .map(|b| b.parse::<Bits>().map_err(|e| anyhow::anyhow!("--bits {b}: {e}")))
                    .collect::<Result<_>>()?,
            );
        }
        if let Some(g) = &self.gamma_db {
            cfg.sweep = Some(g.clone());
        }
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        if self.workers.is_some() {
            cfg.workers = self.workers;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn experiment(args: &Overrides, show_cdf: bool) -> Result<()> {
    let cfg = args.config()?;
    let records = run_experiment(&cfg)?;
    let paths = write_outputs(&cfg, &records).with_context(|| format!("writing {}", cfg.output_dir.display()))?;
    let converged = records.iter().filter(|r| r.converged).count();
    eprintln!("{} records ({converged} converged) in {}", records.len(), cfg.output_dir.display());
    if show_cdf {
        let rows = summarize_cdf(&records);
        eprintln!("{} CDF points written to {}", rows.len(), paths.cdf.display());
    } else {
        println!("algorithm,bits,gamma_db,mean_total_power_dbm,infeasible_fraction");
        for r in summarize_power_sweep(&records) {
            let g = r.gamma_db.map(|g| format!("{g}")).unwrap_or_default();
            let p = r.mean_total_power_dbm.map(|p| format!("{p:.3}")).unwrap_or_default();
            println!("{},{},{g},{p},{:.3}", r.algorithm, r.bits, r.infeasible_fraction);
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Solve(args) => {
            let cfg = args.config()?;
            if cfg.algorithms.len() != 1 {
                bail!("solve takes exactly one algorithm, got {}", cfg.algorithms.len());
            }
            match solve_single(&cfg) {
                Ok(outcome) => {
                    println!("{}", to_json_pretty(&outcome.report)?);
                    Ok(ExitCode::SUCCESS)
                }
                Err(e @ (qcomp::Error::Config(_) | qcomp::Error::DimensionMismatch(_))) => Err(e.into()),
                Err(e) => {
                    eprintln!("no solution: {e}");
                    Ok(ExitCode::from(2))
                }
            }
        }
        Command::Sweep(args) => experiment(&args, false).map(|_| ExitCode::SUCCESS),
        Command::Cdf(args) => experiment(&args, true).map(|_| ExitCode::SUCCESS),
        Command::Validate { seed } => {
            let checks = harness::validate::run_self_checks(seed);
            let mut ok = true;
            for c in &checks {
                ok &= c.passed;
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
    }
}

fn main() -> ExitCode {
    env_logger::init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(64)
        }
    }
}
