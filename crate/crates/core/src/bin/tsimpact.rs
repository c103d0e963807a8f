use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use tsimpact::io::{format_estimate, format_probability, run_files, simulate_files, write_coverage, CoverageConfig};
use tsimpact::oracle::{coverage_experiment, oracle_suite, LOGLIK_REL_TOL, MOMENT_TOL};

#[derive(Parser)]
#[command(name = "tsimpact", version, about = "Intervention effects from Bayesian structural time-series")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Analyse a dataset and write the report and panel files.
    Run {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the configured seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Generate one synthetic dataset with its ground truth.
    Simulate {
        /// Scenario file; the default scenario when absent.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Which replication of the scenario to write.
        #[arg(long, default_value_t = 0)]
        replication: u64,
    },
    /// Check the Kalman recursions against the dense Gaussian oracles.
    Verify {
        #[arg(long, default_value_t = 200)]
        cases: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Interval coverage over replicated synthetic datasets.
    Coverage {
        #[arg(long)]
        config: Option<PathBuf>,
        /// CSV destination; a per-replication file is written next to it.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn load_coverage(path: Option<&PathBuf>, seed: Option<u64>) -> tsimpact::Result<CoverageConfig> {
    let mut config = match path {
        Some(p) => CoverageConfig::from_toml(&std::fs::read_to_string(p)?)?,
        None => CoverageConfig::from_toml("")?,
    };
    if let Some(seed) = seed {
        config.scenario.seed = seed;
    }
    Ok(config)
}

fn execute(command: Command) -> tsimpact::Result<bool> {
    match command {
        Command::Run { data, config, out, seed } => {
            let output = run_files(&data, &config, &out, seed)?;
            let summary = &output.analysis.summary;
            println!("cumulative effect: {}", format_estimate(summary.total_effect(), 0));
            println!("posterior probability of a causal effect: {}", format_probability(summary.tail_probability));
            for path in &output.files {
                println!("wrote {}", path.display());
            }
            Ok(true)
        }
        Command::Simulate {
            config,
            out,
            seed,
            replication,
        } => {
            let config = load_coverage(config.as_ref(), seed)?;
            for path in simulate_files(&config, replication, &out)? {
                println!("wrote {}", path.display());
            }
            Ok(true)
        }
        Command::Verify { cases, seed } => {
            let report = oracle_suite(cases, seed)?;
            println!("cases: {}", report.cases);
            println!(
                "log-likelihood: max relative error {:.3e} (tolerance {LOGLIK_REL_TOL:e}), {} failures",
                report.max_loglik_rel_error, report.loglik_failures
            );
            println!(
                "smoother: max mean error {:.3e}, max covariance error {:.3e} (tolerance {MOMENT_TOL:e}), {} failures",
                report.max_mean_error, report.max_cov_error, report.smoother_failures
            );
            Ok(report.passed())
        }
        Command::Coverage { config, out, seed } => {
            let config = load_coverage(config.as_ref(), seed)?;
            let report = coverage_experiment(&config.scenario, &config.analysis_config())?;
            println!("replications: {}", report.replications);
            println!("true cumulative effect: {}", report.true_cumulative);
            println!("coverage: {:.3}", report.coverage);
            println!("mean estimate: {:.3}", report.mean_estimate);
            println!("relative bias: {:.4}", report.relative_bias);
            println!("significance rate: {:.3}", report.significance_rate);
            if let Some(out) = out {
                write_coverage(&out, &report)?;
                println!("wrote {}", out.display());
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
