use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use waveamr::bench::{self, SweepRow};
use waveamr::config::ExecutorMode;
use waveamr::{AmrConfig, Result};

#[derive(Parser)]
#[command(name = "waveamr", version, about = "Adaptive mesh refinement acoustics benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the ring benchmark described by a config file.
    Run {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
        /// Write the device timeline of the last base-level step as CSV.
        #[arg(long)]
        timeline: Option<PathBuf>,
    },
    /// Run every combination of cutoffs and regrid intervals.
    Sweep {
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        cutoffs: Vec<f64>,
        #[arg(long, value_delimiter = ',', required = true)]
        intervals: Vec<usize>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Executor {
    Serial,
    Pipelined,
}

#[derive(Args)]
struct Common {
    #[arg(long, value_enum)]
    executor: Option<Executor>,
    #[arg(long)]
    no_conservation_fix: bool,
    /// CSV report path.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Directory for snapshot files.
    #[arg(long)]
    snapshots: Option<PathBuf>,
}

impl Common {
    fn apply(&self, config: &mut AmrConfig) {
        if let Some(e) = self.executor {
            config.executor = match e {
                Executor::Serial => ExecutorMode::Serial,
                Executor::Pipelined => ExecutorMode::Pipelined,
            };
        }
        if self.no_conservation_fix {
            config.conservation_fix = false;
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config, common, timeline } => {
            let mut cfg = AmrConfig::from_file(&config)?;
            common.apply(&mut cfg);
            let (report, sim) = bench::run(cfg.clone(), common.snapshots.as_deref())?;
            println!("{}", bench::summary(&report));
            if let Some(path) = &common.report {
                let row = SweepRow { cutoff: cfg.cutoff, regrid_interval: cfg.regrid_interval, result: Ok(report) };
                bench::write_report_csv(path, &[row])?;
            }
            if let (Some(path), Some(tl)) = (&timeline, &sim.last_timeline) {
                tl.write_csv_file(path)?;
            }
        }
        Command::Sweep { config, cutoffs, intervals, common } => {
            let mut cfg = AmrConfig::from_file(&config)?;
            common.apply(&mut cfg);
            let rows = bench::sweep(&cfg, &cutoffs, &intervals)?;
            for r in &rows {
                match &r.result {
                    Ok(rep) => println!("cutoff={} K={} {}", r.cutoff, r.regrid_interval, bench::summary(rep)),
                    Err(e) => println!("cutoff={} K={} FAILED: {e}", r.cutoff, r.regrid_interval),
                }
            }
            if let Some(path) = &common.report {
                bench::write_report_csv(path, &rows)?;
            }
            if rows.iter().any(|r| r.result.is_err()) {
                eprintln!("error: some sweep runs failed");
                return Err(waveamr::AmrError::Invariant("sweep had failed runs".into()));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
