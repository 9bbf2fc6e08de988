use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use acmca::energy::EnergyParams;
use acmca::error::Error;
use acmca::exec::Execution;
use acmca::harness::calibrate;
use acmca::harness::report::{self, write_run_dir, write_summary_csv};
use acmca::harness::{run_experiment, ExperimentConfig};

#[derive(Parser)]
#[command(name = "acmca", version, about = "Adaptive compressive sensing on SOT-MRAM crossbars")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment configuration.
    config: PathBuf,
    /// Overrides run.master_seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides run.workers (0 = all cores, 1 = sequential).
    #[arg(long)]
    workers: Option<usize>,
    /// Overrides run.output_dir.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the Monte Carlo experiment described by a config file.
    Run(RunArgs),
    /// Like `run`, with the list of measurement counts replaced.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated M values, e.g. 20,40,60.
        #[arg(long, value_delimiter = ',', required = true)]
        m_list: Vec<usize>,
    },
    /// Print the energy and area calibration tables.
    Calibrate {
        /// Seeds averaged for the programming-energy table (0 skips it).
        #[arg(long, default_value_t = 20)]
        programming_seeds: u64,
    },
    /// Re-render summary.csv from a previous run directory.
    Report {
        dir: PathBuf,
    },
}

fn load(args: &RunArgs, m_list: Option<Vec<usize>>) -> acmca::Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.run.master_seed = seed;
    }
    if let Some(w) = args.workers {
        cfg.run.workers = w;
    }
    if let Some(out) = &args.out {
        cfg.run.output_dir = out.clone();
    }
    if let Some(ms) = m_list {
        cfg.matrix.m_list = ms;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(args: &RunArgs, m_list: Option<Vec<usize>>) -> acmca::Result<()> {
    let cfg = load(args, m_list)?;
    let report = run_experiment(&cfg, Execution::from_workers(cfg.run.workers))?;
    write_run_dir(&report, &cfg.run.output_dir)?;
    write_summary_csv(&report.summary, std::io::stdout().lock())?;
    eprintln!("wrote {}", cfg.run.output_dir.display());
    Ok(())
}

fn rerender(dir: &Path) -> acmca::Result<()> {
    let rebuilt = report::load_run_dir(dir)?;
    report::sweep_to_csv(&rebuilt, &dir.join(report::SUMMARY_FILE))?;
    write_summary_csv(&rebuilt.summary, std::io::stdout().lock())?;
    Ok(())
}

fn dispatch(cli: Cli) -> acmca::Result<()> {
    match cli.command {
        Command::Run(args) => run(&args, None),
        Command::Sweep { run: args, m_list } => run(&args, Some(m_list)),
        Command::Calibrate { programming_seeds } => {
            let vmm = calibrate::vmm_rows(&EnergyParams::default());
            let programming = if programming_seeds > 0 {
                calibrate::programming_rows(programming_seeds, Execution::default())?
            } else {
                Vec::new()
            };
            print!("{}", calibrate::render(&vmm, &programming));
            Ok(())
        }
        Command::Report { dir } => rerender(&dir),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Config { .. } => 2,
                Error::Io(_) | Error::Csv(_) => 3,
                _ => 1,
            })
        }
    }
}
