use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use satsplit::harness::{load_config, presets, run_matrix, Jobs, Scenario};

/// Runs split-connection experiments on an emulated satellite path.
#[derive(Parser)]
#[command(name = "satsplit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every scenario in a config file and write CSVs to a directory.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads; 1 runs sequentially.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Override the repetitions of every scenario.
        #[arg(long)]
        repetitions: Option<u32>,
        /// Override the base seed of every scenario.
        #[arg(long)]
        seed: Option<u64>,
        /// Write one JSONL event log per run under `<out>/events`.
        #[arg(long)]
        event_logs: bool,
    },
    /// Check a config file without running anything.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Print the built-in GEO/LEO scenario grid.
    Presets,
}

const EXIT_VALIDATION: u8 = 1;
const EXIT_RUN_FAILED: u8 = 2;

fn load(path: &Path) -> Result<Vec<Scenario>, ExitCode> {
    load_config(path).map_err(|e| {
        eprintln!("error: {}: {e}", path.display());
        ExitCode::from(EXIT_VALIDATION)
    })
}

fn print_grid(scenarios: &[Scenario]) {
    println!(
        "{:<16} {:>9} {:>8} {:>7} {:>9} {:>9} {:>6} {:>5}",
        "scenario", "sat_ms", "rtt_ms", "loss_%", "fwd_mbps", "ret_mbps", "queue", "reps"
    );
    for s in scenarios {
        let queue = s.topology().hops()[1].forward.queue_capacity_pkts;
        println!(
            "{:<16} {:>9.1} {:>8.1} {:>7} {:>9} {:>9} {:>6} {:>5}",
            s.name,
            s.satcom_delay_at_start().as_millis_f64(),
            s.base_rtt().as_millis_f64(),
            s.loss_pct,
            s.forward_rate_mbps,
            s.return_rate_mbps,
            queue,
            s.repetitions
        );
    }
}

fn run(
    config: PathBuf,
    out: PathBuf,
    jobs: usize,
    repetitions: Option<u32>,
    seed: Option<u64>,
    event_logs: bool,
) -> ExitCode {
    let mut scenarios = match load(&config) {
        Ok(s) => s,
        Err(code) => return code,
    };
    for s in &mut scenarios {
        if let Some(n) = repetitions {
            s.repetitions = n;
        }
        if let Some(seed) = seed {
            s.base_seed = seed;
        }
    }
    match run_matrix(&scenarios, &out, Jobs::from_count(jobs), event_logs) {
        Ok((summary, records)) => {
            for r in records.iter().filter(|r| !r.is_ok()) {
                let s = &r.spec;
                eprintln!(
                    "{} {} pep={} run={}: {} {}",
                    s.scenario_name,
                    s.measurement,
                    s.pep,
                    s.run,
                    r.status.as_str(),
                    r.message
                );
            }
            println!("{} runs, {} failed, results in {}", summary.runs, summary.failed, out.display());
            if summary.failed > 0 {
                ExitCode::from(EXIT_RUN_FAILED)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_RUN_FAILED)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if e.use_stderr() => {
            let _ = e.print();
            return ExitCode::from(EXIT_VALIDATION);
        }
        Err(e) => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    match cli.command {
        Command::Run {
            config,
            out,
            jobs,
            repetitions,
            seed,
            event_logs,
        } => run(config, out, jobs, repetitions, seed, event_logs),
        Command::Validate { config } => match load(&config) {
            Ok(scenarios) => {
                print_grid(&scenarios);
                ExitCode::SUCCESS
            }
            Err(code) => code,
        },
        Command::Presets => {
            print_grid(&presets());
            ExitCode::SUCCESS
        }
    }
}
