use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use cotransport_sim::runner::{metrics_rows, write_metrics, write_outputs};
use cotransport_sim::{run_scenario, scenario, ComplianceCase, Scenario, SimConfig};

#[derive(Parser)]
#[command(name = "cotrans", version, about = "Planar co-transportation simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario file.
    Run {
        file: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=4))]
        case: Option<u8>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run every bundled scenario.
    Suite {
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Serve the live simulation over WebSocket.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
    },
    /// Recompute the metrics CSV from a tick log.
    Metrics {
        log: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run_one(s: &Scenario, out: &std::path::Path) -> Result<bool, Box<dyn std::error::Error>> {
    let run = run_scenario(s, &SimConfig::default())?;
    write_outputs(&run, &out.join(&s.name))?;
    println!("{}", serde_json::to_string(&run.summary)?);
    Ok(run.summary.fault.is_none())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result: Result<bool, Box<dyn std::error::Error>> = match cli.command {
        Command::Run { file, out, case, seed } => (|| {
            let mut s = Scenario::load(&file)?;
            if let Some(c) = case {
                s.case = ComplianceCase::new(c)?;
            }
            if let Some(seed) = seed {
                s.seed = seed;
            }
            run_one(&s, &out)
        })(),
        Command::Suite { out } => (|| {
            let mut ok = true;
            for s in scenario::bundled() {
                ok &= run_one(&s, &out)?;
            }
            Ok(ok)
        })(),
        Command::Serve { port } => cotransport_sim::live::serve_blocking(port, SimConfig::default()).map(|_| true).map_err(Into::into),
        Command::Metrics { log, out } => (|| {
            let records = cotransport_sim::log::read_records(std::fs::File::open(&log)?)?;
            let rows = metrics_rows(&records, &Default::default())?;
            match out {
                Some(path) => write_metrics(&rows, std::fs::File::create(path)?)?,
                None => write_metrics(&rows, std::io::stdout().lock())?,
            }
            Ok(true)
        })(),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
