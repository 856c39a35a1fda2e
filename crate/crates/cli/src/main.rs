// SPDX-License-Identifier: Apache-2.0

use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use mpsim::scenario::Scenario;
use mpsim::{parse_config, trace, ScenarioConfig, SimError};

/// Deterministic MPTCP simulator.
///
/// Reads a scenario file, applies command-line overrides, runs the transfer
/// and prints a summary. The exit status is 0 on a completed transfer, 1 on
/// configuration or I/O errors and 2 on an invariant breach or an unfinished
/// transfer.
#[derive(Parser, Debug)]
#[command(name = "mpsim", version)]
struct Args {
    /// Scenario file; defaults apply when omitted.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Congestion control: uncoupled, fully_coupled, linked_increases, rttc.
    #[arg(long)]
    cc: Option<String>,
    /// Aggressiveness factor for the coupled algorithms.
    #[arg(long)]
    a: Option<String>,
    /// Reordering detector: none, eifel, dsack.
    #[arg(long)]
    reorder: Option<String>,
    #[arg(long)]
    rttc_second_term: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Bytes to transfer, e.g. 2M.
    #[arg(long)]
    file_size: Option<String>,
    /// Write the event trace as CSV to this path.
    #[arg(long)]
    trace_out: Option<String>,
    #[arg(long)]
    mss: Option<String>,
    #[arg(long)]
    rwnd: Option<String>,
    #[arg(long)]
    dupthresh: Option<String>,
    /// Simulated time limit, e.g. 600s.
    #[arg(long)]
    sim_time_limit: Option<String>,
    /// per_mss or per_ack.
    #[arg(long)]
    ack_mode: Option<String>,
}

impl Args {
    fn overrides(&self) -> Vec<(&'static str, &str)> {
        [
            ("cc", &self.cc),
            ("a", &self.a),
            ("reorder", &self.reorder),
            ("rttc_second_term", &self.rttc_second_term),
            ("seed", &self.seed),
            ("file_size", &self.file_size),
            ("trace_out", &self.trace_out),
            ("mss", &self.mss),
            ("rwnd", &self.rwnd),
            ("dupthresh", &self.dupthresh),
            ("sim_time_limit", &self.sim_time_limit),
            ("ack_mode", &self.ack_mode),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.as_deref().map(|v| (k, v)))
        .collect()
    }
}

fn load(args: &Args) -> Result<ScenarioConfig, SimError> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
            parse_config(&text)?
        }
        None => ScenarioConfig::default(),
    };
    for (key, value) in args.overrides() {
        cfg.set(key, value)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(args: &Args) -> Result<(), SimError> {
    let cfg = load(args)?;
    let report = Scenario::new(cfg.clone()).run()?;
    if let Some(path) = &cfg.trace_out {
        let file = File::create(path).map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
        trace::write_csv(BufWriter::new(file), &report.trace)?;
    }
    print!("{}", report.summary());
    if !report.completed() {
        return Err(SimError::Incomplete(format!(
            "{} of {} bytes delivered by {}",
            report.bytes_delivered, report.file_size, report.final_time
        )));
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mpsim: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
