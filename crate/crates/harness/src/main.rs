use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tutor_harness::load::{run_load, Delays, LoadProfile};
use tutor_harness::replay::{replay_files, ReplayOptions};
use tutor_harness::{pilot, TestModeFiles};

#[derive(Parser)]
#[command(name = "harness", about = "Replay and load harness for the tutoring service")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Replay an event log through the service and report the findings.
    Replay {
        #[arg(long)]
        log: PathBuf,
        /// Provider behavior script.
        #[arg(long)]
        script: PathBuf,
        /// Expected aggregates; failures set the exit code.
        #[arg(long)]
        expect: Option<PathBuf>,
        #[arg(long)]
        curriculum: Option<PathBuf>,
        #[arg(long)]
        sandbox_stub: Option<PathBuf>,
        /// Instructor question to ask after ingestion; repeatable.
        #[arg(long = "ask")]
        questions: Vec<String>,
    },
    /// Measure /chat latency under concurrent scripted users.
    Load {
        #[arg(long, default_value_t = 1)]
        users: usize,
        #[arg(long, default_value_t = 5)]
        queries_per_user: usize,
        /// video,guidance,code,synth in milliseconds.
        #[arg(long, value_parser = Delays::parse)]
        delays: Delays,
        /// Make every telemetry write fail during the run.
        #[arg(long)]
        failing_sink: bool,
    },
    /// Write the synthetic pilot event log.
    GenPilot {
        #[arg(long, default_value = "fixtures/pilot_events.jsonl")]
        out: PathBuf,
    },
}

#[tokio::main]
async fn main() -> ExitCode {
    match run(Cli::parse().command).await {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

async fn run(command: Command) -> Result<ExitCode, Box<dyn std::error::Error>> {
    match command {
        Command::Replay { log, script, expect, curriculum, sandbox_stub, questions } => {
            let mut files = TestModeFiles::default();
            if let Some(c) = curriculum {
                files.curriculum = c;
            }
            if let Some(s) = sandbox_stub {
                files.sandbox_stub = s;
            }
            let options = ReplayOptions { files, questions, passes: 1 };
            let run = replay_files(&log, &script, expect.as_deref(), &options).await?;
            println!("{}", serde_json::to_string_pretty(&run.report)?);
            Ok(if run.report.passed() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::Load { users, queries_per_user, delays, failing_sink } => {
            let profile = LoadProfile { users, queries_per_user, delays, failing_sink };
            let report = run_load(&profile, &TestModeFiles::default()).await?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(if report.errors == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::GenPilot { out } => {
            let events = pilot::generate();
            std::fs::write(&out, pilot::to_jsonl(&events))?;
            println!("{} events -> {}", events.len(), out.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}
