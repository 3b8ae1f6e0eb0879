use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tutor_core::analytics::{AnalyticsThresholds, Findings};
use tutor_core::telemetry::aggregate::aggregate;
use tutor_core::telemetry::store::StoreSnapshot;
use tutor_service::{load_curriculum, ServiceConfig};

#[derive(Parser)]
#[command(name = "tutor-service", about = "Classroom tutoring API")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP API.
    Serve {
        /// TOML file whose values override the environment.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Aggregate an event log into summary.json and findings.json.
    Aggregate {
        #[arg(long)]
        log: PathBuf,
        #[arg(long, default_value = "fixtures/curriculum.json")]
        curriculum: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Check a curriculum document and report every violation.
    ValidateCurriculum {
        #[arg(long, default_value = "fixtures/curriculum.json")]
        curriculum: PathBuf,
    },
}

#[tokio::main]
async fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse().command).await {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

async fn run(command: Command) -> Result<(), Box<dyn std::error::Error>> {
    match command {
        Command::Serve { config } => {
            let config = ServiceConfig::load(config.as_deref())?;
            tutor_service::serve(config).await?;
        }
        Command::Aggregate { log, curriculum, out } => {
            let curriculum = load_curriculum(&curriculum)?;
            let text = std::fs::read_to_string(&log)?;
            let snap = StoreSnapshot::from_jsonl(&text);
            let summary = aggregate(&snap.events, snap.corrupt_lines, &curriculum);
            let findings = Findings::compute(&summary, &curriculum, AnalyticsThresholds::default());
            std::fs::create_dir_all(&out)?;
            std::fs::write(out.join("summary.json"), summary.to_canonical_json())?;
            std::fs::write(out.join("findings.json"), findings.to_canonical_json())?;
            println!(
                "{} events ({} corrupt) -> {}",
                summary.total_events,
                summary.corrupt_events,
                out.display()
            );
        }
        Command::ValidateCurriculum { curriculum } => {
            let c = load_curriculum(&curriculum)?;
            let checkpoints: usize = c.modules.iter().map(|m| m.checkpoints.len()).sum();
            println!("ok: {} modules, {checkpoints} checkpoints", c.modules.len());
        }
    }
    Ok(())
}
