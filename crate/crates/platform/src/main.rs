use std::path::PathBuf;

use anyhow::Context;
use clap::{Parser, Subcommand};

use safemobility_core::ingest::{read_detections_csv_file, EventLog};
use safemobility_core::identity::Pseudonymizer;
use safemobility_core::kpi::{evaluate, read_responses_csv_file, render_table, SurveyDefinition};
use safemobility_core::simulator::{simulate, DemandSpec, Slowdown};
use safemobility_core::DetectorNetwork;
use safemobility_platform::ApiConfig;

#[derive(Parser)]
#[command(name = "safemobility", version, about = "Bluetooth-detector mobility platform")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP API.
    Serve {
        #[arg(long)]
        config: PathBuf,
    },
    /// Generate detections and ground truth from an OD demand file.
    Simulate {
        #[arg(long)]
        network: PathBuf,
        #[arg(long)]
        demand: PathBuf,
        /// Overrides the seed in the demand file.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// JSON list of per-link slowdowns.
        #[arg(long)]
        congestion: Option<PathBuf>,
    },
    /// Ingest a detections CSV into the event log named by a service config.
    Replay {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        csv: PathBuf,
        /// Clock used for the future-timestamp check; defaults to now.
        #[arg(long)]
        clock: Option<i64>,
    },
    /// Score survey responses against the KPI targets.
    Kpi {
        #[arg(long)]
        responses: PathBuf,
        #[arg(long)]
        definition: Option<PathBuf>,
        /// Print JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
}

fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .init();
    match Cli::parse().command {
        Command::Serve { config } => {
            let cfg = ApiConfig::load(&config)?;
            tokio::runtime::Runtime::new()?.block_on(safemobility_platform::serve(cfg))
        }
        Command::Simulate { network, demand, seed, out, congestion } => {
            let net = DetectorNetwork::load(&network)?;
            let mut demand = DemandSpec::load(&demand)?;
            if let Some(s) = seed {
                demand.seed = s;
            }
            let slowdowns: Vec<Slowdown> = match congestion {
                Some(p) => serde_json::from_str(&std::fs::read_to_string(&p).with_context(|| p.display().to_string())?)?,
                None => Vec::new(),
            };
            let result = simulate(&net, &demand, &slowdowns)?;
            result.write_to_dir(&out)?;
            println!(
                "{} trips, {} detections written to {}",
                result.ground_truth.len(),
                result.detections.len(),
                out.display()
            );
            Ok(())
        }
        Command::Replay { config, csv, clock } => {
            let cfg = ApiConfig::load(&config)?;
            let secrets = cfg.validate()?;
            let net = DetectorNetwork::load(&cfg.network)?;
            std::fs::create_dir_all(&cfg.data_dir)?;
            let log = EventLog::open(cfg.data_dir.join("detections.ndjson"))?;
            let pseudonymizer = Pseudonymizer::new(&secrets.salt)?;
            let clock = clock.unwrap_or_else(|| chrono::Utc::now().timestamp());
            let report = log.ingest_batch(read_detections_csv_file(&csv)?, &net, &pseudonymizer, clock)?;
            println!("accepted {}, rejected {}", report.accepted, report.rejected.len());
            for r in report.rejected.iter().take(20) {
                println!("  {r}");
            }
            Ok(())
        }
        Command::Kpi { responses, definition, json } => {
            let responses = read_responses_csv_file(&responses)?;
            if let Some(def) = definition {
                let def = SurveyDefinition::load(&def)?;
                for r in &responses {
                    def.check(r)?;
                }
            }
            let eval = evaluate(&responses)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&eval)?);
            } else {
                print!("{}", render_table(&eval));
            }
            Ok(())
        }
    }
}
