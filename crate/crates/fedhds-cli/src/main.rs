//! `fedhds`: batch driver for the coreset-selection simulator.
//!
//! Subcommands share one JSON config document (see the repository README
//! for the schema). Outputs are deterministic for a fixed master seed;
//! errors exit with status 1 and a machine-readable JSON object on
//! stderr.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use log::info;

use fedhds_core::config::{DataConfig, RunConfig};
use fedhds_core::error::Error;
use fedhds_core::fedsim::data::synthetic_split_plan;
use fedhds_core::fedsim::Simulator;
use fedhds_core::{features, report};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum LogLevel {
    Error,
    Warn,
    Info,
    Debug,
}

impl LogLevel {
    fn filter(self) -> log::LevelFilter {
        match self {
            LogLevel::Error => log::LevelFilter::Error,
            LogLevel::Warn => log::LevelFilter::Warn,
            LogLevel::Info => log::LevelFilter::Info,
            LogLevel::Debug => log::LevelFilter::Debug,
        }
    }
}

#[derive(Parser)]
#[command(name = "fedhds", about = "Hierarchical coreset selection simulator")]
struct Cli {
    /// Path to the JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    #[arg(long, global = true, value_enum, default_value_t = LogLevel::Warn)]
    log_level: LogLevel,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the configured synthetic feature archive.
    Synth,
    /// Export the client assignment of the synthetic source as CSV.
    Partition,
    /// Run one full-participation selection pass and export coresets
    /// plus the protocol message trace.
    Select,
    /// Run the federated loop and write run.jsonl and summary.json.
    Run,
    /// Derive report tables and plot data from a finished run.
    Report {
        /// Round history to summarize; defaults to <out>/run.jsonl.
        #[arg(long)]
        history: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(cli.log_level.filter())
        .format_timestamp(None)
        .init();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let payload = serde_json::json!({
                "error": {
                    "kind": error_kind(&err),
                    "message": err.to_string(),
                }
            });
            let mut stderr = std::io::stderr().lock();
            let _ = writeln!(stderr, "{payload}");
            ExitCode::FAILURE
        }
    }
}

fn error_kind(err: &Error) -> &'static str {
    match err {
        Error::Config(_) => "config",
        Error::Io(_) => "io",
        Error::Json(_) => "json",
        Error::MalformedHeader(_) | Error::TruncatedPayload { .. } | Error::TrailingBytes { .. } => {
            "archive"
        }
        Error::Protocol(_) => "protocol",
        Error::Domain(_) => "domain",
        Error::NonFinite(_) | Error::DimensionMismatch(_) | Error::InvariantViolation(_) => {
            "validation"
        }
        Error::TooFewSamples { .. } | Error::EmptyInput(_) | Error::DegenerateAffinities => "data",
        Error::MetricUndefined(_) => "metric",
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig, Error> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("--config is required".into()))?;
    let mut config = RunConfig::from_file(path)?;
    if let Some(seed) = cli.seed {
        config.master_seed = seed;
    }
    Ok(config)
}

fn execute(cli: &Cli) -> Result<(), Error> {
    let config = load_config(cli)?;
    std::fs::create_dir_all(&cli.out)?;
    match &cli.command {
        Command::Synth => {
            let DataConfig::Synthetic(synth) = &config.data else {
                return Err(Error::Config(
                    "synth needs a synthetic data source in the config".into(),
                ));
            };
            let plan = synthetic_split_plan(&config, synth)?;
            let full = cli.out.join("features.fca");
            let bytes = features::write_archive(&plan.archive, &full)?;
            info!("wrote {} ({} bytes)", full.display(), bytes);
            let heldout = plan.archive.subset(&plan.heldout_idx);
            features::write_archive(&heldout, cli.out.join("heldout.fca"))?;
            let train = plan.archive.subset(&plan.train_idx);
            features::write_archive(&train, cli.out.join("train.fca"))?;
        }
        Command::Partition => {
            let DataConfig::Synthetic(synth) = &config.data else {
                return Err(Error::Config(
                    "partition applies to the synthetic data source".into(),
                ));
            };
            let plan = synthetic_split_plan(&config, synth)?;
            let path = cli.out.join("assignment.csv");
            let file = std::fs::File::create(&path)?;
            let mut out = std::io::BufWriter::new(file);
            writeln!(out, "sample_index,client_id")?;
            for (row, &original) in plan.train_idx.iter().enumerate() {
                writeln!(out, "{original},{}", plan.assignment.client_of_sample[row])?;
            }
            out.flush()?;
            info!("wrote {}", path.display());
        }
        Command::Select => {
            let mut sim = Simulator::new(config)?;
            report::write_selection(&mut sim, &cli.out)?;
            info!("selection written to {}", cli.out.display());
        }
        Command::Run => {
            let mut sim = Simulator::new(config)?;
            let history = sim.run()?;
            report::write_history(&history, &cli.out)?;
            info!(
                "run complete: {} rounds, final accuracy {:.4}",
                history.summary.rounds, history.summary.final_accuracy
            );
        }
        Command::Report { history } => {
            let history_path = history.clone().unwrap_or_else(|| cli.out.join("run.jsonl"));
            let records = report::read_history_records(&history_path)?;
            write_rounds_csv(&records, &cli.out)?;
            let mut sim = Simulator::new(config)?;
            report::write_metrics_csv(&mut sim, &cli.out)?;
            report::write_embeddings(&mut sim, &cli.out)?;
            info!("report written to {}", cli.out.display());
        }
    }
    Ok(())
}

fn write_rounds_csv(
    records: &[fedhds_core::fedsim::RoundRecord],
    out_dir: &std::path::Path,
) -> Result<(), Error> {
    let file = std::fs::File::create(out_dir.join("rounds.csv"))?;
    let mut out = std::io::BufWriter::new(file);
    writeln!(
        out,
        "round,active_clients,selected,data_ratio,cumulative_data_ratio,heldout_accuracy,heldout_macro_f1,uploads,second_level_clusters,intra_noise,inter_noise"
    )?;
    for r in records {
        let selected: usize = r.coreset_sizes.iter().sum();
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.round,
            r.active_clients.len(),
            selected,
            r.data_ratio,
            r.cumulative_data_ratio,
            r.heldout_accuracy,
            r.heldout_macro_f1,
            r.selection_counts.uploads,
            r.selection_counts.second_level_clusters,
            r.noise_counts.intra_points,
            r.noise_counts.inter_uploads,
        )?;
    }
    out.flush()?;
    Ok(())
}
