use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand};
use smearcount_cli::{commands, server};

#[derive(Parser)]
#[command(
    name = "smearcount",
    version,
    about = "Count white and red cells in blood smear images"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Analyze one PGM image.
    Analyze {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_overlay: PathBuf,
        #[arg(long)]
        out_report: PathBuf,
        /// Write every stage image as <stage>.pgm/.ppm into this directory.
        #[arg(long)]
        dump_stages: Option<PathBuf>,
    },
    /// Generate a synthetic smear with ground truth.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Also write a config with templates on isolated red cells.
        #[arg(long)]
        out_config: Option<PathBuf>,
    },
    /// Grid-search template weights against known red-cell centers.
    Tune {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        grid: PathBuf,
    },
    /// Run the HTTP session service.
    Serve {
        #[arg(long)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Analyze {
            input,
            config,
            out_overlay,
            out_report,
            dump_stages,
        } => {
            let report = commands::analyze(&input, &config, &out_overlay, &out_report, dump_stages.as_deref())?;
            println!(
                "white cells: {}  red cells: {}  rejected regions: {}",
                report.white_count, report.red_count, report.rejected_fake_regions
            );
        }
        Command::Synth {
            spec,
            out,
            truth,
            out_config,
        } => {
            let t = commands::synth(&spec, &out, &truth, out_config.as_deref())?;
            println!("white cells: {}  red cells: {}", t.white_count, t.red_count);
        }
        Command::Tune {
            input,
            config,
            truth,
            grid,
        } => {
            let report = commands::tune(&input, &config, &truth, &grid)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Serve { port, host } => {
            tokio::runtime::Runtime::new()?.block_on(server::serve(&host, port))?;
        }
    }
    Ok(())
}
