//! Command-line entry point: `gibbslab run <config.json>` and `gibbslab list`.

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use gibbslab_cli::{list_experiments, list_table, run_file, RunOptions, MANIFEST_FILE};

#[derive(Debug, Parser)]
#[command(name = "gibbslab", version, about = "Conditional limit laws and their experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the experiment a JSON configuration file names.
    Run {
        config: PathBuf,
        /// Output directory; overrides the configuration and the environment.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads for parallel sections.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// List the experiments with their parameters and defaults.
    List {
        #[arg(long)]
        json: bool,
    },
}

fn main() {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            out,
            seed,
            workers,
        } => {
            let result = run_file(&config, &RunOptions { out, seed, workers });
            let m = &result.manifest;
            for a in &m.assertions {
                println!("[{}] {}: {}", if a.passed { "pass" } else { "FAIL" }, a.name, a.detail);
            }
            if let Some(e) = &m.error {
                eprintln!("error ({}): {}", e.kind, e.message);
            }
            println!(
                "{:?}; manifest at {}",
                m.status,
                result.out_dir.join(MANIFEST_FILE).display()
            );
            std::process::exit(result.exit_code());
        }
        Command::List { json } => {
            if json {
                let rows = list_experiments();
                println!("{}", serde_json::to_string_pretty(&rows).expect("list serializes"));
            } else {
                print!("{}", list_table());
            }
        }
    }
}
