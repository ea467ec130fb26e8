use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use likefree_cli::{parse_config, read_samples, run_to_dir, RunConfiguration, Summary};
use serde_json::json;

#[derive(Parser)]
#[command(name = "likefree", version, about = "Approximate Bayesian computation samplers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Override the configuration seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads. Results do not depend on this.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Override the configuration output directory.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// Only print errors.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run a configuration and write its artifacts.
    Run { config: PathBuf },
    /// Print weighted statistics of a samples file.
    Summarise { samples: PathBuf },
    /// Check a configuration and print it with defaults resolved.
    Validate { config: PathBuf },
}

const EXIT_CONFIG: u8 = 2;
const EXIT_INTERNAL: u8 = 5;

fn error_json(class: &str, code: u8, message: &str) -> String {
    json!({ "status": "error", "class": class, "exit_code": code, "message": message }).to_string()
}

fn load(path: &PathBuf, cli: &Cli) -> Result<RunConfiguration, ExitCode> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        eprintln!("{}", error_json("config", EXIT_CONFIG, &format!("cannot read {}: {e}", path.display())));
        ExitCode::from(EXIT_CONFIG)
    })?;
    let mut cfg = parse_config(&text).map_err(|errors| {
        for e in &errors.0 {
            eprintln!("{}: {e}", path.display());
        }
        eprintln!("{}", error_json("config", EXIT_CONFIG, &errors.to_string()));
        ExitCode::from(EXIT_CONFIG)
    })?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(dir) = &cli.output_dir {
        cfg.output_dir = dir.clone();
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> ExitCode {
    match &cli.command {
        Command::Validate { config } => match load(config, cli) {
            Ok(cfg) => {
                if !cli.quiet {
                    print!("{}", cfg.render());
                }
                ExitCode::SUCCESS
            }
            Err(code) => code,
        },
        Command::Run { config } => {
            let cfg = match load(config, cli) {
                Ok(cfg) => cfg,
                Err(code) => return code,
            };
            let report = run_to_dir(&cfg);
            match &report.error {
                None => {
                    if !cli.quiet {
                        println!("wrote {}", report.output_dir.display());
                        for (k, v) in &report.diagnostics {
                            println!("{k} = {v}");
                        }
                    }
                }
                Some(record) => eprintln!("{record}"),
            }
            ExitCode::from(report.exit_code as u8)
        }
        Command::Summarise { samples } => match read_samples(samples).map(|t| Summary::of_table(&t)) {
            Ok(Ok(summary)) => {
                println!("{summary}");
                ExitCode::SUCCESS
            }
            Ok(Err(e)) => {
                eprintln!("{}", error_json("degenerate", 3, &e.to_string()));
                ExitCode::from(3)
            }
            Err(e) => {
                eprintln!("{}", error_json("input", EXIT_CONFIG, &format!("{}: {e}", samples.display())));
                ExitCode::from(EXIT_CONFIG)
            }
        },
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "error" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cli.workers.unwrap_or(0)).build();
    match pool {
        Ok(pool) => pool.install(|| run(&cli)),
        Err(e) => {
            eprintln!("{}", error_json("internal", EXIT_INTERNAL, &format!("cannot start workers: {e}")));
            ExitCode::from(EXIT_INTERNAL)
        }
    }
}
