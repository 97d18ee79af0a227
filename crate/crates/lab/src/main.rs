use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use scatter_lab::{exit, load, run_experiment, RECIPES};

#[derive(Parser)]
#[command(
    name = "scatter-lab",
    version,
    about = "Run scattering experiments from TOML configs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment.
    Run {
        name: String,
        #[arg(long)]
        config: PathBuf,
        /// Override a config value, e.g. `--set horizon.T=20`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Check a config without running anything.
    Validate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// List the available experiments.
    List,
}

/// Forwards the core crate's warnings to stderr.
struct StderrLog;

impl log::Log for StderrLog {
    fn enabled(&self, meta: &log::Metadata) -> bool {
        meta.level() <= log::Level::Info
    }

    fn log(&self, record: &log::Record) {
        if self.enabled(record.metadata()) {
            eprintln!(
                "[{}] {}",
                record.level().as_str().to_lowercase(),
                record.args()
            );
        }
    }

    fn flush(&self) {}
}

static LOGGER: StderrLog = StderrLog;

fn code(c: i32) -> ExitCode {
    ExitCode::from(u8::try_from(c).unwrap_or(1))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if log::set_logger(&LOGGER).is_ok() {
        log::set_max_level(log::LevelFilter::Info);
    }
    match cli.command {
        Command::List => {
            for r in RECIPES {
                println!("{:<22} {}", r.name, r.description);
                println!("{:<22} targets: {}", "", r.targets);
            }
            code(exit::PASS)
        }
        Command::Validate { config, overrides } => match load(&config, &overrides) {
            Ok(loaded) => {
                println!("ok: {} (sha256 {})", config.display(), loaded.hash);
                code(exit::PASS)
            }
            Err(e) => {
                eprintln!("config error: {e}");
                code(exit::CONFIG)
            }
        },
        Command::Run {
            name,
            config,
            overrides,
        } => {
            let loaded = match load(&config, &overrides) {
                Ok(l) => l,
                Err(e) => {
                    eprintln!("config error: {e}");
                    return code(exit::CONFIG);
                }
            };
            match run_experiment(&name, &loaded) {
                Ok(outcome) => {
                    println!("{}", serde_json::Value::Object(outcome.summary));
                    code(outcome.exit_code)
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    code(exit::CONFIG)
                }
            }
        }
    }
}
