use std::path::PathBuf;

use clap::{Parser, Subcommand};

use attrex::config::ExperimentConfig;
use attrex::pipeline;
use attrex::prompt::TemplateSet;

/// Attribute/value extraction harness: prepare corpora, run prompt
/// experiments against a chat-completion backend, score the answers and
/// compare configurations.
#[derive(Debug, Parser)]
#[command(name = "attrex", version)]
struct Cli {
    /// Experiment configuration file
    #[arg(long, global = true, default_value = "experiment.toml")]
    config: PathBuf,

    /// Print the active prompt templates (override-file schema) and exit
    #[arg(long)]
    print_templates: bool,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the stratified, gold-augmented test set and its manifest
    Prepare,
    /// Execute one configured run against its backend (resumable)
    Run {
        /// Run name from the config
        name: String,
        /// Use this backend instead of the run's configured one
        #[arg(long)]
        backend: Option<String>,
    },
    /// Score a run's response archive into metrics and cost files
    Score {
        /// Run name from the config
        name: String,
        /// For open runs, also score with the other evaluation mode
        #[arg(long)]
        both_modes: bool,
    },
    /// Render the comparison table across previously scored runs
    Report {
        /// Run names, in table order; the first is the ΔF1 reference unless
        /// the config names one
        names: Vec<String>,
    },
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    std::process::exit(execute(cli));
}

fn execute(cli: Cli) -> i32 {
    if cli.print_templates {
        let templates = if cli.config.exists() {
            match ExperimentConfig::load(&cli.config) {
                Ok(config) => match load_templates(&config) {
                    Ok(t) => t,
                    Err(e) => {
                        eprintln!("error: {e}");
                        return 2;
                    }
                },
                Err(e) => {
                    eprintln!("error: {e}");
                    return 2;
                }
            }
        } else {
            TemplateSet::default()
        };
        print!("{}", templates.to_toml_string());
        return 0;
    }

    let Some(command) = cli.command else {
        eprintln!("error: no command given (try --help)");
        return 2;
    };
    let config = match ExperimentConfig::load(&cli.config) {
        Ok(config) => config,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };

    let outcome = match command {
        Command::Prepare => pipeline::prepare(&config).map(|summary| {
            for warning in &summary.warnings {
                eprintln!("warning: {warning}");
            }
            println!(
                "prepared {} test cases (normalization coverage {:.2}%)",
                summary.test_cases,
                summary.coverage * 100.0
            );
            0
        }),
        Command::Run { name, backend } => {
            pipeline::run(&config, &name, backend.as_deref()).map(|summary| {
                for warning in &summary.warnings {
                    eprintln!("warning: {warning}");
                }
                println!(
                    "run {name}: {}/{} completed ({} cached, {} backend calls, {} errors)",
                    summary.completed,
                    summary.total_cases,
                    summary.cached,
                    summary.backend_calls,
                    summary.errors
                );
                if summary.errors > 0 {
                    1
                } else {
                    0
                }
            })
        }
        Command::Score { name, both_modes } => {
            pipeline::score(&config, &name, both_modes).map(|summary| {
                println!(
                    "{name}: P={:.2} R={:.2} F1={:.2}  cost/title={}c  ({} error cases)",
                    summary.metrics.precision * 100.0,
                    summary.metrics.recall * 100.0,
                    summary.metrics.f1 * 100.0,
                    summary.cost_per_title_cents,
                    summary.error_cases
                );
                0
            })
        }
        Command::Report { names } => pipeline::report(&config, &names).map(|summary| {
            print!("{}", summary.table);
            0
        }),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn load_templates(config: &ExperimentConfig) -> Result<TemplateSet, attrex::prompt::TemplateError> {
    match &config.templates {
        Some(path) => TemplateSet::from_file(path),
        None => Ok(TemplateSet::default()),
    }
}
