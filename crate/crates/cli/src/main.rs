use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use usersim_core::commands::{
    cmd_evaluate, cmd_gen_goals, cmd_import_multiwoz, cmd_lexdiv, cmd_run, read_ontology_file, write_goals,
};
use usersim_core::config::Overrides;
use usersim_core::goalgen::{GoalConfig, PhraseTable, RequirementsFormat};
use usersim_core::lexdiv::LexParams;
use usersim_core::report::{cmd_report, render_markdown, ReportFormat};
use usersim_core::HarnessError;

#[derive(Parser)]
#[command(name = "usersim", version, about = "Simulate users of task-oriented dialog systems and score the conversations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Markdown,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum GoalFormat {
    Descriptive,
    Bullets,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment from a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        dialogs: Option<usize>,
        /// Parent directory for the run folder.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-score saved transcripts.
    Evaluate {
        #[arg(long)]
        transcripts: PathBuf,
        /// Corpus or ontology file providing the ontology.
        #[arg(long)]
        corpus: PathBuf,
        /// Mock database for value validity; defaults to the one the run used.
        #[arg(long)]
        database: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tabulate every result.json under a directory.
    Report {
        #[arg(long)]
        results: PathBuf,
        #[arg(long, value_enum, default_value = "markdown")]
        format: Format,
    },
    /// Lexical diversity of user utterances in a corpus, transcript or text file.
    Lexdiv {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = LexParams::default().segment)]
        segment: usize,
        #[arg(long, default_value_t = LexParams::default().hdd_sample)]
        hdd_sample: usize,
    },
    /// Print sampled user goals as JSON lines.
    GenGoals {
        #[arg(long)]
        ontology: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "descriptive")]
        format: GoalFormat,
    },
    /// Convert a MultiWOZ-style dump into the corpus format.
    ImportMultiwoz {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn emit(text: &str) -> Result<(), HarnessError> {
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(HarnessError::Io {
            path: PathBuf::from("<stdout>"),
            source: e,
        }),
        _ => Ok(()),
    }
}

fn execute(command: Command) -> Result<(), HarnessError> {
    match command {
        Command::Run { config, seed, dialogs, out } => {
            let overrides = Overrides {
                seed,
                n_dialogs: dialogs,
                output_dir: out,
            };
            let run = cmd_run(&config, &overrides)?;
            emit(&format!("run {} written to {}\n{}", run.run_id, run.dir.display(), render_markdown(&[&run.result])))?;
        }
        Command::Evaluate { transcripts, corpus, database, out } => {
            let (result, path) = cmd_evaluate(&transcripts, &corpus, database.as_deref(), out.as_deref())?;
            emit(&format!("wrote {}\n{}", path.display(), render_markdown(&[&result])))?;
        }
        Command::Report { results, format } => {
            let format = match format {
                Format::Markdown => ReportFormat::Markdown,
                Format::Json => ReportFormat::Json,
            };
            emit(&cmd_report(&results, format)?)?;
        }
        Command::Lexdiv { input, segment, hdd_sample } => {
            let params = LexParams {
                segment,
                hdd_sample,
                ..LexParams::default()
            };
            let report = cmd_lexdiv(&input, &params)?;
            emit(&format!("{}\n", serde_json::to_string_pretty(&report).expect("report serializes")))?;
        }
        Command::GenGoals { ontology, n, seed, format } => {
            let ontology = read_ontology_file(&ontology)?;
            let format = match format {
                GoalFormat::Descriptive => RequirementsFormat::Descriptive,
                GoalFormat::Bullets => RequirementsFormat::Bullets,
            };
            let goals = cmd_gen_goals(&ontology, n, seed, &GoalConfig::default(), format, &PhraseTable::default())?;
            let mut buf = Vec::new();
            write_goals(&goals, &mut buf).expect("writing to memory");
            emit(&String::from_utf8(buf).expect("utf-8 json"))?;
        }
        Command::ImportMultiwoz { input, out } => {
            let report = cmd_import_multiwoz(&input, &out)?;
            emit(&format!(
                "wrote {} ({} dialogs skipped, {} constructs skipped)\n",
                out.display(),
                report.skipped_dialogs.len(),
                report.skipped_constructs.len()
            ))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                HarnessError::Config(_) => 2,
                HarnessError::BackendUnreachable(_) => 3,
                _ => 1,
            })
        }
    }
}
