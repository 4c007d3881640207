use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use codeseg::backends::FailureMode;
use codeseg::cli::{cmd_adjudicate, cmd_evaluate, cmd_segment, cmd_stats, cmd_train, BackendKind, RunConfig};
use codeseg::corpus::Language;
use codeseg::pipeline::Approach;
use codeseg::rangeseg::RepairPolicy;
use codeseg::window::PromptMode;
use codeseg::Result;

#[derive(Parser)]
#[command(name = "codeseg", version, about = "Segment analysis scripts into functional stages")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Segment files and write segment JSON plus annotated sources.
    Segment {
        #[command(flatten)]
        run: RunArgs,
        /// JSONL corpus or a single .R/.py script.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score the configured approach on the test split.
    Evaluate {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        input: PathBuf,
        /// Report file, or output directory when sweeping contexts.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the local classifier on the train split.
    Train {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fill gold labels from annotator majority votes.
    Adjudicate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Corpus size statistics per split.
    Stats {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        language: Option<Language>,
        #[arg(long)]
        json: bool,
    },
}

/// Config file plus overrides; flags win over file values.
#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    approach: Option<Approach>,
    #[arg(long)]
    backend: Option<BackendKind>,
    #[arg(long)]
    context: Option<usize>,
    /// Comma-separated context sizes for a sweep.
    #[arg(long, value_delimiter = ',')]
    contexts: Option<Vec<usize>>,
    #[arg(long)]
    max_tokens: Option<usize>,
    #[arg(long)]
    mode: Option<PromptMode>,
    #[arg(long)]
    shots: Option<usize>,
    #[arg(long)]
    repair: Option<RepairPolicy>,
    #[arg(long)]
    seed: Option<u64>,
    /// Record transport failures as Invalid instead of aborting.
    #[arg(long)]
    lenient: bool,
    /// Maximum in-flight backend requests.
    #[arg(long)]
    max_in_flight: Option<usize>,
    #[arg(long)]
    language: Option<Language>,
    #[arg(long)]
    replay: Option<PathBuf>,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    cache: Option<PathBuf>,
    #[arg(long)]
    run_id: Option<String>,
}

impl RunArgs {
    fn resolve(self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        // Relative fixture paths in a config file are relative to the file.
        let base = self.config.as_deref().and_then(Path::parent).map(Path::to_path_buf);
        let rebase = |p: &mut Option<PathBuf>| {
            if let (Some(base), Some(path)) = (&base, p.as_mut()) {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        };
        rebase(&mut c.replay);
        rebase(&mut c.model);
        rebase(&mut c.cache);

        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = self.$field {
                    c.$field = v;
                }
            )*};
        }
        set!(approach, backend, context, contexts, max_tokens, mode, shots, repair, seed, max_in_flight);
        if self.lenient {
            c.failure = FailureMode::Lenient;
        }
        c.language = self.language.or(c.language);
        c.replay = self.replay.or(c.replay);
        c.model = self.model.or(c.model);
        c.cache = self.cache.or(c.cache);
        c.run_id = self.run_id.or(c.run_id);
        c.validate()?;
        Ok(c)
    }
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Segment { run, input, out } => {
            let config = run.resolve()?;
            let n = cmd_segment(&config, &input, &out)?;
            println!("segmented {n} file(s) into {}", out.display());
        }
        Command::Evaluate { run, input, out } => {
            let config = run.resolve()?;
            let reports = cmd_evaluate(&config, &input, &out)?;
            print!("{}", codeseg::eval::render_table(&reports));
        }
        Command::Train { run, input, out } => {
            let config = run.resolve()?;
            let acc = cmd_train(&config, &input, &out)?;
            println!(
                "training accuracy {:.4}; model written to {} (seed {}, config {})",
                acc,
                out.display(),
                config.seed,
                &config.config_hash()[..12]
            );
        }
        Command::Adjudicate { input, out } => {
            let report = cmd_adjudicate(&input, &out)?;
            println!(
                "kappa {:.4}; {} lines, {:.4} resolvable, {} conflict(s)",
                report.kappa,
                report.line_count,
                report.resolvable_fraction,
                report.conflict_lines.len()
            );
            for c in &report.conflict_lines {
                let labels: Vec<&str> = c.annotator_labels.iter().map(|l| l.as_str()).collect();
                println!("  conflict {}:{} {:?}", c.file_id, c.line_no, labels);
            }
        }
        Command::Stats { input, language, json } => {
            let stats = cmd_stats(&input, language)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&stats)?);
            } else {
                print!("{stats}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
