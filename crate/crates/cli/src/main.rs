use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use threadsumm_core::metrics::AspectMatch;
use threadsumm_core::report::MetricParams;
use threadsumm_core::run::{
    compare, evaluate, parse_metric_list, summarize, EvaluateOptions, InputFormat, MetricKind, RunError,
    SummarizeOptions,
};

/// Summarize discussion threads and evaluate summaries.
#[derive(Debug, Parser)]
#[command(name = "threadsumm", version)]
struct Cli {
    /// Configuration file (defaults to $THREADSUMM_CONFIG).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Tree,
    Flat,
}

impl From<Format> for InputFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Tree => InputFormat::Tree,
            Format::Flat => InputFormat::Flat,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Baseline {
    Vanilla,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Matching {
    Exact,
    Fuzzy,
}

#[derive(Debug, Clone)]
struct MetricList(Vec<MetricKind>);

fn metric_list(s: &str) -> Result<MetricList, String> {
    parse_metric_list(s).map(MetricList)
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run planning and tree-of-thoughts composition on one thread.
    Summarize {
        #[arg(long)]
        input: PathBuf,
        /// Input format; inferred from the extension when omitted.
        #[arg(long, value_enum)]
        format: Option<Format>,
        #[arg(long, value_enum)]
        baseline: Option<Baseline>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        reorder_proposals: Option<usize>,
        #[arg(long)]
        paragraph_proposals: Option<usize>,
        /// Chat provider for the generator role.
        #[arg(long)]
        provider: Option<String>,
        /// Re-run from a recorded manifest without calling any provider.
        #[arg(long)]
        replay: Option<PathBuf>,
        #[arg(long)]
        run_id: Option<String>,
        /// Skip the on-disk response cache.
        #[arg(long)]
        no_cache: bool,
        /// Run store; each run gets a subdirectory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute metrics for a stored summary.
    Evaluate {
        #[arg(long)]
        summary: PathBuf,
        #[arg(long)]
        source: PathBuf,
        #[arg(long, value_enum)]
        source_format: Option<Format>,
        #[arg(long, conflicts_with = "docasref")]
        reference: Option<PathBuf>,
        /// Use the source as the ROUGE reference.
        #[arg(long)]
        docasref: bool,
        /// Comma-separated: rouge1, aspects, opinion, position, length.
        #[arg(long, value_parser = metric_list)]
        metrics: Option<MetricList>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = threadsumm_core::metrics::DEFAULT_K)]
        k: usize,
        #[arg(long, default_value_t = threadsumm_core::metrics::DEFAULT_T)]
        t: f64,
        #[arg(long, default_value_t = threadsumm_core::metrics::DEFAULT_CUTOFF)]
        cutoff: f64,
        #[arg(long, value_enum, default_value = "exact")]
        aspect_match: Matching,
        #[arg(long)]
        provider: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Tabulate the reports of several runs as CSV.
    Compare {
        #[arg(required = true, num_args = 1..)]
        dirs: Vec<PathBuf>,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), RunError> {
    match cli.command {
        Command::Summarize {
            input,
            format,
            baseline,
            steps,
            reorder_proposals,
            paragraph_proposals,
            provider,
            replay,
            run_id,
            no_cache,
            out,
        } => {
            let outcome = summarize(&SummarizeOptions {
                input,
                format: format.map(Into::into),
                out,
                config: cli.config,
                provider,
                steps,
                reorder_proposals,
                paragraph_proposals,
                baseline_vanilla: baseline.is_some(),
                replay,
                run_id,
                no_cache,
            })?;
            for w in &outcome.manifest.warnings {
                eprintln!("warning: {w}");
            }
            eprintln!(
                "{} provider calls ({} network, {} cache hits)",
                outcome.stats.provider_calls, outcome.stats.network_calls, outcome.stats.cache_hits
            );
            println!("{}", outcome.run_dir.display());
        }
        Command::Evaluate {
            summary,
            source,
            source_format,
            reference,
            docasref,
            metrics,
            seed,
            k,
            t,
            cutoff,
            aspect_match,
            provider,
            out,
        } => {
            let params = MetricParams {
                k,
                t,
                quantile_cutoff: cutoff,
                seed,
                aspect_match: match aspect_match {
                    Matching::Exact => AspectMatch::Exact,
                    Matching::Fuzzy => AspectMatch::Fuzzy,
                },
            };
            let outcome = evaluate(&EvaluateOptions {
                summary,
                source,
                source_format: source_format.map(Into::into),
                reference,
                docasref,
                metrics: metrics.map(|m| m.0),
                params,
                out,
                config: cli.config,
                provider,
            })?;
            for (metric, err) in &outcome.report.errors {
                eprintln!("warning: {metric}: {err}");
            }
            for f in &outcome.files {
                println!("{}", f.display());
            }
        }
        Command::Compare { dirs, out } => {
            let cmp = compare(&dirs)?;
            for w in &cmp.warnings {
                eprintln!("warning: {w}");
            }
            match out {
                Some(path) => std::fs::write(&path, &cmp.csv)
                    .map_err(|e| RunError::Failed(format!("cannot write {}: {e}", path.display())))?,
                None => print!("{}", cmp.csv),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
