//! `feedpipe`: discover, snapshot, convert and analyze blog feeds.
//!
//! Exit codes: 0 success, 1 outputs written but some items failed,
//! 2 fatal input or configuration error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::LazyLock;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use feedpipe::config::PipelineConfig;
use feedpipe::converter::RECORD_ID_VERSION;
use feedpipe::http::{SystemClock, UreqClient};
use feedpipe::languages::MAPPING_TABLE_VERSION;
use feedpipe::pipeline::{self, PipelineLayout, Report, StageSummary};
use tracing_subscriber::EnvFilter;

static VERSION: LazyLock<String> = LazyLock::new(|| {
    format!(
        "{} (language table {MAPPING_TABLE_VERSION}, record ids {RECORD_ID_VERSION})",
        env!("CARGO_PKG_VERSION")
    )
});

#[derive(Debug, Parser)]
#[command(name = "feedpipe", version = VERSION.as_str(), about = "Blog feed discovery and ingestion pipeline")]
struct Cli {
    /// Flat `key = value` config file; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Default, Args)]
struct NetworkArgs {
    #[arg(long)]
    timeout_secs: Option<f64>,
    #[arg(long)]
    user_agent: Option<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Find feeds advertised by the blogs listed in a CSV.
    Discover {
        #[arg(long)]
        input: PathBuf,
        /// CSV of `source_url,feed_url` pairs found by hand.
        #[arg(long)]
        manual: Option<PathBuf>,
        #[arg(long)]
        output: PathBuf,
        #[command(flatten)]
        net: NetworkArgs,
    },
    /// Download every discovered feed into a snapshot directory.
    Fetch {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        max_concurrency: Option<usize>,
        #[command(flatten)]
        net: NetworkArgs,
    },
    /// Parse snapshots and convert them into container/item records.
    Convert {
        #[arg(long)]
        snapshots: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Defaults to `comments.json` next to `--out`.
        #[arg(long)]
        comments_out: Option<PathBuf>,
        /// Parsed feeds for `analyze`; defaults to `corpus.json` next to `--out`.
        #[arg(long)]
        corpus_out: Option<PathBuf>,
    },
    /// Metadata-quality and timeline reports.
    Analyze {
        #[arg(value_enum)]
        report: ReportArg,
        /// `corpus.json` from `convert` (any report) or `records.json` (timeline only).
        #[arg(long)]
        records: PathBuf,
        #[arg(long, value_delimiter = ',')]
        keys: Option<Vec<String>>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run discover, fetch, convert and analyze in sequence.
    Pipeline {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        manual: Option<PathBuf>,
        /// Output directory; defaults to `out_dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        keys: Option<Vec<String>>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        max_concurrency: Option<usize>,
        #[command(flatten)]
        net: NetworkArgs,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ReportArg {
    Inclusion,
    Quality,
    Timeline,
}

impl From<ReportArg> for Report {
    fn from(arg: ReportArg) -> Self {
        match arg {
            ReportArg::Inclusion => Report::Inclusion,
            ReportArg::Quality => Report::Quality,
            ReportArg::Timeline => Report::Timeline,
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig> {
    match path {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            PipelineConfig::parse(&text).with_context(|| format!("in {}", path.display()))
        }
        None => Ok(PipelineConfig::default()),
    }
}

fn apply_network(config: &mut PipelineConfig, net: &NetworkArgs) -> Result<()> {
    if let Some(secs) = net.timeout_secs {
        config.set("timeout_secs", &secs.to_string())?;
    }
    if let Some(agent) = &net.user_agent {
        config.user_agent = agent.clone();
    }
    Ok(())
}

fn apply_fetch(config: &mut PipelineConfig, seed: Option<u64>, max_concurrency: Option<usize>) {
    if let Some(seed) = seed {
        config.seed = seed;
    }
    if let Some(n) = max_concurrency {
        config.max_concurrency = n;
    }
}

fn sibling(path: &Path, name: &str) -> PathBuf {
    path.with_file_name(name)
}

fn client(config: &PipelineConfig) -> UreqClient {
    UreqClient::new(config.timeout, &config.user_agent)
}

fn run(cli: Cli) -> Result<Vec<StageSummary>> {
    let mut config = load_config(cli.config.as_deref())?;
    let summaries = match cli.command {
        Command::Discover {
            input,
            manual,
            output,
            net,
        } => {
            apply_network(&mut config, &net)?;
            config.validate()?;
            vec![pipeline::discover(
                &input,
                manual.as_deref(),
                &output,
                &client(&config),
                &config,
            )?]
        }
        Command::Fetch {
            input,
            out,
            seed,
            max_concurrency,
            net,
        } => {
            apply_network(&mut config, &net)?;
            apply_fetch(&mut config, seed, max_concurrency);
            config.validate()?;
            vec![pipeline::fetch(&input, &out, &client(&config), &SystemClock, &config)?]
        }
        Command::Convert {
            snapshots,
            out,
            comments_out,
            corpus_out,
        } => {
            let comments_out = comments_out.unwrap_or_else(|| sibling(&out, "comments.json"));
            let corpus_out = corpus_out.unwrap_or_else(|| sibling(&out, "corpus.json"));
            vec![pipeline::convert(&snapshots, &out, &comments_out, &corpus_out)?]
        }
        Command::Analyze {
            report,
            records,
            keys,
            out,
        } => vec![pipeline::analyze(
            report.into(),
            &records,
            keys.as_deref(),
            &out,
            &config,
        )?],
        Command::Pipeline {
            input,
            manual,
            out,
            keys,
            seed,
            max_concurrency,
            net,
        } => {
            apply_network(&mut config, &net)?;
            apply_fetch(&mut config, seed, max_concurrency);
            config.validate()?;
            let out = out.unwrap_or_else(|| config.out_dir.clone());
            let summaries = pipeline::run_pipeline(
                &input,
                manual.as_deref(),
                &out,
                keys.as_deref(),
                &client(&config),
                &SystemClock,
                &config,
            )?;
            tracing::info!(summary = %PipelineLayout::under(&out).summary.display(), "pipeline finished");
            summaries
        }
    };
    Ok(summaries)
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .json()
        .with_writer(std::io::stderr)
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .init();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            return if err.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(summaries) if summaries.iter().any(StageSummary::is_partial) => ExitCode::from(1),
        Ok(_) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}
