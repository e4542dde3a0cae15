//! File-level stage runners shared by the CLI subcommands and `pipeline`.
//!
//! Each stage reads its inputs from disk, writes its outputs plus a
//! `<stage>_summary.json` next to them, and returns a [`StageSummary`].

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::info;

use crate::analytics::{inclusion_rates, quality_flags, tags_over_time, write_timeline_csv, Level, TimelineEntry};
use crate::config::PipelineConfig;
use crate::converter::{run_convert, NormalizedRecord, ParsedFeed};
use crate::discovery::{load_manual_additions, run_discovery, DiscoveryError};
use crate::fetcher::{write_json, FetchRunError, Fetcher};
use crate::http::{Clock, HttpClient};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error(transparent)]
    Discovery(#[from] DiscoveryError),
    #[error(transparent)]
    Fetch(#[from] FetchRunError),
    #[error(transparent)]
    Convert(#[from] crate::converter::ConvertError),
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

fn io_error(path: &Path) -> impl Fn(std::io::Error) -> PipelineError + '_ {
    move |e| PipelineError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn open(path: &Path) -> Result<fs::File, PipelineError> {
    fs::File::open(path).map_err(io_error(path))
}

fn save_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), PipelineError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_error(parent))?;
    }
    write_json(path, value).map_err(io_error(path))
}

/// Machine-readable account of one stage run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageSummary {
    pub stage: String,
    pub duration_ms: u64,
    pub counts: BTreeMap<String, usize>,
    pub errors: Vec<String>,
}

impl StageSummary {
    fn new(stage: &str) -> Self {
        Self {
            stage: stage.to_string(),
            ..Self::default()
        }
    }

    /// Outputs were written but some items failed.
    pub fn is_partial(&self) -> bool {
        !self.errors.is_empty()
    }

    fn finish(mut self, started: Instant, dir: &Path) -> Result<Self, PipelineError> {
        self.duration_ms = started.elapsed().as_millis() as u64;
        save_json(&dir.join(format!("{}_summary.json", self.stage)), &self)?;
        info!(stage = %self.stage, counts = ?self.counts, errors = self.errors.len(), "stage finished");
        Ok(self)
    }
}

fn parent_dir(path: &Path) -> PathBuf {
    path.parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."))
}

pub fn discover(
    input: &Path,
    manual: Option<&Path>,
    output: &Path,
    client: &dyn HttpClient,
    config: &PipelineConfig,
) -> Result<StageSummary, PipelineError> {
    let started = Instant::now();
    let manual_additions = match manual {
        Some(path) => load_manual_additions(open(path)?)?,
        None => Vec::new(),
    };
    let outcome = run_discovery(open(input)?, client, &manual_additions, config.max_concurrency)?;
    save_json(output, &outcome.records)?;

    let mut summary = StageSummary::new("discover");
    let alive = outcome
        .records
        .iter()
        .filter(|r| r.status.is_some_and(|s| (200..400).contains(&s)))
        .count();
    summary.counts.insert("urls".into(), outcome.records.len());
    summary.counts.insert("alive".into(), alive);
    summary.counts.insert(
        "with_feeds".into(),
        outcome.records.iter().filter(|r| !r.rss_links.is_empty()).count(),
    );
    summary.counts.insert(
        "feed_links".into(),
        outcome.records.iter().map(|r| r.rss_links.len()).sum(),
    );
    summary.counts.insert("rejected_rows".into(), outcome.rejected.len());
    for row in &outcome.rejected {
        summary
            .errors
            .push(format!("row {}: not a URL: {}", row.row, row.value));
    }
    for record in outcome
        .records
        .iter()
        .filter(|r| !r.status.is_some_and(|s| (200..400).contains(&s)))
    {
        match record.status {
            Some(status) => summary
                .errors
                .push(format!("{}: dead link (HTTP {status})", record.url)),
            None => summary.errors.push(format!("{}: no response", record.url)),
        }
    }
    for addition in &outcome.unmatched_manual {
        summary
            .errors
            .push(format!("manual addition for unknown source {}", addition.source_url));
    }
    summary.finish(started, &parent_dir(output))
}

pub fn fetch(
    input: &Path,
    out_dir: &Path,
    client: &dyn HttpClient,
    clock: &dyn Clock,
    config: &PipelineConfig,
) -> Result<StageSummary, PipelineError> {
    let started = Instant::now();
    let fetcher = Fetcher::new(client, clock, config.fetch_options());
    let run = fetcher.run_fetch(open(input)?, out_dir)?;

    let mut summary = StageSummary::new("fetch");
    summary.counts.insert("downloaded".into(), run.result.downloaded);
    summary.counts.insert("errors".into(), run.result.errors);
    summary.errors = run
        .result
        .error_urls
        .iter()
        .map(|e| format!("{}: {}", e.url, e.reason))
        .collect();
    summary.finish(started, out_dir)
}

pub fn convert(
    snapshots: &Path,
    output: &Path,
    comments_output: &Path,
    corpus_output: &Path,
) -> Result<StageSummary, PipelineError> {
    let started = Instant::now();
    let run = run_convert(snapshots)?;
    save_json(output, &run.conversion.records)?;
    save_json(comments_output, &run.conversion.comments)?;
    save_json(corpus_output, &run.parsed.feeds)?;

    let mut summary = StageSummary::new("convert");
    let count = |records: &[NormalizedRecord], kind| records.iter().filter(|r| r.kind == kind).count();
    use crate::converter::RecordKind::{Container, Item};
    summary.counts.insert("feeds_parsed".into(), run.parsed.feeds.len());
    summary
        .counts
        .insert("containers".into(), count(&run.conversion.records, Container));
    summary
        .counts
        .insert("items".into(), count(&run.conversion.records, Item));
    summary
        .counts
        .insert("comment_containers".into(), count(&run.conversion.comments, Container));
    summary
        .counts
        .insert("comment_items".into(), count(&run.conversion.comments, Item));
    summary
        .counts
        .insert("skipped_snapshots".into(), run.parsed.skipped.len());
    summary.errors = run
        .parsed
        .skipped
        .iter()
        .map(|s| format!("{} ({}): {}", s.url, s.filename, s.reason))
        .collect();
    summary.finish(started, &parent_dir(output))
}

/// What `analyze` was pointed at.
#[derive(Debug, Clone, PartialEq)]
pub enum AnalysisInput {
    /// Parsed feeds as written by `convert` to `corpus.json`.
    Corpus(Vec<ParsedFeed>),
    /// Normalized records (`records.json`).
    Records(Vec<NormalizedRecord>),
}

impl AnalysisInput {
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let format_error = |message: String| PipelineError::Format {
            path: path.to_path_buf(),
            message,
        };
        let value: serde_json::Value =
            serde_json::from_reader(std::io::BufReader::new(open(path)?)).map_err(|e| format_error(e.to_string()))?;
        let is_records = value
            .as_array()
            .and_then(|a| a.first())
            .is_some_and(|first| first.get("record_id").is_some());
        if is_records {
            serde_json::from_value(value).map(Self::Records)
        } else {
            serde_json::from_value(value).map(Self::Corpus)
        }
        .map_err(|e| format_error(e.to_string()))
    }

    fn timeline_entries(&self) -> Vec<TimelineEntry> {
        match self {
            Self::Corpus(feeds) => feeds
                .iter()
                .flat_map(|f| f.entries.iter())
                .map(TimelineEntry::from_entry)
                .collect(),
            Self::Records(records) => records.iter().filter_map(TimelineEntry::from_record).collect(),
        }
    }

    fn corpus(&self, path: &Path) -> Result<&[ParsedFeed], PipelineError> {
        match self {
            Self::Corpus(feeds) => Ok(feeds),
            Self::Records(_) => Err(PipelineError::Format {
                path: path.to_path_buf(),
                message: "this report needs the parsed corpus (corpus.json), not normalized records".into(),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Report {
    Inclusion,
    Quality,
    Timeline,
}

pub fn analyze(
    report: Report,
    records: &Path,
    keys: Option<&[String]>,
    output: &Path,
    config: &PipelineConfig,
) -> Result<StageSummary, PipelineError> {
    let started = Instant::now();
    let input = AnalysisInput::load(records)?;
    let mut summary = StageSummary::new("analyze");
    match report {
        Report::Inclusion => {
            let corpus = input.corpus(records)?;
            let reports = [
                inclusion_rates(corpus, Level::Feed),
                inclusion_rates(corpus, Level::Entry),
            ];
            summary.counts.insert("feeds".into(), reports[0].denominator);
            summary.counts.insert("entries".into(), reports[1].denominator);
            save_json(output, &reports)?;
        }
        Report::Quality => {
            let flags = quality_flags(input.corpus(records)?, &config.thresholds);
            summary.counts.insert("flags".into(), flags.len());
            save_json(output, &flags)?;
        }
        Report::Timeline => {
            let timeline = tags_over_time(&input.timeline_entries(), keys);
            summary.counts.insert("rows".into(), timeline.rows.len());
            summary.counts.insert("undated_entries".into(), timeline.undated);
            if let Some(parent) = output.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent).map_err(io_error(parent))?;
            }
            let file = fs::File::create(output).map_err(io_error(output))?;
            write_timeline_csv(&timeline.rows, file).map_err(|e| PipelineError::Io {
                path: output.to_path_buf(),
                message: e.to_string(),
            })?;
        }
    }
    summary.finish(started, &parent_dir(output))
}

/// Output layout of a full pipeline run under one directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PipelineLayout {
    pub feeds: PathBuf,
    pub snapshots: PathBuf,
    pub records: PathBuf,
    pub comments: PathBuf,
    pub corpus: PathBuf,
    pub inclusion: PathBuf,
    pub quality: PathBuf,
    pub timeline: PathBuf,
    pub summary: PathBuf,
}

impl PipelineLayout {
    pub fn under(dir: &Path) -> Self {
        Self {
            feeds: dir.join("feeds.json"),
            snapshots: dir.join("snapshots"),
            records: dir.join("records.json"),
            comments: dir.join("comments.json"),
            corpus: dir.join("corpus.json"),
            inclusion: dir.join("inclusion_report.json"),
            quality: dir.join("quality_flags.json"),
            timeline: dir.join("topics_over_time.csv"),
            summary: dir.join("run_summary.json"),
        }
    }
}

/// Runs discover, fetch, convert and all three analyses in sequence.
pub fn run_pipeline(
    input: &Path,
    manual: Option<&Path>,
    out_dir: &Path,
    keys: Option<&[String]>,
    client: &dyn HttpClient,
    clock: &dyn Clock,
    config: &PipelineConfig,
) -> Result<Vec<StageSummary>, PipelineError> {
    let layout = PipelineLayout::under(out_dir);
    let stages = vec![
        discover(input, manual, &layout.feeds, client, config)?,
        fetch(&layout.feeds, &layout.snapshots, client, clock, config)?,
        convert(&layout.snapshots, &layout.records, &layout.comments, &layout.corpus)?,
        analyze(Report::Inclusion, &layout.corpus, None, &layout.inclusion, config)?,
        analyze(Report::Quality, &layout.corpus, None, &layout.quality, config)?,
        analyze(Report::Timeline, &layout.records, keys, &layout.timeline, config)?,
    ];
    save_json(&layout.summary, &stages)?;
    Ok(stages)
}
