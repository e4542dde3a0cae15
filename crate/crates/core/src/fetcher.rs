//! Feed snapshotting with a fixed retry contract.
//!
//! * 2xx: success.
//! * 4xx: permanent failure, never retried.
//! * 5xx or transport failure: wait and retry, at most three attempts in
//!   total, waiting 5 s and then 15 s by default.
//! * anything else (1xx, unresolved 3xx): permanent failure.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use chrono::{DateTime, SubsecRound, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use tracing::{info, warn};

use crate::dates::iso8601;
use crate::http::{with_query, Clock, HttpClient, HttpResponse};
use crate::politeness::{polite_map, politeness_order};
use crate::url_norm::host_key;

pub const METADATA_FILE: &str = "metadata.json";
pub const ERRORS_FILE: &str = "errors.json";

const ACCEPT: &str = "application/rss+xml, application/atom+xml, application/xml;q=0.9, text/xml;q=0.9, */*;q=0.8";

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum FetchError {
    #[error("client error: HTTP {status}")]
    ClientError { status: u16 },
    #[error("unexpected status: HTTP {status}")]
    UnexpectedStatus { status: u16 },
    #[error("gave up after {attempts} attempts, last failure: {last}")]
    RetriesExhausted { attempts: u32, last: String },
    #[error("content type is not XML: {}", content_type.as_deref().unwrap_or("<none>"))]
    ContentType { content_type: Option<String> },
    #[error("cannot store snapshot: {0}")]
    Storage(String),
}

#[derive(Debug, Error)]
pub enum FetchRunError {
    #[error("discovery JSON: {0}")]
    Format(String),
    #[error("snapshot directory {path}: {message}")]
    SnapshotDir { path: PathBuf, message: String },
}

/// Provenance of one stored snapshot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FetchMetadata {
    pub url: String,
    #[serde(with = "iso8601")]
    pub timestamp: DateTime<Utc>,
    /// Relative to the snapshot directory.
    pub filename: String,
    pub status_code: u16,
    pub content_type: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorUrl {
    pub url: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FetchRunResult {
    pub downloaded: usize,
    pub errors: usize,
    pub error_urls: Vec<ErrorUrl>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FetchOptions {
    /// Waits between consecutive attempts; attempts = waits + 1.
    pub retry_waits: Vec<Duration>,
    pub headers: Vec<(String, String)>,
    pub params: Vec<(String, String)>,
    pub max_concurrency: usize,
    pub seed: u64,
}

impl Default for FetchOptions {
    fn default() -> Self {
        Self {
            retry_waits: vec![Duration::from_secs(5), Duration::from_secs(15)],
            headers: vec![("Accept".to_string(), ACCEPT.to_string())],
            params: Vec::new(),
            max_concurrency: 4,
            seed: 0,
        }
    }
}

/// Reads discovery JSON and returns every `rss_links` entry once, in order
/// of first appearance.
pub fn extract_feed_urls(discovery_json: impl Read) -> Result<Vec<String>, FetchRunError> {
    let value: serde_json::Value =
        serde_json::from_reader(discovery_json).map_err(|e| FetchRunError::Format(e.to_string()))?;
    let records = value
        .as_array()
        .ok_or_else(|| FetchRunError::Format("top level is not an array".into()))?;
    let mut seen = std::collections::HashSet::new();
    let mut urls = Vec::new();
    for (idx, record) in records.iter().enumerate() {
        let links = record
            .get("rss_links")
            .ok_or_else(|| FetchRunError::Format(format!("record {idx} has no rss_links")))?
            .as_array()
            .ok_or_else(|| FetchRunError::Format(format!("record {idx}: rss_links is not a list")))?;
        for link in links {
            let link = link
                .as_str()
                .ok_or_else(|| FetchRunError::Format(format!("record {idx}: rss_links holds a non-string")))?;
            if seen.insert(link.to_string()) {
                urls.push(link.to_string());
            }
        }
    }
    Ok(urls)
}

/// Accepts any content type mentioning "xml", parameters included.
pub fn is_xml_content_type(content_type: Option<&str>) -> bool {
    content_type.is_some_and(|ct| ct.to_ascii_lowercase().contains("xml"))
}

/// `<first 16 hex of sha256(url)>_<yyyymmddThhmmss>.xml`
pub fn snapshot_filename(url: &str, at: &DateTime<Utc>) -> String {
    let digest = Sha256::digest(url.as_bytes());
    let hex: String = digest.iter().take(8).map(|b| format!("{b:02x}")).collect();
    format!("{hex}_{}.xml", at.format("%Y%m%dT%H%M%S"))
}

pub struct Fetcher<'a> {
    client: &'a dyn HttpClient,
    clock: &'a dyn Clock,
    options: FetchOptions,
}

impl<'a> Fetcher<'a> {
    pub fn new(client: &'a dyn HttpClient, clock: &'a dyn Clock, options: FetchOptions) -> Self {
        Self { client, clock, options }
    }

    pub fn options(&self) -> &FetchOptions {
        &self.options
    }

    /// GET with the retry contract described at module level.
    pub fn get(&self, url: &str) -> Result<HttpResponse, FetchError> {
        let target = with_query(url, &self.options.params);
        let attempts = self.options.retry_waits.len() as u32 + 1;
        let mut last = String::new();
        for attempt in 1..=attempts {
            match self.client.get(&target, &self.options.headers) {
                Ok(resp) if (200..300).contains(&resp.status) => return Ok(resp),
                Ok(resp) if (400..500).contains(&resp.status) => {
                    return Err(FetchError::ClientError { status: resp.status })
                }
                Ok(resp) if (500..600).contains(&resp.status) => last = format!("HTTP {}", resp.status),
                Ok(resp) => return Err(FetchError::UnexpectedStatus { status: resp.status }),
                Err(err) => last = err.to_string(),
            }
            if let Some(wait) = self.options.retry_waits.get(attempt as usize - 1) {
                warn!(url, attempt, failure = %last, "retrying after {:?}", wait);
                self.clock.sleep(*wait);
            }
        }
        Err(FetchError::RetriesExhausted { attempts, last })
    }

    /// Downloads one feed into `snapshot_dir`.
    ///
    /// The body is written to a temporary file and renamed into place, so a
    /// failed fetch never leaves a partial snapshot behind.
    pub fn load_rss(&self, url: &str, snapshot_dir: &Path) -> Result<FetchMetadata, FetchError> {
        let response = self.get(url)?;
        if !is_xml_content_type(response.content_type.as_deref()) {
            return Err(FetchError::ContentType {
                content_type: response.content_type,
            });
        }
        let timestamp = self.clock.now().trunc_subsecs(0);
        let filename = snapshot_filename(url, &timestamp);
        write_atomically(&snapshot_dir.join(&filename), &response.body)
            .map_err(|e| FetchError::Storage(e.to_string()))?;
        Ok(FetchMetadata {
            url: url.to_string(),
            timestamp,
            filename,
            status_code: response.status,
            content_type: response.content_type.unwrap_or_default(),
        })
    }

    /// Fetches every feed listed in the discovery JSON into `snapshot_dir`
    /// and writes `metadata.json` and `errors.json` there.
    pub fn run_fetch(&self, discovery_json: impl Read, snapshot_dir: &Path) -> Result<FetchRun, FetchRunError> {
        let urls = extract_feed_urls(discovery_json)?;
        let dir_error = |e: std::io::Error| FetchRunError::SnapshotDir {
            path: snapshot_dir.to_path_buf(),
            message: e.to_string(),
        };
        fs::create_dir_all(snapshot_dir).map_err(dir_error)?;

        let ordered = politeness_order(&urls, self.options.seed);
        let outcomes = polite_map(
            &ordered,
            self.options.max_concurrency,
            |u| host_key(u),
            |url| self.load_rss(url, snapshot_dir),
        );

        let mut run = FetchRun::default();
        for (url, outcome) in ordered.iter().zip(outcomes) {
            match outcome {
                Ok(meta) => run.metadata.push(meta),
                Err(err) => {
                    warn!(url = %url, error = %err, "feed not downloaded");
                    run.result.error_urls.push(ErrorUrl {
                        url: url.clone(),
                        reason: err.to_string(),
                    });
                }
            }
        }
        run.result.downloaded = run.metadata.len();
        run.result.errors = run.result.error_urls.len();

        write_json(&snapshot_dir.join(METADATA_FILE), &run.metadata).map_err(dir_error)?;
        write_json(&snapshot_dir.join(ERRORS_FILE), &run.result.error_urls).map_err(dir_error)?;
        info!(
            downloaded = run.result.downloaded,
            errors = run.result.errors,
            "fetch run finished"
        );
        Ok(run)
    }
}

/// Everything a fetch run produced.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FetchRun {
    pub result: FetchRunResult,
    pub metadata: Vec<FetchMetadata>,
}

fn write_atomically(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("part");
    let written = fs::File::create(&tmp).and_then(|mut f| {
        f.write_all(bytes)?;
        f.sync_all()
    });
    match written.and_then(|_| fs::rename(&tmp, path)) {
        Ok(()) => Ok(()),
        Err(err) => {
            let _ = fs::remove_file(&tmp);
            Err(err)
        }
    }
}

pub(crate) fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> std::io::Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(std::io::Error::other)?;
    text.push('\n');
    write_atomically(path, text.as_bytes())
}
