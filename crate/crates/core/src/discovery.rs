//! Feed discovery: from a CSV of blog URLs to a list of advertised feeds.

use std::collections::HashMap;
use std::io::Read;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::{debug, warn};
use url::Url;

use crate::http::HttpClient;
use crate::markup::strip_markup;
use crate::politeness::polite_map;
use crate::url_norm::{host_key, normalize_url, parse_http_url};

#[derive(Debug, Error)]
pub enum DiscoveryError {
    #[error("cannot read URL list: {0}")]
    Input(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Liveness {
    Unknown,
    Alive,
    Dead,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceUrl {
    /// The cell as it appeared in the CSV.
    pub raw: String,
    /// Canonical form used for deduplication.
    pub normalized: String,
    pub alive: Liveness,
}

impl SourceUrl {
    /// Builds a source URL from a CSV cell. Bare host names such as
    /// `example.org/blog` are read as `https://`.
    pub fn parse(raw: &str) -> Option<Self> {
        let normalized = normalize_url(&with_scheme(raw))?;
        Some(Self {
            raw: raw.trim().to_string(),
            normalized,
            alive: Liveness::Unknown,
        })
    }

    /// The URL actually requested: the raw cell, not the normalized form,
    /// since some sites only answer on their `www.` host.
    pub fn request_url(&self) -> String {
        with_scheme(&self.raw)
    }
}

fn with_scheme(raw: &str) -> String {
    let raw = raw.trim();
    let looks_like_host = !raw.contains("://")
        && !raw.contains(char::is_whitespace)
        && raw.split('/').next().is_some_and(|h| h.contains('.'));
    if looks_like_host {
        format!("https://{raw}")
    } else {
        raw.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedRow {
    /// 1-based line number in the CSV.
    pub row: usize,
    pub value: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct UrlList {
    pub urls: Vec<SourceUrl>,
    pub rejected: Vec<RejectedRow>,
}

fn looks_like_header(cell: &str) -> bool {
    let cell = cell.trim().to_ascii_lowercase().replace(['_', '-'], " ");
    let cell = cell
        .strip_prefix("blog ")
        .or_else(|| cell.strip_prefix("source "))
        .unwrap_or(&cell);
    matches!(
        cell,
        "url" | "urls" | "link" | "links" | "website" | "site" | "blog" | "blogs" | "homepage" | "address" | "domain"
    )
}

/// CSV records with their 1-based line numbers. Blank lines are skipped.
fn read_rows(mut source: impl Read) -> Result<Vec<(usize, Vec<String>)>, DiscoveryError> {
    let mut text = String::new();
    source
        .read_to_string(&mut text)
        .map_err(|e| DiscoveryError::Input(e.to_string()))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    reader
        .records()
        .map(|r| {
            r.map(|rec| {
                let mut offset = rec.position().map_or(0, |p| p.byte() as usize);
                // the reported position sits before any skipped blank lines
                while matches!(text.as_bytes().get(offset), Some(b'\n' | b'\r')) {
                    offset += 1;
                }
                let line = text.as_bytes()[..offset].iter().filter(|&&b| b == b'\n').count() + 1;
                (line, rec.iter().map(str::to_string).collect())
            })
            .map_err(|e| DiscoveryError::Input(e.to_string()))
        })
        .collect()
}

/// Reads the first column of a CSV as candidate blog URLs.
///
/// A first row whose first cell is not a URL but reads like a column name
/// (`url`, `blog url`, `website`, ...) is skipped as a header. Empty rows
/// are ignored; other rows that fail to parse are reported in `rejected`.
pub fn load_url_list(source: impl Read) -> Result<UrlList, DiscoveryError> {
    let rows = read_rows(source)?;
    let mut list = UrlList::default();
    for (idx, (line, row)) in rows.iter().enumerate() {
        let cell = row.first().map(String::as_str).unwrap_or("").trim();
        if cell.is_empty() {
            continue;
        }
        match SourceUrl::parse(cell) {
            Some(url) => list.urls.push(url),
            None if idx == 0 && looks_like_header(cell) => {}
            None => list.rejected.push(RejectedRow {
                row: *line,
                value: cell.to_string(),
            }),
        }
    }
    Ok(list)
}

/// One manually identified feed for a source URL.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManualAddition {
    pub source_url: String,
    pub feed_url: String,
}

/// Reads `source_url,feed_url` pairs; a non-URL first row is a header.
pub fn load_manual_additions(source: impl Read) -> Result<Vec<ManualAddition>, DiscoveryError> {
    let rows = read_rows(source)?;
    let mut out = Vec::new();
    for (idx, (line, row)) in rows.iter().enumerate() {
        let (Some(src), Some(feed)) = (row.first(), row.get(1)) else {
            continue;
        };
        if SourceUrl::parse(src).is_none() || parse_http_url(feed).is_none() {
            if idx > 0 {
                warn!(row = *line, "skipping unparseable manual addition");
            }
            continue;
        }
        out.push(ManualAddition {
            source_url: src.clone(),
            feed_url: feed.clone(),
        });
    }
    Ok(out)
}

/// Keeps the first occurrence of every normalized URL, in input order.
pub fn normalize_and_dedupe(urls: Vec<SourceUrl>) -> Vec<SourceUrl> {
    let mut seen = std::collections::HashSet::new();
    urls.into_iter().filter(|u| seen.insert(u.normalized.clone())).collect()
}

/// GETs the URL; alive when the final status is in 200..=399.
pub fn probe_url(url: &SourceUrl, client: &dyn HttpClient) -> (bool, Option<u16>) {
    match client.get(&url.request_url(), &[]) {
        Ok(resp) => ((200..400).contains(&resp.status), Some(resp.status)),
        Err(_) => (false, None),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkMethod {
    Strict,
    Fallback,
    Manual,
}

/// A probed source URL and the feeds found for it.
///
/// `rss_link_methods` runs parallel to `rss_links`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscoveryRecord {
    pub url: String,
    pub status: Option<u16>,
    pub content_type: Option<String>,
    pub rss_links: Vec<String>,
    #[serde(default)]
    pub rss_link_methods: Vec<LinkMethod>,
}

impl DiscoveryRecord {
    pub fn new(url: impl Into<String>, status: Option<u16>, content_type: Option<String>) -> Self {
        Self {
            url: url.into(),
            status,
            content_type,
            rss_links: Vec::new(),
            rss_link_methods: Vec::new(),
        }
    }

    /// Appends a link unless it is already present.
    pub fn add_link(&mut self, link: String, method: LinkMethod) {
        if !self.rss_links.contains(&link) {
            self.rss_links.push(link);
            self.rss_link_methods.push(method);
        }
    }
}

static LINK_TAG: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?is)<link\b([^>]*)>").unwrap());
static ANCHOR: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?is)<a\b([^>]*)>(.*?)</a\s*>").unwrap());
static ATTRIBUTE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r#"(?is)([a-z_:][-a-z0-9_:.]*)(?:\s*=\s*(?:"([^"]*)"|'([^']*)'|([^\s"'=<>`]+)))?"#).unwrap()
});

/// Attribute names (lowercased) to decoded values for the inside of a tag.
fn attributes(inner: &str) -> HashMap<String, String> {
    let mut attrs = HashMap::new();
    for cap in ATTRIBUTE.captures_iter(inner) {
        let name = cap[1].to_ascii_lowercase();
        let value = cap
            .get(2)
            .or_else(|| cap.get(3))
            .or_else(|| cap.get(4))
            .map(|m| html_escape::decode_html_entities(m.as_str()).trim().to_string())
            .unwrap_or_default();
        attrs.entry(name).or_insert(value);
    }
    attrs
}

/// Inside of a tag without the self-closing slash. A slash directly after an
/// unquoted value belongs to that value.
fn tag_inner(inner: &str) -> &str {
    match inner.strip_suffix('/') {
        Some(rest) if rest.is_empty() || rest.ends_with(|c: char| c.is_whitespace() || c == '"' || c == '\'') => rest,
        _ => inner,
    }
}

fn resolve(base: Option<&Url>, href: &str) -> Option<String> {
    let href = href.trim();
    if href.is_empty() || href.starts_with('#') {
        return None;
    }
    let resolved = match base {
        Some(base) => base.join(href).ok()?,
        None => Url::parse(href).ok()?,
    };
    matches!(resolved.scheme(), "http" | "https").then(|| resolved.to_string())
}

fn is_feed_type(value: &str) -> bool {
    let mime = value.split(';').next().unwrap_or("").trim().to_ascii_lowercase();
    mime == "application/rss+xml" || mime == "application/atom+xml"
}

fn push_unique(out: &mut Vec<String>, url: String) {
    if !out.contains(&url) {
        out.push(url);
    }
}

/// Feeds advertised with `<link rel="alternate" type="application/rss+xml">`
/// (or the Atom type), in document order.
///
/// Matching ignores attribute order, quote style and case. Relative hrefs
/// are resolved against `base_url`.
pub fn discover_feeds_strict(html: &str, base_url: &str) -> Vec<String> {
    let base = Url::parse(base_url).ok();
    let mut out = Vec::new();
    for cap in LINK_TAG.captures_iter(html) {
        let attrs = attributes(tag_inner(&cap[1]));
        let is_alternate = attrs
            .get("rel")
            .is_some_and(|rel| rel.split_whitespace().any(|t| t.eq_ignore_ascii_case("alternate")));
        if !is_alternate || !attrs.get("type").is_some_and(|t| is_feed_type(t)) {
            continue;
        }
        if let Some(url) = attrs.get("href").and_then(|h| resolve(base.as_ref(), h)) {
            push_unique(&mut out, url);
        }
    }
    out
}

fn is_fallback_candidate(href: &str, text: &str, resolved: &str) -> bool {
    if href.to_ascii_lowercase().contains("rss") || text.to_lowercase().contains("rss") {
        return true;
    }
    Url::parse(resolved).is_ok_and(|u| {
        let path = u.path().to_ascii_lowercase();
        path.ends_with("/feed") || path.ends_with("/feed/")
    })
}

/// Looser matching for pages without a proper feed advertisement: any
/// `<a>` or `<link>` whose href or anchor text contains "rss", or whose
/// path ends in `/feed` or `/feed/`.
pub fn discover_feeds_fallback(html: &str, base_url: &str) -> Vec<String> {
    let base = Url::parse(base_url).ok();
    let mut candidates: Vec<(usize, String, String)> = Vec::new();
    for cap in ANCHOR.captures_iter(html) {
        let attrs = attributes(&cap[1]);
        if let Some(href) = attrs.get("href") {
            let text = strip_markup(&cap[2]);
            let start = cap.get(0).map_or(0, |m| m.start());
            candidates.push((start, href.clone(), text));
        }
    }
    for cap in LINK_TAG.captures_iter(html) {
        let attrs = attributes(tag_inner(&cap[1]));
        if let Some(href) = attrs.get("href") {
            let text = attrs.get("title").cloned().unwrap_or_default();
            let start = cap.get(0).map_or(0, |m| m.start());
            candidates.push((start, href.clone(), text));
        }
    }
    candidates.sort_by_key(|(start, _, _)| *start);

    let mut out = Vec::new();
    for (_, href, text) in candidates {
        let lowered = href.trim().to_ascii_lowercase();
        if lowered.starts_with("javascript:") || lowered.starts_with("mailto:") {
            continue;
        }
        let Some(resolved) = resolve(base.as_ref(), &href) else {
            continue;
        };
        if is_fallback_candidate(&href, &text, &resolved) {
            push_unique(&mut out, resolved);
        }
    }
    out
}

/// Strict discovery, falling back to the looser patterns when it finds
/// nothing.
pub fn discover_feeds(html: &str, base_url: &str) -> Vec<(String, LinkMethod)> {
    let strict = discover_feeds_strict(html, base_url);
    if !strict.is_empty() {
        return strict.into_iter().map(|u| (u, LinkMethod::Strict)).collect();
    }
    discover_feeds_fallback(html, base_url)
        .into_iter()
        .map(|u| (u, LinkMethod::Fallback))
        .collect()
}

#[derive(Debug, Clone, Default)]
pub struct DiscoveryOutcome {
    pub records: Vec<DiscoveryRecord>,
    pub rejected: Vec<RejectedRow>,
    /// Manual additions whose source URL was not in the input list.
    pub unmatched_manual: Vec<ManualAddition>,
}

/// Runs discovery over a CSV of blog URLs.
///
/// Emits exactly one record per deduplicated input URL, in input order.
/// Dead URLs get an empty link list; manual additions are merged into live
/// records after the automatically detected links.
pub fn run_discovery(
    csv_source: impl Read,
    client: &dyn HttpClient,
    manual_additions: &[ManualAddition],
    max_concurrency: usize,
) -> Result<DiscoveryOutcome, DiscoveryError> {
    let list = load_url_list(csv_source)?;
    let sources = normalize_and_dedupe(list.urls);

    let mut manual_by_source: HashMap<String, Vec<String>> = HashMap::new();
    let mut unmatched_manual = Vec::new();
    for addition in manual_additions {
        let key = SourceUrl::parse(&addition.source_url).map(|s| s.normalized);
        match key {
            Some(key) if sources.iter().any(|s| s.normalized == key) => {
                manual_by_source
                    .entry(key)
                    .or_default()
                    .push(addition.feed_url.trim().to_string());
            }
            _ => {
                warn!(source = %addition.source_url, "manual addition does not match any input URL");
                unmatched_manual.push(addition.clone());
            }
        }
    }

    let records = polite_map(
        &sources,
        max_concurrency,
        |s| host_key(&s.normalized),
        |source| discover_one(source, client, manual_by_source.get(&source.normalized)),
    );
    Ok(DiscoveryOutcome {
        records,
        rejected: list.rejected,
        unmatched_manual,
    })
}

fn discover_one(source: &SourceUrl, client: &dyn HttpClient, manual: Option<&Vec<String>>) -> DiscoveryRecord {
    let request_url = source.request_url();
    let response = match client.get(&request_url, &[]) {
        Ok(resp) => resp,
        Err(err) => {
            debug!(url = %source.raw, error = %err, "probe failed");
            return DiscoveryRecord::new(source.raw.clone(), None, None);
        }
    };
    let mut record = DiscoveryRecord::new(source.raw.clone(), Some(response.status), response.content_type.clone());
    if !(200..400).contains(&response.status) {
        debug!(url = %source.raw, status = response.status, "dead link");
        return record;
    }
    let html = String::from_utf8_lossy(&response.body);
    for (link, method) in discover_feeds(&html, &response.url) {
        record.add_link(link, method);
    }
    for feed in manual.into_iter().flatten() {
        if let Some(url) = parse_http_url(feed) {
            record.add_link(url.to_string(), LinkMethod::Manual);
        }
    }
    record
}
