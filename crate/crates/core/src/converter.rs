//! Conversion of parsed feeds into bibliographic container/item records.
//!
//! A feed becomes a `container` (the journal-like venue) and each of its
//! entries an `item` pointing back at it. Comment feeds and comment entries
//! are split off first and emitted separately.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use tracing::warn;
use url::Url;

use crate::dates::iso8601_opt;
use crate::fetcher::{FetchMetadata, METADATA_FILE};
use crate::languages::get_languages;
use crate::markup::strip_markup;
use crate::parser::{parse_feed_document, EntryRecord, FeedRecord};
use crate::url_norm::normalize_url;

/// Bumped whenever the id seed layout below changes.
pub const RECORD_ID_VERSION: &str = "v1";

/// Characters of the abstract used as a title when an entry has none.
pub const TITLE_FALLBACK_CHARS: usize = 80;

#[derive(Debug, Error)]
pub enum ConvertError {
    #[error("cannot read {path}: {message}")]
    Input { path: PathBuf, message: String },
}

/// A feed together with its entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsedFeed {
    pub feed: FeedRecord,
    pub entries: Vec<EntryRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedSnapshot {
    pub url: String,
    pub filename: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DumpParse {
    pub feeds: Vec<ParsedFeed>,
    pub skipped: Vec<SkippedSnapshot>,
}

/// Parses every snapshot listed in `<snapshot_dir>/metadata.json`.
///
/// Download URL and timestamp from the metadata are attached to each feed.
/// Missing or malformed snapshot files are skipped and reported.
pub fn parse_rss_dump(snapshot_dir: &Path) -> Result<DumpParse, ConvertError> {
    let meta_path = snapshot_dir.join(METADATA_FILE);
    let input_error = |message: String| ConvertError::Input {
        path: meta_path.clone(),
        message,
    };
    let text = fs::read_to_string(&meta_path).map_err(|e| input_error(e.to_string()))?;
    let metadata: Vec<FetchMetadata> = serde_json::from_str(&text).map_err(|e| input_error(e.to_string()))?;

    let mut dump = DumpParse::default();
    for meta in metadata {
        let skip = |reason: String| {
            warn!(url = %meta.url, file = %meta.filename, %reason, "skipping snapshot");
            SkippedSnapshot {
                url: meta.url.clone(),
                filename: meta.filename.clone(),
                reason,
            }
        };
        let bytes = match fs::read(snapshot_dir.join(&meta.filename)) {
            Ok(bytes) => bytes,
            Err(err) => {
                dump.skipped.push(skip(err.to_string()));
                continue;
            }
        };
        match parse_feed_document(&bytes, &meta.url) {
            Ok(doc) => {
                let mut feed = doc.feed;
                feed.fetched_at = Some(meta.timestamp);
                if doc.replaced_chars > 0 {
                    warn!(url = %meta.url, replaced = doc.replaced_chars, "undecodable bytes replaced");
                }
                dump.feeds.push(ParsedFeed {
                    feed,
                    entries: doc.entries,
                });
            }
            Err(err) => dump.skipped.push(skip(err.to_string())),
        }
    }
    Ok(dump)
}

fn has_comments_segment(url: &Url) -> bool {
    url.path_segments()
        .is_some_and(|mut segs| segs.any(|s| s.eq_ignore_ascii_case("comments")))
}

/// Comment feeds carry a `comments` path segment, which covers both the
/// `/comments/feed` and `/feed/comments` shapes.
pub fn is_comment_feed_url(rss_url: &str) -> bool {
    Url::parse(rss_url).is_ok_and(|u| has_comments_segment(&u))
}

/// Comment entries link to `#comment...` anchors or `comments` paths.
pub fn is_comment_entry_link(link: &str) -> bool {
    link.to_ascii_lowercase().contains("#comment") || Url::parse(link).is_ok_and(|u| has_comments_segment(&u))
}

/// Comment-side output: whole comment feeds, plus comment entries pulled out
/// of otherwise regular blog feeds.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CommentSide {
    pub feeds: Vec<ParsedFeed>,
    pub entries: Vec<EntryRecord>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SplitCorpus {
    pub blog: Vec<ParsedFeed>,
    pub comments: CommentSide,
}

/// Partitions feeds and entries into blog and comment data by URL shape.
pub fn split_comments(parsed: Vec<ParsedFeed>) -> SplitCorpus {
    let mut split = SplitCorpus::default();
    for feed in parsed {
        if is_comment_feed_url(&feed.feed.rss_url) {
            split.comments.feeds.push(feed);
            continue;
        }
        let (comments, posts): (Vec<_>, Vec<_>) = feed
            .entries
            .into_iter()
            .partition(|e| e.link.as_deref().is_some_and(is_comment_entry_link));
        split.comments.entries.extend(comments);
        split.blog.push(ParsedFeed {
            feed: feed.feed,
            entries: posts,
        });
    }
    split
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordKind {
    Container,
    Item,
}

/// Bibliographic record in the container/item template.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormalizedRecord {
    pub record_id: String,
    pub kind: RecordKind,
    pub title: String,
    #[serde(rename = "abstract")]
    pub abstract_text: Option<String>,
    pub authors: Vec<String>,
    pub languages: Vec<String>,
    pub urls: Vec<String>,
    #[serde(with = "iso8601_opt")]
    pub publication_date: Option<DateTime<Utc>>,
    pub keywords: Vec<String>,
    pub parent_record_id: Option<String>,
    pub source: String,
    /// Carried along for reference only; deliberately not turned into any
    /// popularity measure.
    #[serde(default)]
    pub comments_url: Option<String>,
}

pub const SOURCE_LITERAL: &str = "blog";

fn short_hash(seed: &str) -> String {
    Sha256::digest(seed.as_bytes())
        .iter()
        .take(8)
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// First 16 hex digits of SHA-256 over `v1|container|<normalized rss_url>`.
pub fn container_id(rss_url: &str) -> String {
    let key = normalize_url(rss_url).unwrap_or_else(|| rss_url.trim().to_string());
    short_hash(&format!("{RECORD_ID_VERSION}|container|{key}"))
}

/// First 16 hex digits of SHA-256 over `v1|item|<parent id>|<key>`, where key
/// is `id:<entry_id>`, else `link:<link>`, else `title:<title>`.
pub fn item_id(entry: &EntryRecord, parent_record_id: &str) -> String {
    let present = |v: &Option<String>| {
        v.as_deref()
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::to_string)
    };
    let key = match (present(&entry.entry_id), present(&entry.link)) {
        (Some(id), _) => format!("id:{id}"),
        (None, Some(link)) => format!("link:{link}"),
        (None, None) => format!("title:{}", present(&entry.title).unwrap_or_default()),
    };
    short_hash(&format!("{RECORD_ID_VERSION}|item|{parent_record_id}|{key}"))
}

fn display_text(value: Option<&str>) -> Option<String> {
    value.map(strip_markup).filter(|s| !s.is_empty())
}

fn non_blank(value: Option<&str>) -> Option<String> {
    value.map(str::trim).filter(|s| !s.is_empty()).map(str::to_string)
}

fn host_of(url: Option<&str>) -> Option<String> {
    let url = Url::parse(url?.trim()).ok()?;
    url.host_str().map(str::to_string)
}

pub fn convert_feed(feed: &FeedRecord) -> NormalizedRecord {
    let title = display_text(feed.title.as_deref())
        .or_else(|| host_of(feed.blog_url.as_deref()))
        .or_else(|| host_of(Some(&feed.rss_url)))
        .unwrap_or_else(|| feed.rss_url.clone());
    let mut urls = Vec::new();
    for url in [non_blank(feed.blog_url.as_deref()), non_blank(Some(&feed.rss_url))]
        .into_iter()
        .flatten()
    {
        if !urls.contains(&url) {
            urls.push(url);
        }
    }
    NormalizedRecord {
        record_id: container_id(&feed.rss_url),
        kind: RecordKind::Container,
        title,
        abstract_text: display_text(feed.subtitle.as_deref()),
        authors: Vec::new(),
        languages: get_languages(feed.language.as_deref()),
        urls,
        publication_date: feed.last_updated,
        keywords: Vec::new(),
        parent_record_id: None,
        source: SOURCE_LITERAL.to_string(),
        comments_url: None,
    }
}

/// Converts an entry. The abstract comes from the summary only; `content`
/// is never consulted.
pub fn convert_entry(entry: &EntryRecord, parent: &NormalizedRecord) -> NormalizedRecord {
    debug_assert_eq!(parent.kind, RecordKind::Container);
    let abstract_text = display_text(entry.summary.as_deref());
    let link = non_blank(entry.link.as_deref());
    let title = display_text(entry.title.as_deref())
        .or_else(|| {
            abstract_text.as_ref().map(|a| {
                a.chars()
                    .take(TITLE_FALLBACK_CHARS)
                    .collect::<String>()
                    .trim_end()
                    .to_string()
            })
        })
        .or_else(|| link.clone())
        .unwrap_or_default();
    let languages = match get_languages(entry.language.as_deref()) {
        langs if langs.is_empty() => parent.languages.clone(),
        langs => langs,
    };
    NormalizedRecord {
        record_id: item_id(entry, &parent.record_id),
        kind: RecordKind::Item,
        title,
        abstract_text,
        authors: entry.authors.clone(),
        languages,
        urls: link.into_iter().collect(),
        publication_date: entry.publication_date,
        keywords: entry.tags.clone(),
        parent_record_id: Some(parent.record_id.clone()),
        source: SOURCE_LITERAL.to_string(),
        comments_url: non_blank(entry.comments_url.as_deref()),
    }
}

fn convert_feeds(feeds: &[ParsedFeed], out: &mut Vec<NormalizedRecord>) {
    for parsed in feeds {
        let container = convert_feed(&parsed.feed);
        out.extend(parsed.entries.iter().map(|e| convert_entry(e, &container)));
        out.push(container);
    }
}

fn sort_records(records: &mut [NormalizedRecord]) {
    records.sort_by(|a, b| a.record_id.cmp(&b.record_id));
}

/// Records ready for serialization, each list sorted by record id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Conversion {
    pub records: Vec<NormalizedRecord>,
    pub comments: Vec<NormalizedRecord>,
}

/// Converts a split corpus. Comment entries taken out of blog feeds point at
/// their blog's container, which lives in `records`.
pub fn convert_split(split: &SplitCorpus, all: &[ParsedFeed]) -> Conversion {
    let mut records = Vec::new();
    convert_feeds(&split.blog, &mut records);

    let mut comments = Vec::new();
    convert_feeds(&split.comments.feeds, &mut comments);
    for entry in &split.comments.entries {
        let parent = all
            .iter()
            .find(|p| p.feed.rss_url == entry.parent_rss_url)
            .map(|p| convert_feed(&p.feed))
            .unwrap_or_else(|| {
                convert_feed(&FeedRecord {
                    title: None,
                    subtitle: None,
                    blog_url: None,
                    rss_url: entry.parent_rss_url.clone(),
                    last_updated: None,
                    last_updated_raw: None,
                    language: None,
                    fetched_at: None,
                })
            });
        comments.push(convert_entry(entry, &parent));
    }
    sort_records(&mut records);
    sort_records(&mut comments);
    Conversion { records, comments }
}

/// Parse, split and convert a snapshot directory in one go.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConvertRun {
    pub parsed: DumpParse,
    pub conversion: Conversion,
}

pub fn run_convert(snapshot_dir: &Path) -> Result<ConvertRun, ConvertError> {
    let parsed = parse_rss_dump(snapshot_dir)?;
    let split = split_comments(parsed.feeds.clone());
    let conversion = convert_split(&split, &parsed.feeds);
    Ok(ConvertRun { parsed, conversion })
}
