//! Metadata-quality measurements and time-bucketed tag counts.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use chrono::{DateTime, Datelike, Months, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use crate::converter::{container_id, item_id, NormalizedRecord, ParsedFeed, RecordKind};
use crate::markup::{contains_markup, strip_markup};
use crate::parser::{EntryRecord, FeedRecord};

pub const FEED_FIELDS: [&str; 6] = ["title", "subtitle", "blog url", "rss url", "last updated", "language"];
pub const ENTRY_FIELDS: [&str; 9] = [
    "title",
    "id",
    "link",
    "publication date",
    "authors",
    "summary",
    "content",
    "tags",
    "comments",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Feed,
    Entry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldInclusion {
    pub field: String,
    pub included: usize,
    /// Percentage with one decimal, rounded half up; `None` on an empty corpus.
    pub percentage: Option<f64>,
    /// Date fields only: values that were present but did not parse.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub unparseable: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InclusionReport {
    pub level: Level,
    pub denominator: usize,
    pub fields: Vec<FieldInclusion>,
}

impl InclusionReport {
    pub fn percentage(&self, field: &str) -> Option<f64> {
        self.fields.iter().find(|f| f.field == field).and_then(|f| f.percentage)
    }
}

/// `included / denominator * 100`, rounded half up to one decimal.
pub fn percentage(included: usize, denominator: usize) -> Option<f64> {
    if denominator == 0 {
        return None;
    }
    let tenths = (included as u128 * 2000 + denominator as u128) / (2 * denominator as u128);
    Some(tenths as f64 / 10.0)
}

fn filled(value: &Option<String>) -> bool {
    value.as_deref().is_some_and(|v| !v.trim().is_empty())
}

fn any_filled(values: &[String]) -> bool {
    values.iter().any(|v| !v.trim().is_empty())
}

fn unparseable(raw: &Option<String>, parsed: &Option<DateTime<Utc>>) -> bool {
    filled(raw) && parsed.is_none()
}

/// Per field: (present, present-but-unparseable).
fn feed_presence(f: &FeedRecord) -> [(bool, bool); 6] {
    [
        (filled(&f.title), false),
        (filled(&f.subtitle), false),
        (filled(&f.blog_url), false),
        (!f.rss_url.trim().is_empty(), false),
        (
            filled(&f.last_updated_raw) || f.last_updated.is_some(),
            unparseable(&f.last_updated_raw, &f.last_updated),
        ),
        (filled(&f.language), false),
    ]
}

fn entry_presence(e: &EntryRecord) -> [(bool, bool); 9] {
    [
        (filled(&e.title), false),
        (filled(&e.entry_id), false),
        (filled(&e.link), false),
        (
            filled(&e.publication_date_raw) || e.publication_date.is_some(),
            unparseable(&e.publication_date_raw, &e.publication_date),
        ),
        (any_filled(&e.authors), false),
        (filled(&e.summary), false),
        (filled(&e.content), false),
        (any_filled(&e.tags), false),
        (filled(&e.comments_url), false),
    ]
}

fn build_report<const N: usize>(
    level: Level,
    names: [&str; N],
    date_field: usize,
    rows: impl Iterator<Item = [(bool, bool); N]>,
) -> InclusionReport {
    let mut included = [0usize; N];
    let mut broken = [0usize; N];
    let mut denominator = 0;
    for row in rows {
        denominator += 1;
        for (i, (present, bad)) in row.iter().enumerate() {
            included[i] += usize::from(*present);
            broken[i] += usize::from(*bad);
        }
    }
    let fields = names
        .iter()
        .enumerate()
        .map(|(i, name)| FieldInclusion {
            field: name.to_string(),
            included: included[i],
            percentage: percentage(included[i], denominator),
            unparseable: (i == date_field).then_some(broken[i]),
        })
        .collect();
    InclusionReport {
        level,
        denominator,
        fields,
    }
}

/// Share of records in which each field is present and non-empty after
/// trimming. Date fields count as present when their text exists, whether
/// or not it parsed; unparseable ones are counted alongside.
pub fn inclusion_rates(corpus: &[ParsedFeed], level: Level) -> InclusionReport {
    match level {
        Level::Feed => build_report(level, FEED_FIELDS, 4, corpus.iter().map(|p| feed_presence(&p.feed))),
        Level::Entry => build_report(
            level,
            ENTRY_FIELDS,
            3,
            corpus.iter().flat_map(|p| p.entries.iter()).map(entry_presence),
        ),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QualityFlagKind {
    OverlongSubtitle,
    OverlongTitle,
    PlaceholderTitle,
    MarkupInContent,
    UnparseableDate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QualityFlag {
    pub record_id: String,
    pub flag: QualityFlagKind,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QualityThresholds {
    pub subtitle_chars: usize,
    pub title_chars: usize,
}

impl Default for QualityThresholds {
    fn default() -> Self {
        Self {
            subtitle_chars: 300,
            title_chars: 200,
        }
    }
}

pub const PLACEHOLDER_TITLES: [&str; 3] = ["not available", "no title", "untitled"];

fn title_flags(record_id: &str, title: Option<&str>, limits: &QualityThresholds, out: &mut Vec<QualityFlag>) {
    let Some(title) = title else { return };
    let len = title.chars().count();
    if len > limits.title_chars {
        out.push(QualityFlag {
            record_id: record_id.to_string(),
            flag: QualityFlagKind::OverlongTitle,
            detail: format!("title has {len} characters (limit {})", limits.title_chars),
        });
    }
    let trimmed = title.trim();
    if PLACEHOLDER_TITLES.iter().any(|p| trimmed.eq_ignore_ascii_case(p)) {
        out.push(QualityFlag {
            record_id: record_id.to_string(),
            flag: QualityFlagKind::PlaceholderTitle,
            detail: format!("title is {trimmed:?}"),
        });
    }
}

fn date_flag(record_id: &str, raw: &Option<String>, parsed: &Option<DateTime<Utc>>, out: &mut Vec<QualityFlag>) {
    if unparseable(raw, parsed) {
        out.push(QualityFlag {
            record_id: record_id.to_string(),
            flag: QualityFlagKind::UnparseableDate,
            detail: format!("cannot parse {:?}", raw.as_deref().unwrap_or_default()),
        });
    }
}

/// Flags the anomalies seen in real blog feeds: overlong subtitles and
/// titles, placeholder titles, raw markup in content and dates that exist
/// but do not parse. Record ids match the converter's.
pub fn quality_flags(corpus: &[ParsedFeed], limits: &QualityThresholds) -> Vec<QualityFlag> {
    let mut out = Vec::new();
    for parsed in corpus {
        let feed = &parsed.feed;
        let feed_id = container_id(&feed.rss_url);
        if let Some(subtitle) = &feed.subtitle {
            let len = subtitle.chars().count();
            if len > limits.subtitle_chars {
                out.push(QualityFlag {
                    record_id: feed_id.clone(),
                    flag: QualityFlagKind::OverlongSubtitle,
                    detail: format!("subtitle has {len} characters (limit {})", limits.subtitle_chars),
                });
            }
        }
        title_flags(&feed_id, feed.title.as_deref(), limits, &mut out);
        date_flag(&feed_id, &feed.last_updated_raw, &feed.last_updated, &mut out);

        for entry in &parsed.entries {
            let id = item_id(entry, &feed_id);
            title_flags(&id, entry.title.as_deref(), limits, &mut out);
            if entry.content.as_deref().is_some_and(contains_markup) {
                out.push(QualityFlag {
                    record_id: id.clone(),
                    flag: QualityFlagKind::MarkupInContent,
                    detail: "content contains HTML tags".to_string(),
                });
            }
            date_flag(&id, &entry.publication_date_raw, &entry.publication_date, &mut out);
        }
    }
    out
}

/// One dated (or undated) entry as seen by the timeline.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimelineEntry {
    pub date: Option<DateTime<Utc>>,
    pub tags: Vec<String>,
    /// Title and abstract, markup stripped.
    pub text: String,
}

impl TimelineEntry {
    pub fn from_entry(entry: &EntryRecord) -> Self {
        let text = [entry.title.as_deref(), entry.summary.as_deref()]
            .into_iter()
            .flatten()
            .map(strip_markup)
            .collect::<Vec<_>>()
            .join(" ");
        Self {
            date: entry.publication_date,
            tags: entry.tags.clone(),
            text,
        }
    }

    /// `None` for container records.
    pub fn from_record(record: &NormalizedRecord) -> Option<Self> {
        (record.kind == RecordKind::Item).then(|| Self {
            date: record.publication_date,
            tags: record.keywords.clone(),
            text: format!(
                "{} {}",
                record.title,
                record.abstract_text.as_deref().unwrap_or_default()
            ),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TimeBucketReport {
    pub key: String,
    pub bucket_start: NaiveDate,
    pub count: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timeline {
    pub rows: Vec<TimeBucketReport>,
    /// Entries left out because they carry no publication date.
    pub undated: usize,
}

/// Start of the two-month bucket holding `date`: Jan 1, Mar 1, ... Nov 1.
pub fn bucket_start(date: NaiveDate) -> NaiveDate {
    let month = (date.month0() / 2) * 2 + 1;
    NaiveDate::from_ymd_opt(date.year(), month, 1).expect("first of an existing month")
}

/// Counts entries per key and two-month bucket.
///
/// Without `keys`, every distinct tag is a key and matches entries carrying
/// exactly that tag. With `keys`, a key matches entries whose title or
/// abstract contains it, or which carry it as a tag, ignoring case. Every
/// key gets a row for every bucket between the corpus's first and last
/// dated entry, zero counts included.
pub fn tags_over_time(entries: &[TimelineEntry], keys: Option<&[String]>) -> Timeline {
    let undated = entries.iter().filter(|e| e.date.is_none()).count();
    let dated: Vec<(NaiveDate, &TimelineEntry)> = entries
        .iter()
        .filter_map(|e| e.date.map(|d| (bucket_start(d.date_naive()), e)))
        .collect();
    let (Some(first), Some(last)) = (dated.iter().map(|(b, _)| *b).min(), dated.iter().map(|(b, _)| *b).max()) else {
        return Timeline {
            rows: Vec::new(),
            undated,
        };
    };
    let mut span = Vec::new();
    let mut cursor = first;
    while cursor <= last {
        span.push(cursor);
        cursor = cursor + Months::new(2);
    }

    let mut counts: BTreeMap<(String, NaiveDate), usize> = BTreeMap::new();
    let key_list: Vec<String> = match keys {
        Some(keys) => keys
            .iter()
            .map(|k| k.trim().to_string())
            .filter(|k| !k.is_empty())
            .collect(),
        None => dated
            .iter()
            .flat_map(|(_, e)| e.tags.iter().map(|t| t.trim().to_string()))
            .filter(|t| !t.is_empty())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect(),
    };
    for key in &key_list {
        let needle = key.to_lowercase();
        for bucket in &span {
            counts.insert((key.clone(), *bucket), 0);
        }
        for (bucket, entry) in &dated {
            let hit = match keys {
                None => entry.tags.iter().any(|t| t.trim() == key),
                Some(_) => {
                    entry.text.to_lowercase().contains(&needle)
                        || entry.tags.iter().any(|t| t.trim().to_lowercase() == needle)
                }
            };
            if hit {
                *counts.get_mut(&(key.clone(), *bucket)).unwrap() += 1;
            }
        }
    }
    let rows = counts
        .into_iter()
        .map(|((key, bucket_start), count)| TimeBucketReport {
            key,
            bucket_start,
            count,
        })
        .collect();
    Timeline { rows, undated }
}

/// Writes `key,bucket_start,count` rows.
pub fn write_timeline_csv(rows: &[TimeBucketReport], out: impl Write) -> csv::Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(["key", "bucket_start", "count"])?;
    for row in rows {
        writer.write_record([
            row.key.as_str(),
            &row.bucket_start.format("%Y-%m-%d").to_string(),
            &row.count.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}
