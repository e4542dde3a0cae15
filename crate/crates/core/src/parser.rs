//! RSS 2.0 and Atom parsing into feed- and entry-level records.
//!
//! Absent elements become absent fields; only a document that is not
//! well-formed, or whose root is neither `rss` nor an Atom `feed`, fails.

use std::borrow::Cow;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dates::{iso8601_opt, parse_datetime};
use crate::xml_tree::{parse_document, Element, XML_NS};

const ATOM_NS: &str = "http://www.w3.org/2005/Atom";
const DC_NS: &str = "http://purl.org/dc/elements/1.1/";
const CONTENT_NS: &str = "http://purl.org/rss/1.0/modules/content/";

/// Feed-level metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedRecord {
    pub title: Option<String>,
    pub subtitle: Option<String>,
    pub blog_url: Option<String>,
    /// Where the snapshot was downloaded from; provenance, never parsed.
    pub rss_url: String,
    #[serde(with = "iso8601_opt")]
    pub last_updated: Option<DateTime<Utc>>,
    /// The date text as it appeared, kept so unparseable dates can be reported.
    pub last_updated_raw: Option<String>,
    pub language: Option<String>,
    #[serde(default, with = "iso8601_opt")]
    pub fetched_at: Option<DateTime<Utc>>,
}

/// Entry-level metadata for one item or Atom entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryRecord {
    pub title: Option<String>,
    pub entry_id: Option<String>,
    pub link: Option<String>,
    #[serde(with = "iso8601_opt")]
    pub publication_date: Option<DateTime<Utc>>,
    pub publication_date_raw: Option<String>,
    pub authors: Vec<String>,
    pub summary: Option<String>,
    pub content: Option<String>,
    pub tags: Vec<String>,
    pub comments_url: Option<String>,
    /// Entry-level language override (`xml:lang` or `dc:language`).
    pub language: Option<String>,
    pub parent_rss_url: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeedFormat {
    Rss,
    Atom,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedDocument {
    pub format: FeedFormat,
    pub feed: FeedRecord,
    pub entries: Vec<EntryRecord>,
    /// Bytes that could not be decoded in the declared encoding and were
    /// replaced with U+FFFD.
    pub replaced_chars: usize,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("malformed XML at byte {offset}: {message}")]
    Malformed { offset: u64, message: String },
    #[error("unsupported feed format with root element <{root}>")]
    UnsupportedFormat { root: String },
}

/// Parses a raw snapshot body downloaded from `rss_url`.
pub fn parse_feed_document(xml: &[u8], rss_url: &str) -> Result<ParsedDocument, ParseError> {
    let (text, replaced_chars) = decode(xml);
    let root = parse_document(&text).map_err(|e| ParseError::Malformed {
        offset: e.offset,
        message: e.message,
    })?;

    let (format, feed, entries) = if root.is(None, "rss") {
        let channel = root
            .child(None, "channel")
            .ok_or_else(|| ParseError::UnsupportedFormat {
                root: "rss (without channel)".into(),
            })?;
        let feed = rss_feed(channel, rss_url);
        let entries = channel
            .children_named(None, "item")
            .map(|item| rss_entry(item, rss_url))
            .collect();
        (FeedFormat::Rss, feed, entries)
    } else if root.local == "feed" && (root.ns.as_deref() == Some(ATOM_NS) || root.ns.is_none()) {
        let ns = root.ns.as_deref();
        let feed = atom_feed(&root, ns, rss_url);
        let entries = root
            .children_named(ns, "entry")
            .map(|entry| atom_entry(entry, ns, rss_url))
            .collect();
        (FeedFormat::Atom, feed, entries)
    } else {
        return Err(ParseError::UnsupportedFormat {
            root: root.local.clone(),
        });
    };

    Ok(ParsedDocument {
        format,
        feed,
        entries,
        replaced_chars,
    })
}

/// Decodes `bytes` using the BOM or the XML declaration, defaulting to UTF-8.
fn decode(bytes: &[u8]) -> (Cow<'_, str>, usize) {
    let (encoding, body) = match encoding_rs::Encoding::for_bom(bytes) {
        Some((enc, bom_len)) => (enc, &bytes[bom_len..]),
        None => (declared_encoding(bytes).unwrap_or(encoding_rs::UTF_8), bytes),
    };
    let (text, had_errors) = encoding.decode_without_bom_handling(body);
    let replaced = if had_errors {
        text.chars().filter(|&c| c == char::REPLACEMENT_CHARACTER).count()
    } else {
        0
    };
    (text, replaced)
}

fn declared_encoding(bytes: &[u8]) -> Option<&'static encoding_rs::Encoding> {
    let head = &bytes[..bytes.len().min(256)];
    let head = String::from_utf8_lossy(head);
    let decl = head.trim_start().strip_prefix("<?xml")?;
    let decl = &decl[..decl.find("?>")?];
    let pos = decl.find("encoding")?;
    let rest = decl[pos + "encoding".len()..]
        .trim_start()
        .strip_prefix('=')?
        .trim_start();
    let quote = rest.chars().next().filter(|c| *c == '"' || *c == '\'')?;
    let value = &rest[1..];
    let label = &value[..value.find(quote)?];
    encoding_rs::Encoding::for_label(label.trim().as_bytes())
}

fn child_text(parent: &Element, ns: Option<&str>, local: &str) -> Option<String> {
    parent.child(ns, local).map(Element::text)
}

fn date_field(parent: &Element, ns: Option<&str>, local: &str) -> (Option<DateTime<Utc>>, Option<String>) {
    let raw = child_text(parent, ns, local);
    (raw.as_deref().and_then(parse_datetime), raw)
}

fn non_empty(values: impl Iterator<Item = String>) -> Vec<String> {
    values.filter(|v| !v.trim().is_empty()).collect()
}

fn rss_feed(channel: &Element, rss_url: &str) -> FeedRecord {
    let (last_updated, last_updated_raw) = date_field(channel, None, "lastBuildDate");
    FeedRecord {
        title: child_text(channel, None, "title"),
        subtitle: child_text(channel, None, "description"),
        blog_url: child_text(channel, None, "link"),
        rss_url: rss_url.to_string(),
        last_updated,
        last_updated_raw,
        language: child_text(channel, None, "language"),
        fetched_at: None,
    }
}

fn rss_entry(item: &Element, rss_url: &str) -> EntryRecord {
    let (publication_date, publication_date_raw) = date_field(item, None, "pubDate");
    let authors = item
        .elements()
        .filter(|e| e.is(None, "author") || e.is(Some(DC_NS), "creator"))
        .map(Element::text);
    EntryRecord {
        title: child_text(item, None, "title"),
        entry_id: child_text(item, None, "guid"),
        link: child_text(item, None, "link"),
        publication_date,
        publication_date_raw,
        authors: non_empty(authors),
        summary: child_text(item, None, "description"),
        content: child_text(item, Some(CONTENT_NS), "encoded"),
        tags: non_empty(item.children_named(None, "category").map(Element::text)),
        comments_url: child_text(item, None, "comments"),
        language: child_text(item, Some(DC_NS), "language")
            .or_else(|| item.attr(Some(XML_NS), "lang").map(str::to_string)),
        parent_rss_url: rss_url.to_string(),
    }
}

/// Atom text constructs: inline XHTML keeps its markup, everything else is text.
fn atom_text(el: &Element) -> String {
    if el.attr(None, "type") == Some("xhtml") {
        el.inner_markup()
    } else {
        el.text()
    }
}

fn atom_link(parent: &Element, ns: Option<&str>, rel: &str) -> Option<String> {
    parent
        .children_named(ns, "link")
        .find(|l| l.attr(None, "rel").unwrap_or("alternate").eq_ignore_ascii_case(rel))
        .and_then(|l| l.attr(None, "href"))
        .map(|h| h.trim().to_string())
}

fn atom_feed(root: &Element, ns: Option<&str>, rss_url: &str) -> FeedRecord {
    let (last_updated, last_updated_raw) = date_field(root, ns, "updated");
    FeedRecord {
        title: root.child(ns, "title").map(atom_text),
        subtitle: root.child(ns, "subtitle").map(atom_text),
        blog_url: atom_link(root, ns, "alternate"),
        rss_url: rss_url.to_string(),
        last_updated,
        last_updated_raw,
        language: root.attr(Some(XML_NS), "lang").map(str::to_string),
        fetched_at: None,
    }
}

fn atom_entry(entry: &Element, ns: Option<&str>, rss_url: &str) -> EntryRecord {
    let (publication_date, publication_date_raw) = date_field(entry, ns, "published");
    let authors = entry.children_named(ns, "author").map(|a| match a.child(ns, "name") {
        Some(name) => name.text(),
        None => a.text(),
    });
    let tags = entry
        .children_named(ns, "category")
        .filter_map(|c| c.attr(None, "term").or_else(|| c.attr(None, "label")))
        .map(|t| t.trim().to_string());
    EntryRecord {
        title: entry.child(ns, "title").map(atom_text),
        entry_id: child_text(entry, ns, "id"),
        link: atom_link(entry, ns, "alternate"),
        publication_date,
        publication_date_raw,
        authors: non_empty(authors),
        summary: entry.child(ns, "summary").map(atom_text),
        content: entry.child(ns, "content").map(atom_text),
        tags: non_empty(tags),
        comments_url: atom_link(entry, ns, "replies"),
        language: entry.attr(Some(XML_NS), "lang").map(str::to_string),
        parent_rss_url: rss_url.to_string(),
    }
}
