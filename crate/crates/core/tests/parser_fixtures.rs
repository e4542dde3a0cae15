use std::fs;
use std::path::PathBuf;

use feedpipe::parser::{parse_feed_document, EntryRecord, FeedRecord};
use proptest::prelude::*;
use serde_json::Value;

fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/feeds")
}

/// Each `<name>.xml` is parsed as if downloaded from `https://fixture.test/<name>/feed/`
/// and compared with `<name>.expected.json`. Set `BLESS=1` to rewrite them.
#[test]
fn fixture_corpus_matches_expected_output() {
    let mut checked = 0;
    for entry in fs::read_dir(fixture_dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().and_then(|e| e.to_str()) != Some("xml") {
            continue;
        }
        let name = path.file_stem().unwrap().to_string_lossy().to_string();
        let doc =
            parse_feed_document(&fs::read(&path).unwrap(), &format!("https://fixture.test/{name}/feed/")).unwrap();
        let actual = serde_json::json!({
            "format": doc.format,
            "feed": doc.feed,
            "entries": doc.entries,
        });
        let expected_path = path.with_extension("expected.json");
        if std::env::var_os("BLESS").is_some() {
            fs::write(&expected_path, serde_json::to_string_pretty(&actual).unwrap() + "\n").unwrap();
        }
        let expected: Value = serde_json::from_str(&fs::read_to_string(&expected_path).unwrap()).unwrap();
        assert_eq!(actual, expected, "fixture {name}");
        checked += 1;
    }
    assert_eq!(checked, 3);
}

/// Channel children of a complete RSS fixture, paired with the field each one fills.
const CHANNEL: [(&str, &str); 5] = [
    ("<title>PoliSciZurich</title>", "title"),
    (
        "<description>A blog by political scientists in Zurich</description>",
        "subtitle",
    ),
    ("<link>https://poliscizurich.wordpress.com</link>", "blog_url"),
    (
        "<lastBuildDate>Wed, 17 Aug 2016 03:54:00 +0000</lastBuildDate>",
        "last_updated",
    ),
    ("<language>en-US</language>", "language"),
];

const ITEM: [(&str, &str); 9] = [
    ("<title>Post</title>", "title"),
    ("<guid>https://blogs.lse.ac.uk/usappblog/?p=47109</guid>", "entry_id"),
    ("<link>https://blogs.lse.ac.uk/usappblog/2022/11/16/x/</link>", "link"),
    ("<pubDate>2022-11-16 09:57:58</pubDate>", "publication_date"),
    ("<dc:creator>Blog</dc:creator>", "authors"),
    ("<description>Summary</description>", "summary"),
    ("<content:encoded>&lt;p&gt;Body&lt;/p&gt;</content:encoded>", "content"),
    ("<category>Elections</category>", "tags"),
    (
        "<comments>https://blogs.lse.ac.uk/usappblog/2022/11/16/x/#comments</comments>",
        "comments_url",
    ),
];

fn build(skip_channel: Option<usize>, skip_item: Option<usize>, items: usize) -> String {
    let channel: String = CHANNEL
        .iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != skip_channel)
        .map(|(_, (xml, _))| *xml)
        .collect();
    let item: String = ITEM
        .iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != skip_item)
        .map(|(_, (xml, _))| *xml)
        .collect();
    format!(
        r#"<rss version="2.0" xmlns:dc="http://purl.org/dc/elements/1.1/" xmlns:content="http://purl.org/rss/1.0/modules/content/"><channel>{channel}{}</channel></rss>"#,
        format!("<item>{item}</item>").repeat(items)
    )
}

fn feed_fields(feed: &FeedRecord) -> Vec<(&'static str, bool)> {
    vec![
        ("title", feed.title.is_some()),
        ("subtitle", feed.subtitle.is_some()),
        ("blog_url", feed.blog_url.is_some()),
        ("last_updated", feed.last_updated.is_some()),
        ("language", feed.language.is_some()),
    ]
}

fn entry_fields(entry: &EntryRecord) -> Vec<(&'static str, bool)> {
    vec![
        ("title", entry.title.is_some()),
        ("entry_id", entry.entry_id.is_some()),
        ("link", entry.link.is_some()),
        ("publication_date", entry.publication_date.is_some()),
        ("authors", !entry.authors.is_empty()),
        ("summary", entry.summary.is_some()),
        ("content", entry.content.is_some()),
        ("tags", !entry.tags.is_empty()),
        ("comments_url", entry.comments_url.is_some()),
    ]
}

#[test]
fn removing_one_element_clears_exactly_that_field() {
    let url = "https://example.org/feed/";
    let full = parse_feed_document(build(None, None, 1).as_bytes(), url).unwrap();
    assert!(feed_fields(&full.feed).iter().all(|(_, present)| *present));
    assert!(entry_fields(&full.entries[0]).iter().all(|(_, present)| *present));

    for (idx, (_, field)) in CHANNEL.iter().enumerate() {
        let doc = parse_feed_document(build(Some(idx), None, 1).as_bytes(), url).unwrap();
        for (name, present) in feed_fields(&doc.feed) {
            assert_eq!(present, name != *field, "dropping {field} affected {name}");
        }
        assert_eq!(doc.entries, full.entries);
    }
    for (idx, (_, field)) in ITEM.iter().enumerate() {
        let doc = parse_feed_document(build(None, Some(idx), 1).as_bytes(), url).unwrap();
        for (name, present) in entry_fields(&doc.entries[0]) {
            assert_eq!(present, name != *field, "dropping {field} affected {name}");
        }
        assert_eq!(doc.feed, full.feed);
    }
}

proptest! {
    #[test]
    fn entry_count_is_conserved(items in 0usize..40, atom in any::<bool>()) {
        let xml = if atom {
            format!(
                r#"<feed xmlns="http://www.w3.org/2005/Atom"><title>t</title>{}</feed>"#,
                "<entry><title>e</title></entry>".repeat(items)
            )
        } else {
            build(None, None, items)
        };
        let doc = parse_feed_document(xml.as_bytes(), "https://example.org/feed/").unwrap();
        prop_assert_eq!(doc.entries.len(), items);
        for e in &doc.entries {
            prop_assert_eq!(&e.parent_rss_url, "https://example.org/feed/");
            prop_assert!(e.tags.iter().all(|t| !t.is_empty()));
        }
    }
}
