mod common;

use std::time::Duration;

use common::{refused_url, MockResponse, MockServer};
use feedpipe::discovery::{
    discover_feeds_fallback, discover_feeds_strict, normalize_and_dedupe, probe_url, run_discovery, LinkMethod,
    ManualAddition, SourceUrl,
};
use feedpipe::http::UreqClient;
use proptest::prelude::*;

fn client() -> UreqClient {
    UreqClient::new(Duration::from_secs(5), "feedpipe-test")
}

fn page_with_feed(href: &str) -> String {
    format!(r#"<html><head><link rel="alternate" type="application/rss+xml" href="{href}"></head></html>"#)
}

#[test]
fn probe_examples() {
    let server = MockServer::start();
    server.route("/ok", vec![MockResponse::html("hi")]);
    server.route("/moved", vec![MockResponse::redirect("/ok")]);
    let client = client();
    let probe = |url: &str| probe_url(&SourceUrl::parse(url).unwrap(), &client);
    assert_eq!(probe(&server.url("/ok")), (true, Some(200)));
    assert_eq!(probe(&server.url("/moved")), (true, Some(200)));
    assert_eq!(probe(&server.url("/nothing")), (false, Some(404)));
    assert_eq!(probe(&refused_url()), (false, None));
}

#[test]
fn run_discovery_examples() {
    let server = MockServer::start();
    server.route("/one", vec![MockResponse::html(page_with_feed("/one/feed/"))]);
    server.route("/two", vec![MockResponse::html(page_with_feed("feed.xml"))]);
    server.route("/bare", vec![MockResponse::html("<html>nothing here</html>")]);
    let csv = format!(
        "url\n{}\n{}\n{}/\n{}\n{}\n",
        server.url("/one"),
        server.url("/two"),
        server.url("/one"),
        server.url("/dead"),
        server.url("/bare"),
    );
    let manual = vec![
        ManualAddition {
            source_url: server.url("/bare"),
            feed_url: server.url("/bare/hidden.rss"),
        },
        ManualAddition {
            source_url: "https://unknown.example".into(),
            feed_url: "https://unknown.example/f".into(),
        },
    ];
    let outcome = run_discovery(csv.as_bytes(), &client(), &manual, 4).unwrap();
    let records = outcome.records;
    assert_eq!(records.len(), 4, "duplicate /one collapses");

    assert_eq!(records[0].url, server.url("/one"));
    assert_eq!(records[0].rss_links, vec![server.url("/one/feed/")]);
    assert_eq!(records[0].rss_link_methods, vec![LinkMethod::Strict]);
    assert_eq!(records[0].content_type.as_deref(), Some("text/html; charset=UTF-8"));
    assert_eq!(records[1].rss_links, vec![server.url("/feed.xml")]);

    assert_eq!(records[2].status, Some(404));
    assert!(records[2].rss_links.is_empty());

    assert_eq!(records[3].rss_links, vec![server.url("/bare/hidden.rss")]);
    assert_eq!(records[3].rss_link_methods, vec![LinkMethod::Manual]);
    assert_eq!(outcome.unmatched_manual.len(), 1);
}

#[test]
fn transport_failure_is_recorded() {
    let csv = refused_url();
    let outcome = run_discovery(csv.as_bytes(), &client(), &[], 1).unwrap();
    assert_eq!(outcome.records.len(), 1);
    assert_eq!(outcome.records[0].status, None);
    assert!(outcome.records[0].rss_links.is_empty());
}

/// Renders a feed `<link>` with attributes in the given order and style.
fn render_link(order: &[usize], double_quotes: bool, upper: bool, href: &str) -> String {
    let attrs = [("rel", "alternate"), ("type", "application/rss+xml"), ("href", href)];
    let q = if double_quotes { '"' } else { '\'' };
    let body: Vec<String> = order
        .iter()
        .map(|&i| {
            let (name, value) = attrs[i];
            let name = if upper { name.to_uppercase() } else { name.to_string() };
            format!("{name}={q}{value}{q}")
        })
        .collect();
    let tag = if upper { "LINK" } else { "link" };
    format!(
        "<html><head><{tag} {}></head><body><a href=\"/about\">About</a></body></html>",
        body.join(" ")
    )
}

proptest! {
    #[test]
    fn strict_is_invariant_to_markup_style(
        order in Just(vec![0usize, 1, 2]).prop_shuffle(),
        double_quotes in any::<bool>(),
        upper in any::<bool>(),
        href in prop_oneof![Just("/feed/"), Just("https://example.org/rss.xml"), Just("atom?x=1")],
    ) {
        let reference = discover_feeds_strict(&render_link(&[0, 1, 2], true, false, href), "https://example.org/blog/");
        let variant = discover_feeds_strict(&render_link(&order, double_quotes, upper, href), "https://example.org/blog/");
        prop_assert_eq!(&reference, &variant);
        prop_assert_eq!(reference.len(), 1);
        for link in &variant {
            prop_assert!(url::Url::parse(link).is_ok());
        }
    }

    #[test]
    fn fallback_covers_strict_rss_links(
        order in Just(vec![0usize, 1, 2]).prop_shuffle(),
        upper in any::<bool>(),
        href in prop_oneof![Just("/rss/"), Just("https://example.org/rss.xml"), Just("feeds/rss2")],
    ) {
        let html = render_link(&order, true, upper, href);
        let strict = discover_feeds_strict(&html, "https://example.org");
        let fallback = discover_feeds_fallback(&html, "https://example.org");
        for link in strict {
            prop_assert!(fallback.contains(&link));
        }
    }

    #[test]
    fn dedupe_is_idempotent(hosts in proptest::collection::vec(
        ("(www\\.)?", "[ab]\\.(org|de)", "(/|/x|/x/)?"), 0..12)
    ) {
        let urls: Vec<SourceUrl> = hosts
            .iter()
            .map(|(www, host, path)| SourceUrl::parse(&format!("https://{www}{host}{path}")).unwrap())
            .collect();
        let once = normalize_and_dedupe(urls);
        let twice = normalize_and_dedupe(once.clone());
        prop_assert_eq!(once, twice);
    }
}
