#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::ffi::OsStr;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use common::{MockResponse, MockServer};
use serde_json::Value;
use tempfile::TempDir;

const FEED: &str = r#"<?xml version="1.0"?><rss version="2.0"><channel><title>Blog</title><language>en-US</language>
<item><title>Post</title><link>https://blog.example/p/1/</link><pubDate>Wed, 16 Nov 2022 09:57:58 +0000</pubDate><category>Elections</category><description>Summary</description></item>
</channel></rss>"#;

fn feedpipe<S: AsRef<OsStr>>(args: &[S]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_feedpipe"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("run feedpipe")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn arg(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Two blogs on the mock server, each advertising one feed.
fn blog_server() -> MockServer {
    let server = MockServer::start();
    for name in ["a", "b"] {
        server.route(
            &format!("/{name}/"),
            vec![MockResponse::html(format!(
                r#"<html><head><link rel="alternate" type="application/rss+xml" href="/{name}/feed/"></head></html>"#
            ))],
        );
        server.route(&format!("/{name}/feed/"), vec![MockResponse::xml(FEED)]);
    }
    server
}

fn write_input(dir: &Path, server: &MockServer) -> std::path::PathBuf {
    let path = dir.join("blogs.csv");
    fs::write(&path, format!("url\n{}\n{}\n", server.url("/a/"), server.url("/b/"))).unwrap();
    path
}

#[test]
fn discover_succeeds_on_valid_input() {
    let server = blog_server();
    let dir = TempDir::new().unwrap();
    let input = write_input(dir.path(), &server);
    let output = dir.path().join("feeds.json");
    let out = feedpipe(&["discover", "--input", arg(&input), "--output", arg(&output)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let records: Vec<Value> = serde_json::from_slice(&fs::read(&output).unwrap()).unwrap();
    assert_eq!(records.len(), 2);
    assert_eq!(records[0]["rss_links"], serde_json::json!([server.url("/a/feed/")]));
    assert!(dir.path().join("discover_summary.json").exists());
}

#[test]
fn fetch_with_one_missing_feed_is_partial() {
    let server = MockServer::start();
    server.route("/one/feed/", vec![MockResponse::xml(FEED)]);
    server.route("/two/feed/", vec![MockResponse::xml(FEED)]);
    server.route("/gone/feed/", vec![MockResponse::status(404)]);
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("feeds.json");
    let links = ["/one/feed/", "/two/feed/", "/gone/feed/"].map(|p| server.url(p));
    let discovery =
        serde_json::json!([{ "url": server.url("/"), "status": 200, "content_type": "text/html", "rss_links": links }]);
    fs::write(&input, discovery.to_string()).unwrap();
    let snapshots = dir.path().join("snapshots");

    let out = feedpipe(&["fetch", "--input", arg(&input), "--out", arg(&snapshots)]);
    assert_eq!(code(&out), 1, "{}", String::from_utf8_lossy(&out.stderr));
    let errors: Vec<Value> = serde_json::from_slice(&fs::read(snapshots.join("errors.json")).unwrap()).unwrap();
    assert_eq!(errors.len(), 1);
    assert_eq!(errors[0]["url"], server.url("/gone/feed/"));
    assert!(errors[0]["reason"].as_str().unwrap().contains("404"));
    let metadata: Vec<Value> = serde_json::from_slice(&fs::read(snapshots.join("metadata.json")).unwrap()).unwrap();
    assert_eq!(metadata.len(), 2);
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(code(&feedpipe(&["discover", "--output", "feeds.json"])), 2);
    assert_eq!(code(&feedpipe(&["explode"])), 2);
    assert_eq!(
        code(&feedpipe(&["fetch", "--input", "x.json", "--out", "s", "--bogus"])),
        2
    );
}

#[test]
fn unreadable_input_is_fatal() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("missing.csv");
    let out = feedpipe(&[
        "discover",
        "--input",
        arg(&missing),
        "--output",
        arg(&dir.path().join("f.json")),
    ]);
    assert_eq!(code(&out), 2);

    let config = dir.path().join("feedpipe.conf");
    fs::write(&config, "max_concurrency = 0\n").unwrap();
    let out = feedpipe(&[
        "--config",
        arg(&config),
        "convert",
        "--snapshots",
        "s",
        "--out",
        "r.json",
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn version_names_table_and_id_versions() {
    let out = feedpipe(&["--version"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("feedpipe 0.1.0"), "{text}");
    assert!(
        text.contains("iso639-2025.1") && text.contains("record ids v1"),
        "{text}"
    );
}

#[test]
fn pipeline_matches_manual_stages() {
    let server = blog_server();
    let dir = TempDir::new().unwrap();
    let input = write_input(dir.path(), &server);
    let auto = dir.path().join("auto");
    let out = feedpipe(&["pipeline", "--input", arg(&input), "--out", arg(&auto), "--seed", "7"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    let manual = dir.path().join("manual");
    fs::create_dir_all(&manual).unwrap();
    let p = |name: &str| manual.join(name).to_str().unwrap().to_string();
    let input = arg(&input).to_string();
    let steps = [
        ["discover", "--input", &input, "--output", &p("feeds.json")]
            .map(String::from)
            .to_vec(),
        [
            "fetch",
            "--input",
            &p("feeds.json"),
            "--out",
            &p("snapshots"),
            "--seed",
            "7",
        ]
        .map(String::from)
        .to_vec(),
        ["convert", "--snapshots", &p("snapshots"), "--out", &p("records.json")]
            .map(String::from)
            .to_vec(),
        [
            "analyze",
            "inclusion",
            "--records",
            &p("corpus.json"),
            "--out",
            &p("inclusion_report.json"),
        ]
        .map(String::from)
        .to_vec(),
        [
            "analyze",
            "quality",
            "--records",
            &p("corpus.json"),
            "--out",
            &p("quality_flags.json"),
        ]
        .map(String::from)
        .to_vec(),
        [
            "analyze",
            "timeline",
            "--records",
            &p("records.json"),
            "--out",
            &p("topics_over_time.csv"),
        ]
        .map(String::from)
        .to_vec(),
    ];
    for step in &steps {
        let out = feedpipe(step);
        assert_eq!(code(&out), 0, "{step:?}: {}", String::from_utf8_lossy(&out.stderr));
    }

    for name in [
        "feeds.json",
        "records.json",
        "comments.json",
        "inclusion_report.json",
        "quality_flags.json",
        "topics_over_time.csv",
    ] {
        assert_eq!(
            fs::read(auto.join(name)).unwrap(),
            fs::read(manual.join(name)).unwrap(),
            "{name} differs"
        );
    }
    let timeline = fs::read_to_string(auto.join("topics_over_time.csv")).unwrap();
    assert!(timeline.contains("Elections,2022-11-01,2"), "{timeline}");
    assert!(auto.join("run_summary.json").exists());
}
