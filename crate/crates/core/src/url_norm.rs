//! URL normalization shared by deduplication, politeness and record ids.

use url::Url;

/// Parses `raw` as an absolute http(s) URL.
pub fn parse_http_url(raw: &str) -> Option<Url> {
    let url = Url::parse(raw.trim()).ok()?;
    match url.scheme() {
        "http" | "https" if url.host_str().is_some() => Some(url),
        _ => None,
    }
}

/// Canonical string form of a URL.
///
/// Scheme and host are lowercased, a leading `www.` is stripped, default
/// ports are dropped and a trailing slash on the path is removed. Path case,
/// query and fragment are preserved. Returns `None` for anything that is not
/// an absolute http(s) URL.
pub fn normalize_url(raw: &str) -> Option<String> {
    let url = parse_http_url(raw)?;
    let host = url.host_str()?.to_ascii_lowercase();
    let host = host.strip_prefix("www.").unwrap_or(&host);
    let mut out = format!("{}://{}", url.scheme(), host);
    // `Url` already omits the port when it is the scheme default.
    if let Some(port) = url.port() {
        out.push(':');
        out.push_str(&port.to_string());
    }
    out.push_str(url.path().trim_end_matches('/'));
    if let Some(query) = url.query() {
        out.push('?');
        out.push_str(query);
    }
    if let Some(fragment) = url.fragment() {
        out.push('#');
        out.push_str(fragment);
    }
    Some(out)
}

/// Host used for politeness decisions: lowercased, without `www.`.
///
/// Strings that do not parse as URLs are their own host key.
pub fn host_key(raw: &str) -> String {
    match Url::parse(raw.trim())
        .ok()
        .and_then(|u| u.host_str().map(str::to_ascii_lowercase))
    {
        Some(host) => host.strip_prefix("www.").map(str::to_string).unwrap_or(host),
        None => raw.trim().to_ascii_lowercase(),
    }
}
