//! Display-text extraction from HTML fragments.

use std::sync::LazyLock;

use regex::Regex;

static SCRIPT_OR_STYLE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?is)<(script|style)\b[^>]*>.*?</(script|style)\s*>").unwrap());
static COMMENT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?s)<!--.*?-->").unwrap());
static TAG: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?s)</?[A-Za-z!?][^>]*>").unwrap());
// an opening bracket that would still read as the start of a tag
static DANGLING_TAG_OPEN: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"<+([A-Za-z])").unwrap());

/// Removes tags, decodes named and numeric character references, collapses
/// whitespace runs to a single space and trims the ends.
///
/// Entity-encoded markup such as `&lt;p&gt;` is decoded and then stripped as
/// well, so applying the function twice gives the same result as once.
pub fn strip_markup(text: &str) -> String {
    let mut current = text.to_string();
    loop {
        let next = strip_once(&current);
        if next == current {
            return next;
        }
        current = next;
    }
}

fn strip_once(text: &str) -> String {
    let text = SCRIPT_OR_STYLE.replace_all(text, " ");
    let text = COMMENT.replace_all(&text, " ");
    let text = TAG.replace_all(&text, " ");
    let decoded = html_escape::decode_html_entities(&text);
    let decoded = TAG.replace_all(&decoded, " ");
    let decoded = DANGLING_TAG_OPEN.replace_all(&decoded, "$1");
    collapse_whitespace(&decoded)
}

/// Collapses every run of Unicode whitespace to one ASCII space and trims.
pub fn collapse_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Whether `text` contains `<` directly followed by an ASCII letter.
pub fn contains_markup(text: &str) -> bool {
    text.as_bytes()
        .windows(2)
        .any(|w| w[0] == b'<' && w[1].is_ascii_alphabetic())
}
