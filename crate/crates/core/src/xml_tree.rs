//! Small namespace-aware element tree built on top of quick-xml events.

use std::collections::HashMap;

use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;

pub(crate) const XML_NS: &str = "http://www.w3.org/XML/1998/namespace";

#[derive(Debug, Clone)]
pub(crate) enum Node {
    Element(Element),
    Text(String),
}

#[derive(Debug, Clone)]
pub(crate) struct Element {
    pub ns: Option<String>,
    pub local: String,
    /// (namespace, local name, decoded value)
    pub attrs: Vec<(Option<String>, String, String)>,
    pub children: Vec<Node>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct TreeError {
    pub offset: u64,
    pub message: String,
}

impl Element {
    pub fn is(&self, ns: Option<&str>, local: &str) -> bool {
        self.local == local && self.ns.as_deref() == ns
    }

    pub fn elements(&self) -> impl Iterator<Item = &Element> {
        self.children.iter().filter_map(|c| match c {
            Node::Element(e) => Some(e),
            Node::Text(_) => None,
        })
    }

    pub fn child(&self, ns: Option<&str>, local: &str) -> Option<&Element> {
        self.elements().find(|e| e.is(ns, local))
    }

    pub fn children_named<'a>(&'a self, ns: Option<&'a str>, local: &'a str) -> impl Iterator<Item = &'a Element> {
        self.elements().filter(move |e| e.is(ns, local))
    }

    pub fn attr(&self, ns: Option<&str>, local: &str) -> Option<&str> {
        self.attrs
            .iter()
            .find(|(a_ns, a_local, _)| a_local == local && a_ns.as_deref() == ns)
            .map(|(_, _, v)| v.as_str())
    }

    /// Concatenated text of all descendants, trimmed.
    pub fn text(&self) -> String {
        let mut out = String::new();
        self.collect_text(&mut out);
        out.trim().to_string()
    }

    fn collect_text(&self, out: &mut String) {
        for child in &self.children {
            match child {
                Node::Text(t) => out.push_str(t),
                Node::Element(e) => e.collect_text(out),
            }
        }
    }

    /// Children re-serialized as markup (for inline XHTML content), trimmed.
    pub fn inner_markup(&self) -> String {
        let mut out = String::new();
        for child in &self.children {
            write_node(child, &mut out);
        }
        out.trim().to_string()
    }
}

fn write_node(node: &Node, out: &mut String) {
    match node {
        Node::Text(t) => out.push_str(&html_escape::encode_text(t)),
        Node::Element(e) => {
            out.push('<');
            out.push_str(&e.local);
            for (_, name, value) in &e.attrs {
                out.push(' ');
                out.push_str(name);
                out.push_str("=\"");
                out.push_str(&html_escape::encode_double_quoted_attribute(value));
                out.push('"');
            }
            out.push('>');
            for child in &e.children {
                write_node(child, out);
            }
            out.push_str("</");
            out.push_str(&e.local);
            out.push('>');
        }
    }
}

type Scope = HashMap<String, String>;

fn split_qname(qname: &str) -> (Option<&str>, &str) {
    match qname.split_once(':') {
        Some((prefix, local)) => (Some(prefix), local),
        None => (None, qname),
    }
}

fn resolve(scopes: &[Scope], prefix: Option<&str>, is_attr: bool) -> Option<String> {
    match prefix {
        Some("xml") => Some(XML_NS.to_string()),
        // unprefixed attributes carry no namespace
        None if is_attr => None,
        _ => {
            let key = prefix.unwrap_or("");
            scopes
                .iter()
                .rev()
                .find_map(|s| s.get(key))
                .filter(|uri| !uri.is_empty())
                .cloned()
        }
    }
}

fn open_element(start: &BytesStart<'_>, scopes: &mut Vec<Scope>) -> Result<Element, String> {
    let qname = String::from_utf8_lossy(start.name().as_ref()).into_owned();
    let mut raw_attrs = Vec::new();
    let mut scope = Scope::new();
    for attr in start.attributes().with_checks(false) {
        let attr = attr.map_err(|e| e.to_string())?;
        let key = String::from_utf8_lossy(attr.key.as_ref()).into_owned();
        let value = html_escape::decode_html_entities(&String::from_utf8_lossy(&attr.value)).into_owned();
        if key == "xmlns" {
            scope.insert(String::new(), value);
        } else if let Some(prefix) = key.strip_prefix("xmlns:") {
            scope.insert(prefix.to_string(), value);
        } else {
            raw_attrs.push((key, value));
        }
    }
    scopes.push(scope);
    let (prefix, local) = split_qname(&qname);
    let ns = resolve(scopes, prefix, false);
    let attrs = raw_attrs
        .into_iter()
        .map(|(key, value)| {
            let (prefix, local) = split_qname(&key);
            (resolve(scopes, prefix, true), local.to_string(), value)
        })
        .collect();
    Ok(Element {
        ns,
        local: local.to_string(),
        attrs,
        children: Vec::new(),
    })
}

/// Parses a whole document into its root element.
///
/// Entity references are decoded with the HTML entity table, which is a
/// superset of XML's, since feeds routinely use `&nbsp;` and friends.
pub(crate) fn parse_document(text: &str) -> Result<Element, TreeError> {
    let mut reader = Reader::from_str(text);
    reader.config_mut().check_end_names = true;
    let mut scopes: Vec<Scope> = Vec::new();
    let mut stack: Vec<Element> = Vec::new();
    let mut root: Option<Element> = None;

    let fail = |reader: &Reader<&[u8]>, message: String| TreeError {
        offset: reader.buffer_position(),
        message,
    };

    loop {
        let event = reader.read_event().map_err(|e| TreeError {
            offset: reader.error_position(),
            message: e.to_string(),
        })?;
        match event {
            Event::Start(start) => {
                if root.is_some() {
                    return Err(fail(&reader, "content after the root element".into()));
                }
                let element = open_element(&start, &mut scopes).map_err(|m| fail(&reader, m))?;
                stack.push(element);
            }
            Event::Empty(start) => {
                if root.is_some() {
                    return Err(fail(&reader, "content after the root element".into()));
                }
                let element = open_element(&start, &mut scopes).map_err(|m| fail(&reader, m))?;
                scopes.pop();
                match stack.last_mut() {
                    Some(parent) => parent.children.push(Node::Element(element)),
                    None => root = Some(element),
                }
            }
            Event::End(_) => {
                scopes.pop();
                let element = stack.pop().ok_or_else(|| fail(&reader, "unbalanced end tag".into()))?;
                match stack.last_mut() {
                    Some(parent) => parent.children.push(Node::Element(element)),
                    None => root = Some(element),
                }
            }
            Event::Text(t) => {
                let raw = String::from_utf8_lossy(&t);
                match stack.last_mut() {
                    Some(parent) => parent
                        .children
                        .push(Node::Text(html_escape::decode_html_entities(&raw).into_owned())),
                    None if raw.trim().is_empty() => {}
                    None => return Err(fail(&reader, "text outside the root element".into())),
                }
            }
            Event::CData(c) => {
                let raw = String::from_utf8_lossy(&c).into_owned();
                match stack.last_mut() {
                    Some(parent) => parent.children.push(Node::Text(raw)),
                    None => return Err(fail(&reader, "CDATA outside the root element".into())),
                }
            }
            Event::Eof => break,
            Event::Decl(_) | Event::PI(_) | Event::Comment(_) | Event::DocType(_) => {}
        }
    }

    if !stack.is_empty() {
        return Err(fail(
            &reader,
            format!("unclosed element <{}>", stack.last().unwrap().local),
        ));
    }
    root.ok_or_else(|| TreeError {
        offset: 0,
        message: "no root element".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resolves_namespaces() {
        let doc = r#"<rss xmlns:dc="http://purl.org/dc/elements/1.1/"><channel><dc:creator>Blog</dc:creator></channel></rss>"#;
        let root = parse_document(doc).unwrap();
        let channel = root.child(None, "channel").unwrap();
        let creator = channel
            .child(Some("http://purl.org/dc/elements/1.1/"), "creator")
            .unwrap();
        assert_eq!(creator.text(), "Blog");
    }

    #[test]
    fn default_namespace_applies_to_elements_not_attrs() {
        let doc = r#"<feed xmlns="http://www.w3.org/2005/Atom" xml:lang="de"><link href="x"/></feed>"#;
        let root = parse_document(doc).unwrap();
        assert_eq!(root.ns.as_deref(), Some("http://www.w3.org/2005/Atom"));
        assert_eq!(root.attr(Some(XML_NS), "lang"), Some("de"));
        let link = root.child(Some("http://www.w3.org/2005/Atom"), "link").unwrap();
        assert_eq!(link.attr(None, "href"), Some("x"));
    }

    #[test]
    fn decodes_html_entities_and_cdata() {
        let root = parse_document("<a>x&nbsp;&amp;&#8217;<![CDATA[<b>y</b>]]></a>").unwrap();
        assert_eq!(root.text(), "x\u{a0}&\u{2019}<b>y</b>");
    }

    #[test]
    fn reports_errors() {
        assert!(parse_document("<a><b></a>").is_err());
        let err = parse_document("<a><b>").unwrap_err();
        assert!(err.message.contains("unclosed"));
        assert!(parse_document("plain text").is_err());
        assert!(parse_document("").is_err());
    }
}
