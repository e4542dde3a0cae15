//! Blog feed ingestion: discover feeds from blog URL lists, snapshot them,
//! parse feed and entry metadata, convert them into bibliographic
//! container/item records and report on metadata quality.

pub mod analytics;
pub mod config;
pub mod converter;
pub mod dates;
pub mod discovery;
pub mod fetcher;
pub mod http;
pub mod languages;
pub mod markup;
pub mod parser;
pub mod pipeline;
pub mod politeness;
pub mod url_norm;
mod xml_tree;
