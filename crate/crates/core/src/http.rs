//! Minimal blocking HTTP abstraction with an injectable clock.
//!
//! Everything that talks to the network goes through [`HttpClient`], and
//! everything that waits or reads the time goes through [`Clock`], so the
//! retry and politeness logic can be driven by tests without real delays.

use std::sync::Mutex;
use std::time::Duration;

use chrono::{DateTime, Utc};
use thiserror::Error;
use ureq::ResponseExt;

/// Maximum number of redirects followed for any request.
pub const MAX_REDIRECTS: u32 = 5;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    /// URL the response came from, after redirects.
    pub url: String,
    pub status: u16,
    pub content_type: Option<String>,
    pub body: Vec<u8>,
}

/// Failure below the HTTP layer: DNS, connect, timeout, redirect loops.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("transport error: {0}")]
pub struct TransportError(pub String);

pub trait HttpClient: Send + Sync {
    /// Issues a GET and returns whatever status the server answered with.
    /// Non-2xx statuses are not errors at this layer.
    fn get(&self, url: &str, headers: &[(String, String)]) -> Result<HttpResponse, TransportError>;
}

pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
    fn sleep(&self, duration: Duration);
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }

    fn sleep(&self, duration: Duration) {
        std::thread::sleep(duration);
    }
}

/// Clock that never blocks. `sleep` advances the reported time and is logged.
#[derive(Debug)]
pub struct ManualClock {
    state: Mutex<(DateTime<Utc>, Vec<Duration>)>,
}

impl ManualClock {
    pub fn new(start: DateTime<Utc>) -> Self {
        Self {
            state: Mutex::new((start, Vec::new())),
        }
    }

    /// Every duration passed to `sleep`, in call order.
    pub fn sleeps(&self) -> Vec<Duration> {
        self.state.lock().unwrap().1.clone()
    }
}

impl Clock for ManualClock {
    fn now(&self) -> DateTime<Utc> {
        self.state.lock().unwrap().0
    }

    fn sleep(&self, duration: Duration) {
        let mut state = self.state.lock().unwrap();
        state.0 += chrono::Duration::from_std(duration).unwrap_or_default();
        state.1.push(duration);
    }
}

/// [`HttpClient`] backed by `ureq`.
pub struct UreqClient {
    agent: ureq::Agent,
}

impl UreqClient {
    pub fn new(timeout: Duration, user_agent: &str) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .max_redirects(MAX_REDIRECTS)
            .http_status_as_error(false)
            .user_agent(user_agent)
            .build();
        Self { agent: config.into() }
    }
}

impl HttpClient for UreqClient {
    fn get(&self, url: &str, headers: &[(String, String)]) -> Result<HttpResponse, TransportError> {
        let mut request = self.agent.get(url);
        for (name, value) in headers {
            request = request.header(name.as_str(), value.as_str());
        }
        let mut response = request.call().map_err(|e| TransportError(e.to_string()))?;
        let final_url = response.get_uri().to_string();
        let status = response.status().as_u16();
        let content_type = response
            .headers()
            .get("content-type")
            .and_then(|v| v.to_str().ok())
            .map(str::to_string);
        let body = response
            .body_mut()
            .with_config()
            .limit(64 * 1024 * 1024)
            .read_to_vec()
            .map_err(|e| TransportError(e.to_string()))?;
        Ok(HttpResponse {
            url: final_url,
            status,
            content_type,
            body,
        })
    }
}

/// Appends `params` to the query string of `url`.
pub fn with_query(url: &str, params: &[(String, String)]) -> String {
    if params.is_empty() {
        return url.to_string();
    }
    match url::Url::parse(url) {
        Ok(mut parsed) => {
            parsed
                .query_pairs_mut()
                .extend_pairs(params.iter().map(|(k, v)| (k.as_str(), v.as_str())));
            parsed.to_string()
        }
        Err(_) => url.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    #[test]
    fn manual_clock_advances_on_sleep() {
        let start = Utc.with_ymd_and_hms(2023, 7, 1, 0, 0, 0).unwrap();
        let clock = ManualClock::new(start);
        clock.sleep(Duration::from_secs(5));
        clock.sleep(Duration::from_secs(15));
        assert_eq!(clock.now(), start + chrono::Duration::seconds(20));
        assert_eq!(clock.sleeps(), vec![Duration::from_secs(5), Duration::from_secs(15)]);
    }

    #[test]
    fn query_params_are_appended() {
        let params = vec![("page".to_string(), "2".to_string())];
        assert_eq!(
            with_query("https://example.org/feed/", &params),
            "https://example.org/feed/?page=2"
        );
        assert_eq!(
            with_query("https://example.org/feed/", &[]),
            "https://example.org/feed/"
        );
    }
}
