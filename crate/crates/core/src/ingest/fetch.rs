//! White-listed page fetching with a per-host politeness delay.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use chrono::Utc;
use thiserror::Error;
use url::Url;

use super::template::TemplateRegistry;
use super::RawDocument;

pub const DEFAULT_USER_AGENT: &str = concat!(
    "claimsearch-crawler/",
    env!("CARGO_PKG_VERSION"),
    " (+fact-check metadata indexer)"
);

#[derive(Debug, Clone)]
pub struct Politeness {
    /// Minimum spacing between two requests to the same host.
    pub delay: Duration,
    pub user_agent: String,
    pub timeout: Duration,
}

impl Default for Politeness {
    fn default() -> Self {
        Self {
            delay: Duration::from_secs(1),
            user_agent: DEFAULT_USER_AGENT.to_string(),
            timeout: Duration::from_secs(30),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransportResponse {
    pub status: u16,
    pub content_type: String,
    pub body: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransportError {
    #[error("network failure: {0}")]
    Network(String),
    #[error("request timed out")]
    Timeout,
}

/// The network side of a fetch; swapped for a stub in tests.
pub trait Transport: Send + Sync {
    fn get(
        &self,
        url: &Url,
        user_agent: &str,
        timeout: Duration,
    ) -> Result<TransportResponse, TransportError>;
}

#[derive(Debug, Error)]
pub enum FetchError {
    #[error("invalid url {0:?}")]
    InvalidUrl(String),
    #[error("host {0:?} is not on the source white-list")]
    NotWhitelisted(String),
    #[error(transparent)]
    Transport(#[from] TransportError),
}

/// Plain HTTP(S) GET via a blocking client. Non-2xx statuses are returned,
/// not treated as errors.
pub struct HttpTransport {
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new() -> Result<Self, TransportError> {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self { agent })
    }
}

impl Transport for HttpTransport {
    fn get(
        &self,
        url: &Url,
        user_agent: &str,
        timeout: Duration,
    ) -> Result<TransportResponse, TransportError> {
        let map_err = |e: ureq::Error| match e {
            ureq::Error::Timeout(_) => TransportError::Timeout,
            other => TransportError::Network(other.to_string()),
        };
        let mut response = self
            .agent
            .get(url.as_str())
            .header("User-Agent", user_agent)
            .config()
            .timeout_global(Some(timeout))
            .build()
            .call()
            .map_err(map_err)?;
        let status = response.status().as_u16();
        let content_type = response
            .headers()
            .get("content-type")
            .and_then(|v| v.to_str().ok())
            .unwrap_or_default()
            .to_string();
        let body = response.body_mut().read_to_vec().map_err(map_err)?;
        Ok(TransportResponse {
            status,
            content_type,
            body,
        })
    }
}

type HostSlot = Arc<Mutex<Option<Instant>>>;

/// Fetches pages from white-listed hosts only.
///
/// Requests to one host are serialized and spaced by at least
/// `politeness.delay`; different hosts proceed independently.
pub struct Fetcher<T> {
    registry: Arc<TemplateRegistry>,
    transport: T,
    politeness: Politeness,
    hosts: Mutex<HashMap<String, HostSlot>>,
}

impl<T: Transport> Fetcher<T> {
    pub fn new(registry: Arc<TemplateRegistry>, transport: T, politeness: Politeness) -> Self {
        Self {
            registry,
            transport,
            politeness,
            hosts: Mutex::new(HashMap::new()),
        }
    }

    pub fn transport(&self) -> &T {
        &self.transport
    }

    pub fn fetch_page(&self, url: &str) -> Result<RawDocument, FetchError> {
        let url = Url::parse(url).map_err(|_| FetchError::InvalidUrl(url.to_string()))?;
        if !matches!(url.scheme(), "http" | "https") {
            return Err(FetchError::InvalidUrl(url.to_string()));
        }
        let host = url
            .host_str()
            .ok_or_else(|| FetchError::InvalidUrl(url.to_string()))?
            .to_ascii_lowercase();
        if self.registry.match_url(&url).is_err() {
            return Err(FetchError::NotWhitelisted(host));
        }

        let slot = {
            let mut hosts = self.hosts.lock().expect("host table poisoned");
            hosts.entry(host).or_default().clone()
        };
        let mut last = slot.lock().expect("host slot poisoned");
        if let Some(previous) = *last {
            let ready_at = previous + self.politeness.delay;
            let now = Instant::now();
            if ready_at > now {
                std::thread::sleep(ready_at - now);
            }
        }
        *last = Some(Instant::now());
        let response = self.transport.get(
            &url,
            &self.politeness.user_agent,
            self.politeness.timeout,
        );
        drop(last);

        let response = response?;
        Ok(RawDocument {
            url,
            fetched_at: Utc::now(),
            http_status: response.status,
            content_type: response.content_type,
            body: response.body,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Default)]
    struct StubTransport {
        calls: Mutex<Vec<(String, Instant, String)>>,
    }

    impl Transport for StubTransport {
        fn get(&self, url: &Url, ua: &str, _: Duration) -> Result<TransportResponse, TransportError> {
            self.calls
                .lock()
                .unwrap()
                .push((url.to_string(), Instant::now(), ua.to_string()));
            if url.path() == "/timeout" {
                return Err(TransportError::Timeout);
            }
            Ok(TransportResponse {
                status: 200,
                content_type: "text/html".into(),
                body: b"<html></html>".to_vec(),
            })
        }
    }

    fn fetcher(delay_ms: u64) -> Fetcher<StubTransport> {
        Fetcher::new(
            Arc::new(TemplateRegistry::builtin()),
            StubTransport::default(),
            Politeness {
                delay: Duration::from_millis(delay_ms),
                ..Politeness::default()
            },
        )
    }

    #[test]
    fn whitelisted_host() {
        let f = fetcher(0);
        let doc = f.fetch_page("https://www.snopes.com/fact-check/a/").unwrap();
        assert_eq!(doc.url.as_str(), "https://www.snopes.com/fact-check/a/");
        assert_eq!(doc.http_status, 200);
        let calls = f.transport().calls.lock().unwrap();
        assert_eq!(calls[0].2, DEFAULT_USER_AGENT);
    }

    #[test]
    fn refused_before_any_request() {
        let f = fetcher(0);
        assert!(matches!(
            f.fetch_page("https://example.com/z"),
            Err(FetchError::NotWhitelisted(_))
        ));
        assert!(matches!(f.fetch_page("not a url"), Err(FetchError::InvalidUrl(_))));
        assert!(f.transport().calls.lock().unwrap().is_empty());
    }

    #[test]
    fn same_host_spacing() {
        let f = fetcher(500);
        f.fetch_page("https://fullfact.org/a").unwrap();
        f.fetch_page("https://fullfact.org/b").unwrap();
        let calls = f.transport().calls.lock().unwrap();
        assert!(calls[1].1.duration_since(calls[0].1) >= Duration::from_millis(500));
    }

    #[test]
    fn concurrent_same_host_fetches_stay_spaced() {
        let f = Arc::new(fetcher(100));
        std::thread::scope(|s| {
            for i in 0..3 {
                let f = f.clone();
                s.spawn(move || f.fetch_page(&format!("https://fullfact.org/{i}")).unwrap());
            }
        });
        let mut times: Vec<Instant> = f.transport().calls.lock().unwrap().iter().map(|c| c.1).collect();
        times.sort();
        for pair in times.windows(2) {
            assert!(pair[1].duration_since(pair[0]) >= Duration::from_millis(100));
        }
    }

    #[test]
    fn transport_errors_propagate() {
        let f = fetcher(0);
        assert!(matches!(
            f.fetch_page("https://fullfact.org/timeout"),
            Err(FetchError::Transport(TransportError::Timeout))
        ));
    }
}
