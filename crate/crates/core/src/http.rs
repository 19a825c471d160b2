//! Blocking JSON-over-HTTP plumbing for remote providers.

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);

/// Endpoint plus optional bearer token.
#[derive(Debug, Clone)]
pub struct Endpoint {
    pub base_url: String,
    pub token: Option<String>,
    pub timeout: Duration,
}

impl Endpoint {
    pub fn new(base_url: impl Into<String>) -> Self {
        Endpoint {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            token: None,
            timeout: DEFAULT_TIMEOUT,
        }
    }

    pub fn with_token(mut self, token: Option<String>) -> Self {
        self.token = token.filter(|t| !t.is_empty());
        self
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    /// Reads `<prefix>_URL` and `<prefix>_KEY` from the environment.
    pub fn from_env(prefix: &str) -> Result<Self> {
        let url_var = format!("{prefix}_URL");
        let url = std::env::var(&url_var)
            .map_err(|_| Error::provider(format!("{url_var} is not set"), false))?;
        Ok(Endpoint::new(url).with_token(std::env::var(format!("{prefix}_KEY")).ok()))
    }
}

pub(crate) struct JsonClient {
    endpoint: Endpoint,
    client: reqwest::blocking::Client,
}

impl JsonClient {
    pub fn new(endpoint: Endpoint) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(endpoint.timeout)
            .build()
            .map_err(|e| Error::provider(format!("http client: {e}"), false))?;
        Ok(JsonClient { endpoint, client })
    }

    pub fn post<B: Serialize, R: DeserializeOwned>(&self, path: &str, body: &B) -> Result<R> {
        let url = format!("{}{}", self.endpoint.base_url, path);
        let mut req = self.client.post(&url).json(body);
        if let Some(token) = &self.endpoint.token {
            req = req.bearer_auth(token);
        }
        let resp = req.send().map_err(|e| {
            let retriable = e.is_timeout() || e.is_connect();
            Error::provider(format!("POST {url}: {e}"), retriable)
        })?;
        let status = resp.status();
        if !status.is_success() {
            return Err(Error::provider(
                format!("POST {url}: HTTP {status}"),
                status.is_server_error() || status.as_u16() == 429,
            ));
        }
        resp.json::<R>()
            .map_err(|e| Error::provider(format!("POST {url}: bad response body: {e}"), false))
    }
}
