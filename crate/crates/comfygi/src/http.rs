//! Blocking HTTP plumbing shared by the backend clients.

use std::time::Duration;

use reqwest::blocking::{Client, RequestBuilder, Response};

#[derive(Debug)]
pub(crate) enum Failure {
    Connect(String),
    Timeout(String),
    Status { code: u16, body: String },
    Other(String),
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Connect(m) => write!(f, "connection failed: {m}"),
            Failure::Timeout(m) => write!(f, "timed out: {m}"),
            Failure::Status { code, body } => write!(f, "HTTP {code}: {body}"),
            Failure::Other(m) => f.write_str(m),
        }
    }
}

impl Failure {
    fn transient(&self) -> bool {
        match self {
            Failure::Connect(_) | Failure::Timeout(_) => true,
            Failure::Status { code, .. } => *code >= 500,
            Failure::Other(_) => false,
        }
    }
}

impl From<reqwest::Error> for Failure {
    fn from(e: reqwest::Error) -> Self {
        let message = e.to_string();
        if e.is_connect() {
            Failure::Connect(message)
        } else if e.is_timeout() {
            Failure::Timeout(message)
        } else {
            Failure::Other(message)
        }
    }
}

pub(crate) fn client(timeout: Duration) -> Client {
    Client::builder().timeout(timeout).build().expect("HTTP client construction")
}

pub(crate) fn join(base: &str, path: &str) -> String {
    format!("{}/{}", base.trim_end_matches('/'), path.trim_start_matches('/'))
}

/// Sends the request built by `make`. Connection errors, timeouts and 5xx
/// responses are retried up to `retries` more times; non-2xx responses come
/// back as [`Failure::Status`].
pub(crate) fn send(make: impl Fn() -> RequestBuilder, retries: u32) -> Result<Response, Failure> {
    let mut attempt = 0;
    loop {
        let result = make().send().map_err(Failure::from).and_then(|r| {
            let status = r.status();
            if status.is_success() {
                Ok(r)
            } else {
                let mut body = r.text().unwrap_or_default();
                body.truncate(500);
                Err(Failure::Status { code: status.as_u16(), body })
            }
        });
        match result {
            Err(e) if e.transient() && attempt < retries => {
                attempt += 1;
                log::warn!("retrying after transient failure: {e}");
            }
            other => return other,
        }
    }
}
