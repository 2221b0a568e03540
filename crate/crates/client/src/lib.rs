//! Async client for the Multimapper session service.

use reqwest::{Method, StatusCode};
use serde::de::DeserializeOwned;
use serde::Serialize;

use multimapper_core::api::{
    CreateSessionRequest, CreateSessionResponse, DiagnoseRequest, DiagnoseResponse, ErrorBody, MagnifyResponse,
    SessionSnapshot,
};
use multimapper_core::multimapper::MagnifyRequest;

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("request failed: {0}")]
    Transport(#[from] reqwest::Error),
    #[error("server returned {status}: {message}")]
    Status { status: StatusCode, message: String },
}

impl ClientError {
    pub fn status(&self) -> Option<StatusCode> {
        match self {
            ClientError::Status { status, .. } => Some(*status),
            ClientError::Transport(e) => e.status(),
        }
    }
}

pub type Result<T> = std::result::Result<T, ClientError>;

#[derive(Debug, Clone)]
pub struct Client {
    base: String,
    http: reqwest::Client,
}

impl Client {
    /// `base` is the service root, e.g. `http://127.0.0.1:8080`.
    pub fn new(base: impl Into<String>) -> Self {
        Client {
            base: base.into().trim_end_matches('/').to_string(),
            http: reqwest::Client::new(),
        }
    }

    async fn call<B: Serialize, T: DeserializeOwned>(&self, method: Method, path: &str, body: Option<&B>) -> Result<T> {
        let mut req = self.http.request(method, format!("{}{path}", self.base));
        if let Some(b) = body {
            req = req.json(b);
        }
        let resp = req.send().await?;
        let status = resp.status();
        if status.is_success() {
            return Ok(resp.json().await?);
        }
        let text = resp.text().await.unwrap_or_default();
        let message = serde_json::from_str::<ErrorBody>(&text).map_or(text, |b| b.error);
        Err(ClientError::Status { status, message })
    }

    pub async fn create_session(&self, req: &CreateSessionRequest) -> Result<CreateSessionResponse> {
        self.call(Method::POST, "/sessions", Some(req)).await
    }

    pub async fn session(&self, id: &str) -> Result<SessionSnapshot> {
        self.call::<(), _>(Method::GET, &format!("/sessions/{id}"), None).await
    }

    pub async fn magnify(&self, id: &str, req: &MagnifyRequest) -> Result<MagnifyResponse> {
        self.call(Method::POST, &format!("/sessions/{id}/magnify"), Some(req)).await
    }

    pub async fn coarsen(&self, id: &str, req: &MagnifyRequest) -> Result<MagnifyResponse> {
        self.call(Method::POST, &format!("/sessions/{id}/coarsen"), Some(req)).await
    }

    pub async fn diagnose(&self, id: &str, req: &DiagnoseRequest) -> Result<DiagnoseResponse> {
        self.call(Method::POST, &format!("/sessions/{id}/diagnose"), Some(req)).await
    }
}
