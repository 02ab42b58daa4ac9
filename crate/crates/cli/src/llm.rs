//! HTTP text-generation client.
//!
//! Wire format: `POST <endpoint>` with JSON `{"system", "user", "max_length"}`
//! and an optional `Authorization: Bearer <token>` header; the response is
//! JSON `{"text": "<completion>"}`.

use std::time::Duration;

use serde::Deserialize;

use layoutbench::prompt::{ClientError, CompletionRequest, TextGenerator};

use crate::config::LlmConfig;

pub struct HttpGenerator {
    agent: ureq::Agent,
    endpoint: String,
    token: Option<String>,
}

#[derive(Deserialize)]
struct Reply {
    text: String,
}

impl HttpGenerator {
    pub fn new(endpoint: impl Into<String>, token: Option<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        HttpGenerator {
            agent,
            endpoint: endpoint.into(),
            token,
        }
    }

    pub fn from_config(cfg: &LlmConfig) -> anyhow::Result<Self> {
        Ok(HttpGenerator::new(
            cfg.endpoint.clone(),
            cfg.resolve_token()?,
            Duration::from_secs(cfg.timeout_secs),
        ))
    }
}

impl TextGenerator for HttpGenerator {
    fn complete(&self, request: &CompletionRequest) -> Result<String, ClientError> {
        let mut req = self.agent.post(&self.endpoint);
        if let Some(token) = &self.token {
            req = req.header("Authorization", format!("Bearer {token}"));
        }
        let mut resp = req
            .send_json(request)
            .map_err(|e| ClientError(format!("{}: {e}", self.endpoint)))?;
        let reply: Reply = resp
            .body_mut()
            .read_json()
            .map_err(|e| ClientError(format!("{}: malformed reply: {e}", self.endpoint)))?;
        Ok(reply.text)
    }
}
