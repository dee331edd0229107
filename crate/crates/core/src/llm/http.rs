//! OpenAI-compatible chat-completion backend over blocking HTTP.

use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::{Backend, BackendConfig, BackendError, BackendReply, ConfigError, ErrorClass, API_KEY_ENV};
use crate::prompt::GenerationRequest;

pub struct HttpBackend {
    agent: ureq::Agent,
    api_key: String,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<Usage>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    content: Option<String>,
}

#[derive(Deserialize)]
struct Usage {
    prompt_tokens: Option<u64>,
    completion_tokens: Option<u64>,
}

impl HttpBackend {
    pub fn new(api_key: impl Into<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        HttpBackend { agent, api_key: api_key.into() }
    }

    /// Reads the API key from `EMOFORGE_API_KEY`.
    pub fn from_env(config: &BackendConfig) -> Result<Self, ConfigError> {
        let key = std::env::var(API_KEY_ENV).map_err(|_| ConfigError::MissingApiKey(API_KEY_ENV))?;
        Ok(HttpBackend::new(key, config.timeout))
    }
}

/// Request body in the chat-completion wire format.
pub fn request_body(request: &GenerationRequest, config: &BackendConfig) -> serde_json::Value {
    json!({
        "model": config.model_name,
        "messages": request.messages,
        "temperature": config.temperature,
    })
}

fn classify_status(status: u16) -> ErrorClass {
    match status {
        401 | 403 => ErrorClass::Auth,
        429 => ErrorClass::RateLimit,
        408 | 504 => ErrorClass::Timeout,
        500..=599 => ErrorClass::Server,
        _ => ErrorClass::Rejected,
    }
}

/// Extracts the reply text and token usage from a response body.
pub fn parse_response(body: &str) -> Result<BackendReply, BackendError> {
    let parsed: ChatResponse =
        serde_json::from_str(body).map_err(|e| BackendError::new(ErrorClass::Malformed, e.to_string()))?;
    let text = parsed
        .choices
        .into_iter()
        .next()
        .and_then(|c| c.message.content)
        .ok_or_else(|| BackendError::new(ErrorClass::Malformed, "response has no message content"))?;
    Ok(BackendReply {
        text,
        prompt_tokens: parsed.usage.as_ref().and_then(|u| u.prompt_tokens),
        completion_tokens: parsed.usage.as_ref().and_then(|u| u.completion_tokens),
    })
}

impl Backend for HttpBackend {
    fn send(&self, request: &GenerationRequest, config: &BackendConfig) -> Result<BackendReply, BackendError> {
        let result = self
            .agent
            .post(&config.endpoint)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(request_body(request, config));
        let mut response = match result {
            Ok(r) => r,
            Err(ureq::Error::Timeout(t)) => return Err(BackendError::new(ErrorClass::Timeout, t.to_string())),
            Err(e) => return Err(BackendError::new(ErrorClass::Transport, e.to_string())),
        };
        let status = response.status().as_u16();
        let retry_after = response
            .headers()
            .get("retry-after")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse::<u64>().ok())
            .map(Duration::from_secs);
        let body = response
            .body_mut()
            .read_to_string()
            .map_err(|e| BackendError::new(ErrorClass::Transport, e.to_string()))?;
        if !(200..300).contains(&status) {
            let mut err = BackendError::new(classify_status(status), format!("HTTP {status}: {}", body.trim()));
            err.retry_after = retry_after;
            return Err(err);
        }
        parse_response(&body)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn status_classes() {
        assert_eq!(classify_status(401), ErrorClass::Auth);
        assert_eq!(classify_status(429), ErrorClass::RateLimit);
        assert_eq!(classify_status(503), ErrorClass::Server);
        assert_eq!(classify_status(400), ErrorClass::Rejected);
    }

    #[test]
    fn response_parsing() {
        let body = r#"{"choices":[{"message":{"role":"assistant","content":"Question: a\nAnswer: b"}}],
                       "usage":{"prompt_tokens":12,"completion_tokens":4,"total_tokens":16}}"#;
        let r = parse_response(body).unwrap();
        assert_eq!(r.text, "Question: a\nAnswer: b");
        assert_eq!((r.prompt_tokens, r.completion_tokens), (Some(12), Some(4)));
        assert_eq!(parse_response(r#"{"choices":[]}"#).unwrap_err().class, ErrorClass::Malformed);
        assert_eq!(parse_response("<html>").unwrap_err().class, ErrorClass::Malformed);
        let no_usage = parse_response(r#"{"choices":[{"message":{"content":"x"}}]}"#).unwrap();
        assert_eq!(no_usage.prompt_tokens, None);
    }
}
