//! OpenAI-compatible `/chat/completions` transport.

use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

/// What one model call needs.
#[derive(Clone, Debug)]
pub struct ChatRequest<'a> {
    pub model: &'a str,
    pub prompt: &'a str,
    pub temperature: f64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Completion {
    pub text: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    /// Latency reported by the transport itself; when `None` the client
    /// measures the call.
    pub elapsed_ms: Option<u64>,
}

#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct TransportError(pub String);

/// A way of reaching a model. The HTTP implementation is the production one;
/// tests substitute scripted or panicking transports.
pub trait Transport: Send + Sync {
    fn chat(&self, request: &ChatRequest<'_>) -> Result<Completion, TransportError>;
}

pub struct HttpTransport {
    agent: ureq::Agent,
    endpoint: String,
    api_key: Option<String>,
}

impl HttpTransport {
    pub fn new(base_url: &str, api_key: Option<String>, timeout: Duration) -> Self {
        Self {
            agent: ureq::AgentBuilder::new().timeout(timeout).build(),
            endpoint: format!("{}/chat/completions", base_url.trim_end_matches('/')),
            api_key,
        }
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    #[serde(default)]
    choices: Vec<Choice>,
    usage: Option<Usage>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct Usage {
    prompt_tokens: u64,
    completion_tokens: u64,
}

/// Rough count used only when a server omits `usage`.
fn estimate_tokens(text: &str) -> u64 {
    (text.chars().count() as u64).div_ceil(4)
}

fn parse_response(body: ChatResponse, prompt: &str) -> Result<Completion, TransportError> {
    let text = body
        .choices
        .into_iter()
        .next()
        .and_then(|c| c.message.content)
        .ok_or_else(|| TransportError("response has no message content".into()))?;
    let (prompt_tokens, completion_tokens) = match body.usage {
        Some(u) => (u.prompt_tokens, u.completion_tokens),
        None => (estimate_tokens(prompt), estimate_tokens(&text)),
    };
    Ok(Completion { text, prompt_tokens, completion_tokens, elapsed_ms: None })
}

impl Transport for HttpTransport {
    fn chat(&self, request: &ChatRequest<'_>) -> Result<Completion, TransportError> {
        let body = json!({
            "model": request.model,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.temperature,
            "stream": false,
        });
        let mut call = self.agent.post(&self.endpoint).set("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            call = call.set("Authorization", &format!("Bearer {key}"));
        }
        let response = call.send_json(body).map_err(|e| TransportError(e.to_string()))?;
        let parsed: ChatResponse = response.into_json().map_err(|e| TransportError(format!("bad response body: {e}")))?;
        parse_response(parsed, request.prompt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_openai_shape() {
        let body: ChatResponse = serde_json::from_str(
            r#"{"id":"x","choices":[{"index":0,"message":{"role":"assistant","content":"hi"}}],
                "usage":{"prompt_tokens":12,"completion_tokens":3,"total_tokens":15}}"#,
        )
        .unwrap();
        let c = parse_response(body, "prompt").unwrap();
        assert_eq!((c.text.as_str(), c.prompt_tokens, c.completion_tokens), ("hi", 12, 3));
    }

    #[test]
    fn estimates_when_usage_missing() {
        let body: ChatResponse = serde_json::from_str(r#"{"choices":[{"message":{"content":"abcde"}}]}"#).unwrap();
        let c = parse_response(body, "12345678").unwrap();
        assert_eq!((c.prompt_tokens, c.completion_tokens), (2, 2));
    }

    #[test]
    fn empty_choices_is_an_error() {
        let body: ChatResponse = serde_json::from_str(r#"{"choices":[]}"#).unwrap();
        assert!(parse_response(body, "p").is_err());
    }
}
