//! Request and response encodings for each provider's HTTP API.

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde_json::{json, Value};

use super::{BackendConfig, Provider, VlmError};

#[derive(Debug, Clone, PartialEq)]
pub struct HttpRequest {
    pub url: String,
    pub headers: Vec<(String, String)>,
    pub body: Value,
    pub timeout: std::time::Duration,
    /// sha256 of the caller's PNG, before preprocessing. Not sent over the wire.
    pub image_sha256: String,
}

impl HttpRequest {
    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HttpResponse {
    pub status: u16,
    pub headers: Vec<(String, String)>,
    pub body: String,
}

impl HttpResponse {
    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Reply {
    pub text: String,
    pub input_tokens: Option<u64>,
    pub output_tokens: Option<u64>,
}

/// Builds the provider request. The mock provider speaks the anthropic encoding.
pub fn build_request(config: &BackendConfig, api_key: Option<&str>, prompt: &str, png: &[u8], image_sha256: &str) -> HttpRequest {
    let data = B64.encode(png);
    let mut headers = vec![("content-type".to_string(), "application/json".to_string())];
    let body = match config.provider {
        Provider::Anthropic | Provider::Mock => {
            if let Some(k) = api_key {
                headers.push(("x-api-key".into(), k.into()));
            }
            headers.push(("anthropic-version".into(), "2023-06-01".into()));
            json!({
                "model": config.model_id,
                "max_tokens": config.max_tokens,
                "temperature": config.temperature,
                "messages": [{
                    "role": "user",
                    "content": [
                        {"type": "image", "source": {"type": "base64", "media_type": "image/png", "data": data}},
                        {"type": "text", "text": prompt}
                    ]
                }]
            })
        }
        Provider::Openai => {
            if let Some(k) = api_key {
                headers.push(("authorization".into(), format!("Bearer {k}")));
            }
            json!({
                "model": config.model_id,
                "max_tokens": config.max_tokens,
                "temperature": config.temperature,
                "seed": 0,
                "messages": [{
                    "role": "user",
                    "content": [
                        {"type": "text", "text": prompt},
                        {"type": "image_url", "image_url": {"url": format!("data:image/png;base64,{data}")}}
                    ]
                }]
            })
        }
        Provider::Google => {
            if let Some(k) = api_key {
                headers.push(("x-goog-api-key".into(), k.into()));
            }
            json!({
                "contents": [{
                    "role": "user",
                    "parts": [
                        {"text": prompt},
                        {"inline_data": {"mime_type": "image/png", "data": data}}
                    ]
                }],
                "generationConfig": {
                    "temperature": config.temperature,
                    "maxOutputTokens": config.max_tokens,
                    "candidateCount": 1
                }
            })
        }
    };
    HttpRequest {
        url: config.endpoint(),
        headers,
        body,
        timeout: std::time::Duration::from_secs_f64(config.timeout),
        image_sha256: image_sha256.to_string(),
    }
}

fn malformed(provider: Provider, why: &str) -> VlmError {
    VlmError::ProviderError {
        status: 200,
        message: format!("{provider} response: {why}"),
    }
}

pub fn parse_response(provider: Provider, body: &str) -> Result<Reply, VlmError> {
    let v: Value = serde_json::from_str(body).map_err(|e| malformed(provider, &e.to_string()))?;
    let u64_at = |v: &Value, path: &[&str]| {
        let mut cur = v;
        for p in path {
            cur = cur.get(p)?;
        }
        cur.as_u64()
    };
    match provider {
        Provider::Anthropic | Provider::Mock => {
            let content = v
                .get("content")
                .and_then(Value::as_array)
                .ok_or_else(|| malformed(provider, "missing content"))?;
            let text = content
                .iter()
                .filter(|c| c.get("type").and_then(Value::as_str) == Some("text"))
                .filter_map(|c| c.get("text").and_then(Value::as_str))
                .collect::<String>();
            Ok(Reply {
                text,
                input_tokens: u64_at(&v, &["usage", "input_tokens"]),
                output_tokens: u64_at(&v, &["usage", "output_tokens"]),
            })
        }
        Provider::Openai => {
            let msg = v
                .pointer("/choices/0/message/content")
                .ok_or_else(|| malformed(provider, "missing choices[0].message.content"))?;
            let text = match msg {
                Value::String(s) => s.clone(),
                Value::Array(parts) => parts
                    .iter()
                    .filter_map(|p| p.get("text").and_then(Value::as_str))
                    .collect(),
                Value::Null => String::new(),
                _ => return Err(malformed(provider, "content has unexpected type")),
            };
            Ok(Reply {
                text,
                input_tokens: u64_at(&v, &["usage", "prompt_tokens"]),
                output_tokens: u64_at(&v, &["usage", "completion_tokens"]),
            })
        }
        Provider::Google => {
            let parts = v
                .pointer("/candidates/0/content/parts")
                .and_then(Value::as_array)
                .ok_or_else(|| malformed(provider, "missing candidates[0].content.parts"))?;
            let text = parts
                .iter()
                .filter_map(|p| p.get("text").and_then(Value::as_str))
                .collect();
            Ok(Reply {
                text,
                input_tokens: u64_at(&v, &["usageMetadata", "promptTokenCount"]),
                output_tokens: u64_at(&v, &["usageMetadata", "candidatesTokenCount"]),
            })
        }
    }
}

/// Best-effort error message out of a provider error body.
pub fn error_message(body: &str) -> String {
    let v: Option<Value> = serde_json::from_str(body).ok();
    let msg = v.as_ref().and_then(|v| {
        v.pointer("/error/message")
            .or_else(|| v.get("message"))
            .or_else(|| v.get("error"))
            .and_then(Value::as_str)
            .map(str::to_string)
    });
    msg.unwrap_or_else(|| body.chars().take(300).collect())
}

/// Which encoding a request body uses, judged from its shape.
pub fn detect_provider(body: &Value) -> Provider {
    if body.get("contents").is_some() {
        Provider::Google
    } else if body.pointer("/messages/0/content").and_then(Value::as_array).is_some_and(|parts| {
        parts.iter().any(|p| p.get("type").and_then(Value::as_str) == Some("image_url"))
    }) {
        Provider::Openai
    } else {
        Provider::Anthropic
    }
}

/// Prompt text and decoded image bytes from a request body of any encoding.
pub fn decode_request(body: &Value) -> Option<(String, Vec<u8>)> {
    let mut prompt = String::new();
    let mut image = None;
    match detect_provider(body) {
        Provider::Google => {
            for p in body.pointer("/contents/0/parts")?.as_array()? {
                if let Some(t) = p.get("text").and_then(Value::as_str) {
                    prompt.push_str(t);
                }
                if let Some(d) = p.pointer("/inline_data/data").and_then(Value::as_str) {
                    image = B64.decode(d).ok();
                }
            }
        }
        _ => {
            for p in body.pointer("/messages/0/content")?.as_array()? {
                if let Some(t) = p.get("text").and_then(Value::as_str) {
                    prompt.push_str(t);
                }
                if let Some(d) = p.pointer("/source/data").and_then(Value::as_str) {
                    image = B64.decode(d).ok();
                }
                if let Some(u) = p.pointer("/image_url/url").and_then(Value::as_str) {
                    image = u.split_once("base64,").and_then(|(_, d)| B64.decode(d).ok());
                }
            }
        }
    }
    Some((prompt, image?))
}

/// Wraps reply text in the response encoding of `provider`.
pub fn encode_response(provider: Provider, text: &str, input_tokens: u64, output_tokens: u64) -> String {
    let v = match provider {
        Provider::Anthropic | Provider::Mock => json!({
            "id": "msg_mock",
            "type": "message",
            "role": "assistant",
            "content": [{"type": "text", "text": text}],
            "stop_reason": "end_turn",
            "usage": {"input_tokens": input_tokens, "output_tokens": output_tokens}
        }),
        Provider::Openai => json!({
            "id": "chatcmpl-mock",
            "object": "chat.completion",
            "choices": [{"index": 0, "message": {"role": "assistant", "content": text}, "finish_reason": "stop"}],
            "usage": {"prompt_tokens": input_tokens, "completion_tokens": output_tokens}
        }),
        Provider::Google => json!({
            "candidates": [{"content": {"role": "model", "parts": [{"text": text}]}, "finishReason": "STOP"}],
            "usageMetadata": {"promptTokenCount": input_tokens, "candidatesTokenCount": output_tokens}
        }),
    };
    v.to_string()
}
