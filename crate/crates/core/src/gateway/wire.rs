//! Request and response bodies of the chat-completion HTTP interface.
//!
//! Field layout is documented in `docs/wire-format.md`.

use base64::Engine;
use serde_json::{json, Value};

use super::{BackendConfig, BackendError, ChatRequest, Usage};

fn user_content(request: &ChatRequest) -> Value {
    if request.attachments.is_empty() {
        return Value::String(request.user_text.clone());
    }
    let mut parts = vec![json!({"type": "text", "text": request.user_text})];
    for attachment in &request.attachments {
        let data = base64::engine::general_purpose::STANDARD.encode(attachment.bytes.as_slice());
        parts.push(json!({
            "type": "image_url",
            "image_url": {"url": format!("data:{};base64,{}", attachment.media_type, data)}
        }));
    }
    Value::Array(parts)
}

pub fn request_body(config: &BackendConfig, request: &ChatRequest) -> Value {
    let mut messages = Vec::new();
    if !request.system_text.is_empty() {
        messages.push(json!({"role": "system", "content": request.system_text}));
    }
    messages.push(json!({"role": "user", "content": user_content(request)}));
    for turn in &request.followups {
        messages.push(json!({"role": turn.role.as_str(), "content": turn.content}));
    }
    json!({
        "model": config.model_name,
        "messages": messages,
        "temperature": config.temperature,
        "max_tokens": config.max_output_tokens,
        "stream": false,
    })
}

/// Extracts `choices[0].message.content` and `usage`.
pub fn parse_response_body(body: &str) -> Result<(String, Option<Usage>), BackendError> {
    let value: Value =
        serde_json::from_str(body).map_err(|e| BackendError::InvalidResponse(e.to_string()))?;
    let text = value
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| BackendError::InvalidResponse("missing choices[0].message.content".into()))?
        .to_string();
    let usage = value.get("usage").map(|u| Usage {
        prompt_tokens: u.get("prompt_tokens").and_then(Value::as_u64).unwrap_or(0),
        completion_tokens: u
            .get("completion_tokens")
            .and_then(Value::as_u64)
            .unwrap_or(0),
    });
    Ok((text, usage))
}

/// Builds a minimal successful response body; used by fake servers in tests.
pub fn response_body(model: &str, text: &str) -> String {
    json!({
        "id": "chatcmpl-local",
        "object": "chat.completion",
        "model": model,
        "choices": [{
            "index": 0,
            "message": {"role": "assistant", "content": text},
            "finish_reason": "stop"
        }],
        "usage": {"prompt_tokens": 0, "completion_tokens": 0, "total_tokens": 0}
    })
    .to_string()
}

/// Text of the last user message in a request body.
pub fn last_user_text(body: &Value) -> Option<String> {
    let messages = body.get("messages")?.as_array()?;
    let user = messages.iter().rev().find(|m| m["role"] == "user")?;
    match &user["content"] {
        Value::String(s) => Some(s.clone()),
        Value::Array(parts) => parts
            .iter()
            .find(|p| p["type"] == "text")
            .and_then(|p| p["text"].as_str())
            .map(String::from),
        _ => None,
    }
}
