//! Chat-completions transport that sends the image as a base64 PNG data URL.

use std::time::Duration;

use base64::Engine;
use serde_json::{json, Value};

use super::{QueryRequest, Transport, TransportError};

pub struct HttpTransport {
    client: reqwest::blocking::Client,
    url: String,
    token: Option<String>,
    remote_model: Option<String>,
}

impl HttpTransport {
    pub fn new(url: impl Into<String>, token: Option<String>, remote_model: Option<String>, timeout: Duration) -> Self {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .expect("reqwest client");
        Self {
            client,
            url: url.into(),
            token,
            remote_model,
        }
    }

    pub fn request_body(&self, req: &QueryRequest<'_>) -> Result<Value, TransportError> {
        let png = req
            .image
            .encode_png()
            .map_err(|e| TransportError::Permanent(format!("png encode: {e}")))?;
        let data_url = format!(
            "data:image/png;base64,{}",
            base64::engine::general_purpose::STANDARD.encode(png)
        );
        Ok(json!({
            "model": self.remote_model.as_deref().unwrap_or(req.model_id),
            "temperature": req.params.temperature,
            "max_tokens": req.params.max_tokens,
            "messages": [{
                "role": "user",
                "content": [
                    {"type": "text", "text": req.prompt},
                    {"type": "image_url", "image_url": {"url": data_url}},
                ],
            }],
        }))
    }
}

/// Pull the reply text out of a chat-completions response body.
pub fn extract_content(body: &Value) -> Result<String, TransportError> {
    let content = &body["choices"][0]["message"]["content"];
    match content {
        Value::String(s) => Ok(s.clone()),
        // Some servers return a list of typed parts.
        Value::Array(parts) => {
            let text: Vec<&str> = parts.iter().filter_map(|p| p["text"].as_str()).collect();
            if text.is_empty() {
                Err(TransportError::Malformed("no text parts in content".into()))
            } else {
                Ok(text.join(""))
            }
        }
        _ => Err(TransportError::Malformed("missing choices[0].message.content".into())),
    }
}

pub fn classify_status(status: u16, body: &str) -> TransportError {
    let msg = format!("HTTP {status}: {}", body.chars().take(200).collect::<String>());
    match status {
        401 | 403 => TransportError::Auth(msg),
        408 | 429 | 500..=599 => TransportError::Transient(msg),
        _ => TransportError::Permanent(msg),
    }
}

impl Transport for HttpTransport {
    fn complete(&self, req: &QueryRequest<'_>) -> Result<String, TransportError> {
        let body = self.request_body(req)?;
        let mut rb = self.client.post(&self.url).json(&body);
        if let Some(t) = &self.token {
            rb = rb.bearer_auth(t);
        }
        let resp = rb.send().map_err(|e| TransportError::Transient(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp.text().map_err(|e| TransportError::Transient(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(classify_status(status, &text));
        }
        let v: Value = serde_json::from_str(&text).map_err(|e| TransportError::Malformed(e.to_string()))?;
        extract_content(&v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn status_classes() {
        assert!(matches!(classify_status(401, ""), TransportError::Auth(_)));
        assert!(matches!(classify_status(403, ""), TransportError::Auth(_)));
        assert!(matches!(classify_status(429, ""), TransportError::Transient(_)));
        assert!(matches!(classify_status(503, ""), TransportError::Transient(_)));
        assert!(matches!(classify_status(400, ""), TransportError::Permanent(_)));
        assert!(matches!(classify_status(404, ""), TransportError::Permanent(_)));
    }

    #[test]
    fn content_shapes() {
        let v = json!({"choices":[{"message":{"content":"TEXT: NONE"}}]});
        assert_eq!(extract_content(&v).unwrap(), "TEXT: NONE");
        let v = json!({"choices":[{"message":{"content":[{"type":"text","text":"TEXT: "},{"type":"text","text":"KFC"}]}}]});
        assert_eq!(extract_content(&v).unwrap(), "TEXT: KFC");
        assert!(matches!(extract_content(&json!({"error":"x"})), Err(TransportError::Malformed(_))));
    }
}
