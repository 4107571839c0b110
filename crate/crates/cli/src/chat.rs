//! Chat-completions client for the prompted policies, speaking the widely
//! used `/chat/completions` JSON shape.

use std::time::Duration;

use prosa_core::policy::{ChatClient, ChatRequest, ClientError};
use serde_json::{json, Value};

pub struct HttpChatClient {
    agent: ureq::Agent,
    endpoint: String,
    api_key: Option<String>,
}

impl HttpChatClient {
    pub fn new(base_url: &str, api_key: Option<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder().timeout_global(Some(timeout)).http_status_as_error(false).build().into();
        Self { agent, endpoint: format!("{}/chat/completions", base_url.trim_end_matches('/')), api_key }
    }
}

/// Request body for one call. Images travel as a data URL next to the text.
pub fn request_body(req: &ChatRequest) -> Value {
    let user = match &req.image_jpeg_base64 {
        Some(b64) => json!([
            {"type": "text", "text": req.user},
            {"type": "image_url", "image_url": {"url": format!("data:image/jpeg;base64,{b64}")}},
        ]),
        None => Value::String(req.user.clone()),
    };
    let mut body = json!({
        "model": req.model,
        "messages": [
            {"role": "system", "content": req.system},
            {"role": "user", "content": user},
        ],
        "temperature": req.temperature,
    });
    if let Some(n) = req.max_tokens {
        body["max_tokens"] = json!(n);
    }
    if req.json_mode {
        body["response_format"] = json!({"type": "json_object"});
    }
    body
}

/// Text of the first choice.
pub fn response_text(v: &Value) -> Result<String, ClientError> {
    v.pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_owned)
        .ok_or_else(|| ClientError::Transport(format!("response has no message content: {v}")))
}

impl ChatClient for HttpChatClient {
    fn complete(&self, req: &ChatRequest) -> Result<String, ClientError> {
        let mut call = self.agent.post(&self.endpoint);
        if let Some(key) = &self.api_key {
            call = call.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = call.send_json(request_body(req)).map_err(|e| ClientError::Transport(e.to_string()))?;
        let status = resp.status();
        let text = resp.body_mut().read_to_string().map_err(|e| ClientError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(ClientError::Transport(format!("HTTP {status}: {text}")));
        }
        response_text(&serde_json::from_str(&text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;

    fn request(image: Option<&str>) -> ChatRequest {
        ChatRequest {
            model: "m".into(),
            system: "sys".into(),
            user: "pick a probe".into(),
            image_jpeg_base64: image.map(str::to_owned),
            temperature: 0.0,
            max_tokens: Some(200),
            json_mode: true,
            attempt: 1,
        }
    }

    #[test]
    fn body_shapes() {
        let b = request_body(&request(None));
        assert_eq!(b["messages"][1]["content"], "pick a probe");
        assert_eq!(b["response_format"]["type"], "json_object");
        assert_eq!(b["max_tokens"], 200);
        let b = request_body(&request(Some("QUJD")));
        assert_eq!(b["messages"][1]["content"][1]["image_url"]["url"], "data:image/jpeg;base64,QUJD");
    }

    // Serves one canned response and hands back the raw request.
    fn one_shot(status: &str, body: &str) -> (String, std::thread::JoinHandle<String>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1", listener.local_addr().unwrap());
        let (status, body) = (status.to_owned(), body.to_owned());
        let handle = std::thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut head = String::new();
            let mut len = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                head.push_str(&line);
                if line == "\r\n" {
                    break;
                }
            }
            let mut payload = vec![0; len];
            reader.read_exact(&mut payload).unwrap();
            let mut s = stream;
            write!(s, "HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}", body.len()).unwrap();
            head + &String::from_utf8(payload).unwrap()
        });
        (url, handle)
    }

    #[test]
    fn round_trip_against_a_local_server() {
        let (url, server) = one_shot("200 OK", r#"{"choices":[{"message":{"role":"assistant","content":"{\"probe\":\"P5\"}"}}]}"#);
        let client = HttpChatClient::new(&url, Some("k123".into()), Duration::from_secs(10));
        assert_eq!(client.complete(&request(None)).unwrap(), r#"{"probe":"P5"}"#);
        let seen = server.join().unwrap();
        assert!(seen.starts_with("POST /v1/chat/completions"), "{seen}");
        assert!(seen.to_ascii_lowercase().contains("authorization: bearer k123"));
        assert!(seen.contains("\"pick a probe\""));
    }

    #[test]
    fn http_errors_are_transport_errors() {
        let (url, server) = one_shot("429 Too Many Requests", r#"{"error":"slow down"}"#);
        let client = HttpChatClient::new(&url, None, Duration::from_secs(10));
        let err = client.complete(&request(None)).unwrap_err();
        assert!(matches!(err, ClientError::Transport(ref m) if m.contains("429")), "{err}");
        server.join().unwrap();
    }
}
