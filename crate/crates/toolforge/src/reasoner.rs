//! HTTP binding of the reasoner contract: POST a JSON request
//! (`task`, `max_steps`, `current_url`, `dom_snapshot`) and read back
//! `{"commands": [...]}` with ordered primitive commands. Any reasoning
//! service speaking this shape plugs in; the scripted stub in `exec` covers
//! offline runs.

use std::io::{Read, Write};
use std::net::TcpStream;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::exec::{PrimitiveCommand, Reasoner, ReasonerError, ReasonerRequest};

#[derive(Debug, Serialize, Deserialize)]
pub struct ReasonerResponse {
    pub commands: Vec<PrimitiveCommand>,
}

pub struct HttpReasoner {
    host: String,
    port: u16,
    path: String,
}

impl HttpReasoner {
    /// `endpoint` like `http://127.0.0.1:8700/plan`.
    pub fn new(endpoint: &str) -> Result<Self, ReasonerError> {
        let parsed = url::Url::parse(endpoint)
            .map_err(|e| ReasonerError::Transport(format!("bad endpoint `{endpoint}`: {e}")))?;
        let host = parsed
            .host_str()
            .ok_or_else(|| ReasonerError::Transport("endpoint has no host".to_string()))?
            .to_string();
        let port = parsed.port().unwrap_or(80);
        let path = if parsed.path().is_empty() { "/".to_string() } else { parsed.path().to_string() };
        Ok(HttpReasoner { host, port, path })
    }
}

impl Reasoner for HttpReasoner {
    fn plan(&mut self, request: &ReasonerRequest) -> Result<Vec<PrimitiveCommand>, ReasonerError> {
        let body = serde_json::to_string(request)
            .map_err(|e| ReasonerError::Transport(e.to_string()))?;
        let raw = http_post(&self.host, self.port, &self.path, &body)
            .map_err(|e| ReasonerError::Transport(e.to_string()))?;
        let (status, payload) = split_response(&raw)
            .ok_or_else(|| ReasonerError::Malformed("unparseable HTTP response".to_string()))?;
        if status != 200 {
            return Err(ReasonerError::Transport(format!("reasoner returned HTTP {status}")));
        }
        let response: ReasonerResponse = serde_json::from_str(payload)
            .map_err(|e| ReasonerError::Malformed(e.to_string()))?;
        Ok(response.commands)
    }
}

fn http_post(host: &str, port: u16, path: &str, body: &str) -> std::io::Result<String> {
    let mut stream = TcpStream::connect((host, port))?;
    stream.set_read_timeout(Some(Duration::from_secs(10)))?;
    let request = format!(
        "POST {path} HTTP/1.1\r\nHost: {host}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    );
    stream.write_all(request.as_bytes())?;
    let mut response = String::new();
    stream.read_to_string(&mut response)?;
    Ok(response)
}

fn split_response(raw: &str) -> Option<(u16, &str)> {
    let status: u16 = raw.split_whitespace().nth(1)?.parse().ok()?;
    let body_start = raw.find("\r\n\r\n")? + 4;
    Some((status, &raw[body_start..]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::BufRead;
    use std::net::TcpListener;

    /// One-shot stub server speaking just enough HTTP for the client.
    fn spawn_stub(commands_json: &'static str) -> u16 {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let port = listener.local_addr().unwrap().port();
        std::thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = std::io::BufReader::new(stream.try_clone().unwrap());
            let mut content_length = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if let Some(rest) = line.to_lowercase().strip_prefix("content-length:") {
                    content_length = rest.trim().parse().unwrap();
                }
                if line == "\r\n" {
                    break;
                }
            }
            let mut body = vec![0u8; content_length];
            std::io::Read::read_exact(&mut reader, &mut body).unwrap();
            // echo-check that the request parses as a ReasonerRequest
            let _req: ReasonerRequest = serde_json::from_slice(&body).unwrap();
            let mut stream = stream;
            let response = format!(
                "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{commands_json}",
                commands_json.len()
            );
            stream.write_all(response.as_bytes()).unwrap();
        });
        port
    }

    #[test]
    fn round_trips_commands_over_http() {
        let port = spawn_stub(r##"{"commands":[{"op":"click","selector":"#popup-close"}]}"##);
        let mut reasoner = HttpReasoner::new(&format!("http://127.0.0.1:{port}/plan")).unwrap();
        let commands = reasoner
            .plan(&ReasonerRequest {
                task: "dismiss the popup".to_string(),
                max_steps: 3,
                current_url: "http://fixture.local/".to_string(),
                dom_snapshot: "<html></html>".to_string(),
            })
            .unwrap();
        assert_eq!(
            commands,
            vec![PrimitiveCommand::Click { selector: "#popup-close".to_string() }]
        );
    }

    #[test]
    fn malformed_body_is_reported() {
        let port = spawn_stub(r#"{"nope": true}"#);
        let mut reasoner = HttpReasoner::new(&format!("http://127.0.0.1:{port}/plan")).unwrap();
        let err = reasoner
            .plan(&ReasonerRequest {
                task: "t".to_string(),
                max_steps: 1,
                current_url: String::new(),
                dom_snapshot: String::new(),
            })
            .unwrap_err();
        assert!(matches!(err, ReasonerError::Malformed(_)));
    }

    #[test]
    fn unreachable_endpoint_is_transport_error() {
        let mut reasoner = HttpReasoner::new("http://127.0.0.1:1/plan").unwrap();
        let err = reasoner
            .plan(&ReasonerRequest {
                task: "t".to_string(),
                max_steps: 1,
                current_url: String::new(),
                dom_snapshot: String::new(),
            })
            .unwrap_err();
        assert!(matches!(err, ReasonerError::Transport(_)));
    }
}
