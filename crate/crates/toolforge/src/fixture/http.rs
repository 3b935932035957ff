//! Wire-level binding: serve the fixture site over local HTTP. The handler
//! is the same `handle_request` the in-process backend uses, so both
//! surfaces share one source of truth for semantics.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use url::form_urlencoded;

use super::site::handle_request;
use super::{seed_env_with, FixtureConfig, FixtureState};

pub struct FixtureServer {
    pub port: u16,
    shutdown: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl FixtureServer {
    /// Bind 127.0.0.1 on the given port (0 picks an ephemeral one) and serve
    /// until shut down.
    pub fn start(seed: u64, config: FixtureConfig, port: u16) -> std::io::Result<FixtureServer> {
        let listener = TcpListener::bind(("127.0.0.1", port))?;
        let port = listener.local_addr()?.port();
        listener.set_nonblocking(true)?;
        let shutdown = Arc::new(AtomicBool::new(false));
        let flag = shutdown.clone();
        let state = Arc::new(Mutex::new(seed_env_with(seed, config)));

        let handle = std::thread::spawn(move || {
            while !flag.load(Ordering::Relaxed) {
                match listener.accept() {
                    Ok((stream, _)) => {
                        let state = state.clone();
                        if let Err(e) = serve_connection(stream, &state) {
                            eprintln!("fixture-server: connection error: {e}");
                        }
                    }
                    Err(ref e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                        std::thread::sleep(Duration::from_millis(5));
                    }
                    Err(e) => {
                        eprintln!("fixture-server: accept error: {e}");
                        break;
                    }
                }
            }
        });

        Ok(FixtureServer { port, shutdown, handle: Some(handle) })
    }

    pub fn base_url(&self) -> String {
        format!("http://127.0.0.1:{}", self.port)
    }

    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        self.shutdown.store(true, Ordering::Relaxed);
        if let Some(handle) = self.handle.take() {
            let _ = handle.join();
        }
    }
}

impl Drop for FixtureServer {
    fn drop(&mut self) {
        self.stop();
    }
}

fn serve_connection(stream: TcpStream, state: &Mutex<FixtureState>) -> std::io::Result<()> {
    stream.set_read_timeout(Some(Duration::from_secs(5)))?;
    let mut reader = BufReader::new(stream.try_clone()?);

    let mut request_line = String::new();
    reader.read_line(&mut request_line)?;
    let mut parts = request_line.split_whitespace();
    let method = parts.next().unwrap_or("GET").to_string();
    let target = parts.next().unwrap_or("/").to_string();

    let mut content_length = 0usize;
    loop {
        let mut line = String::new();
        reader.read_line(&mut line)?;
        if let Some(rest) = line.to_ascii_lowercase().strip_prefix("content-length:") {
            content_length = rest.trim().parse().unwrap_or(0);
        }
        if line == "\r\n" || line.is_empty() {
            break;
        }
    }
    let mut body = vec![0u8; content_length];
    if content_length > 0 {
        reader.read_exact(&mut body)?;
    }
    let form: Vec<(String, String)> = form_urlencoded::parse(&body)
        .map(|(k, v)| (k.into_owned(), v.into_owned()))
        .collect();

    let response = {
        let mut state = state.lock().expect("fixture state lock");
        handle_request(&mut state, &method, &target, &form)
    };

    let mut stream = stream;
    if let Some(location) = &response.redirect {
        let payload = format!(
            "HTTP/1.1 302 Found\r\nLocation: {location}\r\nContent-Length: 0\r\nConnection: close\r\n\r\n"
        );
        stream.write_all(payload.as_bytes())?;
        return Ok(());
    }
    let html = format!("<!DOCTYPE html>{}", response.doc.to_html());
    let payload = format!(
        "HTTP/1.1 {} {}\r\nContent-Type: text/html; charset=utf-8\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{html}",
        response.status,
        status_text(response.status),
        html.len()
    );
    stream.write_all(payload.as_bytes())
}

fn status_text(status: u16) -> &'static str {
    match status {
        200 => "OK",
        302 => "Found",
        400 => "Bad Request",
        404 => "Not Found",
        _ => "Unknown",
    }
}

/// Minimal HTTP client for wire-level tests: returns (status, headers, body).
pub fn http_request(
    port: u16,
    method: &str,
    target: &str,
    form_body: Option<&str>,
) -> std::io::Result<(u16, String, String)> {
    let mut stream = TcpStream::connect(("127.0.0.1", port))?;
    stream.set_read_timeout(Some(Duration::from_secs(5)))?;
    let body = form_body.unwrap_or("");
    let request = format!(
        "{method} {target} HTTP/1.1\r\nHost: 127.0.0.1\r\nContent-Type: application/x-www-form-urlencoded\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    );
    stream.write_all(request.as_bytes())?;
    let mut raw = String::new();
    stream.read_to_string(&mut raw)?;
    let status: u16 = raw
        .split_whitespace()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(0);
    let split = raw.find("\r\n\r\n").map(|p| p + 4).unwrap_or(raw.len());
    let (headers, body) = raw.split_at(split);
    Ok((status, headers.to_string(), body.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn serves_search_over_the_wire() {
        let server = FixtureServer::start(0, FixtureConfig::default(), 0).unwrap();
        let (status, _, body) =
            http_request(server.port, "GET", "/search?q=kayak&sort=price_asc", None).unwrap();
        assert_eq!(status, 200);
        assert!(body.contains("listing-card"));
        server.shutdown();
    }

    #[test]
    fn post_comment_redirects_and_persists() {
        let server = FixtureServer::start(0, FixtureConfig::default(), 0).unwrap();
        let (status, headers, _) = http_request(
            server.port,
            "POST",
            "/listing/7/comment",
            Some("text=offer+%2410+under"),
        )
        .unwrap();
        assert_eq!(status, 302);
        assert!(headers.contains("Location: /listing/7"));
        let (_, _, body) = http_request(server.port, "GET", "/listing/7", None).unwrap();
        assert!(body.contains("offer $10 under"));
        server.shutdown();
    }

    #[test]
    fn unknown_route_is_404_over_the_wire() {
        let server = FixtureServer::start(0, FixtureConfig::default(), 0).unwrap();
        let (status, _, _) = http_request(server.port, "GET", "/nope", None).unwrap();
        assert_eq!(status, 404);
        server.shutdown();
    }
}
