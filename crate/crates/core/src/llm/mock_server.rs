//! A local chat-completions server driven by a closure, for tests and
//! offline runs. Speaks the same wire format as the real client expects.

use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use tiny_http::{Header, Response, Server};

use super::ChatRequest;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum MockReply {
    /// 200 with a well-formed completion carrying this text.
    Text(String),
    /// Bare status with an empty JSON body.
    Status(u16),
    /// Arbitrary status and body.
    Raw(u16, String),
}

pub type MockHandler = dyn Fn(&ChatRequest) -> MockReply + Send + Sync;

pub struct MockServer {
    url: String,
    server: Arc<Server>,
    hits: Arc<AtomicUsize>,
    stop: Arc<AtomicBool>,
    workers: Vec<JoinHandle<()>>,
}

pub fn completion_body(text: &str) -> String {
    serde_json::json!({
        "id": "chatcmpl-mock",
        "object": "chat.completion",
        "choices": [{
            "index": 0,
            "message": {"role": "assistant", "content": text},
            "finish_reason": "stop"
        }]
    })
    .to_string()
}

impl MockServer {
    /// Binds an ephemeral localhost port and serves with `threads` workers.
    pub fn start<F>(threads: usize, handler: F) -> std::io::Result<MockServer>
    where
        F: Fn(&ChatRequest) -> MockReply + Send + Sync + 'static,
    {
        let server = Server::http("127.0.0.1:0").map_err(std::io::Error::other)?;
        let port = server.server_addr().to_ip().expect("tcp listener").port();
        let server = Arc::new(server);
        let handler: Arc<MockHandler> = Arc::new(handler);
        let hits = Arc::new(AtomicUsize::new(0));
        let stop = Arc::new(AtomicBool::new(false));
        let workers = (0..threads.max(1))
            .map(|_| {
                let (server, handler, hits, stop) = (server.clone(), handler.clone(), hits.clone(), stop.clone());
                std::thread::spawn(move || loop {
                    let mut rq = match server.recv() {
                        Ok(rq) => rq,
                        Err(_) if stop.load(Ordering::SeqCst) => break,
                        Err(_) => continue,
                    };
                    hits.fetch_add(1, Ordering::SeqCst);
                    let mut body = String::new();
                    let reply = if rq.url().trim_end_matches('/') != "/v1/chat/completions" {
                        MockReply::Status(404)
                    } else if rq.as_reader().read_to_string(&mut body).is_err() {
                        MockReply::Status(400)
                    } else {
                        match serde_json::from_str::<ChatRequest>(&body) {
                            Ok(req) => handler(&req),
                            Err(e) => MockReply::Raw(400, serde_json::json!({"error": e.to_string()}).to_string()),
                        }
                    };
                    let (status, body) = match reply {
                        MockReply::Text(t) => (200, completion_body(&t)),
                        MockReply::Status(s) => (s, "{}".to_string()),
                        MockReply::Raw(s, b) => (s, b),
                    };
                    let header = Header::from_bytes("Content-Type", "application/json").unwrap();
                    let _ = rq.respond(Response::from_string(body).with_status_code(status).with_header(header));
                })
            })
            .collect();
        Ok(MockServer {
            url: format!("http://127.0.0.1:{port}"),
            server,
            hits,
            stop,
            workers,
        })
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    /// Requests received so far, including failed ones.
    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        for _ in &self.workers {
            self.server.unblock();
        }
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }
}
