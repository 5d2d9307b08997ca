use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde_json::{json, Value};

use super::{ChatModel, ChatRequest, LlmConfig, LlmError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base: Duration,
    pub max: Duration,
}

impl RetryPolicy {
    /// Delay before retry number `attempt` (0-based), honoring a server hint.
    pub fn delay(&self, attempt: u32, retry_after: Option<Duration>) -> Duration {
        let exp = self
            .base
            .saturating_mul(1u32.checked_shl(attempt).unwrap_or(u32::MAX));
        retry_after.unwrap_or(exp).min(self.max)
    }
}

fn retryable(e: &LlmError) -> bool {
    match e {
        LlmError::Http { status, .. } => *status == 429 || *status >= 500,
        LlmError::Transport(_) | LlmError::Timeout => true,
        _ => false,
    }
}

/// Counting semaphore bounding in-flight requests.
struct Limiter {
    free: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a Limiter);

impl Limiter {
    fn new(n: usize) -> Self {
        Self {
            free: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.cv.notify_one();
    }
}

/// OpenAI-compatible `/chat/completions` client.
pub struct HttpChat {
    client: reqwest::blocking::Client,
    url: String,
    model: String,
    api_key: String,
    policy: RetryPolicy,
    limiter: Limiter,
}

impl HttpChat {
    /// Reads the key from the environment variable named in the config.
    pub fn from_config(cfg: &LlmConfig) -> Result<Self, LlmError> {
        let api_key = std::env::var(&cfg.api_key_env)
            .map_err(|_| LlmError::MissingApiKey(cfg.api_key_env.clone()))?;
        Self::new(cfg, api_key)
    }

    pub fn new(cfg: &LlmConfig, api_key: String) -> Result<Self, LlmError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(cfg.timeout_secs))
            .build()
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        Ok(Self {
            client,
            url: format!("{}/chat/completions", cfg.endpoint.trim_end_matches('/')),
            model: cfg.model.clone(),
            api_key,
            policy: RetryPolicy {
                max_retries: cfg.max_retries,
                base: Duration::from_millis(cfg.backoff_base_ms),
                max: Duration::from_millis(cfg.backoff_max_ms),
            },
            limiter: Limiter::new(cfg.max_concurrency),
        })
    }

    fn once(&self, req: &ChatRequest) -> Result<String, (LlmError, Option<Duration>)> {
        let body = json!({
            "model": self.model,
            "temperature": req.temperature,
            "messages": req.messages,
        });
        let resp = self
            .client
            .post(&self.url)
            .bearer_auth(&self.api_key)
            .json(&body)
            .send()
            .map_err(|e| {
                let err = if e.is_timeout() {
                    LlmError::Timeout
                } else {
                    LlmError::Transport(e.to_string())
                };
                (err, None)
            })?;
        let status = resp.status();
        if !status.is_success() {
            let hint = resp
                .headers()
                .get(reqwest::header::RETRY_AFTER)
                .and_then(|v| v.to_str().ok())
                .and_then(|v| v.trim().parse::<u64>().ok())
                .map(Duration::from_secs);
            let body = resp.text().unwrap_or_default();
            return Err((
                LlmError::Http {
                    status: status.as_u16(),
                    body,
                },
                hint,
            ));
        }
        let v: Value = resp
            .json()
            .map_err(|e| (LlmError::Malformed(e.to_string()), None))?;
        v.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| (LlmError::Malformed("no choices[0].message.content".into()), None))
    }
}

impl ChatModel for HttpChat {
    fn complete(&self, req: &ChatRequest) -> Result<String, LlmError> {
        let _permit = self.limiter.acquire();
        let mut attempt = 0;
        loop {
            match self.once(req) {
                Ok(text) => return Ok(text),
                Err((e, hint)) if retryable(&e) && attempt < self.policy.max_retries => {
                    let wait = self.policy.delay(attempt, hint);
                    log::warn!("chat request failed ({e}); retry {} in {wait:?}", attempt + 1);
                    std::thread::sleep(wait);
                    attempt += 1;
                }
                Err((e, _)) => return Err(e),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{ChatMessage, TaskKind};
    use std::io::{Read, Write};
    use std::net::TcpListener;

    fn serve(responses: Vec<(u16, &'static str, String)>) -> (String, std::thread::JoinHandle<usize>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let handle = std::thread::spawn(move || {
            let mut served = 0;
            for (status, extra, body) in responses {
                let (mut s, _) = listener.accept().unwrap();
                let mut buf = [0u8; 8192];
                let _ = s.read(&mut buf);
                let msg = format!(
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\n{extra}Content-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                );
                s.write_all(msg.as_bytes()).unwrap();
                served += 1;
            }
            served
        });
        (format!("http://{addr}/v1"), handle)
    }

    fn cfg(endpoint: String) -> LlmConfig {
        LlmConfig {
            endpoint,
            backoff_base_ms: 1,
            backoff_max_ms: 5,
            max_retries: 2,
            timeout_secs: 5,
            ..LlmConfig::default()
        }
    }

    fn req() -> ChatRequest {
        ChatRequest {
            task: TaskKind::ReasoningStep,
            messages: vec![ChatMessage::user("hello")],
            temperature: 0.0,
        }
    }

    #[test]
    fn retries_rate_limits_then_succeeds() {
        let ok = r#"{"choices":[{"message":{"role":"assistant","content":"hi there"}}]}"#;
        let (url, h) = serve(vec![
            (429, "Retry-After: 0\r\n", "{}".into()),
            (503, "", "{}".into()),
            (200, "", ok.into()),
        ]);
        let chat = HttpChat::new(&cfg(url), "k".into()).unwrap();
        assert_eq!(chat.complete(&req()).unwrap(), "hi there");
        assert_eq!(h.join().unwrap(), 3);
    }

    #[test]
    fn client_errors_are_not_retried() {
        let (url, h) = serve(vec![(400, "", "bad".into())]);
        let chat = HttpChat::new(&cfg(url), "k".into()).unwrap();
        assert_eq!(
            chat.complete(&req()),
            Err(LlmError::Http {
                status: 400,
                body: "bad".into()
            })
        );
        assert_eq!(h.join().unwrap(), 1);
    }

    #[test]
    fn missing_key_is_reported() {
        let c = LlmConfig {
            api_key_env: "AMBIVIS_TEST_UNSET_KEY".into(),
            ..LlmConfig::default()
        };
        assert!(matches!(
            HttpChat::from_config(&c),
            Err(LlmError::MissingApiKey(_))
        ));
    }

    #[test]
    fn backoff_doubles_and_caps() {
        let p = RetryPolicy {
            max_retries: 5,
            base: Duration::from_millis(100),
            max: Duration::from_millis(350),
        };
        assert_eq!(p.delay(0, None), Duration::from_millis(100));
        assert_eq!(p.delay(1, None), Duration::from_millis(200));
        assert_eq!(p.delay(2, None), Duration::from_millis(350));
        assert_eq!(p.delay(0, Some(Duration::from_secs(9))), Duration::from_millis(350));
    }
}
