use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{ChatModel, ChatRequest, LlmError, TaskKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Entry {
    key: String,
    task: TaskKind,
    response: String,
}

/// Serves responses recorded earlier, keyed by request hash.
#[derive(Debug, Default)]
pub struct ReplayChat {
    entries: BTreeMap<String, String>,
}

impl ReplayChat {
    pub fn load(path: &Path) -> Result<Self, LlmError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LlmError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, LlmError> {
        let mut entries = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let e: Entry = serde_json::from_str(line)
                .map_err(|e| LlmError::Io(format!("replay line {}: {e}", i + 1)))?;
            entries.insert(e.key, e.response);
        }
        Ok(Self { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl ChatModel for ReplayChat {
    fn complete(&self, req: &ChatRequest) -> Result<String, LlmError> {
        let key = req.key();
        self.entries
            .get(&key)
            .cloned()
            .ok_or(LlmError::ReplayMiss(key))
    }
}

/// Passes requests through and remembers every successful exchange.
pub struct RecordingChat<M> {
    inner: M,
    log: Mutex<BTreeMap<String, Entry>>,
}

impl<M: ChatModel> RecordingChat<M> {
    pub fn new(inner: M) -> Self {
        Self {
            inner,
            log: Mutex::new(BTreeMap::new()),
        }
    }

    /// Write the recording as a replay file, sorted by key.
    pub fn save(&self, path: &Path) -> Result<(), LlmError> {
        let io = |e: std::io::Error| LlmError::Io(format!("{}: {e}", path.display()));
        let log = self.log.lock().unwrap_or_else(|e| e.into_inner());
        let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
        for e in log.values() {
            let line = serde_json::to_string(e).expect("entry serializes");
            writeln!(f, "{line}").map_err(io)?;
        }
        f.flush().map_err(io)
    }

    pub fn len(&self) -> usize {
        self.log.lock().unwrap_or_else(|e| e.into_inner()).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl<M: ChatModel> ChatModel for RecordingChat<M> {
    fn complete(&self, req: &ChatRequest) -> Result<String, LlmError> {
        let response = self.inner.complete(req)?;
        let key = req.key();
        self.log.lock().unwrap_or_else(|e| e.into_inner()).insert(
            key.clone(),
            Entry {
                key,
                task: req.task,
                response: response.clone(),
            },
        );
        Ok(response)
    }
}
