//! Generation of AI significance statements through a chat-completion API.
//!
//! Every attempt is appended to a JSONL audit log. Over-length replies are
//! sent back with a corrective turn and rejected if they stay too long;
//! they are never truncated.

use std::collections::{BTreeMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{Corpus, DocKind, Document};
use crate::error::{Error, Result};
use crate::textmetrics::word_count;

/// Instruction text placed before the abstract.
pub const PROMPT_HEAD: &str = "The following text is an academic abstract from the journal Proceedings of the National Academy of Sciences. Based on this abstract, create a significance statement. This statement should provide enough context for the paper's implications to be clear to readers. The statement should not contain references and should avoid numbers, measurements, and acronyms unless necessary. It should explain the significance of the research at a level understandable to an undergraduate-educated scientist outside their field of specialty. Finally, it should include no more than 120 words.";

/// Cue placed after the abstract.
pub const PROMPT_TAIL: &str = "Write the significance statement here:";

pub const DEFAULT_WORD_LIMIT: usize = 120;
pub const DEFAULT_API_KEY_VAR: &str = "OPENAI_API_KEY";
pub const DEFAULT_ENDPOINT: &str = "https://api.openai.com/v1/chat/completions";

pub fn render_prompt(doc: &Document) -> Result<String> {
    if doc.kind != DocKind::Abstract {
        return Err(Error::InvalidArgument(format!(
            "document {:?} is a {}, prompts are built from abstracts",
            doc.id, doc.kind
        )));
    }
    if doc.text.trim().is_empty() {
        return Err(Error::EmptyText);
    }
    Ok(format!("{PROMPT_HEAD}\n\n{}\n\n{PROMPT_TAIL}", doc.text))
}

/// SHA-256 of the template with a placeholder where the abstract goes.
pub fn template_hash() -> String {
    sha256_hex(format!("{PROMPT_HEAD}\n\n{{abstract}}\n\n{PROMPT_TAIL}").as_bytes())
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage {
            role: "user".into(),
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        ChatMessage {
            role: "assistant".into(),
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
}

impl ChatRequest {
    pub fn hash(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("chat request serializes"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatReply {
    pub text: String,
    pub request_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TransportError {
    /// Network failures, rate limits and server errors.
    #[error("{0}")]
    Retryable(String),
    #[error("{0}")]
    Fatal(String),
}

pub trait ChatTransport: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> std::result::Result<ChatReply, TransportError>;
}

impl<F> ChatTransport for F
where
    F: Fn(&ChatRequest) -> std::result::Result<ChatReply, TransportError> + Send + Sync,
{
    fn complete(&self, request: &ChatRequest) -> std::result::Result<ChatReply, TransportError> {
        self(request)
    }
}

/// OpenAI-compatible chat-completion endpoint over HTTP.
pub struct HttpTransport {
    endpoint: String,
    api_key: Option<String>,
    agent: ureq::Agent,
}

#[derive(Deserialize)]
struct WireResponse {
    id: Option<String>,
    choices: Vec<WireChoice>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: ChatMessage,
}

impl HttpTransport {
    pub fn new(endpoint: impl Into<String>, api_key: Option<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        HttpTransport {
            endpoint: endpoint.into(),
            api_key,
            agent,
        }
    }

    /// Reads the API key from `key_var`; a missing key is allowed so local
    /// mock servers work without credentials.
    pub fn from_env(endpoint: impl Into<String>, key_var: &str, timeout: Duration) -> Self {
        let key = std::env::var(key_var).ok().filter(|k| !k.is_empty());
        if key.is_none() {
            log::warn!("{key_var} is not set; sending requests without credentials");
        }
        Self::new(endpoint, key, timeout)
    }
}

impl ChatTransport for HttpTransport {
    fn complete(&self, request: &ChatRequest) -> std::result::Result<ChatReply, TransportError> {
        let mut call = self.agent.post(&self.endpoint);
        if let Some(key) = &self.api_key {
            call = call.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = call
            .send_json(request)
            .map_err(|e| TransportError::Retryable(format!("request to {} failed: {e}", self.endpoint)))?;
        let status = response.status().as_u16();
        if !(200..300).contains(&status) {
            let body = response.body_mut().read_to_string().unwrap_or_default();
            let message = format!("HTTP {status}: {}", body.chars().take(300).collect::<String>());
            return Err(if status == 429 || status >= 500 {
                TransportError::Retryable(message)
            } else {
                TransportError::Fatal(message)
            });
        }
        let wire: WireResponse = response
            .body_mut()
            .read_json()
            .map_err(|e| TransportError::Fatal(format!("malformed completion body: {e}")))?;
        let choice = wire
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| TransportError::Fatal("completion has no choices".into()))?;
        Ok(ChatReply {
            text: choice.message.content,
            request_id: wire.id,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Backoff {
    /// Total tries per request, first one included.
    pub max_attempts: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
}

impl Default for Backoff {
    fn default() -> Self {
        Backoff {
            max_attempts: 5,
            base_delay_ms: 1000,
            max_delay_ms: 30_000,
        }
    }
}

impl Backoff {
    pub fn delay(&self, failures: u32) -> Duration {
        let factor = 1u64 << failures.saturating_sub(1).min(20);
        Duration::from_millis(self.base_delay_ms.saturating_mul(factor).min(self.max_delay_ms))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub model: String,
    pub temperature: f64,
    /// Extra attempts after an over-length reply.
    pub max_retries: usize,
    pub word_limit: usize,
    pub backoff: Backoff,
    /// Requests in flight at once.
    pub jobs: usize,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            model: "gpt-4".into(),
            temperature: 1.0,
            max_retries: 2,
            word_limit: DEFAULT_WORD_LIMIT,
            backoff: Backoff::default(),
            jobs: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationJob {
    pub abstract_id: String,
    pub prompt: String,
    pub model_name: String,
    pub temperature: f64,
    pub max_retries: usize,
    pub word_limit: usize,
}

impl GenerationJob {
    pub fn new(doc: &Document, config: &GenerationConfig) -> Result<Self> {
        if config.word_limit == 0 {
            return Err(Error::InvalidArgument("word limit must be positive".into()));
        }
        if !(config.temperature >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "temperature must be non-negative, got {}",
                config.temperature
            )));
        }
        Ok(GenerationJob {
            abstract_id: doc.id.clone(),
            prompt: render_prompt(doc)?,
            model_name: config.model.clone(),
            temperature: config.temperature,
            max_retries: config.max_retries,
            word_limit: config.word_limit,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenerationStatus {
    Accepted,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationResult {
    pub abstract_id: String,
    pub text: String,
    pub word_count: usize,
    pub attempts: usize,
    pub model_name: String,
    pub timestamp: String,
    pub raw_request_id: Option<String>,
    pub status: GenerationStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttemptStatus {
    Accepted,
    /// Too long or empty; another attempt follows.
    OverLimit,
    /// Too long or empty on the final attempt.
    Rejected,
    TransportError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub id: String,
    pub attempt: usize,
    pub request_hash: String,
    pub response_text: String,
    pub word_count: usize,
    pub status: AttemptStatus,
    pub timestamp: String,
}

/// Append-only JSONL log shared by all workers.
pub struct AuditLog {
    path: PathBuf,
    file: Mutex<File>,
}

impl AuditLog {
    pub fn open(path: &Path) -> Result<Self> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        Ok(AuditLog {
            path: path.to_path_buf(),
            file: Mutex::new(file),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&self, record: &AuditRecord) -> Result<()> {
        let mut line = serde_json::to_vec(record)?;
        line.push(b'\n');
        let mut file = self.file.lock().unwrap_or_else(|p| p.into_inner());
        file.write_all(&line).map_err(|e| Error::io(&self.path, e))?;
        file.flush().map_err(|e| Error::io(&self.path, e))
    }
}

/// Reads an audit log; a missing file is an empty log. A truncated final
/// line, as left by an interrupted run, is ignored.
pub fn read_audit(path: &Path) -> Result<Vec<AuditRecord>> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(Error::io(path, e)),
    };
    let lines: Vec<String> = BufReader::new(file)
        .lines()
        .collect::<std::io::Result<_>>()
        .map_err(|e| Error::io(path, e))?;
    let last = lines.len();
    let mut records = Vec::new();
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(line) {
            Ok(r) => records.push(r),
            Err(_) if i + 1 == last => log::warn!("ignoring truncated final audit line"),
            Err(e) => {
                return Err(Error::MalformedRecord {
                    line: i + 1,
                    message: e.to_string(),
                })
            }
        }
    }
    Ok(records)
}

/// Last accepted record for each id.
pub fn accepted_records(records: &[AuditRecord]) -> BTreeMap<String, AuditRecord> {
    records
        .iter()
        .filter(|r| r.status == AttemptStatus::Accepted)
        .map(|r| (r.id.clone(), r.clone()))
        .collect()
}

type Sleeper = Arc<dyn Fn(Duration) + Send + Sync>;

pub struct Generator<T: ChatTransport> {
    transport: T,
    config: GenerationConfig,
    sleep: Sleeper,
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

const CORRECTION: &str = "That statement has {count} words. Rewrite it so it has no more than {limit} words.";

impl<T: ChatTransport> Generator<T> {
    pub fn new(transport: T, config: GenerationConfig) -> Self {
        Generator {
            transport,
            config,
            sleep: Arc::new(std::thread::sleep),
        }
    }

    /// Replaces the backoff sleep, e.g. with a no-op in tests.
    pub fn with_sleeper(mut self, sleep: impl Fn(Duration) + Send + Sync + 'static) -> Self {
        self.sleep = Arc::new(sleep);
        self
    }

    pub fn config(&self) -> &GenerationConfig {
        &self.config
    }

    fn send(&self, job: &GenerationJob, attempt: usize, request: &ChatRequest, audit: &AuditLog) -> Result<ChatReply> {
        let backoff = &self.config.backoff;
        let mut failures = 0;
        loop {
            match self.transport.complete(request) {
                Ok(reply) => return Ok(reply),
                Err(err) => {
                    failures += 1;
                    audit.append(&AuditRecord {
                        id: job.abstract_id.clone(),
                        attempt,
                        request_hash: request.hash(),
                        response_text: err.to_string(),
                        word_count: 0,
                        status: AttemptStatus::TransportError,
                        timestamp: now(),
                    })?;
                    let retryable = matches!(err, TransportError::Retryable(_));
                    if !retryable || failures >= backoff.max_attempts {
                        return Err(Error::Transport(format!(
                            "{}: {err} (after {failures} tries)",
                            job.abstract_id
                        )));
                    }
                    (self.sleep)(backoff.delay(failures));
                }
            }
        }
    }

    pub fn generate(&self, job: &GenerationJob, audit: &AuditLog) -> Result<GenerationResult> {
        let mut messages = vec![ChatMessage::user(job.prompt.clone())];
        let total = job.max_retries + 1;
        for attempt in 1..=total {
            let request = ChatRequest {
                model: job.model_name.clone(),
                messages: messages.clone(),
                temperature: job.temperature,
            };
            let reply = self.send(job, attempt, &request, audit)?;
            let count = word_count(&reply.text);
            let fits = count > 0 && count <= job.word_limit;
            let status = if fits {
                AttemptStatus::Accepted
            } else if attempt < total {
                AttemptStatus::OverLimit
            } else {
                AttemptStatus::Rejected
            };
            let timestamp = now();
            audit.append(&AuditRecord {
                id: job.abstract_id.clone(),
                attempt,
                request_hash: request.hash(),
                response_text: reply.text.clone(),
                word_count: count,
                status,
                timestamp: timestamp.clone(),
            })?;
            if status == AttemptStatus::OverLimit {
                messages.push(ChatMessage::assistant(reply.text));
                messages.push(ChatMessage::user(
                    CORRECTION
                        .replace("{count}", &count.to_string())
                        .replace("{limit}", &job.word_limit.to_string()),
                ));
                continue;
            }
            return Ok(GenerationResult {
                abstract_id: job.abstract_id.clone(),
                text: reply.text,
                word_count: count,
                attempts: attempt,
                model_name: job.model_name.clone(),
                timestamp,
                raw_request_id: reply.request_id,
                status: if fits {
                    GenerationStatus::Accepted
                } else {
                    GenerationStatus::Rejected
                },
            });
        }
        unreachable!("the final attempt always returns")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchOutcome {
    /// AI lay summaries for accepted ids, ordered by id.
    #[serde(skip)]
    pub documents: Vec<Document>,
    pub generated: usize,
    pub resumed: usize,
    pub rejected: Vec<String>,
    pub failed: Vec<(String, String)>,
}

impl BatchOutcome {
    pub fn corpus(&self) -> Result<Corpus> {
        Corpus::from_documents(self.documents.clone())
    }
}

/// Generates a lay summary for every abstract not already accepted in the
/// audit log. Individual failures are reported and do not stop the batch.
pub fn batch_generate<T: ChatTransport>(
    abstracts: &Corpus,
    generator: &Generator<T>,
    audit_path: &Path,
) -> Result<BatchOutcome> {
    if let Some(doc) = abstracts.documents().iter().find(|d| d.kind != DocKind::Abstract) {
        return Err(Error::InvalidArgument(format!(
            "batch generation takes abstracts only; {:?} is a {}",
            doc.id, doc.kind
        )));
    }
    let done = accepted_records(&read_audit(audit_path)?);
    let audit = AuditLog::open(audit_path)?;

    let mut documents = Vec::new();
    let mut pending = Vec::new();
    let mut seen = HashSet::new();
    for doc in abstracts.documents() {
        if !seen.insert(doc.id.as_str()) {
            continue;
        }
        match done.get(&doc.id) {
            Some(record) => documents.push(Document::new(doc.id.clone(), DocKind::AiLay, record.response_text.clone())),
            None => pending.push(GenerationJob::new(doc, generator.config())?),
        }
    }
    let resumed = documents.len();

    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<(String, Result<GenerationResult>)>> = Mutex::new(Vec::new());
    let workers = generator.config().jobs.max(1).min(pending.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(job) = pending.get(i) else { break };
                let outcome = generator.generate(job, &audit);
                results
                    .lock()
                    .unwrap_or_else(|p| p.into_inner())
                    .push((job.abstract_id.clone(), outcome));
            });
        }
    });

    let mut rejected = Vec::new();
    let mut failed = Vec::new();
    let mut generated = 0;
    for (id, outcome) in results.into_inner().unwrap_or_else(|p| p.into_inner()) {
        match outcome {
            Ok(r) if r.status == GenerationStatus::Accepted => {
                generated += 1;
                documents.push(Document::new(id, DocKind::AiLay, r.text));
            }
            Ok(_) => rejected.push(id),
            Err(e) => failed.push((id, e.to_string())),
        }
    }
    documents.sort_by(|a, b| a.id.cmp(&b.id));
    rejected.sort();
    failed.sort();
    for id in &rejected {
        log::warn!("{id}: rejected after exceeding the word limit on every attempt");
    }
    for (id, e) in &failed {
        log::warn!("{id}: generation failed: {e}");
    }
    Ok(BatchOutcome {
        documents,
        generated,
        resumed,
        rejected,
        failed,
    })
}
