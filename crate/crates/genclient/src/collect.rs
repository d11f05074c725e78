use std::collections::{HashSet, VecDeque};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use reqwest::blocking::Client;
use reqwest::header::{HeaderMap, CONTENT_TYPE, RETRY_AFTER};
use serde::Deserialize;
use serde_json::{json, Value};
use storylens::corpus::Corpus;

use crate::{build_request, GenError, GenerationConfig, Result, SystemRole};

/// One requested completion.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Job {
    pub prompt_id: String,
    pub role: SystemRole,
    pub index: u32,
}

impl Job {
    fn story_id(&self) -> String {
        format!("gen-{}-{}-{}", self.prompt_id, self.role.as_str(), self.index)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CollectReport {
    pub planned: usize,
    pub already_present: usize,
    pub requests: usize,
    pub stories: usize,
    /// Waits before a retry (rate limits, server errors, transport errors).
    pub backoffs: usize,
    pub malformed: usize,
    pub failed: usize,
}

#[derive(Debug, Deserialize)]
struct Meta {
    prompt_id: String,
    role: SystemRole,
    index: u32,
}

#[derive(Debug, Deserialize)]
struct GeneratedLine {
    meta: Meta,
}

/// The jobs already recorded in a generation output file.
pub fn existing_jobs(path: &Path) -> Result<HashSet<Job>> {
    let mut done = HashSet::new();
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(done),
        Err(e) => return Err(io_err(path, e)),
    };
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: GeneratedLine = serde_json::from_str(&line).map_err(|e| GenError::Output {
            path: path.display().to_string(),
            line: i + 1,
            message: format!("not a generated story record: {e}"),
        })?;
        done.insert(Job {
            prompt_id: parsed.meta.prompt_id,
            role: parsed.meta.role,
            index: parsed.meta.index,
        });
    }
    Ok(done)
}

fn io_err(path: &Path, source: std::io::Error) -> GenError {
    GenError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn failures_path(output: &Path) -> PathBuf {
    let mut name = output.file_name().unwrap_or_default().to_os_string();
    name.push(".failures.jsonl");
    output.with_file_name(name)
}

enum Outcome {
    Story(String),
    Malformed(String),
    Failed(String),
}

struct Finished {
    job: Job,
    outcome: Outcome,
    requests: usize,
    backoffs: usize,
}

fn retry_after(headers: &HeaderMap) -> Option<Duration> {
    let value = headers.get(RETRY_AFTER)?.to_str().ok()?;
    value.trim().parse::<f64>().ok().filter(|s| *s >= 0.0).map(Duration::from_secs_f64)
}

fn story_text(body: &[u8]) -> std::result::Result<String, String> {
    let value: Value = serde_json::from_slice(body).map_err(|e| format!("body is not JSON: {e}"))?;
    let content = value
        .get("choices")
        .and_then(Value::as_array)
        .and_then(|c| c.first())
        .and_then(|c| c.pointer("/message/content"))
        .and_then(Value::as_str)
        .ok_or("no choices[0].message.content in response")?;
    if content.trim().is_empty() {
        return Err("empty completion".into());
    }
    Ok(content.to_string())
}

fn run_job(client: &Client, config: &GenerationConfig, key: Option<&str>, body: Vec<u8>, job: Job) -> Finished {
    let mut finished = Finished {
        job,
        outcome: Outcome::Failed(String::new()),
        requests: 0,
        backoffs: 0,
    };
    let mut backoff = config.initial_backoff;
    for attempt in 1..=config.max_attempts {
        let mut request = client
            .post(&config.endpoint_url)
            .header(CONTENT_TYPE, "application/json")
            .body(body.clone());
        if let Some(key) = key {
            request = request.bearer_auth(key);
        }
        finished.requests += 1;
        let (wait, reason) = match request.send() {
            Ok(response) => {
                let status = response.status();
                let hinted = retry_after(response.headers());
                if status.is_success() {
                    finished.outcome = match response.bytes() {
                        Ok(bytes) => match story_text(&bytes) {
                            Ok(text) => Outcome::Story(text),
                            Err(m) => Outcome::Malformed(m),
                        },
                        Err(e) => Outcome::Malformed(format!("unreadable body: {e}")),
                    };
                    return finished;
                }
                if status.as_u16() == 429 {
                    (hinted.unwrap_or(backoff), format!("rate limited ({status})"))
                } else if status.is_server_error() {
                    (backoff, format!("server error ({status})"))
                } else {
                    finished.outcome = Outcome::Failed(format!("HTTP {status}"));
                    return finished;
                }
            }
            Err(e) => (backoff, format!("transport error: {e}")),
        };
        finished.outcome = Outcome::Failed(reason.clone());
        if attempt == config.max_attempts {
            break;
        }
        let wait = wait.min(config.max_backoff);
        log::warn!(
            "prompt {} ({}, #{}): {reason}; retrying in {:?}",
            finished.job.prompt_id,
            finished.job.role.as_str(),
            finished.job.index,
            wait
        );
        finished.backoffs += 1;
        thread::sleep(wait);
        backoff = (backoff * 2).min(config.max_backoff);
    }
    finished
}

/// Generate the missing stories for every prompt in `corpus` and append them
/// to `output` as machine story records.
///
/// Jobs already present in `output` are skipped. Malformed and failed
/// responses go to `<output>.failures.jsonl` and are retried on the next run.
pub fn collect_stories(corpus: &Corpus, config: &GenerationConfig, output: &Path) -> Result<CollectReport> {
    config.validate()?;
    let key = if config.api_key_env.is_empty() {
        None
    } else {
        Some(
            std::env::var(&config.api_key_env)
                .map_err(|_| GenError::MissingCredential(config.api_key_env.clone()))?,
        )
    };

    let done = existing_jobs(output)?;
    let mut report = CollectReport::default();
    let mut queue = VecDeque::new();
    for prompt in corpus.prompts() {
        for index in 0..config.n_per_prompt {
            let job = Job {
                prompt_id: prompt.id.clone(),
                role: config.roles.role_for(index),
                index,
            };
            report.planned += 1;
            if done.contains(&job) {
                report.already_present += 1;
            } else {
                let body = build_request(&prompt.text, job.role, config)?.to_bytes();
                queue.push_back((job, body));
            }
        }
    }
    if queue.is_empty() {
        return Ok(report);
    }

    let client = Client::builder()
        .timeout(config.timeout)
        .build()
        .map_err(|e| GenError::Client(e.to_string()))?;
    let mut out = OpenOptions::new()
        .create(true)
        .append(true)
        .open(output)
        .map_err(|e| io_err(output, e))?;
    let failures = failures_path(output);
    let mut failure_log = None;

    let workers = config.concurrency.min(queue.len());
    let queue = Arc::new(Mutex::new(queue));
    let (tx, rx) = mpsc::channel::<Finished>();
    thread::scope(|scope| -> Result<()> {
        for _ in 0..workers {
            let (queue, tx, client, key) = (Arc::clone(&queue), tx.clone(), &client, key.as_deref());
            scope.spawn(move || loop {
                let next = queue.lock().expect("queue lock").pop_front();
                let Some((job, body)) = next else { break };
                if tx.send(run_job(client, config, key, body, job)).is_err() {
                    break;
                }
            });
        }
        drop(tx);

        // Single writer: every record is written and flushed here.
        for finished in rx {
            report.requests += finished.requests;
            report.backoffs += finished.backoffs;
            let job = &finished.job;
            let timestamp = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true);
            match finished.outcome {
                Outcome::Story(text) => {
                    let record = json!({
                        "kind": "story",
                        "id": job.story_id(),
                        "prompt_id": job.prompt_id,
                        "writer": "machine",
                        "text": text,
                        "meta": {
                            "prompt_id": job.prompt_id,
                            "role": job.role,
                            "index": job.index,
                            "model": config.model_name,
                            "temperature": config.temperature,
                            "timestamp": timestamp,
                        },
                    });
                    writeln!(out, "{record}").and_then(|_| out.flush()).map_err(|e| io_err(output, e))?;
                    report.stories += 1;
                }
                Outcome::Malformed(ref reason) | Outcome::Failed(ref reason) => {
                    if matches!(finished.outcome, Outcome::Malformed(_)) {
                        report.malformed += 1;
                    } else {
                        report.failed += 1;
                    }
                    log::warn!("prompt {} ({}, #{}): {reason}", job.prompt_id, job.role.as_str(), job.index);
                    if failure_log.is_none() {
                        failure_log = Some(
                            OpenOptions::new()
                                .create(true)
                                .append(true)
                                .open(&failures)
                                .map_err(|e| io_err(&failures, e))?,
                        );
                    }
                    let log_file = failure_log.as_mut().expect("opened above");
                    let record = json!({
                        "prompt_id": job.prompt_id,
                        "role": job.role,
                        "index": job.index,
                        "error": reason,
                        "timestamp": timestamp,
                    });
                    writeln!(log_file, "{record}").map_err(|e| io_err(&failures, e))?;
                }
            }
        }
        Ok(())
    })?;
    Ok(report)
}
