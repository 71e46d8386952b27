//! Uniform access to the classifier being explained.
//!
//! Three adapters are supported:
//!
//! * in-process decision rules,
//! * a child process speaking JSON lines: one `{"values": [...]}` object per
//!   state on stdin, one `{"label": "..."}` object per state on stdout,
//! * a replayed predictions file (`row_id,label` CSV) joined against the
//!   rows of a dataset.
//!
//! Subprocess scorers must be deterministic for results to be reproducible.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::time::{Duration, Instant};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::rules::DecisionRuleSet;
use crate::schema::{Dataset, Schema, State};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);
const DEFAULT_BATCH: usize = 256;

pub enum BlackBox {
    Rules(DecisionRuleSet),
    Subprocess(SubprocessModel),
    Predictions(PredictionTable),
}

impl BlackBox {
    /// The model's own rules when it is rule-based.
    pub fn rules(&self) -> Option<&DecisionRuleSet> {
        match self {
            BlackBox::Rules(q) => Some(q),
            _ => None,
        }
    }

    /// One label per state, in order.
    pub fn predict(&mut self, schema: &Schema, batch: &[State]) -> Result<Vec<String>> {
        for (row, s) in batch.iter().enumerate() {
            schema.check(s).map_err(|e| Error::BlackBoxFailure {
                row,
                source: Box::new(e),
            })?;
        }
        match self {
            BlackBox::Rules(q) => Ok(batch.iter().map(|s| q.classify(s).to_string()).collect()),
            BlackBox::Subprocess(p) => p.predict(schema, batch),
            BlackBox::Predictions(t) => t.predict(schema, batch),
        }
    }
}

#[derive(Deserialize)]
struct Reply {
    label: String,
}

/// A scorer running as a child process, owned by this handle.
pub struct SubprocessModel {
    command: String,
    child: Child,
    stdin: Option<ChildStdin>,
    replies: Receiver<std::io::Result<String>>,
    timeout: Duration,
    batch_size: usize,
}

impl SubprocessModel {
    /// Starts `command` through `sh -c`.
    pub fn spawn(command: &str) -> Result<Self> {
        Self::spawn_with_timeout(command, DEFAULT_TIMEOUT)
    }

    pub fn spawn_with_timeout(command: &str, timeout: Duration) -> Result<Self> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()?;
        let stdin = child.stdin.take();
        let stdout = child.stdout.take().expect("stdout is piped");
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(SubprocessModel {
            command: command.to_string(),
            child,
            stdin,
            replies: rx,
            timeout,
            batch_size: DEFAULT_BATCH,
        })
    }

    pub fn command(&self) -> &str {
        &self.command
    }

    pub fn with_batch_size(mut self, n: usize) -> Self {
        self.batch_size = n.max(1);
        self
    }

    fn predict(&mut self, schema: &Schema, batch: &[State]) -> Result<Vec<String>> {
        let mut labels = Vec::with_capacity(batch.len());
        for (chunk_no, chunk) in batch.chunks(self.batch_size).enumerate() {
            let offset = chunk_no * self.batch_size;
            let fail = |row: usize, e: Error| Error::BlackBoxFailure {
                row,
                source: Box::new(e),
            };
            let mut payload = String::new();
            for s in chunk {
                payload.push_str(
                    &serde_json::json!({ "values": schema.state_to_json(s) }).to_string(),
                );
                payload.push('\n');
            }
            let stdin = self
                .stdin
                .as_mut()
                .ok_or_else(|| fail(offset, Error::Protocol("model input is closed".into())))?;
            stdin
                .write_all(payload.as_bytes())
                .and_then(|_| stdin.flush())
                .map_err(|e| fail(offset, Error::Protocol(format!("writing to model: {e}"))))?;

            let deadline = Instant::now() + self.timeout;
            for j in 0..chunk.len() {
                let row = offset + j;
                let wait = deadline.saturating_duration_since(Instant::now());
                let line = match self.replies.recv_timeout(wait) {
                    Ok(Ok(line)) => line,
                    Ok(Err(e)) => return Err(fail(row, Error::Io(e))),
                    Err(RecvTimeoutError::Timeout) => {
                        return Err(fail(row, Error::Timeout(self.timeout)))
                    }
                    Err(RecvTimeoutError::Disconnected) => {
                        let status = self.child.try_wait().ok().flatten();
                        return Err(fail(
                            row,
                            Error::Protocol(match status {
                                Some(st) => format!("model process exited ({st})"),
                                None => "model closed its output".into(),
                            }),
                        ));
                    }
                };
                let reply: Reply = serde_json::from_str(&line)
                    .map_err(|e| fail(row, Error::Protocol(format!("bad reply `{line}`: {e}"))))?;
                labels.push(reply.label);
            }
        }
        Ok(labels)
    }
}

impl Drop for SubprocessModel {
    fn drop(&mut self) {
        self.stdin.take();
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Recorded labels for the rows of one dataset.
pub struct PredictionTable {
    by_state: HashMap<State, String>,
}

impl PredictionTable {
    /// Reads `row_id,label` CSV, where `row_id` is the zero-based position of
    /// the row in `data`.
    pub fn from_csv<R: Read>(reader: R, data: &Dataset) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        if header != ["row_id", "label"] {
            return Err(Error::SchemaMismatch(format!(
                "predictions header must be row_id,label, got {}",
                header.join(",")
            )));
        }
        let mut by_state = HashMap::new();
        for (n, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let id: usize = rec[0].trim().parse().map_err(|_| Error::Parse {
                line: n + 2,
                column: 1,
                message: format!("bad row_id `{}`", &rec[0]),
            })?;
            let state = data.rows().get(id).ok_or_else(|| Error::Parse {
                line: n + 2,
                column: 1,
                message: format!("row_id {id} is past the end of the dataset"),
            })?;
            by_state
                .entry(state.clone())
                .or_insert_with(|| rec[1].to_string());
        }
        Ok(PredictionTable { by_state })
    }

    /// Uses the dataset's own label column as the recorded predictions.
    pub fn from_dataset(data: &Dataset) -> Result<Self> {
        let labels = data
            .labels()
            .ok_or_else(|| Error::InvalidConfig("dataset has no label column".into()))?;
        let mut by_state = HashMap::new();
        for (s, l) in data.rows().iter().zip(labels) {
            by_state.entry(s.clone()).or_insert_with(|| l.clone());
        }
        Ok(PredictionTable { by_state })
    }

    fn predict(&self, schema: &Schema, batch: &[State]) -> Result<Vec<String>> {
        batch
            .iter()
            .enumerate()
            .map(|(row, s)| {
                self.by_state
                    .get(s)
                    .cloned()
                    .ok_or_else(|| Error::BlackBoxFailure {
                        row,
                        source: Box::new(Error::MissingPrediction(schema.render(s))),
                    })
            })
            .collect()
    }
}
