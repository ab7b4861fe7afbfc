//! Line-delimited JSON evaluator protocol.
//!
//! ```text
//! engine    -> evaluator  {"type":"hello","version":1,"space_hash":"<hex16>"}
//! evaluator -> engine     {"type":"hello","version":1,"space_hash":"<hex16>"}
//! engine    -> evaluator  {"type":"eval","id":<u64>,"genome":{"backbone":[..],"head":[..]}}
//! evaluator -> engine     {"type":"result","id":<u64>,"fitness":<float in [0,1]>}
//! engine    -> evaluator  {"type":"shutdown"}
//! ```
//!
//! One object per line, ids strictly increasing per session, unknown fields
//! ignored. Results may arrive in any order and are matched by id.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{EvalError, Fitness};
use crate::search_space::{Genome, SpaceHash};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Message {
    Hello {
        version: u32,
        space_hash: SpaceHash,
    },
    Eval {
        id: u64,
        genome: Genome,
    },
    Result {
        id: u64,
        fitness: f64,
    },
    Error {
        #[serde(default)]
        id: Option<u64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        message: Option<String>,
    },
    Shutdown,
}

fn write_message<W: Write>(writer: &mut W, msg: &Message) -> Result<(), EvalError> {
    let line = serde_json::to_string(msg).expect("messages always serialize");
    writer.write_all(line.as_bytes())?;
    writer.write_all(b"\n")?;
    writer.flush()?;
    Ok(())
}

/// Reads one line; `None` on end of stream.
fn read_line<R: BufRead>(reader: &mut R) -> Result<Option<String>, EvalError> {
    let mut line = String::new();
    if reader.read_line(&mut line)? == 0 {
        return Ok(None);
    }
    Ok(Some(line.trim_end_matches(['\r', '\n']).to_string()))
}

fn parse(line: &str) -> Result<Message, EvalError> {
    serde_json::from_str(line).map_err(|e| EvalError::Protocol {
        message: format!("bad message: {e}"),
        line: line.to_string(),
    })
}

/// Engine side of a session over any line transport.
pub struct ProtocolClient<R, W> {
    reader: R,
    writer: W,
    next_id: u64,
    window: usize,
}

impl<R: BufRead, W: Write> ProtocolClient<R, W> {
    /// `window` bounds how many requests are in flight at once.
    pub fn new(reader: R, writer: W, window: usize) -> Self {
        ProtocolClient {
            reader,
            writer,
            next_id: 0,
            window: window.max(1),
        }
    }

    pub fn handshake(&mut self, space_hash: SpaceHash) -> Result<(), EvalError> {
        write_message(
            &mut self.writer,
            &Message::Hello {
                version: PROTOCOL_VERSION,
                space_hash,
            },
        )?;
        let line = read_line(&mut self.reader)?
            .ok_or_else(|| EvalError::Exited("closed before the hello reply".into()))?;
        match parse(&line)? {
            Message::Hello {
                version,
                space_hash: theirs,
            } => {
                if version != PROTOCOL_VERSION {
                    return Err(EvalError::Handshake(format!(
                        "protocol version {version}, expected {PROTOCOL_VERSION}"
                    )));
                }
                if theirs != space_hash {
                    return Err(EvalError::Handshake(format!(
                        "space hash mismatch: evaluator has {theirs}, engine has {space_hash}"
                    )));
                }
                Ok(())
            }
            _ => Err(EvalError::Protocol {
                message: "expected hello".into(),
                line,
            }),
        }
    }

    /// Evaluates a batch, returning fitness in request order.
    pub fn evaluate(&mut self, genomes: &[Genome]) -> Result<Vec<Fitness>, EvalError> {
        let mut results: Vec<Option<Fitness>> = vec![None; genomes.len()];
        let mut pending: HashMap<u64, usize> = HashMap::new();
        let mut sent = 0;
        let mut received = 0;
        while received < genomes.len() {
            while sent < genomes.len() && pending.len() < self.window {
                let id = self.next_id;
                self.next_id += 1;
                write_message(
                    &mut self.writer,
                    &Message::Eval {
                        id,
                        genome: genomes[sent].clone(),
                    },
                )?;
                pending.insert(id, sent);
                sent += 1;
            }
            let line = read_line(&mut self.reader)?.ok_or_else(|| {
                EvalError::Exited(format!("closed with {} requests pending", pending.len()))
            })?;
            match parse(&line)? {
                Message::Result { id, fitness } => {
                    let idx = pending.remove(&id).ok_or_else(|| EvalError::Protocol {
                        message: format!("result for unknown id {id}"),
                        line: line.clone(),
                    })?;
                    let f = Fitness::new(fitness).map_err(|_| EvalError::Protocol {
                        message: format!("fitness {fitness} outside [0, 1]"),
                        line: line.clone(),
                    })?;
                    results[idx] = Some(f);
                    received += 1;
                }
                Message::Error { id, message } => {
                    return Err(EvalError::Protocol {
                        message: format!(
                            "evaluator reported an error for id {id:?}: {}",
                            message.unwrap_or_default()
                        ),
                        line,
                    })
                }
                _ => {
                    return Err(EvalError::Protocol {
                        message: "expected a result".into(),
                        line,
                    })
                }
            }
        }
        Ok(results.into_iter().map(|f| f.expect("all received")).collect())
    }

    pub fn shutdown(&mut self) -> Result<(), EvalError> {
        write_message(&mut self.writer, &Message::Shutdown)
    }
}

/// Evaluator side of a session: answers `eval` requests with `fitness` until
/// `shutdown`. A malformed request is answered with an `error` message and
/// ends the session with an error.
pub fn serve<R, W, F>(
    mut reader: R,
    mut writer: W,
    space_hash: SpaceHash,
    mut fitness: F,
) -> Result<(), EvalError>
where
    R: BufRead,
    W: Write,
    F: FnMut(&Genome) -> Result<f64, String>,
{
    let fail = |writer: &mut W, id: Option<u64>, message: String, line: String| {
        let _ = write_message(
            writer,
            &Message::Error {
                id,
                message: Some(message.clone()),
            },
        );
        EvalError::Protocol { message, line }
    };

    let hello = read_line(&mut reader)?.ok_or_else(|| EvalError::Exited("no hello".into()))?;
    match parse(&hello) {
        Ok(Message::Hello { .. }) => write_message(
            &mut writer,
            &Message::Hello {
                version: PROTOCOL_VERSION,
                space_hash,
            },
        )?,
        _ => return Err(fail(&mut writer, None, "expected hello".into(), hello)),
    }
    while let Some(line) = read_line(&mut reader)? {
        if line.trim().is_empty() {
            continue;
        }
        match parse(&line) {
            Ok(Message::Eval { id, genome }) => match fitness(&genome) {
                Ok(f) => write_message(&mut writer, &Message::Result { id, fitness: f })?,
                Err(e) => return Err(fail(&mut writer, Some(id), e, line)),
            },
            Ok(Message::Shutdown) => return Ok(()),
            Ok(_) => return Err(fail(&mut writer, None, "unexpected message".into(), line)),
            Err(e) => return Err(fail(&mut writer, None, e.to_string(), line)),
        }
    }
    Ok(())
}
