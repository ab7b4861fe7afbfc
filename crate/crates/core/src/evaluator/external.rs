use std::io::BufReader;
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use super::{EvalError, Evaluator, Fitness, ProtocolClient};
use crate::search_space::{Genome, SpaceHash};

struct Session {
    child: Child,
    client: ProtocolClient<BufReader<ChildStdout>, ChildStdin>,
}

/// A child process speaking the evaluator protocol over stdin/stdout.
pub struct ExternalEvaluator {
    command: Vec<String>,
    session: Mutex<Option<Session>>,
}

impl ExternalEvaluator {
    /// Starts `command` and completes the handshake for `space_hash`.
    pub fn spawn(command: &[String], space_hash: SpaceHash, window: usize) -> Result<Self, EvalError> {
        let (program, args) = command.split_first().ok_or_else(|| EvalError::Spawn {
            command: String::new(),
            source: std::io::Error::new(std::io::ErrorKind::InvalidInput, "empty command"),
        })?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|source| EvalError::Spawn {
                command: command.join(" "),
                source,
            })?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let mut client = ProtocolClient::new(BufReader::new(stdout), stdin, window);
        if let Err(e) = client.handshake(space_hash) {
            let _ = child.kill();
            let _ = child.wait();
            return Err(e);
        }
        Ok(ExternalEvaluator {
            command: command.to_vec(),
            session: Mutex::new(Some(Session { child, client })),
        })
    }

    /// Sends `shutdown` and waits for the child to exit.
    pub fn close(&self) -> Result<(), EvalError> {
        let session = self.session.lock().expect("session lock poisoned").take();
        if let Some(mut s) = session {
            let sent = s.client.shutdown();
            drop(s.client);
            let status = s.child.wait()?;
            sent?;
            if !status.success() {
                return Err(EvalError::Exited(format!("exit status {status}")));
            }
        }
        Ok(())
    }
}

impl Evaluator for ExternalEvaluator {
    fn id(&self) -> String {
        format!("external:{}", self.command.join(" "))
    }

    fn evaluate_batch(&self, genomes: &[Genome]) -> Result<Vec<Fitness>, EvalError> {
        let mut guard = self.session.lock().expect("session lock poisoned");
        let session = guard
            .as_mut()
            .ok_or_else(|| EvalError::Exited("session already closed".into()))?;
        let result = session.client.evaluate(genomes);
        if result.is_err() {
            // A broken session cannot be trusted for later batches.
            if let Some(mut s) = guard.take() {
                let _ = s.child.kill();
                let _ = s.child.wait();
            }
        }
        result
    }
}

impl Drop for ExternalEvaluator {
    fn drop(&mut self) {
        let _ = self.close();
    }
}
