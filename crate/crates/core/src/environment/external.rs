use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::Duration;

use super::{Environment, Evaluation};
use crate::error::{Error, Result};
use crate::gp::PruningPolicy;
use crate::layer_model::NetworkDescriptor;

/// Line protocol to a long-lived backend process started with `sh -c`.
///
/// Each request is one line `p_1,..,p_N,p_t`; each reply is one line
/// `objective,flops_ratio`. At most one request is outstanding.
pub struct ExternalEnvironment {
    command: String,
    timeout: Duration,
    process: Option<Process>,
}

struct Process {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
}

impl Drop for Process {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

fn env_error(message: impl Into<String>, payload: Option<String>) -> Error {
    Error::Environment {
        message: message.into(),
        payload,
    }
}

impl ExternalEnvironment {
    pub fn new(command: impl Into<String>, timeout: Duration) -> Self {
        Self {
            command: command.into(),
            timeout,
            process: None,
        }
    }

    pub fn command(&self) -> &str {
        &self.command
    }

    fn spawn(&self) -> Result<Process> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(&self.command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| env_error(format!("cannot start `{}`: {e}", self.command), None))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, lines) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(Process {
            child,
            stdin,
            lines,
        })
    }

    fn exchange(&mut self, request: &str) -> Result<String> {
        if self.process.is_none() {
            self.process = Some(self.spawn()?);
        }
        let process = self.process.as_mut().unwrap();
        if let Err(e) = writeln!(process.stdin, "{request}").and_then(|_| process.stdin.flush()) {
            let status = process.child.try_wait().ok().flatten();
            return Err(env_error(
                format!("cannot write to backend ({e}); exit status {status:?}"),
                None,
            ));
        }
        match process.lines.recv_timeout(self.timeout) {
            Ok(Ok(line)) => Ok(line),
            Ok(Err(e)) => Err(env_error(format!("cannot read from backend: {e}"), None)),
            Err(RecvTimeoutError::Timeout) => Err(env_error(
                format!("backend did not reply within {:?}", self.timeout),
                None,
            )),
            Err(RecvTimeoutError::Disconnected) => {
                let status = process.child.wait().ok();
                Err(env_error(
                    format!("backend closed its output; exit status {status:?}"),
                    None,
                ))
            }
        }
    }
}

impl Environment for ExternalEnvironment {
    fn evaluate(
        &mut self,
        _net: &NetworkDescriptor,
        policy: &PruningPolicy,
        target: f64,
    ) -> Result<Evaluation> {
        let mut request: Vec<String> = policy.as_slice().iter().map(f64::to_string).collect();
        request.push(target.to_string());
        let result = self
            .exchange(&request.join(","))
            .and_then(|reply| parse_reply(&reply, target));
        if result.is_err() {
            // A failed exchange leaves the stream out of step; start afresh.
            self.process = None;
        }
        result
    }
}

fn parse_reply(reply: &str, target: f64) -> Result<Evaluation> {
    let malformed = |why: &str| {
        env_error(
            format!("malformed backend reply: {why}"),
            Some(reply.to_string()),
        )
    };
    let fields: Vec<&str> = reply.trim().split(',').map(str::trim).collect();
    let [objective, ratio] = fields.as_slice() else {
        return Err(malformed("expected `objective,flops_ratio`"));
    };
    let objective: f64 = objective
        .parse()
        .map_err(|_| malformed("objective is not a number"))?;
    let ratio: f64 = ratio
        .parse()
        .map_err(|_| malformed("flops ratio is not a number"))?;
    if !objective.is_finite() {
        return Err(malformed("objective is not finite"));
    }
    if !(ratio > 0.0 && ratio.is_finite()) {
        return Err(malformed("flops ratio must be positive"));
    }
    Ok(Evaluation::new(objective, ratio, target))
}
