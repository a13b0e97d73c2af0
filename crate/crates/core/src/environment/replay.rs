use serde::{Deserialize, Serialize};

use super::{Environment, Evaluation};
use crate::error::{Error, Result};
use crate::gp::PruningPolicy;
use crate::layer_model::NetworkDescriptor;

/// One recorded backend reply.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub objective: f64,
    pub flops_ratio: f64,
}

/// Serves recorded replies in order, ignoring the request.
#[derive(Debug, Clone)]
pub struct ReplayEnvironment {
    responses: Vec<Response>,
    next: usize,
}

impl ReplayEnvironment {
    pub fn new(responses: Vec<Response>) -> Self {
        Self { responses, next: 0 }
    }

    pub fn remaining(&self) -> usize {
        self.responses.len() - self.next
    }
}

impl Environment for ReplayEnvironment {
    fn evaluate(
        &mut self,
        _net: &NetworkDescriptor,
        _policy: &PruningPolicy,
        target: f64,
    ) -> Result<Evaluation> {
        let Some(r) = self.responses.get(self.next) else {
            return Err(Error::Environment {
                message: format!("replay exhausted after {} responses", self.next),
                payload: None,
            });
        };
        self.next += 1;
        Ok(Evaluation::new(r.objective, r.flops_ratio, target))
    }
}

/// Passes evaluations through and keeps their replies.
pub struct RecordingEnvironment<E> {
    inner: E,
    responses: Vec<Response>,
}

impl<E: Environment> RecordingEnvironment<E> {
    pub fn new(inner: E) -> Self {
        Self {
            inner,
            responses: Vec::new(),
        }
    }

    pub fn responses(&self) -> &[Response] {
        &self.responses
    }

    pub fn into_responses(self) -> Vec<Response> {
        self.responses
    }
}

impl<E: Environment> Environment for RecordingEnvironment<E> {
    fn evaluate(
        &mut self,
        net: &NetworkDescriptor,
        policy: &PruningPolicy,
        target: f64,
    ) -> Result<Evaluation> {
        let e = self.inner.evaluate(net, policy, target)?;
        self.responses.push(Response {
            objective: e.objective,
            flops_ratio: e.flops_ratio,
        });
        Ok(e)
    }
}
