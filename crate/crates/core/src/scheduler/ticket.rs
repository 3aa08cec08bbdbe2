//! Waitable completion handles for authoritative requests.

use super::job::JobId;
use crate::event::{Millis, Status};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Served {
    /// A fresh authoritative execution.
    Executed,
    /// A completed speculative result.
    CacheHit,
    /// A promoted in-flight speculative execution.
    Promoted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub status: Status,
    pub result: Value,
    pub served: Served,
    /// Execution that produced the result.
    pub job: JobId,
    pub finished_at: Millis,
}

type Slot = Arc<(Mutex<Option<Outcome>>, Condvar)>;

/// Resolves exactly once; clones share the slot.
#[derive(Debug, Clone)]
pub struct Ticket {
    pub request: u64,
    slot: Slot,
}

impl Ticket {
    pub(crate) fn new(request: u64) -> Self {
        Self {
            request,
            slot: Arc::new((Mutex::new(None), Condvar::new())),
        }
    }

    /// Returns false if already resolved.
    pub(crate) fn resolve(&self, outcome: Outcome) -> bool {
        let (lock, cv) = &*self.slot;
        let mut g = lock.lock().unwrap_or_else(|e| e.into_inner());
        if g.is_some() {
            return false;
        }
        *g = Some(outcome);
        cv.notify_all();
        true
    }

    pub fn try_get(&self) -> Option<Outcome> {
        self.slot.0.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn is_ready(&self) -> bool {
        self.try_get().is_some()
    }

    pub fn wait(&self) -> Outcome {
        let (lock, cv) = &*self.slot;
        let mut g = lock.lock().unwrap_or_else(|e| e.into_inner());
        loop {
            if let Some(o) = g.as_ref() {
                return o.clone();
            }
            g = cv.wait(g).unwrap_or_else(|e| e.into_inner());
        }
    }

    pub fn wait_timeout(&self, timeout: Duration) -> Option<Outcome> {
        let (lock, cv) = &*self.slot;
        let g = lock.lock().unwrap_or_else(|e| e.into_inner());
        let (g, _) = cv
            .wait_timeout_while(g, timeout, |o| o.is_none())
            .unwrap_or_else(|e| e.into_inner());
        g.clone()
    }
}
