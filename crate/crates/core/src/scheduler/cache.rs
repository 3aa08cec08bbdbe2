//! Result cache shared by speculative and authoritative paths, keyed by
//! tool name and canonical argument hash.

use super::job::JobId;
use crate::canonical::ArgHash;
use crate::event::{Millis, Status};
use serde_json::Value;
use std::collections::HashMap;

pub type CacheKey = (String, ArgHash);

#[derive(Debug, Clone, PartialEq)]
pub enum EntryState {
    InFlight(JobId),
    Done {
        job: JobId,
        status: Status,
        result: Value,
        no_commit: bool,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CacheEntry {
    pub state: EntryState,
    pub created_at: Millis,
}

impl CacheEntry {
    /// Done, successful, and committable: may satisfy an authoritative call.
    pub fn servable(&self) -> bool {
        matches!(
            self.state,
            EntryState::Done {
                status: Status::Success,
                no_commit: false,
                ..
            }
        )
    }
}

#[derive(Debug, Clone, Default)]
pub struct ResultCache {
    entries: HashMap<CacheKey, CacheEntry>,
}

impl ResultCache {
    pub fn get(&self, key: &CacheKey) -> Option<&CacheEntry> {
        self.entries.get(key)
    }

    pub fn contains(&self, key: &CacheKey) -> bool {
        self.entries.contains_key(key)
    }

    /// Registers an in-flight execution; refuses when the key is taken.
    pub fn begin(&mut self, key: CacheKey, job: JobId, now: Millis) -> bool {
        if self.entries.contains_key(&key) {
            return false;
        }
        self.entries.insert(
            key,
            CacheEntry {
                state: EntryState::InFlight(job),
                created_at: now,
            },
        );
        true
    }

    /// Records a finished execution if `job` still owns the key.
    pub fn finish(&mut self, key: &CacheKey, job: JobId, status: Status, result: Value, no_commit: bool) {
        if let Some(e) = self.entries.get_mut(key) {
            if e.state == EntryState::InFlight(job) {
                e.state = EntryState::Done {
                    job,
                    status,
                    result,
                    no_commit,
                };
            }
        }
    }

    /// Removes the entry if it belongs to `job`.
    pub fn release(&mut self, key: &CacheKey, job: JobId) {
        let owned = match self.entries.get(key).map(|e| &e.state) {
            Some(EntryState::InFlight(j)) => *j == job,
            Some(EntryState::Done { job: j, .. }) => *j == job,
            None => false,
        };
        if owned {
            self.entries.remove(key);
        }
    }

    pub fn remove(&mut self, key: &CacheKey) -> Option<CacheEntry> {
        self.entries.remove(key)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn in_flight(&self) -> impl Iterator<Item = (&CacheKey, JobId)> {
        self.entries.iter().filter_map(|(k, e)| match e.state {
            EntryState::InFlight(j) => Some((k, j)),
            _ => None,
        })
    }
}
