use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::trace::MemRef;

/// One request accepted by a CU port. `complete` stays `None` until the
/// shared memory grants it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PortRequest {
    pub mem: MemRef,
    pub write: bool,
    pub latency: u64,
    pub issued: u64,
    pub complete: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PortIssue {
    pub accepted: bool,
    pub complete_cycle: Option<u64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PortStats {
    pub reads: u64,
    pub writes: u64,
    pub rejected: u64,
    pub max_outstanding_seen: u64,
}

/// A CU's private port into the data memory: at most `max_outstanding`
/// requests in flight and one new request accepted per cycle.
#[derive(Debug, Clone)]
pub struct CuPort {
    max_outstanding: usize,
    requests: VecDeque<PortRequest>,
    last_accept: Option<u64>,
    stats: PortStats,
}

impl CuPort {
    pub fn new(max_outstanding: usize) -> Self {
        CuPort {
            max_outstanding,
            requests: VecDeque::with_capacity(max_outstanding),
            last_accept: None,
            stats: PortStats::default(),
        }
    }

    pub fn stats(&self) -> PortStats {
        self.stats
    }

    pub fn outstanding(&self) -> usize {
        self.requests.len()
    }

    pub fn is_idle(&self) -> bool {
        self.requests.is_empty()
    }

    pub fn can_accept(&self, now: u64) -> bool {
        self.requests.len() < self.max_outstanding && self.last_accept != Some(now)
    }

    /// Drops requests whose data has arrived by `now`.
    pub fn retire_completed(&mut self, now: u64) {
        self.requests
            .retain(|r| r.complete.is_none_or(|c| c > now));
    }

    /// Accepts a request without granting it. Returns false (and counts a
    /// rejection) when the port is full or already took a request this cycle.
    pub fn accept(&mut self, mem: MemRef, write: bool, latency: u64, now: u64) -> bool {
        if !self.can_accept(now) {
            self.stats.rejected += 1;
            return false;
        }
        self.last_accept = Some(now);
        self.requests.push_back(PortRequest {
            mem,
            write,
            latency,
            issued: now,
            complete: None,
        });
        if write {
            self.stats.writes += 1;
        } else {
            self.stats.reads += 1;
        }
        self.stats.max_outstanding_seen = self
            .stats
            .max_outstanding_seen
            .max(self.requests.len() as u64);
        true
    }

    /// Accepts and immediately grants: the uncontended path.
    pub fn issue(&mut self, mem: MemRef, write: bool, latency: u64, now: u64) -> PortIssue {
        if !self.accept(mem, write, latency, now) {
            return PortIssue {
                accepted: false,
                complete_cycle: None,
            };
        }
        let complete = self.grant_oldest(now).map(|r| r.complete.unwrap());
        PortIssue {
            accepted: true,
            complete_cycle: complete,
        }
    }

    pub fn has_ungranted(&self) -> bool {
        self.requests.iter().any(|r| r.complete.is_none())
    }

    pub(crate) fn ungranted_count(&self) -> usize {
        self.requests.iter().filter(|r| r.complete.is_none()).count()
    }

    /// Grants the oldest ungranted request at `now`.
    pub fn grant_oldest(&mut self, now: u64) -> Option<PortRequest> {
        let r = self.requests.iter_mut().find(|r| r.complete.is_none())?;
        r.complete = Some(now + r.latency);
        Some(*r)
    }

    /// Accepted writes whose data has not yet landed.
    pub fn pending_writes(&self) -> impl Iterator<Item = MemRef> + '_ {
        self.requests.iter().filter(|r| r.write).map(|r| r.mem)
    }
}
