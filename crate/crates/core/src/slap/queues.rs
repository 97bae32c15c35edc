use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::trace::{MemRef, OpClass};

/// The vector side of one bundle, as handed from the GPCU to a CU.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VectorPacket {
    /// Position of the originating bundle in the GPCU's instruction stream.
    pub bundle: usize,
    pub ops: u32,
    pub has_valu: bool,
    /// The packet's memory op with this CU's lane offset applied.
    pub mem: Option<(OpClass, MemRef)>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueueStats {
    pub pushes: u64,
    pub pops: u64,
    pub high_water: u64,
}

/// Bounded in-order instruction buffer between the GPCU and one CU.
///
/// An entry is allocated at dispatch and released the cycle after its packet
/// retires, so occupancy counts packets waiting to issue plus packets in
/// the CU's execute pipe. Packets issue strictly in order.
#[derive(Debug, Clone)]
pub struct VectorFifo {
    depth: usize,
    entries: VecDeque<(VectorPacket, Option<u64>)>,
    issued: usize,
    stats: QueueStats,
    histogram: Vec<u64>,
}

impl VectorFifo {
    pub fn new(depth: usize) -> Self {
        VectorFifo {
            depth,
            entries: VecDeque::with_capacity(depth),
            issued: 0,
            stats: QueueStats::default(),
            histogram: vec![0; depth + 1],
        }
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.entries.len() >= self.depth
    }

    pub fn stats(&self) -> QueueStats {
        self.stats
    }

    /// Cycles observed at each occupancy, index = occupancy.
    pub fn histogram(&self) -> &[u64] {
        &self.histogram
    }

    pub fn record_occupancy(&mut self, cycles: u64) {
        self.histogram[self.entries.len()] += cycles;
    }

    pub fn push(&mut self, p: VectorPacket) {
        assert!(!self.is_full(), "push into a full vector FIFO");
        self.entries.push_back((p, None));
        self.stats.pushes += 1;
        self.stats.high_water = self.stats.high_water.max(self.entries.len() as u64);
    }

    /// Oldest packet that has not issued yet.
    pub fn next_pending(&self) -> Option<&VectorPacket> {
        self.entries.get(self.issued).map(|(p, _)| p)
    }

    pub fn has_pending(&self) -> bool {
        self.issued < self.entries.len()
    }

    pub fn mark_issued(&mut self, retire: u64) {
        let e = &mut self.entries[self.issued];
        debug_assert!(e.1.is_none());
        e.1 = Some(retire);
        self.issued += 1;
    }

    /// Frees entries whose packet retired before `now`.
    pub fn release_retired(&mut self, now: u64) {
        while let Some(&(_, Some(r))) = self.entries.front() {
            if r >= now {
                break;
            }
            self.entries.pop_front();
            self.issued -= 1;
            self.stats.pops += 1;
        }
    }
}

/// Bounded FIFO of GPCU-computed addresses (load or store address buffer).
#[derive(Debug, Clone)]
pub struct AddrQueue {
    depth: usize,
    q: VecDeque<MemRef>,
    stats: QueueStats,
}

impl AddrQueue {
    pub fn new(depth: usize) -> Self {
        AddrQueue {
            depth,
            q: VecDeque::with_capacity(depth),
            stats: QueueStats::default(),
        }
    }

    pub fn is_full(&self) -> bool {
        self.q.len() >= self.depth
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn stats(&self) -> QueueStats {
        self.stats
    }

    pub fn push(&mut self, m: MemRef) {
        assert!(!self.is_full(), "push into a full address buffer");
        self.q.push_back(m);
        self.stats.pushes += 1;
        self.stats.high_water = self.stats.high_water.max(self.q.len() as u64);
    }

    pub fn front(&self) -> Option<MemRef> {
        self.q.front().copied()
    }

    pub fn pop(&mut self) -> Option<MemRef> {
        let m = self.q.pop_front();
        self.stats.pops += m.is_some() as u64;
        m
    }

    pub fn iter(&self) -> impl Iterator<Item = MemRef> + '_ {
        self.q.iter().copied()
    }
}
