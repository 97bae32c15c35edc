use thiserror::Error;

use crate::trace::MemRef;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CamRecord {
    pub mem: MemRef,
    /// Set once the memory grants the read.
    pub complete: Option<u64>,
}

impl CamRecord {
    pub fn is_ready(&self, now: u64) -> bool {
        self.complete.is_some_and(|c| c <= now)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum CamError {
    #[error("CAM is full")]
    Full,
    #[error("CAM already holds a record for {0:#x}")]
    Duplicate(u32),
}

/// Address-tagged landing buffer for triangular-load data. A record is
/// created when the GPCU issues the read and removed when the CU's
/// matching load consumes it. There is no eviction.
#[derive(Debug, Clone)]
pub struct DataCam {
    capacity: usize,
    records: Vec<CamRecord>,
    high_water: u64,
}

impl DataCam {
    pub fn new(capacity: usize) -> Self {
        DataCam {
            capacity,
            records: Vec::with_capacity(capacity),
            high_water: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn high_water(&self) -> u64 {
        self.high_water
    }

    /// Whether a new record for `addr` could be inserted right now.
    pub fn can_insert(&self, addr: u32) -> Result<(), CamError> {
        if self.records.iter().any(|r| r.mem.addr == addr) {
            return Err(CamError::Duplicate(addr));
        }
        if self.records.len() >= self.capacity {
            return Err(CamError::Full);
        }
        Ok(())
    }

    pub fn insert(&mut self, mem: MemRef, complete: Option<u64>) -> Result<(), CamError> {
        self.can_insert(mem.addr)?;
        self.records.push(CamRecord { mem, complete });
        self.high_water = self.high_water.max(self.records.len() as u64);
        Ok(())
    }

    pub fn lookup(&self, addr: u32) -> Option<&CamRecord> {
        self.records.iter().find(|r| r.mem.addr == addr)
    }

    pub fn set_complete(&mut self, addr: u32, complete: u64) {
        if let Some(r) = self.records.iter_mut().find(|r| r.mem.addr == addr) {
            r.complete = Some(complete);
        }
    }

    pub fn take(&mut self, addr: u32) -> Option<CamRecord> {
        let i = self.records.iter().position(|r| r.mem.addr == addr)?;
        Some(self.records.swap_remove(i))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(addr: u32) -> MemRef {
        MemRef { addr, size: 32 }
    }

    #[test]
    fn full_and_duplicate() {
        let mut c = DataCam::new(2);
        c.insert(m(0), Some(10)).unwrap();
        assert_eq!(c.insert(m(0), Some(11)), Err(CamError::Duplicate(0)));
        c.insert(m(32), None).unwrap();
        assert_eq!(c.can_insert(64), Err(CamError::Full));
        assert_eq!(c.high_water(), 2);
    }

    #[test]
    fn ready_only_at_complete_cycle() {
        let mut c = DataCam::new(4);
        c.insert(m(0), None).unwrap();
        assert!(!c.lookup(0).unwrap().is_ready(1000));
        c.set_complete(0, 30);
        assert!(!c.lookup(0).unwrap().is_ready(29));
        assert!(c.lookup(0).unwrap().is_ready(30));
    }

    #[test]
    fn take_removes_exactly_once() {
        let mut c = DataCam::new(4);
        c.insert(m(0), Some(1)).unwrap();
        assert!(c.take(0).is_some());
        assert!(c.take(0).is_none());
        assert!(c.is_empty());
    }
}
