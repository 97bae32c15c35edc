use super::CuPort;
use super::PortRequest;

/// Grants port requests into the shared lower-tier memory. With no cap
/// every request is granted the cycle it is accepted. With a cap of `n`,
/// at most `n` grants happen per cycle: requests left waiting from earlier
/// cycles are served first, round-robin over ports, and whatever budget
/// remains goes to new requests in the order they arrive.
#[derive(Debug, Clone)]
pub struct MemoryArbiter {
    cap: Option<u32>,
    remaining: u32,
    next_port: usize,
    grants: u64,
    deferred: u64,
}

impl MemoryArbiter {
    pub fn new(cap: Option<u32>) -> Self {
        MemoryArbiter {
            cap,
            remaining: cap.unwrap_or(0),
            next_port: 0,
            grants: 0,
            deferred: 0,
        }
    }

    pub fn unlimited() -> Self {
        Self::new(None)
    }

    pub fn cap(&self) -> Option<u32> {
        self.cap
    }

    pub fn grants(&self) -> u64 {
        self.grants
    }

    /// Request-cycles spent waiting for a grant.
    pub fn deferred(&self) -> u64 {
        self.deferred
    }

    /// Resets the per-cycle budget and serves waiting requests. Returns
    /// `(port index, granted request)` for each grant made.
    pub fn begin_cycle(&mut self, now: u64, ports: &mut [CuPort]) -> Vec<(usize, PortRequest)> {
        let mut granted = Vec::new();
        let Some(cap) = self.cap else {
            return granted;
        };
        self.remaining = cap;
        let n = ports.len();
        if n == 0 {
            return granted;
        }
        loop {
            let mut any = false;
            for k in 0..n {
                if self.remaining == 0 {
                    break;
                }
                let idx = (self.next_port + k) % n;
                if let Some(r) = ports[idx].grant_oldest(now) {
                    self.remaining -= 1;
                    self.grants += 1;
                    granted.push((idx, r));
                    any = true;
                }
            }
            if let Some(&(last, _)) = granted.last() {
                self.next_port = (last + 1) % n;
            }
            if !any || self.remaining == 0 {
                break;
            }
        }
        self.deferred += ports
            .iter()
            .map(|p| p.has_ungranted() as u64)
            .sum::<u64>();
        granted
    }

    /// Tries to grant a request just accepted by `port`. It is granted only
    /// if nothing older on that port is still waiting and budget remains.
    pub fn grant_new(&mut self, now: u64, port: &mut CuPort) -> Option<PortRequest> {
        match self.cap {
            None => {
                self.grants += 1;
                port.grant_oldest(now)
            }
            Some(_) => {
                if self.remaining == 0 {
                    return None;
                }
                // the new request is the only ungranted one iff nothing older waits
                let waiting = port.ungranted_count();
                if waiting != 1 {
                    return None;
                }
                self.remaining -= 1;
                self.grants += 1;
                port.grant_oldest(now)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::MemRef;

    fn m(addr: u32) -> MemRef {
        MemRef { addr, size: 32 }
    }

    #[test]
    fn unlimited_grants_immediately() {
        let mut a = MemoryArbiter::unlimited();
        let mut p = CuPort::new(4);
        assert!(a.begin_cycle(5, std::slice::from_mut(&mut p)).is_empty());
        assert!(p.accept(m(0), false, 20, 5));
        let r = a.grant_new(5, &mut p).unwrap();
        assert_eq!(r.complete, Some(25));
    }

    #[test]
    fn capped_round_robin() {
        let mut a = MemoryArbiter::new(Some(1));
        let mut ports = vec![CuPort::new(4), CuPort::new(4), CuPort::new(4)];
        a.begin_cycle(0, &mut ports);
        // three ports each accept a request at cycle 0; only one grant fits
        for (i, p) in ports.iter_mut().enumerate() {
            assert!(p.accept(m(i as u32 * 32), false, 10, 0));
        }
        assert!(a.grant_new(0, &mut ports[0]).is_some());
        assert!(a.grant_new(0, &mut ports[1]).is_none());
        assert!(a.grant_new(0, &mut ports[2]).is_none());
        let g1 = a.begin_cycle(1, &mut ports);
        assert_eq!(g1.len(), 1);
        assert_eq!(g1[0].0, 1);
        assert_eq!(g1[0].1.complete, Some(11));
        let g2 = a.begin_cycle(2, &mut ports);
        assert_eq!(g2[0].0, 2);
        assert_eq!(a.grants(), 3);
        assert_eq!(a.deferred(), 1);
    }

    #[test]
    fn waiting_request_blocks_newer_on_same_port() {
        let mut a = MemoryArbiter::new(Some(1));
        let mut ports = vec![CuPort::new(4), CuPort::new(4)];
        a.begin_cycle(0, &mut ports);
        ports[1].accept(m(0), false, 10, 0);
        a.grant_new(0, &mut ports[1]);
        ports[0].accept(m(0), false, 10, 0);
        assert!(a.grant_new(0, &mut ports[0]).is_none());
        // cycle 1: the waiting request on port 0 takes the only grant
        let g = a.begin_cycle(1, &mut ports);
        assert_eq!(g.len(), 1);
        ports[0].accept(m(32), false, 10, 1);
        assert!(a.grant_new(1, &mut ports[0]).is_none());
    }
}
