//! Memory ordering between the decoupled units. Any scalar access, and any
//! triangular load, that overlaps a vector store the CU has not yet made
//! visible waits until that store completes.

use crate::trace::MemRef;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Hazard {
    Clear,
    Blocked,
}

/// `pending_stores` covers both addresses still sitting in the store
/// address buffer and stores the port accepted but has not completed.
pub fn hazard_check(access: MemRef, pending_stores: impl IntoIterator<Item = MemRef>) -> Hazard {
    if pending_stores.into_iter().any(|s| s.overlaps(access)) {
        Hazard::Blocked
    } else {
        Hazard::Clear
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(addr: u32, size: u8) -> MemRef {
        MemRef { addr, size }
    }

    #[test]
    fn empty_sab_is_clear() {
        assert_eq!(hazard_check(m(0x100, 4), []), Hazard::Clear);
    }

    #[test]
    fn exact_overlap_blocks() {
        assert_eq!(hazard_check(m(0x100, 4), [m(0x100, 32)]), Hazard::Blocked);
    }

    #[test]
    fn partial_overlap_defers_vector_load() {
        // [0x140, 0x160) vs [0x150, 0x170)
        assert_eq!(hazard_check(m(0x140, 32), [m(0x150, 16)]), Hazard::Blocked);
        assert_eq!(hazard_check(m(0x140, 32), [m(0x160, 32)]), Hazard::Clear);
        assert_eq!(hazard_check(m(0x140, 32), [m(0x120, 32)]), Hazard::Clear);
    }

    proptest! {
        #[test]
        fn matches_bytewise_oracle(a in 0u32..512, asz in 0u32..7, b in 0u32..512, bsz in 0u32..7) {
            let (asz, bsz) = (1u32 << asz, 1u32 << bsz);
            let (a, b) = (a / asz * asz, b / bsz * bsz);
            let bytes_a: std::collections::HashSet<u32> = (a..a + asz).collect();
            let shared = (b..b + bsz).any(|x| bytes_a.contains(&x));
            let got = hazard_check(m(a, asz as u8), [m(b, bsz as u8)]);
            prop_assert_eq!(got == Hazard::Blocked, shared);
        }
    }
}
