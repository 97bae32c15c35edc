//! Small traces whose timing was worked out by hand, cycle by cycle.
//! Defaults throughout: fetch 3, decode 1+1, ex 1/4, L2 20, DRAM 120,
//! CU port 20, 32 KiB L1 without prefetch, FIFO 32.

use slapsim_core::memsys::MemConfig;
use slapsim_core::{
    parse_trace, simulate_lockstep, simulate_slap, SlapConfig, SlapResult, StallCause, Trace,
};

fn trace(text: &str) -> Trace {
    parse_trace(text).unwrap()
}

fn both(text: &str, cfg: SlapConfig) -> (u64, SlapResult) {
    let t = trace(text);
    let m = MemConfig::default();
    let ls = simulate_lockstep(&t, &cfg.pipeline, &m).unwrap();
    let sl = simulate_slap(&t, &cfg, &m).unwrap();
    (ls.total_cycles, sl)
}

// commit 5,6,7; last retires at 7 + 4
#[test]
fn scalar_only() {
    let (ls, sl) = both("SALU\nSMUL;SALU\nSBRANCH\n", SlapConfig::default());
    assert_eq!(ls, 11);
    assert_eq!(sl.total_cycles, 11);
    assert_eq!(sl.gpcu.stalls.total(), 0);
    assert!(sl.cus[0].fifo.pushes == 0);
}

// CU issues each packet the cycle it lands: 5,6,7 retiring 8,9,10.
// The GPCU view of the last bundle (7 + 4) sets the total.
#[test]
fn vector_only() {
    let (ls, sl) = both("VALU\nVALU;VALU\nVALU\n", SlapConfig::default());
    assert_eq!(ls, 11);
    assert_eq!(sl.total_cycles, 11);
    let cu = &sl.cus[0];
    assert_eq!(cu.issued_packets, 3);
    assert_eq!(cu.retired_ops, 4);
    assert_eq!(cu.stalls.get(StallCause::CuFifoEmpty), 8);
}

// lockstep: b0 commits 5, L2 miss 20, retires 29; b1 at 26 misses again
// (0x1000 is another line), retires 50; b2 at 47 retires 51.
// slap: b0 commits 5, GPCU frozen 6..25; b1 commits 26, read granted at 26
// lands at 46; CU waits 26..45, issues load 46; b2 issues 47, retires 50.
#[test]
fn mixed() {
    let (ls, sl) = both(
        "SLOAD@0x40;VALU\nSALU;VLOAD@0x1000\nVALU\n",
        SlapConfig::default(),
    );
    assert_eq!(ls, 51);
    assert_eq!(sl.total_cycles, 50);
    assert_eq!(sl.gpcu.stalls.get(StallCause::GpcuScalarMiss), 20);
    let cu = &sl.cus[0];
    assert_eq!(cu.stalls.get(StallCause::CuCamWait), 20);
    assert_eq!(cu.stalls.get(StallCause::CuFifoEmpty), 50 - 3 - 20);
}

// The same DRAM miss freezes both machines when it is scalar.
#[test]
fn scalar_dram_miss() {
    let (ls, sl) = both("SLOAD@0x4000000\nSALU\n", SlapConfig::default());
    assert_eq!(ls, 130);
    assert_eq!(sl.total_cycles, 130);
    assert_eq!(sl.gpcu.stalls.get(StallCause::GpcuScalarMiss), 120);
}

// A vector DRAM load stalls lockstep for 120 cycles; under slap only the
// CU waits (5..124) while the 20 scalar bundles drain by cycle 29.
#[test]
fn vector_dram_miss_overlaps_scalar_work() {
    let mut text = String::from("VLOAD@0x4000000\n");
    for _ in 0..20 {
        text.push_str("SALU\n");
    }
    let (ls, sl) = both(&text, SlapConfig::default());
    assert_eq!(ls, 149);
    assert_eq!(sl.total_cycles, 125);
    assert_eq!(sl.gpcu.stalls.total(), 0);
    assert_eq!(sl.cus[0].stalls.get(StallCause::CuCamWait), 120);
}

// Depth 1: b0 issues at 5, retires 8, frees at 9. GPCU blocked 6..8,
// b1 commits 9, blocked 10..12, b2 commits 13, GPCU view retires 17.
#[test]
fn fifo_full_backpressure() {
    let cfg = SlapConfig {
        fifo_depth: 1,
        ..SlapConfig::default()
    };
    let (ls, sl) = both("VALU\nVALU\nVALU\n", cfg);
    assert_eq!(ls, 11);
    assert_eq!(sl.total_cycles, 17);
    assert_eq!(sl.gpcu.stalls.get(StallCause::GpcuFifoFull), 6);
    assert_eq!(sl.cus[0].fifo_histogram.iter().sum::<u64>(), 17);
}

// The store leaves the SAB at 5 and sits on the port until 25. The scalar
// load to the same bytes waits 6..24, commits 25, misses L2 (the CU never
// filled the L1) and retires 25 + 20 + 4.
#[test]
fn store_to_load_hazard() {
    let (ls, sl) = both("VSTORE@0x100\nSLOAD@0x100\n", SlapConfig::default());
    assert_eq!(ls, 30);
    assert_eq!(sl.total_cycles, 49);
    assert_eq!(sl.gpcu.stalls.get(StallCause::GpcuHazard), 19);
}

// Two loads to one address: the second waits for the first record to be
// consumed. b0 at 5 lands at 25 and the CU takes it late in cycle 25, so
// b1 is blocked 6..25, issues at 26 and lands at 46.
#[test]
fn duplicate_cam_address() {
    let (_, sl) = both("VLOAD@0x2000\nVLOAD@0x2000\n", SlapConfig::default());
    assert_eq!(sl.gpcu.stalls.get(StallCause::GpcuCamFull), 20);
    assert_eq!(sl.total_cycles, 46);
}

#[test]
fn back_to_back_loads_pipeline() {
    let (_, sl) = both(
        "VLOAD@0x2000\nVLOAD@0x2020\nVLOAD@0x2040\n",
        SlapConfig::default(),
    );
    assert_eq!(sl.cus[0].lab.pops, 3);
    // loads granted 5,6,7 land 25,26,27
    assert_eq!(sl.total_cycles, 27);
}
