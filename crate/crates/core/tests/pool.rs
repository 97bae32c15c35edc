use slapsim_core::memsys::MemConfig;
use slapsim_core::multicore::{simulate_pool, AllocationMap, Job, PoolConfig};
use slapsim_core::tracegen::{gen_combo, ComboSpec};
use slapsim_core::{parse_trace, simulate_slap, SimError, SlapConfig, Trace};

fn combo(seed: u64, bundles: usize, stream_base: u32) -> Trace {
    let mut spec = ComboSpec::from_presets(&["mixed", "scalar-heavy"], seed).unwrap();
    for r in &mut spec.regions {
        r.bundles = bundles;
        r.vector.stream_base = stream_base;
        r.scalar.stream_base = stream_base / 2;
    }
    gen_combo(&spec).unwrap().0
}

fn job(trace: Trace) -> Job {
    Job {
        trace,
        datasets: None,
    }
}

#[test]
fn single_gpcu_single_cu_matches_slap() {
    let t = combo(3, 600, 0x20000);
    let cfg = SlapConfig::default();
    let m = MemConfig::default();
    let solo = simulate_slap(&t, &cfg, &m).unwrap();
    let pool_cfg = PoolConfig {
        num_gpcus: 1,
        num_cus: 1,
        ..PoolConfig::default()
    };
    let alloc = AllocationMap::contiguous(1, &[1]).unwrap();
    let p = simulate_pool(&[vec![job(t)]], &alloc, &pool_cfg, &cfg, &m).unwrap();
    assert_eq!(p.total_cycles, solo.total_cycles);
    assert_eq!(p.gpcus[0].stats, solo.gpcu);
    assert_eq!(p.gpcus[0].cache, solo.cache);
    assert_eq!(p.gpcus[0].region_cycles, solo.region_cycles);
    assert_eq!(p.cus, solo.cus);
}

fn solo_cycles(t: &Trace, cus: usize, cfg: &SlapConfig, m: &MemConfig) -> u64 {
    let c = SlapConfig {
        num_cus: cus,
        ..*cfg
    };
    simulate_slap(t, &c, m).unwrap().total_cycles
}

#[test]
fn three_plus_five_is_isolated_then_contended() {
    let a = combo(11, 800, 0x20000);
    let b = combo(12, 800, 0x60000);
    let cfg = SlapConfig {
        lane_stride: 0x1000,
        ..SlapConfig::default()
    };
    let m = MemConfig::default();
    let solo = [solo_cycles(&a, 3, &cfg, &m), solo_cycles(&b, 5, &cfg, &m)];
    let alloc = AllocationMap::contiguous(8, &[3, 5]).unwrap();
    let jobs = [vec![job(a)], vec![job(b)]];

    let open = simulate_pool(&jobs, &alloc, &PoolConfig::default(), &cfg, &m).unwrap();
    assert_eq!(open.gpcus[0].total_cycles, solo[0]);
    assert_eq!(open.gpcus[1].total_cycles, solo[1]);

    for cap in [1, 2, 4] {
        let capped = PoolConfig {
            mem_grants_per_cycle: Some(cap),
            ..PoolConfig::default()
        };
        let r = simulate_pool(&jobs, &alloc, &capped, &cfg, &m).unwrap();
        for g in 0..2 {
            assert!(r.gpcus[g].total_cycles >= solo[g], "cap {cap} gpcu {g}");
        }
        if cap == 1 {
            assert!(r.deferred_grants > 0);
        }
    }

    // every CU of a group ran the same packet stream
    for (g, ids) in [(0, 0..3), (1, 3..8)] {
        let ops: Vec<u64> = open.cus[ids].iter().map(|c| c.retired_ops).collect();
        assert!(ops.windows(2).all(|w| w[0] == w[1]), "group {g}: {ops:?}");
    }
}

#[test]
fn groups_resize_between_jobs() {
    let t = |seed| combo(seed, 300, 0x20000);
    let jobs = [
        vec![
            Job { trace: t(1), datasets: Some(12) },
            Job { trace: t(2), datasets: Some(16) },
        ],
        vec![
            Job { trace: t(3), datasets: Some(20) },
            Job { trace: t(4), datasets: Some(16) },
        ],
    ];
    let alloc = AllocationMap::contiguous(8, &[3, 5]).unwrap();
    let pool = PoolConfig::default();
    let r = simulate_pool(&jobs, &alloc, &pool, &SlapConfig::default(), &MemConfig::default())
        .unwrap();
    assert_eq!(r.gpcus[0].stats.reconfigurations, 1);
    assert_eq!(r.gpcus[1].stats.reconfigurations, 1);
    assert_eq!(r.gpcus[0].stats.reconfig_penalty_cycles, 16);
    // finished GPCUs hand their CUs back
    assert!(r.final_allocation.groups().iter().all(|g| g.is_empty()));
    // GPCU0 can only grow once GPCU1 has shrunk
    assert!(r.gpcus[0].stats.barrier_cycles + r.gpcus[0].stats.cu_wait_cycles > 0);
    let total_ops: u64 = r.cus.iter().map(|c| c.retired_ops).sum();
    let want: u64 = jobs
        .iter()
        .flatten()
        .map(|j| {
            let per_cu: u64 = j.trace.bundles.iter().map(|b| b.vector_ops.len() as u64).sum();
            per_cu * j.cus_needed(4).unwrap() as u64
        })
        .sum();
    assert_eq!(total_ops, want);
}

#[test]
fn simd20_gets_five_cus() {
    let t = parse_trace("VALU\nVALU\n").unwrap();
    let jobs = [vec![Job { trace: t, datasets: Some(20) }]];
    let alloc = AllocationMap::contiguous(8, &[1]).unwrap();
    let pool = PoolConfig {
        num_gpcus: 1,
        ..PoolConfig::default()
    };
    let r = simulate_pool(&jobs, &alloc, &pool, &SlapConfig::default(), &MemConfig::default())
        .unwrap();
    let busy: Vec<usize> = r.cus.iter().filter(|c| c.retired_ops > 0).map(|c| c.id).collect();
    assert_eq!(busy, vec![0, 1, 2, 3, 4]);
}

#[test]
fn oversized_job_is_rejected() {
    let t = parse_trace("VALU\n").unwrap();
    let jobs = [vec![Job { trace: t, datasets: Some(40) }]];
    let alloc = AllocationMap::contiguous(8, &[1]).unwrap();
    let pool = PoolConfig {
        num_gpcus: 1,
        ..PoolConfig::default()
    };
    let err = simulate_pool(&jobs, &alloc, &pool, &SlapConfig::default(), &MemConfig::default())
        .unwrap_err();
    assert!(matches!(err, SimError::Allocation(_)));
}

#[test]
fn vector_job_without_cus_is_rejected() {
    let t = parse_trace("VALU\n").unwrap();
    let jobs = [vec![job(t.clone())], vec![job(t)]];
    let alloc = AllocationMap::contiguous(8, &[3, 0]).unwrap();
    let err = simulate_pool(
        &jobs,
        &alloc,
        &PoolConfig::default(),
        &SlapConfig::default(),
        &MemConfig::default(),
    )
    .unwrap_err();
    assert!(matches!(err, SimError::Allocation(_)));
}
