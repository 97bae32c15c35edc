//! Synthetic trace generation.
//!
//! Every bundle is drawn independently. On each side, slot 0 holds a
//! memory op with probability `mem_rate`; each remaining slot holds an ALU
//! op with probability `(op_rate - mem_rate) / (slots - 1)`, so the
//! expected op count per bundle is `op_rate`. A bundle that draws nothing
//! becomes a single `NOP`.
//!
//! The generator is ChaCha8 (`rand_chacha`) seeded with `seed_from_u64`.
//! Only raw `next_u64` output is used: floats take the top 53 bits and
//! bounded integers use a 128-bit multiply-shift, so a seed yields the
//! same trace on every platform and crate version that keeps ChaCha8.

use std::collections::BTreeMap;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kv::{self, KvError};
use crate::memsys::MIB;
use crate::trace::{Bundle, MicroOp, OpClass, Side, Slots, Trace, TraceMeta};

pub const DEFAULT_SEED: u64 = 7;
pub const ROGUE_TABLE_BASE: u32 = 64 * MIB as u32;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GenError {
    #[error("{0}")]
    Invalid(String),
    #[error("combo has no regions")]
    NoRegions,
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error(transparent)]
    Kv(#[from] KvError),
}

/// Address-pattern mix for one side. The three fractions sum to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MemMix {
    pub streaming: f64,
    pub strided: f64,
    pub rogue: f64,
    pub stride: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SideSpec {
    /// Expected ops per bundle.
    pub op_rate: f64,
    /// Probability that a bundle carries a memory op on this side.
    pub mem_rate: f64,
    /// Share of memory ops that are stores.
    pub store_fraction: f64,
    pub mix: MemMix,
    /// Streaming accesses walk `[stream_base, stream_base + stream_window)`.
    pub stream_base: u32,
    pub stream_window: u32,
    /// Strided accesses walk their own window the same way.
    pub strided_base: u32,
    pub strided_window: u32,
}

impl SideSpec {
    fn scalar_default() -> Self {
        SideSpec {
            op_rate: 2.0,
            mem_rate: 0.4,
            store_fraction: 0.2,
            mix: MemMix {
                streaming: 0.7,
                strided: 0.3,
                rogue: 0.0,
                stride: 128,
            },
            stream_base: 0,
            stream_window: 4 << 10,
            strided_base: 0x10000,
            strided_window: 2 << 10,
        }
    }

    fn vector_default() -> Self {
        SideSpec {
            op_rate: 1.0,
            mem_rate: 0.3,
            store_fraction: 0.3,
            mix: MemMix {
                streaming: 0.85,
                strided: 0.15,
                rogue: 0.0,
                stride: 128,
            },
            stream_base: 0x20000,
            stream_window: 9 << 10,
            strided_base: 0xA0000,
            strided_window: 4 << 10,
        }
    }

    fn validate(&self, side: &str, slots: usize) -> Result<(), GenError> {
        let bad = |msg: String| Err(GenError::Invalid(format!("{side}: {msg}")));
        let probs = [
            ("mem_rate", self.mem_rate),
            ("store_fraction", self.store_fraction),
            ("streaming", self.mix.streaming),
            ("strided", self.mix.strided),
            ("rogue", self.mix.rogue),
        ];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} = {p} is not a probability"));
            }
        }
        if self.op_rate < self.mem_rate {
            return bad(format!(
                "op_rate {} is below mem_rate {}",
                self.op_rate, self.mem_rate
            ));
        }
        if self.op_rate > slots as f64 {
            return bad(format!("op_rate {} exceeds {slots} slots", self.op_rate));
        }
        let alu = self.op_rate - self.mem_rate;
        if alu > 0.0 && slots < 2 {
            return bad("ALU ops need at least two slots".into());
        }
        if alu > (slots - 1) as f64 {
            return bad(format!("ALU rate {alu} exceeds {} slots", slots - 1));
        }
        let sum = self.mix.streaming + self.mix.strided + self.mix.rogue;
        if (sum - 1.0).abs() > 1e-9 {
            return bad(format!("memory mix sums to {sum}, not 1"));
        }
        if self.stream_window == 0 || self.strided_window == 0 || self.mix.stride == 0 {
            return bad("windows and stride must be non-zero".into());
        }
        if self.stream_base.checked_add(self.stream_window).is_none()
            || self.strided_base.checked_add(self.strided_window).is_none()
        {
            return bad("window extends past 4 GiB".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RegionKind {
    ScalarHeavy,
    Mixed,
    Custom,
}

impl RegionKind {
    pub fn name(self) -> &'static str {
        match self {
            RegionKind::ScalarHeavy => "scalar-heavy",
            RegionKind::Mixed => "mixed",
            RegionKind::Custom => "custom",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSpec {
    pub kind: RegionKind,
    pub bundles: usize,
    pub scalar: SideSpec,
    pub vector: SideSpec,
    pub rogue_table_bytes: u32,
    pub slots: Slots,
    pub seed: u64,
}

impl RegionSpec {
    pub fn preset(name: &str) -> Result<Self, GenError> {
        let mut r = RegionSpec {
            kind: RegionKind::Custom,
            bundles: 8000,
            scalar: SideSpec::scalar_default(),
            vector: SideSpec::vector_default(),
            rogue_table_bytes: 64 * MIB as u32,
            slots: Slots::default(),
            seed: DEFAULT_SEED,
        };
        match name {
            "scalar-heavy" => {
                r.kind = RegionKind::ScalarHeavy;
                r.scalar.op_rate = 2.6;
                r.scalar.mem_rate = 0.5;
                r.vector.op_rate = 0.4;
                r.vector.mem_rate = 0.1;
            }
            "mixed" => {
                r.kind = RegionKind::Mixed;
                r.scalar.op_rate = 1.4;
                r.scalar.mem_rate = 0.3;
                r.vector.op_rate = 1.25;
                r.vector.mem_rate = 0.3;
                r.vector.mix.streaming = 0.835;
                r.vector.mix.rogue = 0.015;
            }
            "custom" => {}
            other => return Err(GenError::UnknownPreset(other.to_string())),
        }
        Ok(r)
    }

    pub fn validate(&self) -> Result<(), GenError> {
        if self.bundles == 0 {
            return Err(GenError::Invalid("region has no bundles".into()));
        }
        if self.rogue_table_bytes < 64 {
            return Err(GenError::Invalid("rogue table smaller than one access".into()));
        }
        if (ROGUE_TABLE_BASE as u64) + self.rogue_table_bytes as u64 > u32::MAX as u64 + 1 {
            return Err(GenError::Invalid("rogue table extends past 4 GiB".into()));
        }
        self.scalar.validate("scalar", self.slots.scalar)?;
        self.vector.validate("vector", self.slots.vector)?;
        Ok(())
    }

    fn set(&mut self, key: &str, v: &str) -> Result<(), GenError> {
        let k = |s: &str| s.to_string();
        match key {
            "bundles" => self.bundles = kv::value(key, v)?,
            "seed" => self.seed = kv::int_value(key, v)?,
            "rogue_table_bytes" => {
                self.rogue_table_bytes = u32::try_from(kv::int_value(key, v)?)
                    .map_err(|_| KvError::BadValue { key: k(key), value: k(v) })?
            }
            _ => {
                let (side, field) = key
                    .split_once('.')
                    .ok_or_else(|| KvError::UnknownKey(k(key)))?;
                let s = match side {
                    "scalar" => &mut self.scalar,
                    "vector" => &mut self.vector,
                    _ => return Err(KvError::UnknownKey(k(key)).into()),
                };
                let u32_of = |v: &str| -> Result<u32, KvError> {
                    u32::try_from(kv::int_value(key, v)?)
                        .map_err(|_| KvError::BadValue { key: k(key), value: k(v) })
                };
                match field {
                    "op_rate" => s.op_rate = kv::value(key, v)?,
                    "mem_rate" => s.mem_rate = kv::value(key, v)?,
                    "store_fraction" => s.store_fraction = kv::value(key, v)?,
                    "streaming" => s.mix.streaming = kv::value(key, v)?,
                    "strided" => s.mix.strided = kv::value(key, v)?,
                    "rogue" => s.mix.rogue = kv::value(key, v)?,
                    "stride" => s.mix.stride = u32_of(v)?,
                    "stream_base" => s.stream_base = u32_of(v)?,
                    "stream_window" => s.stream_window = u32_of(v)?,
                    "strided_base" => s.strided_base = u32_of(v)?,
                    "strided_window" => s.strided_window = u32_of(v)?,
                    _ => return Err(KvError::UnknownKey(k(key)).into()),
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComboSpec {
    pub name: String,
    pub seed: u64,
    pub regions: Vec<RegionSpec>,
}

impl ComboSpec {
    /// Scalar-heavy, mixed, scalar-heavy, mixed, scalar-heavy.
    pub fn default_combo(seed: u64) -> Self {
        let names = ["scalar-heavy", "mixed", "scalar-heavy", "mixed", "scalar-heavy"];
        Self::from_presets(&names, seed).expect("built-in presets")
    }

    pub fn from_presets(names: &[&str], seed: u64) -> Result<Self, GenError> {
        let regions = names
            .iter()
            .enumerate()
            .map(|(k, n)| {
                let mut r = RegionSpec::preset(n)?;
                r.seed = region_seed(seed, k);
                Ok(r)
            })
            .collect::<Result<Vec<_>, GenError>>()?;
        Ok(ComboSpec {
            name: "combo".into(),
            seed,
            regions,
        })
    }

    /// Reads a spec file:
    ///
    /// ```text
    /// seed = 7
    /// name = combo
    /// regions = scalar-heavy, mixed, scalar-heavy
    /// bundles = 2000            # every region
    /// region.1.vector.op_rate = 1.8
    /// ```
    ///
    /// Region indices start at 0. `seed` given to the caller, if any,
    /// overrides the file's.
    pub fn from_kv(text: &str, seed_override: Option<u64>) -> Result<Self, GenError> {
        let map = kv::parse_kv(text)?;
        let seed = match (seed_override, map.get("seed")) {
            (Some(s), _) => s,
            (None, Some(v)) => kv::int_value("seed", v)?,
            (None, None) => DEFAULT_SEED,
        };
        let mut spec = match map.get("regions") {
            Some(list) => {
                let names: Vec<&str> = list.split(',').map(str::trim).collect();
                Self::from_presets(&names, seed)?
            }
            None => Self::default_combo(seed),
        };
        if let Some(n) = map.get("name") {
            spec.name = n.clone();
        }
        let mut per_region: BTreeMap<usize, Vec<(&str, &str)>> = BTreeMap::new();
        for (key, v) in &map {
            match key.as_str() {
                "seed" | "regions" | "name" => {}
                "bundles" => {
                    for r in &mut spec.regions {
                        r.set("bundles", v)?;
                    }
                }
                _ => {
                    let rest = key
                        .strip_prefix("region.")
                        .ok_or_else(|| KvError::UnknownKey(key.clone()))?;
                    let (idx, field) = rest
                        .split_once('.')
                        .ok_or_else(|| KvError::UnknownKey(key.clone()))?;
                    let idx: usize = idx.parse().map_err(|_| KvError::UnknownKey(key.clone()))?;
                    per_region.entry(idx).or_default().push((field, v));
                }
            }
        }
        for (idx, fields) in per_region {
            let r = spec
                .regions
                .get_mut(idx)
                .ok_or_else(|| GenError::Invalid(format!("no region {idx}")))?;
            for (field, v) in fields {
                r.set(field, v)?;
            }
        }
        Ok(spec)
    }
}

pub fn region_seed(combo_seed: u64, k: usize) -> u64 {
    combo_seed.wrapping_add((k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Ops actually drawn for one region.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionDraws {
    pub bundles: usize,
    pub scalar_ops: usize,
    pub vector_ops: usize,
    pub scalar_mem: usize,
    pub vector_mem: usize,
}

struct Rng(ChaCha8Rng);

impl Rng {
    fn unit(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    fn chance(&mut self, p: f64) -> bool {
        self.unit() < p
    }

    fn below(&mut self, n: u64) -> u64 {
        ((self.0.next_u64() as u128 * n as u128) >> 64) as u64
    }
}

struct Cursor {
    stream: u32,
    strided: u32,
}

fn next_addr(rng: &mut Rng, s: &SideSpec, cur: &mut Cursor, size: u32, rogue_bytes: u32) -> u32 {
    let r = rng.unit();
    if r < s.mix.streaming {
        let a = s.stream_base + cur.stream;
        cur.stream = (cur.stream + size) % (s.stream_window / size * size).max(size);
        a
    } else if r < s.mix.streaming + s.mix.strided {
        let a = s.strided_base + cur.strided;
        let span = (s.strided_window / size * size).max(size);
        let step = (s.mix.stride / size * size).max(size);
        cur.strided = (cur.strided + step) % span;
        a
    } else {
        let slots = (rogue_bytes / size).max(1) as u64;
        ROGUE_TABLE_BASE + rng.below(slots) as u32 * size
    }
}

fn draw_side(
    rng: &mut Rng,
    s: &SideSpec,
    side: Side,
    slots: usize,
    cur: &mut Cursor,
    rogue_bytes: u32,
    ops: &mut Vec<MicroOp>,
) -> usize {
    let (load, store) = match side {
        Side::Scalar => (OpClass::Sload, OpClass::Sstore),
        Side::Vector => (OpClass::Vload, OpClass::Vstore),
    };
    let mut mem = 0;
    if rng.chance(s.mem_rate) {
        let class = if rng.chance(s.store_fraction) { store } else { load };
        let size = class.default_size() as u32;
        let addr = next_addr(rng, s, cur, size, rogue_bytes);
        ops.push(MicroOp::mem(class, addr).expect("aligned by construction"));
        mem = 1;
    }
    if slots > 1 {
        let p = (s.op_rate - s.mem_rate) / (slots - 1) as f64;
        for _ in 1..slots {
            if rng.chance(p) {
                let class = match side {
                    Side::Vector => OpClass::Valu,
                    Side::Scalar => match rng.below(10) {
                        0..=6 => OpClass::Salu,
                        7..=8 => OpClass::Smul,
                        _ => OpClass::Sbranch,
                    },
                };
                ops.push(MicroOp::alu(class));
            }
        }
    }
    mem
}

fn gen_bundles(spec: &RegionSpec) -> (Vec<Bundle>, RegionDraws) {
    let mut rng = Rng(ChaCha8Rng::seed_from_u64(spec.seed));
    let mut sc = Cursor { stream: 0, strided: 0 };
    let mut vc = Cursor { stream: 0, strided: 0 };
    let mut draws = RegionDraws {
        bundles: spec.bundles,
        ..RegionDraws::default()
    };
    let bundles = (0..spec.bundles)
        .map(|_| {
            let mut b = Bundle::default();
            draws.scalar_mem += draw_side(
                &mut rng,
                &spec.scalar,
                Side::Scalar,
                spec.slots.scalar,
                &mut sc,
                spec.rogue_table_bytes,
                &mut b.scalar_ops,
            );
            draws.vector_mem += draw_side(
                &mut rng,
                &spec.vector,
                Side::Vector,
                spec.slots.vector,
                &mut vc,
                spec.rogue_table_bytes,
                &mut b.vector_ops,
            );
            draws.scalar_ops += b.scalar_ops.len();
            draws.vector_ops += b.vector_ops.len();
            if b.scalar_ops.is_empty() && b.vector_ops.is_empty() {
                b.scalar_ops.push(MicroOp::alu(OpClass::Nop));
            }
            b
        })
        .collect();
    (bundles, draws)
}

pub fn gen_region(spec: &RegionSpec) -> Result<Trace, GenError> {
    spec.validate()?;
    let (bundles, _) = gen_bundles(spec);
    Ok(Trace {
        meta: TraceMeta {
            slots: spec.slots,
            name: None,
            seed: Some(spec.seed),
            region_starts: Vec::new(),
        },
        bundles,
    })
}

/// Concatenates the regions and marks where each begins. Also returns
/// what each region actually drew.
pub fn gen_combo(spec: &ComboSpec) -> Result<(Trace, Vec<RegionDraws>), GenError> {
    let first = spec.regions.first().ok_or(GenError::NoRegions)?;
    if spec.regions.iter().any(|r| r.slots != first.slots) {
        return Err(GenError::Invalid("regions disagree on slot counts".into()));
    }
    let mut bundles = Vec::new();
    let mut starts = Vec::new();
    let mut draws = Vec::new();
    for r in &spec.regions {
        r.validate()?;
        starts.push(bundles.len());
        let (b, d) = gen_bundles(r);
        bundles.extend(b);
        draws.push(d);
    }
    let trace = Trace {
        meta: TraceMeta {
            slots: first.slots,
            name: Some(spec.name.clone()),
            seed: Some(spec.seed),
            region_starts: if spec.regions.len() > 1 { starts } else { Vec::new() },
        },
        bundles,
    };
    Ok((trace, draws))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{parse_trace, profile_regions, serialize_trace};

    #[test]
    fn no_vector_rate_no_vector_ops() {
        let mut r = RegionSpec::preset("mixed").unwrap();
        r.vector.op_rate = 0.0;
        r.vector.mem_rate = 0.0;
        let t = gen_region(&r).unwrap();
        assert_eq!(t.bundles.iter().map(Bundle::vector_op_count).sum::<usize>(), 0);
    }

    #[test]
    fn same_seed_same_bytes() {
        let r = RegionSpec::preset("mixed").unwrap();
        let a = serialize_trace(&gen_region(&r).unwrap());
        let b = serialize_trace(&gen_region(&r).unwrap());
        assert_eq!(a, b);
        let other = RegionSpec { seed: 8, ..r };
        assert_ne!(a, serialize_trace(&gen_region(&other).unwrap()));
    }

    #[test]
    fn scalar_rate_law_of_large_numbers() {
        let mut r = RegionSpec::preset("custom").unwrap();
        r.bundles = 10_000;
        r.scalar.op_rate = 2.0;
        let t = gen_region(&r).unwrap();
        let n: usize = t.bundles.iter().map(Bundle::scalar_op_count).sum();
        // 20000 +- 3%
        assert!((19_400..=20_600).contains(&n), "{n}");
    }

    #[test]
    fn single_region_combo_matches_region() {
        let mut combo = ComboSpec::from_presets(&["mixed"], 3).unwrap();
        combo.regions[0].bundles = 500;
        let (t, _) = gen_combo(&combo).unwrap();
        let solo = gen_region(&combo.regions[0]).unwrap();
        assert_eq!(t.bundles, solo.bundles);
    }

    #[test]
    fn empty_combo_is_an_error() {
        let spec = ComboSpec {
            name: "x".into(),
            seed: 1,
            regions: vec![],
        };
        assert_eq!(gen_combo(&spec).unwrap_err(), GenError::NoRegions);
    }

    #[test]
    fn generated_traces_round_trip() {
        let mut combo = ComboSpec::default_combo(DEFAULT_SEED);
        for r in &mut combo.regions {
            r.bundles = 200;
        }
        let (t, _) = gen_combo(&combo).unwrap();
        t.validate().unwrap();
        let text = serialize_trace(&t);
        let back = parse_trace(&text).unwrap();
        assert_eq!(back, t);
        assert_eq!(serialize_trace(&back), text);
    }

    #[test]
    fn default_combo_shows_five_plateaus() {
        let combo = ComboSpec::default_combo(DEFAULT_SEED);
        let (t, draws) = gen_combo(&combo).unwrap();
        let window = combo.regions[0].bundles;
        let prof = profile_regions(&t, window).unwrap();
        assert_eq!(prof.len(), 5);
        for (k, (p, d)) in prof.iter().zip(&draws).enumerate() {
            let want = d.scalar_ops as f64 / d.vector_ops as f64;
            let got = p.scalar_vector_ratio.unwrap();
            assert!((got - want).abs() <= 0.05 * want, "region {k}: {got} vs {want}");
            let heavy = combo.regions[k].kind == RegionKind::ScalarHeavy;
            assert_eq!(got > 2.0, heavy, "region {k} ratio {got}");
        }
    }

    #[test]
    fn spec_file_overrides() {
        let text = "seed = 11\nregions = mixed, scalar-heavy\nbundles = 100\nregion.1.vector.op_rate = 0.1\nregion.1.vector.mem_rate = 0.05\n";
        let spec = ComboSpec::from_kv(text, None).unwrap();
        assert_eq!(spec.seed, 11);
        assert_eq!(spec.regions.len(), 2);
        assert!(spec.regions.iter().all(|r| r.bundles == 100));
        assert_eq!(spec.regions[1].vector.op_rate, 0.1);
        assert_eq!(spec.regions[1].kind, RegionKind::ScalarHeavy);
        assert!(ComboSpec::from_kv("region.0.vector.bogus = 1\n", None).is_err());
        assert!(ComboSpec::from_kv("regions = nope\n", None).is_err());
        let o = ComboSpec::from_kv(text, Some(5)).unwrap();
        assert_eq!(o.seed, 5);
    }

    #[test]
    fn invalid_rates_rejected() {
        let mut r = RegionSpec::preset("mixed").unwrap();
        r.vector.op_rate = 2.5;
        assert!(gen_region(&r).is_err());
        let mut r = RegionSpec::preset("mixed").unwrap();
        r.scalar.mix.rogue = 0.5;
        assert!(gen_region(&r).is_err());
    }
}
