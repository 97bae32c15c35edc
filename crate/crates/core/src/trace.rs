//! Instruction bundle model and the plain-text trace format.
//!
//! A trace is a sequence of VLIW issue packets in program order. Each
//! packet carries up to `S` scalar-side ops and up to `V` vector-side ops;
//! memory ops carry a 32-bit byte address and an access width. There are no
//! register operands: every model in this crate is timing-only.
//!
//! Text format, one bundle per line:
//!
//! ```text
//! !slots S=4 V=2
//! !name demo
//! !seed 7
//! # region 1
//! SALU;SLOAD@0x1000;VLOAD@0x20000
//! VALU;VSTORE@0x20040,64
//! ```
//!
//! `#` starts a comment, except that a line of the exact form `# region <k>`
//! marks the start of a new region. Sizes default to 4 bytes on the scalar
//! side and 32 bytes on the vector side and are omitted on output when they
//! equal the default.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_SCALAR_SLOTS: usize = 4;
pub const DEFAULT_VECTOR_SLOTS: usize = 2;
pub const DEFAULT_SCALAR_SIZE: u8 = 4;
pub const DEFAULT_VECTOR_SIZE: u8 = 32;
pub const MAX_ACCESS_SIZE: u8 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum OpClass {
    Salu,
    Smul,
    Sbranch,
    Sload,
    Sstore,
    Valu,
    Vload,
    Vstore,
    Nop,
}

impl OpClass {
    pub const ALL: [OpClass; 9] = [
        OpClass::Salu,
        OpClass::Smul,
        OpClass::Sbranch,
        OpClass::Sload,
        OpClass::Sstore,
        OpClass::Valu,
        OpClass::Vload,
        OpClass::Vstore,
        OpClass::Nop,
    ];

    pub fn mnemonic(self) -> &'static str {
        match self {
            OpClass::Salu => "SALU",
            OpClass::Smul => "SMUL",
            OpClass::Sbranch => "SBRANCH",
            OpClass::Sload => "SLOAD",
            OpClass::Sstore => "SSTORE",
            OpClass::Valu => "VALU",
            OpClass::Vload => "VLOAD",
            OpClass::Vstore => "VSTORE",
            OpClass::Nop => "NOP",
        }
    }

    pub fn is_memory(self) -> bool {
        matches!(
            self,
            OpClass::Sload | OpClass::Sstore | OpClass::Vload | OpClass::Vstore
        )
    }

    pub fn is_store(self) -> bool {
        matches!(self, OpClass::Sstore | OpClass::Vstore)
    }

    /// NOP occupies a scalar slot; it never travels to the vector side.
    pub fn side(self) -> Side {
        match self {
            OpClass::Valu | OpClass::Vload | OpClass::Vstore => Side::Vector,
            _ => Side::Scalar,
        }
    }

    pub fn default_size(self) -> u8 {
        match self.side() {
            Side::Scalar => DEFAULT_SCALAR_SIZE,
            Side::Vector => DEFAULT_VECTOR_SIZE,
        }
    }
}

impl fmt::Display for OpClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.mnemonic())
    }
}

impl FromStr for OpClass {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        OpClass::ALL
            .iter()
            .copied()
            .find(|c| c.mnemonic().eq_ignore_ascii_case(s))
            .ok_or(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Scalar,
    Vector,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Scalar => "scalar",
            Side::Vector => "vector",
        })
    }
}

/// A byte range touched by a memory op.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MemRef {
    pub addr: u32,
    pub size: u8,
}

impl MemRef {
    pub fn end(self) -> u64 {
        self.addr as u64 + self.size as u64
    }

    /// Half-open interval overlap.
    pub fn overlaps(self, other: MemRef) -> bool {
        (self.addr as u64) < other.end() && (other.addr as u64) < self.end()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OpError {
    #[error("{0} requires an address")]
    MissingAddress(OpClass),
    #[error("{0} does not take an address or size")]
    UnexpectedAddress(OpClass),
    #[error("access size {0} is not a power of two in 1..=64")]
    BadSize(u32),
    #[error("address {addr:#x} is not aligned to size {size}")]
    Misaligned { addr: u32, size: u8 },
    #[error("{class} cannot be placed on the {side} side")]
    WrongSide { class: OpClass, side: Side },
    #[error("{side} side has {count} ops but only {slots} slots")]
    SlotOverflow { side: Side, count: usize, slots: usize },
    #[error("more than one memory op on the {0} side")]
    DuplicateMemOp(Side),
    #[error("bundle has no ops")]
    EmptyBundle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MicroOp {
    pub class: OpClass,
    pub mem: Option<MemRef>,
}

impl MicroOp {
    pub fn new(class: OpClass, mem: Option<MemRef>) -> Result<Self, OpError> {
        let op = MicroOp { class, mem };
        op.validate()?;
        Ok(op)
    }

    /// A non-memory op. Panics if `class` is a memory class.
    pub fn alu(class: OpClass) -> Self {
        assert!(!class.is_memory(), "{class} needs an address");
        MicroOp { class, mem: None }
    }

    /// A memory op with the class's default access size.
    pub fn mem(class: OpClass, addr: u32) -> Result<Self, OpError> {
        Self::mem_sized(class, addr, class.default_size())
    }

    pub fn mem_sized(class: OpClass, addr: u32, size: u8) -> Result<Self, OpError> {
        Self::new(class, Some(MemRef { addr, size }))
    }

    pub fn validate(&self) -> Result<(), OpError> {
        match (self.class.is_memory(), self.mem) {
            (true, None) => Err(OpError::MissingAddress(self.class)),
            (false, Some(_)) => Err(OpError::UnexpectedAddress(self.class)),
            (false, None) => Ok(()),
            (true, Some(m)) => {
                if m.size == 0 || !m.size.is_power_of_two() || m.size > MAX_ACCESS_SIZE {
                    return Err(OpError::BadSize(m.size as u32));
                }
                if m.addr % m.size as u32 != 0 {
                    return Err(OpError::Misaligned {
                        addr: m.addr,
                        size: m.size,
                    });
                }
                Ok(())
            }
        }
    }
}

impl fmt::Display for MicroOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.class.mnemonic())?;
        if let Some(m) = self.mem {
            write!(f, "@{:#x}", m.addr)?;
            if m.size != self.class.default_size() {
                write!(f, ",{}", m.size)?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slots {
    pub scalar: usize,
    pub vector: usize,
}

impl Default for Slots {
    fn default() -> Self {
        Slots {
            scalar: DEFAULT_SCALAR_SLOTS,
            vector: DEFAULT_VECTOR_SLOTS,
        }
    }
}

/// One VLIW issue packet.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bundle {
    pub scalar_ops: Vec<MicroOp>,
    pub vector_ops: Vec<MicroOp>,
}

impl Bundle {
    pub fn new(scalar_ops: Vec<MicroOp>, vector_ops: Vec<MicroOp>) -> Self {
        Bundle {
            scalar_ops,
            vector_ops,
        }
    }

    pub fn validate(&self, slots: Slots) -> Result<(), OpError> {
        if self.scalar_ops.is_empty() && self.vector_ops.is_empty() {
            return Err(OpError::EmptyBundle);
        }
        for (ops, side, limit) in [
            (&self.scalar_ops, Side::Scalar, slots.scalar),
            (&self.vector_ops, Side::Vector, slots.vector),
        ] {
            if ops.len() > limit {
                return Err(OpError::SlotOverflow {
                    side,
                    count: ops.len(),
                    slots: limit,
                });
            }
            let mut mem_ops = 0;
            for op in ops {
                op.validate()?;
                if op.class.side() != side {
                    return Err(OpError::WrongSide {
                        class: op.class,
                        side,
                    });
                }
                mem_ops += op.class.is_memory() as usize;
            }
            if mem_ops > 1 {
                return Err(OpError::DuplicateMemOp(side));
            }
        }
        Ok(())
    }

    /// The scalar-side memory op, if any.
    pub fn scalar_mem(&self) -> Option<(OpClass, MemRef)> {
        self.scalar_ops
            .iter()
            .find_map(|op| op.mem.map(|m| (op.class, m)))
    }

    /// The vector-side memory op, if any.
    pub fn vector_mem(&self) -> Option<(OpClass, MemRef)> {
        self.vector_ops
            .iter()
            .find_map(|op| op.mem.map(|m| (op.class, m)))
    }

    /// Scalar ops excluding NOPs.
    pub fn scalar_op_count(&self) -> usize {
        self.scalar_ops
            .iter()
            .filter(|op| op.class != OpClass::Nop)
            .count()
    }

    pub fn vector_op_count(&self) -> usize {
        self.vector_ops.len()
    }

    pub fn has_vector_work(&self) -> bool {
        !self.vector_ops.is_empty()
    }

    pub fn memory_ops(&self) -> impl Iterator<Item = (OpClass, MemRef)> + '_ {
        self.scalar_ops
            .iter()
            .chain(self.vector_ops.iter())
            .filter_map(|op| op.mem.map(|m| (op.class, m)))
    }
}

impl fmt::Display for Bundle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, op) in self.scalar_ops.iter().chain(&self.vector_ops).enumerate() {
            if i > 0 {
                f.write_char(';')?;
            }
            write!(f, "{op}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub slots: Slots,
    pub name: Option<String>,
    pub seed: Option<u64>,
    /// Bundle index at which each region starts. Empty when the trace
    /// carries no region markers.
    pub region_starts: Vec<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trace {
    pub meta: TraceMeta,
    pub bundles: Vec<Bundle>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TraceError {
    #[error("line {line}, column {column}: {kind}")]
    Parse {
        line: usize,
        column: usize,
        kind: ParseErrorKind,
    },
    #[error("bundle {index}: {source}")]
    Bundle {
        index: usize,
        #[source]
        source: OpError,
    },
    #[error("region starts must be strictly increasing and inside the trace: {0:?}")]
    Regions(Vec<usize>),
    #[error("profile window must be at least 1")]
    ZeroWindow,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseErrorKind {
    #[error("unknown op class `{0}`")]
    UnknownClass(String),
    #[error("malformed op `{0}`")]
    MalformedOp(String),
    #[error("malformed header `{0}`")]
    MalformedHeader(String),
    #[error("header after the first bundle")]
    LateHeader,
    #[error("region marker with no bundles after it")]
    DanglingRegion,
    #[error(transparent)]
    Op(#[from] OpError),
}

impl Trace {
    pub fn new(slots: Slots, bundles: Vec<Bundle>) -> Self {
        Trace {
            meta: TraceMeta {
                slots,
                ..TraceMeta::default()
            },
            bundles,
        }
    }

    pub fn len(&self) -> usize {
        self.bundles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bundles.is_empty()
    }

    pub fn validate(&self) -> Result<(), TraceError> {
        for (index, b) in self.bundles.iter().enumerate() {
            b.validate(self.meta.slots)
                .map_err(|source| TraceError::Bundle { index, source })?;
        }
        let starts = &self.meta.region_starts;
        let increasing = starts.windows(2).all(|w| w[0] < w[1]);
        if !increasing || starts.last().is_some_and(|&s| s >= self.bundles.len()) {
            return Err(TraceError::Regions(starts.clone()));
        }
        Ok(())
    }

    /// Bundle index ranges of each region, or `None` when the trace has no
    /// region markers. Bundles before the first marker form their own
    /// leading region.
    pub fn regions(&self) -> Option<Vec<std::ops::Range<usize>>> {
        let starts = &self.meta.region_starts;
        if starts.is_empty() {
            return None;
        }
        let mut bounds: Vec<usize> = Vec::with_capacity(starts.len() + 2);
        if starts[0] != 0 {
            bounds.push(0);
        }
        bounds.extend_from_slice(starts);
        bounds.push(self.bundles.len());
        Some(bounds.windows(2).map(|w| w[0]..w[1]).collect())
    }

    /// Region boundaries as the index of the last bundle of each region.
    /// A trace without markers is a single region.
    pub fn region_last_bundles(&self) -> Vec<usize> {
        match self.regions() {
            Some(r) => r.iter().map(|r| r.end - 1).collect(),
            None if self.bundles.is_empty() => Vec::new(),
            None => vec![self.bundles.len() - 1],
        }
    }

    pub fn memory_refs(&self) -> impl Iterator<Item = (OpClass, MemRef)> + '_ {
        self.bundles.iter().flat_map(|b| b.memory_ops())
    }

    pub fn scalar_op_count(&self) -> usize {
        self.bundles.iter().map(Bundle::scalar_op_count).sum()
    }

    pub fn vector_op_count(&self) -> usize {
        self.bundles.iter().map(Bundle::vector_op_count).sum()
    }
}

/// Parses a trace document. Every bundle is validated against the slot
/// counts in effect; failures carry a 1-based line and column.
pub fn parse_trace(text: &str) -> Result<Trace, TraceError> {
    let mut meta = TraceMeta::default();
    let mut bundles = Vec::new();
    let mut pending_region = None;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let err = |column: usize, kind: ParseErrorKind| TraceError::Parse {
            line: line_no,
            column,
            kind,
        };
        let line = raw.trim_end();
        let content_col = line.len() - line.trim_start().len() + 1;
        let content = line.trim_start();

        if let Some(comment) = content.strip_prefix('#') {
            if let Some(rest) = comment.trim().strip_prefix("region") {
                if rest.starts_with(char::is_whitespace) && rest.trim().parse::<u64>().is_ok() {
                    if meta.region_starts.last() != Some(&bundles.len()) {
                        meta.region_starts.push(bundles.len());
                    }
                    pending_region = Some(line_no);
                }
            }
            continue;
        }
        // strip trailing comment
        let content = content.split('#').next().unwrap_or("").trim_end();
        if content.is_empty() {
            continue;
        }
        if let Some(header) = content.strip_prefix('!') {
            if !bundles.is_empty() {
                return Err(err(content_col, ParseErrorKind::LateHeader));
            }
            parse_header(header, &mut meta)
                .map_err(|()| err(content_col, ParseErrorKind::MalformedHeader(content.into())))?;
            continue;
        }

        let mut bundle = Bundle::default();
        let mut col = content_col;
        for piece in content.split(';') {
            let lead = piece.len() - piece.trim_start().len();
            let token = piece.trim();
            let op = parse_op(token).map_err(|kind| err(col + lead, kind))?;
            match op.class.side() {
                Side::Scalar => bundle.scalar_ops.push(op),
                Side::Vector => bundle.vector_ops.push(op),
            }
            col += piece.len() + 1;
        }
        bundle
            .validate(meta.slots)
            .map_err(|e| err(content_col, ParseErrorKind::Op(e)))?;
        bundles.push(bundle);
        pending_region = None;
    }

    if let Some(line) = pending_region {
        return Err(TraceError::Parse {
            line,
            column: 1,
            kind: ParseErrorKind::DanglingRegion,
        });
    }
    Ok(Trace { meta, bundles })
}

fn parse_header(header: &str, meta: &mut TraceMeta) -> Result<(), ()> {
    let (key, rest) = header.split_once(char::is_whitespace).ok_or(())?;
    let rest = rest.trim();
    match key {
        "slots" => {
            let mut s = None;
            let mut v = None;
            for kv in rest.split_whitespace() {
                let (k, val) = kv.split_once('=').ok_or(())?;
                let n: usize = val.parse().map_err(|_| ())?;
                match k {
                    "S" | "s" => s = Some(n),
                    "V" | "v" => v = Some(n),
                    _ => return Err(()),
                }
            }
            match (s, v) {
                (Some(scalar), Some(vector)) if scalar >= 1 => {
                    meta.slots = Slots { scalar, vector };
                    Ok(())
                }
                _ => Err(()),
            }
        }
        "name" if !rest.is_empty() => {
            meta.name = Some(rest.to_string());
            Ok(())
        }
        "seed" => {
            meta.seed = Some(rest.parse().map_err(|_| ())?);
            Ok(())
        }
        _ => Err(()),
    }
}

fn parse_op(token: &str) -> Result<MicroOp, ParseErrorKind> {
    let malformed = || ParseErrorKind::MalformedOp(token.to_string());
    let (head, size) = match token.split_once(',') {
        Some((h, s)) => {
            let s = s.trim();
            if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
                return Err(malformed());
            }
            let size: u32 = s.parse().map_err(|_| malformed())?;
            (h.trim_end(), Some(size))
        }
        None => (token, None),
    };
    let (class_str, addr) = match head.split_once('@') {
        Some((c, a)) => {
            let hex = a
                .strip_prefix("0x")
                .or_else(|| a.strip_prefix("0X"))
                .ok_or_else(malformed)?;
            if hex.is_empty() || !hex.bytes().all(|b| b.is_ascii_hexdigit()) {
                return Err(malformed());
            }
            let addr = u32::from_str_radix(hex, 16).map_err(|_| malformed())?;
            (c.trim_end(), Some(addr))
        }
        None => (head, None),
    };
    let class: OpClass = class_str
        .parse()
        .map_err(|()| ParseErrorKind::UnknownClass(class_str.to_string()))?;
    let mem = match (addr, size) {
        (None, None) => None,
        (None, Some(_)) => {
            return Err(if class.is_memory() {
                OpError::MissingAddress(class).into()
            } else {
                OpError::UnexpectedAddress(class).into()
            })
        }
        (Some(addr), size) => {
            let size = size.unwrap_or(class.default_size() as u32);
            if size > MAX_ACCESS_SIZE as u32 {
                return Err(OpError::BadSize(size).into());
            }
            Some(MemRef {
                addr,
                size: size as u8,
            })
        }
    };
    Ok(MicroOp::new(class, mem)?)
}

/// Writes a trace in normalized form: header first, uppercase mnemonics,
/// lowercase unpadded hex, sizes only when non-default, regions numbered
/// from 1.
pub fn serialize_trace(t: &Trace) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "!slots S={} V={}",
        t.meta.slots.scalar, t.meta.slots.vector
    );
    if let Some(name) = &t.meta.name {
        let _ = writeln!(out, "!name {name}");
    }
    if let Some(seed) = t.meta.seed {
        let _ = writeln!(out, "!seed {seed}");
    }
    let mut regions = t.meta.region_starts.iter().peekable();
    let mut region_no = 0;
    for (i, b) in t.bundles.iter().enumerate() {
        while regions.next_if(|&&s| s == i).is_some() {
            region_no += 1;
            let _ = writeln!(out, "# region {region_no}");
        }
        let _ = writeln!(out, "{b}");
    }
    out
}

/// Scalar/vector op mix over one window of bundles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionProfileStats {
    pub first_bundle: usize,
    pub window_size: usize,
    pub scalar_op_count: usize,
    pub vector_op_count: usize,
    /// `None` when the window has no vector ops.
    pub scalar_vector_ratio: Option<f64>,
}

pub fn profile_regions(t: &Trace, window: usize) -> Result<Vec<RegionProfileStats>, TraceError> {
    if window == 0 {
        return Err(TraceError::ZeroWindow);
    }
    Ok(t
        .bundles
        .chunks(window)
        .enumerate()
        .map(|(i, chunk)| {
            let scalar: usize = chunk.iter().map(Bundle::scalar_op_count).sum();
            let vector: usize = chunk.iter().map(Bundle::vector_op_count).sum();
            RegionProfileStats {
                first_bundle: i * window,
                window_size: chunk.len(),
                scalar_op_count: scalar,
                vector_op_count: vector,
                scalar_vector_ratio: (vector > 0).then(|| scalar as f64 / vector as f64),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse_err(text: &str) -> (usize, usize, ParseErrorKind) {
        match parse_trace(text) {
            Err(TraceError::Parse { line, column, kind }) => (line, column, kind),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn minimal_bundle() {
        let t = parse_trace("SALU").unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.bundles[0].scalar_ops.len(), 1);
        assert!(t.bundles[0].vector_ops.is_empty());
        assert_eq!(t.meta.slots, Slots::default());
    }

    #[test]
    fn load_plus_valu() {
        let t = parse_trace("SLOAD@0x1000,4;VALU").unwrap();
        let b = &t.bundles[0];
        assert_eq!(
            b.scalar_ops,
            vec![MicroOp::mem_sized(OpClass::Sload, 0x1000, 4).unwrap()]
        );
        assert_eq!(b.vector_ops, vec![MicroOp::alu(OpClass::Valu)]);
    }

    #[test]
    fn default_sizes_per_side() {
        let t = parse_trace("SSTORE@0x8;VLOAD@0x40").unwrap();
        assert_eq!(t.bundles[0].scalar_mem().unwrap().1.size, 4);
        assert_eq!(t.bundles[0].vector_mem().unwrap().1.size, 32);
    }

    #[test]
    fn empty_trace_serializes_to_header() {
        let t = Trace::default();
        assert_eq!(serialize_trace(&t), "!slots S=4 V=2\n");
        assert_eq!(parse_trace(&serialize_trace(&t)).unwrap(), t);
    }

    #[test]
    fn single_bundle_serializes_to_one_line() {
        let t = parse_trace("salu ; vload@0X1A0,32").unwrap();
        assert_eq!(serialize_trace(&t), "!slots S=4 V=2\nSALU;VLOAD@0x1a0\n");
    }

    #[test]
    fn headers_and_regions_round_trip() {
        let text = "!slots S=2 V=1\n!name combo\n!seed 7\n# region 1\nSALU\n# region 2\nVALU\nNOP\n";
        let t = parse_trace(text).unwrap();
        assert_eq!(t.meta.slots, Slots { scalar: 2, vector: 1 });
        assert_eq!(t.meta.name.as_deref(), Some("combo"));
        assert_eq!(t.meta.seed, Some(7));
        assert_eq!(t.meta.region_starts, vec![0, 1]);
        assert_eq!(serialize_trace(&t), text);
        assert_eq!(t.regions().unwrap(), vec![0..1, 1..3]);
        assert_eq!(t.region_last_bundles(), vec![0, 2]);
    }

    #[test]
    fn plain_comments_and_blank_lines_are_ignored() {
        let t = parse_trace("# hello\n\n  SALU # trailing\n#region notanumber\n").unwrap();
        assert_eq!(t.len(), 1);
        assert!(t.meta.region_starts.is_empty());
    }

    #[test]
    fn unknown_class_reports_column() {
        let (line, col, kind) = parse_err("SALU\nSALU; FOO");
        assert_eq!((line, col), (2, 7));
        assert_eq!(kind, ParseErrorKind::UnknownClass("FOO".into()));
    }

    #[test]
    fn slot_overflow() {
        let (_, _, kind) = parse_err("!slots S=1 V=1\nSALU;SALU");
        assert!(matches!(
            kind,
            ParseErrorKind::Op(OpError::SlotOverflow {
                side: Side::Scalar,
                ..
            })
        ));
        let (_, _, kind) = parse_err("VALU;VALU;VALU");
        assert!(matches!(
            kind,
            ParseErrorKind::Op(OpError::SlotOverflow {
                side: Side::Vector,
                ..
            })
        ));
    }

    #[test]
    fn memory_op_without_address() {
        let (_, _, kind) = parse_err("SLOAD");
        assert_eq!(kind, ParseErrorKind::Op(OpError::MissingAddress(OpClass::Sload)));
        let (_, _, kind) = parse_err("VSTORE,32");
        assert_eq!(kind, ParseErrorKind::Op(OpError::MissingAddress(OpClass::Vstore)));
    }

    #[test]
    fn address_on_alu_op() {
        let (_, _, kind) = parse_err("SALU@0x10");
        assert_eq!(kind, ParseErrorKind::Op(OpError::UnexpectedAddress(OpClass::Salu)));
    }

    #[test]
    fn misaligned_and_bad_size() {
        let (_, _, kind) = parse_err("SLOAD@0x1002,4");
        assert_eq!(
            kind,
            ParseErrorKind::Op(OpError::Misaligned { addr: 0x1002, size: 4 })
        );
        let (_, _, kind) = parse_err("SLOAD@0x1000,3");
        assert_eq!(kind, ParseErrorKind::Op(OpError::BadSize(3)));
        let (_, _, kind) = parse_err("VLOAD@0x1000,128");
        assert_eq!(kind, ParseErrorKind::Op(OpError::BadSize(128)));
    }

    #[test]
    fn two_memory_ops_on_one_side() {
        let (_, _, kind) = parse_err("SLOAD@0x0;SSTORE@0x4");
        assert_eq!(kind, ParseErrorKind::Op(OpError::DuplicateMemOp(Side::Scalar)));
        // one per side is fine
        parse_trace("SLOAD@0x0;VSTORE@0x20").unwrap();
    }

    #[test]
    fn malformed_inputs_are_errors() {
        for bad in [
            "SLOAD@0x",
            "SLOAD@1000",
            "SLOAD@0xzz",
            "SLOAD@0x100000000",
            "SALU;",
            "SLOAD@0x0,",
            "!slots S=4",
            "!bogus 1",
            "SALU\n!name late",
            "SALU\n# region 1\n",
        ] {
            assert!(parse_trace(bad).is_err(), "{bad:?} should fail");
        }
    }

    #[test]
    fn profile_all_scalar() {
        let t = parse_trace(&"SALU;SMUL\n".repeat(25)).unwrap();
        let p = profile_regions(&t, 10).unwrap();
        assert_eq!(p.len(), 3);
        assert!(p.iter().all(|w| w.vector_op_count == 0 && w.scalar_vector_ratio.is_none()));
        assert_eq!(p[2].window_size, 5);
        assert_eq!(p.iter().map(|w| w.scalar_op_count).sum::<usize>(), 50);
    }

    #[test]
    fn profile_balanced_ratio() {
        let t = parse_trace(&"SALU;VALU\n".repeat(40)).unwrap();
        for w in profile_regions(&t, 10).unwrap() {
            assert_eq!(w.scalar_vector_ratio, Some(1.0));
        }
    }

    #[test]
    fn profile_zero_window() {
        assert_eq!(
            profile_regions(&Trace::default(), 0),
            Err(TraceError::ZeroWindow)
        );
    }

    #[test]
    fn nop_is_not_counted() {
        let t = parse_trace("NOP;VALU").unwrap();
        assert_eq!(t.scalar_op_count(), 0);
        assert_eq!(t.vector_op_count(), 1);
    }
}
