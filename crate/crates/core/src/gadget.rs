//! The constrained evaluation layer.
//!
//! Everything the trainer does on the ciphertext side is expressed through
//! this module: guarded linear arithmetic, table lookups standing in for
//! programmable bootstrapping, bit extraction, and per-gadget operation
//! counters feeding the cost model. Any operation whose raw result leaves
//! the unsigned 8-bit range raises [`Error::GuardViolation`] instead of
//! wrapping.
//!
//! Signed quantities travel between gadgets as two's-complement bytes;
//! the tables and the encode/decode helpers do the interpretation.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Largest value any intermediate may take.
pub const GUARD_MAX: u32 = 255;

/// A value with ciphertext semantics: an unsigned integer in [0, 255].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GadgetValue(u8);

impl GadgetValue {
    pub const ZERO: GadgetValue = GadgetValue(0);

    pub fn new(v: u8) -> Self {
        GadgetValue(v)
    }

    pub fn raw(self) -> u8 {
        self.0
    }

    /// Encode a signed integer as a two's-complement byte.
    pub fn encode_signed(v: i64) -> Result<Self> {
        if !(-128..=127).contains(&v) {
            return Err(Error::RangeError {
                value: v,
                reason: "outside the signed 8-bit range".into(),
            });
        }
        Ok(GadgetValue(v as i8 as u8))
    }

    /// Encode a non-negative integer as a plain byte.
    pub fn encode_unsigned(v: i64) -> Result<Self> {
        if !(0..=255).contains(&v) {
            return Err(Error::RangeError {
                value: v,
                reason: "outside the unsigned 8-bit range".into(),
            });
        }
        Ok(GadgetValue(v as u8))
    }

    pub fn decode_signed(self) -> i64 {
        self.0 as i8 as i64
    }

    pub fn decode_unsigned(self) -> i64 {
        self.0 as i64
    }
}

/// Two's-complement byte for a signed table output. Panics if out of range;
/// table generators are written against finite domains checked in tests.
pub fn signed_byte(v: i64) -> u8 {
    assert!(
        (-128..=127).contains(&v),
        "table output {v} outside signed byte range"
    );
    v as i8 as u8
}

/// Fully populated univariate lookup table over [0, 2^input_bits).
///
/// Models one programmable bootstrapping: the function is arbitrary, but
/// its input must already fit the declared (at most 8-bit) domain.
pub struct LookupTable {
    entries: Vec<u8>,
    input_bits: u8,
}

impl LookupTable {
    pub fn from_fn(input_bits: u8, f: impl Fn(u8) -> u8) -> Self {
        assert!(
            (1..=8).contains(&input_bits),
            "table input width {input_bits} outside [1, 8]"
        );
        let entries = (0..(1u16 << input_bits)).map(|v| f(v as u8)).collect();
        LookupTable {
            entries,
            input_bits,
        }
    }

    /// Identity table over the full byte domain.
    pub fn identity() -> Self {
        LookupTable::from_fn(8, |v| v)
    }

    pub fn input_bits(&self) -> u8 {
        self.input_bits
    }

    fn domain_max(&self) -> u32 {
        (1u32 << self.input_bits) - 1
    }
}

/// Fully populated table over two (at most 8-bit) input domains.
pub struct BivariateLookupTable {
    entries: Vec<u8>,
    a_bits: u8,
    b_bits: u8,
}

impl BivariateLookupTable {
    pub fn from_fn(a_bits: u8, b_bits: u8, f: impl Fn(u8, u8) -> u8) -> Self {
        assert!((1..=8).contains(&a_bits) && (1..=8).contains(&b_bits));
        let a_n = 1usize << a_bits;
        let b_n = 1usize << b_bits;
        let mut entries = Vec::with_capacity(a_n * b_n);
        for a in 0..a_n {
            for b in 0..b_n {
                entries.push(f(a as u8, b as u8));
            }
        }
        BivariateLookupTable {
            entries,
            a_bits,
            b_bits,
        }
    }
}

/// Lookup (PBS proxy) and linear-operation counters, plus a per-gadget
/// breakdown. Merging is commutative and associative.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct OpStats {
    pub lookups: u64,
    pub linear_ops: u64,
    per_gadget: BTreeMap<&'static str, (u64, u64)>,
}

impl OpStats {
    pub fn new() -> Self {
        OpStats::default()
    }

    /// Component-wise sum of `other` into `self`.
    pub fn merge(&mut self, other: &OpStats) {
        self.lookups += other.lookups;
        self.linear_ops += other.linear_ops;
        for (name, (l, a)) in &other.per_gadget {
            let entry = self.per_gadget.entry(name).or_insert((0, 0));
            entry.0 += l;
            entry.1 += a;
        }
    }

    pub fn merged(mut a: OpStats, b: &OpStats) -> OpStats {
        a.merge(b);
        a
    }

    /// (lookups, linear ops) attributed to one gadget name.
    pub fn gadget_counts(&self, name: &str) -> (u64, u64) {
        self.per_gadget.get(name).copied().unwrap_or((0, 0))
    }

    pub fn per_gadget(&self) -> impl Iterator<Item = (&'static str, (u64, u64))> + '_ {
        self.per_gadget.iter().map(|(n, c)| (*n, *c))
    }

    /// Open an operation scope attributed to `gadget`; counts flush when the
    /// scope drops.
    pub fn scope(&mut self, gadget: &'static str) -> Gadget<'_> {
        Gadget {
            stats: self,
            name: gadget,
            lookups: 0,
            linear: 0,
        }
    }
}

/// Operation handle scoped to one named gadget.
pub struct Gadget<'a> {
    stats: &'a mut OpStats,
    name: &'static str,
    lookups: u64,
    linear: u64,
}

impl Drop for Gadget<'_> {
    fn drop(&mut self) {
        self.stats.lookups += self.lookups;
        self.stats.linear_ops += self.linear;
        let entry = self.stats.per_gadget.entry(self.name).or_insert((0, 0));
        entry.0 += self.lookups;
        entry.1 += self.linear;
    }
}

impl Gadget<'_> {
    pub fn name(&self) -> &'static str {
        self.name
    }

    fn guard(&self, raw: i64) -> Result<GadgetValue> {
        if !(0..=GUARD_MAX as i64).contains(&raw) {
            Err(Error::GuardViolation {
                gadget: self.name,
                value: raw,
            })
        } else {
            Ok(GadgetValue(raw as u8))
        }
    }

    pub fn add(&mut self, a: GadgetValue, b: GadgetValue) -> Result<GadgetValue> {
        self.linear += 1;
        self.guard(a.0 as i64 + b.0 as i64)
    }

    pub fn sub(&mut self, a: GadgetValue, b: GadgetValue) -> Result<GadgetValue> {
        self.linear += 1;
        self.guard(a.0 as i64 - b.0 as i64)
    }

    pub fn mul(&mut self, a: GadgetValue, b: GadgetValue) -> Result<GadgetValue> {
        self.linear += 1;
        self.guard(a.0 as i64 * b.0 as i64)
    }

    pub fn add_const(&mut self, a: GadgetValue, c: u32) -> Result<GadgetValue> {
        self.linear += 1;
        self.guard(a.0 as i64 + c as i64)
    }

    /// Public constant minus ciphertext.
    pub fn const_sub(&mut self, c: u32, a: GadgetValue) -> Result<GadgetValue> {
        self.linear += 1;
        self.guard(c as i64 - a.0 as i64)
    }

    pub fn mul_const(&mut self, a: GadgetValue, c: u32) -> Result<GadgetValue> {
        self.linear += 1;
        self.guard(a.0 as i64 * c as i64)
    }

    /// Single linear combination `a - b + offset` with a public offset.
    pub fn sub_offset(&mut self, a: GadgetValue, b: GadgetValue, offset: u32) -> Result<GadgetValue> {
        self.linear += 1;
        self.guard(a.0 as i64 - b.0 as i64 + offset as i64)
    }

    pub fn lookup(&mut self, table: &LookupTable, a: GadgetValue) -> Result<GadgetValue> {
        self.lookups += 1;
        if a.0 as u32 > table.domain_max() {
            return Err(Error::DomainError {
                gadget: self.name,
                value: a.0 as i64,
                domain_max: table.domain_max(),
            });
        }
        Ok(GadgetValue(table.entries[a.0 as usize]))
    }

    /// Two-ciphertext lookup; counted as one lookup like the univariate case.
    pub fn bivariate_lookup(
        &mut self,
        table: &BivariateLookupTable,
        a: GadgetValue,
        b: GadgetValue,
    ) -> Result<GadgetValue> {
        self.lookups += 1;
        let a_max = (1u32 << table.a_bits) - 1;
        let b_max = (1u32 << table.b_bits) - 1;
        if a.0 as u32 > a_max {
            return Err(Error::DomainError {
                gadget: self.name,
                value: a.0 as i64,
                domain_max: a_max,
            });
        }
        if b.0 as u32 > b_max {
            return Err(Error::DomainError {
                gadget: self.name,
                value: b.0 as i64,
                domain_max: b_max,
            });
        }
        let idx = (a.0 as usize) * (1usize << table.b_bits) + b.0 as usize;
        Ok(GadgetValue(table.entries[idx]))
    }

    /// Bits `lo..=hi` of `a`, right-aligned. Counted as one lookup.
    pub fn extract_bits(&mut self, a: GadgetValue, lo: u8, hi: u8) -> Result<GadgetValue> {
        assert!(lo <= hi && hi <= 7, "bit range [{lo}, {hi}] invalid");
        self.lookups += 1;
        let width = hi - lo + 1;
        let mask = ((1u16 << width) - 1) as u8;
        Ok(GadgetValue((a.0 >> lo) & mask))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn val(v: u8) -> GadgetValue {
        GadgetValue::new(v)
    }

    #[test]
    fn add_at_boundary() {
        let mut stats = OpStats::new();
        let mut g = stats.scope("test");
        assert_eq!(g.add(val(100), val(155)).unwrap().raw(), 255);
    }

    #[test]
    fn mul_overflow_is_guard_violation() {
        let mut stats = OpStats::new();
        let mut g = stats.scope("test");
        match g.mul(val(30), val(30)) {
            Err(Error::GuardViolation { value, .. }) => assert_eq!(value, 900),
            other => panic!("expected guard violation, got {other:?}"),
        }
    }

    #[test]
    fn mul_in_range() {
        let mut stats = OpStats::new();
        let mut g = stats.scope("test");
        assert_eq!(g.mul(val(14), val(14)).unwrap().raw(), 196);
    }

    #[test]
    fn sub_below_zero_is_guard_violation() {
        let mut stats = OpStats::new();
        let mut g = stats.scope("test");
        assert!(matches!(
            g.sub(val(3), val(4)),
            Err(Error::GuardViolation { value: -1, .. })
        ));
    }

    #[test]
    fn identity_lookup() {
        let mut stats = OpStats::new();
        let t = LookupTable::identity();
        let mut g = stats.scope("test");
        assert_eq!(g.lookup(&t, val(42)).unwrap().raw(), 42);
    }

    #[test]
    fn mod_lookup() {
        let mut stats = OpStats::new();
        let t = LookupTable::from_fn(8, |v| v % 13);
        let mut g = stats.scope("test");
        assert_eq!(g.lookup(&t, val(27)).unwrap().raw(), 1);
    }

    #[test]
    fn relu_cap_table_matches_scalar_definition() {
        // ReLU_14 over the signed byte encoding, checked on all 256 inputs.
        let t = LookupTable::from_fn(8, |b| {
            let v = b as i8 as i64;
            v.clamp(0, 14) as u8
        });
        let mut stats = OpStats::new();
        let mut g = stats.scope("test");
        for b in 0..=255u8 {
            let expect = (b as i8 as i64).max(0).min(14);
            let got = g.lookup(&t, val(b)).unwrap().raw() as i64;
            assert_eq!(got, expect, "input byte {b}");
        }
    }

    #[test]
    fn lookup_outside_domain_errors() {
        let t = LookupTable::from_fn(4, |v| v);
        let mut stats = OpStats::new();
        let mut g = stats.scope("test");
        assert!(matches!(
            g.lookup(&t, val(16)),
            Err(Error::DomainError { value: 16, .. })
        ));
    }

    #[test]
    fn extract_bits_examples() {
        let mut stats = OpStats::new();
        let mut g = stats.scope("test");
        // 27 = 11011b
        assert_eq!(g.extract_bits(val(27), 3, 4).unwrap().raw(), 3);
        assert_eq!(g.extract_bits(val(27), 0, 2).unwrap().raw(), 3);
        assert_eq!(g.extract_bits(val(0), 0, 7).unwrap().raw(), 0);
        assert_eq!(g.extract_bits(val(0), 2, 5).unwrap().raw(), 0);
    }

    #[test]
    fn stats_counting_and_scopes() {
        let mut stats = OpStats::new();
        {
            let t = LookupTable::identity();
            let mut g = stats.scope("a");
            g.add(val(1), val(2)).unwrap();
            g.lookup(&t, val(1)).unwrap();
            g.lookup(&t, val(2)).unwrap();
        }
        {
            let mut g = stats.scope("b");
            g.mul(val(2), val(3)).unwrap();
        }
        assert_eq!(stats.lookups, 2);
        assert_eq!(stats.linear_ops, 2);
        assert_eq!(stats.gadget_counts("a"), (2, 1));
        assert_eq!(stats.gadget_counts("b"), (0, 1));
    }

    #[test]
    fn merge_empty_and_counts() {
        let mut a = OpStats::new();
        let b = OpStats::new();
        a.merge(&b);
        assert_eq!(a, OpStats::new());

        let mut x = OpStats::new();
        x.scope("g").add(val(1), val(1)).unwrap();
        let mut y = OpStats::new();
        {
            let t = LookupTable::identity();
            let mut g = y.scope("g");
            for _ in 0..3 {
                g.lookup(&t, val(0)).unwrap();
            }
        }
        let mut m = x.clone();
        m.merge(&y);
        assert_eq!(m.lookups, 3);
        assert_eq!(m.linear_ops, 1);
        assert_eq!(m.gadget_counts("g"), (3, 1));
    }

    #[test]
    fn signed_byte_round_trip() {
        for v in -128..=127i64 {
            let g = GadgetValue::encode_signed(v).unwrap();
            assert_eq!(g.decode_signed(), v);
        }
        assert!(GadgetValue::encode_signed(128).is_err());
        assert!(GadgetValue::encode_signed(-129).is_err());
    }

    fn arb_stats() -> impl Strategy<Value = OpStats> {
        (0u64..1000, 0u64..1000, 0u64..50, 0u64..50).prop_map(|(l, a, gl, ga)| {
            let mut s = OpStats::new();
            s.lookups = l;
            s.linear_ops = a;
            s.per_gadget.insert("x", (gl, ga));
            s.per_gadget.insert("y", (l % 7, a % 5));
            s
        })
    }

    proptest! {
        #[test]
        fn merge_is_commutative(a in arb_stats(), b in arb_stats()) {
            let ab = OpStats::merged(a.clone(), &b);
            let ba = OpStats::merged(b, &a);
            prop_assert_eq!(ab, ba);
        }

        #[test]
        fn merge_is_associative(a in arb_stats(), b in arb_stats(), c in arb_stats()) {
            let left = OpStats::merged(OpStats::merged(a.clone(), &b), &c);
            let right = OpStats::merged(a, &OpStats::merged(b, &c));
            prop_assert_eq!(left, right);
        }
    }
}
