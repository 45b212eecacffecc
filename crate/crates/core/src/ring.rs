//! Signed ring encoding, RNS base catalog, RNS/MRNS tensor representations,
//! the digit-wise RNS-to-MRNS conversion, and the sign / zero / absolute-value
//! gadgets built on it.
//!
//! Signed integers live in the finite ring Z_M with positive values in the
//! lower half and negative values in the upper half, so `(0, 1, 2, -2, -1)`
//! maps to `(0, 1, 2, 3, 4)` for M = 5.

use crate::error::{Error, Result};
use crate::gadget::{signed_byte, BivariateLookupTable, GadgetValue, LookupTable, OpStats};
use crate::matrix::IntMatrix;

/// Number of bits needed to write `v` in binary (0 needs 0 bits).
pub fn bit_length(v: u64) -> u32 {
    64 - v.leading_zeros()
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

fn mod_inverse(a: u64, m: u64) -> Option<u64> {
    let (mut t, mut new_t) = (0i64, 1i64);
    let (mut r, mut new_r) = (m as i64, (a % m) as i64);
    while new_r != 0 {
        let q = r / new_r;
        (t, new_t) = (new_t, t - q * new_t);
        (r, new_r) = (new_r, r - q * new_r);
    }
    if r != 1 {
        return None;
    }
    Some(t.rem_euclid(m as i64) as u64)
}

/// An ordered tuple of pairwise-coprime moduli with precomputed inverse
/// tables. The last modulus is required to be even so the sign test on the
/// most significant mixed-radix digit is exact.
#[derive(Clone, Debug, PartialEq)]
pub struct RnsBase {
    moduli: Vec<u8>,
    width: u8,
    cardinality: u64,
    max_bitwidth: f64,
    // inverses[i][j] = moduli[i]^{-1} mod moduli[j], valid for j > i
    inverses: Vec<Vec<u8>>,
}

impl RnsBase {
    pub fn new(moduli: &[u8], width: u8) -> Result<Self> {
        if moduli.len() < 2 {
            return Err(Error::ConfigError("an RNS base needs at least 2 moduli".into()));
        }
        for (i, &m) in moduli.iter().enumerate() {
            if m < 2 || (m as u32) >= (1 << width) {
                return Err(Error::ConfigError(format!(
                    "modulus {m} at position {i} outside [2, 2^{width})"
                )));
            }
        }
        for i in 0..moduli.len() {
            for j in i + 1..moduli.len() {
                if gcd(moduli[i] as u64, moduli[j] as u64) != 1 {
                    return Err(Error::ConfigError(format!(
                        "moduli {} and {} are not coprime",
                        moduli[i], moduli[j]
                    )));
                }
            }
        }
        if moduli.last().unwrap() % 2 != 0 {
            return Err(Error::ConfigError(
                "the most significant modulus must be even".into(),
            ));
        }
        let cardinality: u64 = moduli.iter().map(|&m| m as u64).product();
        let k = moduli.len();
        let mut inverses = vec![vec![0u8; k]; k];
        for i in 0..k {
            for j in i + 1..k {
                let inv = mod_inverse(moduli[i] as u64, moduli[j] as u64)
                    .expect("coprime moduli are invertible");
                inverses[i][j] = inv as u8;
            }
        }
        Ok(RnsBase {
            moduli: moduli.to_vec(),
            width,
            cardinality,
            max_bitwidth: (cardinality as f64).log2(),
            inverses,
        })
    }

    pub fn k(&self) -> usize {
        self.moduli.len()
    }

    pub fn moduli(&self) -> &[u8] {
        &self.moduli
    }

    pub fn modulus(&self, i: usize) -> u8 {
        self.moduli[i]
    }

    pub fn width(&self) -> u8 {
        self.width
    }

    pub fn cardinality(&self) -> u64 {
        self.cardinality
    }

    pub fn max_bitwidth(&self) -> f64 {
        self.max_bitwidth
    }

    /// moduli[i]^{-1} mod moduli[j]; requires j > i.
    pub fn inverse(&self, i: usize, j: usize) -> u8 {
        debug_assert!(j > i);
        self.inverses[i][j]
    }
}

/// 4-bit catalog, smallest first.
pub const CATALOG_W4: [&[u8]; 5] = [
    &[15, 14],
    &[13, 15, 14],
    &[11, 13, 15, 14],
    &[7, 11, 13, 15, 8],
    &[5, 7, 9, 11, 13, 8],
];

/// 5-bit catalog for the high-resolution matmul.
pub const CATALOG_W5: [&[u8]; 5] = [
    &[31, 30],
    &[29, 31, 30],
    &[27, 29, 31, 28],
    &[25, 27, 29, 31, 28],
    &[23, 25, 27, 29, 31, 28],
];

fn catalog(width: u8) -> Result<&'static [&'static [u8]]> {
    match width {
        4 => Ok(&CATALOG_W4),
        5 => Ok(&CATALOG_W5),
        _ => Err(Error::ConfigError(format!(
            "no RNS base catalog for width {width}"
        ))),
    }
}

/// Smallest catalog base of the given width whose range covers
/// `required_bits` bits.
pub fn select_rns_base(required_bits: f64, width: u8) -> Result<RnsBase> {
    let cat = catalog(width)?;
    let mut max_bits = 0.0f64;
    for moduli in cat {
        let base = RnsBase::new(moduli, width).expect("catalog bases are valid");
        if base.max_bitwidth() >= required_bits {
            return Ok(base);
        }
        max_bits = base.max_bitwidth();
    }
    Err(Error::CapacityError {
        required_bits,
        width,
        max_bits,
    })
}

/// Map a signed integer into Z_M (positives low, negatives high).
pub fn encode_signed_ring(v: i64, cardinality: u64) -> Result<u64> {
    let pos_limit = cardinality.div_ceil(2) as i64;
    let neg_limit = (cardinality / 2) as i64;
    if v < -neg_limit || v >= pos_limit {
        return Err(Error::RangeError {
            value: v,
            reason: format!("outside the signed ring range of M = {cardinality}"),
        });
    }
    Ok(if v >= 0 { v as u64 } else { (cardinality as i64 + v) as u64 })
}

/// Inverse of [`encode_signed_ring`].
pub fn decode_signed_ring(r: u64, cardinality: u64) -> i64 {
    debug_assert!(r < cardinality);
    if r < cardinality.div_ceil(2) {
        r as i64
    } else {
        r as i64 - cardinality as i64
    }
}

/// Shape-tagged stack of residue planes; the leading axis is the residue
/// axis, `planes[i]` holds digits reduced modulo `moduli[i]`.
#[derive(Clone, Debug)]
pub struct RnsTensor {
    base: RnsBase,
    rows: usize,
    cols: usize,
    planes: Vec<Vec<u8>>,
}

impl RnsTensor {
    pub fn base(&self) -> &RnsBase {
        &self.base
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn digit(&self, plane: usize, idx: usize) -> u8 {
        self.planes[plane][idx]
    }

    pub fn from_planes(base: RnsBase, rows: usize, cols: usize, planes: Vec<Vec<u8>>) -> Result<Self> {
        if planes.len() != base.k() || planes.iter().any(|p| p.len() != rows * cols) {
            return Err(Error::ShapeError("residue plane shape mismatch".into()));
        }
        for (i, plane) in planes.iter().enumerate() {
            let m = base.modulus(i);
            if plane.iter().any(|&d| d >= m) {
                return Err(Error::ShapeError(format!(
                    "digit not reduced modulo {m} in plane {i}"
                )));
            }
        }
        Ok(RnsTensor {
            base,
            rows,
            cols,
            planes,
        })
    }
}

/// Mixed-radix digits; digit `i` has positional weight `r_0 * ... * r_{i-1}`.
#[derive(Clone, Debug)]
pub struct MrnsTensor {
    radices: Vec<u8>,
    rows: usize,
    cols: usize,
    planes: Vec<Vec<u8>>,
}

impl MrnsTensor {
    pub fn radices(&self) -> &[u8] {
        &self.radices
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    #[inline]
    pub fn digit(&self, plane: usize, idx: usize) -> u8 {
        self.planes[plane][idx]
    }

    /// Positional reconstruction x = x_0 + sum_i x_i * prod_{j<i} r_j.
    pub fn reconstruct(&self, idx: usize) -> u64 {
        let mut weight = 1u64;
        let mut acc = 0u64;
        for (i, &r) in self.radices.iter().enumerate() {
            acc += self.planes[i][idx] as u64 * weight;
            weight *= r as u64;
        }
        acc
    }
}

/// Convert a signed integer matrix to residues, one lookup per element per
/// modulus. Values must be byte-encodable and representable in the ring.
pub fn to_rns(x: &IntMatrix, base: &RnsBase, stats: &mut OpStats) -> Result<RnsTensor> {
    let half = (base.cardinality() / 2) as i64;
    let mut g = stats.scope("to_rns");
    let tables: Vec<LookupTable> = base
        .moduli()
        .iter()
        .map(|&m| LookupTable::from_fn(8, move |b| (b as i8 as i64).rem_euclid(m as i64) as u8))
        .collect();
    let mut planes = vec![Vec::with_capacity(x.rows() * x.cols()); base.k()];
    for r in 0..x.rows() {
        for c in 0..x.cols() {
            let v = x.get(r, c);
            if v < -half || v >= half {
                return Err(Error::RangeError {
                    value: v,
                    reason: format!(
                        "outside the signed range of the ring (M = {})",
                        base.cardinality()
                    ),
                });
            }
            let byte = GadgetValue::encode_signed(v)?;
            for (i, table) in tables.iter().enumerate() {
                planes[i].push(g.lookup(table, byte)?.raw());
            }
        }
    }
    drop(g);
    Ok(RnsTensor {
        base: base.clone(),
        rows: x.rows(),
        cols: x.cols(),
        planes,
    })
}

/// Direct residue encoding of arbitrary ring-representable values.
///
/// Plaintext plumbing (inverse of [`rns_reconstruct`]): used to build test
/// tensors and oracles for values wider than the 8-bit circuit inputs that
/// [`to_rns`] handles. Not counted and never part of the guarded circuit.
pub fn rns_encode(x: &IntMatrix, base: &RnsBase) -> Result<RnsTensor> {
    let mut planes = vec![Vec::with_capacity(x.rows() * x.cols()); base.k()];
    for r in 0..x.rows() {
        for c in 0..x.cols() {
            let ring = encode_signed_ring(x.get(r, c), base.cardinality())?;
            for (i, plane) in planes.iter_mut().enumerate() {
                plane.push((ring % base.modulus(i) as u64) as u8);
            }
        }
    }
    Ok(RnsTensor {
        base: base.clone(),
        rows: x.rows(),
        cols: x.cols(),
        planes,
    })
}

/// Exact Chinese-remainder reconstruction followed by signed decoding.
///
/// This is the plaintext oracle for tests and the exact-scaling reference;
/// it is never part of the guarded circuit.
pub fn rns_reconstruct(x: &RnsTensor) -> IntMatrix {
    let base = &x.base;
    let m_total = base.cardinality();
    // CRT basis: e_i = (M/m_i) * ((M/m_i)^{-1} mod m_i)
    let basis: Vec<u64> = (0..base.k())
        .map(|i| {
            let m_i = base.modulus(i) as u64;
            let n_i = m_total / m_i;
            let inv = mod_inverse(n_i % m_i, m_i).expect("CRT basis invertible");
            n_i * inv
        })
        .collect();
    IntMatrix::from_fn(x.rows, x.cols, |r, c| {
        let idx = r * x.cols + c;
        let mut acc = 0u128;
        for (i, &e) in basis.iter().enumerate() {
            acc += x.planes[i][idx] as u128 * e as u128;
        }
        decode_signed_ring((acc % m_total as u128) as u64, m_total)
    })
}

/// Digit-by-digit conversion to the associated mixed-radix system.
///
/// For each step i, the previous digit is subtracted from all higher planes
/// (one linear combination each, offset by a public multiple of the plane
/// modulus to stay non-negative) and the planes are multiplied by the
/// precomputed modular inverse via a single lookup.
pub fn rns2mrns(x: &RnsTensor, stats: &mut OpStats) -> Result<MrnsTensor> {
    let base = &x.base;
    let k = base.k();
    let n = x.len();
    let mut g = stats.scope("rns2mrns");
    let mut planes = x.planes.clone();
    for i in 1..k {
        let prev_max = base.modulus(i - 1) as u32 - 1;
        for j in i..k {
            let m_j = base.modulus(j) as u32;
            let inv = base.inverse(i - 1, j) as u32;
            // Smallest multiple of m_j that keeps the subtraction result
            // non-negative for any previous digit.
            let offset = prev_max.div_ceil(m_j) * m_j;
            let domain_bits = bit_length((m_j - 1 + offset) as u64).max(1) as u8;
            let table = LookupTable::from_fn(domain_bits, move |v| {
                ((v as u32 % m_j) * inv % m_j) as u8
            });
            for idx in 0..n {
                let cur = GadgetValue::new(planes[j][idx]);
                let prev = GadgetValue::new(planes[i - 1][idx]);
                let t = g.sub_offset(cur, prev, offset)?;
                planes[j][idx] = g.lookup(&table, t)?.raw();
            }
        }
    }
    drop(g);
    Ok(MrnsTensor {
        radices: base.moduli().to_vec(),
        rows: x.rows,
        cols: x.cols,
        planes,
    })
}

fn check_sign_output(v: i64) -> Result<()> {
    if !(-128..=127).contains(&v) {
        return Err(Error::RangeError {
            value: v,
            reason: "sign gadget output outside the signed byte range".into(),
        });
    }
    Ok(())
}

/// Element-wise `n` / `z` / `p` for negative / zero / positive values.
///
/// Negativity is one lookup on the most significant mixed-radix digit
/// (`x_k >= r_k / 2`); zero equality adds the digits (their sum stays well
/// below 8 bits) and resolves both through one bivariate lookup. When
/// `z == p` the zero test is skipped and the sign is a single lookup.
pub fn sign_rns(x: &RnsTensor, outputs: (i64, i64, i64), stats: &mut OpStats) -> Result<IntMatrix> {
    let (n_out, z_out, p_out) = outputs;
    check_sign_output(n_out)?;
    check_sign_output(z_out)?;
    check_sign_output(p_out)?;
    let mrns = rns2mrns(x, stats)?;
    let k = x.base.k();
    let top = x.base.modulus(k - 1) as u32;
    let top_bits = bit_length(top as u64 - 1).max(1) as u8;
    let half = top / 2;

    let mut g = stats.scope("sign_rns");
    let mut out_bytes = Vec::with_capacity(x.len());
    if z_out == p_out {
        // Zero test not needed; single lookup on the top digit.
        let table = LookupTable::from_fn(top_bits, move |d| {
            signed_byte(if (d as u32) >= half { n_out } else { p_out })
        });
        for idx in 0..x.len() {
            let top_digit = GadgetValue::new(mrns.digit(k - 1, idx));
            out_bytes.push(g.lookup(&table, top_digit)?);
        }
    } else {
        let neg_table =
            LookupTable::from_fn(top_bits, move |d| ((d as u32) >= half) as u8);
        let combine = BivariateLookupTable::from_fn(1, 8, move |neg, dsum| {
            signed_byte(if neg == 1 {
                n_out
            } else if dsum == 0 {
                z_out
            } else {
                p_out
            })
        });
        for idx in 0..x.len() {
            let top_digit = GadgetValue::new(mrns.digit(k - 1, idx));
            let neg = g.lookup(&neg_table, top_digit)?;
            let mut dsum = GadgetValue::new(mrns.digit(0, idx));
            for plane in 1..k {
                dsum = g.add(dsum, GadgetValue::new(mrns.digit(plane, idx)))?;
            }
            out_bytes.push(g.bivariate_lookup(&combine, neg, dsum)?);
        }
    }
    drop(g);
    Ok(IntMatrix::from_fn(x.rows, x.cols, |r, c| {
        out_bytes[r * x.cols + c].decode_signed()
    }))
}

/// Negativity flags plus magnitude residues: each plane digit becomes
/// `s * digit mod m_i` with s the (-1, 1, 1) sign, realized as one bivariate
/// lookup per element and plane.
pub(crate) fn neg_flags_and_abs(
    x: &RnsTensor,
    stats: &mut OpStats,
) -> Result<(Vec<GadgetValue>, RnsTensor)> {
    let mrns = rns2mrns(x, stats)?;
    let k = x.base.k();
    let top = x.base.modulus(k - 1) as u32;
    let top_bits = bit_length(top as u64 - 1).max(1) as u8;
    let half = top / 2;

    let mut g = stats.scope("abs_rns");
    let neg_table = LookupTable::from_fn(top_bits, move |d| ((d as u32) >= half) as u8);
    let mut negs = Vec::with_capacity(x.len());
    for idx in 0..x.len() {
        let top_digit = GadgetValue::new(mrns.digit(k - 1, idx));
        negs.push(g.lookup(&neg_table, top_digit)?);
    }
    let mut planes = Vec::with_capacity(k);
    for i in 0..k {
        let m_i = x.base.modulus(i) as u32;
        let digit_bits = bit_length(m_i as u64 - 1).max(1) as u8;
        let negate = BivariateLookupTable::from_fn(1, digit_bits, move |neg, d| {
            let d = d as u32 % m_i;
            if neg == 1 {
                ((m_i - d) % m_i) as u8
            } else {
                d as u8
            }
        });
        let mut plane = Vec::with_capacity(x.len());
        for idx in 0..x.len() {
            let d = GadgetValue::new(x.planes[i][idx]);
            plane.push(g.bivariate_lookup(&negate, negs[idx], d)?.raw());
        }
        planes.push(plane);
    }
    drop(g);
    let mags = RnsTensor {
        base: x.base.clone(),
        rows: x.rows,
        cols: x.cols,
        planes,
    };
    Ok((negs, mags))
}

/// Magnitude residues and the (-1, 1, 1) sign tensor.
pub fn abs_rns(x: &RnsTensor, stats: &mut OpStats) -> Result<(RnsTensor, IntMatrix)> {
    let (negs, mags) = neg_flags_and_abs(x, stats)?;
    let mut g = stats.scope("abs_rns");
    let s_table = LookupTable::from_fn(1, |neg| signed_byte(if neg == 1 { -1 } else { 1 }));
    let mut signs = Vec::with_capacity(negs.len());
    for &neg in &negs {
        signs.push(g.lookup(&s_table, neg)?.decode_signed());
    }
    drop(g);
    let cols = x.cols;
    Ok((
        mags,
        IntMatrix::from_fn(x.rows, x.cols, |r, c| signs[r * cols + c]),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn test_base_578() -> RnsBase {
        RnsBase::new(&[5, 7, 8], 4).unwrap()
    }

    fn matrix_of(vals: &[i64]) -> IntMatrix {
        IntMatrix::from_rows(&[vals.to_vec()]).unwrap()
    }

    #[test]
    fn catalog_bitwidths_match_published_values() {
        let printed_w4 = [7.72, 11.41, 14.87, 16.87, 18.45];
        for (moduli, printed) in CATALOG_W4.iter().zip(printed_w4) {
            let base = RnsBase::new(moduli, 4).unwrap();
            assert!(
                (base.max_bitwidth() - printed).abs() < 0.01,
                "{moduli:?}: {} vs {printed}",
                base.max_bitwidth()
            );
        }
        let printed_w5 = [9.86, 14.72, 19.37, 24.02, 28.54];
        for (moduli, printed) in CATALOG_W5.iter().zip(printed_w5) {
            let base = RnsBase::new(moduli, 5).unwrap();
            assert!((base.max_bitwidth() - printed).abs() < 0.01);
        }
    }

    #[test]
    fn base_selection_examples() {
        assert_eq!(select_rns_base(7.0, 4).unwrap().moduli(), &[15, 14]);
        assert_eq!(
            select_rns_base(15.0, 4).unwrap().moduli(),
            &[7, 11, 13, 15, 8]
        );
        assert!(matches!(
            select_rns_base(20.0, 4),
            Err(Error::CapacityError { .. })
        ));
        assert_eq!(
            select_rns_base(20.0, 5).unwrap().moduli(),
            &[25, 27, 29, 31, 28]
        );
    }

    #[test]
    fn base_validation() {
        assert!(RnsBase::new(&[6, 9, 4], 4).is_err()); // 6 and 9 share 3
        assert!(RnsBase::new(&[14, 15], 4).is_err()); // last modulus odd
        assert!(RnsBase::new(&[16, 15], 4).is_err()); // modulus too wide
        assert!(RnsBase::new(&[15], 4).is_err());
    }

    #[test]
    fn signed_ring_mapping() {
        // (0, 1, 2, -2, -1) -> (0, 1, 2, 3, 4) for M = 5 (illustrative only;
        // run-time rings are even).
        for (v, r) in [(0i64, 0u64), (1, 1), (2, 2), (-2, 3), (-1, 4)] {
            assert_eq!(encode_signed_ring(v, 5).unwrap(), r);
        }
        assert_eq!(decode_signed_ring(105, 210), -105);
        assert!(encode_signed_ring(105, 210).is_err());
        assert!(encode_signed_ring(-106, 210).is_err());
    }

    #[test]
    fn to_rns_appendix_example() {
        let mut stats = OpStats::new();
        let t = to_rns(&matrix_of(&[99]), &test_base_578(), &mut stats).unwrap();
        assert_eq!([t.digit(0, 0), t.digit(1, 0), t.digit(2, 0)], [4, 1, 3]);
        assert_eq!(stats.lookups, 3);
    }

    #[test]
    fn to_rns_zero_and_negative() {
        let mut stats = OpStats::new();
        let t = to_rns(&matrix_of(&[0]), &test_base_578(), &mut stats).unwrap();
        assert_eq!([t.digit(0, 0), t.digit(1, 0), t.digit(2, 0)], [0, 0, 0]);

        let base = RnsBase::new(&[15, 14], 4).unwrap();
        let t = to_rns(&matrix_of(&[-1]), &base, &mut stats).unwrap();
        // -1 encodes as ring element 209
        assert_eq!([t.digit(0, 0), t.digit(1, 0)], [14, 13]);
    }

    #[test]
    fn to_rns_rejects_unrepresentable() {
        let mut stats = OpStats::new();
        let base = RnsBase::new(&[15, 14], 4).unwrap();
        assert!(matches!(
            to_rns(&matrix_of(&[105]), &base, &mut stats),
            Err(Error::RangeError { .. })
        ));
    }

    #[test]
    fn reconstruct_appendix_round_trip() {
        let base = test_base_578();
        let t = RnsTensor::from_planes(base, 1, 1, vec![vec![4], vec![1], vec![3]]).unwrap();
        assert_eq!(rns_reconstruct(&t).get(0, 0), 99);
    }

    #[test]
    fn rns2mrns_appendix_example() {
        let mut stats = OpStats::new();
        let t = to_rns(&matrix_of(&[99]), &test_base_578(), &mut stats).unwrap();
        let m = rns2mrns(&t, &mut stats).unwrap();
        assert_eq!([m.digit(0, 0), m.digit(1, 0), m.digit(2, 0)], [4, 5, 2]);
        assert_eq!(m.reconstruct(0), 99); // 4 + 5*5 + 2*7*5
    }

    #[test]
    fn rns2mrns_zero() {
        let mut stats = OpStats::new();
        let t = to_rns(&matrix_of(&[0]), &test_base_578(), &mut stats).unwrap();
        let m = rns2mrns(&t, &mut stats).unwrap();
        assert_eq!([m.digit(0, 0), m.digit(1, 0), m.digit(2, 0)], [0, 0, 0]);
    }

    #[test]
    fn rns2mrns_exhaustive_small_base() {
        // Every ring element of {5, 7, 8}: mixed-radix reconstruction equals
        // the ring element.
        let base = test_base_578();
        let m_total = base.cardinality();
        let mut stats = OpStats::new();
        for r in 0..m_total {
            let planes = vec![
                vec![(r % 5) as u8],
                vec![(r % 7) as u8],
                vec![(r % 8) as u8],
            ];
            let t = RnsTensor::from_planes(base.clone(), 1, 1, planes).unwrap();
            let m = rns2mrns(&t, &mut stats).unwrap();
            assert_eq!(m.reconstruct(0), r, "ring element {r}");
        }
    }

    #[test]
    fn sign_examples() {
        let base = RnsBase::new(&[15, 14], 4).unwrap();
        let mut stats = OpStats::new();
        let x = to_rns(&matrix_of(&[-2, 0, 7]), &base, &mut stats).unwrap();
        let s = sign_rns(&x, (-1, 0, 1), &mut stats).unwrap();
        assert_eq!(s.row(0), &[-1, 0, 1]);

        // Ring element exactly M/2 is the most negative value.
        let m_half = base.cardinality() / 2;
        let planes = vec![
            vec![(m_half % 15) as u8],
            vec![(m_half % 14) as u8],
        ];
        let t = RnsTensor::from_planes(base, 1, 1, planes).unwrap();
        let s = sign_rns(&t, (-1, 0, 1), &mut stats).unwrap();
        assert_eq!(s.get(0, 0), -1);
    }

    #[test]
    fn sign_exhaustive_on_smallest_catalog_base() {
        let base = RnsBase::new(&[15, 14], 4).unwrap();
        let m_total = base.cardinality();
        let mut stats = OpStats::new();
        for r in 0..m_total {
            let planes = vec![vec![(r % 15) as u8], vec![(r % 14) as u8]];
            let t = RnsTensor::from_planes(base.clone(), 1, 1, planes).unwrap();
            let s = sign_rns(&t, (-1, 0, 1), &mut stats).unwrap();
            let expect = decode_signed_ring(r, m_total).signum();
            assert_eq!(s.get(0, 0), expect, "ring element {r}");
        }
    }

    #[test]
    fn abs_examples() {
        let base = RnsBase::new(&[13, 15, 14], 4).unwrap();
        let mut stats = OpStats::new();
        let x = to_rns(&matrix_of(&[-5, 0, 5]), &base, &mut stats).unwrap();
        let (mags, signs) = abs_rns(&x, &mut stats).unwrap();
        assert_eq!(rns_reconstruct(&mags).row(0), &[5, 0, 5]);
        assert_eq!(signs.row(0), &[-1, 1, 1]);
    }

    proptest! {
        #[test]
        fn ring_encode_decode_round_trip(v in -105i64..105) {
            let r = encode_signed_ring(v, 210).unwrap();
            prop_assert_eq!(decode_signed_ring(r, 210), v);
        }

        #[test]
        fn rns_round_trip_on_catalog_bases(vals in proptest::collection::vec(-100i64..100, 1..20), wi in 0usize..5) {
            let base = RnsBase::new(CATALOG_W4[wi], 4).unwrap();
            let m = IntMatrix::from_rows(&[vals.clone()]).unwrap();
            let mut stats = OpStats::new();
            let t = to_rns(&m, &base, &mut stats).unwrap();
            prop_assert_eq!(rns_reconstruct(&t), m);
        }

        #[test]
        fn mixed_radix_matches_crt(v in -1364i64..1364) {
            // {13, 15, 14}: M = 2730
            let base = RnsBase::new(&[13, 15, 14], 4).unwrap();
            let m = IntMatrix::from_rows(&[vec![v]]).unwrap();
            let mut stats = OpStats::new();
            let t = rns_encode(&m, &base).unwrap();
            let mr = rns2mrns(&t, &mut stats).unwrap();
            let ring = encode_signed_ring(v, base.cardinality()).unwrap();
            prop_assert_eq!(mr.reconstruct(0), ring);
        }
    }
}
