//! Approximate block scaling: shift an RNS tensor to its most significant
//! bits without leaving the 8-bit operating range.
//!
//! The gadget views the mixed-radix digits as if they were w-bit chunks of a
//! binary number, estimates the highest set bit across the whole tensor, and
//! shifts every digit so the digit sum lands in the requested output width.
//! Both the highest-bit estimate and the digit-wise shifting ignore the true
//! radix semantics, which is where the approximation error comes from. The
//! exact scaler used to measure that error lives here too.

use crate::error::{Error, Result};
use crate::gadget::{signed_byte, BivariateLookupTable, GadgetValue, LookupTable, OpStats};
use crate::matrix::IntMatrix;
use crate::ring::{bit_length, neg_flags_and_abs, rns2mrns, rns_reconstruct, RnsTensor};

/// Scaled values plus the (approximate) shift amount that produced them.
/// `shift` can be negative when the input never exceeded the target width.
#[derive(Clone, Debug, PartialEq)]
pub struct ScaleResult {
    pub values: IntMatrix,
    pub shift: i64,
}

/// Per-position digit shifts derived from the shared highest-bit estimate.
fn digit_shifts(max_bit: i64, position: usize, width: u8, gamma: u8) -> (u8, u8) {
    let any_shift = max_bit > width as i64;
    let digit_shift = if any_shift {
        gamma as i64 - (max_bit - (width as i64 * position as i64))
    } else {
        0
    };
    let lshift = digit_shift.clamp(0, gamma as i64 - 1);
    let rshift = (-digit_shift).max(0);
    (lshift as u8, rshift as u8)
}

struct PosOutput {
    bytes: Vec<GadgetValue>,
    shift: i64,
}

fn shift2msbs_pos_bytes(x: &RnsTensor, gamma: u8, stats: &mut OpStats) -> Result<PosOutput> {
    if gamma < 1 {
        return Err(Error::ConfigError("gamma must be at least 1".into()));
    }
    let mrns = rns2mrns(x, stats)?;
    let base = x.base();
    let k = base.k();
    let w = base.width();
    let n = x.len();

    let mut g = stats.scope("shift2msbs_pos");
    let max_bit_cap = (k as u64) * (w as u64);
    let mb_bits = bit_length(max_bit_cap).max(1) as u8;

    // Highest-set-bit estimate: one lookup per digit plus a max reduction.
    // A zero digit contributes nothing (the offset i*w only applies to set bits).
    let max_table = BivariateLookupTable::from_fn(mb_bits, mb_bits, |a, b| a.max(b));
    let mut max_bit = GadgetValue::ZERO;
    for i in 0..k {
        let m_i = base.modulus(i);
        let digit_bits = bit_length(m_i as u64 - 1).max(1) as u8;
        let offset = (i as u32) * w as u32;
        let bitlen_table = LookupTable::from_fn(digit_bits, move |d| {
            if d == 0 {
                0
            } else {
                (bit_length(d as u64) + offset) as u8
            }
        });
        for idx in 0..n {
            let u = g.lookup(&bitlen_table, GadgetValue::new(mrns.digit(i, idx)))?;
            max_bit = g.bivariate_lookup(&max_table, max_bit, u)?;
        }
    }

    // Shift every digit and sum across the radix axis.
    let lshift_bits = bit_length(gamma as u64 - 1).max(1) as u8;
    let mut out: Vec<Option<GadgetValue>> = vec![None; n];
    for i in 0..k {
        let m_i = base.modulus(i);
        let digit_bits = bit_length(m_i as u64 - 1).max(1) as u8;
        let lshift_table = LookupTable::from_fn(mb_bits, move |mb| {
            digit_shifts(mb as i64, i, w, gamma).0
        });
        let rshift_table = LookupTable::from_fn(mb_bits, move |mb| {
            digit_shifts(mb as i64, i, w, gamma).1
        });
        let lshift = g.lookup(&lshift_table, max_bit)?;
        let rshift = g.lookup(&rshift_table, max_bit)?;

        // Left shift; combinations that would leave a byte are unreachable
        // because a digit's bit length is bounded by the shared maximum.
        let shl = BivariateLookupTable::from_fn(digit_bits, lshift_bits, |d, l| {
            let v = (d as u32) << l;
            if v > 255 {
                0
            } else {
                v as u8
            }
        });
        let inter_bits = digit_bits.max(gamma).min(8);
        let shr = BivariateLookupTable::from_fn(inter_bits, mb_bits, |v, r| {
            ((v as u32) >> r) as u8
        });
        for idx in 0..n {
            let d = GadgetValue::new(mrns.digit(i, idx));
            let t = g.bivariate_lookup(&shl, d, lshift)?;
            let t = g.bivariate_lookup(&shr, t, rshift)?;
            out[idx] = Some(match out[idx] {
                None => t,
                Some(acc) => g.add(acc, t)?,
            });
        }
    }

    // Approximate shift amount actually applied.
    let shift_table = LookupTable::from_fn(mb_bits, move |mb| signed_byte(mb as i64 - gamma as i64));
    let shift = g.lookup(&shift_table, max_bit)?.decode_signed();
    drop(g);

    Ok(PosOutput {
        bytes: out.into_iter().map(|v| v.expect("k >= 1")).collect(),
        shift,
    })
}

/// Approximately shift a tensor of non-negative values to its `gamma` most
/// significant bits. The shift amount is shared by the whole tensor.
pub fn shift2msbs_pos(x: &RnsTensor, gamma: u8, stats: &mut OpStats) -> Result<ScaleResult> {
    let out = shift2msbs_pos_bytes(x, gamma, stats)?;
    let cols = x.cols();
    let values = IntMatrix::from_fn(x.rows(), cols, |r, c| {
        out.bytes[r * cols + c].decode_unsigned()
    });
    Ok(ScaleResult {
        values,
        shift: out.shift,
    })
}

/// Signed variant: extract signs, scale the magnitudes to `gamma_signed - 1`
/// bits, then put the signs back.
pub fn shift2msbs_signed(
    x: &RnsTensor,
    gamma_signed: u8,
    stats: &mut OpStats,
) -> Result<ScaleResult> {
    if gamma_signed < 2 {
        return Err(Error::ConfigError(
            "signed output width must be at least 2 (one magnitude bit)".into(),
        ));
    }
    let gamma = gamma_signed - 1;
    let (negs, mags) = neg_flags_and_abs(x, stats)?;
    let pos = shift2msbs_pos_bytes(&mags, gamma, stats)?;

    let mut g = stats.scope("shift2msbs_signed");
    let y_bits = gamma.max(1).min(8);
    let resign = BivariateLookupTable::from_fn(1, y_bits, |neg, y| {
        let v = y as i64;
        signed_byte(if neg == 1 { -v } else { v })
    });
    let cols = x.cols();
    let mut out = Vec::with_capacity(x.len());
    for idx in 0..x.len() {
        out.push(g.bivariate_lookup(&resign, negs[idx], pos.bytes[idx])?);
    }
    drop(g);
    Ok(ScaleResult {
        values: IntMatrix::from_fn(x.rows(), cols, |r, c| out[r * cols + c].decode_signed()),
        shift: pos.shift,
    })
}

/// Exact block scaling used as the measurement oracle: reconstruct the
/// integers, shift by the true excess over `gamma` bits, divide toward zero.
/// Not guard-constrained and never part of the circuit.
pub fn exact_block_scale(x: &RnsTensor, gamma: u8) -> ScaleResult {
    let values = rns_reconstruct(x);
    exact_block_scale_values(&values, gamma)
}

/// Exact block scaling on plain integers.
pub fn exact_block_scale_values(values: &IntMatrix, gamma: u8) -> ScaleResult {
    let max_bit = bit_length(values.abs_max() as u64) as i64;
    let shift = (max_bit - gamma as i64).max(0);
    ScaleResult {
        values: values.map(|v| v / (1i64 << shift)),
        shift,
    }
}

/// One scaling-error measurement: approximate output versus the exact scaler
/// on the same input.
#[derive(Clone, Debug)]
pub struct ScalingError {
    pub mean_abs: f64,
    pub max_abs: i64,
    pub elements: usize,
}

pub fn scaling_error(approx: &IntMatrix, exact: &IntMatrix) -> ScalingError {
    debug_assert_eq!(approx.rows(), exact.rows());
    debug_assert_eq!(approx.cols(), exact.cols());
    let mut sum = 0i64;
    let mut max = 0i64;
    for (a, e) in approx.data().iter().zip(exact.data()) {
        let d = (a - e).abs();
        sum += d;
        max = max.max(d);
    }
    let n = approx.data().len().max(1);
    ScalingError {
        mean_abs: sum as f64 / n as f64,
        max_abs: max,
        elements: approx.data().len(),
    }
}
