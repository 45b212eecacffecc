//! Overflow-free matrix multiplication in RNS representation.
//!
//! Both variants convert the inputs to residues, form partial products per
//! residue plane, and sum them block-wise with a modular reduction after
//! every block so no intermediate leaves 8 bits. The 4-bit variant multiplies
//! residues directly (raw products stay below 196); the 5-bit variant splits
//! one operand into a high 2-bit and a low 3-bit chunk and folds the
//! `* 8 mod m` recombination of the high chunk into a single lookup.

use crate::error::{Error, Result};
use crate::gadget::{GadgetValue, LookupTable, OpStats};
use crate::matrix::IntMatrix;
use crate::ring::{to_rns, RnsBase, RnsTensor};

/// Block length and dimensions for one multiplication.
#[derive(Clone, Debug)]
pub struct MatmulPlan {
    pub block_len: usize,
    pub a: usize,
    pub b: usize,
    pub c: usize,
}

impl MatmulPlan {
    pub fn new(base: &RnsBase, a: usize, b: usize, c: usize) -> Result<Self> {
        if b == 0 || a == 0 || c == 0 {
            return Err(Error::ShapeError(format!("degenerate matmul {a}x{b}x{c}")));
        }
        let block_len = match base.width() {
            4 => 15.min(b),
            5 => 7.min(b),
            w => {
                return Err(Error::ConfigError(format!(
                    "no summation block length for modulus width {w}"
                )))
            }
        };
        // Running block sum plus a reduced carry must stay within 8 bits.
        let m_max = *base.moduli().iter().max().unwrap() as usize;
        debug_assert!(block_len * (m_max - 1) <= 255 - (m_max - 1));
        Ok(MatmulPlan {
            block_len,
            a,
            b,
            c,
        })
    }
}

fn shape_check(lhs: &IntMatrix, rhs: &IntMatrix) -> Result<(usize, usize, usize)> {
    if lhs.cols() != rhs.rows() {
        return Err(Error::ShapeError(format!(
            "matmul {}x{} by {}x{}",
            lhs.rows(),
            lhs.cols(),
            rhs.rows(),
            rhs.cols()
        )));
    }
    Ok((lhs.rows(), lhs.cols(), rhs.cols()))
}

/// Residue matrix product for 4-bit bases.
///
/// The caller selects a base whose range covers the true accumulator
/// magnitude; under that precondition the result is exact, not approximate.
pub fn matmul_rns(
    lhs: &IntMatrix,
    rhs: &IntMatrix,
    base: &RnsBase,
    stats: &mut OpStats,
) -> Result<RnsTensor> {
    if base.width() != 4 {
        return Err(Error::ConfigError(
            "matmul_rns expects a 4-bit base; use matmul_highres_rns for 5-bit".into(),
        ));
    }
    let (a, b, c) = shape_check(lhs, rhs)?;
    let plan = MatmulPlan::new(base, a, b, c)?;
    let xr = to_rns(lhs, base, stats)?;
    let wr = to_rns(rhs, base, stats)?;

    let mut g = stats.scope("matmul_rns");
    let mut planes = Vec::with_capacity(base.k());
    for i in 0..base.k() {
        let m = base.modulus(i);
        let mod_table = LookupTable::from_fn(8, move |v| v % m);
        let mut plane = vec![0u8; a * c];
        for r in 0..a {
            for cc in 0..c {
                let mut y: Option<GadgetValue> = None;
                let mut start = 0;
                while start < b {
                    let end = (start + plan.block_len).min(b);
                    let mut acc: Option<GadgetValue> = None;
                    for bb in start..end {
                        let x = GadgetValue::new(xr.digit(i, r * b + bb));
                        let w = GadgetValue::new(wr.digit(i, bb * c + cc));
                        let pp = g.mul(x, w)?;
                        let pp = g.lookup(&mod_table, pp)?;
                        acc = Some(match acc {
                            None => pp,
                            Some(s) => g.add(s, pp)?,
                        });
                    }
                    let block = acc.expect("non-empty block");
                    y = Some(match y {
                        None => g.lookup(&mod_table, block)?,
                        Some(prev) => {
                            let s = g.add(prev, block)?;
                            g.lookup(&mod_table, s)?
                        }
                    });
                    start = end;
                }
                plane[r * c + cc] = y.expect("b >= 1").raw();
            }
        }
        planes.push(plane);
    }
    drop(g);
    RnsTensor::from_planes(base.clone(), a, c, planes)
}

/// Residue matrix product for 5-bit bases with bit-split partial products.
pub fn matmul_highres_rns(
    lhs: &IntMatrix,
    rhs: &IntMatrix,
    base: &RnsBase,
    stats: &mut OpStats,
) -> Result<RnsTensor> {
    if base.width() != 5 {
        return Err(Error::ConfigError(
            "matmul_highres_rns expects a 5-bit base".into(),
        ));
    }
    let (a, b, c) = shape_check(lhs, rhs)?;
    let plan = MatmulPlan::new(base, a, b, c)?;
    let xr = to_rns(lhs, base, stats)?;
    let wr = to_rns(rhs, base, stats)?;

    let mut g = stats.scope("matmul_highres_rns");
    let mut planes = Vec::with_capacity(base.k());
    for i in 0..base.k() {
        let m = base.modulus(i);
        let mod_table = LookupTable::from_fn(8, move |v| v % m);
        // High chunk times 8, reduced; raw input stays below 3 * 30 = 90.
        let mul8_table = LookupTable::from_fn(7, move |v| ((v as u32 * 8) % m as u32) as u8);

        // Chunk the lhs residues once per plane.
        let mut lo = Vec::with_capacity(a * b);
        let mut hi = Vec::with_capacity(a * b);
        for idx in 0..a * b {
            let d = GadgetValue::new(xr.digit(i, idx));
            hi.push(g.extract_bits(d, 3, 4)?);
            lo.push(g.extract_bits(d, 0, 2)?);
        }

        let mut plane = vec![0u8; a * c];
        for r in 0..a {
            for cc in 0..c {
                let mut y: Option<GadgetValue> = None;
                let mut start = 0;
                while start < b {
                    let end = (start + plan.block_len).min(b);
                    let mut acc: Option<GadgetValue> = None;
                    for bb in start..end {
                        let w = GadgetValue::new(wr.digit(i, bb * c + cc));
                        let y1 = g.mul(lo[r * b + bb], w)?;
                        let y1 = g.lookup(&mod_table, y1)?;
                        let y2 = g.mul(hi[r * b + bb], w)?;
                        let y2 = g.lookup(&mul8_table, y2)?;
                        let pp = g.add(y1, y2)?;
                        let pp = g.lookup(&mod_table, pp)?;
                        acc = Some(match acc {
                            None => pp,
                            Some(s) => g.add(s, pp)?,
                        });
                    }
                    let block = acc.expect("non-empty block");
                    y = Some(match y {
                        None => g.lookup(&mod_table, block)?,
                        Some(prev) => {
                            let s = g.add(prev, block)?;
                            g.lookup(&mod_table, s)?
                        }
                    });
                    start = end;
                }
                plane[r * c + cc] = y.expect("b >= 1").raw();
            }
        }
        planes.push(plane);
    }
    drop(g);
    RnsTensor::from_planes(base.clone(), a, c, planes)
}

/// Dispatch on the base width.
pub fn matmul_dispatch(
    lhs: &IntMatrix,
    rhs: &IntMatrix,
    base: &RnsBase,
    stats: &mut OpStats,
) -> Result<RnsTensor> {
    match base.width() {
        4 => matmul_rns(lhs, rhs, base, stats),
        5 => matmul_highres_rns(lhs, rhs, base, stats),
        w => Err(Error::ConfigError(format!("unsupported modulus width {w}"))),
    }
}
