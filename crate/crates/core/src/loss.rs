//! Integer cross-entropy loss derivative.
//!
//! Approximates the softmax/cross-entropy error signal entirely in small
//! integers: an exponential lookup scaled to `2^kappa`, a row-normalizing
//! bivariate lookup, subtraction of the one-hot target mass, and a final
//! sign extraction. The output is the element-wise sign of the error in
//! {-1, 0, 1}; the training loop uses nothing else.

use crate::error::{Error, Result};
use crate::gadget::{signed_byte, BivariateLookupTable, GadgetValue, LookupTable, OpStats};
use crate::matrix::IntMatrix;
use crate::ring::bit_length;

/// Value of the scaled exponential lookup at a given logit.
///
/// The table composes the ReLU clamp with
/// `round(e^(v - (2^gamma - 1)) * 2^kappa)` over the clamped domain
/// `[0, 2^gamma - 1]`, gamma being the unsigned logit width
/// `gamma_signed - 1`. Ties round to even.
pub fn approx_exp(gamma_signed: u8, kappa: u8, logit: i64) -> i64 {
    let gamma = gamma_signed - 1;
    let top = (1i64 << gamma) - 1;
    let v = logit.clamp(0, top);
    let scaled = ((v - top) as f64).exp() * (1u64 << kappa) as f64;
    scaled.round_ties_even() as i64
}

fn check_preconditions(logits: &IntMatrix, labels: &IntMatrix, kappa: u8) -> Result<()> {
    if logits.rows() != labels.rows() || logits.cols() != labels.cols() {
        return Err(Error::ShapeError(format!(
            "logits {}x{} vs labels {}x{}",
            logits.rows(),
            logits.cols(),
            labels.rows(),
            labels.cols()
        )));
    }
    let o = logits.cols() as u64;
    if !(1..=7).contains(&kappa) {
        return Err(Error::ConfigError(format!(
            "loss approximation level {kappa} outside [1, 7]"
        )));
    }
    if o > 16 || o * (1 << kappa) > 255 {
        return Err(Error::ConfigError(format!(
            "{o} output neurons exceed the limit min(16, 255 / 2^{kappa})"
        )));
    }
    for r in 0..labels.rows() {
        let row = labels.row(r);
        if row.iter().any(|&v| v != 0 && v != 1) || row.iter().sum::<i64>() != 1 {
            return Err(Error::ShapeError(format!("label row {r} is not one-hot")));
        }
    }
    Ok(())
}

/// Sign of the approximated cross-entropy derivative, in {-1, 0, 1}.
pub fn int_ce_loss_deriv(
    logits: &IntMatrix,
    labels: &IntMatrix,
    gamma_signed: u8,
    kappa: u8,
    stats: &mut OpStats,
) -> Result<IntMatrix> {
    check_preconditions(logits, labels, kappa)?;
    let (rows, o) = (logits.rows(), logits.cols());
    let mut g = stats.scope("int_ce_loss_deriv");

    // ReLU clamp and exponential folded into one table over the signed byte
    // domain.
    let exp_table =
        LookupTable::from_fn(8, move |b| approx_exp(gamma_signed, kappa, b as i8 as i64) as u8);

    // Normalization: round((E * 2^kappa + 1) / (S + 1)); entries with E > S
    // cannot occur since S is a row sum containing E.
    let e_bits = bit_length(1 << kappa).max(1) as u8;
    let norm_table = BivariateLookupTable::from_fn(e_bits, 8, move |e, s| {
        if e as u16 > s as u16 {
            0
        } else {
            let num = (e as f64) * (1u64 << kappa) as f64 + 1.0;
            (num / (s as f64 + 1.0)).round_ties_even() as u8
        }
    });

    // Sign over the offset-128 encoding of E - Y * rowsum.
    let sign_table = LookupTable::from_fn(8, |b| signed_byte((b as i64 - 128).signum()));

    let mut out = IntMatrix::zeros(rows, o);
    for r in 0..rows {
        // Exponential per logit, then the row sum S.
        let mut exps = Vec::with_capacity(o);
        for c in 0..o {
            let byte = GadgetValue::encode_signed(logits.get(r, c))?;
            exps.push(g.lookup(&exp_table, byte)?);
        }
        let mut s = exps[0];
        for &e in &exps[1..] {
            s = g.add(s, e)?;
        }

        // Normalized pseudo-probabilities and their row sum.
        let mut norm = Vec::with_capacity(o);
        for &e in &exps {
            norm.push(g.bivariate_lookup(&norm_table, e, s)?);
        }
        let mut rowsum = norm[0];
        for &e in &norm[1..] {
            rowsum = g.add(rowsum, e)?;
        }

        // E - Y * rowsum, carried at offset 128 to stay non-negative, then
        // the sign lookup.
        for c in 0..o {
            let y = GadgetValue::encode_unsigned(labels.get(r, c))?;
            let target_mass = g.mul(y, rowsum)?;
            let d = g.add_const(norm[c], 128)?;
            let d = g.sub(d, target_mass)?;
            out.set(r, c, g.lookup(&sign_table, d)?.decode_signed());
        }
    }
    drop(g);
    Ok(out)
}
