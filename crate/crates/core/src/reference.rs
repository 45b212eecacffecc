//! Unconstrained integer reference trainer.
//!
//! Same formulas as the guarded path — including the approximate block
//! scaling and the integer loss derivative — evaluated directly on native
//! integers with no guard, no tables and no residue circuitry. Training with
//! this clone must produce bit-identical weights to the gadget path; that
//! equality is what certifies the circuit realization as semantics
//! preserving.

use crate::matrix::IntMatrix;
use crate::model::MlpModel;
use crate::ring::{bit_length, select_rns_base, RnsBase};

/// Mixed-radix block scaling evaluated on plain integers.
fn scale_signed(values: &IntMatrix, base: &RnsBase, gamma_signed: u8) -> IntMatrix {
    let radices = base.moduli();
    let k = radices.len();
    let w = base.width() as i64;
    let gamma = (gamma_signed - 1) as i64;

    // Mixed-radix digits of each magnitude, least significant radix first.
    let n = values.rows() * values.cols();
    let mut digits = vec![vec![0i64; n]; k];
    for idx in 0..n {
        let mut rest = values.data()[idx].unsigned_abs();
        for (i, &r) in radices.iter().enumerate() {
            digits[i][idx] = (rest % r as u64) as i64;
            rest /= r as u64;
        }
    }

    // Shared highest-set-bit estimate over the chunked binary view.
    let mut max_bit = 0i64;
    for (i, plane) in digits.iter().enumerate() {
        for &d in plane {
            if d != 0 {
                max_bit = max_bit.max(bit_length(d as u64) as i64 + i as i64 * w);
            }
        }
    }

    let any_shift = max_bit > w;
    let mut out = vec![0i64; n];
    for (i, plane) in digits.iter().enumerate() {
        let digit_shift = if any_shift {
            gamma - (max_bit - w * i as i64)
        } else {
            0
        };
        let lshift = digit_shift.clamp(0, gamma - 1);
        let rshift = (-digit_shift).max(0);
        for (idx, &d) in plane.iter().enumerate() {
            out[idx] += (d << lshift) >> rshift;
        }
    }

    let cols = values.cols();
    IntMatrix::from_fn(values.rows(), cols, |r, c| {
        let idx = r * cols + c;
        if values.get(r, c) < 0 {
            -out[idx]
        } else {
            out[idx]
        }
    })
}

pub fn forward(model: &MlpModel, batch: &IntMatrix) -> Vec<IntMatrix> {
    let h = model.hyper;
    let layers = model.layer_count();
    let mut acts = Vec::with_capacity(layers + 1);
    acts.push(batch.clone());
    for l in 1..=layers {
        let b = model.dims[l - 1] as f64;
        let required = if l == 1 {
            (b * (1u64 << h.beta) as f64 * (1u64 << h.alpha) as f64 + 1.0).log2()
        } else {
            (b * h.relu_cap as f64 * (1u64 << h.alpha) as f64 + 1.0).log2()
        };
        let base = select_rns_base(required, h.moduli_width).expect("validated model");
        let w_t = model.weights[l - 1].transposed();
        let y = acts[l - 1].matmul(&w_t).expect("validated shapes");
        let mut a_l = scale_signed(&y, &base, h.gamma);
        if l < layers {
            a_l = a_l.map(|v| v.clamp(0, h.relu_cap));
        }
        acts.push(a_l);
    }
    acts
}

pub fn loss_derivative(model: &MlpModel, logits: &IntMatrix, labels: &IntMatrix) -> IntMatrix {
    let h = model.hyper;
    let gamma = (h.gamma - 1) as i64;
    let top = (1i64 << gamma) - 1;
    let scale = (1u64 << h.kappa) as f64;
    let (rows, o) = (logits.rows(), logits.cols());
    let mut out = IntMatrix::zeros(rows, o);
    for r in 0..rows {
        let exps: Vec<i64> = (0..o)
            .map(|c| {
                let v = logits.get(r, c).clamp(0, top);
                (((v - top) as f64).exp() * scale).round_ties_even() as i64
            })
            .collect();
        let s: i64 = exps.iter().sum();
        let norm: Vec<i64> = exps
            .iter()
            .map(|&e| ((e as f64 * scale + 1.0) / (s as f64 + 1.0)).round_ties_even() as i64)
            .collect();
        let rowsum: i64 = norm.iter().sum();
        for c in 0..o {
            let target = labels.get(r, c) * rowsum;
            out.set(r, c, (norm[c] - target).signum());
        }
    }
    out
}

pub fn backward_and_update(model: &mut MlpModel, activations: &[IntMatrix], loss_sign: &IntMatrix) {
    let layers = model.layer_count();
    let mut e = loss_sign.clone();
    for l in (1..=layers).rev() {
        let a_prev = &activations[l - 1];
        let g_sign = e
            .transposed()
            .matmul(a_prev)
            .expect("validated shapes")
            .map(|v| v.signum());
        if l > 1 {
            let ew = e.matmul(&model.weights[l - 1]).expect("validated shapes");
            e = IntMatrix::from_fn(ew.rows(), ew.cols(), |r, c| {
                let gate = (a_prev.get(r, c) > 0) as i64;
                ew.get(r, c).signum() * gate
            });
        }
        let w = &model.weights[l - 1];
        model.weights[l - 1] = IntMatrix::from_fn(w.rows(), w.cols(), |r, c| {
            (w.get(r, c) - g_sign.get(r, c)).clamp(-128, 127)
        });
    }
}

/// One full training step, mirroring the guarded path.
pub fn train_batch(model: &mut MlpModel, batch: &IntMatrix, labels_onehot: &IntMatrix) {
    let acts = forward(model, batch);
    let e0 = loss_derivative(model, acts.last().unwrap(), labels_onehot);
    backward_and_update(model, &acts, &e0);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Hyperparams;
    use crate::nn::{self, ScalingMode, TrainOptions};

    #[test]
    fn forward_matches_gadget_path() {
        let model = MlpModel::init(&[5, 4, 3], Hyperparams::default(), 17).unwrap();
        let batch = IntMatrix::from_fn(6, 5, |r, c| ((r * 3 + c * 5) % 15) as i64 - 7);
        let mut ctx = nn::PassContext::new(ScalingMode::Approx);
        let gadget = nn::forward_pass(&model, &batch, &mut ctx).unwrap();
        let plain = forward(&model, &batch);
        assert_eq!(gadget, plain);
    }

    #[test]
    fn training_step_matches_gadget_path() {
        let mut a = MlpModel::init(&[4, 5, 2], Hyperparams::default(), 23).unwrap();
        let mut b = a.clone();
        let batch = IntMatrix::from_fn(8, 4, |r, c| ((r * 7 + c) % 13) as i64 - 6);
        let labels: Vec<usize> = (0..8).map(|r| r % 2).collect();
        let y = nn::one_hot(&labels, 2).unwrap();
        let opts = TrainOptions::new(1, 0);
        for step in 0..5 {
            nn::train_batch(&mut a, &batch, &y, &opts, step).unwrap();
            train_batch(&mut b, &batch, &y);
            assert_eq!(a.weights, b.weights, "diverged at step {step}");
        }
    }
}
