//! Forward pass, sign-based backward pass, and the end-to-end training loop.
//!
//! Every matmul selects its RNS base from the catalog based on the worst-case
//! accumulator range of that layer, activations are block-scaled back to the
//! signed activation width, hidden layers go through the capped rectifier,
//! and weight updates are the clipped sign of the gradient. All ciphertext
//! side work runs through the guarded gadget layer and is counted per
//! circuit.

use crate::error::{Error, Result};
use crate::gadget::{BivariateLookupTable, GadgetValue, LookupTable, OpStats};
use crate::loss::int_ce_loss_deriv;
use crate::matmul::matmul_dispatch;
use crate::matrix::IntMatrix;
use crate::model::MlpModel;
use crate::ring::{select_rns_base, sign_rns};
use crate::scale::{exact_block_scale, scaling_error, shift2msbs_signed};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScalingMode {
    /// The approximate block-scaling gadget (the production path).
    Approx,
    /// Exact block scaling via reconstruction; the comparison arm of the
    /// approximation-impact experiment.
    Exact,
}

#[derive(Clone, Debug)]
pub struct TrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub scaling: ScalingMode,
    /// Record the per-call deviation of the approximate scaler from the
    /// exact one.
    pub record_scaling_error: bool,
    /// Cross-check every matmul's true accumulator magnitude against the
    /// selected base (oracle-backed; for verification runs).
    pub check_capacity: bool,
}

impl TrainOptions {
    pub fn new(epochs: usize, seed: u64) -> Self {
        TrainOptions {
            epochs,
            batch_size: 8,
            seed,
            scaling: ScalingMode::Approx,
            record_scaling_error: false,
            check_capacity: false,
        }
    }
}

/// Deviation of one approximate scaling call from the exact scaler.
#[derive(Clone, Debug)]
pub struct ScalingErrorRecord {
    pub layer: usize,
    pub batch_index: i64,
    pub mean_abs: f64,
    pub max_abs: i64,
    pub elements: usize,
}

/// Shared knobs and collectors for one forward/backward pass.
#[derive(Debug)]
pub struct PassContext {
    pub scaling: ScalingMode,
    pub record_scaling_error: bool,
    pub check_capacity: bool,
    pub batch_index: i64,
    pub circuits: Vec<(String, OpStats)>,
    pub scaling_errors: Vec<ScalingErrorRecord>,
}

impl PassContext {
    pub fn new(scaling: ScalingMode) -> Self {
        PassContext {
            scaling,
            record_scaling_error: false,
            check_capacity: false,
            batch_index: -1,
            circuits: Vec::new(),
            scaling_errors: Vec::new(),
        }
    }
}

/// Everything one training step leaves behind.
#[derive(Debug)]
pub struct BatchTrace {
    /// A_0 .. A_L; hidden entries are post-rectifier, the last is the logits.
    pub activations: Vec<IntMatrix>,
    pub loss_sign: IntMatrix,
    pub gradient_signs: Vec<IntMatrix>,
    pub circuits: Vec<(String, OpStats)>,
    pub scaling_errors: Vec<ScalingErrorRecord>,
}

/// Element-wise min(max(a, 0), cap), one lookup per element.
pub fn relu_cap(x: &IntMatrix, cap: i64, stats: &mut OpStats) -> Result<IntMatrix> {
    if !(0..=127).contains(&cap) {
        return Err(Error::ConfigError(format!("relu cap {cap} outside [0, 127]")));
    }
    let table = LookupTable::from_fn(8, move |b| (b as i8 as i64).clamp(0, cap) as u8);
    let mut g = stats.scope("relu_cap");
    let mut out = IntMatrix::zeros(x.rows(), x.cols());
    for r in 0..x.rows() {
        for c in 0..x.cols() {
            let byte = GadgetValue::encode_signed(x.get(r, c))?;
            out.set(r, c, g.lookup(&table, byte)?.decode_unsigned());
        }
    }
    Ok(out)
}

/// Gate a propagated sign tensor by the stored activation pattern: positions
/// whose forward activation was clamped to zero pass no error. The cap side
/// does not gate.
fn apply_relu_mask(e: &IntMatrix, act: &IntMatrix, stats: &mut OpStats) -> Result<IntMatrix> {
    let mut g = stats.scope("relu_mask");
    let gt0 = LookupTable::from_fn(8, |b| ((b as i8 as i64) > 0) as u8);
    let mut out = IntMatrix::zeros(e.rows(), e.cols());
    for r in 0..e.rows() {
        for c in 0..e.cols() {
            let mask = g.lookup(&gt0, GadgetValue::encode_signed(act.get(r, c))?)?;
            let eb = GadgetValue::encode_signed(e.get(r, c))?;
            out.set(r, c, g.mul(eb, mask)?.decode_signed());
        }
    }
    Ok(out)
}

/// W <- clip(W - G) in [-128, 127], one bivariate lookup per weight.
pub fn clip_update(w: &IntMatrix, g_sign: &IntMatrix, stats: &mut OpStats) -> Result<IntMatrix> {
    if w.rows() != g_sign.rows() || w.cols() != g_sign.cols() {
        return Err(Error::ShapeError("weight/gradient shape mismatch".into()));
    }
    let table = BivariateLookupTable::from_fn(8, 8, |wb, gb| {
        let v = (wb as i8 as i64 - gb as i8 as i64).clamp(-128, 127);
        v as i8 as u8
    });
    let mut g = stats.scope("clip_update");
    let mut out = IntMatrix::zeros(w.rows(), w.cols());
    for r in 0..w.rows() {
        for c in 0..w.cols() {
            let wb = GadgetValue::encode_signed(w.get(r, c))?;
            let gb = GadgetValue::encode_signed(g_sign.get(r, c))?;
            out.set(r, c, g.bivariate_lookup(&table, wb, gb)?.decode_signed());
        }
    }
    Ok(out)
}

fn check_capacity(
    lhs: &IntMatrix,
    rhs: &IntMatrix,
    cardinality: u64,
    what: &str,
) -> Result<()> {
    let oracle = lhs.matmul(rhs)?;
    let max = oracle.abs_max();
    if max as u64 * 2 >= cardinality {
        return Err(Error::RangeError {
            value: max,
            reason: format!(
                "{what}: accumulator magnitude reaches half the ring (M = {cardinality})"
            ),
        });
    }
    Ok(())
}

/// Matmul, block scaling back to the signed activation width, and optional
/// error recording; shared by the forward layers.
fn scaled_layer(
    lhs: &IntMatrix,
    rhs: &IntMatrix,
    required_bits: f64,
    layer: usize,
    ctx: &mut PassContext,
    hyper_gamma: u8,
    width: u8,
    stats: &mut OpStats,
) -> Result<IntMatrix> {
    let base = select_rns_base(required_bits, width)?;
    if ctx.check_capacity {
        check_capacity(lhs, rhs, base.cardinality(), "forward matmul")?;
    }
    let y = matmul_dispatch(lhs, rhs, &base, stats)?;
    match ctx.scaling {
        ScalingMode::Approx => {
            let res = shift2msbs_signed(&y, hyper_gamma, stats)?;
            if ctx.record_scaling_error {
                let exact = exact_block_scale(&y, hyper_gamma - 1);
                let err = scaling_error(&res.values, &exact.values);
                ctx.scaling_errors.push(ScalingErrorRecord {
                    layer,
                    batch_index: ctx.batch_index,
                    mean_abs: err.mean_abs,
                    max_abs: err.max_abs,
                    elements: err.elements,
                });
            }
            Ok(res.values)
        }
        ScalingMode::Exact => Ok(exact_block_scale(&y, hyper_gamma - 1).values),
    }
}

/// Run the batch through every layer; returns A_0 .. A_L.
pub fn forward_pass(
    model: &MlpModel,
    batch: &IntMatrix,
    ctx: &mut PassContext,
) -> Result<Vec<IntMatrix>> {
    let h = model.hyper;
    if batch.cols() != model.dims[0] {
        return Err(Error::ShapeError(format!(
            "batch width {} vs input width {}",
            batch.cols(),
            model.dims[0]
        )));
    }
    let beta_lim = 1i64 << (h.beta - 1);
    if let Some(&v) = batch
        .data()
        .iter()
        .find(|v| **v < -beta_lim || **v >= beta_lim)
    {
        return Err(Error::RangeError {
            value: v,
            reason: format!("input outside the signed {}-bit range", h.beta),
        });
    }

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
        let w_t = model.weights[l - 1].transposed();
        let mut stats = OpStats::new();
        let mut a_l = scaled_layer(
            &acts[l - 1],
            &w_t,
            required,
            l,
            ctx,
            h.gamma,
            h.moduli_width,
            &mut stats,
        )?;
        if l < layers {
            a_l = relu_cap(&a_l, h.relu_cap, &mut stats)?;
        }
        ctx.circuits.push((format!("forward/layer{l}"), stats));
        acts.push(a_l);
    }
    Ok(acts)
}

/// Loss-derivative circuit on the logits.
pub fn loss_derivative(
    model: &MlpModel,
    logits: &IntMatrix,
    labels_onehot: &IntMatrix,
    ctx: &mut PassContext,
) -> Result<IntMatrix> {
    let mut stats = OpStats::new();
    let e = int_ce_loss_deriv(
        logits,
        labels_onehot,
        model.hyper.gamma,
        model.hyper.kappa,
        &mut stats,
    )?;
    ctx.circuits.push(("loss".to_string(), stats));
    Ok(e)
}

/// Backward pass with sign-based error propagation and clipped sign updates.
/// Returns the per-layer gradient signs.
pub fn backward_and_update(
    model: &mut MlpModel,
    activations: &[IntMatrix],
    loss_sign: &IntMatrix,
    ctx: &mut PassContext,
) -> Result<Vec<IntMatrix>> {
    let h = model.hyper;
    let layers = model.layer_count();
    if activations.len() != layers + 1 {
        return Err(Error::ShapeError("trace does not match the model".into()));
    }
    let a = activations[0].rows() as f64;
    let x = h.relu_cap as f64;
    let mut e = loss_sign.clone();
    let mut grads: Vec<Option<IntMatrix>> = vec![None; layers];

    for l in (1..=layers).rev() {
        let a_prev = &activations[l - 1];

        let mut stats = OpStats::new();
        let required = if l > 1 {
            (a * 2.0 * x + 1.0).log2()
        } else {
            (a * (1u64 << h.beta) as f64 + 1.0).log2()
        };
        let base = select_rns_base(required, h.moduli_width)?;
        let e_t = e.transposed();
        if ctx.check_capacity {
            check_capacity(&e_t, a_prev, base.cardinality(), "gradient matmul")?;
        }
        let g_rns = matmul_dispatch(&e_t, a_prev, &base, &mut stats)?;
        let g_sign = sign_rns(&g_rns, (-1, 0, 1), &mut stats)?;
        ctx.circuits.push((format!("gradient/layer{l}"), stats));

        if l > 1 {
            let mut stats = OpStats::new();
            let c_l = model.dims[l] as f64;
            let required = (c_l * (1u64 << h.alpha) as f64 + 1.0).log2();
            let base = select_rns_base(required, h.moduli_width)?;
            if ctx.check_capacity {
                check_capacity(&e, &model.weights[l - 1], base.cardinality(), "error matmul")?;
            }
            let ew = matmul_dispatch(&e, &model.weights[l - 1], &base, &mut stats)?;
            let e_next = sign_rns(&ew, (-1, 0, 1), &mut stats)?;
            let e_next = apply_relu_mask(&e_next, a_prev, &mut stats)?;
            ctx.circuits.push((format!("errorprop/layer{l}"), stats));
            e = e_next;
        }

        let mut stats = OpStats::new();
        model.weights[l - 1] = clip_update(&model.weights[l - 1], &g_sign, &mut stats)?;
        ctx.circuits.push((format!("update/layer{l}"), stats));
        grads[l - 1] = Some(g_sign);
    }
    Ok(grads.into_iter().map(|g| g.expect("all layers visited")).collect())
}

/// One full training step on a batch.
pub fn train_batch(
    model: &mut MlpModel,
    batch: &IntMatrix,
    labels_onehot: &IntMatrix,
    opts: &TrainOptions,
    batch_index: i64,
) -> Result<BatchTrace> {
    let mut ctx = PassContext::new(opts.scaling);
    ctx.record_scaling_error = opts.record_scaling_error;
    ctx.check_capacity = opts.check_capacity;
    ctx.batch_index = batch_index;

    let activations = forward_pass(model, batch, &mut ctx)?;
    let loss_sign = loss_derivative(model, activations.last().unwrap(), labels_onehot, &mut ctx)?;
    let gradient_signs = backward_and_update(model, &activations, &loss_sign, &mut ctx)?;
    Ok(BatchTrace {
        activations,
        loss_sign,
        gradient_signs,
        circuits: ctx.circuits,
        scaling_errors: ctx.scaling_errors,
    })
}

/// One-hot encode class indices into `width` columns.
pub fn one_hot(labels: &[usize], width: usize) -> Result<IntMatrix> {
    let mut out = IntMatrix::zeros(labels.len(), width);
    for (r, &l) in labels.iter().enumerate() {
        if l >= width {
            return Err(Error::ConfigError(format!(
                "class index {l} outside the {width}-wide output layer"
            )));
        }
        out.set(r, l, 1);
    }
    Ok(out)
}

/// Stable seed derivation for per-epoch shuffles (splitmix64 over the pair).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Class predictions: argmax over the logits, ties toward the lowest index.
pub fn predict(model: &MlpModel, features: &IntMatrix, scaling: ScalingMode) -> Result<Vec<usize>> {
    let mut ctx = PassContext::new(scaling);
    let acts = forward_pass(model, features, &mut ctx)?;
    let logits = acts.last().unwrap();
    let mut preds = Vec::with_capacity(logits.rows());
    for r in 0..logits.rows() {
        let row = logits.row(r);
        let mut best = 0usize;
        for (c, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = c;
            }
        }
        preds.push(best);
    }
    Ok(preds)
}

/// Fraction of correct argmax predictions.
pub fn evaluate(
    model: &MlpModel,
    features: &IntMatrix,
    labels: &[usize],
    scaling: ScalingMode,
) -> Result<f64> {
    if features.rows() == 0 {
        return Err(Error::EmptySplit("evaluation dataset is empty".into()));
    }
    if features.rows() != labels.len() {
        return Err(Error::ShapeError("feature/label row mismatch".into()));
    }
    let preds = predict(model, features, scaling)?;
    let hits = preds.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / labels.len() as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochMetrics {
    pub train_accuracy: f64,
    pub test_accuracy: f64,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub model: MlpModel,
    pub epochs: Vec<EpochMetrics>,
    pub best_test_accuracy: f64,
    /// 1-based epoch of the best test accuracy; 0 means the initial model.
    pub best_epoch: usize,
    pub first_batch_circuits: Vec<(String, OpStats)>,
    pub total_stats: OpStats,
    pub scaling_errors: Vec<ScalingErrorRecord>,
    pub batches_run: usize,
}

/// Deterministic multi-epoch training; trailing partial batches are dropped.
pub fn train(
    model: MlpModel,
    train_features: &IntMatrix,
    train_labels: &[usize],
    test_features: &IntMatrix,
    test_labels: &[usize],
    opts: &TrainOptions,
) -> Result<TrainOutcome> {
    let mut model = model;
    model.validate(opts.batch_size)?;
    if train_features.rows() == 0 {
        return Err(Error::EmptySplit("training split is empty".into()));
    }
    if train_features.rows() != train_labels.len() {
        return Err(Error::ShapeError("training feature/label mismatch".into()));
    }
    let o = model.output_dim();
    if let Some(&bad) = train_labels.iter().chain(test_labels).find(|&&l| l >= o) {
        return Err(Error::ConfigError(format!(
            "class index {bad} does not fit the {o}-wide output layer"
        )));
    }

    let mut epochs = Vec::with_capacity(opts.epochs);
    let mut best = (f64::NEG_INFINITY, 0usize);
    let mut first_batch_circuits = Vec::new();
    let mut total_stats = OpStats::new();
    let mut scaling_errors = Vec::new();
    let mut batches_run = 0usize;

    for epoch in 0..opts.epochs {
        let shuffle_seed = derive_seed(opts.seed, epoch as u64);
        let batches =
            crate::data::batch_indices(train_features.rows(), opts.batch_size, shuffle_seed);
        for idx in &batches {
            let x = train_features.select_rows(idx);
            let labels: Vec<usize> = idx.iter().map(|&i| train_labels[i]).collect();
            let y = one_hot(&labels, o)?;
            let trace = train_batch(&mut model, &x, &y, opts, batches_run as i64)?;
            if batches_run == 0 {
                first_batch_circuits = trace.circuits.clone();
            }
            for (_, s) in &trace.circuits {
                total_stats.merge(s);
            }
            scaling_errors.extend(trace.scaling_errors);
            batches_run += 1;
        }
        let train_acc = evaluate(&model, train_features, train_labels, opts.scaling)?;
        let test_acc = evaluate(&model, test_features, test_labels, opts.scaling)?;
        epochs.push(EpochMetrics {
            train_accuracy: train_acc,
            test_accuracy: test_acc,
        });
        if test_acc > best.0 {
            best = (test_acc, epoch + 1);
        }
    }
    if opts.epochs == 0 {
        best = (
            evaluate(&model, test_features, test_labels, opts.scaling)?,
            0,
        );
    }

    Ok(TrainOutcome {
        model,
        epochs,
        best_test_accuracy: best.0,
        best_epoch: best.1,
        first_batch_circuits,
        total_stats,
        scaling_errors,
        batches_run,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Hyperparams;

    fn small_hyper() -> Hyperparams {
        Hyperparams::default()
    }

    #[test]
    fn relu_cap_examples() {
        let mut stats = OpStats::new();
        let x = IntMatrix::from_rows(&[vec![-3, 20, 7]]).unwrap();
        let y = relu_cap(&x, 14, &mut stats).unwrap();
        assert_eq!(y.row(0), &[0, 14, 7]);
    }

    #[test]
    fn identity_single_layer_passes_small_inputs_through() {
        let mut model = MlpModel::init(&[3, 3], small_hyper(), 0).unwrap();
        model.weights[0] = IntMatrix::identity(3);
        let batch = IntMatrix::from_rows(&[vec![-3, 0, 2], vec![1, -1, 5]]).unwrap();
        let mut ctx = PassContext::new(ScalingMode::Approx);
        let acts = forward_pass(&model, &batch, &mut ctx).unwrap();
        assert_eq!(acts.last().unwrap(), &batch);
    }

    #[test]
    fn breast_cancer_layer1_base_is_k4() {
        let mut h = small_hyper();
        h.alpha = 5;
        h.beta = 4;
        let model = MlpModel::init(&[30, 28, 8, 2], h, 1).unwrap();
        let bits = model.required_base_bits(8);
        // First forward matmul: log2(30 * 2^4 * 2^5 + 1)
        assert!((bits[0] - (30.0f64 * 16.0 * 32.0 + 1.0).log2()).abs() < 1e-12);
        let base = select_rns_base(bits[0], 4).unwrap();
        assert_eq!(base.moduli(), &[11, 13, 15, 14]);
        // The published example computed the width with the layer's output
        // dimension (28); both land in the same base.
        let alt = select_rns_base((28.0f64 * 16.0 * 32.0 + 1.0).log2(), 4).unwrap();
        assert_eq!(alt.moduli(), base.moduli());
    }

    #[test]
    fn zero_gradient_leaves_weights_unchanged() {
        let mut model = MlpModel::init(&[4, 3], small_hyper(), 7).unwrap();
        let before = model.weights.clone();
        let batch = IntMatrix::from_rows(&[vec![1, 0, -2, 3], vec![0, 1, 1, -1]]).unwrap();
        let mut ctx = PassContext::new(ScalingMode::Approx);
        let acts = forward_pass(&model, &batch, &mut ctx).unwrap();
        let zeros = IntMatrix::zeros(2, 3);
        backward_and_update(&mut model, &acts, &zeros, &mut ctx).unwrap();
        assert_eq!(model.weights, before);
    }

    #[test]
    fn clip_saturates_at_byte_range() {
        let mut stats = OpStats::new();
        let w = IntMatrix::from_rows(&[vec![127, -128]]).unwrap();
        let g = IntMatrix::from_rows(&[vec![-1, 1]]).unwrap();
        let out = clip_update(&w, &g, &mut stats).unwrap();
        assert_eq!(out.row(0), &[127, -128]);
    }

    #[test]
    fn learns_linearly_separable_toy_set() {
        // Four points, two classes, single layer.
        let feats = IntMatrix::from_rows(&[
            vec![3, 0],
            vec![2, 1],
            vec![0, 3],
            vec![-1, 2],
        ])
        .unwrap();
        let labels = [0usize, 0, 1, 1];
        let mut h = small_hyper();
        h.beta = 3;
        let model = MlpModel::init(&[2, 2], h, 5).unwrap();
        let mut opts = TrainOptions::new(20, 5);
        opts.batch_size = 4;
        let out = train(model, &feats, &labels, &feats, &labels, &opts).unwrap();
        assert_eq!(out.best_test_accuracy, 1.0, "metrics: {:?}", out.epochs);
    }

    #[test]
    fn zero_epochs_keeps_the_initial_model() {
        let feats = IntMatrix::from_rows(&[vec![1, -1], vec![-1, 1]]).unwrap();
        let labels = [0usize, 1];
        let model = MlpModel::init(&[2, 2], small_hyper(), 3).unwrap();
        let before = model.clone();
        let out = train(model, &feats, &labels, &feats, &labels, &TrainOptions::new(0, 3)).unwrap();
        assert_eq!(out.model, before);
        assert_eq!(out.best_epoch, 0);
    }

    #[test]
    fn training_is_deterministic() {
        let feats = IntMatrix::from_fn(16, 3, |r, c| ((r * 5 + c * 3) % 13) as i64 - 6);
        let labels: Vec<usize> = (0..16).map(|r| r % 2).collect();
        let run = |seed| {
            let mut h = small_hyper();
            h.beta = 4;
            let model = MlpModel::init(&[3, 4, 2], h, seed).unwrap();
            let mut opts = TrainOptions::new(3, seed);
            opts.record_scaling_error = true;
            train(model, &feats, &labels, &feats, &labels, &opts).unwrap()
        };
        let a = run(11);
        let b = run(11);
        assert_eq!(a.model, b.model);
        assert_eq!(a.total_stats, b.total_stats);
        assert_eq!(
            a.epochs.iter().map(|e| e.test_accuracy).collect::<Vec<_>>(),
            b.epochs.iter().map(|e| e.test_accuracy).collect::<Vec<_>>()
        );
    }

    #[test]
    fn all_zero_weights_predict_class_zero() {
        let mut model = MlpModel::init(&[3, 3], small_hyper(), 0).unwrap();
        model.weights[0] = IntMatrix::zeros(3, 3);
        let feats = IntMatrix::from_rows(&[vec![1, 2, 3], vec![-1, -2, -3]]).unwrap();
        let preds = predict(&model, &feats, ScalingMode::Approx).unwrap();
        assert_eq!(preds, vec![0, 0]);
    }

    #[test]
    fn empty_evaluation_errors() {
        let model = MlpModel::init(&[2, 2], small_hyper(), 0).unwrap();
        let feats = IntMatrix::zeros(0, 2);
        assert!(matches!(
            evaluate(&model, &feats, &[], ScalingMode::Approx),
            Err(Error::EmptySplit(_))
        ));
    }
}
