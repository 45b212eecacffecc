//! MLP model: layer dimensions, signed low-bitwidth weights, and the
//! hyperparameter block, plus a versioned lossless text serialization.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::IntMatrix;
use crate::ring::select_rns_base;

const MODEL_HEADER: &str = "rns-mlp-model v1";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    /// Signed weight bitwidth.
    pub alpha: u8,
    /// Signed input bitwidth.
    pub beta: u8,
    /// Signed activation bitwidth after block scaling.
    pub gamma: u8,
    /// Activation cap for the rectifier.
    pub relu_cap: i64,
    /// Loss approximation level.
    pub kappa: u8,
    /// RNS modulus width (4 or 5).
    pub moduli_width: u8,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            alpha: 5,
            beta: 4,
            gamma: 7,
            relu_cap: 14,
            kappa: 4,
            moduli_width: 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpModel {
    /// Layer widths d_0 .. d_L (d_0 is the input width).
    pub dims: Vec<usize>,
    /// weights[l] has shape d_{l+1} x d_l, transposed-ready for the forward
    /// matmul.
    pub weights: Vec<IntMatrix>,
    pub hyper: Hyperparams,
}

impl MlpModel {
    /// Fresh model with i.i.d. uniform weights over the symmetric open
    /// alpha-bit range [-(2^(alpha-1) - 1), 2^(alpha-1) - 1].
    pub fn init(dims: &[usize], hyper: Hyperparams, seed: u64) -> Result<Self> {
        if dims.len() < 2 || dims.iter().any(|&d| d == 0) {
            return Err(Error::ConfigError(format!("bad layer dims {dims:?}")));
        }
        let lim = (1i64 << (hyper.alpha - 1)) - 1;
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let weights = (0..dims.len() - 1)
            .map(|l| IntMatrix::from_fn(dims[l + 1], dims[l], |_, _| rng.gen_range(-lim..=lim)))
            .collect();
        let model = MlpModel {
            dims: dims.to_vec(),
            weights,
            hyper,
        };
        model.validate(8)?;
        Ok(model)
    }

    pub fn layer_count(&self) -> usize {
        self.weights.len()
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    /// Check the hyperparameter block, weight shapes and ranges, and that a
    /// catalog base exists for every matmul this model will run with the
    /// given batch size.
    pub fn validate(&self, batch_size: usize) -> Result<()> {
        let h = &self.hyper;
        if !(1..=8).contains(&h.alpha) || !(1..=8).contains(&h.beta) {
            return Err(Error::ConfigError("alpha and beta must be in [1, 8]".into()));
        }
        if !(2..=8).contains(&h.gamma) {
            return Err(Error::ConfigError("gamma must be in [2, 8]".into()));
        }
        if !(1..=7).contains(&h.kappa) {
            return Err(Error::ConfigError("kappa must be in [1, 7]".into()));
        }
        if !(0..=127).contains(&h.relu_cap) {
            return Err(Error::ConfigError("relu cap must be in [0, 127]".into()));
        }
        if h.moduli_width != 4 && h.moduli_width != 5 {
            return Err(Error::ConfigError("moduli width must be 4 or 5".into()));
        }
        if self.dims.len() < 2 {
            return Err(Error::ConfigError("model needs at least one layer".into()));
        }
        if self.weights.len() != self.dims.len() - 1 {
            return Err(Error::ShapeError("weight count vs dims mismatch".into()));
        }
        for (l, w) in self.weights.iter().enumerate() {
            if w.rows() != self.dims[l + 1] || w.cols() != self.dims[l] {
                return Err(Error::ShapeError(format!(
                    "weights[{l}] is {}x{}, expected {}x{}",
                    w.rows(),
                    w.cols(),
                    self.dims[l + 1],
                    self.dims[l]
                )));
            }
            if w.data().iter().any(|&v| !(-128..=127).contains(&v)) {
                return Err(Error::RangeError {
                    value: w.abs_max(),
                    reason: format!("weights[{l}] outside the signed byte range"),
                });
            }
        }
        let o = self.output_dim() as u64;
        if o > 16 || o * (1 << h.kappa) > 255 {
            return Err(Error::ConfigError(format!(
                "{o} output neurons exceed min(16, 255 / 2^{})",
                h.kappa
            )));
        }
        if batch_size == 0 {
            return Err(Error::ConfigError("batch size must be positive".into()));
        }
        // Every base the forward and backward passes will request must exist
        // in the catalog.
        for bits in self.required_base_bits(batch_size) {
            select_rns_base(bits, h.moduli_width)?;
        }
        Ok(())
    }

    /// Range requirements (in bits) of every matmul in one training step.
    pub fn required_base_bits(&self, batch_size: usize) -> Vec<f64> {
        let h = &self.hyper;
        let a = batch_size as f64;
        let x = h.relu_cap as f64;
        let mut bits = Vec::new();
        for l in 1..self.dims.len() {
            let b = self.dims[l - 1] as f64;
            bits.push(if l == 1 {
                (b * (1u64 << h.beta) as f64 * (1u64 << h.alpha) as f64 + 1.0).log2()
            } else {
                (b * x * (1u64 << h.alpha) as f64 + 1.0).log2()
            });
        }
        for l in (1..self.dims.len()).rev() {
            // Weight gradient.
            bits.push(if l > 1 {
                (a * 2.0 * x + 1.0).log2()
            } else {
                (a * (1u64 << h.beta) as f64 + 1.0).log2()
            });
            // Error propagation.
            if l > 1 {
                let c_l = self.dims[l] as f64;
                bits.push((c_l * (1u64 << h.alpha) as f64 + 1.0).log2());
            }
        }
        bits
    }

    /// Versioned text serialization; round-trips losslessly.
    pub fn to_text(&self) -> String {
        let h = &self.hyper;
        let mut out = String::new();
        out.push_str(MODEL_HEADER);
        out.push('\n');
        out.push_str(&format!("alpha {}\n", h.alpha));
        out.push_str(&format!("beta {}\n", h.beta));
        out.push_str(&format!("gamma {}\n", h.gamma));
        out.push_str(&format!("relu_cap {}\n", h.relu_cap));
        out.push_str(&format!("kappa {}\n", h.kappa));
        out.push_str(&format!("moduli_width {}\n", h.moduli_width));
        let dims: Vec<String> = self.dims.iter().map(|d| d.to_string()).collect();
        out.push_str(&format!("dims {}\n", dims.join(" ")));
        for (l, w) in self.weights.iter().enumerate() {
            out.push_str(&format!("weights {} {} {}\n", l, w.rows(), w.cols()));
            for r in 0..w.rows() {
                let row: Vec<String> = w.row(r).iter().map(|v| v.to_string()).collect();
                out.push_str(&row.join(" "));
                out.push('\n');
            }
        }
        out.push_str("end\n");
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let bad = |row: usize, msg: &str| Error::ParseError {
            row,
            column: "model".into(),
            message: msg.to_string(),
        };
        let (_, header) = lines.next().ok_or_else(|| bad(0, "empty model file"))?;
        if header.trim() != MODEL_HEADER {
            return Err(bad(0, "unrecognized model header"));
        }
        let mut fields = std::collections::HashMap::new();
        let mut dims: Vec<usize> = Vec::new();
        let mut weights = Vec::new();
        while let Some((row, line)) = lines.next() {
            let line = line.trim();
            if line == "end" {
                break;
            }
            let mut parts = line.split_whitespace();
            let key = parts.next().ok_or_else(|| bad(row, "blank line"))?;
            match key {
                "dims" => {
                    dims = parts
                        .map(|p| p.parse().map_err(|_| bad(row, "bad dimension")))
                        .collect::<Result<_>>()?;
                }
                "weights" => {
                    let idx: usize = parts
                        .next()
                        .and_then(|p| p.parse().ok())
                        .ok_or_else(|| bad(row, "bad layer index"))?;
                    let rows: usize = parts
                        .next()
                        .and_then(|p| p.parse().ok())
                        .ok_or_else(|| bad(row, "bad row count"))?;
                    let cols: usize = parts
                        .next()
                        .and_then(|p| p.parse().ok())
                        .ok_or_else(|| bad(row, "bad col count"))?;
                    if idx != weights.len() {
                        return Err(bad(row, "weights out of order"));
                    }
                    let mut mat = Vec::with_capacity(rows);
                    for _ in 0..rows {
                        let (wrow, line) =
                            lines.next().ok_or_else(|| bad(row, "truncated weights"))?;
                        let vals: Vec<i64> = line
                            .split_whitespace()
                            .map(|p| p.parse().map_err(|_| bad(wrow, "bad weight")))
                            .collect::<Result<_>>()?;
                        if vals.len() != cols {
                            return Err(bad(wrow, "wrong weight row length"));
                        }
                        mat.push(vals);
                    }
                    weights.push(IntMatrix::from_rows(&mat)?);
                }
                _ => {
                    let value = parts.next().ok_or_else(|| bad(row, "missing value"))?;
                    fields.insert(key.to_string(), value.to_string());
                }
            }
        }
        let get = |key: &str| -> Result<i64> {
            fields
                .get(key)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::ParseError {
                    row: 0,
                    column: "model".into(),
                    message: format!("missing field `{key}`"),
                })
        };
        let hyper = Hyperparams {
            alpha: get("alpha")? as u8,
            beta: get("beta")? as u8,
            gamma: get("gamma")? as u8,
            relu_cap: get("relu_cap")?,
            kappa: get("kappa")? as u8,
            moduli_width: get("moduli_width")? as u8,
        };
        let model = MlpModel {
            dims,
            weights,
            hyper,
        };
        model.validate(1)?;
        Ok(model)
    }
}
