//! Batch extreme learning machine: a random, fixed hidden layer plus
//! closed-form ridge output weights, in plain and per-sample-weighted form.
//!
//! Note the regularization convention: the ridge term enters as I/C, so a
//! LARGER C means WEAKER regularization. This is the opposite of the usual
//! ridge parameterization and is used consistently across this crate.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{CoreError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    /// Gaussian radial basis node. Kept minimal; sigmoid is the default
    /// everywhere in the tracker.
    Rbf,
}

/// Randomly drawn, immutable hidden layer of a single-hidden-layer network.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenLayer {
    /// One row per hidden node, d columns.
    pub input_weights: DMatrix<f64>,
    pub biases: DVector<f64>,
    pub activation: Activation,
}

impl HiddenLayer {
    pub fn n_hidden(&self) -> usize {
        self.input_weights.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.input_weights.ncols()
    }
}

/// Draws the hidden layer: input weights uniform on [-1, 1] scaled by
/// 1/sqrt(d) (keeps pre-activation magnitude independent of the input
/// dimension), biases uniform on [-1, 1]. Deterministic given the seed.
pub fn init_hidden(seed: u64, d: usize, n_hidden: usize, activation: Activation) -> HiddenLayer {
    assert!(d >= 1 && n_hidden >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 1.0 / (d as f64).sqrt();
    let input_weights =
        DMatrix::from_fn(n_hidden, d, |_, _| rng.random_range(-1.0..=1.0) * scale);
    let biases = DVector::from_fn(n_hidden, |_, _| rng.random_range(-1.0..=1.0));
    HiddenLayer { input_weights, biases, activation }
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Hidden-layer response matrix H: row i holds the activations of sample i,
/// H[i][j] = h(a_j · x_i + b_j).
pub fn hidden_map(layer: &HiddenLayer, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if x.ncols() != layer.input_dim() {
        return Err(CoreError::DimensionMismatch {
            expected: format!("{} input columns", layer.input_dim()),
            got: format!("{}", x.ncols()),
        });
    }
    match layer.activation {
        Activation::Sigmoid => {
            let mut h = x * layer.input_weights.transpose();
            for j in 0..h.ncols() {
                let b = layer.biases[j];
                for v in h.column_mut(j).iter_mut() {
                    *v = sigmoid(*v + b);
                }
            }
            Ok(h)
        }
        Activation::Rbf => {
            let n = x.nrows();
            let nh = layer.n_hidden();
            let mut h = DMatrix::zeros(n, nh);
            for i in 0..n {
                for j in 0..nh {
                    let mut dist_sq = 0.0;
                    for k in 0..layer.input_dim() {
                        let d = x[(i, k)] - layer.input_weights[(j, k)];
                        dist_sq += d * d;
                    }
                    // |b| as the kernel width keeps the draw convention of
                    // init_hidden while staying positive.
                    h[(i, j)] = (-layer.biases[j].abs() * dist_sq).exp();
                }
            }
            Ok(h)
        }
    }
}

fn check_finite(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(CoreError::NonFinite(what.into()))
    }
}

/// Ridge output weights: the unique minimizer of
/// ‖β‖²/2 + (C/2)·Σ‖H β − T‖² over β.
///
/// Solved through the smaller of the two equivalent normal-equation forms:
/// (I/C + HᵀH)β = HᵀT when N ≥ Ñ, and β = Hᵀ(I/C + HHᵀ)⁻¹T otherwise.
pub fn train_batch(h: &DMatrix<f64>, t: &DMatrix<f64>, c: f64) -> Result<DMatrix<f64>> {
    if h.nrows() != t.nrows() {
        return Err(CoreError::DimensionMismatch {
            expected: format!("{} target rows", h.nrows()),
            got: format!("{}", t.nrows()),
        });
    }
    if c.is_nan() || c <= 0.0 {
        return Err(CoreError::InvalidParameter(format!("C must be positive, got {c}")));
    }
    check_finite(h, "H")?;
    check_finite(t, "T")?;
    let n = h.nrows();
    let nh = h.ncols();
    if n >= nh {
        let ht = h.transpose();
        let mut gram = &ht * h;
        for i in 0..nh {
            gram[(i, i)] += 1.0 / c;
        }
        let chol = gram
            .cholesky()
            .ok_or_else(|| CoreError::SingularMatrix("I/C + HtH".into()))?;
        Ok(chol.solve(&(&ht * t)))
    } else {
        let mut gram = h * h.transpose();
        for i in 0..n {
            gram[(i, i)] += 1.0 / c;
        }
        let chol = gram
            .cholesky()
            .ok_or_else(|| CoreError::SingularMatrix("I/C + HHt".into()))?;
        Ok(h.transpose() * chol.solve(t))
    }
}

/// Weighted ridge output weights: (I/C + HᵀWH)⁻¹ HᵀWT with W the diagonal
/// of per-sample weights.
pub fn train_batch_weighted(
    h: &DMatrix<f64>,
    t: &DMatrix<f64>,
    weights: &[f64],
    c: f64,
) -> Result<DMatrix<f64>> {
    if h.nrows() != t.nrows() || h.nrows() != weights.len() {
        return Err(CoreError::DimensionMismatch {
            expected: format!("{} rows and weights", h.nrows()),
            got: format!("{} rows, {} weights", t.nrows(), weights.len()),
        });
    }
    if c.is_nan() || c <= 0.0 {
        return Err(CoreError::InvalidParameter(format!("C must be positive, got {c}")));
    }
    if let Some(w) = weights.iter().find(|w| w.is_nan() || **w <= 0.0) {
        return Err(CoreError::InvalidParameter(format!("nonpositive sample weight {w}")));
    }
    check_finite(h, "H")?;
    check_finite(t, "T")?;
    // Scale rows by W once; HᵀWH = Hᵀ(WH) and HᵀWT = Hᵀ(WT).
    let mut wh = h.clone();
    let mut wt = t.clone();
    for (i, &w) in weights.iter().enumerate() {
        wh.row_mut(i).scale_mut(w);
        wt.row_mut(i).scale_mut(w);
    }
    let nh = h.ncols();
    let ht = h.transpose();
    let mut gram = &ht * &wh;
    for i in 0..nh {
        gram[(i, i)] += 1.0 / c;
    }
    let chol = gram
        .cholesky()
        .ok_or_else(|| CoreError::SingularMatrix("I/C + HtWH".into()))?;
    Ok(chol.solve(&(&ht * &wt)))
}

/// Network output f(x) = h(x)·β and the per-row argmax labels.
/// Ties break toward the lower column index.
pub fn predict(
    layer: &HiddenLayer,
    beta: &DMatrix<f64>,
    x: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, Vec<usize>)> {
    let h = hidden_map(layer, x)?;
    if h.ncols() != beta.nrows() {
        return Err(CoreError::DimensionMismatch {
            expected: format!("{} beta rows", h.ncols()),
            got: format!("{}", beta.nrows()),
        });
    }
    let scores = h * beta;
    let labels = scores_to_labels(&scores);
    Ok((scores, labels))
}

/// Per-row argmax with lower-index tie-break.
pub fn scores_to_labels(scores: &DMatrix<f64>) -> Vec<usize> {
    (0..scores.nrows())
        .map(|i| {
            let mut best = 0usize;
            for j in 1..scores.ncols() {
                if scores[(i, j)] > scores[(i, best)] {
                    best = j;
                }
            }
            best
        })
        .collect()
}
