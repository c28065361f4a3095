//! Weighted online-sequential ELM: cost-sensitive per-chunk sample weights
//! enter the recursive normal equations through the √W split, and a
//! forgetting factor damps the history terms when the class ratio drifts.
//!
//! The regularizer convention matches the batch solver: I/(2C) at init, so
//! larger C means weaker regularization.

use std::io::{self, Read, Write};

use nalgebra::DMatrix;

use crate::elm::{self, HiddenLayer};
use crate::error::{CoreError, Result};

/// Binary sample category. The tracker's targets live in column 0 of the
/// label matrix, background in column 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Label {
    Pos,
    Neg,
}

/// Column index of the positive category in score/label matrices.
pub const POS_COLUMN: usize = 0;
/// Column index of the negative category.
pub const NEG_COLUMN: usize = 1;

/// Per-category sample weights; they sum to 1 and the minority category
/// receives the larger weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassWeights {
    pub w_pos: f64,
    pub w_neg: f64,
}

/// Cost-sensitive weights from the chunk's own class counts:
/// w_pos = N/(P+N), w_neg = P/(P+N).
pub fn weights_for_batch(positives: usize, negatives: usize) -> Result<ClassWeights> {
    if positives == 0 || negatives == 0 {
        return Err(CoreError::ZeroClassCount { positives, negatives });
    }
    let total = (positives + negatives) as f64;
    Ok(ClassWeights {
        w_pos: negatives as f64 / total,
        w_neg: positives as f64 / total,
    })
}

/// Diagonal of the per-sample weight matrix W.
pub fn build_weight_matrix(labels: &[Label], cw: ClassWeights) -> Vec<f64> {
    labels
        .iter()
        .map(|l| match l {
            Label::Pos => cw.w_pos,
            Label::Neg => cw.w_neg,
        })
        .collect()
}

/// Signed one-hot target matrix: +1 in the true category column, -1 in the
/// other.
pub fn label_matrix(labels: &[Label]) -> DMatrix<f64> {
    let mut t = DMatrix::from_element(labels.len(), 2, -1.0);
    for (i, l) in labels.iter().enumerate() {
        match l {
            Label::Pos => t[(i, POS_COLUMN)] = 1.0,
            Label::Neg => t[(i, NEG_COLUMN)] = 1.0,
        }
    }
    t
}

/// Forgetting factor: |S_P/S_N − P/N|, the drift between the cumulative
/// and the incoming class ratio.
pub fn forgetting_factor(s_pos: u64, s_neg: u64, positives: usize, negatives: usize) -> Result<f64> {
    if s_neg == 0 || negatives == 0 {
        return Err(CoreError::ZeroDenominator("forgetting factor".into()));
    }
    Ok((s_pos as f64 / s_neg as f64 - positives as f64 / negatives as f64).abs())
}

/// How the I/(2C) regularizer enters the recursion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegularizerMode {
    /// Inject I/(2C) into K on every chunk, so the effective regularization
    /// grows with the number of updates.
    Accumulate,
    /// Inject the regularizer once at init and never again; with ρ = 1 this
    /// makes any chunking reproduce the batch weighted solution exactly.
    Fixed,
}

/// Source of the forgetting factor per update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RhoMode {
    /// |S_P/S_N − P/N|: drift between the cumulative class ratio and the
    /// incoming chunk's, from the pre-update totals.
    RatioDrift,
    /// ρ = 1 (full history discount of the re-added terms; the
    /// no-forgetting recursion).
    Unit,
    /// A caller-chosen constant.
    Fixed(f64),
}

/// The weighted online classifier state.
#[derive(Debug, Clone, PartialEq)]
pub struct WoselmState {
    /// Regularized weighted Gram accumulator.
    pub k: DMatrix<f64>,
    pub beta: DMatrix<f64>,
    pub c: f64,
    /// Cumulative positive count over init and all chunks.
    pub s_pos: u64,
    /// Cumulative negative count.
    pub s_neg: u64,
    pub regularizer_mode: RegularizerMode,
    pub rho_mode: RhoMode,
}

/// Per-update diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateInfo {
    /// Unclamped forgetting factor (NaN when the chunk made it undefined).
    pub rho_raw: f64,
    /// Value actually used, clamped to [0, 1].
    pub rho_used: f64,
    /// True when the chunk carried a single category and neutral (0.5, 0.5)
    /// weights were substituted.
    pub single_category_fallback: bool,
    pub chunk_pos: usize,
    pub chunk_neg: usize,
}

fn count_labels(labels: &[Label]) -> (usize, usize) {
    let p = labels.iter().filter(|l| **l == Label::Pos).count();
    (p, labels.len() - p)
}

/// Rows of `h`/`t` scaled by √w: A = √W·H, B = √W·T.
fn sqrt_weighted(h: &DMatrix<f64>, t: &DMatrix<f64>, w: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut a = h.clone();
    let mut b = t.clone();
    for (i, wi) in w.iter().enumerate() {
        let s = wi.sqrt();
        a.row_mut(i).scale_mut(s);
        b.row_mut(i).scale_mut(s);
    }
    (a, b)
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in i + 1..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Builds the state from the init batch: K₀ = I/(2C) + A₀ᵀA₀ and
/// β₀ = K₀⁻¹A₀ᵀB₀, with the weight diagonal taken from the batch's own
/// class counts. Both categories must be present.
pub fn woselm_init(
    h0: &DMatrix<f64>,
    t0: &DMatrix<f64>,
    labels: &[Label],
    c: f64,
    regularizer_mode: RegularizerMode,
    rho_mode: RhoMode,
) -> Result<WoselmState> {
    if h0.nrows() != t0.nrows() || h0.nrows() != labels.len() {
        return Err(CoreError::DimensionMismatch {
            expected: format!("{} rows and labels", h0.nrows()),
            got: format!("{} rows, {} labels", t0.nrows(), labels.len()),
        });
    }
    if c.is_nan() || c <= 0.0 {
        return Err(CoreError::InvalidParameter(format!("C must be positive, got {c}")));
    }
    if !h0.iter().all(|v| v.is_finite()) || !t0.iter().all(|v| v.is_finite()) {
        return Err(CoreError::NonFinite("init batch".into()));
    }
    let (p, n) = count_labels(labels);
    let cw = weights_for_batch(p, n)?;
    let w = build_weight_matrix(labels, cw);
    let (a, b) = sqrt_weighted(h0, t0, &w);
    let nh = h0.ncols();
    // Explicit transpose hits the fast gemm path for the tall factors.
    let at = a.transpose();
    let mut k = &at * &a;
    for i in 0..nh {
        k[(i, i)] += 1.0 / (2.0 * c);
    }
    symmetrize(&mut k);
    let chol = k
        .clone()
        .cholesky()
        .ok_or_else(|| CoreError::SingularMatrix("K0".into()))?;
    let beta = chol.solve(&(&at * &b));
    if !beta.iter().all(|v| v.is_finite()) {
        return Err(CoreError::NonFinite("initial beta".into()));
    }
    Ok(WoselmState {
        k,
        beta,
        c,
        s_pos: p as u64,
        s_neg: n as u64,
        regularizer_mode,
        rho_mode,
    })
}

impl WoselmState {
    pub fn n_hidden(&self) -> usize {
        self.k.nrows()
    }

    /// Folds one chunk into the state.
    ///
    /// The chunk gets its own local weight diagonal from its class counts
    /// (neutral 0.5/0.5 when only one category arrived). With
    /// `injection = I/(2C)` in accumulate mode and 0 in fixed mode:
    ///
    ///   K₁ = K₀ + injection + AΔᵀAΔ
    ///   β₁ = K₁⁻¹[K₁β₀ − ρ·(injection·β₀ + AΔᵀAΔ·β₀) + AΔᵀBΔ]
    ///
    /// The ρ term discounts exactly what this update adds to K, so ρ = 1
    /// reproduces the no-forgetting recursion and, in fixed mode, the batch
    /// weighted solution on the concatenated stream.
    pub fn update(
        &mut self,
        hd: &DMatrix<f64>,
        td: &DMatrix<f64>,
        labels: &[Label],
    ) -> Result<UpdateInfo> {
        let nh = self.n_hidden();
        if hd.ncols() != nh {
            return Err(CoreError::DimensionMismatch {
                expected: format!("{nh} hidden columns"),
                got: format!("{}", hd.ncols()),
            });
        }
        if hd.nrows() != td.nrows() || hd.nrows() != labels.len() {
            return Err(CoreError::DimensionMismatch {
                expected: format!("{} rows and labels", hd.nrows()),
                got: format!("{} rows, {} labels", td.nrows(), labels.len()),
            });
        }
        if labels.is_empty() {
            return Err(CoreError::EmptyInput("update chunk".into()));
        }
        if !hd.iter().all(|v| v.is_finite()) || !td.iter().all(|v| v.is_finite()) {
            return Err(CoreError::NonFinite("update chunk".into()));
        }

        let (p, n) = count_labels(labels);
        let (cw, fallback) = match weights_for_batch(p, n) {
            Ok(cw) => (cw, false),
            // Single-category chunk: the cost-sensitive construction is
            // undefined, neutral weights keep the recursion well-posed.
            Err(_) => (ClassWeights { w_pos: 0.5, w_neg: 0.5 }, true),
        };
        let w = build_weight_matrix(labels, cw);
        let (a, b) = sqrt_weighted(hd, td, &w);

        let (rho_raw, rho_used) = match self.rho_mode {
            RhoMode::RatioDrift => match forgetting_factor(self.s_pos, self.s_neg, p, n) {
                Ok(raw) => (raw, raw.clamp(0.0, 1.0)),
                // Undefined ratio (a zero count somewhere): retain history.
                Err(_) => (f64::NAN, 0.0),
            },
            RhoMode::Unit => (1.0, 1.0),
            RhoMode::Fixed(v) => (v, v.clamp(0.0, 1.0)),
        };

        let injection = match self.regularizer_mode {
            RegularizerMode::Accumulate => 1.0 / (2.0 * self.c),
            RegularizerMode::Fixed => 0.0,
        };

        let at = a.transpose();
        let ata = &at * &a;
        let mut k1 = &self.k + &ata;
        for i in 0..nh {
            k1[(i, i)] += injection;
        }
        symmetrize(&mut k1);

        let history = &k1 * &self.beta;
        let discounted = (&ata * &self.beta + injection * &self.beta) * rho_used;
        let bracket = history - discounted + &at * &b;
        let chol = k1
            .clone()
            .cholesky()
            .ok_or_else(|| CoreError::SingularMatrix("K1".into()))?;
        let beta1 = chol.solve(&bracket);
        if !beta1.iter().all(|v| v.is_finite()) {
            return Err(CoreError::NonFinite("updated beta".into()));
        }

        self.k = k1;
        self.beta = beta1;
        self.s_pos += p as u64;
        self.s_neg += n as u64;
        Ok(UpdateInfo {
            rho_raw,
            rho_used,
            single_category_fallback: fallback,
            chunk_pos: p,
            chunk_neg: n,
        })
    }

    /// Scores and argmax labels for raw feature rows, through the shared
    /// hidden layer.
    pub fn predict(
        &self,
        layer: &HiddenLayer,
        x: &DMatrix<f64>,
    ) -> Result<(DMatrix<f64>, Vec<usize>)> {
        elm::predict(layer, &self.beta, x)
    }

    /// Serializes the state as a little-endian binary blob (format
    /// WOSL v1): K, β, C, S_P, S_N, regularizer mode, rho mode. Matrices
    /// are written as (rows, cols, row-major data).
    pub fn write_to<W: Write>(&self, out: &mut W) -> io::Result<()> {
        out.write_all(b"WOSL")?;
        out.write_all(&1u32.to_le_bytes())?;
        write_matrix(out, &self.k)?;
        write_matrix(out, &self.beta)?;
        out.write_all(&self.c.to_le_bytes())?;
        out.write_all(&self.s_pos.to_le_bytes())?;
        out.write_all(&self.s_neg.to_le_bytes())?;
        let reg = match self.regularizer_mode {
            RegularizerMode::Accumulate => 0u8,
            RegularizerMode::Fixed => 1u8,
        };
        out.write_all(&[reg])?;
        let (rho_tag, rho_val) = match self.rho_mode {
            RhoMode::RatioDrift => (0u8, 0.0),
            RhoMode::Unit => (1u8, 0.0),
            RhoMode::Fixed(v) => (2u8, v),
        };
        out.write_all(&[rho_tag])?;
        out.write_all(&rho_val.to_le_bytes())?;
        Ok(())
    }

    pub fn read_from<R: Read>(input: &mut R) -> Result<WoselmState> {
        let mut magic = [0u8; 4];
        read_exact(input, &mut magic)?;
        if &magic != b"WOSL" {
            return Err(CoreError::InvalidState("bad magic in state blob".into()));
        }
        let version = read_u32(input)?;
        if version != 1 {
            return Err(CoreError::InvalidState(format!("unsupported state version {version}")));
        }
        let k = read_matrix(input)?;
        let beta = read_matrix(input)?;
        let c = read_f64(input)?;
        let s_pos = read_u64(input)?;
        let s_neg = read_u64(input)?;
        let mut tag = [0u8; 1];
        read_exact(input, &mut tag)?;
        let regularizer_mode = match tag[0] {
            0 => RegularizerMode::Accumulate,
            1 => RegularizerMode::Fixed,
            other => return Err(CoreError::InvalidState(format!("bad regularizer tag {other}"))),
        };
        read_exact(input, &mut tag)?;
        let rho_val = {
            let t = tag[0];
            let v = read_f64(input)?;
            match t {
                0 => RhoMode::RatioDrift,
                1 => RhoMode::Unit,
                2 => RhoMode::Fixed(v),
                other => return Err(CoreError::InvalidState(format!("bad rho tag {other}"))),
            }
        };
        Ok(WoselmState {
            k,
            beta,
            c,
            s_pos,
            s_neg,
            regularizer_mode,
            rho_mode: rho_val,
        })
    }
}

fn write_matrix<W: Write>(out: &mut W, m: &DMatrix<f64>) -> io::Result<()> {
    out.write_all(&(m.nrows() as u64).to_le_bytes())?;
    out.write_all(&(m.ncols() as u64).to_le_bytes())?;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.write_all(&m[(i, j)].to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_exact<R: Read>(input: &mut R, buf: &mut [u8]) -> Result<()> {
    input
        .read_exact(buf)
        .map_err(|e| CoreError::InvalidState(format!("truncated state blob: {e}")))
}

fn read_u32<R: Read>(input: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(input, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(input: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(input, &mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(input: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    read_exact(input, &mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn read_matrix<R: Read>(input: &mut R) -> Result<DMatrix<f64>> {
    let rows = read_u64(input)? as usize;
    let cols = read_u64(input)? as usize;
    if rows == 0 || cols == 0 || rows > 1 << 20 || cols > 1 << 20 {
        return Err(CoreError::InvalidState(format!("implausible matrix shape {rows}x{cols}")));
    }
    let mut m = DMatrix::<f64>::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            m[(i, j)] = read_f64(input)?;
        }
    }
    Ok(m)
}
