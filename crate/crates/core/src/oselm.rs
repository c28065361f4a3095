//! Unweighted online-sequential ELM: recursive least squares over the
//! hidden-layer responses, updated per data chunk through the Woodbury
//! identity. Serves as the unweighted baseline and a cross-check for the
//! weighted variant.

use nalgebra::DMatrix;

use crate::error::{CoreError, Result};

/// Running state: G tracks (HᵀH)⁻¹ over everything seen so far.
#[derive(Debug, Clone, PartialEq)]
pub struct OselmState {
    pub g: DMatrix<f64>,
    pub beta: DMatrix<f64>,
    pub n_seen: usize,
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

#[cfg(debug_assertions)]
fn symmetry_drift(m: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in i + 1..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Initializes from the first chunk: G = (H₀ᵀH₀)⁻¹ and β = G H₀ᵀ T₀.
///
/// `stabilizer` optionally adds εI to the Gram matrix before inversion for
/// rank-deficient init chunks; pass `None` for the plain form, which fails
/// on singular input.
pub fn oselm_init(
    h0: &DMatrix<f64>,
    t0: &DMatrix<f64>,
    stabilizer: Option<f64>,
) -> Result<OselmState> {
    if h0.nrows() != t0.nrows() {
        return Err(CoreError::DimensionMismatch {
            expected: format!("{} target rows", h0.nrows()),
            got: format!("{}", t0.nrows()),
        });
    }
    let nh = h0.ncols();
    let mut gram = h0.tr_mul(h0);
    if let Some(eps) = stabilizer {
        for i in 0..nh {
            gram[(i, i)] += eps;
        }
    }
    let chol = gram
        .cholesky()
        .ok_or_else(|| CoreError::SingularMatrix("H0tH0 (enable the stabilizer?)".into()))?;
    let mut g = chol.inverse();
    symmetrize(&mut g);
    let beta = &g * h0.tr_mul(t0);
    if !beta.iter().all(|v| v.is_finite()) {
        return Err(CoreError::NonFinite("initial beta".into()));
    }
    Ok(OselmState { g, beta, n_seen: h0.nrows() })
}

/// Folds one chunk (ΔN ≥ 1 rows) into the state:
///
///   G₁ = G₀ − G₀HΔᵀ(I + HΔG₀HΔᵀ)⁻¹HΔG₀
///   β₁ = β₀ + G₁HΔᵀ(TΔ − HΔβ₀)
pub fn oselm_update(state: &mut OselmState, hd: &DMatrix<f64>, td: &DMatrix<f64>) -> Result<()> {
    let nh = state.g.nrows();
    if hd.ncols() != nh {
        return Err(CoreError::DimensionMismatch {
            expected: format!("{nh} hidden columns"),
            got: format!("{}", hd.ncols()),
        });
    }
    if hd.nrows() != td.nrows() {
        return Err(CoreError::DimensionMismatch {
            expected: format!("{} target rows", hd.nrows()),
            got: format!("{}", td.nrows()),
        });
    }
    let dn = hd.nrows();
    let m = hd * &state.g; // ΔN x Ñ
    let mut s = &m * hd.transpose(); // ΔN x ΔN
    for i in 0..dn {
        s[(i, i)] += 1.0;
    }
    let chol = s
        .cholesky()
        .ok_or_else(|| CoreError::SingularMatrix("I + Hd G Hdt".into()))?;
    let x = chol.solve(&m);
    let mut g1 = &state.g - m.tr_mul(&x);
    if !g1.iter().all(|v| v.is_finite()) {
        return Err(CoreError::NonFinite("updated G (ill-conditioned stream)".into()));
    }
    #[cfg(debug_assertions)]
    {
        let scale = 1.0 + g1.amax();
        debug_assert!(
            symmetry_drift(&g1) <= 1e-10 * scale,
            "G symmetry drift beyond bound"
        );
    }
    symmetrize(&mut g1);
    let innovation = td - hd * &state.beta;
    state.beta += &g1 * hd.tr_mul(&innovation);
    if !state.beta.iter().all(|v| v.is_finite()) {
        return Err(CoreError::NonFinite("updated beta".into()));
    }
    state.g = g1;
    state.n_seen += dn;
    Ok(())
}
