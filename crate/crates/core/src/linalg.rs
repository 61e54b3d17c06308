//! Dense matrix utilities: PSD square roots, the block-triangular diffusion
//! factors used by the stochastic equation, matrix exponentials and the
//! exponential integrals behind the first-moment formulas.
//!
//! # Construction of the branching factors
//!
//! For `j ∈ I` the factor `σ_j` must satisfy `σ_j σ_jᵀ = α_j` with
//!
//! ```text
//! σ_j = [ σ_II   0    ]      (σ_II)_kl = δ_kj δ_lj √α_jj
//!       [ σ_JI  σ_JJ  ]
//! ```
//!
//! Multiplying out, the `JI` block of `σ_j σ_jᵀ` is `σ_JI σ_IIᵀ`, whose only
//! non-zero column is `j`, equal to `√α_jj · σ_JI[:, j]`. Matching `α_j` forces
//! `σ_JI[:, j] = α_J,j / √α_jj` (other columns may be taken zero, and must be
//! when `α_jj = 0`). The `JJ` block then requires
//! `σ_JJ σ_JJᵀ = α_JJ − σ_JI σ_JIᵀ`, the Schur complement of `α_jj` in `α_j`,
//! which is PSD exactly when `α_j` is; we take its symmetric PSD root.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::params::StateDims;

const SYMMETRY_TOL: f64 = 1e-12;

fn check_square(a: &DMatrix<f64>, what: &str) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::Dimension(format!(
            "{what} must be square, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    Ok(())
}

fn check_symmetric(a: &DMatrix<f64>, what: &str) -> Result<()> {
    check_square(a, what)?;
    let scale = 1.0 + a.amax();
    for i in 0..a.nrows() {
        for j in 0..i {
            if (a[(i, j)] - a[(j, i)]).abs() > SYMMETRY_TOL * scale {
                return Err(Error::Dimension(format!(
                    "{what} is not symmetric at ({i},{j})"
                )));
            }
        }
    }
    Ok(())
}

/// Symmetric PSD square root by eigendecomposition, clamping negative
/// eigenvalues (round-off) at zero.
pub fn sym_sqrt(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_symmetric(a, "matrix")?;
    let n = a.nrows();
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let sym = (a + a.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let q = &eig.eigenvectors;
    let s = q * DMatrix::from_diagonal(&roots) * q.transpose();
    Ok((&s + s.transpose()) * 0.5)
}

/// `σ_a` with `σ_a σ_aᵀ = a_JJ`.
pub fn factor_a(a_jj: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    sym_sqrt(a_jj)
}

/// Block-triangular `σ_j` with `σ_j σ_jᵀ = α_j`; see the module docs.
pub fn factor_alpha(alpha_j: &DMatrix<f64>, j: usize, dims: StateDims) -> Result<DMatrix<f64>> {
    let d = dims.d();
    let m = dims.m;
    if alpha_j.nrows() != d || alpha_j.ncols() != d {
        return Err(Error::Dimension(format!(
            "alpha_{j} must be {d}x{d}, got {}x{}",
            alpha_j.nrows(),
            alpha_j.ncols()
        )));
    }
    if j >= m {
        return Err(Error::Dimension(format!("index {j} is not in I (m = {m})")));
    }
    check_symmetric(alpha_j, "alpha")?;
    let scale = 1.0 + alpha_j.amax();
    for k in 0..m {
        for l in 0..d {
            if (k != j && alpha_j[(k, l)].abs() > SYMMETRY_TOL * scale)
                || (k != j && alpha_j[(l, k)].abs() > SYMMETRY_TOL * scale)
            {
                return Err(Error::Admissibility(format!(
                    "alpha_{j} has non-zero entry in row/column {k} of I\\{{{j}}}"
                )));
            }
        }
    }
    let ajj = alpha_j[(j, j)];
    if ajj < -1e-10 * scale {
        return Err(Error::Admissibility(format!(
            "alpha_{j} has negative diagonal entry {ajj}"
        )));
    }
    let n = dims.n;
    let mut sigma = DMatrix::zeros(d, d);
    let mut col = DVector::zeros(n);
    if ajj > 0.0 {
        let root = ajj.sqrt();
        sigma[(j, j)] = root;
        for r in 0..n {
            col[r] = alpha_j[(m + r, j)] / root;
        }
    } else if (0..n).any(|r| alpha_j[(m + r, j)].abs() > SYMMETRY_TOL * scale) {
        return Err(Error::Admissibility(format!(
            "alpha_{j} is not PSD: alpha_jj = 0 but column {j} has non-zero J entries"
        )));
    }
    let ajj_block = alpha_j.view((m, m), (n, n)).into_owned();
    let schur = ajj_block - &col * col.transpose();
    let schur = (&schur + schur.transpose()) * 0.5;
    let root = sym_sqrt(&schur)?;
    for r in 0..n {
        sigma[(m + r, j)] = col[r];
        for c in 0..n {
            sigma[(m + r, m + c)] = root[(r, c)];
        }
    }
    Ok(sigma)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionFactors {
    /// `n×n`, `σ_a σ_aᵀ = a_JJ`.
    pub sigma_a: DMatrix<f64>,
    /// One `d×d` factor per `i ∈ I`.
    pub sigma: Vec<DMatrix<f64>>,
}

impl DiffusionFactors {
    pub fn new(
        dims: StateDims,
        a: &DMatrix<f64>,
        alpha: &[DMatrix<f64>],
    ) -> Result<Self> {
        let m = dims.m;
        let n = dims.n;
        let a_jj = a.view((m, m), (n, n)).into_owned();
        let sigma_a = factor_a(&a_jj)?;
        let sigma = alpha
            .iter()
            .enumerate()
            .map(|(j, al)| factor_alpha(al, j, dims))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { sigma_a, sigma })
    }
}

// Padé(13) coefficients for scaling and squaring.
const PADE13: [f64; 14] = [
    64_764_752_532_480_000.0,
    32_382_376_266_240_000.0,
    7_771_770_303_897_600.0,
    1_187_353_796_428_800.0,
    129_060_195_264_000.0,
    10_559_470_521_600.0,
    670_442_572_800.0,
    33_522_128_640.0,
    1_323_241_920.0,
    40_840_800.0,
    960_960.0,
    16_380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371_920_351_148_152;

fn norm1(a: &DMatrix<f64>) -> f64 {
    (0..a.ncols())
        .map(|j| a.column(j).iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `e^{tA}` by scaling and squaring with the degree-13 Padé approximant.
pub fn expm(a: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "expm needs a square matrix");
    let ident = DMatrix::<f64>::identity(n, n);
    if n == 0 {
        return ident;
    }
    let at = a * t;
    let norm = norm1(&at);
    if norm == 0.0 {
        return ident;
    }
    let s = if norm > THETA13 {
        (norm / THETA13).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    let scaled = at * 2f64.powi(-s);
    let b = &PADE13;
    let a2 = &scaled * &scaled;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let u_inner = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9])
        + &a6 * b[7]
        + &a4 * b[5]
        + &a2 * b[3]
        + &ident * b[1];
    let u = &scaled * u_inner;
    let v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8])
        + &a6 * b[6]
        + &a4 * b[4]
        + &a2 * b[2]
        + &ident * b[0];
    let p = &v + &u;
    let q = &v - &u;
    let mut r = q
        .lu()
        .solve(&p)
        .expect("Padé denominator is nonsingular after scaling");
    for _ in 0..s {
        r = &r * &r;
    }
    r
}

/// `∫_0^t e^{sA} v ds` from the exponential of the augmented matrix `[[A, v], [0, 0]]`.
pub fn drift_integral(a: &DMatrix<f64>, v: &DVector<f64>, t: f64) -> DVector<f64> {
    let d = a.nrows();
    let mut aug = DMatrix::zeros(d + 1, d + 1);
    aug.view_mut((0, 0), (d, d)).copy_from(a);
    aug.view_mut((0, d), (d, 1)).copy_from(v);
    let e = expm(&aug, t);
    e.view((0, d), (d, 1)).column(0).into_owned()
}

/// `∫_0^t e^{(t-s)A} B e^{sC} ds` via the Van Loan block exponential.
pub fn convolution_integral(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    t: f64,
) -> DMatrix<f64> {
    let p = a.nrows();
    let q = c.nrows();
    let mut blk = DMatrix::zeros(p + q, p + q);
    blk.view_mut((0, 0), (p, p)).copy_from(a);
    blk.view_mut((0, p), (p, q)).copy_from(b);
    blk.view_mut((p, p), (q, q)).copy_from(c);
    let e = expm(&blk, t);
    e.view((0, p), (p, q)).into_owned()
}

/// `∫_0^t ∫_0^s e^{(t-s)A} B e^{uC} v du ds` via a three-block Van Loan exponential.
pub fn double_convolution_integral(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    v: &DVector<f64>,
    t: f64,
) -> DVector<f64> {
    let p = a.nrows();
    let q = c.nrows();
    let size = p + q + 1;
    let mut blk = DMatrix::zeros(size, size);
    blk.view_mut((0, 0), (p, p)).copy_from(a);
    blk.view_mut((0, p), (p, q)).copy_from(b);
    blk.view_mut((p, p), (q, q)).copy_from(c);
    blk.view_mut((p, p + q), (q, 1)).copy_from(v);
    let e = expm(&blk, t);
    e.view((0, p + q), (p, 1)).column(0).into_owned()
}

/// Largest real part among the eigenvalues of a square matrix.
pub fn spectral_abscissa(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 {
        return f64::NEG_INFINITY;
    }
    a.clone()
        .complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max)
}
