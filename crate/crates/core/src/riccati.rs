//! Generalized Riccati equations, the affine transform and the invariant-law transform.
//!
//! `ψ_J(t,u) = e^{tβ_JJᵀ} u_J` is used in closed form; only `ψ_I` and `φ` are
//! integrated, as `2m + 2` real components.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::levy::{check_in_u, exponent_f_unchecked, exponent_r_unchecked};
use crate::linalg::{convolution_integral, double_convolution_integral, drift_integral, expm};
use crate::ode::{self, OdeOptions};
use crate::params::{AdmissibleParameters, StateDims};

/// Default absolute tolerance of the Riccati solver.
pub const DEFAULT_TOL: f64 = 1e-9;
/// Output grid points per unit of time in [`solve_riccati`].
const GRID_DENSITY: f64 = 20.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RiccatiSolution {
    pub u: Vec<Complex64>,
    pub grid: Vec<f64>,
    pub phi: Vec<Complex64>,
    pub psi: Vec<Vec<Complex64>>,
}

impl RiccatiSolution {
    /// `exp(φ(t_k) + ⟨x, ψ(t_k)⟩)` at grid index `k`.
    pub fn transform(&self, x: &[f64], k: usize) -> Complex64 {
        let inner: Complex64 = self.psi[k].iter().zip(x).map(|(p, xi)| p * *xi).sum();
        (self.phi[k] + inner).exp()
    }

    pub fn last_phi(&self) -> Complex64 {
        *self.phi.last().expect("grid is never empty")
    }

    pub fn last_psi(&self) -> &[Complex64] {
        self.psi.last().expect("grid is never empty")
    }

    /// Columns `t, re_phi, im_phi, re_psi_k, im_psi_k, ...`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let d = self.u.len();
        let mut header = vec!["t".to_string(), "re_phi".into(), "im_phi".into()];
        for k in 0..d {
            header.push(format!("re_psi_{k}"));
            header.push(format!("im_psi_{k}"));
        }
        wr.write_record(&header)?;
        for (k, t) in self.grid.iter().enumerate() {
            let mut row = vec![t.to_string(), self.phi[k].re.to_string(), self.phi[k].im.to_string()];
            for p in &self.psi[k] {
                row.push(p.re.to_string());
                row.push(p.im.to_string());
            }
            wr.write_record(&row)?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Closed-form `ψ_J(t) = e^{tβ_JJᵀ} u_J`.
struct PsiJ {
    beta_jj_t: DMatrix<f64>,
    re: DVector<f64>,
    im: DVector<f64>,
}

impl PsiJ {
    fn new(p: &AdmissibleParameters, u: &[Complex64]) -> Self {
        let StateDims { m, n } = p.dims;
        let beta_jj_t = p.beta.view((m, m), (n, n)).transpose();
        Self {
            beta_jj_t,
            re: DVector::from_iterator(n, u[m..].iter().map(|z| z.re)),
            im: DVector::from_iterator(n, u[m..].iter().map(|z| z.im)),
        }
    }

    fn at(&self, t: f64, out: &mut [Complex64]) {
        if out.is_empty() {
            return;
        }
        let e = expm(&self.beta_jj_t, t);
        let re = &e * &self.re;
        let im = &e * &self.im;
        for (k, o) in out.iter_mut().enumerate() {
            *o = Complex64::new(re[k], im[k]);
        }
    }
}

/// Fault threshold for `Re ψ_I > 0` at output times.
fn domain_fault(z: Complex64) -> bool {
    z.re > 1e-8 * (1.0 + z.norm())
}

/// Solves on an explicit increasing grid starting at 0.
pub fn solve_riccati_on(
    p: &AdmissibleParameters,
    u: &[Complex64],
    grid: &[f64],
    tol: f64,
) -> Result<RiccatiSolution> {
    check_in_u(p.dims, u)?;
    if grid.is_empty() || grid[0] != 0.0 {
        return Err(Error::Precondition("grid must start at t = 0".into()));
    }
    let m = p.dims.m;
    let d = p.dims.d();
    let psi_j = PsiJ::new(p, u);
    let mut y0 = vec![0.0; 2 * m + 2];
    for i in 0..m {
        y0[i] = u[i].re;
        y0[m + i] = u[i].im;
    }
    let mut w = u.to_vec();
    let rhs = |t: f64, y: &[f64], dy: &mut [f64]| -> Result<()> {
        for i in 0..m {
            w[i] = Complex64::new(y[i], y[m + i]);
        }
        psi_j.at(t, &mut w[m..]);
        for i in 0..m {
            let r = exponent_r_unchecked(p, i, &w)?;
            dy[i] = r.re;
            dy[m + i] = r.im;
        }
        let f = exponent_f_unchecked(p, &w)?;
        dy[2 * m] = f.re;
        dy[2 * m + 1] = f.im;
        if dy.iter().any(|v| !v.is_finite()) {
            return Err(Error::Riccati {
                time: t,
                reason: "non-finite right-hand side".into(),
            });
        }
        Ok(())
    };
    let opts = OdeOptions {
        abs_tol: tol,
        rel_tol: 10.0 * tol,
        ..Default::default()
    };
    let states = ode::integrate(rhs, &y0, grid, opts)?;
    let mut phi = Vec::with_capacity(grid.len());
    let mut psi = Vec::with_capacity(grid.len());
    for (t, y) in grid.iter().zip(&states) {
        let mut v = vec![Complex64::new(0.0, 0.0); d];
        for i in 0..m {
            v[i] = Complex64::new(y[i], y[m + i]);
            if domain_fault(v[i]) {
                return Err(Error::Riccati {
                    time: *t,
                    reason: format!("Re ψ_{i} = {} left U", v[i].re),
                });
            }
        }
        psi_j.at(*t, &mut v[m..]);
        phi.push(Complex64::new(y[2 * m], y[2 * m + 1]));
        psi.push(v);
    }
    // exact initial conditions
    phi[0] = Complex64::new(0.0, 0.0);
    psi[0] = u.to_vec();
    Ok(RiccatiSolution {
        u: u.to_vec(),
        grid: grid.to_vec(),
        phi,
        psi,
    })
}

/// Solves on `[0, T]` with a uniform output grid.
pub fn solve_riccati(
    p: &AdmissibleParameters,
    u: &[Complex64],
    horizon: f64,
    tol: f64,
) -> Result<RiccatiSolution> {
    if !(horizon > 0.0) {
        return Err(Error::Precondition(format!("horizon must be positive, got {horizon}")));
    }
    let k = ((horizon * GRID_DENSITY).ceil() as usize).clamp(10, 100_000);
    let grid: Vec<f64> = (0..=k).map(|j| horizon * j as f64 / k as f64).collect();
    solve_riccati_on(p, u, &grid, tol)
}

/// `E e^{⟨u, X_t⟩} = exp(φ(t,u) + ⟨x, ψ(t,u)⟩)` under `X_0 = x`.
pub fn laplace_transform(
    p: &AdmissibleParameters,
    x: &[f64],
    u: &[Complex64],
    t: f64,
    tol: f64,
) -> Result<Complex64> {
    if x.len() != p.dims.d() {
        return Err(Error::Dimension(format!("x has length {}, expected {}", x.len(), p.dims.d())));
    }
    if t == 0.0 {
        check_in_u(p.dims, u)?;
        let s: Complex64 = u.iter().zip(x).map(|(a, b)| a * *b).sum();
        return Ok(s.exp());
    }
    let sol = solve_riccati_on(p, u, &[0.0, t], tol)?;
    Ok(sol.transform(x, 1))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvariantTransform {
    pub value: Complex64,
    /// Truncation time `T*`.
    pub horizon: f64,
    pub psi_norm_at_horizon: f64,
    /// Bound on `|∫_{T*}^∞ F(ψ) dt|` from a fitted envelope `|F(ψ)| ≤ L|ψ|^p`.
    pub tail_bound: f64,
    pub lipschitz: f64,
    pub exponent: f64,
}

/// `exp(∫_0^∞ F(ψ(t,u)) dt)` with a truncation certificate.
pub fn invariant_transform(
    p: &AdmissibleParameters,
    u: &[Complex64],
    tail_tol: f64,
    tol: f64,
) -> Result<InvariantTransform> {
    check_in_u(p.dims, u)?;
    let margin = p.subcriticality_margin();
    if !(margin > 0.0) {
        return Err(Error::Precondition(format!(
            "β is not subcritical (margin {margin})"
        )));
    }
    if !p.nu.log_moment().is_finite() {
        return Err(Error::Precondition("ν lacks a finite log-moment".into()));
    }
    if u.iter().all(|z| z.norm() == 0.0) {
        return Ok(InvariantTransform {
            value: Complex64::new(1.0, 0.0),
            horizon: 0.0,
            psi_norm_at_horizon: 0.0,
            tail_bound: 0.0,
            lipschitz: 0.0,
            exponent: 1.0,
        });
    }
    let cap = 200.0 / margin;
    let mut horizon = 10.0 / margin;
    // Output at every doubling so one integration serves all candidate horizons.
    let mut grid = vec![0.0];
    while horizon < cap {
        grid.push(horizon);
        horizon *= 2.0;
    }
    grid.push(cap);
    let sol = solve_riccati_on(p, u, &grid, tol)?;
    let norm = |v: &[Complex64]| v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let k = (1..grid.len())
        .find(|&k| norm(&sol.psi[k]) < tail_tol)
        .unwrap_or(grid.len() - 1);
    let psi_t = &sol.psi[k];
    let r = norm(psi_t);
    let (lipschitz, exponent) = envelope(p, psi_t)?;
    let tail_bound = if r == 0.0 {
        0.0
    } else {
        lipschitz * r.powf(exponent) / (exponent * margin)
    };
    Ok(InvariantTransform {
        value: sol.phi[k].exp(),
        horizon: grid[k],
        psi_norm_at_horizon: r,
        tail_bound,
        lipschitz,
        exponent,
    })
}

/// Fits `|F(sψ)| ≤ L|sψ|^p` for `s ∈ {1, 10⁻¹, 10⁻², 10⁻³}`.
fn envelope(p: &AdmissibleParameters, psi: &[Complex64]) -> Result<(f64, f64)> {
    let norm = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Ok((0.0, 1.0));
    }
    let scales = [1.0, 1e-1, 1e-2, 1e-3];
    let mut vals = Vec::with_capacity(scales.len());
    for s in scales {
        let v: Vec<Complex64> = psi.iter().map(|z| z * s).collect();
        vals.push(exponent_f_unchecked(p, &v)?.norm());
    }
    let expo = if vals[0] > 0.0 && vals[1] > 0.0 {
        (vals[0] / vals[1]).log10().clamp(0.05, 1.0)
    } else {
        1.0
    };
    let lip = scales
        .iter()
        .zip(&vals)
        .map(|(s, v)| v / (s * norm).powf(expo))
        .fold(0.0, f64::max);
    // safety factor for the unsampled part of the ball
    Ok((2.0 * lip, expo))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeanFormula {
    /// `e^{tβ}x + ∫_0^t e^{sβ} b̄ ds`.
    pub full: DVector<f64>,
    /// Block computation of `E Y_t`.
    pub y: DVector<f64>,
    /// Block computation of `E Z_t`.
    pub z: DVector<f64>,
}

impl MeanFormula {
    pub fn block(&self) -> DVector<f64> {
        let mut v = DVector::zeros(self.y.len() + self.z.len());
        v.rows_mut(0, self.y.len()).copy_from(&self.y);
        v.rows_mut(self.y.len(), self.z.len()).copy_from(&self.z);
        v
    }
}

/// First moment of `X_t` started at `x`, computed both in full and blockwise.
pub fn mean_formula(p: &AdmissibleParameters, x: &[f64], t: f64) -> Result<MeanFormula> {
    let StateDims { m, n } = p.dims;
    let d = p.dims.d();
    if x.len() != d {
        return Err(Error::Dimension(format!("x has length {}, expected {d}", x.len())));
    }
    if !(t >= 0.0) {
        return Err(Error::Precondition(format!("t must be nonnegative, got {t}")));
    }
    let bbar = p.b_bar()?;
    let xv = DVector::from_column_slice(x);
    let full = expm(&p.beta, t) * &xv + drift_integral(&p.beta, &bbar, t);

    let b_ii = p.beta.view((0, 0), (m, m)).into_owned();
    let b_ji = p.beta.view((m, 0), (n, m)).into_owned();
    let b_jj = p.beta.view((m, m), (n, n)).into_owned();
    let y0 = xv.rows(0, m).into_owned();
    let z0 = xv.rows(m, n).into_owned();
    let bb_i = bbar.rows(0, m).into_owned();
    let bb_j = bbar.rows(m, n).into_owned();
    let y = expm(&b_ii, t) * &y0 + drift_integral(&b_ii, &bb_i, t);
    let z = expm(&b_jj, t) * &z0
        + drift_integral(&b_jj, &bb_j, t)
        + convolution_integral(&b_jj, &b_ji, &b_ii, t) * &y0
        + double_convolution_integral(&b_jj, &b_ji, &b_ii, &bb_i, t);
    Ok(MeanFormula { full, y, z })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy::{exponent_f, LevyMeasureSpec};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn cir(alpha: f64, b: f64, beta: f64) -> AdmissibleParameters {
        let mut p = AdmissibleParameters::zero(StateDims::new(1, 0).unwrap());
        p.alpha[0][(0, 0)] = alpha;
        p.b[0] = b;
        p.beta[(0, 0)] = beta;
        p
    }

    fn cir_psi(u: f64, alpha: f64, beta: f64, t: f64) -> f64 {
        let e = (beta * t).exp();
        u * e / (1.0 - (u * alpha / beta) * (e - 1.0))
    }

    #[test]
    fn zero_argument_is_fixed_point() {
        let p = cir(0.5, 1.0, -1.0);
        let s = solve_riccati(&p, &[c(0.0, 0.0)], 5.0, DEFAULT_TOL).unwrap();
        assert!(s.phi.iter().all(|z| z.norm() == 0.0));
        assert!(s.psi.iter().all(|v| v[0].norm() == 0.0));
    }

    #[test]
    fn cir_closed_form() {
        let (al, be) = (0.5, -1.0);
        let p = cir(al, 1.0, be);
        for u in [-0.1, -1.0, -10.0] {
            let s = solve_riccati(&p, &[c(u, 0.0)], 10.0, DEFAULT_TOL).unwrap();
            for (t, psi) in s.grid.iter().zip(&s.psi) {
                let want = cir_psi(u, al, be, *t);
                assert!((psi[0].re - want).abs() < 1e-7, "u={u} t={t}");
            }
        }
    }

    #[test]
    fn ou_psi_closed_form() {
        let mut p = AdmissibleParameters::zero(StateDims::new(0, 2).unwrap());
        p.a = DMatrix::identity(2, 2) * 0.5;
        p.beta = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.5, -1.0]);
        let u = [c(0.0, 1.0), c(0.0, -0.5)];
        let s = solve_riccati(&p, &u, 3.0, DEFAULT_TOL).unwrap();
        let t = 3.0;
        let e = expm(&p.beta.transpose(), t);
        for k in 0..2 {
            let want = e[(k, 0)] * u[0].im + e[(k, 1)] * u[1].im;
            assert!((s.last_psi()[k].im - want).abs() < 1e-13);
        }
        // φ = ∫ ⟨ψ, a ψ⟩ ds checked by quadrature
        let q = crate::quad::integrate(
            |s| {
                let e = expm(&p.beta.transpose(), s);
                let v0 = e[(0, 0)] * u[0].im + e[(0, 1)] * u[1].im;
                let v1 = e[(1, 0)] * u[0].im + e[(1, 1)] * u[1].im;
                -0.5 * (v0 * v0 + v1 * v1)
            },
            0.0,
            t,
            Default::default(),
        );
        assert!((s.last_phi().re - q.value).abs() < 1e-8);
    }

    #[test]
    fn deterministic_transform() {
        let mut p = AdmissibleParameters::zero(StateDims::new(1, 1).unwrap());
        p.b = DVector::from_vec(vec![0.5, 0.2]);
        p.beta = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.3, -0.5]);
        let x = [1.0, -1.0];
        let u = [c(-0.7, 0.4), c(0.0, 1.1)];
        let t = 1.5;
        let got = laplace_transform(&p, &x, &u, t, 1e-11).unwrap();
        let flow = expm(&p.beta, t) * DVector::from_column_slice(&x) + drift_integral(&p.beta, &p.b, t);
        let want = (u[0] * flow[0] + u[1] * flow[1]).exp();
        assert!((got - want).norm() < 1e-8, "{got} vs {want}");
        // t = 0
        let z = laplace_transform(&p, &x, &u, 0.0, 1e-9).unwrap();
        assert!((z - (u[0] * x[0] + u[1] * x[1]).exp()).norm() < 1e-15);
    }

    #[test]
    fn cir_invariant_is_gamma() {
        let (al, b, be) = (0.5, 1.0, -1.0);
        let p = cir(al, b, be);
        for u in [-0.3, -1.0, -4.0] {
            let inv = invariant_transform(&p, &[c(u, 0.0)], 1e-10, 1e-10).unwrap();
            let want = (1.0 - al * u / be.abs()).powf(-b / al);
            assert!((inv.value.re - want).abs() < 1e-7, "u={u}: {} vs {want}", inv.value);
            assert!(inv.tail_bound < 1e-8);
        }
        assert_eq!(invariant_transform(&p, &[c(0.0, 0.0)], 1e-10, 1e-9).unwrap().value, c(1.0, 0.0));
    }

    #[test]
    fn ou_invariant_is_gaussian() {
        // dZ = (b + βZ) dt + √2 σ dB, a = σσᵀ; stationary covariance Σ solves βΣ + Σβᵀ + 2a = 0
        let mut p = AdmissibleParameters::zero(StateDims::new(0, 1).unwrap());
        p.a[(0, 0)] = 0.5;
        p.b[0] = 1.0;
        p.beta[(0, 0)] = -2.0;
        let mean = 0.5;
        let var = 2.0 * 0.5 / 4.0;
        for w in [0.3, 1.0, 2.5] {
            let inv = invariant_transform(&p, &[c(0.0, w)], 1e-12, 1e-11).unwrap();
            let want = (c(0.0, w * mean) - 0.5 * var * w * w).exp();
            assert!((inv.value - want).norm() < 1e-8, "w={w}");
        }
    }

    #[test]
    fn non_subcritical_is_precondition_error() {
        let p = cir(0.5, 1.0, 0.0);
        assert!(matches!(
            invariant_transform(&p, &[c(-1.0, 0.0)], 1e-10, 1e-9),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn infinite_mean_nu_invariant_transform_has_tail_certificate() {
        let mut p = cir(0.5, 0.2, -1.0);
        p.nu = LevyMeasureSpec::stable(0, 0.6, 0.3);
        let inv = invariant_transform(&p, &[c(-1.0, 0.0)], 1e-12, 1e-10).unwrap();
        assert!(inv.value.re > 0.0 && inv.value.re < 1.0);
        assert!(inv.exponent < 1.0 && inv.exponent > 0.4, "{}", inv.exponent);
        assert!(inv.tail_bound < 1e-5, "{inv:?}");
        assert!(exponent_f(&p, &[c(-1.0, 0.0)]).unwrap().re < 0.0);
    }

    #[test]
    fn mean_formula_blocks_agree() {
        let mut p = AdmissibleParameters::zero(StateDims::new(2, 2).unwrap());
        p.b = DVector::from_vec(vec![0.5, 0.3, 1.0, -1.0]);
        p.beta = DMatrix::from_row_slice(
            4,
            4,
            &[-1.0, 0.2, 0.0, 0.0, 0.1, -0.8, 0.0, 0.0, 0.5, -0.4, -1.0, 0.3, 0.2, 0.1, -0.2, -0.7],
        );
        p.nu = LevyMeasureSpec::atoms(vec![(vec![0.5, 0.0, 1.0, -2.0], 0.7)]);
        let x = [1.0, 2.0, -1.0, 0.5];
        for t in [0.0, 0.3, 1.0, 4.0] {
            let mf = mean_formula(&p, &x, t).unwrap();
            assert!((mf.full.clone() - mf.block()).amax() < 1e-9, "t={t}");
        }
        let mf = mean_formula(&p, &x, 0.0).unwrap();
        assert!((mf.full - DVector::from_column_slice(&x)).amax() < 1e-15);
    }

    #[test]
    fn mean_formula_rejects_infinite_mean() {
        let mut p = cir(0.5, 1.0, -1.0);
        p.nu = LevyMeasureSpec::stable(0, 0.6, 1.0);
        assert!(matches!(mean_formula(&p, &[1.0], 1.0), Err(Error::Precondition(_))));
    }

    #[test]
    fn csv_layout() {
        let p = cir(0.5, 1.0, -1.0);
        let s = solve_riccati(&p, &[c(-1.0, 0.0)], 1.0, DEFAULT_TOL).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,re_phi,im_phi,re_psi_0,im_psi_0\n"));
        assert_eq!(text.lines().count(), s.grid.len() + 1);
    }
}
