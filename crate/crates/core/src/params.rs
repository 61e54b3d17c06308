//! Parameter tuples `(a, α, b, β, ν, μ)` and their admissibility check.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::levy::{Band, LevyMeasureSpec};
use crate::linalg::{spectral_abscissa, DiffusionFactors};

/// Eigenvalue floor for PSD tests, relative to `1 + trace`.
const PSD_FLOOR: f64 = 1e-10;
/// Absolute tolerance for "exactly zero" structural entries and sign checks.
const ZERO_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateDims {
    pub m: usize,
    pub n: usize,
}

impl StateDims {
    pub fn new(m: usize, n: usize) -> Result<Self> {
        if m + n == 0 {
            return Err(Error::Dimension("state dimension m + n must be positive".into()));
        }
        Ok(Self { m, n })
    }

    pub fn d(&self) -> usize {
        self.m + self.n
    }

    /// Indices of the nonnegative block.
    pub fn i_range(&self) -> std::ops::Range<usize> {
        0..self.m
    }

    /// Indices of the real block.
    pub fn j_range(&self) -> std::ops::Range<usize> {
        self.m..self.d()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.d() && x[..self.m].iter().all(|&v| v >= 0.0) && x.iter().all(|v| v.is_finite())
    }
}

/// Sub-conditions of admissibility.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Condition {
    I,
    II,
    III,
    IV,
    V,
    VI,
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Condition::I => "(i)",
            Condition::II => "(ii)",
            Condition::III => "(iii)",
            Condition::IV => "(iv)",
            Condition::V => "(v)",
            Condition::VI => "(vi)",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub condition: Condition,
    /// Offending index in `I` for the per-coordinate conditions.
    pub index: Option<usize>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.index {
            Some(i) => write!(f, "{} [i = {i}]: {}", self.condition, self.message),
            None => write!(f, "{}: {}", self.condition, self.message),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_admissible(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn violates(&self, c: Condition) -> bool {
        self.violations.iter().any(|v| v.condition == c)
    }

    fn push(&mut self, condition: Condition, index: Option<usize>, message: impl Into<String>) {
        self.violations.push(Violation {
            condition,
            index,
            message: message.into(),
        });
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParameters", into = "RawParameters")]
pub struct AdmissibleParameters {
    pub dims: StateDims,
    pub a: DMatrix<f64>,
    pub alpha: Vec<DMatrix<f64>>,
    pub b: DVector<f64>,
    pub beta: DMatrix<f64>,
    pub nu: LevyMeasureSpec,
    pub mu: Vec<LevyMeasureSpec>,
}

/// Row-major, defaulted mirror used for config files.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParameters {
    m: usize,
    n: usize,
    #[serde(default)]
    a: Vec<Vec<f64>>,
    #[serde(default)]
    alpha: Vec<Vec<Vec<f64>>>,
    #[serde(default)]
    b: Vec<f64>,
    #[serde(default)]
    beta: Vec<Vec<f64>>,
    #[serde(default)]
    nu: LevyMeasureSpec,
    #[serde(default)]
    mu: Vec<LevyMeasureSpec>,
}

fn matrix_from_rows(rows: &[Vec<f64>], d: usize, what: &str) -> Result<DMatrix<f64>> {
    if rows.is_empty() {
        return Ok(DMatrix::zeros(d, d));
    }
    if rows.len() != d || rows.iter().any(|r| r.len() != d) {
        return Err(Error::Dimension(format!("{what} must be {d}x{d}")));
    }
    Ok(DMatrix::from_fn(d, d, |i, j| rows[i][j]))
}

fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

impl TryFrom<RawParameters> for AdmissibleParameters {
    type Error = Error;

    fn try_from(raw: RawParameters) -> Result<Self> {
        let dims = StateDims::new(raw.m, raw.n)?;
        let d = dims.d();
        let a = matrix_from_rows(&raw.a, d, "a")?;
        let beta = matrix_from_rows(&raw.beta, d, "beta")?;
        let alpha = if raw.alpha.is_empty() {
            vec![DMatrix::zeros(d, d); dims.m]
        } else {
            raw.alpha
                .iter()
                .enumerate()
                .map(|(i, r)| matrix_from_rows(r, d, &format!("alpha[{i}]")))
                .collect::<Result<_>>()?
        };
        let b = if raw.b.is_empty() {
            DVector::zeros(d)
        } else {
            DVector::from_vec(raw.b)
        };
        let mu = if raw.mu.is_empty() {
            vec![LevyMeasureSpec::zero(); dims.m]
        } else {
            raw.mu
        };
        let p = Self {
            dims,
            a,
            alpha,
            b,
            beta,
            nu: raw.nu,
            mu,
        };
        p.check_shapes()?;
        Ok(p)
    }
}

impl From<AdmissibleParameters> for RawParameters {
    fn from(p: AdmissibleParameters) -> Self {
        Self {
            m: p.dims.m,
            n: p.dims.n,
            a: matrix_to_rows(&p.a),
            alpha: p.alpha.iter().map(matrix_to_rows).collect(),
            b: p.b.iter().copied().collect(),
            beta: matrix_to_rows(&p.beta),
            nu: p.nu,
            mu: p.mu,
        }
    }
}

fn min_eigenvalue(s: &DMatrix<f64>) -> f64 {
    if s.nrows() == 0 {
        return 0.0;
    }
    s.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

fn psd_defect(s: &DMatrix<f64>) -> Option<String> {
    let asym = (s - s.transpose()).amax();
    if asym > ZERO_TOL * (1.0 + s.amax()) {
        return Some(format!("not symmetric (max asymmetry {asym:.3e})"));
    }
    let floor = -PSD_FLOOR * (1.0 + s.trace().abs());
    let lmin = min_eigenvalue(s);
    (lmin < floor).then(|| format!("not positive semidefinite (smallest eigenvalue {lmin:.6e})"))
}

impl AdmissibleParameters {
    /// All-zero parameters of the given shape.
    pub fn zero(dims: StateDims) -> Self {
        let d = dims.d();
        Self {
            dims,
            a: DMatrix::zeros(d, d),
            alpha: vec![DMatrix::zeros(d, d); dims.m],
            b: DVector::zeros(d),
            beta: DMatrix::zeros(d, d),
            nu: LevyMeasureSpec::zero(),
            mu: vec![LevyMeasureSpec::zero(); dims.m],
        }
    }

    /// Dimension consistency; failures here are structural, not admissibility, errors.
    pub fn check_shapes(&self) -> Result<()> {
        let d = self.dims.d();
        let sq = |m: &DMatrix<f64>, what: &str| {
            if m.nrows() != d || m.ncols() != d {
                Err(Error::Dimension(format!(
                    "{what} is {}x{}, expected {d}x{d}",
                    m.nrows(),
                    m.ncols()
                )))
            } else {
                Ok(())
            }
        };
        sq(&self.a, "a")?;
        sq(&self.beta, "beta")?;
        if self.alpha.len() != self.dims.m {
            return Err(Error::Dimension(format!(
                "expected {} alpha matrices, got {}",
                self.dims.m,
                self.alpha.len()
            )));
        }
        for (i, al) in self.alpha.iter().enumerate() {
            sq(al, &format!("alpha[{i}]"))?;
        }
        if self.b.len() != d {
            return Err(Error::Dimension(format!("b has length {}, expected {d}", self.b.len())));
        }
        if self.mu.len() != self.dims.m {
            return Err(Error::Dimension(format!(
                "expected {} mu measures, got {}",
                self.dims.m,
                self.mu.len()
            )));
        }
        let all_finite = self.a.iter().chain(self.beta.iter()).chain(self.b.iter()).all(|v| v.is_finite())
            && self.alpha.iter().all(|m| m.iter().all(|v| v.is_finite()));
        if !all_finite {
            return Err(Error::Dimension("parameters contain non-finite entries".into()));
        }
        self.nu.check(d)?;
        for mu in &self.mu {
            mu.check(d)?;
        }
        Ok(())
    }

    /// Lists every violated sub-condition; `Err` only for structural problems.
    pub fn validate(&self) -> Result<ValidationReport> {
        self.check_shapes()?;
        let StateDims { m, .. } = self.dims;
        let d = self.dims.d();
        let mut rep = ValidationReport::default();

        // (i)
        if let Some(msg) = psd_defect(&self.a) {
            rep.push(Condition::I, None, format!("a is {msg}"));
        }
        for k in 0..m {
            for l in 0..d {
                if self.a[(k, l)].abs() > ZERO_TOL || self.a[(l, k)].abs() > ZERO_TOL {
                    let block = if l < m { "a_II" } else { "a_IJ / a_JI" };
                    rep.push(Condition::I, None, format!("{block} must vanish, found a[{k},{l}] or a[{l},{k}] nonzero"));
                }
            }
        }

        // (ii)
        for (i, al) in self.alpha.iter().enumerate() {
            if let Some(msg) = psd_defect(al) {
                rep.push(Condition::II, Some(i), format!("alpha_{i} is {msg}"));
            }
            for k in (0..m).filter(|&k| k != i) {
                if (0..d).any(|l| al[(k, l)].abs() > ZERO_TOL || al[(l, k)].abs() > ZERO_TOL) {
                    rep.push(
                        Condition::II,
                        Some(i),
                        format!("alpha_{i} has nonzero entries in row/column {k} ∈ I∖{{{i}}}"),
                    );
                }
            }
        }

        // (iii)
        for k in 0..m {
            if self.b[k] < 0.0 {
                rep.push(Condition::III, Some(k), format!("b_{k} = {} < 0", self.b[k]));
            }
        }

        // (iv)
        for k in 0..m {
            for l in m..d {
                if self.beta[(k, l)].abs() > ZERO_TOL {
                    rep.push(Condition::IV, Some(k), format!("β_IJ = 0 fails: beta[{k},{l}] = {}", self.beta[(k, l)]));
                }
            }
        }
        for i in 0..m {
            for k in (0..m).filter(|&k| k != i) {
                let moment = self.mu[i].coordinate_moment(k, d);
                let eff = self.beta[(k, i)] - moment;
                if !(eff >= -ZERO_TOL) {
                    rep.push(
                        Condition::IV,
                        Some(i),
                        format!("beta[{k},{i}] − ∫ξ_{k} μ_{i} = {eff} < 0"),
                    );
                }
            }
        }

        // (v)
        if self.nu.origin_mass() > 0.0 {
            rep.push(Condition::V, None, "ν charges the origin");
        }
        if self.nu.leaves_domain(m) {
            rep.push(Condition::V, None, "ν charges points outside D");
        }
        let small = self.nu.abs_power_moment(2.0, Band::within(1.0)) + self.nu.tail_mass(1.0);
        if !small.is_finite() {
            rep.push(Condition::V, None, "∫ 1∧|ξ|² dν diverges");
        }
        for k in 0..m {
            if !self.nu.min_one_coordinate(k, d).is_finite() {
                rep.push(Condition::V, Some(k), format!("∫ 1∧ξ_{k} dν diverges"));
            }
        }

        // (vi)
        for (i, mu) in self.mu.iter().enumerate() {
            if mu.origin_mass() > 0.0 {
                rep.push(Condition::VI, Some(i), format!("μ_{i} charges the origin"));
            }
            if mu.leaves_domain(m) {
                rep.push(Condition::VI, Some(i), format!("μ_{i} charges points outside D"));
            }
            let v = mu.abs_power_moment(2.0, Band::within(1.0)) + mu.abs_power_moment(1.0, Band::beyond(1.0));
            if !v.is_finite() {
                rep.push(Condition::VI, Some(i), format!("∫ |ξ|∧|ξ|² dμ_{i} diverges"));
            }
            for k in (0..m).filter(|&k| k != i) {
                if !mu.coordinate_moment(k, d).is_finite() {
                    rep.push(Condition::VI, Some(i), format!("∫ ξ_{k} dμ_{i} diverges"));
                }
            }
        }
        Ok(rep)
    }

    pub fn validated(self) -> Result<Self> {
        let rep = self.validate()?;
        if let Some(v) = rep.violations.first() {
            return Err(Error::Admissibility(format!(
                "{v} ({} violation(s) in total)",
                rep.violations.len()
            )));
        }
        Ok(self)
    }

    pub fn diffusion_factors(&self) -> Result<DiffusionFactors> {
        DiffusionFactors::new(self.dims, &self.a, &self.alpha)
    }

    /// `b̃_i = b_i + 1_I(i) ∫_{|ξ|≤1} ξ_i dν`.
    pub fn b_tilde(&self) -> Result<DVector<f64>> {
        let mut out = self.b.clone();
        if self.dims.m > 0 {
            out += self
                .nu
                .compensator_moment_on(Band::within(1.0), self.dims.d(), self.dims.i_range())?;
        }
        Ok(out)
    }

    /// `β̃_ki = β_ki − 1_I(i) ∫_{|ξ|>1} ξ_k dμ_i`.
    pub fn beta_tilde(&self) -> Result<DMatrix<f64>> {
        let d = self.dims.d();
        let mut out = self.beta.clone();
        for (i, mu) in self.mu.iter().enumerate() {
            let big = mu.compensator_moment(Band::beyond(1.0), d)?;
            for k in 0..d {
                out[(k, i)] -= big[k];
            }
        }
        Ok(out)
    }

    /// Mean drift `b̄ = b + ∫_{|ξ|>1} ξ dν + 1_I ∫_{|ξ|≤1} ξ_I dν`.
    pub fn b_bar(&self) -> Result<DVector<f64>> {
        let big = self
            .nu
            .compensator_moment(Band::beyond(1.0), self.dims.d())
            .map_err(|e| Error::Precondition(format!("ν lacks a first tail moment: {e}")))?;
        Ok(self.b_tilde()? + big)
    }

    pub fn subcriticality_margin(&self) -> f64 {
        subcriticality_margin(&self.beta)
    }

    pub fn is_cbi(&self) -> bool {
        self.dims.n == 0
    }
}

/// `−max Re λ(β)`; positive exactly when `β` is subcritical.
pub fn subcriticality_margin(beta: &DMatrix<f64>) -> f64 {
    -spectral_abscissa(beta)
}

/// Free-function form of [`AdmissibleParameters::validate`].
pub fn validate(params: &AdmissibleParameters) -> Result<ValidationReport> {
    params.validate()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy::JumpComponent;

    fn dm(rows: &[&[f64]]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j])
    }

    fn stoch_vol_like() -> AdmissibleParameters {
        let dims = StateDims::new(1, 1).unwrap();
        let mut p = AdmissibleParameters::zero(dims);
        p.a = dm(&[&[0.0, 0.0], &[0.0, 1.0]]);
        p.alpha = vec![dm(&[&[1.0, 0.5], &[0.5, 1.0]])];
        p.b = DVector::from_vec(vec![1.0, 0.0]);
        p.beta = dm(&[&[-1.0, 0.0], &[0.0, -1.0]]);
        p
    }

    #[test]
    fn stoch_vol_example_is_admissible() {
        assert!(stoch_vol_like().validate().unwrap().is_admissible());
    }

    #[test]
    fn zero_parameters_admissible() {
        for (m, n) in [(1, 0), (0, 1), (2, 3)] {
            let p = AdmissibleParameters::zero(StateDims::new(m, n).unwrap());
            assert!(p.validate().unwrap().is_admissible());
        }
    }

    #[test]
    fn beta_ij_block_violation() {
        let mut p = stoch_vol_like();
        p.beta = dm(&[&[-1.0, 1.0], &[0.0, -1.0]]);
        let rep = p.validate().unwrap();
        assert!(rep.violates(Condition::IV));
        assert_eq!(rep.violations.len(), 1);
    }

    #[test]
    fn structural_errors_are_distinct() {
        let mut p = stoch_vol_like();
        p.b = DVector::from_vec(vec![1.0]);
        assert!(matches!(p.validate(), Err(Error::Dimension(_))));
        assert!(matches!(StateDims::new(0, 0), Err(Error::Dimension(_))));
    }

    #[test]
    fn margin_examples() {
        assert!((subcriticality_margin(&dm(&[&[-1.0, 0.0], &[0.5, -2.0]])) - 1.0).abs() < 1e-12);
        assert_eq!(subcriticality_margin(&dm(&[&[0.0]])), 0.0);
        assert!((subcriticality_margin(&dm(&[&[-1.0, 4.0], &[-1.0, -1.0]])) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn derived_drifts() {
        let dims = StateDims::new(1, 1).unwrap();
        let mut p = AdmissibleParameters::zero(dims);
        p.b = DVector::from_vec(vec![0.5, 0.0]);
        p.nu = LevyMeasureSpec::atoms(vec![(vec![0.5, 0.0], 2.0), (vec![3.0, -1.0], 1.0)]);
        p.mu = vec![LevyMeasureSpec::stable(0, 1.5, 1.0)];
        let bt = p.b_tilde().unwrap();
        assert!((bt[0] - 1.5).abs() < 1e-14 && bt[1] == 0.0);
        let bb = p.b_bar().unwrap();
        assert!((bb[0] - 4.5).abs() < 1e-14 && (bb[1] + 1.0).abs() < 1e-14);
        let bet = p.beta_tilde().unwrap();
        assert!((bet[(0, 0)] + 2.0).abs() < 1e-14);
    }

    #[test]
    fn roundtrip_through_toml() {
        let mut p = stoch_vol_like();
        p.nu = LevyMeasureSpec::new(vec![JumpComponent::StableTail {
            axis: 0,
            gamma: 0.5,
            scale: 1.0,
        }]);
        let s = toml::to_string(&p).unwrap();
        let q: AdmissibleParameters = toml::from_str(&s).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn toml_defaults_fill_zeros() {
        let q: AdmissibleParameters = toml::from_str("m = 1\nn = 0\nb = [1.0]\nbeta = [[-1.0]]\n").unwrap();
        assert_eq!(q.alpha.len(), 1);
        assert_eq!(q.mu.len(), 1);
        assert!(q.validate().unwrap().is_admissible());
    }
}
