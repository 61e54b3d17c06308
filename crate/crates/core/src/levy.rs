//! Jump measures on `D = R₊^m × R^n`.
//!
//! A [`LevyMeasureSpec`] is a finite sum of simple components. Power-law
//! (stable-type) tails and point masses carry closed-form moments and
//! transforms; tabulated densities fall back to adaptive quadrature. Moments
//! that diverge are reported as [`Error::Divergent`] instead of being defined
//! away, so e.g. the raw small-jump first moment of a stable tail with
//! `γ ≥ 1` cannot be requested by accident; only its compensated form enters
//! the exponents.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::params::{AdmissibleParameters, StateDims};
use crate::quad::{integrate, QuadOptions};

/// Default truncation level for the compound-Poisson part of the simulator.
pub const DEFAULT_TRUNCATION: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub at: Vec<f64>,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum JumpComponent {
    Zero,
    PointMasses {
        atoms: Vec<Atom>,
    },
    /// `scale · dz / z^{1+gamma}` for `z > 0` along coordinate `axis`.
    StableTail {
        axis: usize,
        gamma: f64,
        scale: f64,
    },
    /// Piecewise-linear density along coordinate `axis`, zero outside the knots.
    TabulatedDensity {
        axis: usize,
        knots: Vec<f64>,
        density: Vec<f64>,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LevyMeasureSpec {
    #[serde(default)]
    pub components: Vec<JumpComponent>,
}

/// Region of jump sizes `{lo < |ξ| ≤ hi}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Band {
    pub lo: f64,
    pub hi: f64,
}

impl Band {
    pub fn within(r: f64) -> Self {
        Self { lo: 0.0, hi: r }
    }
    pub fn beyond(r: f64) -> Self {
        Self {
            lo: r,
            hi: f64::INFINITY,
        }
    }
    pub fn all() -> Self {
        Self {
            lo: 0.0,
            hi: f64::INFINITY,
        }
    }
    fn contains(&self, r: f64) -> bool {
        r > self.lo && r <= self.hi
    }
}

/// Which linear term is subtracted inside a Lévy–Khintchine integrand.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Compensation {
    /// `e^{⟨u,ξ⟩} − 1`
    None,
    /// `e^{⟨u,ξ⟩} − 1 − 1_{|ξ|≤1}⟨ξ_J, u_J⟩` where `J` starts at index `m`.
    SmallJ { m: usize },
    /// `e^{⟨u,ξ⟩} − 1 − ⟨u,ξ⟩`
    Full,
}

fn quad_opts() -> QuadOptions {
    QuadOptions {
        abs_tol: 1e-13,
        rel_tol: 1e-10,
        max_intervals: 4000,
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Γ(−γ) for non-integer γ > 0.
fn gamma_neg(g: f64) -> f64 {
    gamma(1.0 - g) / (-g)
}

/// `∫_lo^hi z^{p-1-γ} dz` with divergence detection at both ends.
fn power_integral(p: f64, g: f64, lo: f64, hi: f64) -> Result<f64> {
    if hi <= lo {
        return Ok(0.0);
    }
    let e = p - g;
    if lo == 0.0 && e <= 0.0 {
        return Err(Error::Divergent(format!(
            "∫_0 z^{{{p}}} z^{{-1-{g}}} dz diverges at 0"
        )));
    }
    if hi.is_infinite() && e >= 0.0 {
        return Err(Error::Divergent(format!(
            "∫^∞ z^{{{p}}} z^{{-1-{g}}} dz diverges at ∞"
        )));
    }
    if e == 0.0 {
        return Ok((hi / lo).ln());
    }
    let top = if hi.is_infinite() { 0.0 } else { hi.powf(e) };
    let bottom = if lo == 0.0 { 0.0 } else { lo.powf(e) };
    Ok((top - bottom) / e)
}

/// Linear pieces of a tabulated density, clipped to `{lo < |z| ≤ hi}`.
fn tabulated_pieces(knots: &[f64], density: &[f64], band: Band) -> Vec<(f64, f64, f64, f64)> {
    let mut out = Vec::new();
    let interp = |x0: f64, x1: f64, p0: f64, p1: f64, x: f64| {
        if x1 == x0 {
            p0
        } else {
            p0 + (p1 - p0) * (x - x0) / (x1 - x0)
        }
    };
    for k in 0..knots.len().saturating_sub(1) {
        let (x0, x1, p0, p1) = (knots[k], knots[k + 1], density[k], density[k + 1]);
        // Split at ±lo and ±hi, keep the parts inside the band.
        let mut cuts = vec![x0, x1];
        for c in [band.lo, -band.lo, band.hi, -band.hi] {
            if c.is_finite() && c > x0 && c < x1 {
                cuts.push(c);
            }
        }
        cuts.sort_by(f64::total_cmp);
        for w in cuts.windows(2) {
            let (a, b) = (w[0], w[1]);
            if b <= a {
                continue;
            }
            let mid = 0.5 * (a + b);
            if band.contains(mid.abs()) {
                out.push((a, b, interp(x0, x1, p0, p1, a), interp(x0, x1, p0, p1, b)));
            }
        }
    }
    out
}

impl JumpComponent {
    fn check(&self, d: usize) -> Result<()> {
        match self {
            JumpComponent::Zero => Ok(()),
            JumpComponent::PointMasses { atoms } => {
                for a in atoms {
                    if a.at.len() != d {
                        return Err(Error::Dimension(format!(
                            "atom has {} coordinates, expected {d}",
                            a.at.len()
                        )));
                    }
                    if !(a.weight > 0.0 && a.weight.is_finite()) {
                        return Err(Error::Dimension(format!(
                            "atom weight must be positive and finite, got {}",
                            a.weight
                        )));
                    }
                }
                Ok(())
            }
            JumpComponent::StableTail { axis, gamma, scale } => {
                if *axis >= d {
                    return Err(Error::Dimension(format!("axis {axis} out of range for d = {d}")));
                }
                if !(*gamma > 0.0 && *gamma < 2.0) || *gamma == 1.0 {
                    return Err(Error::Dimension(format!(
                        "stable exponent must lie in (0,1) ∪ (1,2), got {gamma}"
                    )));
                }
                if !(*scale > 0.0 && scale.is_finite()) {
                    return Err(Error::Dimension(format!("stable scale must be positive, got {scale}")));
                }
                Ok(())
            }
            JumpComponent::TabulatedDensity {
                axis,
                knots,
                density,
            } => {
                if *axis >= d {
                    return Err(Error::Dimension(format!("axis {axis} out of range for d = {d}")));
                }
                if knots.len() < 2 || knots.len() != density.len() {
                    return Err(Error::Dimension(
                        "tabulated density needs at least two knots and one value per knot".into(),
                    ));
                }
                if knots.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::Dimension("knots must be strictly increasing".into()));
                }
                if density.iter().any(|p| !(*p >= 0.0 && p.is_finite())) {
                    return Err(Error::Dimension("density values must be finite and nonnegative".into()));
                }
                Ok(())
            }
        }
    }

    fn tail_mass(&self, eps: f64) -> f64 {
        match self {
            JumpComponent::Zero => 0.0,
            JumpComponent::PointMasses { atoms } => atoms
                .iter()
                .filter(|a| norm(&a.at) > eps)
                .map(|a| a.weight)
                .sum(),
            JumpComponent::StableTail { gamma, scale, .. } => scale * eps.powf(-gamma) / gamma,
            JumpComponent::TabulatedDensity { knots, density, .. } => {
                tabulated_pieces(knots, density, Band::beyond(eps))
                    .iter()
                    .map(|(a, b, pa, pb)| 0.5 * (pa + pb) * (b - a))
                    .sum()
            }
        }
    }

    /// `∫_band |ξ|^p` (p ≥ 0).
    fn abs_power(&self, p: f64, band: Band) -> Result<f64> {
        match self {
            JumpComponent::Zero => Ok(0.0),
            JumpComponent::PointMasses { atoms } => Ok(atoms
                .iter()
                .filter(|a| band.contains(norm(&a.at)))
                .map(|a| a.weight * norm(&a.at).powf(p))
                .sum()),
            JumpComponent::StableTail { gamma, scale, .. } => {
                Ok(scale * power_integral(p, *gamma, band.lo, band.hi)?)
            }
            JumpComponent::TabulatedDensity { knots, density, .. } => Ok(tabulated_integral(
                knots,
                density,
                band,
                |z| z.abs().powf(p),
            )),
        }
    }

    /// `∫_band ξ` as a d-vector.
    fn first_moment(&self, band: Band, d: usize) -> Result<DVector<f64>> {
        let mut out = DVector::zeros(d);
        match self {
            JumpComponent::Zero => {}
            JumpComponent::PointMasses { atoms } => {
                for a in atoms.iter().filter(|a| band.contains(norm(&a.at))) {
                    for (o, x) in out.iter_mut().zip(&a.at) {
                        *o += a.weight * x;
                    }
                }
            }
            JumpComponent::StableTail { axis, gamma, scale } => {
                out[*axis] = scale * power_integral(1.0, *gamma, band.lo, band.hi)?;
            }
            JumpComponent::TabulatedDensity {
                axis,
                knots,
                density,
            } => {
                out[*axis] = tabulated_integral(knots, density, band, |z| z);
            }
        }
        Ok(out)
    }

    fn second_moment(&self, band: Band, d: usize) -> Result<DMatrix<f64>> {
        let mut out = DMatrix::zeros(d, d);
        match self {
            JumpComponent::Zero => {}
            JumpComponent::PointMasses { atoms } => {
                for a in atoms.iter().filter(|a| band.contains(norm(&a.at))) {
                    let v = DVector::from_column_slice(&a.at);
                    out += &v * v.transpose() * a.weight;
                }
            }
            JumpComponent::StableTail { axis, gamma, scale } => {
                out[(*axis, *axis)] = scale * power_integral(2.0, *gamma, band.lo, band.hi)?;
            }
            JumpComponent::TabulatedDensity {
                axis,
                knots,
                density,
            } => {
                out[(*axis, *axis)] = tabulated_integral(knots, density, band, |z| z * z);
            }
        }
        Ok(out)
    }

    fn log_moment(&self) -> f64 {
        match self {
            JumpComponent::Zero => 0.0,
            JumpComponent::PointMasses { atoms } => atoms
                .iter()
                .filter(|a| norm(&a.at) > 1.0)
                .map(|a| a.weight * norm(&a.at).ln())
                .sum(),
            JumpComponent::StableTail { gamma, scale, .. } => scale / (gamma * gamma),
            JumpComponent::TabulatedDensity { knots, density, .. } => {
                tabulated_integral(knots, density, Band::beyond(1.0), |z| z.abs().ln())
            }
        }
    }

    /// Largest `|ξ_axis|` mass along an axis is needed for support checks:
    /// returns whether the component charges `{ξ_k < 0}` for some `k < m`.
    fn leaves_domain(&self, m: usize) -> bool {
        match self {
            JumpComponent::Zero | JumpComponent::StableTail { .. } => false,
            JumpComponent::PointMasses { atoms } => {
                atoms.iter().any(|a| a.at.iter().take(m).any(|&x| x < 0.0))
            }
            JumpComponent::TabulatedDensity {
                axis,
                knots,
                density,
            } => {
                *axis < m
                    && tabulated_pieces(knots, density, Band::all())
                        .iter()
                        .any(|(a, _, pa, pb)| *a < 0.0 && (*pa > 0.0 || *pb > 0.0))
            }
        }
    }

    fn origin_mass(&self) -> f64 {
        match self {
            JumpComponent::PointMasses { atoms } => atoms
                .iter()
                .filter(|a| norm(&a.at) == 0.0)
                .map(|a| a.weight)
                .sum(),
            _ => 0.0,
        }
    }

    fn levy_integral(&self, u: &[Complex64], comp: Compensation) -> Result<Complex64> {
        let one = Complex64::new(1.0, 0.0);
        match self {
            JumpComponent::Zero => Ok(Complex64::new(0.0, 0.0)),
            JumpComponent::PointMasses { atoms } => {
                let mut acc = Complex64::new(0.0, 0.0);
                for a in atoms {
                    let r = norm(&a.at);
                    if r == 0.0 {
                        continue;
                    }
                    let ux: Complex64 = u.iter().zip(&a.at).map(|(ui, x)| ui * x).sum();
                    let lin = match comp {
                        Compensation::None => Complex64::new(0.0, 0.0),
                        Compensation::Full => ux,
                        Compensation::SmallJ { m } => {
                            if r <= 1.0 {
                                u.iter().zip(&a.at).skip(m).map(|(ui, x)| ui * x).sum()
                            } else {
                                Complex64::new(0.0, 0.0)
                            }
                        }
                    };
                    acc += (ux.exp() - one - lin) * a.weight;
                }
                Ok(acc)
            }
            JumpComponent::StableTail { axis, gamma, scale } => {
                let w = u[*axis];
                let g = *gamma;
                if w == Complex64::new(0.0, 0.0) {
                    return Ok(w);
                }
                let base = (-w).powf(g) * gamma_neg(g);
                let compensated = match comp {
                    Compensation::Full => true,
                    Compensation::None => false,
                    Compensation::SmallJ { m } => *axis >= m,
                };
                let val = match (compensated, comp, g > 1.0) {
                    // e^{wz} - 1 - wz over (0,∞): finite iff γ ∈ (1,2)
                    (true, Compensation::Full, true) => base,
                    (true, Compensation::Full, false) => {
                        return Err(Error::Divergent(format!(
                            "fully compensated stable integral needs γ > 1, got {g}"
                        )))
                    }
                    // compensation only on (0,1]
                    (true, _, true) => base + w / (g - 1.0),
                    (true, _, false) => base - w / (1.0 - g),
                    // uncompensated: finite iff γ < 1
                    (false, _, false) => base,
                    (false, _, true) => {
                        return Err(Error::Divergent(format!(
                            "uncompensated stable integral needs γ < 1, got {g}"
                        )))
                    }
                };
                Ok(val * scale)
            }
            JumpComponent::TabulatedDensity {
                axis,
                knots,
                density,
            } => {
                let w = u[*axis];
                let comp_small = match comp {
                    Compensation::None => None,
                    Compensation::Full => Some(f64::INFINITY),
                    Compensation::SmallJ { m } => (*axis >= m).then_some(1.0),
                };
                let integrand = |z: f64| {
                    let mut v = (w * z).exp() - one;
                    if let Some(r) = comp_small {
                        if z.abs() <= r {
                            v -= w * z;
                        }
                    }
                    v
                };
                let mut acc = Complex64::new(0.0, 0.0);
                // split at ±1 so the compensation indicator never falls inside a piece
                for band in [Band::within(1.0), Band::beyond(1.0)] {
                    for (a, b, pa, pb) in tabulated_pieces(knots, density, band) {
                        let dens = |z: f64| pa + (pb - pa) * (z - a) / (b - a);
                        let re = integrate(|z| integrand(z).re * dens(z), a, b, quad_opts());
                        let im = integrate(|z| integrand(z).im * dens(z), a, b, quad_opts());
                        acc += Complex64::new(re.value, im.value);
                    }
                }
                Ok(acc)
            }
        }
    }
}

fn tabulated_integral<F: Fn(f64) -> f64>(knots: &[f64], density: &[f64], band: Band, f: F) -> f64 {
    tabulated_pieces(knots, density, band)
        .into_iter()
        .map(|(a, b, pa, pb)| {
            integrate(
                |z| f(z) * (pa + (pb - pa) * (z - a) / (b - a)),
                a,
                b,
                quad_opts(),
            )
            .value
        })
        .sum()
}

impl LevyMeasureSpec {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn new(components: Vec<JumpComponent>) -> Self {
        Self { components }
    }

    pub fn stable(axis: usize, gamma: f64, scale: f64) -> Self {
        Self::new(vec![JumpComponent::StableTail { axis, gamma, scale }])
    }

    pub fn atoms(atoms: Vec<(Vec<f64>, f64)>) -> Self {
        Self::new(vec![JumpComponent::PointMasses {
            atoms: atoms
                .into_iter()
                .map(|(at, weight)| Atom { at, weight })
                .collect(),
        }])
    }

    pub fn plus(mut self, other: LevyMeasureSpec) -> Self {
        self.components.extend(other.components);
        self
    }

    pub fn is_zero(&self) -> bool {
        self.components.iter().all(|c| match c {
            JumpComponent::Zero => true,
            JumpComponent::PointMasses { atoms } => atoms.is_empty(),
            JumpComponent::TabulatedDensity { density, .. } => density.iter().all(|p| *p == 0.0),
            JumpComponent::StableTail { .. } => false,
        })
    }

    /// Structural check against the state dimension.
    pub fn check(&self, d: usize) -> Result<()> {
        self.components.iter().try_for_each(|c| c.check(d))
    }

    /// Measure of `{|ξ| > eps}`.
    pub fn tail_mass(&self, eps: f64) -> f64 {
        self.components.iter().map(|c| c.tail_mass(eps)).sum()
    }

    /// Raw first moment `∫_band ξ`; divergent requests are errors.
    pub fn compensator_moment(&self, band: Band, d: usize) -> Result<DVector<f64>> {
        let mut out = DVector::zeros(d);
        for c in &self.components {
            out += c.first_moment(band, d)?;
        }
        Ok(out)
    }

    /// Raw first moment restricted to the coordinates in `coords`; components
    /// living on other axes are never evaluated, so their divergences do not matter.
    pub fn compensator_moment_on(
        &self,
        band: Band,
        d: usize,
        coords: std::ops::Range<usize>,
    ) -> Result<DVector<f64>> {
        let mut out = DVector::zeros(d);
        for c in &self.components {
            let skip = match c {
                JumpComponent::StableTail { axis, .. }
                | JumpComponent::TabulatedDensity { axis, .. } => !coords.contains(axis),
                _ => false,
            };
            if !skip {
                out += c.first_moment(band, d)?;
            }
        }
        for k in (0..d).filter(|k| !coords.contains(k)) {
            out[k] = 0.0;
        }
        Ok(out)
    }

    /// `∫_band ξ ξᵀ`.
    pub fn second_moment(&self, band: Band, d: usize) -> Result<DMatrix<f64>> {
        let mut out = DMatrix::zeros(d, d);
        for c in &self.components {
            out += c.second_moment(band, d)?;
        }
        Ok(out)
    }

    /// `∫_band |ξ|^p`, `+∞` when divergent.
    pub fn abs_power_moment(&self, p: f64, band: Band) -> f64 {
        self.components
            .iter()
            .map(|c| c.abs_power(p, band).unwrap_or(f64::INFINITY))
            .sum()
    }

    /// `∫_{|ξ|>1} log|ξ|`.
    pub fn log_moment(&self) -> f64 {
        self.components.iter().map(|c| c.log_moment()).sum()
    }

    /// `∫ ξ_k` over all of `D`, `+∞` when divergent.
    pub fn coordinate_moment(&self, k: usize, d: usize) -> f64 {
        self.components
            .iter()
            .map(|c| match c {
                JumpComponent::StableTail { axis, .. } | JumpComponent::TabulatedDensity { axis, .. } if *axis != k => 0.0,
                _ => match c.first_moment(Band::all(), d) {
                    Ok(v) => v[k],
                    Err(_) => f64::INFINITY,
                },
            })
            .sum()
    }

    /// `∫ min(1, ξ_k)` for a nonnegative coordinate.
    pub fn min_one_coordinate(&self, k: usize, d: usize) -> f64 {
        let mut total = 0.0;
        for c in &self.components {
            let small = match c.first_moment(Band::within(1.0), d) {
                Ok(v) => v[k],
                Err(_) => return f64::INFINITY,
            };
            // big jumps: mass of {|ξ| > 1} restricted to components touching k
            let touches = match c {
                JumpComponent::StableTail { axis, .. }
                | JumpComponent::TabulatedDensity { axis, .. } => *axis == k,
                JumpComponent::PointMasses { .. } => true,
                JumpComponent::Zero => false,
            };
            let big = match c {
                JumpComponent::PointMasses { atoms } => atoms
                    .iter()
                    .filter(|a| norm(&a.at) > 1.0)
                    .map(|a| a.weight * a.at[k].clamp(0.0, 1.0))
                    .sum(),
                _ if touches => c.tail_mass(1.0),
                _ => 0.0,
            };
            // for point masses with |ξ| ≤ 1, ξ_k ≤ 1 so min(1, ξ_k) = ξ_k
            total += small + big;
        }
        total
    }

    pub fn origin_mass(&self) -> f64 {
        self.components.iter().map(|c| c.origin_mass()).sum()
    }

    /// Whether some mass sits outside `D` (negative `I` coordinates).
    pub fn leaves_domain(&self, m: usize) -> bool {
        self.components.iter().any(|c| c.leaves_domain(m))
    }

    /// `∫ (e^{⟨u,ξ⟩} − 1 − compensation) dspec`.
    pub fn levy_integral(&self, u: &[Complex64], comp: Compensation) -> Result<Complex64> {
        let mut acc = Complex64::new(0.0, 0.0);
        for c in &self.components {
            acc += c.levy_integral(u, comp)?;
        }
        Ok(acc)
    }
}

#[derive(Debug, Clone)]
enum ComponentSampler {
    Atoms { atoms: Vec<(Vec<f64>, f64)>, total: f64 },
    Stable { axis: usize, gamma: f64 },
    Pieces { axis: usize, pieces: Vec<(f64, f64, f64, f64, f64)>, total: f64 },
}

/// Sampler for the normalized restriction of a spec to `{|ξ| > eps}`.
#[derive(Debug, Clone)]
pub struct JumpSampler {
    eps: f64,
    d: usize,
    rate: f64,
    components: Vec<(f64, ComponentSampler)>,
}

impl JumpSampler {
    pub fn new(spec: &LevyMeasureSpec, eps: f64, d: usize) -> Result<Self> {
        if !(eps > 0.0) {
            return Err(Error::Precondition(format!("truncation must be positive, got {eps}")));
        }
        spec.check(d)?;
        let mut components = Vec::new();
        let mut cum = 0.0;
        for c in &spec.components {
            let mass = c.tail_mass(eps);
            if mass <= 0.0 {
                continue;
            }
            let sampler = match c {
                JumpComponent::Zero => continue,
                JumpComponent::PointMasses { atoms } => {
                    let mut acc = 0.0;
                    let atoms: Vec<_> = atoms
                        .iter()
                        .filter(|a| norm(&a.at) > eps)
                        .map(|a| {
                            acc += a.weight;
                            (a.at.clone(), acc)
                        })
                        .collect();
                    ComponentSampler::Atoms { atoms, total: acc }
                }
                JumpComponent::StableTail { axis, gamma, .. } => ComponentSampler::Stable {
                    axis: *axis,
                    gamma: *gamma,
                },
                JumpComponent::TabulatedDensity {
                    axis,
                    knots,
                    density,
                } => {
                    let mut acc = 0.0;
                    let pieces = tabulated_pieces(knots, density, Band::beyond(eps))
                        .into_iter()
                        .map(|(a, b, pa, pb)| {
                            acc += 0.5 * (pa + pb) * (b - a);
                            (a, b, pa, pb, acc)
                        })
                        .collect();
                    ComponentSampler::Pieces {
                        axis: *axis,
                        pieces,
                        total: acc,
                    }
                }
            };
            cum += mass;
            components.push((cum, sampler));
        }
        Ok(Self {
            eps,
            d,
            rate: cum,
            components,
        })
    }

    /// Total mass of `{|ξ| > eps}`, i.e. the compound-Poisson intensity.
    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn truncation(&self) -> f64 {
        self.eps
    }

    /// Draws one jump and adds `scale·ξ` into `out`.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        let pick = rng.random::<f64>() * self.rate;
        let idx = self
            .components
            .iter()
            .position(|(c, _)| pick < *c)
            .unwrap_or(self.components.len() - 1);
        match &self.components[idx].1 {
            ComponentSampler::Atoms { atoms, total } => {
                let p = rng.random::<f64>() * total;
                let k = atoms.iter().position(|(_, c)| p < *c).unwrap_or(atoms.len() - 1);
                for (o, x) in out.iter_mut().zip(&atoms[k].0) {
                    *o += x;
                }
            }
            ComponentSampler::Stable { axis, gamma } => {
                // P(Z > z) = (z/eps)^{-γ} on [eps, ∞)
                let u = 1.0 - rng.random::<f64>();
                out[*axis] += self.eps * u.powf(-1.0 / gamma);
            }
            ComponentSampler::Pieces {
                axis,
                pieces,
                total,
            } => {
                let p = rng.random::<f64>() * total;
                let k = pieces
                    .iter()
                    .position(|pc| p < pc.4)
                    .unwrap_or(pieces.len() - 1);
                let (a, b, pa, pb, cum) = pieces[k];
                let len = b - a;
                let mass = 0.5 * (pa + pb) * len;
                let target = (p - (cum - mass)).clamp(0.0, mass);
                // solve pa·s + (pb − pa) s² / (2 len) = target
                let disc = (pa * pa + 2.0 * (pb - pa) * target / len).max(0.0);
                let denom = pa + disc.sqrt();
                let s = if denom > 0.0 { 2.0 * target / denom } else { 0.0 };
                out[*axis] += a + s.clamp(0.0, len);
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut out = vec![0.0; self.d];
        self.sample_into(rng, &mut out);
        out
    }
}

/// One draw from the normalized restriction of `spec` to `{|ξ| > eps}`.
pub fn sample_jump<R: Rng + ?Sized>(
    spec: &LevyMeasureSpec,
    eps: f64,
    d: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let sampler = JumpSampler::new(spec, eps, d)?;
    if sampler.rate() <= 0.0 {
        return Err(Error::Precondition(format!(
            "no mass above truncation level {eps}"
        )));
    }
    Ok(sampler.sample(rng))
}

/// Tolerance used when deciding whether a point lies in `U`.
const DOMAIN_TOL: f64 = 1e-12;

/// Checks `Re u_I ≤ 0` and `Re u_J = 0`.
pub fn check_in_u(dims: StateDims, u: &[Complex64]) -> Result<()> {
    if u.len() != dims.d() {
        return Err(Error::Dimension(format!(
            "u has length {}, expected {}",
            u.len(),
            dims.d()
        )));
    }
    for (k, z) in u.iter().enumerate() {
        let bad = if k < dims.m {
            z.re > DOMAIN_TOL
        } else {
            z.re.abs() > DOMAIN_TOL
        };
        if bad || !z.re.is_finite() || !z.im.is_finite() {
            return Err(Error::Domain(format!("u[{k}] = {z}")));
        }
    }
    Ok(())
}

fn bilinear(s: &DMatrix<f64>, u: &[Complex64]) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for k in 0..u.len() {
        for l in 0..u.len() {
            let c = s[(k, l)];
            if c != 0.0 {
                acc += u[k] * u[l] * c;
            }
        }
    }
    acc
}

/// `F(u)` without the domain check; callers guarantee `u ∈ U`.
pub(crate) fn exponent_f_unchecked(p: &AdmissibleParameters, u: &[Complex64]) -> Result<Complex64> {
    let lin: Complex64 = p.b.iter().zip(u).map(|(b, z)| z * *b).sum();
    Ok(bilinear(&p.a, u) + lin + p.nu.levy_integral(u, Compensation::SmallJ { m: p.dims.m })?)
}

/// `R_i(u)` without the domain check.
pub(crate) fn exponent_r_unchecked(
    p: &AdmissibleParameters,
    i: usize,
    u: &[Complex64],
) -> Result<Complex64> {
    let lin: Complex64 = (0..u.len()).map(|k| u[k] * p.beta[(k, i)]).sum();
    Ok(bilinear(&p.alpha[i], u) + lin + p.mu[i].levy_integral(u, Compensation::Full)?)
}

/// `F(u) = ⟨u,au⟩ + ⟨b,u⟩ + ∫(e^{⟨u,ξ⟩} − 1 − 1_{|ξ|≤1}⟨ξ_J,u_J⟩) ν(dξ)` for `u ∈ U`.
pub fn exponent_f(p: &AdmissibleParameters, u: &[Complex64]) -> Result<Complex64> {
    check_in_u(p.dims, u)?;
    exponent_f_unchecked(p, u)
}

/// `R_i(u) = ⟨u,α_i u⟩ + Σ_k β_ki u_k + ∫(e^{⟨u,ξ⟩} − 1 − ⟨u,ξ⟩) μ_i(dξ)` for `u ∈ U`.
pub fn exponent_r(p: &AdmissibleParameters, i: usize, u: &[Complex64]) -> Result<Complex64> {
    check_in_u(p.dims, u)?;
    if i >= p.dims.m {
        return Err(Error::Dimension(format!("R_{i} requested but m = {}", p.dims.m)));
    }
    exponent_r_unchecked(p, i, u)
}
