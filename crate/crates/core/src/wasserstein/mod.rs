//! Ground metrics on `D`, exact Wasserstein distances between uniform empirical
//! measures, and small utilities around them.
//!
//! Costs are rounded to integer multiples of a resolution (1e-9 unless the
//! distances are so large that products would overflow) before solving, so the
//! returned plan is optimal for the rounded costs; the reported value is the
//! plan's cost under the unrounded distances, off from the true optimum by at
//! most one resolution unit.

mod assignment;
mod simplex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::StateDims;

pub use assignment::solve_assignment;
pub use simplex::solve_transport;

/// Default integer resolution for transport costs.
pub const COST_RESOLUTION: f64 = 1e-9;
/// Largest `N_P · N_Q` accepted by [`wasserstein`].
pub const MAX_PAIRS: usize = 1_000_000;
/// Largest scaled cost; keeps every partial sum well inside `i64`.
const MAX_SCALED_COST: f64 = 1e14;

/// Equal-weight point cloud in `R^d`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    d: usize,
    data: Vec<f64>,
}

impl EmpiricalMeasure {
    pub fn from_flat(d: usize, data: Vec<f64>) -> Result<Self> {
        if d == 0 || data.len() % d != 0 {
            return Err(Error::Dimension(format!(
                "{} values do not form points of dimension {d}",
                data.len()
            )));
        }
        Ok(Self { d, data })
    }

    pub fn from_points(points: &[Vec<f64>]) -> Result<Self> {
        let d = points.first().map_or(0, |p| p.len());
        if points.iter().any(|p| p.len() != d) {
            return Err(Error::Dimension("points of unequal dimension".into()));
        }
        Self::from_flat(d, points.concat())
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.d
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn iter(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.d)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    /// Points `0, step, 2·step, …` (first `count` of them).
    pub fn subsample(&self, count: usize, offset: usize, step: usize) -> Self {
        let step = step.max(1);
        let mut data = Vec::with_capacity(count * self.d);
        for i in (offset..self.len()).step_by(step).take(count) {
            data.extend_from_slice(self.point(i));
        }
        Self { d: self.d, data }
    }

    /// First `count` points.
    pub fn head(&self, count: usize) -> Self {
        self.subsample(count, 0, 1)
    }

    /// Concatenation; with proportional sizes this realizes a mixture.
    pub fn concat(parts: &[&EmpiricalMeasure]) -> Result<Self> {
        let d = parts.first().map_or(0, |p| p.d);
        if parts.iter().any(|p| p.d != d) {
            return Err(Error::Dimension("mixing measures of different dimension".into()));
        }
        let data = parts.iter().flat_map(|p| p.data.iter().copied()).collect();
        Self::from_flat(d, data)
    }

    /// Index-paired sum `{f_i + g_i}`, a surrogate for the convolution `f ∗ g`.
    pub fn paired_sum(&self, other: &EmpiricalMeasure) -> Result<Self> {
        if self.d != other.d || self.len() != other.len() {
            return Err(Error::Dimension("paired sum needs equal sizes and dimensions".into()));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Ok(Self { d: self.d, data })
    }

    pub fn mean_and_std_err(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.len() as f64;
        let mut mean = vec![0.0; self.d];
        for p in self.iter() {
            for (m, v) in mean.iter_mut().zip(p) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; self.d];
        for p in self.iter() {
            for ((s, v), m) in var.iter_mut().zip(p).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let se = var
            .iter()
            .map(|s| if n > 1.0 { (s / (n - 1.0) / n).sqrt() } else { 0.0 })
            .collect();
        (mean, se)
    }

    pub fn all_in(&self, dims: StateDims) -> bool {
        self.d == dims.d() && self.iter().all(|p| dims.contains(p))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MetricKind {
    Kappa { kappa: f64 },
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundMetric {
    pub kind: MetricKind,
    pub dims: StateDims,
}

impl GroundMetric {
    pub fn kappa(kappa: f64, dims: StateDims) -> Result<Self> {
        if !(kappa > 0.0 && kappa <= 1.0) {
            return Err(Error::Precondition(format!("κ must lie in (0,1], got {kappa}")));
        }
        Ok(Self {
            kind: MetricKind::Kappa { kappa },
            dims,
        })
    }

    pub fn log(dims: StateDims) -> Self {
        Self {
            kind: MetricKind::Log,
            dims,
        }
    }

    /// `1_{n>0}|y − ỹ|^{1/2} + |x − x̃|`, the common base of both metrics.
    fn base(&self, x: &[f64], xt: &[f64]) -> f64 {
        let m = self.dims.m;
        let full: f64 = x.iter().zip(xt).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        if self.dims.n > 0 {
            let y: f64 = x[..m]
                .iter()
                .zip(&xt[..m])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            y.sqrt() + full
        } else {
            full
        }
    }

    pub fn distance(&self, x: &[f64], xt: &[f64]) -> f64 {
        let r = self.base(x, xt);
        match self.kind {
            MetricKind::Kappa { kappa } => {
                if kappa == 1.0 {
                    r
                } else {
                    r.powf(kappa)
                }
            }
            MetricKind::Log => r.ln_1p(),
        }
    }
}

/// Free-function form of [`GroundMetric::distance`].
pub fn ground_distance(metric: &GroundMetric, x: &[f64], xt: &[f64]) -> f64 {
    metric.distance(x, xt)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TransportResult {
    pub value: f64,
    /// Integer scaling of the costs actually used by the solver.
    pub resolution: f64,
}

struct Costs {
    cost: Vec<f64>,
    scaled: Vec<i64>,
    resolution: f64,
}

fn costs(metric: &GroundMetric, p: &EmpiricalMeasure, q: &EmpiricalMeasure) -> Result<Costs> {
    if p.is_empty() || q.is_empty() {
        return Err(Error::Precondition("empirical measures must be nonempty".into()));
    }
    let d = metric.dims.d();
    if p.dim() != d || q.dim() != d {
        return Err(Error::Dimension(format!("measures must live in dimension {d}")));
    }
    let (np, nq) = (p.len(), q.len());
    if np.saturating_mul(nq) > MAX_PAIRS {
        return Err(Error::TooLarge(np, nq));
    }
    let cost: Vec<f64> = (0..np)
        .into_par_iter()
        .flat_map_iter(|i| {
            let x = p.point(i);
            (0..nq).map(move |j| metric.distance(x, q.point(j)))
        })
        .collect();
    let max = cost.iter().copied().fold(0.0, f64::max);
    let resolution = if max / COST_RESOLUTION > MAX_SCALED_COST {
        max / MAX_SCALED_COST
    } else {
        COST_RESOLUTION
    };
    let scaled = cost.iter().map(|c| (c / resolution).round() as i64).collect();
    Ok(Costs { cost, scaled, resolution })
}

/// Exact `W_d(P, Q)` for uniform empirical measures.
pub fn wasserstein(metric: &GroundMetric, p: &EmpiricalMeasure, q: &EmpiricalMeasure) -> Result<TransportResult> {
    // solve in a canonical orientation so that W(P, Q) and W(Q, P) agree bit for bit
    let swap = (q.len(), q.as_flat().len())
        .cmp(&(p.len(), p.as_flat().len()))
        .then_with(|| {
            q.as_flat()
                .iter()
                .zip(p.as_flat())
                .map(|(a, b)| a.total_cmp(b))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
        .is_lt();
    let (p, q) = if swap { (q, p) } else { (p, q) };
    let Costs { cost, scaled, resolution } = costs(metric, p, q)?;
    let (np, nq) = (p.len(), q.len());
    let value = if np == nq {
        let perm = solve_assignment(np, &scaled);
        perm.iter().enumerate().map(|(i, &j)| cost[i * nq + j]).sum::<f64>() / np as f64
    } else {
        let g = gcd(np, nq);
        let supply = (nq / g) as i128;
        let demand = (np / g) as i128;
        let flows = solve_transport(np, nq, &scaled, supply, demand);
        let total = (np as f64) * (nq / g) as f64;
        flows
            .iter()
            .map(|&(i, j, f)| f as f64 * cost[i * nq + j])
            .sum::<f64>()
            / total
    };
    Ok(TransportResult { value, resolution })
}

/// Optimal matching between equal-size measures: point `i` of `p` goes to `perm[i]` of `q`.
pub fn optimal_assignment(
    metric: &GroundMetric,
    p: &EmpiricalMeasure,
    q: &EmpiricalMeasure,
) -> Result<(Vec<usize>, TransportResult)> {
    if p.len() != q.len() {
        return Err(Error::Dimension(format!(
            "assignment needs equal sizes, got {} and {}",
            p.len(),
            q.len()
        )));
    }
    let Costs { cost, scaled, resolution } = costs(metric, p, q)?;
    let n = p.len();
    let perm = solve_assignment(n, &scaled);
    let value = perm.iter().enumerate().map(|(i, &j)| cost[i * n + j]).sum::<f64>() / n as f64;
    Ok((perm, TransportResult { value, resolution }))
}

fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

/// Both sides of `log(1+ab) ≤ log(2e−1)(min{log(1+a), log(1+b)} + log(1+a)·log(1+b))`.
///
/// The bound does not hold for all pairs: with `a` large and `ab` of order one
/// (say `a = 1e8, b = 1e-8`) the left side exceeds the right.
pub fn log_inequality_bound(a: f64, b: f64) -> (f64, f64) {
    let la = a.ln_1p();
    let lb = b.ln_1p();
    let c = (2.0 * std::f64::consts::E - 1.0).ln();
    ((a * b).ln_1p(), c * (la.min(lb) + la * lb))
}
