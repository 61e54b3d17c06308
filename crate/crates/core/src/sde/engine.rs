//! Step kernels shared by `simulate`, `simulate_coupled` and the ensembles.
//!
//! An engine advances a small slice of states that all read the same noise, so a
//! coupled pair is just a slice of length two. Jumps below the truncation level ε
//! are dropped together with their compensator (or replaced by a matching
//! Gaussian term), and the compensator of every simulated band is kept in the
//! drift, so first moments are those of the untruncated equation:
//!
//! ```text
//! b_ε = b + ∫_{|ξ|≤ε} ξ_I dν − ∫_{ε<|ξ|≤1} ξ_J dν
//! B_ε = β − (∫_{|ξ|>ε} ξ dμ_i)_i
//! ```
//!
//! For `n = 0` each coordinate takes an exact square-root step (Poisson–Gamma
//! representation) with cross-immigration frozen at the left endpoint, followed
//! by the jumps; each jump gets a uniform arrival time in the step and relaxes
//! along the diagonal drift for the remainder. Every piece is monotone in the state under the shared noise,
//! which gives pathwise comparison without any clamping. For `n > 0` an
//! explicit Euler step with full truncation is used.

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};
use crate::levy::{Band, JumpSampler};
use crate::params::{AdmissibleParameters, StateDims};

use super::noise::{exponential, gamma, poisson, PathNoise};
use super::{SchemeSettings, SmallJumpMode};

/// States larger than this abort the run.
pub const EXPLOSION_LEVEL: f64 = 1e12;

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let mut v = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            v.push(m[(i, j)]);
        }
    }
    v
}

#[derive(Debug, Clone)]
pub(crate) struct Engine {
    pub dims: StateDims,
    d: usize,
    drift_b: Vec<f64>,
    /// Row-major `B_ε`.
    drift_beta: Vec<f64>,
    /// Row-major `√2 σ_a` (n×n).
    sigma_a: Vec<f64>,
    /// Row-major `σ_i` (d×d), with the nonzero column indices of each.
    sigma: Vec<(Vec<f64>, Vec<usize>)>,
    /// `2 α_{k,kk}` per `k ∈ I` (square-root engine only).
    sqrt_var: Vec<f64>,
    nu: Option<JumpSampler>,
    mu: Vec<Option<JumpSampler>>,
    cbi: bool,
    has_a: bool,
}

/// Per-step scratch reused across steps.
#[derive(Debug, Default)]
pub(crate) struct Scratch {
    db: Vec<f64>,
    dw: Vec<Vec<f64>>,
    levels: Vec<Vec<f64>>,
    nu_jump: Vec<f64>,
    mark: Vec<f64>,
    dx: Vec<f64>,
    order: Vec<usize>,
    counts: Vec<u64>,
    shapes: Vec<f64>,
    draws: Vec<f64>,
}

impl Engine {
    pub fn new(p: &AdmissibleParameters, s: &SchemeSettings) -> Result<Self> {
        let report = p.validate()?;
        if let Some(v) = report.violations.first() {
            return Err(Error::Admissibility(v.to_string()));
        }
        let dims = p.dims;
        let StateDims { m, n } = dims;
        let d = dims.d();
        let eps = s.truncation;

        let mut b = p.b.clone();
        b += p.nu.compensator_moment_on(Band::within(eps), d, dims.i_range())?;
        b -= p
            .nu
            .compensator_moment_on(Band { lo: eps, hi: 1.0 }, d, dims.j_range())?;
        let mut beta = p.beta.clone();
        for (i, mu) in p.mu.iter().enumerate() {
            let big = mu.compensator_moment(Band::beyond(eps), d)?;
            for k in 0..d {
                beta[(k, i)] -= big[k];
            }
        }

        let mut a = p.a.clone();
        let mut alpha = p.alpha.clone();
        if s.small_jumps == SmallJumpMode::Gaussian {
            let q = p.nu.second_moment(Band::within(eps), d)?;
            for k in m..d {
                for l in m..d {
                    a[(k, l)] += 0.5 * q[(k, l)];
                }
            }
            for (i, mu) in p.mu.iter().enumerate() {
                let q = mu.second_moment(Band::within(eps), d)?;
                for k in 0..d {
                    for l in 0..d {
                        let off = (k < m && k != i) || (l < m && l != i);
                        if !off {
                            alpha[i][(k, l)] += 0.5 * q[(k, l)];
                        }
                    }
                }
            }
        }
        let factors = crate::linalg::DiffusionFactors::new(dims, &a, &alpha)?;
        let sigma_a = row_major(&(factors.sigma_a * std::f64::consts::SQRT_2));
        let sigma = factors
            .sigma
            .iter()
            .map(|s| {
                let cols = (0..d).filter(|&j| s.column(j).iter().any(|v| *v != 0.0)).collect();
                (row_major(s), cols)
            })
            .collect();
        let sqrt_var = (0..m).map(|k| 2.0 * alpha[k][(k, k)]).collect();

        let sampler = |spec: &crate::levy::LevyMeasureSpec| -> Result<Option<JumpSampler>> {
            let js = JumpSampler::new(spec, eps, d)?;
            Ok((js.rate() > 0.0).then_some(js))
        };
        let nu = sampler(&p.nu)?;
        let mu = p.mu.iter().map(sampler).collect::<Result<Vec<_>>>()?;
        Ok(Self {
            dims,
            d,
            drift_b: b.iter().copied().collect(),
            drift_beta: row_major(&beta),
            has_a: sigma_a.iter().any(|v| *v != 0.0) && n > 0,
            sigma_a,
            sigma,
            sqrt_var,
            nu,
            mu,
            cbi: n == 0,
        })
    }

    pub fn scratch(&self) -> Scratch {
        Scratch {
            db: vec![0.0; self.dims.n],
            dw: vec![vec![0.0; self.d]; self.dims.m],
            nu_jump: vec![0.0; self.d],
            mark: vec![0.0; self.d],
            dx: vec![0.0; self.d],
            ..Default::default()
        }
    }

    /// Advances every state in `xs` by one step of length `h` (step index `k`).
    pub fn step(
        &self,
        k: usize,
        t: f64,
        h: f64,
        xs: &mut [Vec<f64>],
        noise: &mut PathNoise,
        sc: &mut Scratch,
    ) -> Result<()> {
        let m = self.dims.m;
        sc.levels.resize(xs.len(), Vec::new());
        for (lv, x) in sc.levels.iter_mut().zip(xs.iter()) {
            lv.clear();
            lv.extend(x[..m].iter().map(|v| v.max(0.0)));
        }
        if self.cbi {
            self.sqrt_steps(k, h, xs, noise, sc);
        } else {
            self.euler_continuous(h, xs, noise, sc);
        }
        self.immigration_jumps(h, xs, noise, sc);
        self.branching_jumps(k, h, xs, noise, sc);
        for x in xs.iter_mut() {
            if !self.cbi {
                for v in x[..m].iter_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            if x.iter().any(|v| !(v.abs() <= EXPLOSION_LEVEL)) {
                return Err(Error::Explosion { time: t + h });
            }
        }
        Ok(())
    }

    fn euler_continuous(&self, h: f64, xs: &mut [Vec<f64>], noise: &mut PathNoise, sc: &mut Scratch) {
        let StateDims { m, n } = self.dims;
        let d = self.d;
        let sh = h.sqrt();
        if n > 0 {
            noise.normals_b(&mut sc.db);
        }
        for i in 0..m {
            noise.normals_w(i, &mut sc.dw[i]);
        }
        for (x, lv) in xs.iter_mut().zip(&sc.levels) {
            for r in 0..d {
                let row = &self.drift_beta[r * d..(r + 1) * d];
                let drift = self.drift_b[r] + row.iter().zip(x.iter()).map(|(a, b)| a * b).sum::<f64>();
                sc.dx[r] = drift * h;
            }
            if self.has_a {
                for r in 0..n {
                    let row = &self.sigma_a[r * n..(r + 1) * n];
                    sc.dx[m + r] += sh * row.iter().zip(&sc.db).map(|(a, b)| a * b).sum::<f64>();
                }
            }
            for i in 0..m {
                let c = (2.0 * lv[i]).sqrt() * sh;
                if c == 0.0 {
                    continue;
                }
                let (sig, cols) = &self.sigma[i];
                for r in 0..d {
                    let mut acc = 0.0;
                    for &j in cols {
                        acc += sig[r * d + j] * sc.dw[i][j];
                    }
                    sc.dx[r] += c * acc;
                }
            }
            for (xv, dv) in x.iter_mut().zip(&sc.dx) {
                *xv += dv;
            }
        }
    }

    /// Exact square-root steps; `noise` is read in an order that does not depend on
    /// how many states are advanced, as long as the lowest state is the same.
    fn sqrt_steps(&self, k: usize, h: f64, xs: &mut [Vec<f64>], noise: &mut PathNoise, sc: &mut Scratch) {
        let m = self.dims.m;
        let d = self.d;
        let ns = xs.len();
        for c in 0..m {
            let kap = self.drift_beta[c * d + c];
            let var = self.sqrt_var[c];
            let e = (kap * h).exp();
            let growth = if kap.abs() > 1e-12 { (e - 1.0) / kap } else { h };
            // frozen immigration including cross terms
            sc.draws.clear();
            for lv in &sc.levels {
                let mut c0 = self.drift_b[c];
                for i in (0..m).filter(|&i| i != c) {
                    c0 += self.drift_beta[c * d + i] * lv[i];
                }
                sc.draws.push(c0.max(0.0));
            }
            if var == 0.0 {
                for (x, c0) in xs.iter_mut().zip(&sc.draws) {
                    x[c] = x[c].max(0.0) * e + c0 * growth;
                }
                continue;
            }
            let cbar = var * growth / 4.0;
            let lam = |y: f64| y * e / (2.0 * cbar);

            // Poisson counts, chained in increasing intensity.
            sc.order.clear();
            sc.order.extend(0..ns);
            sc.order
                .sort_by(|&a, &b| sc.levels[a][c].total_cmp(&sc.levels[b][c]));
            sc.counts.clear();
            sc.counts.resize(ns, 0);
            sc.shapes.clear();
            sc.shapes.resize(ns, 0.0);
            let first = sc.order[0];
            if ns == 1 {
                let main = noise.sqrt_main(c, k);
                let n0 = poisson(main, lam(sc.levels[0][c]));
                let g = gamma(main, 2.0 * sc.draws[0] / var + n0 as f64);
                xs[0][c] = 2.0 * cbar * g;
                continue;
            }
            let (main, extra) = noise.sqrt_pair(c, k);
            sc.counts[first] = poisson(main, lam(sc.levels[first][c]));
            for w in 1..ns {
                let (lo, hi) = (sc.order[w - 1], sc.order[w]);
                let diff = lam(sc.levels[hi][c]) - lam(sc.levels[lo][c]);
                sc.counts[hi] = sc.counts[lo] + poisson(extra, diff);
            }
            for s in 0..ns {
                sc.shapes[s] = 2.0 * sc.draws[s] / var + sc.counts[s] as f64;
            }
            sc.order
                .sort_by(|&a, &b| sc.shapes[a].total_cmp(&sc.shapes[b]));
            let lowest = sc.order[0];
            let mut g = gamma(main, sc.shapes[lowest]);
            xs[lowest][c] = 2.0 * cbar * g;
            for w in 1..ns {
                let (lo, hi) = (sc.order[w - 1], sc.order[w]);
                g += gamma(extra, sc.shapes[hi] - sc.shapes[lo]);
                xs[hi][c] = 2.0 * cbar * g;
            }
        }
    }

    fn immigration_jumps(&self, h: f64, xs: &mut [Vec<f64>], noise: &mut PathNoise, sc: &mut Scratch) {
        let Some(nu) = &self.nu else { return };
        let rng = noise.immigration();
        let count = poisson(rng, h * nu.rate());
        if count == 0 {
            return;
        }
        sc.nu_jump.iter_mut().for_each(|v| *v = 0.0);
        for _ in 0..count {
            sc.mark.iter_mut().for_each(|v| *v = 0.0);
            nu.sample_into(rng, &mut sc.mark);
            if self.cbi {
                self.decay_mark(rng.random::<f64>(), h, &mut sc.mark);
            }
            for (a, j) in sc.nu_jump.iter_mut().zip(&sc.mark) {
                *a += j;
            }
        }
        for x in xs.iter_mut() {
            for (xv, j) in x.iter_mut().zip(&sc.nu_jump) {
                *xv += j;
            }
        }
    }

    /// A jump arriving at `t + s·h` relaxes along the linear drift for the rest
    /// of the step, matching the decayed compensator of the square-root step.
    fn decay_mark(&self, s: f64, h: f64, mark: &mut [f64]) {
        let d = self.d;
        for (k, v) in mark.iter_mut().enumerate() {
            if *v != 0.0 {
                *v *= (self.drift_beta[k * d + k] * h * (1.0 - s)).exp();
            }
        }
    }

    /// Marks `(r, ξ)` of `N_i` on `[t, t+h] × (0, max level]`, kept where `r ≤ level`.
    fn branching_jumps(&self, k: usize, h: f64, xs: &mut [Vec<f64>], noise: &mut PathNoise, sc: &mut Scratch) {
        for (i, mu) in self.mu.iter().enumerate() {
            let Some(mu) = mu else { continue };
            let top = sc.levels.iter().map(|l| l[i]).fold(0.0, f64::max);
            if top <= 0.0 {
                continue;
            }
            let rate = h * mu.rate();
            let rng = noise.thinning(i, k);
            let mut r = 0.0;
            loop {
                r += exponential(rng) / rate;
                if r > top {
                    break;
                }
                sc.mark.iter_mut().for_each(|v| *v = 0.0);
                mu.sample_into(rng, &mut sc.mark);
                if self.cbi {
                    self.decay_mark(rng.random::<f64>(), h, &mut sc.mark);
                }
                for (x, lv) in xs.iter_mut().zip(&sc.levels) {
                    if r <= lv[i] {
                        for (xv, j) in x.iter_mut().zip(&sc.mark) {
                            *xv += j;
                        }
                    }
                }
            }
        }
    }
}
