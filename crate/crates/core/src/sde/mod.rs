//! Monte Carlo simulation of the affine jump-diffusion with shared-noise couplings.

mod engine;
mod noise;

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::AdmissibleParameters;
use crate::wasserstein::EmpiricalMeasure;

pub use engine::EXPLOSION_LEVEL;
pub use noise::NoiseBundle;

use engine::Engine;

/// Treatment of jumps with `|ξ| ≤ ε`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmallJumpMode {
    /// Dropped together with their compensator.
    #[default]
    Drop,
    /// Replaced by a diffusion with the same covariance.
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchemeSettings {
    pub step: f64,
    pub truncation: f64,
    pub horizon: f64,
    pub small_jumps: SmallJumpMode,
}

impl Default for SchemeSettings {
    fn default() -> Self {
        Self {
            step: 1.0 / 256.0,
            truncation: crate::levy::DEFAULT_TRUNCATION,
            horizon: 1.0,
            small_jumps: SmallJumpMode::Drop,
        }
    }
}

impl SchemeSettings {
    pub fn new(step: f64, horizon: f64) -> Self {
        Self {
            step,
            horizon,
            ..Default::default()
        }
    }

    pub fn check(&self) -> Result<()> {
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::Precondition(format!("step must be positive, got {}", self.step)));
        }
        if !(self.truncation > 0.0) {
            return Err(Error::Precondition(format!(
                "truncation must be positive, got {}",
                self.truncation
            )));
        }
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return Err(Error::Precondition(format!(
                "horizon must be nonnegative, got {}",
                self.horizon
            )));
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (self.horizon / self.step - 1e-9).ceil().max(0.0) as usize
    }

    fn step_bounds(&self, k: usize) -> (f64, f64) {
        let t0 = k as f64 * self.step;
        let t1 = ((k + 1) as f64 * self.step).min(self.horizon);
        (t0, t1)
    }

    /// Grid index of an observation time.
    fn index_of(&self, t: f64) -> Result<usize> {
        if (t - self.horizon).abs() <= 1e-12 * self.horizon.max(1.0) {
            return Ok(self.n_steps());
        }
        let k = (t / self.step).round();
        if !(t >= 0.0 && t <= self.horizon) || (k * self.step - t).abs() > 1e-9 * t.max(1.0) {
            return Err(Error::Precondition(format!(
                "observation time {t} is not on the grid of step {} up to {}",
                self.step, self.horizon
            )));
        }
        Ok(k as usize)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn terminal(&self) -> &[f64] {
        self.states.last().expect("trajectory holds the initial state")
    }

    /// Columns `t, x_0, …, x_{d-1}`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let d = self.states.first().map_or(0, |s| s.len());
        let mut header = vec!["t".to_string()];
        header.extend((0..d).map(|k| format!("x_{k}")));
        wr.write_record(&header)?;
        for (t, x) in self.times.iter().zip(&self.states) {
            let mut row = vec![t.to_string()];
            row.extend(x.iter().map(|v| v.to_string()));
            wr.write_record(&row)?;
        }
        wr.flush()?;
        Ok(())
    }
}

fn check_start(p: &AdmissibleParameters, x: &[f64]) -> Result<()> {
    if x.len() != p.dims.d() {
        return Err(Error::Dimension(format!(
            "initial state has length {}, expected {}",
            x.len(),
            p.dims.d()
        )));
    }
    if !p.dims.contains(x) {
        return Err(Error::Precondition(format!("initial state {x:?} is not in D")));
    }
    Ok(())
}

/// Runs the states in `xs` on one shared noise bundle, calling `observe` at every grid index.
fn run<F>(
    engine: &Engine,
    settings: &SchemeSettings,
    xs: &mut [Vec<f64>],
    noise: NoiseBundle,
    mut observe: F,
) -> Result<()>
where
    F: FnMut(usize, f64, &[Vec<f64>]),
{
    let mut pn = noise.open(engine.dims.m);
    let mut sc = engine.scratch();
    observe(0, 0.0, xs);
    for k in 0..settings.n_steps() {
        let (t0, t1) = settings.step_bounds(k);
        engine.step(k, t0, t1 - t0, xs, &mut pn, &mut sc)?;
        observe(k + 1, t1, xs);
    }
    Ok(())
}

fn trajectories(
    p: &AdmissibleParameters,
    starts: &[&[f64]],
    settings: &SchemeSettings,
    noise: NoiseBundle,
) -> Result<Vec<Trajectory>> {
    settings.check()?;
    for x in starts {
        check_start(p, x)?;
    }
    let engine = Engine::new(p, settings)?;
    let mut xs: Vec<Vec<f64>> = starts.iter().map(|x| x.to_vec()).collect();
    let mut out: Vec<Trajectory> = starts
        .iter()
        .map(|_| Trajectory {
            times: Vec::new(),
            states: Vec::new(),
        })
        .collect();
    run(&engine, settings, &mut xs, noise, |_, t, states| {
        for (tr, s) in out.iter_mut().zip(states) {
            tr.times.push(t);
            tr.states.push(s.clone());
        }
    })?;
    Ok(out)
}

/// One path on the full grid.
pub fn simulate(
    p: &AdmissibleParameters,
    x: &[f64],
    settings: &SchemeSettings,
    noise: NoiseBundle,
) -> Result<Trajectory> {
    Ok(trajectories(p, &[x], settings, noise)?.remove(0))
}

/// Two solutions driven by the same noise.
pub fn simulate_coupled(
    p: &AdmissibleParameters,
    x: &[f64],
    x_tilde: &[f64],
    settings: &SchemeSettings,
    noise: NoiseBundle,
) -> Result<(Trajectory, Trajectory)> {
    let mut v = trajectories(p, &[x, x_tilde], settings, noise)?;
    let b = v.remove(1);
    let a = v.remove(0);
    Ok((a, b))
}

/// Samples of an ensemble at selected times.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub times: Vec<f64>,
    pub samples: Vec<EmpiricalMeasure>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleSummary {
    pub t: f64,
    pub mean: Vec<f64>,
    pub std_err: Vec<f64>,
    /// Mean of `(1 + |x|²)^{κ/2}`.
    pub v1: f64,
    /// Mean of `log(1 + |x|²)`.
    pub v2: f64,
}

impl Ensemble {
    pub fn summary(&self, kappa: f64) -> Vec<EnsembleSummary> {
        self.times
            .iter()
            .zip(&self.samples)
            .map(|(t, s)| {
                let (mean, std_err) = s.mean_and_std_err();
                let n = s.len() as f64;
                let (mut v1, mut v2) = (0.0, 0.0);
                for x in s.iter() {
                    let r2: f64 = x.iter().map(|v| v * v).sum();
                    v1 += (1.0 + r2).powf(kappa / 2.0);
                    v2 += r2.ln_1p();
                }
                EnsembleSummary {
                    t: *t,
                    mean,
                    std_err,
                    v1: v1 / n,
                    v2: v2 / n,
                }
            })
            .collect()
    }
}

fn observation_plan(settings: &SchemeSettings, times: &[f64]) -> Result<Vec<usize>> {
    times.iter().map(|&t| settings.index_of(t)).collect()
}

/// `count` independent paths (path `p` uses `NoiseBundle::new(seed, p)`), sampled at `times`.
pub fn simulate_ensemble(
    p: &AdmissibleParameters,
    x: &[f64],
    settings: &SchemeSettings,
    count: usize,
    seed: u64,
    times: &[f64],
) -> Result<Ensemble> {
    let (a, _) = ensemble_impl(p, &[x], settings, count, seed, times)?;
    Ok(a)
}

/// Coupled pairs: path `p` of both ensembles shares `NoiseBundle::new(seed, p)`.
pub fn simulate_coupled_ensemble(
    p: &AdmissibleParameters,
    x: &[f64],
    x_tilde: &[f64],
    settings: &SchemeSettings,
    count: usize,
    seed: u64,
    times: &[f64],
) -> Result<(Ensemble, Ensemble)> {
    let (a, b) = ensemble_impl(p, &[x, x_tilde], settings, count, seed, times)?;
    Ok((a, b.expect("two starts give two ensembles")))
}

fn ensemble_impl(
    p: &AdmissibleParameters,
    starts: &[&[f64]],
    settings: &SchemeSettings,
    count: usize,
    seed: u64,
    times: &[f64],
) -> Result<(Ensemble, Option<Ensemble>)> {
    settings.check()?;
    if count == 0 {
        return Err(Error::Precondition("ensemble size must be at least 1".into()));
    }
    for x in starts {
        check_start(p, x)?;
    }
    let plan = observation_plan(settings, times)?;
    let engine = Engine::new(p, settings)?;
    let d = p.dims.d();
    let k = starts.len();
    // per path: [start][time] flattened as (start, time) -> state
    let per_path: Vec<Vec<Vec<f64>>> = (0..count)
        .into_par_iter()
        .map(|path| {
            let mut xs: Vec<Vec<f64>> = starts.iter().map(|x| x.to_vec()).collect();
            let mut rec = vec![Vec::new(); k * plan.len()];
            run(&engine, settings, &mut xs, NoiseBundle::new(seed, path as u64), |idx, _, states| {
                for (j, &want) in plan.iter().enumerate() {
                    if want == idx {
                        for (s, st) in states.iter().enumerate() {
                            rec[s * plan.len() + j] = st.clone();
                        }
                    }
                }
            })?;
            Ok(rec)
        })
        .collect::<Result<_>>()?;
    let split = |s: usize| -> Ensemble {
        let paths: Vec<Vec<Vec<f64>>> = per_path
            .iter()
            .map(|rec| rec[s * plan.len()..(s + 1) * plan.len()].to_vec())
            .collect();
        let n = times.len();
        let samples = (0..n)
            .map(|j| {
                let mut data = Vec::with_capacity(count * d);
                for rec in &paths {
                    data.extend_from_slice(&rec[j]);
                }
                EmpiricalMeasure::from_flat(d, data).expect("consistent sample width")
            })
            .collect();
        Ensemble {
            times: times.to_vec(),
            samples,
        }
    };
    let first = split(0);
    let second = (k > 1).then(|| split(1));
    Ok((first, second))
}

/// Writes `[u64 count][count·d f64]`, all little-endian.
pub fn write_samples<W: Write>(mut w: W, samples: &EmpiricalMeasure) -> Result<()> {
    w.write_all(&(samples.len() as u64).to_le_bytes())?;
    for v in samples.as_flat() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Reads the layout of [`write_samples`]; `d` comes from the model dimensions.
pub fn read_samples<R: Read>(mut r: R, d: usize) -> Result<EmpiricalMeasure> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    if buf.len() < 8 {
        return Err(Error::Config("sample dump shorter than its header".into()));
    }
    let count = u64::from_le_bytes(buf[..8].try_into().expect("8 bytes")) as usize;
    let body = &buf[8..];
    if body.len() != count * d * 8 {
        return Err(Error::Config(format!(
            "sample dump holds {} bytes, expected {} for {count} points of dimension {d}",
            body.len(),
            count * d * 8
        )));
    }
    let data = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    EmpiricalMeasure::from_flat(d, data)
}
