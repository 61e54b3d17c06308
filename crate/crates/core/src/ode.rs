//! Dormand–Prince 5(4) integrator with the step controller landing on requested output times.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            abs_tol: 1e-9,
            rel_tol: 1e-8,
            max_steps: 1_000_000,
        }
    }
}

const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
// 5th-order weights equal the last row of A (FSAL); E = b5 − b4.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Integrates `y' = f(t, y)` from `t = times[0]` and returns the state at every entry of `times`.
///
/// `f` may fail (e.g. when the state leaves the domain where it is defined); the
/// error is returned unchanged. Step-size underflow is reported with the time reached.
pub fn integrate<F>(mut f: F, y0: &[f64], times: &[f64], opts: OdeOptions) -> Result<Vec<Vec<f64>>>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    let dim = y0.len();
    let mut out = Vec::with_capacity(times.len());
    if times.is_empty() {
        return Ok(out);
    }
    if times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Precondition("output times must be nondecreasing".into()));
    }
    let mut t = times[0];
    let mut y = y0.to_vec();
    out.push(y.clone());
    if dim == 0 {
        out.resize(times.len(), Vec::new());
        return Ok(out);
    }
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; dim]; 7];
    let mut tmp = vec![0.0; dim];
    f(t, &y, &mut k[0])?;
    let span = times[times.len() - 1] - t;
    let mut h = initial_step(&y, &k[0], span, opts);
    let mut steps = 0usize;

    for &target in &times[1..] {
        while t < target {
            if steps >= opts.max_steps {
                return Err(Error::Riccati {
                    time: t,
                    reason: "step budget exhausted".into(),
                });
            }
            steps += 1;
            let last = t + h >= target;
            let hh = if last { target - t } else { h };
            if hh <= 1e-14 * t.abs().max(1.0) {
                if last {
                    t = target;
                    break;
                }
                return Err(Error::Riccati {
                    time: t,
                    reason: "step size underflow".into(),
                });
            }
            let mut stage_err = None;
            for s in 1..7 {
                for j in 0..dim {
                    let mut acc = y[j];
                    for (r, a) in A[s].iter().enumerate().take(s) {
                        acc += hh * a * k[r][j];
                    }
                    tmp[j] = acc;
                }
                if let Err(e) = f(t + C[s] * hh, &tmp, &mut k[s]) {
                    stage_err = Some(e);
                    break;
                }
            }
            if let Some(e) = stage_err {
                // An out-of-domain stage usually means the step was too long.
                h = hh * 0.25;
                if h <= 1e-14 * t.abs().max(1.0) {
                    return Err(e);
                }
                continue;
            }
            // tmp now holds the 5th-order solution (stage 7 argument).
            let mut err = 0.0f64;
            for j in 0..dim {
                let mut e = 0.0;
                for (r, ec) in E.iter().enumerate() {
                    e += ec * k[r][j];
                }
                let sc = opts.abs_tol + opts.rel_tol * y[j].abs().max(tmp[j].abs());
                err = err.max((hh * e / sc).abs());
            }
            if !err.is_finite() {
                h = hh * 0.1;
                continue;
            }
            if err <= 1.0 {
                t = if last { target } else { t + hh };
                y.copy_from_slice(&tmp);
                k.swap(0, 6);
                let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                if !last {
                    h = hh * fac;
                } else {
                    h = h.max(hh * fac.min(1.0));
                }
            } else {
                h = hh * (0.9 * err.powf(-0.2)).clamp(0.1, 1.0);
            }
        }
        out.push(y.clone());
    }
    Ok(out)
}

fn initial_step(y: &[f64], f0: &[f64], span: f64, opts: OdeOptions) -> f64 {
    let mut d0 = 0.0f64;
    let mut d1 = 0.0f64;
    for (yi, fi) in y.iter().zip(f0) {
        let sc = opts.abs_tol + opts.rel_tol * yi.abs();
        d0 = d0.max((yi / sc).abs());
        d1 = d1.max((fi / sc).abs());
    }
    let h = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h.min(span.abs().max(1e-12))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay() {
        let times: Vec<f64> = (0..=10).map(|k| k as f64).collect();
        let ys = integrate(
            |_, y, dy| {
                dy[0] = -y[0];
                Ok(())
            },
            &[1.0],
            &times,
            OdeOptions::default(),
        )
        .unwrap();
        for (t, y) in times.iter().zip(&ys) {
            assert!((y[0] - (-t).exp()).abs() < 1e-8);
        }
    }

    #[test]
    fn harmonic_oscillator() {
        let times = [0.0, 3.0, 20.0];
        let ys = integrate(
            |_, y, dy| {
                dy[0] = y[1];
                dy[1] = -y[0];
                Ok(())
            },
            &[1.0, 0.0],
            &times,
            OdeOptions {
                abs_tol: 1e-12,
                rel_tol: 1e-12,
                ..Default::default()
            },
        )
        .unwrap();
        for (t, y) in times.iter().zip(&ys) {
            assert!((y[0] - t.cos()).abs() < 1e-9, "{t}: {}", y[0]);
        }
    }

    #[test]
    fn blow_up_is_reported() {
        // y' = y² from y(0) = 1 explodes at t = 1
        let r = integrate(
            |_, y, dy| {
                dy[0] = y[0] * y[0];
                Ok(())
            },
            &[1.0],
            &[0.0, 2.0],
            OdeOptions::default(),
        );
        match r {
            Err(Error::Riccati { time, .. }) => assert!((time - 1.0).abs() < 1e-3, "{time}"),
            other => panic!("{other:?}"),
        }
    }
}
