#![allow(dead_code)]

use affine_lab::levy::LevyMeasureSpec;
use affine_lab::params::{AdmissibleParameters, StateDims};
use affine_lab::wasserstein::EmpiricalMeasure;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

pub fn random_dims<R: Rng>(rng: &mut R) -> StateDims {
    loop {
        let m = rng.random_range(0..=3);
        let n = rng.random_range(0..=3);
        if m + n > 0 {
            return StateDims::new(m, n).unwrap();
        }
    }
}

/// Sum of `rank` outer products of random vectors supported on `support`.
fn random_psd<R: Rng>(rng: &mut R, d: usize, support: &[usize]) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(d, d);
    let rank = rng.random_range(0..=support.len());
    for _ in 0..rank {
        let mut v = DVector::zeros(d);
        for &k in support {
            v[k] = rng.random_range(-1.5..1.5);
        }
        out += &v * v.transpose();
    }
    // zero out a diagonal entry with its row/column now and then
    if !support.is_empty() && rng.random_bool(0.2) {
        let k = support[rng.random_range(0..support.len())];
        for l in 0..d {
            out[(k, l)] = 0.0;
            out[(l, k)] = 0.0;
        }
    }
    out
}

/// Random `(a, α)` obeying the diffusion constraints.
pub fn random_diffusion<R: Rng>(rng: &mut R, dims: StateDims) -> (DMatrix<f64>, Vec<DMatrix<f64>>) {
    let d = dims.d();
    let j: Vec<usize> = dims.j_range().collect();
    let a = random_psd(rng, d, &j);
    let alpha = dims
        .i_range()
        .map(|i| {
            let mut s = vec![i];
            s.extend(&j);
            random_psd(rng, d, &s)
        })
        .collect();
    (a, alpha)
}

/// A random point of `D` away from the boundary.
pub fn random_state<R: Rng>(rng: &mut R, dims: StateDims) -> Vec<f64> {
    (0..dims.d())
        .map(|k| if k < dims.m { rng.random_range(0.0..3.0) } else { rng.random_range(-2.0..2.0) })
        .collect()
}

fn random_jump<R: Rng>(rng: &mut R, dims: StateDims, axis: Option<usize>) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dims.d())
            .map(|k| {
                if k < dims.m {
                    match axis {
                        Some(i) if i == k => rng.random_range(0.05..2.0),
                        Some(_) => 0.0,
                        None => rng.random_range(0.0..1.5),
                    }
                } else {
                    rng.random_range(-1.0..1.0)
                }
            })
            .collect();
        if v.iter().any(|x| *x != 0.0) {
            return v;
        }
    }
}

/// Random admissible, subcritical parameters with point-mass jump measures.
pub fn random_model<R: Rng>(rng: &mut R) -> AdmissibleParameters {
    let dims = random_dims(rng);
    let (m, d) = (dims.m, dims.d());
    let mut p = AdmissibleParameters::zero(dims);
    let (a, alpha) = random_diffusion(rng, dims);
    p.a = a * 0.5;
    p.alpha = alpha.into_iter().map(|x| x * 0.5).collect();
    for k in 0..d {
        p.b[k] = if k < m { rng.random_range(0.0..1.0) } else { rng.random_range(-1.0..1.0) };
    }
    for r in 0..d {
        for c in 0..d {
            p.beta[(r, c)] = if r == c {
                rng.random_range(-2.0..-1.0)
            } else if r < m && c >= m {
                0.0
            } else if r < m {
                rng.random_range(0.0..0.3)
            } else {
                rng.random_range(-0.3..0.3)
            };
        }
    }
    if rng.random_bool(0.6) {
        let k = rng.random_range(1..=2);
        p.nu = LevyMeasureSpec::atoms((0..k).map(|_| (random_jump(rng, dims, None), rng.random_range(0.1..0.8))).collect());
    }
    for i in 0..m {
        if rng.random_bool(0.5) {
            p.mu[i] = LevyMeasureSpec::atoms(vec![(random_jump(rng, dims, Some(i)), rng.random_range(0.1..0.5))]);
        }
    }
    p.validated().expect("generator produces admissible parameters")
}

pub fn random_measure<R: Rng>(rng: &mut R, dims: StateDims, count: usize, spread: f64) -> EmpiricalMeasure {
    let d = dims.d();
    let data = (0..count * d)
        .map(|k| {
            let c = k % d;
            if c < dims.m {
                rng.random_range(0.0..spread)
            } else {
                rng.random_range(-spread..spread)
            }
        })
        .collect();
    EmpiricalMeasure::from_flat(d, data).unwrap()
}
